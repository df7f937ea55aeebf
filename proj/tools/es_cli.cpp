// Command-line front end: datagen | pretrain | expand | evaluate | ablate.
// All knobs come from a TOML-style config file (--config); every random
// choice flows from the three explicit seeds, so reruns are byte-identical.

#include "CLI11.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "config_file.hpp"
#include "es/data_io.hpp"
#include "es/datagen.hpp"
#include "es/graph.hpp"
#include "es/pipeline.hpp"
#include "es/rng.hpp"

namespace fs = std::filesystem;
using namespace es;

namespace {

struct CliConfig {
    ExpansionConfig run;
    // corpus wiring
    int corpus_count = 8000;
    std::uint64_t corpus_seed = 424242;
    int test_count = 2000;
    std::string train_images, train_labels;
    std::string test_images, test_labels;
    std::vector<std::string> cifar_batches, cifar_test_batches;
    std::string out_dir = "out";
    std::string checkpoint;
};

void wire_options(CLI::App& app, CliConfig& c) {
    app.add_option("--data.dataset", c.run.dataset, "digits | mnist | cifar10");
    app.add_option("--data.per_class", c.run.per_class);
    app.add_option("--data.er", c.run.er);
    app.add_option("--data.classes", c.run.class_count);
    app.add_option("--data.corpus_count", c.corpus_count);
    app.add_option("--data.corpus_seed", c.corpus_seed);
    app.add_option("--data.test_count", c.test_count);
    app.add_option("--data.pretrain_items", c.run.pretrain_items);

    app.add_option("--train.epochs", c.run.epochs);
    app.add_option("--train.lr", c.run.lr);
    app.add_option("--train.finetune_epochs", c.run.finetune_epochs);
    app.add_option("--train.finetune_lr", c.run.finetune_lr);
    app.add_option("--train.pretrain_epochs", c.run.pretrain_epochs);
    app.add_option("--train.pretrain_lr", c.run.pretrain_lr);
    app.add_option("--train.pretrain_batch", c.run.pretrain_batch);
    app.add_option("--train.skips", c.run.skips);
    app.add_option("--train.alpha",
                   [&c](const std::vector<std::string>& vals) {
                       if (vals.size() != 4) return false;
                       for (int i = 0; i < 4; ++i) c.run.alpha[static_cast<std::size_t>(i)] = std::stof(vals[static_cast<std::size_t>(i)]);
                       return true;
                   },
                   "four loss weights")
        ->expected(4);

    app.add_option("--attention.heads", c.run.heads);
    app.add_option("--attention.head_dim", c.run.head_dim);
    app.add_option("--attention.patch", c.run.patch);
    app.add_option("--attention.crop_q", c.run.crop_q);

    app.add_option("--graph.degree", c.run.graph_degree);
    app.add_option("--graph.iters", c.run.graph_iters);

    app.add_option("--ot.epsilon", c.run.ot_epsilon);
    app.add_option("--ot.iters", c.run.ot_iters);

    app.add_option("--classifier.epochs", c.run.classifier_epochs);
    app.add_option("--classifier.lr", c.run.classifier_lr);
    app.add_option("--classifier.batch", c.run.classifier_batch);

    // Seeds are explicit: the config must set all three (no wall-clock
    // fallbacks anywhere).
    app.add_option("--seeds.data", c.run.seed_data)->required();
    app.add_option("--seeds.model", c.run.seed_model)->required();
    app.add_option("--seeds.expansion", c.run.seed_expansion)->required();

    app.add_option("--paths.train_images", c.train_images);
    app.add_option("--paths.train_labels", c.train_labels);
    app.add_option("--paths.test_images", c.test_images);
    app.add_option("--paths.test_labels", c.test_labels);
    app.add_option("--paths.cifar_batches", c.cifar_batches);
    app.add_option("--paths.cifar_test_batches", c.cifar_test_batches);
    app.add_option("--paths.checkpoint", c.checkpoint);
    app.add_option("--paths.out_dir", c.out_dir);

    // Later occurrences of a key override earlier ones.
    for (CLI::Option* opt : app.get_options())
        if (opt->get_expected_max() == 1) opt->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
}

LabeledDataset load_train_corpus(const CliConfig& c) {
    if (c.run.dataset == "cifar10") {
        if (c.cifar_batches.empty()) throw ConfigError("paths.cifar_batches is required for dataset=cifar10");
        return load_cifar_corpus(c.cifar_batches);
    }
    if (!c.train_images.empty() || !c.train_labels.empty()) {
        if (c.train_images.empty() || c.train_labels.empty())
            throw ConfigError("paths.train_images and paths.train_labels must be given together");
        return load_idx_corpus(c.train_images, c.train_labels);
    }
    if (c.run.dataset == "mnist")
        throw ConfigError("paths.train_images/paths.train_labels are required for dataset=mnist");
    return make_digit_corpus(c.corpus_count, c.corpus_seed);
}

LabeledDataset load_test_corpus(const CliConfig& c) {
    if (c.run.dataset == "cifar10") {
        if (c.cifar_test_batches.empty()) throw ConfigError("paths.cifar_test_batches is required for dataset=cifar10");
        return load_cifar_corpus(c.cifar_test_batches).with_role(LabeledDataset::Role::test);
    }
    if (!c.test_images.empty() || !c.test_labels.empty()) {
        if (c.test_images.empty() || c.test_labels.empty())
            throw ConfigError("paths.test_images and paths.test_labels must be given together");
        return load_idx_corpus(c.test_images, c.test_labels).with_role(LabeledDataset::Role::test);
    }
    if (c.run.dataset == "mnist")
        throw ConfigError("paths.test_images/paths.test_labels are required for dataset=mnist");
    return make_digit_corpus(c.test_count, c.corpus_seed ^ 0x7e57ull, LabeledDataset::Role::test);
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw FormatError("cannot open for writing: " + path.string());
    f << text;
}

std::string epoch_csv(const std::vector<Autoencoder::EpochStats>& stats) {
    std::ostringstream os;
    os << "epoch,recon_nll,kl,total\n";
    char buf[128];
    for (const auto& s : stats) {
        std::snprintf(buf, sizeof buf, "%d,%.8g,%.8g,%.8g\n", s.epoch, s.nll, s.kl, s.total);
        os << buf;
    }
    return os.str();
}

Autoencoder pretrained_from(const CliConfig& c, const LabeledDataset& corpus) {
    if (!c.checkpoint.empty()) {
        try {
            return Autoencoder(c.run.ae_config(), ParamStore::load(c.checkpoint));
        } catch (const Error& e) {
            throw FormatError(std::string("checkpoint does not match the configured model: ") + e.what());
        }
    }
    CorpusSplit split = split_corpus(corpus, c.run);
    Autoencoder ae = Autoencoder::init(c.run.ae_config(), c.run.seed_model);
    ae.pretrain(split.pretrain, c.run.pretrain_epochs, c.run.pretrain_lr, c.run.pretrain_batch,
                Rng(c.run.seed_model).fork(1).next_u64());
    return ae;
}

int cmd_datagen(const CliConfig& c) {
    fs::create_directories(c.out_dir);
    LabeledDataset train = make_digit_corpus(c.corpus_count, c.corpus_seed);
    LabeledDataset test = make_digit_corpus(c.test_count, c.corpus_seed ^ 0x7e57ull, LabeledDataset::Role::test);
    const fs::path dir(c.out_dir);
    save_idx_corpus(train, (dir / "train-images-idx3-ubyte").string(), (dir / "train-labels-idx1-ubyte").string());
    save_idx_corpus(test, (dir / "test-images-idx3-ubyte").string(), (dir / "test-labels-idx1-ubyte").string());
    std::cout << "wrote " << train.count() << " train / " << test.count() << " test items under " << c.out_dir << "\n";
    return 0;
}

int cmd_pretrain(const CliConfig& c) {
    LabeledDataset corpus = load_train_corpus(c);
    CorpusSplit split = split_corpus(corpus, c.run);
    fs::create_directories(c.out_dir);
    Autoencoder ae = Autoencoder::init(c.run.ae_config(), c.run.seed_model);
    auto stats = ae.pretrain(split.pretrain, c.run.pretrain_epochs, c.run.pretrain_lr, c.run.pretrain_batch,
                             Rng(c.run.seed_model).fork(1).next_u64());
    const fs::path ckpt = fs::path(c.out_dir) / "ae.espk";
    ae.params().save(ckpt.string());
    write_text(fs::path(c.out_dir) / "pretrain_log.csv", epoch_csv(stats));
    for (const auto& s : stats)
        std::printf("epoch %d recon_nll %.6f kl %.6f total %.6f\n", s.epoch, s.nll, s.kl, s.total);
    std::cout << "checkpoint: " << ckpt.string() << "\n";
    return 0;
}

int cmd_expand(const CliConfig& c) {
    if (c.checkpoint.empty()) throw ConfigError("paths.checkpoint is required for expand");
    LabeledDataset corpus = load_train_corpus(c);
    CorpusSplit split = split_corpus(corpus, c.run);
    LabeledDataset x = sample_per_class(split.fewshot_pool, {c.run.per_class, c.run.seed_data, {}}).selected;

    Autoencoder ae = [&] {
        try {
            return Autoencoder(c.run.ae_config(), ParamStore::load(c.checkpoint));
        } catch (const FormatError&) {
            throw;
        } catch (const Error& e) {
            throw FormatError(std::string("checkpoint does not match the configured model: ") + e.what());
        }
    }();
    ae.ensure_skip_params();
    ae.finetune_scale_shift(x, c.run.finetune_epochs, c.run.finetune_lr, Rng(c.run.seed_model).fork(55).next_u64());
    ExpansionResult res = run_expansion(c.run, x, ae);

    fs::create_directories(c.out_dir);
    const fs::path out = fs::path(c.out_dir) / "expanded.exps";
    save_expanded(res.xprime, out.string());
    RunReport series;
    series.loss_series = res.loss_series;
    write_text(fs::path(c.out_dir) / "expansion_loss.csv", series.loss_csv());
    const fs::path gdir = fs::path(c.out_dir) / "graphs";
    fs::create_directories(gdir);
    for (const auto& g : res.graphs) {
        if (g.graph.n == 0) continue;
        save_edge_list(g.graph, (gdir / ("class" + std::to_string(g.class_id) + ".edges")).string());
        save_code_graph_meta(g, (gdir / ("class" + std::to_string(g.class_id) + ".json")).string());
    }
    std::cout << "expanded " << x.count() << " -> " << res.xprime.count() << " items: " << out.string() << "\n";
    return 0;
}

int cmd_evaluate(const CliConfig& c, const std::vector<std::string>& arm_files) {
    if (arm_files.empty()) throw ConfigError("evaluate needs at least one dataset file");
    LabeledDataset test = load_test_corpus(c);
    RunReport report;
    report.kind = "evaluation";
    report.config_echo = c.run.echo();
    report.test_checksum = test.checksum();
    report.classifier_hash = c.run.classifier_config().arch_hash() ^ test.checksum() ^
                             (static_cast<std::uint64_t>(c.run.classifier_epochs) * 0x9e3779b97f4a7c15ull);
    int class_count = -1;
    for (const auto& file : arm_files) {
        LabeledDataset arm = load_expanded(file);
        if (class_count < 0) class_count = arm.class_count;
        if (arm.class_count != class_count)
            throw ConsistencyError("arm class counts differ: " + std::to_string(arm.class_count) + " vs " +
                                   std::to_string(class_count) + " in " + file);
        report.arms.push_back({fs::path(file).stem().string(), arm.count(), train_and_evaluate_arm(c.run, arm, test)});
    }
    fs::create_directories(c.out_dir);
    write_text(fs::path(c.out_dir) / "evaluation.txt", report.to_text());
    write_text(fs::path(c.out_dir) / "evaluation.csv", report.arms_csv());
    std::cout << report.to_text();
    return 0;
}

int cmd_ablate(const CliConfig& c, int rungs) {
    LabeledDataset corpus = load_train_corpus(c);
    LabeledDataset test = load_test_corpus(c);
    CorpusSplit split = split_corpus(corpus, c.run);
    Autoencoder ae = pretrained_from(c, corpus);
    RunReport report = run_ablation(c.run, split.fewshot_pool, test, ae, rungs);
    fs::create_directories(c.out_dir);
    write_text(fs::path(c.out_dir) / "ablation.txt", report.to_text());
    write_text(fs::path(c.out_dir) / "ablation.csv", report.arms_csv());
    std::cout << report.to_text();
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"expansive synthesis pipeline"};
    app.require_subcommand(1);

    CliConfig cfg;
    std::vector<std::string> arm_files;
    int rungs = 6;
    std::string seed_override;
    std::string out_override;

    CLI::App* datagen = app.add_subcommand("datagen", "write a generated IDX corpus");
    CLI::App* pretrain = app.add_subcommand("pretrain", "pretrain the autoencoder on the corpus remainder");
    CLI::App* expand = app.add_subcommand("expand", "expand the few-shot sample into a synthesized dataset");
    CLI::App* evaluate = app.add_subcommand("evaluate", "train one classifier per dataset arm and compare");
    CLI::App* ablate = app.add_subcommand("ablate", "run the cumulative configuration ladder");
    for (CLI::App* sub : {datagen, pretrain, expand, evaluate, ablate}) {
        wire_options(*sub, cfg);
        sub->add_option("--config", "config file (TOML); required")->required()->expected(1);
        sub->add_option("--seeds", seed_override, "override seeds as data,model,expansion");
        sub->add_option("--out", out_override, "override the output directory");
    }
    evaluate->add_option("files", arm_files, "expanded-dataset files (one arm each)");
    ablate->add_option("--rungs", rungs, "run only the first N rungs");

    // Expand --config into its key/value arguments ahead of the explicit
    // flags so the file parses through the exact same option set.
    std::vector<std::string> args;
    try {
        std::string config_path;
        std::vector<std::string> raw(argv + 1, argv + argc);
        for (std::size_t i = 0; i < raw.size(); ++i) {
            if (raw[i] == "--config") {
                if (i + 1 >= raw.size()) throw ConfigError("--config needs a path");
                config_path = raw[i + 1];
            } else if (raw[i].rfind("--config=", 0) == 0) {
                config_path = raw[i].substr(9);
            }
        }
        if (!raw.empty() && !config_path.empty()) {
            std::vector<std::string> from_file = escli::read_config_args(config_path);
            args.push_back(raw[0]); // subcommand name first
            args.insert(args.end(), from_file.begin(), from_file.end());
            args.insert(args.end(), raw.begin() + 1, raw.end());
        } else {
            args = raw;
        }
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    }

    try {
        std::vector<const char*> cargs;
        cargs.push_back(argv[0]);
        for (const auto& a : args) cargs.push_back(a.c_str());
        app.parse(static_cast<int>(cargs.size()), cargs.data());
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e); // --help
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    }

    try {
        if (!seed_override.empty()) {
            unsigned long long a = 0, b = 0, d = 0;
            if (std::sscanf(seed_override.c_str(), "%llu,%llu,%llu", &a, &b, &d) != 3)
                throw ConfigError("--seeds expects data,model,expansion");
            cfg.run.seed_data = a;
            cfg.run.seed_model = b;
            cfg.run.seed_expansion = d;
        }
        if (!out_override.empty()) cfg.out_dir = out_override;
        cfg.run.validate();
        if (datagen->parsed()) return cmd_datagen(cfg);
        if (pretrain->parsed()) return cmd_pretrain(cfg);
        if (expand->parsed()) return cmd_expand(cfg);
        if (evaluate->parsed()) return cmd_evaluate(cfg, arm_files);
        if (ablate->parsed()) return cmd_ablate(cfg, rungs);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const CapacityError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const ParamError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const TrainingError& e) {
        std::cerr << "training error: " << e.what() << "\n";
        return 3;
    } catch (const NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return 3;
    } catch (const ConsistencyError& e) {
        std::cerr << "arm mismatch: " << e.what() << "\n";
        return 5;
    } catch (const FormatError& e) {
        std::cerr << "artifact error: " << e.what() << "\n";
        return 4;
    } catch (const ShapeError& e) {
        std::cerr << "artifact error: " << e.what() << "\n";
        return 4;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
