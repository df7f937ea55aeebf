#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#ifndef ES_CLI_PATH
#define ES_CLI_PATH "es_cli"
#endif

namespace fs = std::filesystem;

namespace {

const fs::path kRoot = fs::temp_directory_path() / "es_cli_tests";

int run_cli(const std::string& args) {
    const std::string cmd = std::string(ES_CLI_PATH) + " " + args + " >" + (kRoot / "stdout.txt").string() + " 2>" +
                            (kRoot / "stderr.txt").string();
    const int rc = std::system(cmd.c_str());
    return WEXITSTATUS(rc);
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::ostringstream os;
    os << f.rdbuf();
    return os.str();
}

void write(const fs::path& p, const std::string& text) {
    fs::create_directories(p.parent_path());
    std::ofstream f(p);
    f << text;
}

std::string base_config(const std::string& out_dir, const std::string& extra = "") {
    std::ostringstream os;
    os << "[data]\n"
          "dataset = \"digits\"\n"
          "per_class = 4\n"
          "er = 3\n"
          "corpus_count = 150\n"
          "corpus_seed = 5\n"
          "test_count = 40\n"
          "pretrain_items = 80\n"
          "\n[train]\n"
          "epochs = 1\n"
          "pretrain_epochs = 1\n"
          "finetune_epochs = 1\n"
          "\n[graph]\n"
          "iters = 10\n"
          "\n[classifier]\n"
          "epochs = 2\n"
          "\n[seeds]\n"
          "data = 1\n"
          "model = 2\n"
          "expansion = 3\n"
          "\n[paths]\n"
          "out_dir = \""
       << out_dir << "\"\n"
       << extra;
    return os.str();
}

struct Setup {
    Setup() { fs::create_directories(kRoot); }
} setup_once;

} // namespace

TEST_CASE("missing and malformed configs exit with code 2") {
    CHECK(run_cli("pretrain") == 2); // --config required
    const fs::path cfg = kRoot / "bad_key.toml";
    write(cfg, base_config((kRoot / "o").string(), "[data]\nunknown_knob = 4\n"));
    CHECK(run_cli("pretrain --config " + cfg.string()) == 2);

    const fs::path noseed = kRoot / "noseed.toml";
    write(noseed,
          "[data]\ndataset = \"digits\"\n[paths]\nout_dir = \"" + (kRoot / "o2").string() + "\"\n");
    CHECK(run_cli("pretrain --config " + noseed.string()) == 2);
    const std::string err = slurp(kRoot / "stderr.txt");
    CHECK(err.find("seeds") != std::string::npos); // message names the key

    const fs::path missing_corpus = kRoot / "missing_corpus.toml";
    write(missing_corpus, base_config((kRoot / "o3").string(),
                                      "[data]\ndataset = \"mnist\"\n"));
    CHECK(run_cli("pretrain --config " + missing_corpus.string()) == 2);
    CHECK(slurp(kRoot / "stderr.txt").find("train_images") != std::string::npos);

    const fs::path broken = kRoot / "broken.toml";
    write(broken, "[data\nper_class = 4\n");
    CHECK(run_cli("pretrain --config " + broken.string()) == 2);
    CHECK(slurp(kRoot / "stderr.txt").find(":1") != std::string::npos); // line diagnostic
}

TEST_CASE("datagen writes an IDX corpus the loaders accept") {
    const fs::path out = kRoot / "gen";
    const fs::path cfg = kRoot / "gen.toml";
    write(cfg, base_config(out.string()));
    REQUIRE(run_cli("datagen --config " + cfg.string()) == 0);
    CHECK(fs::exists(out / "train-images-idx3-ubyte"));
    CHECK(fs::exists(out / "test-labels-idx1-ubyte"));
}

TEST_CASE("pretrain with zero epochs still writes an initialized checkpoint") {
    const fs::path out = kRoot / "p0";
    const fs::path cfg = kRoot / "p0.toml";
    write(cfg, base_config(out.string(), "[train]\npretrain_epochs = 0\n"));
    REQUIRE(run_cli("pretrain --config " + cfg.string()) == 0);
    CHECK(fs::exists(out / "ae.espk"));
    CHECK(fs::file_size(out / "ae.espk") > 1000);
}

TEST_CASE("pretrain reruns produce byte-identical checkpoints") {
    const fs::path out_a = kRoot / "pa";
    const fs::path out_b = kRoot / "pb";
    const fs::path cfg_a = kRoot / "pa.toml";
    const fs::path cfg_b = kRoot / "pb.toml";
    write(cfg_a, base_config(out_a.string()));
    write(cfg_b, base_config(out_b.string()));
    REQUIRE(run_cli("pretrain --config " + cfg_a.string()) == 0);
    REQUIRE(run_cli("pretrain --config " + cfg_b.string()) == 0);
    CHECK(slurp(out_a / "ae.espk") == slurp(out_b / "ae.espk"));
    CHECK(slurp(out_a / "pretrain_log.csv") == slurp(out_b / "pretrain_log.csv"));
}

TEST_CASE("expand consumes the checkpoint and scales counts by ER") {
    const fs::path pout = kRoot / "pipeline_p";
    const fs::path cfg_p = kRoot / "pipeline_p.toml";
    write(cfg_p, base_config(pout.string()));
    REQUIRE(run_cli("pretrain --config " + cfg_p.string()) == 0);

    const fs::path xout = kRoot / "pipeline_x";
    const fs::path cfg_x = kRoot / "pipeline_x.toml";
    write(cfg_x, base_config(xout.string(),
                             "[paths]\ncheckpoint = \"" + (pout / "ae.espk").string() + "\"\n"));
    REQUIRE(run_cli("expand --config " + cfg_x.string()) == 0);
    const std::string log = slurp(kRoot / "stdout.txt");
    CHECK(log.find("40 -> 120") != std::string::npos); // er=3 x 40 items
    CHECK(fs::exists(xout / "expanded.exps"));
    CHECK(fs::exists(xout / "expansion_loss.csv"));
    CHECK(fs::exists(xout / "graphs" / "class0.edges"));

    // Idempotence: a second identical run writes identical bytes.
    const std::string exps = slurp(xout / "expanded.exps");
    const std::string loss = slurp(xout / "expansion_loss.csv");
    REQUIRE(run_cli("expand --config " + cfg_x.string()) == 0);
    CHECK(slurp(xout / "expanded.exps") == exps);
    CHECK(slurp(xout / "expansion_loss.csv") == loss);

    // Corrupted checkpoint magic -> exit 4.
    const fs::path bad = kRoot / "bad.espk";
    std::string bytes = slurp(pout / "ae.espk");
    bytes[0] = 'Z';
    write(bad, bytes);
    const fs::path cfg_bad = kRoot / "pipeline_bad.toml";
    write(cfg_bad, base_config((kRoot / "xb").string(), "[paths]\ncheckpoint = \"" + bad.string() + "\"\n"));
    CHECK(run_cli("expand --config " + cfg_bad.string()) == 4);
}

TEST_CASE("evaluate compares arms and rejects mismatched class counts") {
    const fs::path pout = kRoot / "ev_p";
    const fs::path cfg_p = kRoot / "ev_p.toml";
    write(cfg_p, base_config(pout.string()));
    REQUIRE(run_cli("pretrain --config " + cfg_p.string()) == 0);
    const fs::path xout = kRoot / "ev_x";
    const fs::path cfg_x = kRoot / "ev_x.toml";
    write(cfg_x, base_config(xout.string(), "[paths]\ncheckpoint = \"" + (pout / "ae.espk").string() + "\"\n"));
    REQUIRE(run_cli("expand --config " + cfg_x.string()) == 0);

    const std::string exps = (xout / "expanded.exps").string();
    REQUIRE(run_cli("evaluate --config " + cfg_x.string() + " " + exps) == 0);
    const std::string single = slurp(xout / "evaluation.csv");
    CHECK(single.find("expanded,120,") != std::string::npos);

    // Two arms -> two rows; identical reruns match byte for byte.
    REQUIRE(run_cli("evaluate --config " + cfg_x.string() + " " + exps + " " + exps) == 0);
    const std::string twice = slurp(xout / "evaluation.csv");
    CHECK(std::count(twice.begin(), twice.end(), '\n') == 3);
    REQUIRE(run_cli("evaluate --config " + cfg_x.string() + " " + exps + " " + exps) == 0);
    CHECK(slurp(xout / "evaluation.csv") == twice);

    CHECK(run_cli("evaluate --config " + cfg_x.string()) == 2); // no files

    // Arm with a different class count -> exit 5. Build one by patching the
    // C field of a copied container.
    std::string bytes = slurp(xout / "expanded.exps");
    bytes[6] = 0x0b; // C: 10 -> 11 (little-endian u16 at offset 6)
    const fs::path other = kRoot / "other.exps";
    write(other, bytes);
    CHECK(run_cli("evaluate --config " + cfg_x.string() + " " + exps + " " + other.string()) == 5);
}

TEST_CASE("ablate honors --rungs and the seed override flag") {
    const fs::path out = kRoot / "ab";
    const fs::path cfg = kRoot / "ab.toml";
    write(cfg, base_config(out.string(), "[train]\npretrain_epochs = 0\nepochs = 0\nfinetune_epochs = 0\n"));
    REQUIRE(run_cli("ablate --config " + cfg.string() + " --rungs 1") == 0);
    const std::string report = slurp(out / "ablation.csv");
    CHECK(report.find("baseline") != std::string::npos);
    CHECK(report.find("+rwa") == std::string::npos);

    CHECK(run_cli("ablate --config " + cfg.string() + " --rungs 9") == 2);

    REQUIRE(run_cli("ablate --config " + cfg.string() + " --rungs 1 --seeds 7,8,9") == 0);
    const std::string seeded = slurp(out / "ablation.txt");
    CHECK(seeded.find("seeds=7/8/9") != std::string::npos);
}
