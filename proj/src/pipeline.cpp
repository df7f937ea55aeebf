#include "es/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "es/augment.hpp"
#include "es/rng.hpp"

namespace es {

const char* rung_name(Rung r) {
    switch (r) {
        case Rung::baseline: return "baseline";
        case Rung::rwa: return "+rwa";
        case Rung::sa: return "+sa";
        case Rung::sc: return "+sc";
        case Rung::mhsa: return "+mhsa";
        case Rung::egm: return "+egm";
    }
    return "?";
}

AeConfig ExpansionConfig::ae_config() const {
    AeConfig ae = dataset == "cifar10" ? AeConfig::cifar10() : AeConfig::mnist();
    ae.skips = skips;
    return ae;
}

AttnConfig ExpansionConfig::attn_config() const {
    const AeConfig ae = ae_config();
    AttnConfig a;
    a.heads = heads;
    a.head_dim = head_dim;
    a.patch = patch;
    // Fold of the latent vector into a map: fixed 8x8 spatial extent, channels
    // carrying the rest. Latent dims are multiples of 64 by construction.
    if (ae.latent_dim % 64 != 0) throw ParamError("latent dim must fold into an 8x8 map");
    a.map_c = ae.latent_dim / 64;
    a.map_h = 8;
    a.map_w = 8;
    switch (rung) {
        case Rung::rwa:
            a.mode = AttnMode::rowwise;
            a.heads = 1;
            break;
        case Rung::sa:
        case Rung::sc:
            a.mode = AttnMode::spatial;
            a.heads = 1;
            break;
        default:
            a.mode = AttnMode::spatial;
            break;
    }
    a.validate();
    return a;
}

ClassifierConfig ExpansionConfig::classifier_config(int class_count_override) const {
    const AeConfig ae = ae_config();
    ClassifierConfig c;
    c.in_channels = ae.in_channels;
    c.in_h = ae.in_h;
    c.in_w = ae.in_w;
    c.classes = class_count_override > 0 ? class_count_override : class_count;
    c.c1 = dataset == "cifar10" ? 24 : 16;
    c.c2 = dataset == "cifar10" ? 48 : 32;
    return c;
}

void ExpansionConfig::validate() const {
    if (er < 1) throw ParamError("expansion ratio must be >= 1");
    if (epochs < 0) throw ParamError("epochs must be >= 0");
    if (per_class < 1) throw ParamError("per_class must be >= 1");
    if (class_count < 1) throw ParamError("class_count must be >= 1");
    if (dataset != "digits" && dataset != "mnist" && dataset != "cifar10")
        throw ConfigError("unknown dataset: " + dataset);
    for (float a : alpha)
        if (!std::isfinite(a)) throw ConfigError("non-finite loss weight");
}

ExpansionConfig ExpansionConfig::for_rung(Rung r) const {
    ExpansionConfig c = *this;
    c.rung = r;
    c.skips = (r == Rung::sc || r == Rung::mhsa || r == Rung::egm);
    return c;
}

std::string ExpansionConfig::echo() const {
    char buf[640];
    std::snprintf(buf, sizeof buf,
                  "dataset=%s per_class=%d er=%d epochs=%d classes=%d alpha=%.4g,%.4g,%.4g,%.4g heads=%d head_dim=%d "
                  "patch=%d crop_q=%.4g graph=r%d,it%d ot=eps%.4g,it%d lr=%.4g finetune=%d pretrain=%d,%d,%d "
                  "classifier=%d,%.4g,%d skips=%d rung=%s seeds=%llu/%llu/%llu",
                  dataset.c_str(), per_class, er, epochs, class_count, static_cast<double>(alpha[0]),
                  static_cast<double>(alpha[1]), static_cast<double>(alpha[2]), static_cast<double>(alpha[3]), heads,
                  head_dim, patch, static_cast<double>(crop_q), graph_degree, graph_iters,
                  static_cast<double>(ot_epsilon), ot_iters, static_cast<double>(lr), finetune_epochs, pretrain_epochs,
                  pretrain_batch, pretrain_items, classifier_epochs, static_cast<double>(classifier_lr),
                  classifier_batch, skips ? 1 : 0, rung_name(rung), static_cast<unsigned long long>(seed_data),
                  static_cast<unsigned long long>(seed_model), static_cast<unsigned long long>(seed_expansion));
    return buf;
}

std::uint64_t ExpansionConfig::hash() const {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (char c : echo()) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ull;
    }
    return h;
}

namespace {

std::string fmt_acc(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

std::string fmt_loss(float v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.8g", static_cast<double>(v));
    return buf;
}

/// Everything one expansion run trains: joint store plus per-class structures.
struct ExpansionState {
    ExpansionConfig cfg;
    AeConfig ae_cfg;
    AttnConfig attn;
    ConvTConfig convt;
    ClassifierConfig incls_cfg;
    std::optional<Autoencoder> ae; // owns the joint store
    std::vector<CodeGraph> graphs;
    std::vector<std::vector<std::vector<int>>> plans; // per class selections
    struct Mix {
        int a, b;
        float lambda;
    };
    std::vector<std::vector<Mix>> mixes; // per class lin-interp plan
    Combiner combiner = Combiner::egm;

    ParamStore& store() { return ae->params(); }
};

struct ClassStepNodes {
    Var yprime;      // (er*m, d)
    Var total;
    Var re, ce, w, cov;
};

/// Per-datapoint attention pass over the class latents; returns attended maps
/// and, for EGM, the cropped per-head feature vectors.
struct AttentionPass {
    std::vector<Var> attended_maps;           // per datapoint (C,h,w)
    std::vector<std::vector<Var>> features;   // m x L cropped features (EGM)
};

AttentionPass attention_pass(Tape& tp, BoundParams& p, ExpansionState& st, Var y, int m) {
    AttentionPass out;
    const AttnConfig& a = st.attn;
    const int pix = a.mode == AttnMode::spatial ? a.patch : 1;
    for (int i = 0; i < m; ++i) {
        Var row = take_row(tp, y, i);
        Var map = reshape(tp, row, {a.map_c, a.map_h, a.map_w});
        Var tokens = patchify_var(tp, map, a);
        MhssaOut att = mhssa(tp, p, tokens, a);
        Var amap = unpatchify_var(tp, att.attended, a);
        out.attended_maps.push_back(amap);
        if (st.combiner == Combiner::egm) {
            std::vector<Tensor> head_vals;
            head_vals.reserve(att.head_attn.size());
            for (Var h : att.head_attn) head_vals.push_back(tp.val(h));
            FeatureSet fs = extract_head_features(head_vals, a.grid_h(), a.grid_w());
            attention_crop(fs, st.cfg.crop_q);
            std::vector<Var> feats;
            for (int j = 0; j < a.heads; ++j) {
                const CropBox& b = fs.crops[static_cast<std::size_t>(j)];
                Var crop = crop_resize_bilinear(tp, amap, b.r0 * pix, b.c0 * pix, b.h * pix, b.w * pix, 2 * a.patch,
                                                2 * a.patch);
                feats.push_back(reshape(tp, crop, {st.convt.feat_dim}));
            }
            out.features.push_back(std::move(feats));
        }
    }
    return out;
}

Var expand_class(Tape& tp, BoundParams& p, ExpansionState& st, Var y, const AttentionPass& pass, int class_id) {
    const int m = tp.shape(y)[0];
    if (st.combiner == Combiner::egm) {
        ExpandNodes nodes;
        std::vector<Var> rows;
        rows.reserve(static_cast<std::size_t>(st.cfg.er) * static_cast<std::size_t>(m));
        for (int i = 0; i < m; ++i) rows.push_back(take_row(tp, y, i));
        for (const auto& sel : st.plans[static_cast<std::size_t>(class_id)])
            rows.push_back(synthesize_datapoint(tp, p, pass.features, sel, st.graphs[static_cast<std::size_t>(class_id)],
                                                st.convt));
        return stack_rows(tp, rows);
    }
    const int d = st.ae_cfg.latent_dim;
    std::vector<Var> rows;
    rows.reserve(static_cast<std::size_t>(st.cfg.er) * static_cast<std::size_t>(m));
    for (int i = 0; i < m; ++i) rows.push_back(take_row(tp, y, i));
    for (const auto& mix : st.mixes[static_cast<std::size_t>(class_id)]) {
        Var ya = reshape(tp, pass.attended_maps[static_cast<std::size_t>(mix.a)], {d});
        Var yb = reshape(tp, pass.attended_maps[static_cast<std::size_t>(mix.b)], {d});
        rows.push_back(add_weighted(tp, ya, yb, mix.lambda, 1.0f - mix.lambda));
    }
    return stack_rows(tp, rows);
}

ClassStepNodes class_step(Tape& tp, BoundParams& p, ExpansionState& st, const LabeledDataset& xc, int class_id) {
    const int m = xc.count();
    Var images = tp.constant(xc.images);
    Autoencoder::EncNodes enc = st.ae->encode_nodes(tp, p, images, false, nullptr);
    Var y = enc.mu;
    AttentionPass pass = attention_pass(tp, p, st, y, m);
    ClassStepNodes out;
    out.yprime = expand_class(tp, p, st, y, pass, class_id);

    // Reconstruction (Eq. 6 shape: unit-variance NLL plus closed-form KL).
    Var decoded = st.ae->decode_nodes(tp, p, enc.z, &enc);
    Var nll = scale(tp, sum_sq_diff(tp, decoded, images), 0.5f / static_cast<float>(m));
    const int d = st.ae_cfg.latent_dim;
    Var t1 = sum_all(tp, mul(tp, enc.mu, enc.mu));
    Var t2 = sum_all(tp, exp_op(tp, enc.logvar));
    Var t3 = sum_all(tp, enc.logvar);
    Var kl = scale(tp,
                   add_scalar(tp, add_weighted(tp, add(tp, t1, t2), t3, 0.5f, -0.5f),
                              -0.5f * static_cast<float>(m) * static_cast<float>(d)),
                   1.0f / static_cast<float>(m));
    out.re = add(tp, nll, kl);

    // Label consistency on X concatenated with X': classifier CE over both
    // batches, weighted to the mean over the union.
    Var xprime_imgs = st.ae->decode_nodes(tp, p, out.yprime, nullptr);
    const int np = tp.shape(out.yprime)[0];
    std::vector<int> labels_x(static_cast<std::size_t>(m), class_id);
    std::vector<int> labels_xp(static_cast<std::size_t>(np), class_id);
    Var ce_x = cross_entropy_mean(tp, classifier_logits(tp, p, images, st.incls_cfg, "incls"), labels_x);
    Var ce_xp = cross_entropy_mean(tp, classifier_logits(tp, p, xprime_imgs, st.incls_cfg, "incls"), labels_xp);
    const float wx = static_cast<float>(m) / static_cast<float>(m + np);
    out.ce = add_weighted(tp, ce_x, ce_xp, wx, 1.0f - wx);

    SinkhornOpts ot;
    ot.epsilon = st.cfg.ot_epsilon;
    ot.max_iters = st.cfg.ot_iters;
    out.w = wasserstein(tp, y, out.yprime, ot);
    out.cov = covariance_loss(tp, out.yprime);

    Var a01 = add_weighted(tp, out.re, out.ce, st.cfg.alpha[0], st.cfg.alpha[1]);
    Var a23 = add_weighted(tp, out.w, out.cov, st.cfg.alpha[2], st.cfg.alpha[3]);
    out.total = add(tp, a01, a23);
    return out;
}

ExpansionState make_state(const ExpansionConfig& cfg, const LabeledDataset& x, const Autoencoder& pretrained) {
    cfg.validate();
    x.validate();
    ExpansionState st;
    st.cfg = cfg;
    st.ae_cfg = cfg.ae_config();
    st.attn = cfg.attn_config();
    st.combiner = cfg.combiner();
    st.convt.heads = st.attn.heads;
    st.convt.feat_dim = st.attn.map_c * (2 * st.attn.patch) * (2 * st.attn.patch);
    st.convt.latent_dim = st.ae_cfg.latent_dim;
    st.incls_cfg = cfg.classifier_config();

    ParamStore store = ParamStore::load_from_string(pretrained.params().serialize());
    init_attention_params(store, st.attn, Rng(cfg.seed_model).fork(11).next_u64());
    if (st.combiner == Combiner::egm) init_convt_params(store, st.convt, Rng(cfg.seed_model).fork(12).next_u64());
    {
        // "Initialize: ... Classifier Cl" — fit the in-loop classifier to X
        // first so its label-consistency gradients point somewhere sensible
        // from the first expansion step.
        Classifier warm = Classifier::init(st.incls_cfg, Rng(cfg.seed_model).fork(13).next_u64());
        warm.train(x, 30, 1e-3f, 32, Rng(cfg.seed_model).fork(14).next_u64());
        for (const std::string& name : warm.params().names())
            store.add("incls." + name.substr(4), warm.params().at(name));
    }
    st.ae.emplace(st.ae_cfg, std::move(store));
    st.ae->ensure_skip_params();

    auto by_class = x.indices_by_class();
    const int m = cfg.per_class;
    for (const auto& pool : by_class)
        if (static_cast<int>(pool.size()) != m)
            throw ConsistencyError("expansion input must hold exactly per_class items of every class");

    Rng exp_root(cfg.seed_expansion);
    const int needed = (cfg.er - 1) * m;
    if (st.combiner == Combiner::egm) {
        const std::uint64_t capacity =
            count_combinations(static_cast<std::uint64_t>(m), static_cast<std::uint64_t>(st.attn.heads));
        if (static_cast<std::uint64_t>(needed) > capacity)
            throw CapacityError("expansion: ER=" + std::to_string(cfg.er) + " needs " + std::to_string(needed) +
                                " new combinations per class but m=" + std::to_string(m) + ", L=" +
                                std::to_string(st.attn.heads) + " admits only " + std::to_string(capacity));
    }
    for (int c = 0; c < cfg.class_count; ++c) {
        if (st.combiner == Combiner::egm) {
            const int L = st.attn.heads;
            CodeGraph g;
            if (L < 3) {
                g.graph = Graph::complete(L);
                g.class_id = c;
                g.degree = L - 1;
                g.gap = L >= 2 ? spectral_gap(g.graph) : 0.0f;
            } else {
                const int r = L <= 4 ? L - 1 : cfg.graph_degree;
                g = build_code_graph(L, r, cfg.graph_iters, exp_root.fork(100 + static_cast<std::uint64_t>(c)).next_u64(), c);
            }
            st.graphs.push_back(std::move(g));
            st.plans.push_back(needed > 0 ? selection_plan(m, st.attn.heads, needed,
                                                           exp_root.fork(200 + static_cast<std::uint64_t>(c)).next_u64())
                                          : std::vector<std::vector<int>>{});
        } else {
            Rng mr = exp_root.fork(300 + static_cast<std::uint64_t>(c));
            std::vector<ExpansionState::Mix> mix;
            for (int t = 0; t < needed; ++t) {
                const int a = mr.below_int(m);
                int b = mr.below_int(m - 1);
                if (b >= a) ++b;
                mix.push_back({a, b, mr.uniform(0.25f, 0.75f)});
            }
            st.mixes.push_back(std::move(mix));
            st.graphs.emplace_back();
            st.plans.emplace_back();
        }
    }
    if (st.combiner == Combiner::lin_interp) return st;

    // ConvT calibration: fit the per-head maps so identity selections
    // reproduce their source latents (data-dependent init; N=0 stays a pure
    // forward pass with these weights).
    const int fdim = st.convt.heads * st.convt.feat_dim;
    Tensor phi = Tensor::zeros({x.count(), fdim});
    Tensor targets = Tensor::zeros({x.count(), st.ae_cfg.latent_dim});
    int row = 0;
    for (int c = 0; c < cfg.class_count; ++c) {
        LabeledDataset xc = x.subset(by_class[static_cast<std::size_t>(c)]);
        Tape tp;
        BoundParams p(tp, st.store(), false);
        Var images = tp.constant(xc.images);
        Autoencoder::EncNodes enc = st.ae->encode_nodes(tp, p, images, false, nullptr);
        AttentionPass pass = attention_pass(tp, p, st, enc.mu, xc.count());
        const Eigen::MatrixXf adj = normalized_adjacency(st.graphs[static_cast<std::size_t>(c)].graph);
        for (int i = 0; i < xc.count(); ++i, ++row) {
            std::vector<int> sel(static_cast<std::size_t>(st.attn.heads), i);
            std::vector<Var> mixed = graph_mixed_features(tp, pass.features, sel, adj);
            for (int j = 0; j < st.attn.heads; ++j)
                phi.v.segment(static_cast<Eigen::Index>(row) * fdim + j * st.convt.feat_dim, st.convt.feat_dim) =
                    tp.val(mixed[static_cast<std::size_t>(j)]).v;
            targets.v.segment(static_cast<Eigen::Index>(row) * st.ae_cfg.latent_dim, st.ae_cfg.latent_dim) =
                tp.val(enc.mu).v.segment(static_cast<Eigen::Index>(i) * st.ae_cfg.latent_dim, st.ae_cfg.latent_dim);
        }
    }
    calibrate_convt(st.store(), phi, targets, st.convt);
    return st;
}

void set_expansion_trainable(ExpansionState& st) {
    st.ae->set_finetune_trainable();
    st.store().set_trainable_prefix("attn.", true);
    st.store().set_trainable_prefix("convt.", true);
    st.store().set_trainable_prefix("incls.", true);
}

} // namespace {}

CorpusSplit split_corpus(const LabeledDataset& corpus, const ExpansionConfig& cfg) {
    corpus.validate();
    const int slab = std::min(cfg.pretrain_items, corpus.count());
    std::vector<int> head(static_cast<std::size_t>(slab));
    for (int i = 0; i < slab; ++i) head[static_cast<std::size_t>(i)] = i;
    std::vector<int> tail;
    for (int i = slab; i < corpus.count(); ++i) tail.push_back(i);
    CorpusSplit out;
    out.pretrain = corpus.subset(head).with_role(LabeledDataset::Role::pretrain);
    out.fewshot_pool = corpus.subset(tail).with_role(LabeledDataset::Role::original);
    return out;
}

ExpansionResult run_expansion(const ExpansionConfig& cfg, const LabeledDataset& x, const Autoencoder& pretrained) {
    ExpansionState st = make_state(cfg, x, pretrained);
    set_expansion_trainable(st);
    auto by_class = x.indices_by_class();
    std::vector<LabeledDataset> per_class;
    per_class.reserve(static_cast<std::size_t>(cfg.class_count));
    for (int c = 0; c < cfg.class_count; ++c) per_class.push_back(x.subset(by_class[static_cast<std::size_t>(c)]));

    ExpansionResult out;
    AdamOpts opts;
    opts.lr = cfg.lr;
    for (int epoch = 0; epoch <= cfg.epochs; ++epoch) {
        for (int c = 0; c < cfg.class_count; ++c) {
            const bool update = epoch > 0;
            Tape tp;
            BoundParams p(tp, st.store(), update);
            ClassStepNodes nodes = class_step(tp, p, st, per_class[static_cast<std::size_t>(c)], c);
            const float total = tp.val(nodes.total).v[0];
            if (!std::isfinite(total))
                throw TrainingError("expansion diverged (non-finite loss) at epoch " + std::to_string(epoch) +
                                    ", class " + std::to_string(c));
            out.loss_series.push_back({epoch, c, tp.val(nodes.re).v[0], tp.val(nodes.ce).v[0], tp.val(nodes.w).v[0],
                                       tp.val(nodes.cov).v[0], total});
            if (update) {
                tp.backward(nodes.total);
                adam_step(st.store(), p.grads(), opts);
            }
        }
    }

    // Final expansion with the trained weights: per class, the per_class raw
    // originals followed by the (er-1)*per_class synthesized rows decoded from
    // the last-epoch latents. Per-class counts exactly er * per_class.
    LabeledDataset xprime;
    xprime.class_count = cfg.class_count;
    xprime.role = LabeledDataset::Role::expanded;
    const int per_out = cfg.er * cfg.per_class;
    xprime.images = Tensor::zeros({per_out * cfg.class_count, st.ae_cfg.in_channels, st.ae_cfg.in_h, st.ae_cfg.in_w});
    xprime.labels.assign(static_cast<std::size_t>(per_out) * static_cast<std::size_t>(cfg.class_count), 0);
    const std::int64_t item = xprime.item_size();
    for (int c = 0; c < cfg.class_count; ++c) {
        Tape tp;
        BoundParams p(tp, st.store(), false);
        const LabeledDataset& xc = per_class[static_cast<std::size_t>(c)];
        Autoencoder::EncNodes enc = st.ae->encode_nodes(tp, p, tp.constant(xc.images), false, nullptr);
        AttentionPass pass = attention_pass(tp, p, st, enc.mu, xc.count());
        Var yprime = expand_class(tp, p, st, enc.mu, pass, c);
        const int m = xc.count();
        const int synth = per_out - m;
        Var synth_latents = reshape(tp, yprime, {per_out, st.ae_cfg.latent_dim}); // view for slicing rows
        std::vector<Var> synth_rows;
        synth_rows.reserve(static_cast<std::size_t>(synth));
        for (int i = m; i < per_out; ++i) synth_rows.push_back(take_row(tp, synth_latents, i));
        Var imgs = st.ae->decode_nodes(tp, p, stack_rows(tp, synth_rows), nullptr);
        const Eigen::Index base = static_cast<Eigen::Index>(c) * per_out * item;
        xprime.images.v.segment(base, static_cast<Eigen::Index>(m) * item) = xc.images.v;
        xprime.images.v.segment(base + static_cast<Eigen::Index>(m) * item, static_cast<Eigen::Index>(synth) * item) =
            tp.val(imgs).v;
        for (int i = 0; i < per_out; ++i) xprime.labels[static_cast<std::size_t>(c) * per_out + i] = c;
    }
    xprime.validate();
    out.xprime = std::move(xprime);
    out.graphs = st.graphs;
    out.params = ParamStore::load_from_string(st.store().serialize());
    out.attn = st.attn;
    return out;
}

double train_and_evaluate_arm(const ExpansionConfig& cfg, const LabeledDataset& arm, const LabeledDataset& test) {
    Classifier cls = Classifier::init(cfg.classifier_config(), Rng(cfg.seed_model).fork(77).next_u64());
    cls.train(arm, cfg.classifier_epochs, cfg.classifier_lr, cfg.classifier_batch, Rng(cfg.seed_model).fork(78).next_u64());
    return cls.evaluate(test);
}

namespace {

std::uint64_t classifier_run_hash(const ExpansionConfig& cfg, const LabeledDataset& test) {
    std::uint64_t h = cfg.classifier_config().arch_hash();
    auto mix = [&h](std::uint64_t x) {
        h ^= x + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
    };
    mix(Rng(cfg.seed_model).fork(77).next_u64());
    mix(static_cast<std::uint64_t>(cfg.classifier_epochs));
    mix(static_cast<std::uint64_t>(cfg.classifier_batch));
    mix(test.checksum());
    return h;
}

} // namespace

RunReport run_comparison(const ExpansionConfig& cfg, const LabeledDataset& fewshot_pool, const LabeledDataset& test,
                         const Autoencoder& pretrained) {
    cfg.validate();
    RunReport report;
    report.kind = "comparison";
    report.config_echo = cfg.echo();
    report.test_checksum = test.checksum();
    report.classifier_hash = classifier_run_hash(cfg, test);

    SamplePlan plan{cfg.per_class, cfg.seed_data, {}};
    LabeledDataset x = sample_per_class(fewshot_pool, plan).selected;

    AugmentOpts aug;
    aug.horizontal_flip = cfg.dataset == "cifar10";
    LabeledDataset augmented = classical_augment(x, cfg.er, cfg.seed_expansion, aug);

    Autoencoder ae(cfg.ae_config(), ParamStore::load_from_string(pretrained.params().serialize()));
    ae.finetune_scale_shift(x, cfg.finetune_epochs, cfg.finetune_lr, Rng(cfg.seed_model).fork(55).next_u64());
    ExpansionResult expansion = run_expansion(cfg, x, ae);

    report.arms.push_back({"original", x.count(), train_and_evaluate_arm(cfg, x, test)});
    report.arms.push_back({"classical_aug", augmented.count(), train_and_evaluate_arm(cfg, augmented, test)});
    report.arms.push_back({"expansive_synthesis", expansion.xprime.count(),
                           train_and_evaluate_arm(cfg, expansion.xprime, test)});
    report.loss_series = std::move(expansion.loss_series);
    return report;
}

RunReport run_ablation(const ExpansionConfig& cfg, const LabeledDataset& fewshot_pool, const LabeledDataset& test,
                       const Autoencoder& pretrained, int rungs) {
    cfg.validate();
    if (rungs < 1 || rungs > 6) throw ConfigError("ablation rungs must lie in [1,6]");
    RunReport report;
    report.kind = "ablation";
    report.config_echo = cfg.echo();
    report.test_checksum = test.checksum();
    report.classifier_hash = classifier_run_hash(cfg, test);

    SamplePlan plan{cfg.per_class, cfg.seed_data, {}};
    LabeledDataset x = sample_per_class(fewshot_pool, plan).selected;

    const Rung ladder[6] = {Rung::baseline, Rung::rwa, Rung::sa, Rung::sc, Rung::mhsa, Rung::egm};
    for (int r = 0; r < rungs; ++r) {
        const Rung rung = ladder[r];
        if (rung == Rung::baseline) {
            report.arms.push_back({rung_name(rung), x.count(), train_and_evaluate_arm(cfg, x, test)});
            continue;
        }
        ExpansionConfig rc = cfg.for_rung(rung);
        Autoencoder ae(rc.ae_config(), ParamStore::load_from_string(pretrained.params().serialize()));
        ae.ensure_skip_params();
        ae.finetune_scale_shift(x, rc.finetune_epochs, rc.finetune_lr, Rng(rc.seed_model).fork(55).next_u64());
        ExpansionResult expansion = run_expansion(rc, x, ae);
        report.arms.push_back({rung_name(rung), expansion.xprime.count(),
                               train_and_evaluate_arm(rc, expansion.xprime, test)});
        if (rung == Rung::egm) report.loss_series = std::move(expansion.loss_series);
    }
    return report;
}

std::string RunReport::to_text() const {
    std::ostringstream os;
    os << "# " << kind << " report\n";
    os << "config: " << config_echo << "\n";
    os << "test_checksum: " << test_checksum << "\n";
    os << "classifier_hash: " << classifier_hash << "\n";
    os << "arm,items,accuracy\n";
    for (const auto& a : arms) os << a.name << "," << a.items << "," << fmt_acc(a.accuracy) << "\n";
    if (kind == "comparison" && arms.size() == 3) {
        os << "delta_es_vs_original," << fmt_acc(arms[2].accuracy - arms[0].accuracy) << "\n";
        os << "delta_es_vs_classical," << fmt_acc(arms[2].accuracy - arms[1].accuracy) << "\n";
    }
    return os.str();
}

std::string RunReport::arms_csv() const {
    std::ostringstream os;
    os << "arm,items,accuracy\n";
    for (const auto& a : arms) os << a.name << "," << a.items << "," << fmt_acc(a.accuracy) << "\n";
    return os.str();
}

std::string RunReport::loss_csv() const {
    std::ostringstream os;
    os << "epoch,class,re,ce,w,cov,total\n";
    for (const auto& r : loss_series)
        os << r.epoch << "," << r.class_id << "," << fmt_loss(r.re) << "," << fmt_loss(r.ce) << "," << fmt_loss(r.w)
           << "," << fmt_loss(r.cov) << "," << fmt_loss(r.total) << "\n";
    return os.str();
}

} // namespace es
