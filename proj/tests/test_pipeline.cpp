#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "es/datagen.hpp"
#include "es/pipeline.hpp"
#include "es/rng.hpp"

using namespace es;

namespace {

// Small-but-real pipeline configuration for fast tests.
ExpansionConfig tiny_cfg() {
    ExpansionConfig cfg;
    cfg.per_class = 4;
    cfg.er = 3;
    cfg.epochs = 1;
    cfg.class_count = 10;
    cfg.graph_iters = 20;
    cfg.ot_iters = 60;
    cfg.finetune_epochs = 1;
    cfg.classifier_epochs = 2;
    cfg.pretrain_items = 80;
    return cfg;
}

struct Fixture {
    LabeledDataset pool;
    LabeledDataset test;
    Autoencoder ae;
};

Fixture make_fixture(const ExpansionConfig& cfg) {
    LabeledDataset corpus = make_digit_corpus(200, 1000);
    CorpusSplit split = split_corpus(corpus, cfg);
    Autoencoder ae = Autoencoder::init(cfg.ae_config(), cfg.seed_model);
    ae.pretrain(split.pretrain, 1, 1e-3f, 32, 3);
    return Fixture{split.fewshot_pool, make_digit_corpus(60, 2000, LabeledDataset::Role::test), std::move(ae)};
}

} // namespace

TEST_CASE("run_expansion N=0 is a pure forward pass with exact counts") {
    ExpansionConfig cfg = tiny_cfg();
    cfg.epochs = 0;
    Fixture fx = make_fixture(cfg);
    LabeledDataset x = sample_per_class(fx.pool, {cfg.per_class, cfg.seed_data, {}}).selected;
    const std::string before = fx.ae.params().serialize();
    ExpansionResult res = run_expansion(cfg, x, fx.ae);
    CHECK(fx.ae.params().serialize() == before); // no parameter change
    CHECK(res.xprime.count() == cfg.er * cfg.per_class * cfg.class_count);
    auto by_class = res.xprime.indices_by_class();
    for (const auto& pool : by_class) CHECK(static_cast<int>(pool.size()) == cfg.er * cfg.per_class);
    // Epoch 0 evaluation rows only.
    for (const auto& row : res.loss_series) CHECK(row.epoch == 0);
    CHECK(res.loss_series.size() == static_cast<std::size_t>(cfg.class_count));
}

TEST_CASE("run_expansion trains, logs the series, and is deterministic") {
    ExpansionConfig cfg = tiny_cfg();
    Fixture fx = make_fixture(cfg);
    LabeledDataset x = sample_per_class(fx.pool, {cfg.per_class, cfg.seed_data, {}}).selected;
    ExpansionResult a = run_expansion(cfg, x, fx.ae);
    ExpansionResult b = run_expansion(cfg, x, fx.ae);
    CHECK(a.xprime.checksum() == b.xprime.checksum());
    REQUIRE(a.loss_series.size() == static_cast<std::size_t>((cfg.epochs + 1) * cfg.class_count));
    for (std::size_t i = 0; i < a.loss_series.size(); ++i) {
        CHECK(a.loss_series[i].total == b.loss_series[i].total);
        // total == alpha . (re, ce, w, cov) within float tolerance
        const auto& r = a.loss_series[i];
        const double combo = cfg.alpha[0] * static_cast<double>(r.re) + cfg.alpha[1] * static_cast<double>(r.ce) +
                             cfg.alpha[2] * static_cast<double>(r.w) + cfg.alpha[3] * static_cast<double>(r.cov);
        CHECK(std::abs(combo - static_cast<double>(r.total)) < 1e-4);
    }
    // Code graphs: connected, regular, one per class.
    REQUIRE(a.graphs.size() == static_cast<std::size_t>(cfg.class_count));
    for (const auto& g : a.graphs) {
        CHECK(g.graph.connected());
        for (int v = 0; v < g.graph.n; ++v) CHECK(g.graph.degree(v) == g.degree);
    }
}

TEST_CASE("expansion capacity errors carry m, L and ER") {
    ExpansionConfig cfg = tiny_cfg();
    cfg.per_class = 2;
    cfg.heads = 1;
    cfg.er = 3; // m^L - m = 0 < (er-1)*m
    cfg.rung = Rung::egm;
    Fixture fx = make_fixture(cfg);
    LabeledDataset x = sample_per_class(fx.pool, {cfg.per_class, cfg.seed_data, {}}).selected;
    try {
        run_expansion(cfg, x, fx.ae);
        FAIL("expected CapacityError");
    } catch (const CapacityError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("m=2") != std::string::npos);
        CHECK(msg.find("L=1") != std::string::npos);
        CHECK(msg.find("ER=3") != std::string::npos);
    }
}

TEST_CASE("classifier memorizes a 10-item dataset and evaluates trivially") {
    LabeledDataset ten = make_digit_corpus(10, 5000);
    Classifier cls = Classifier::init(ClassifierConfig{}, 7);
    cls.train(ten, 200, 1e-3f, 10, 8);
    CHECK(cls.evaluate(ten) == 100.0);

    // Untrained classifier sits near chance on a balanced set.
    Classifier fresh = Classifier::init(ClassifierConfig{}, 9);
    LabeledDataset balanced = make_digit_corpus(400, 5100, LabeledDataset::Role::test);
    const double acc = fresh.evaluate(balanced);
    CHECK(acc >= 0.0);
    CHECK(acc <= 100.0);

    // Determinism: same data and seeds give identical weights.
    Classifier c1 = Classifier::init(ClassifierConfig{}, 11);
    Classifier c2 = Classifier::init(ClassifierConfig{}, 11);
    c1.train(ten, 3, 1e-3f, 4, 12);
    c2.train(ten, 3, 1e-3f, 4, 12);
    CHECK(c1.params().serialize() == c2.params().serialize());
}

TEST_CASE("evaluate: constant predictor scores the class share on a balanced set") {
    // Zeroed head -> all logits equal -> argmax ties resolve to class 0.
    Classifier cls = Classifier::init(ClassifierConfig{}, 13);
    for (const auto& name : cls.params().names())
        cls.params().at(name).v.setZero();
    LabeledDataset balanced = make_digit_corpus(200, 5200, LabeledDataset::Role::test);
    CHECK(cls.evaluate(balanced) == 10.0);
    for (int pred : cls.predict(balanced)) CHECK(pred == 0);
}

TEST_CASE("run_comparison emits three arms over one test set and replays byte-identically") {
    ExpansionConfig cfg = tiny_cfg();
    Fixture fx = make_fixture(cfg);
    RunReport a = run_comparison(cfg, fx.pool, fx.test, fx.ae);
    REQUIRE(a.arms.size() == 3);
    CHECK(a.arms[0].name == "original");
    CHECK(a.arms[1].name == "classical_aug");
    CHECK(a.arms[2].name == "expansive_synthesis");
    CHECK(a.arms[0].items == cfg.per_class * cfg.class_count);
    CHECK(a.arms[1].items == cfg.er * cfg.per_class * cfg.class_count);
    CHECK(a.arms[2].items == cfg.er * cfg.per_class * cfg.class_count);
    CHECK(a.test_checksum == fx.test.checksum());
    for (const auto& arm : a.arms) {
        CHECK(arm.accuracy >= 0.0);
        CHECK(arm.accuracy <= 100.0);
    }
    RunReport b = run_comparison(cfg, fx.pool, fx.test, fx.ae);
    CHECK(a.to_text() == b.to_text());
    CHECK(a.arms_csv() == b.arms_csv());
    CHECK(a.loss_csv() == b.loss_csv());
    CHECK(a.classifier_hash == b.classifier_hash);
}

TEST_CASE("run_ablation walks the six-rung ladder in order") {
    ExpansionConfig cfg = tiny_cfg();
    cfg.epochs = 1;
    Fixture fx = make_fixture(cfg);
    RunReport r = run_ablation(cfg, fx.pool, fx.test, fx.ae);
    REQUIRE(r.arms.size() == 6);
    CHECK(r.arms[0].name == "baseline");
    CHECK(r.arms[1].name == "+rwa");
    CHECK(r.arms[2].name == "+sa");
    CHECK(r.arms[3].name == "+sc");
    CHECK(r.arms[4].name == "+mhsa");
    CHECK(r.arms[5].name == "+egm");
    CHECK(r.arms[0].items == cfg.per_class * cfg.class_count);
    for (int i = 1; i < 6; ++i) CHECK(r.arms[static_cast<std::size_t>(i)].items == cfg.er * cfg.per_class * cfg.class_count);

    RunReport head = run_ablation(cfg, fx.pool, fx.test, fx.ae, 1);
    REQUIRE(head.arms.size() == 1);
    CHECK(head.arms[0].name == "baseline");
    CHECK(head.arms[0].accuracy == r.arms[0].accuracy);

    CHECK_THROWS_AS(run_ablation(cfg, fx.pool, fx.test, fx.ae, 0), ConfigError);
}

TEST_CASE("rwa rung swaps to row-wise tokens with the contracted grid shape") {
    ExpansionConfig cfg = tiny_cfg().for_rung(Rung::rwa);
    AttnConfig a = cfg.attn_config();
    CHECK(a.mode == AttnMode::rowwise);
    CHECK(a.tokens() == a.map_h);          // T = h
    CHECK(a.token_dim() == a.map_w * a.map_c); // token dim = w * Cl
    AttnConfig full = tiny_cfg().for_rung(Rung::egm).attn_config();
    CHECK(full.mode == AttnMode::spatial);
    CHECK(full.tokens() == 16);
}
