#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "es/autoencoder.hpp"
#include "es/datagen.hpp"
#include "es/grad_check.hpp"
#include "es/rng.hpp"

using namespace es;

namespace {

LabeledDataset tiny_corpus(int n, std::uint64_t seed) { return make_digit_corpus(n, seed); }

} // namespace

TEST_CASE("encode/decode shape contracts and determinism") {
    Autoencoder ae = Autoencoder::init(AeConfig::mnist(), 1);
    LabeledDataset x = tiny_corpus(12, 2);
    LatentBatch y = ae.encode(x, false);
    CHECK(y.y.shape == Shape{12, 64});
    CHECK(y.labels == x.labels);
    CHECK_FALSE(y.sampled);

    LatentBatch y2 = ae.encode(x, false);
    CHECK((y2.y.v == y.y.v).all());

    LatentBatch ys1 = ae.encode(x, true, 5);
    LatentBatch ys2 = ae.encode(x, true, 5);
    CHECK((ys1.y.v == ys2.y.v).all());
    CHECK((ys1.y.v != y.y.v).any());

    LatentBatch seven;
    seven.y = Tensor::zeros({7, 64});
    seven.labels.assign(7, 3);
    seven.class_count = 10;
    LabeledDataset imgs = ae.decode(seven);
    CHECK(imgs.images.shape == Shape{7, 1, 28, 28});
    CHECK(imgs.labels == seven.labels);
    CHECK(imgs.images.v.minCoeff() >= 0.0f);
    CHECK(imgs.images.v.maxCoeff() <= 1.0f);

    LabeledDataset wrong = tiny_corpus(3, 9);
    wrong.images = Tensor::zeros({3, 1, 14, 14});
    CHECK_THROWS_AS(ae.encode(wrong, false), ShapeError);
}

TEST_CASE("reconstruction loss KL closed forms") {
    // mu = 0, logvar = 0 -> KL exactly 0; perfect recon leaves only KL.
    AeConfig cfg = AeConfig::mnist();
    Autoencoder ae = Autoencoder::init(cfg, 3);
    Tape tp;
    BoundParams p(tp, ae.params(), false);
    const int n = 2, d = cfg.latent_dim;
    {
        Var mu = tp.constant(Tensor::zeros({n, d}));
        Var lv = tp.constant(Tensor::zeros({n, d}));
        Var t1 = sum_all(tp, mul(tp, mu, mu));
        Var t2 = sum_all(tp, exp_op(tp, lv));
        Var t3 = sum_all(tp, lv);
        Var kl = scale(tp,
                       add_scalar(tp, add_weighted(tp, add(tp, t1, t2), t3, 0.5f, -0.5f),
                                  -0.5f * static_cast<float>(n) * static_cast<float>(d)),
                       1.0f / n);
        CHECK(tp.val(kl).v[0] == 0.0f);
    }
    {
        // Single coordinate, mu = 1, logvar = 0 -> 0.5 (mu^2 + sigma^2 - 1 - log sigma^2)/1 = 0.5.
        Var mu = tp.constant(Tensor::from({1, 1}, {1.0f}));
        Var lv = tp.constant(Tensor::zeros({1, 1}));
        Var t1 = sum_all(tp, mul(tp, mu, mu));
        Var t2 = sum_all(tp, exp_op(tp, lv));
        Var t3 = sum_all(tp, lv);
        Var kl = add_scalar(tp, add_weighted(tp, add(tp, t1, t2), t3, 0.5f, -0.5f), -0.5f);
        CHECK(tp.val(kl).v[0] == doctest::Approx(0.5).epsilon(1e-7));
    }
}

TEST_CASE("KL term of the full objective is nonnegative on random models") {
    Rng rng(7);
    LabeledDataset x = tiny_corpus(6, 11);
    for (std::uint64_t seed = 0; seed < 4; ++seed) {
        Autoencoder ae = Autoencoder::init(AeConfig::mnist(), seed);
        Tape tp;
        BoundParams p(tp, ae.params(), false);
        Rng noise(seed);
        auto nodes = ae.recon_nodes(tp, p, tp.constant(x.images), true, &noise);
        CHECK(tp.val(nodes.kl).v[0] >= 0.0f);
        CHECK(tp.val(nodes.loss).v[0] ==
              doctest::Approx(tp.val(nodes.nll).v[0] + tp.val(nodes.kl).v[0]).epsilon(1e-6));
    }
}

TEST_CASE("channel scaling commutes with the convolution filters") {
    // conv(x;W) * gamma == conv(x; gamma*W) for beta = 0.
    Rng rng(13);
    Tensor x = Tensor::zeros({2, 3, 8, 8});
    for (Eigen::Index i = 0; i < x.v.size(); ++i) x.v[i] = rng.uniform(0, 1);
    Tensor w = Tensor::zeros({4, 3, 3, 3});
    for (Eigen::Index i = 0; i < w.v.size(); ++i) w.v[i] = rng.uniform(-0.5f, 0.5f);
    Tensor b = Tensor::zeros({4});
    Tensor gamma = Tensor::zeros({4});
    for (int c = 0; c < 4; ++c) gamma.v[c] = rng.uniform(0.5f, 2.0f);
    Tensor beta = Tensor::zeros({4});

    Tape tp;
    Var scaled_out = channel_affine(tp, conv2d(tp, tp.constant(x), tp.constant(w), tp.constant(b), 2, 1),
                                    tp.constant(gamma), tp.constant(beta));
    Tensor w_scaled = w;
    for (int co = 0; co < 4; ++co)
        for (int i = 0; i < 27; ++i) w_scaled.v[static_cast<Eigen::Index>(co) * 27 + i] *= gamma.v[co];
    Var scaled_filters = conv2d(tp, tp.constant(x), tp.constant(w_scaled), tp.constant(b), 2, 1);
    CHECK((tp.val(scaled_out).v - tp.val(scaled_filters).v).abs().maxCoeff() < 1e-5f);
}

TEST_CASE("finetune with zero epochs leaves outputs bit-identical") {
    Autoencoder ae = Autoencoder::init(AeConfig::mnist(), 21);
    LabeledDataset x = tiny_corpus(8, 22);
    LatentBatch before = ae.encode(x, false);
    const std::string snapshot = ae.params().serialize();
    auto stats = ae.finetune_scale_shift(x, 0, 1e-3f, 1);
    CHECK(stats.empty());
    CHECK(ae.params().serialize() == snapshot);
    LatentBatch after = ae.encode(x, false);
    CHECK((before.y.v == after.y.v).all());
}

TEST_CASE("doubling one gamma doubles that block's pre-activation output") {
    Autoencoder ae = Autoencoder::init(AeConfig::mnist(), 31);
    LabeledDataset x = tiny_corpus(4, 32);
    // Pre-activation of block 1 under gamma=1 vs gamma=2 (linearity of conv).
    auto block_pre = [&](float g) {
        Tape tp;
        BoundParams p(tp, ae.params(), false);
        Tensor gt = Tensor::full({16}, g);
        Var pre = channel_affine(tp, conv2d(tp, tp.constant(x.images), p["ae.enc1.w"], p["ae.enc1.b"], 2, 1),
                                 tp.constant(gt), tp.constant(Tensor::zeros({16})));
        return tp.val(pre);
    };
    Tensor one = block_pre(1.0f);
    Tensor two = block_pre(2.0f);
    CHECK((two.v - 2.0f * one.v).abs().maxCoeff() < 1e-5f);
}

TEST_CASE("finetune trains only scale/shift and dense heads; filters stay frozen") {
    Autoencoder ae = Autoencoder::init(AeConfig::mnist(), 41);
    LabeledDataset x = tiny_corpus(10, 42);
    std::unordered_map<std::string, std::string> before;
    for (const auto& name : ae.params().names()) {
        if (name.ends_with(".w") || name.ends_with(".b")) {
            ParamStore solo;
            solo.add(name, ae.params().at(name));
            before[name] = solo.serialize();
        }
    }
    auto stats = ae.finetune_scale_shift(x, 2, 1e-3f, 7);
    CHECK(stats.size() == 2);
    int frozen_checked = 0;
    for (const auto& [name, snap] : before) {
        if (name.rfind("ae.mu.", 0) == 0 || name.rfind("ae.lv.", 0) == 0 || name.rfind("ae.dec.in.", 0) == 0)
            continue; // dense heads are trainable
        ParamStore solo;
        solo.add(name, ae.params().at(name));
        CHECK(solo.serialize() == snap);
        ++frozen_checked;
    }
    CHECK(frozen_checked >= 12);
    // And the scale/shift parameters actually moved.
    bool moved = false;
    for (const auto& name : ae.params().names())
        if (name.ends_with(".g") && (ae.params().at(name).v != 1.0f).any()) moved = true;
    CHECK(moved);

    // Pushing a gradient at a frozen filter is a contract violation.
    CHECK_THROWS_AS(adam_step(ae.params(), {{"ae.enc1.w", Tensor::zeros({16, 1, 3, 3})}}, {}), ContractError);
}

TEST_CASE("pretrain epoch boundary, divergence context, checkpoint round trip") {
    Autoencoder ae = Autoencoder::init(AeConfig::mnist(), 51);
    LabeledDataset corpus = tiny_corpus(64, 52);
    const std::string init = ae.params().serialize();
    CHECK(ae.pretrain(corpus, 0, 1e-3f, 32, 1).empty());
    CHECK(ae.params().serialize() == init);

    auto stats = ae.pretrain(corpus, 1, 1e-3f, 32, 1);
    CHECK(stats.size() == 1);

    // Checkpoint round trip preserves the loss on a fixed batch.
    const std::string bytes = ae.params().serialize();
    Autoencoder restored(AeConfig::mnist(), ParamStore::load_from_string(bytes));
    auto a = ae.reconstruction_loss(corpus);
    auto b = restored.reconstruction_loss(corpus);
    CHECK(a.total == b.total);

    // Divergence reports the epoch.
    Autoencoder doomed = Autoencoder::init(AeConfig::mnist(), 53);
    try {
        doomed.pretrain(corpus, 1, 1e10f, 32, 1);
        // Either diverges at this rate or the run simply survives the epoch on
        // this tiny batch; the first path is the one under test.
    } catch (const TrainingError& e) {
        CHECK(std::string(e.what()).find("epoch") != std::string::npos);
    }
}

TEST_CASE("grad check through the full reconstruction objective") {
    AeConfig cfg = AeConfig::mnist();
    Autoencoder ae = Autoencoder::init(cfg, 61);
    // Fresh zero biases leave whole decoder feature maps exactly at the ReLU
    // kink, where central differences are meaningless; a short pretraining
    // pass moves activations into the smooth bulk first.
    ae.pretrain(tiny_corpus(32, 60), 2, 1e-3f, 16, 5);
    LabeledDataset x = tiny_corpus(2, 62);
    ae.set_finetune_trainable();
    auto f = [&](Tape& tp, BoundParams& p) {
        auto nodes = ae.recon_nodes(tp, p, tp.constant(x.images), false, nullptr);
        return nodes.loss;
    };
    auto res = grad_check(f, ae.params(), 5e-3f, 4, 63);
    CHECK(res.coords_checked > 0);
    CHECK(res.max_rel_err < 1e-3);
}
