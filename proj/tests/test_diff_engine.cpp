#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <sstream>

#include "es/grad_check.hpp"
#include "es/nn_ops.hpp"
#include "es/param_store.hpp"
#include "es/rng.hpp"
#include "oracles/naive_conv.hpp"

using namespace es;

namespace {

Tensor random_tensor(Shape s, Rng& rng, float lo = -1.0f, float hi = 1.0f) {
    Tensor t = Tensor::zeros(std::move(s));
    for (Eigen::Index i = 0; i < t.v.size(); ++i) t.v[i] = rng.uniform(lo, hi);
    return t;
}

} // namespace

TEST_CASE("conv2d identity kernel passes input through") {
    Rng rng(1);
    Tape tp;
    Var x = tp.constant(random_tensor({2, 1, 5, 5}, rng));
    Var w = tp.constant(Tensor::full({1, 1, 1, 1}, 1.0f));
    Var b = tp.constant(Tensor::zeros({1}));
    Var y = conv2d(tp, x, w, b, 1, 0);
    CHECK(tp.val(y).shape == Shape{2, 1, 5, 5});
    CHECK((tp.val(y).v == tp.val(x).v).all());
}

TEST_CASE("conv2d of zero input equals broadcast bias") {
    Tape tp;
    Var x = tp.constant(Tensor::zeros({1, 2, 4, 4}));
    Var w = tp.constant(Tensor::full({3, 2, 3, 3}, 0.7f));
    Var b = tp.constant(Tensor::from({3}, {1.5f, -2.0f, 0.25f}));
    Var y = conv2d(tp, x, w, b, 1, 1);
    const Tensor& out = tp.val(y);
    for (int co = 0; co < 3; ++co)
        for (int h = 0; h < 4; ++h)
            for (int ww = 0; ww < 4; ++ww) CHECK(out.at4(0, co, h, ww) == tp.val(b).v[co]);
}

TEST_CASE("conv2d matches the naive loop oracle bit for bit") {
    Rng rng(7);
    // The spec example shape plus randomized shapes up to 2x3x8x8.
    struct Case {
        int n, ci, h, w, co, k, stride, pad;
    };
    std::vector<Case> cases = {{1, 1, 4, 4, 1, 2, 2, 0}};
    for (int t = 0; t < 24; ++t) {
        const int k = 1 + rng.below_int(3);
        const int h = k + rng.below_int(8 - k + 1);
        const int w = k + rng.below_int(8 - k + 1);
        cases.push_back({1 + rng.below_int(2), 1 + rng.below_int(3), h, w, 1 + rng.below_int(3), k,
                         1 + rng.below_int(2), rng.below_int(2)});
    }
    for (const Case& c : cases) {
        Tensor in = random_tensor({c.n, c.ci, c.h, c.w}, rng);
        Tensor w = random_tensor({c.co, c.ci, c.k, c.k}, rng);
        Tensor b = random_tensor({c.co}, rng);
        Tensor expect = oracles::naive_conv2d(in, w, b, c.stride, c.pad);
        Tape tp;
        Var y = conv2d(tp, tp.constant(in), tp.constant(w), tp.constant(b), c.stride, c.pad);
        REQUIRE(tp.val(y).shape == expect.shape);
        CHECK((tp.val(y).v == expect.v).all());
    }
}

TEST_CASE("conv_transpose2d matches the gather oracle bit for bit") {
    Rng rng(11);
    for (int t = 0; t < 16; ++t) {
        const int stride = 1 + rng.below_int(2);
        const int k = 2 + rng.below_int(2);
        const int pad = rng.below_int(2);
        const int out_pad = stride > 1 ? rng.below_int(stride) : 0;
        const int n = 1 + rng.below_int(2), ci = 1 + rng.below_int(3), co = 1 + rng.below_int(3);
        const int hi = 2 + rng.below_int(4), wi = 2 + rng.below_int(4);
        if ((hi - 1) * stride - 2 * pad + k + out_pad < 1) continue;
        Tensor in = random_tensor({n, ci, hi, wi}, rng);
        Tensor w = random_tensor({ci, co, k, k}, rng);
        Tensor b = random_tensor({co}, rng);
        Tensor expect = oracles::naive_conv_transpose2d(in, w, b, stride, pad, out_pad);
        Tape tp;
        Var y = conv_transpose2d(tp, tp.constant(in), tp.constant(w), tp.constant(b), stride, pad, out_pad);
        REQUIRE(tp.val(y).shape == expect.shape);
        CHECK((tp.val(y).v == expect.v).all());
    }
}

TEST_CASE("conv2d rejects mismatched shapes") {
    Tape tp;
    Var x = tp.constant(Tensor::zeros({1, 2, 4, 4}));
    Var w = tp.constant(Tensor::zeros({3, 1, 3, 3}));
    Var b = tp.constant(Tensor::zeros({3}));
    CHECK_THROWS_AS((void)conv2d(tp, x, w, b, 1, 1), ShapeError);
}

TEST_CASE("grad_check on sum of squares") {
    ParamStore params;
    Rng rng(3);
    params.add("x", random_tensor({4, 3}, rng, 0.5f, 1.5f));
    auto f = [](Tape& tp, BoundParams& p) { return sum_all(tp, mul(tp, p["x"], p["x"])); };
    auto res = grad_check(f, params, 1e-2f, 8, 1);
    CHECK(res.coords_checked > 0);
    CHECK(res.max_rel_err < 1e-4);
}

TEST_CASE("grad_check on conv -> softmax -> cross-entropy composite") {
    ParamStore params;
    Rng rng(5);
    params.add("w", random_tensor({2, 1, 2, 2}, rng));
    params.add("b", random_tensor({2}, rng));
    params.add("x", random_tensor({2, 1, 3, 3}, rng));
    const std::vector<int> labels = {0, 1};
    auto f = [&labels](Tape& tp, BoundParams& p) {
        Var y = conv2d(tp, p["x"], p["w"], p["b"], 1, 0);
        Var flat = reshape(tp, y, {2, 8});
        Var logits = slice_cols(tp, flat, 0, 2);
        return cross_entropy_mean(tp, logits, labels);
    };
    auto res = grad_check(f, params, 1e-3f, 8, 2);
    CHECK(res.max_rel_err < 1e-3);
}

TEST_CASE("grad_check of a constant objective is exactly zero") {
    ParamStore params;
    params.add("x", Tensor::full({3}, 0.5f));
    auto f = [](Tape& tp, BoundParams& p) {
        (void)p["x"];
        return tp.leaf(Tensor::scalar(2.0f), true);
    };
    auto res = grad_check(f, params, 1e-3f, 4, 3);
    CHECK(res.max_rel_err == 0.0);
}

TEST_CASE("primitive gradients pass central differences") {
    Rng rng(17);
    struct Named {
        const char* name;
        std::function<Var(Tape&, BoundParams&)> f;
        float eps = 1e-2f;
    };
    ParamStore params;
    params.add("x", random_tensor({3, 4}, rng));
    params.add("w", random_tensor({5, 4}, rng));
    params.add("b", random_tensor({5}, rng));
    params.add("g", random_tensor({4}, rng, 0.5f, 1.5f));
    params.add("h", random_tensor({4}, rng, -0.5f, 0.5f));
    params.add("img", random_tensor({1, 2, 4, 4}, rng));
    params.add("cw", random_tensor({3, 2, 3, 3}, rng));
    params.add("cb", random_tensor({3}, rng));
    params.add("tw", random_tensor({2, 3, 3, 3}, rng));
    params.add("tb", random_tensor({3}, rng));
    params.add("cg", random_tensor({2}, rng, 0.5f, 1.5f));
    params.add("cbeta", random_tensor({2}, rng));

    std::vector<Named> cases;
    cases.push_back({"dense", [](Tape& tp, BoundParams& p) { return sum_all(tp, relu(tp, dense(tp, p["x"], p["w"], p["b"]))); }});
    cases.push_back({"softmax", [](Tape& tp, BoundParams& p) {
                         Var s = softmax_rows(tp, p["x"]);
                         return sum_sq_diff(tp, s, scale(tp, p["x"], 0.0f));
                     }});
    cases.push_back({"layernorm",
                     [](Tape& tp, BoundParams& p) {
                         return sum_all(tp, sigmoid(tp, layernorm_rows(tp, p["x"], p["g"], p["h"])));
                     },
                     5e-3f});
    cases.push_back({"conv", [](Tape& tp, BoundParams& p) {
                         return mean_all(tp, sigmoid(tp, conv2d(tp, p["img"], p["cw"], p["cb"], 2, 1)));
                     }});
    cases.push_back({"convt", [](Tape& tp, BoundParams& p) {
                         return mean_all(tp, sigmoid(tp, conv_transpose2d(tp, p["img"], p["tw"], p["tb"], 2, 1, 1)));
                     }});
    cases.push_back({"channel_affine", [](Tape& tp, BoundParams& p) {
                         return sum_all(tp, sigmoid(tp, channel_affine(tp, p["img"], p["cg"], p["cbeta"])));
                     }});
    cases.push_back({"matmul_chain", [](Tape& tp, BoundParams& p) {
                         Var a = matmul_nt(tp, p["x"], p["w"]);
                         Var s = softmax_rows(tp, a);
                         Var c = matmul_tn(tp, s, p["x"]);
                         return sum_all(tp, mul(tp, c, c));
                     }});
    cases.push_back({"crop_resize", [](Tape& tp, BoundParams& p) {
                         Var m = reshape(tp, p["img"], {2, 4, 4});
                         Var c = crop_resize_bilinear(tp, m, 1, 0, 3, 3, 4, 4);
                         return sum_all(tp, mul(tp, c, c));
                     }});
    cases.push_back({"mean_center", [](Tape& tp, BoundParams& p) {
                         Var mu = mean_rows(tp, p["x"]);
                         Var c = sub_row_broadcast(tp, p["x"], mu);
                         Var cov = matmul_tn(tp, c, c);
                         return sum_all(tp, mul(tp, cov, cov));
                     }});
    for (auto& c : cases) {
        INFO(std::string(c.name));
        auto res = grad_check(c.f, params, c.eps, 6, 23);
        CHECK(res.max_rel_err < 1e-3);
    }
}

TEST_CASE("adam leaves parameters unchanged under zero gradient") {
    ParamStore store;
    store.add("w", Tensor::from({2}, {0.3f, -0.2f}));
    const std::string before = store.serialize();
    adam_step(store, {{"w", Tensor::zeros({2})}}, {});
    CHECK(store.serialize() == before);
}

TEST_CASE("adam single step is bounded by the learning rate") {
    ParamStore store;
    store.add("w", Tensor::zeros({1}));
    AdamOpts opts;
    opts.lr = 0.1f;
    adam_step(store, {{"w", Tensor::full({1}, 1.0f)}}, opts);
    const float w = store.at("w").v[0];
    CHECK(w < 0.0f);
    CHECK(std::abs(w) <= 0.1f + 1e-7f);
}

TEST_CASE("adam runs replay bit-identically") {
    auto run = [] {
        ParamStore store;
        Rng rng(99);
        store.add("a", random_tensor({3, 3}, rng));
        store.add("b", random_tensor({3}, rng));
        for (int step = 0; step < 5; ++step) {
            std::unordered_map<std::string, Tensor> grads;
            grads.emplace("a", random_tensor({3, 3}, rng));
            grads.emplace("b", random_tensor({3}, rng));
            adam_step(store, grads, {});
        }
        return store.serialize();
    };
    CHECK(run() == run());
}

TEST_CASE("adam refuses frozen and unknown parameters") {
    ParamStore store;
    store.add("w", Tensor::zeros({1}));
    store.set_trainable("w", false);
    CHECK_THROWS_AS(adam_step(store, {{"w", Tensor::full({1}, 1.0f)}}, {}), ContractError);
    CHECK_THROWS_AS(adam_step(store, {{"zz", Tensor::full({1}, 1.0f)}}, {}), ParamError);
    CHECK_THROWS_AS(adam_step(store, {{"w", Tensor::zeros({2})}}, {}), Error);
}

TEST_CASE("checkpoint round-trips and rejects bad magic") {
    ParamStore store;
    Rng rng(41);
    store.add("enc.w", random_tensor({2, 3}, rng));
    store.add("dec.b", random_tensor({4}, rng));
    const std::string bytes = store.serialize();
    std::istringstream is(bytes);
    ParamStore back = ParamStore::load(is);
    CHECK(back.serialize() == bytes);

    std::string corrupt = bytes;
    corrupt[0] = 'X';
    std::istringstream bad(corrupt);
    CHECK_THROWS_AS(ParamStore::load(bad), FormatError);
}

TEST_CASE("finite checks flag NaN outputs") {
    set_finite_checks(true);
    Tape tp;
    Var x = tp.constant(Tensor::from({1}, {-1.0f}));
    bool threw = false;
    try {
        Var l = exp_op(tp, scale(tp, x, -1e10f)); // exp of huge -> inf... use log of negative instead
        (void)l;
    } catch (const NumericError&) {
        threw = true;
    }
    // exp(1e10) overflows to inf, which the checked mode rejects.
    CHECK(threw);
    set_finite_checks(false);
}
