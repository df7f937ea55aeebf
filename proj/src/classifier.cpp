#include "es/classifier.hpp"

#include <cmath>

#include "es/rng.hpp"

namespace es {

namespace {
constexpr int kKernel = 3;
constexpr int kStride = 2;
constexpr int kPad = 1;

Tensor fan_in_uniform(Shape shape, int fan_in, Rng& rng) {
    Tensor t = Tensor::zeros(std::move(shape));
    const float s = 1.0f / std::sqrt(static_cast<float>(fan_in));
    for (Eigen::Index i = 0; i < t.v.size(); ++i) t.v[i] = rng.uniform(-s, s);
    return t;
}
} // namespace

int ClassifierConfig::flat_dim() const {
    const int h = conv_out_extent(conv_out_extent(in_h, kKernel, kStride, kPad), kKernel, kStride, kPad);
    const int w = conv_out_extent(conv_out_extent(in_w, kKernel, kStride, kPad), kKernel, kStride, kPad);
    return c2 * h * w;
}

std::uint64_t ClassifierConfig::arch_hash() const {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (int x : {in_channels, in_h, in_w, classes, c1, c2}) {
        h ^= static_cast<std::uint64_t>(static_cast<std::uint32_t>(x));
        h *= 0x100000001b3ull;
    }
    return h;
}

void init_classifier_params(ParamStore& store, const ClassifierConfig& cfg, std::uint64_t seed,
                            const std::string& prefix) {
    Rng rng(seed);
    store.add(prefix + ".conv1.w", fan_in_uniform({cfg.c1, cfg.in_channels, kKernel, kKernel},
                                                  cfg.in_channels * kKernel * kKernel, rng));
    store.add(prefix + ".conv1.b", Tensor::zeros({cfg.c1}));
    store.add(prefix + ".conv2.w", fan_in_uniform({cfg.c2, cfg.c1, kKernel, kKernel}, cfg.c1 * kKernel * kKernel, rng));
    store.add(prefix + ".conv2.b", Tensor::zeros({cfg.c2}));
    const int flat = cfg.flat_dim();
    store.add(prefix + ".ln.g", Tensor::full({flat}, 1.0f));
    store.add(prefix + ".ln.b", Tensor::zeros({flat}));
    store.add(prefix + ".head.w", fan_in_uniform({cfg.classes, flat}, flat, rng));
    store.add(prefix + ".head.b", Tensor::zeros({cfg.classes}));
}

Var classifier_logits(Tape& tp, BoundParams& p, Var images, const ClassifierConfig& cfg, const std::string& prefix) {
    const Shape& s = tp.shape(images);
    if (s.size() != 4 || s[1] != cfg.in_channels || s[2] != cfg.in_h || s[3] != cfg.in_w)
        throw ShapeError("classifier: image batch " + shape_str(s) + " does not match the input spec");
    Var h1 = relu(tp, conv2d(tp, images, p[prefix + ".conv1.w"], p[prefix + ".conv1.b"], kStride, kPad));
    Var h2 = relu(tp, conv2d(tp, h1, p[prefix + ".conv2.w"], p[prefix + ".conv2.b"], kStride, kPad));
    Var flat = reshape(tp, h2, {s[0], cfg.flat_dim()});
    Var normed = layernorm_rows(tp, flat, p[prefix + ".ln.g"], p[prefix + ".ln.b"]);
    return dense(tp, normed, p[prefix + ".head.w"], p[prefix + ".head.b"]);
}

Classifier Classifier::init(const ClassifierConfig& cfg, std::uint64_t seed) {
    ParamStore store;
    init_classifier_params(store, cfg, seed);
    return Classifier(cfg, std::move(store));
}

void Classifier::train(const LabeledDataset& data, int epochs, float lr, int batch_size, std::uint64_t seed) {
    data.validate();
    if (data.count() == 0) throw ParamError("classifier train: empty dataset");
    if (data.class_count > cfg_.classes) throw LabelError("classifier train: more classes than heads");
    AdamOpts opts;
    opts.lr = lr;
    Rng root(seed);
    std::vector<int> order(static_cast<std::size_t>(data.count()));
    for (int i = 0; i < data.count(); ++i) order[static_cast<std::size_t>(i)] = i;
    for (int epoch = 1; epoch <= epochs; ++epoch) {
        Rng erng = root.fork(static_cast<std::uint64_t>(epoch));
        erng.shuffle(order);
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(batch_size)) {
            const int n = static_cast<int>(std::min(order.size() - start, static_cast<std::size_t>(batch_size)));
            std::vector<int> idx(order.begin() + static_cast<std::ptrdiff_t>(start),
                                 order.begin() + static_cast<std::ptrdiff_t>(start) + n);
            LabeledDataset batch = data.subset(idx);
            Tape tp;
            BoundParams p(tp, store_, true);
            Var logits = classifier_logits(tp, p, tp.constant(batch.images), cfg_);
            Var loss = cross_entropy_mean(tp, logits, batch.labels);
            if (!std::isfinite(tp.val(loss).v[0]))
                throw TrainingError("classifier diverged at epoch " + std::to_string(epoch));
            tp.backward(loss);
            adam_step(store_, p.grads(), opts);
        }
    }
}

std::vector<int> Classifier::predict(const LabeledDataset& data) const {
    std::vector<int> out;
    out.reserve(static_cast<std::size_t>(data.count()));
    auto& store = const_cast<ParamStore&>(store_);
    constexpr int kChunk = 256;
    for (int start = 0; start < data.count(); start += kChunk) {
        const int n = std::min(kChunk, data.count() - start);
        std::vector<int> idx(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) idx[static_cast<std::size_t>(i)] = start + i;
        LabeledDataset chunk = data.subset(idx);
        Tape tp;
        BoundParams p(tp, store, false);
        Var logits = classifier_logits(tp, p, tp.constant(chunk.images), cfg_);
        const Tensor& lv = tp.val(logits);
        for (int i = 0; i < n; ++i) {
            int best = 0;
            for (int c = 1; c < cfg_.classes; ++c)
                if (lv.v[static_cast<Eigen::Index>(i) * cfg_.classes + c] >
                    lv.v[static_cast<Eigen::Index>(i) * cfg_.classes + best])
                    best = c;
            out.push_back(best);
        }
    }
    return out;
}

double Classifier::evaluate(const LabeledDataset& test) const {
    test.validate();
    if (test.count() == 0) throw ParamError("evaluate: empty test set");
    const std::vector<int> pred = predict(test);
    int correct = 0;
    for (int i = 0; i < test.count(); ++i)
        if (pred[static_cast<std::size_t>(i)] == test.labels[static_cast<std::size_t>(i)]) ++correct;
    return 100.0 * correct / test.count();
}

} // namespace es
