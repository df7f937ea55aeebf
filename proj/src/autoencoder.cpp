#include "es/autoencoder.hpp"

#include <cmath>

namespace es {

namespace {

Tensor fan_in_uniform(Shape shape, int fan_in, Rng& rng) {
    Tensor t = Tensor::zeros(std::move(shape));
    const float s = 1.0f / std::sqrt(static_cast<float>(fan_in));
    for (Eigen::Index i = 0; i < t.v.size(); ++i) t.v[i] = rng.uniform(-s, s);
    return t;
}

Tensor noise_like(Shape shape, Rng& rng) {
    Tensor t = Tensor::zeros(std::move(shape));
    for (Eigen::Index i = 0; i < t.v.size(); ++i) t.v[i] = rng.normal();
    return t;
}

constexpr int kKernel = 3;
constexpr int kStride = 2;
constexpr int kPad = 1;

} // namespace

AeConfig AeConfig::mnist() { return AeConfig{}; }

AeConfig AeConfig::cifar10() {
    AeConfig c;
    c.in_channels = 3;
    c.in_h = c.in_w = 32;
    c.channels = {32, 64, 128};
    c.latent_dim = 128;
    return c;
}

int AeConfig::h_after(int block) const {
    int h = in_h;
    for (int i = 0; i < block; ++i) h = conv_out_extent(h, kKernel, kStride, kPad);
    return h;
}

int AeConfig::w_after(int block) const {
    int w = in_w;
    for (int i = 0; i < block; ++i) w = conv_out_extent(w, kKernel, kStride, kPad);
    return w;
}

Autoencoder::Autoencoder(AeConfig cfg, ParamStore store) : cfg_(cfg), store_(std::move(store)) {
    if (cfg_.latent_dim >= cfg_.in_channels * cfg_.in_h * cfg_.in_w)
        throw ParamError("latent dim must be smaller than the image dim");
    // Transposed-conv output padding so the decoder mirrors the encoder sizes.
    const int sizes_in[3] = {cfg_.h_after(3), cfg_.h_after(2), cfg_.h_after(1)};
    const int sizes_out[3] = {cfg_.h_after(2), cfg_.h_after(1), cfg_.in_h};
    for (int i = 0; i < 3; ++i) {
        const int natural = (sizes_in[i] - 1) * kStride - 2 * kPad + kKernel;
        const int op = sizes_out[i] - natural;
        if (op < 0 || op >= kStride)
            throw ParamError("decoder cannot mirror encoder extents for this image size");
        out_pads_[static_cast<std::size_t>(i)] = op;
    }
    ensure_skip_params();
}

Autoencoder Autoencoder::init(const AeConfig& cfg, std::uint64_t seed) {
    ParamStore store;
    Rng rng(seed);
    const int c0 = cfg.in_channels, c1 = cfg.channels[0], c2 = cfg.channels[1], c3 = cfg.channels[2];
    auto add_conv = [&](const std::string& name, int co, int ci) {
        store.add(name + ".w", fan_in_uniform({co, ci, kKernel, kKernel}, ci * kKernel * kKernel, rng));
        store.add(name + ".b", Tensor::zeros({co}));
        store.add(name + ".g", Tensor::full({co}, 1.0f));
        store.add(name + ".bt", Tensor::zeros({co}));
    };
    auto add_convt = [&](const std::string& name, int ci, int co) {
        store.add(name + ".w", fan_in_uniform({ci, co, kKernel, kKernel}, ci * kKernel * kKernel, rng));
        store.add(name + ".b", Tensor::zeros({co}));
        store.add(name + ".g", Tensor::full({co}, 1.0f));
        store.add(name + ".bt", Tensor::zeros({co}));
    };
    add_conv("ae.enc1", c1, c0);
    add_conv("ae.enc2", c2, c1);
    add_conv("ae.enc3", c3, c2);
    const int flat = cfg.flat_dim();
    store.add("ae.mu.w", fan_in_uniform({cfg.latent_dim, flat}, flat, rng));
    store.add("ae.mu.b", Tensor::zeros({cfg.latent_dim}));
    store.add("ae.lv.w", fan_in_uniform({cfg.latent_dim, flat}, flat, rng));
    store.add("ae.lv.b", Tensor::zeros({cfg.latent_dim}));
    store.add("ae.dec.in.w", fan_in_uniform({flat, cfg.latent_dim}, cfg.latent_dim, rng));
    store.add("ae.dec.in.b", Tensor::zeros({flat}));
    add_convt("ae.dec1", c3, c2);
    add_convt("ae.dec2", c2, c1);
    add_convt("ae.dec3", c1, c0);
    return Autoencoder(cfg, std::move(store));
}

void Autoencoder::ensure_skip_params() {
    if (!cfg_.skips) return;
    if (!store_.has("ae.skip1.gate")) store_.add("ae.skip1.gate", Tensor::zeros({cfg_.channels[0]}));
    if (!store_.has("ae.skip2.gate")) store_.add("ae.skip2.gate", Tensor::zeros({cfg_.channels[1]}));
}

Autoencoder::EncNodes Autoencoder::encode_nodes(Tape& tp, BoundParams& p, Var images, bool sample, Rng* noise) const {
    const Shape& s = tp.shape(images);
    if (s.size() != 4 || s[1] != cfg_.in_channels || s[2] != cfg_.in_h || s[3] != cfg_.in_w)
        throw ShapeError("encode: image batch " + shape_str(s) + " does not match the model input spec");
    if (s[0] == 0) throw ParamError("encode: empty batch");
    auto block = [&](Var x, const std::string& name) {
        Var y = conv2d(tp, x, p[name + ".w"], p[name + ".b"], kStride, kPad);
        y = channel_affine(tp, y, p[name + ".g"], p[name + ".bt"]);
        return relu(tp, y);
    };
    EncNodes out;
    Var h1 = block(images, "ae.enc1");
    Var h2 = block(h1, "ae.enc2");
    Var h3 = block(h2, "ae.enc3");
    out.skip1 = h1;
    out.skip2 = h2;
    Var flat = reshape(tp, h3, {s[0], cfg_.flat_dim()});
    out.mu = dense(tp, flat, p["ae.mu.w"], p["ae.mu.b"]);
    out.logvar = dense(tp, flat, p["ae.lv.w"], p["ae.lv.b"]);
    if (sample) {
        if (!noise) throw ParamError("encode: sampling requested without a noise stream");
        Var eps = tp.constant(noise_like({s[0], cfg_.latent_dim}, *noise));
        Var sigma = exp_op(tp, scale(tp, out.logvar, 0.5f));
        out.z = add(tp, out.mu, mul(tp, sigma, eps));
    } else {
        out.z = out.mu;
    }
    return out;
}

Var Autoencoder::decode_nodes(Tape& tp, BoundParams& p, Var latents, const EncNodes* enc) const {
    const Shape& s = tp.shape(latents);
    if (s.size() != 2 || s[1] != cfg_.latent_dim)
        throw ShapeError("decode: latent batch " + shape_str(s) + " does not match latent dim " +
                         std::to_string(cfg_.latent_dim));
    const int n = s[0];
    Var x = relu(tp, dense(tp, latents, p["ae.dec.in.w"], p["ae.dec.in.b"]));
    x = reshape(tp, x, {n, cfg_.channels[2], cfg_.h_after(3), cfg_.w_after(3)});
    auto blockt = [&](Var in, const std::string& name, int out_pad, bool last) {
        Var y = conv_transpose2d(tp, in, p[name + ".w"], p[name + ".b"], kStride, kPad, out_pad);
        y = channel_affine(tp, y, p[name + ".g"], p[name + ".bt"]);
        return last ? sigmoid(tp, y) : relu(tp, y);
    };
    Var d1 = blockt(x, "ae.dec1", out_pads_[0], false);
    if (cfg_.skips && enc) {
        Var zeros = tp.constant(Tensor::zeros({cfg_.channels[1]}));
        d1 = add(tp, d1, channel_affine(tp, enc->skip2, p["ae.skip2.gate"], zeros));
    }
    Var d2 = blockt(d1, "ae.dec2", out_pads_[1], false);
    if (cfg_.skips && enc) {
        Var zeros = tp.constant(Tensor::zeros({cfg_.channels[0]}));
        d2 = add(tp, d2, channel_affine(tp, enc->skip1, p["ae.skip1.gate"], zeros));
    }
    return blockt(d2, "ae.dec3", out_pads_[2], true);
}

Autoencoder::ReconNodes Autoencoder::recon_nodes(Tape& tp, BoundParams& p, Var images, bool sample, Rng* noise) const {
    const int n = tp.shape(images)[0];
    EncNodes enc = encode_nodes(tp, p, images, sample, noise);
    Var decoded = decode_nodes(tp, p, enc.z, &enc);
    ReconNodes out;
    out.nll = scale(tp, sum_sq_diff(tp, decoded, images), 0.5f / static_cast<float>(n));
    const int d = cfg_.latent_dim;
    Var t1 = sum_all(tp, mul(tp, enc.mu, enc.mu));
    Var t2 = sum_all(tp, exp_op(tp, enc.logvar));
    Var t3 = sum_all(tp, enc.logvar);
    Var kl_sum = add_scalar(tp, add_weighted(tp, add(tp, t1, t2), t3, 0.5f, -0.5f),
                            -0.5f * static_cast<float>(n) * static_cast<float>(d));
    out.kl = scale(tp, kl_sum, 1.0f / static_cast<float>(n));
    out.loss = add(tp, out.nll, out.kl);
    return out;
}

LatentBatch Autoencoder::encode(const LabeledDataset& x, bool sample, std::uint64_t seed) const {
    x.validate();
    if (x.count() == 0) throw ParamError("encode: empty dataset");
    LatentBatch out;
    out.y = Tensor::zeros({x.count(), cfg_.latent_dim});
    out.labels = x.labels;
    out.class_count = x.class_count;
    out.sampled = sample;
    Rng noise(seed);
    constexpr int kChunk = 256;
    // const_cast is safe: BoundParams only reads when with_grads is off.
    auto& store = const_cast<ParamStore&>(store_);
    for (int start = 0; start < x.count(); start += kChunk) {
        const int n = std::min(kChunk, x.count() - start);
        std::vector<int> idx(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) idx[static_cast<std::size_t>(i)] = start + i;
        LabeledDataset chunk = x.subset(idx);
        Tape tp;
        BoundParams p(tp, store, false);
        EncNodes enc = encode_nodes(tp, p, tp.constant(chunk.images), sample, &noise);
        out.y.v.segment(static_cast<Eigen::Index>(start) * cfg_.latent_dim,
                        static_cast<Eigen::Index>(n) * cfg_.latent_dim) = tp.val(enc.z).v;
    }
    if (!out.y.all_finite()) throw NumericError("encode produced non-finite latents");
    return out;
}

LabeledDataset Autoencoder::decode(const LatentBatch& y) const {
    if (y.rows() == 0) throw ParamError("decode: empty latent batch");
    if (y.dim() != cfg_.latent_dim) throw ShapeError("decode: latent dim mismatch");
    LabeledDataset out;
    out.images = Tensor::zeros({y.rows(), cfg_.in_channels, cfg_.in_h, cfg_.in_w});
    out.labels = y.labels;
    out.class_count = y.class_count;
    out.role = LabeledDataset::Role::expanded;
    auto& store = const_cast<ParamStore&>(store_);
    constexpr int kChunk = 256;
    const std::int64_t item = out.item_size();
    for (int start = 0; start < y.rows(); start += kChunk) {
        const int n = std::min(kChunk, y.rows() - start);
        Tensor latents = Tensor::zeros({n, cfg_.latent_dim});
        latents.v = y.y.v.segment(static_cast<Eigen::Index>(start) * cfg_.latent_dim,
                                  static_cast<Eigen::Index>(n) * cfg_.latent_dim);
        Tape tp;
        BoundParams p(tp, store, false);
        Var imgs = decode_nodes(tp, p, tp.constant(std::move(latents)), nullptr);
        out.images.v.segment(static_cast<Eigen::Index>(start) * item, static_cast<Eigen::Index>(n) * item) =
            tp.val(imgs).v;
    }
    out.validate();
    return out;
}

Autoencoder::ReconStats Autoencoder::reconstruction_loss(const LabeledDataset& x, bool sample,
                                                         std::uint64_t seed) const {
    x.validate();
    if (x.count() == 0) throw ParamError("reconstruction_loss: empty dataset");
    Rng noise(seed);
    auto& store = const_cast<ParamStore&>(store_);
    Tape tp;
    BoundParams p(tp, store, false);
    ReconNodes nodes = recon_nodes(tp, p, tp.constant(x.images), sample, &noise);
    ReconStats out;
    out.nll = tp.val(nodes.nll).v[0];
    out.kl = tp.val(nodes.kl).v[0];
    out.total = tp.val(nodes.loss).v[0];
    if (!std::isfinite(out.total)) throw NumericError("reconstruction loss is non-finite");
    return out;
}

void Autoencoder::set_pretrain_trainable() {
    store_.set_trainable_prefix("ae.", true);
    for (const auto& name : store_.names()) {
        if (name.size() > 2 && (name.ends_with(".g") || name.ends_with(".bt"))) store_.set_trainable(name, false);
        if (name.find("skip") != std::string::npos) store_.set_trainable(name, false);
    }
}

void Autoencoder::set_finetune_trainable() {
    store_.set_trainable_prefix("ae.", false);
    for (const auto& name : store_.names()) {
        const bool scale_shift = name.ends_with(".g") || name.ends_with(".bt");
        const bool dense_head = name.rfind("ae.mu.", 0) == 0 || name.rfind("ae.lv.", 0) == 0 ||
                                name.rfind("ae.dec.in.", 0) == 0;
        const bool gate = name.find("skip") != std::string::npos;
        if (scale_shift || dense_head || gate) store_.set_trainable(name, true);
    }
}

std::vector<Autoencoder::EpochStats> Autoencoder::train_loop(const LabeledDataset& data, int epochs, float lr,
                                                             int batch_size, std::uint64_t seed, const char* what) {
    data.validate();
    if (data.count() < 1) throw ParamError(std::string(what) + ": empty dataset");
    if (batch_size < 1) throw ParamError(std::string(what) + ": batch size must be >= 1");
    std::vector<EpochStats> stats;
    Rng root(seed);
    AdamOpts opts;
    opts.lr = lr;
    std::vector<int> order(static_cast<std::size_t>(data.count()));
    for (int i = 0; i < data.count(); ++i) order[static_cast<std::size_t>(i)] = i;
    for (int epoch = 1; epoch <= epochs; ++epoch) {
        Rng erng = root.fork(static_cast<std::uint64_t>(epoch));
        erng.shuffle(order);
        Rng noise = root.fork(0x9000ull + static_cast<std::uint64_t>(epoch));
        double nll = 0.0, kl = 0.0, total = 0.0;
        int seen = 0;
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(batch_size)) {
            const int n = static_cast<int>(std::min(order.size() - start, static_cast<std::size_t>(batch_size)));
            std::vector<int> idx(order.begin() + static_cast<std::ptrdiff_t>(start),
                                 order.begin() + static_cast<std::ptrdiff_t>(start) + n);
            LabeledDataset batch = data.subset(idx);
            Tape tp;
            BoundParams p(tp, store_, true);
            ReconNodes nodes = recon_nodes(tp, p, tp.constant(batch.images), true, &noise);
            const double lt = tp.val(nodes.loss).v[0];
            if (!std::isfinite(lt))
                throw TrainingError(std::string(what) + " diverged (non-finite loss) at epoch " + std::to_string(epoch));
            nll += static_cast<double>(tp.val(nodes.nll).v[0]) * n;
            kl += static_cast<double>(tp.val(nodes.kl).v[0]) * n;
            total += lt * n;
            seen += n;
            tp.backward(nodes.loss);
            adam_step(store_, p.grads(), opts);
        }
        stats.push_back({epoch, nll / seen, kl / seen, total / seen});
    }
    return stats;
}

std::vector<Autoencoder::EpochStats> Autoencoder::pretrain(const LabeledDataset& corpus, int epochs, float lr,
                                                           int batch_size, std::uint64_t seed) {
    if (corpus.count() < batch_size && epochs > 0)
        throw ParamError("pretrain: corpus smaller than one batch");
    set_pretrain_trainable();
    return train_loop(corpus, epochs, lr, batch_size, seed, "pretrain");
}

std::vector<Autoencoder::EpochStats> Autoencoder::finetune_scale_shift(const LabeledDataset& x, int epochs, float lr,
                                                                       std::uint64_t seed, int batch_size) {
    set_finetune_trainable();
    return train_loop(x, epochs, lr, std::min(batch_size, std::max(1, x.count())), seed, "finetune");
}

} // namespace es
