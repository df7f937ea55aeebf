#include "es/attention.hpp"

#include <Eigen/QR>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "es/rng.hpp"

namespace es {

void AttnConfig::validate() const {
    if (heads < 1 || head_dim < 1) throw ParamError("attention: heads and head_dim must be >= 1");
    if (map_c < 1 || map_h < 1 || map_w < 1) throw ParamError("attention: bad map shape");
    if (mode == AttnMode::spatial) {
        if (patch < 1 || map_h % patch != 0 || map_w % patch != 0)
            throw ShapeError("attention: map extents must tile exactly by the patch size");
    }
}

std::vector<int> patchify_index(const AttnConfig& cfg) {
    cfg.validate();
    std::vector<int> index;
    index.reserve(static_cast<std::size_t>(cfg.tokens()) * static_cast<std::size_t>(cfg.token_dim()));
    auto flat = [&](int c, int y, int x) { return (c * cfg.map_h + y) * cfg.map_w + x; };
    if (cfg.mode == AttnMode::spatial) {
        for (int gy = 0; gy < cfg.grid_h(); ++gy)
            for (int gx = 0; gx < cfg.grid_w(); ++gx)
                for (int c = 0; c < cfg.map_c; ++c)
                    for (int py = 0; py < cfg.patch; ++py)
                        for (int px = 0; px < cfg.patch; ++px)
                            index.push_back(flat(c, gy * cfg.patch + py, gx * cfg.patch + px));
    } else {
        for (int row = 0; row < cfg.map_h; ++row)
            for (int c = 0; c < cfg.map_c; ++c)
                for (int x = 0; x < cfg.map_w; ++x) index.push_back(flat(c, row, x));
    }
    return index;
}

std::vector<int> unpatchify_index(const AttnConfig& cfg) {
    const std::vector<int> fwd = patchify_index(cfg);
    std::vector<int> inv(fwd.size());
    for (std::size_t i = 0; i < fwd.size(); ++i) inv[static_cast<std::size_t>(fwd[i])] = static_cast<int>(i);
    return inv;
}

PatchGrid patchify(const Tensor& map, int p) {
    if (map.shape.size() != 3) throw ShapeError("patchify: map must be (C,H,W)");
    AttnConfig cfg;
    cfg.mode = AttnMode::spatial;
    cfg.patch = p;
    cfg.map_c = map.shape[0];
    cfg.map_h = map.shape[1];
    cfg.map_w = map.shape[2];
    const auto index = patchify_index(cfg);
    PatchGrid out;
    out.gh = cfg.grid_h();
    out.gw = cfg.grid_w();
    out.tokens = Tensor::zeros({cfg.tokens(), cfg.token_dim()});
    for (std::size_t i = 0; i < index.size(); ++i) out.tokens.v[static_cast<Eigen::Index>(i)] = map.v[index[i]];
    return out;
}

Tensor unpatchify(const PatchGrid& grid, int c, int h, int w) {
    AttnConfig cfg;
    cfg.mode = AttnMode::spatial;
    cfg.map_c = c;
    cfg.map_h = h;
    cfg.map_w = w;
    if (grid.gh < 1 || h % grid.gh != 0) throw ShapeError("unpatchify: grid does not tile the map");
    cfg.patch = h / grid.gh;
    const auto index = patchify_index(cfg);
    if (static_cast<std::int64_t>(index.size()) != grid.tokens.size())
        throw ShapeError("unpatchify: token payload does not match the map size");
    Tensor out = Tensor::zeros({c, h, w});
    for (std::size_t i = 0; i < index.size(); ++i) out.v[index[i]] = grid.tokens.v[static_cast<Eigen::Index>(i)];
    return out;
}

Var patchify_var(Tape& tp, Var map, const AttnConfig& cfg) {
    return permute_gather(tp, map, patchify_index(cfg), {cfg.tokens(), cfg.token_dim()});
}

Var unpatchify_var(Tape& tp, Var tokens, const AttnConfig& cfg) {
    return permute_gather(tp, tokens, unpatchify_index(cfg), {cfg.map_c, cfg.map_h, cfg.map_w});
}

namespace {

Eigen::MatrixXd random_gaussian(int rows, int cols, Rng& rng) {
    Eigen::MatrixXd m(rows, cols);
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j) m(i, j) = rng.normal();
    return m;
}

Eigen::MatrixXd orthonormal_cols(int rows, int cols, Rng& rng) {
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(random_gaussian(rows, cols, rng));
    Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(rows, cols);
    return q;
}

Tensor to_tensor(const Eigen::MatrixXd& m) {
    Tensor t = Tensor::zeros({static_cast<int>(m.rows()), static_cast<int>(m.cols())});
    for (int i = 0; i < m.rows(); ++i)
        for (int j = 0; j < m.cols(); ++j) t.v[static_cast<Eigen::Index>(i) * m.cols() + j] = static_cast<float>(m(i, j));
    return t;
}

} // namespace

void init_attention_params(ParamStore& store, const AttnConfig& cfg, std::uint64_t seed, const std::string& prefix) {
    cfg.validate();
    const int e = cfg.embed_dim();
    const int td = cfg.token_dim();
    Rng rng(seed);
    if (td > e) throw ParamError("attention: embed dim must be >= token dim for the identity-preserving init");
    const Eigen::MatrixXd we = orthonormal_cols(e, td, rng);
    const Eigen::MatrixXd u = orthonormal_cols(e, e, rng);
    const Eigen::MatrixXd qk = 2.0 * orthonormal_cols(e, e, rng);
    const Eigen::MatrixXd wo = (u * we).transpose();
    store.add(prefix + ".we", to_tensor(we));
    store.add(prefix + ".be", Tensor::zeros({e}));
    store.add(prefix + ".wq", to_tensor(qk));
    store.add(prefix + ".wk", to_tensor(qk));
    store.add(prefix + ".wv", to_tensor(u));
    store.add(prefix + ".wo", to_tensor(wo));
    store.add(prefix + ".bo", Tensor::zeros({td}));
}

MhssaOut mhssa(Tape& tp, BoundParams& p, Var tokens, const AttnConfig& cfg, const std::string& prefix) {
    cfg.validate();
    const Shape& s = tp.shape(tokens);
    if (s.size() != 2 || s[1] != cfg.token_dim())
        throw ShapeError("mhssa: token grid " + shape_str(s) + " does not match token dim " +
                         std::to_string(cfg.token_dim()));
    const int hd = cfg.head_dim;
    Var e = dense(tp, tokens, p[prefix + ".we"], p[prefix + ".be"]);
    Var q = matmul_nt(tp, e, p[prefix + ".wq"]);
    Var k = matmul_nt(tp, e, p[prefix + ".wk"]);
    Var v = matmul_nt(tp, e, p[prefix + ".wv"]);
    MhssaOut out;
    std::vector<Var> heads;
    const float inv_sqrt = 1.0f / std::sqrt(static_cast<float>(hd));
    for (int j = 0; j < cfg.heads; ++j) {
        Var qj = slice_cols(tp, q, j * hd, hd);
        Var kj = slice_cols(tp, k, j * hd, hd);
        Var vj = slice_cols(tp, v, j * hd, hd);
        Var logits = scale(tp, matmul_nt(tp, qj, kj), inv_sqrt);
        Var aj = softmax_rows(tp, logits);
        out.head_attn.push_back(aj);
        heads.push_back(matmul(tp, aj, vj));
    }
    Var concat = concat_cols(tp, heads);
    out.attended = dense(tp, concat, p[prefix + ".wo"], p[prefix + ".bo"]);
    return out;
}

Tensor head_mass_map(const Tensor& attn, int gh, int gw) {
    if (attn.shape.size() != 2 || attn.shape[0] != attn.shape[1]) throw ShapeError("head_mass_map: attention must be square");
    const int t = attn.shape[0];
    if (t != gh * gw) throw ShapeError("head_mass_map: grid does not match token count");
    Tensor out = Tensor::zeros({gh, gw});
    double total = 0.0;
    for (int j = 0; j < t; ++j) {
        double col = 0.0;
        for (int i = 0; i < t; ++i) col += attn.v[static_cast<Eigen::Index>(i) * t + j];
        out.v[j] = static_cast<float>(col);
        total += col;
    }
    if (!(total > 0.0) || !std::isfinite(total)) throw NumericError("head_mass_map: degenerate attention mass");
    out.v /= static_cast<float>(total);
    return out;
}

FeatureSet extract_head_features(const std::vector<Tensor>& head_attns, int gh, int gw, int class_id, int index) {
    if (head_attns.empty()) throw ParamError("extract_head_features: need at least one head");
    FeatureSet fs;
    fs.class_id = class_id;
    fs.index = index;
    for (const Tensor& a : head_attns) fs.maps.push_back(head_mass_map(a, gh, gw));
    return fs;
}

CropBox attention_crop_box(const Tensor& mass, float q) {
    if (mass.shape.size() != 2) throw ShapeError("attention_crop: mass map must be 2-D");
    if (!(q > 0.0f) || q > 1.0f) throw ParamError("attention_crop: q must lie in (0,1]");
    const int gh = mass.shape[0], gw = mass.shape[1];
    // Argmax, first occurrence in row-major order.
    int best = 0;
    for (int i = 1; i < gh * gw; ++i)
        if (mass.v[i] > mass.v[best]) best = i;
    CropBox box{best / gw, best % gw, 1, 1};
    double total = 0.0;
    for (int i = 0; i < gh * gw; ++i) total += mass.v[i];
    auto box_mass = [&](const CropBox& b) {
        double acc = 0.0;
        for (int r = b.r0; r < b.r0 + b.h; ++r)
            for (int c = b.c0; c < b.c0 + b.w; ++c) acc += mass.v[static_cast<Eigen::Index>(r) * gw + c];
        return acc;
    };
    double cur = box_mass(box);
    const double target = static_cast<double>(q) * total;
    while (cur < target && !(box.h == gh && box.w == gw)) {
        // Gains in the fixed order up, left, down, right; strict max wins,
        // ties go to the earliest direction.
        double gain[4] = {-1.0, -1.0, -1.0, -1.0};
        if (box.r0 > 0) {
            gain[0] = 0.0;
            for (int c = box.c0; c < box.c0 + box.w; ++c) gain[0] += mass.v[static_cast<Eigen::Index>(box.r0 - 1) * gw + c];
        }
        if (box.c0 > 0) {
            gain[1] = 0.0;
            for (int r = box.r0; r < box.r0 + box.h; ++r) gain[1] += mass.v[static_cast<Eigen::Index>(r) * gw + box.c0 - 1];
        }
        if (box.r0 + box.h < gh) {
            gain[2] = 0.0;
            for (int c = box.c0; c < box.c0 + box.w; ++c) gain[2] += mass.v[static_cast<Eigen::Index>(box.r0 + box.h) * gw + c];
        }
        if (box.c0 + box.w < gw) {
            gain[3] = 0.0;
            for (int r = box.r0; r < box.r0 + box.h; ++r) gain[3] += mass.v[static_cast<Eigen::Index>(r) * gw + box.c0 + box.w];
        }
        int dir = -1;
        for (int d = 0; d < 4; ++d)
            if (gain[d] >= 0.0 && (dir < 0 || gain[d] > gain[dir])) dir = d;
        if (dir < 0) break;
        switch (dir) {
            case 0: box.r0 -= 1; box.h += 1; break;
            case 1: box.c0 -= 1; box.w += 1; break;
            case 2: box.h += 1; break;
            case 3: box.w += 1; break;
        }
        cur = box_mass(box);
    }
    // Minimum 2x2, clamped to the grid; same direction preference.
    while (box.h < std::min(2, gh)) {
        if (box.r0 > 0) box.r0 -= 1;
        box.h += 1;
    }
    while (box.w < std::min(2, gw)) {
        if (box.c0 > 0) box.c0 -= 1;
        box.w += 1;
    }
    if (box.r0 + box.h > gh) box.r0 = gh - box.h;
    if (box.c0 + box.w > gw) box.c0 = gw - box.w;
    return box;
}

void attention_crop(FeatureSet& fs, float q) {
    fs.crops.clear();
    for (const Tensor& m : fs.maps) fs.crops.push_back(attention_crop_box(m, q));
}

void dump_attention_pgm(const FeatureSet& fs, const std::string& dir, const std::string& stem) {
    std::filesystem::create_directories(dir);
    for (std::size_t h = 0; h < fs.maps.size(); ++h) {
        const Tensor& m = fs.maps[h];
        const float peak = std::max(1e-12f, m.v.maxCoeff());
        std::ofstream f(dir + "/" + stem + "_head" + std::to_string(h) + ".pgm", std::ios::binary);
        if (!f) throw FormatError("cannot open PGM for writing");
        f << "P5\n" << m.shape[1] << " " << m.shape[0] << "\n255\n";
        for (Eigen::Index i = 0; i < m.v.size(); ++i) {
            const unsigned char b = static_cast<unsigned char>(std::min(255.0f, 255.0f * m.v[i] / peak));
            f.write(reinterpret_cast<const char*>(&b), 1);
        }
    }
}

} // namespace es
