#include "es/synthesis.hpp"

#include <Eigen/Cholesky>

#include <cmath>

#include "es/nn_ops.hpp"
#include "es/rng.hpp"

namespace es {

void init_convt_params(ParamStore& store, const ConvTConfig& cfg, std::uint64_t seed, const std::string& prefix) {
    Rng rng(seed);
    const float s = 1.0f / std::sqrt(static_cast<float>(cfg.feat_dim * cfg.heads));
    for (int j = 0; j < cfg.heads; ++j) {
        Tensor w = Tensor::zeros({cfg.latent_dim, cfg.feat_dim});
        for (Eigen::Index i = 0; i < w.v.size(); ++i) w.v[i] = rng.uniform(-s, s);
        store.add(prefix + ".t" + std::to_string(j) + ".w", std::move(w));
        store.add(prefix + ".t" + std::to_string(j) + ".b", Tensor::zeros({cfg.latent_dim}));
    }
}

Eigen::MatrixXf normalized_adjacency(const Graph& g) {
    Eigen::MatrixXf a = Eigen::MatrixXf::Zero(g.n, g.n);
    std::vector<float> inv_sqrt_deg(static_cast<std::size_t>(g.n), 0.0f);
    for (int v = 0; v < g.n; ++v) {
        const int d = g.degree(v);
        inv_sqrt_deg[static_cast<std::size_t>(v)] = d > 0 ? 1.0f / std::sqrt(static_cast<float>(d)) : 0.0f;
    }
    for (int u = 0; u < g.n; ++u)
        for (int v = 0; v < g.n; ++v)
            if (g.edge(u, v))
                a(u, v) = inv_sqrt_deg[static_cast<std::size_t>(u)] * inv_sqrt_deg[static_cast<std::size_t>(v)];
    return a;
}

std::vector<Var> graph_mixed_features(Tape& tp, const std::vector<std::vector<Var>>& feats,
                                      const std::vector<int>& sel, const Eigen::MatrixXf& norm_adj) {
    const int L = static_cast<int>(sel.size());
    if (norm_adj.rows() != L) throw ShapeError("graph_mixed_features: graph size does not match head count");
    const int m = static_cast<int>(feats.size());
    std::vector<Var> out;
    out.reserve(static_cast<std::size_t>(L));
    for (int j = 0; j < L; ++j) {
        if (sel[static_cast<std::size_t>(j)] < 0 || sel[static_cast<std::size_t>(j)] >= m)
            throw ShapeError("graph_mixed_features: selection row out of range");
        Var gj = feats[static_cast<std::size_t>(sel[static_cast<std::size_t>(j)])][static_cast<std::size_t>(j)];
        for (int k = 0; k < L; ++k) {
            const float wkj = norm_adj(j, k);
            if (wkj != 0.0f)
                gj = add_weighted(tp, gj, feats[static_cast<std::size_t>(sel[static_cast<std::size_t>(k)])][static_cast<std::size_t>(k)], 1.0f, wkj);
        }
        out.push_back(gj);
    }
    return out;
}

Var synthesize_datapoint(Tape& tp, BoundParams& p, const std::vector<std::vector<Var>>& feats,
                         const std::vector<int>& sel, const CodeGraph& g, const ConvTConfig& cfg,
                         const std::string& prefix) {
    if (static_cast<int>(sel.size()) != cfg.heads) throw ShapeError("synthesize: selection length must equal heads");
    if (g.graph.n != cfg.heads) throw ShapeError("synthesize: code graph order must equal heads");
    if (feats.empty()) throw ShapeError("synthesize: empty feature matrix");
    const Eigen::MatrixXf adj = normalized_adjacency(g.graph);
    std::vector<Var> mixed = graph_mixed_features(tp, feats, sel, adj);
    Var acc;
    for (int j = 0; j < cfg.heads; ++j) {
        Var gj = reshape(tp, mixed[static_cast<std::size_t>(j)], {1, cfg.feat_dim});
        const std::string base = prefix + ".t" + std::to_string(j);
        Var yj = dense(tp, gj, p[base + ".w"], p[base + ".b"]);
        acc = j == 0 ? yj : add(tp, acc, yj);
    }
    return reshape(tp, acc, {cfg.latent_dim});
}

ExpandNodes expand(Tape& tp, BoundParams& p, Var y_class, const std::vector<std::vector<Var>>& feats,
                   const CodeGraph& g, int er, std::uint64_t seed, const ConvTConfig& cfg, int class_id,
                   const std::string& prefix) {
    const Shape& ys = tp.shape(y_class);
    if (ys.size() != 2 || ys[1] != cfg.latent_dim) throw ShapeError("expand: latent batch shape mismatch");
    const int m = ys[0];
    if (er < 1) throw ParamError("expand: expansion ratio must be >= 1");
    if (static_cast<int>(feats.size()) != m) throw ShapeError("expand: feature matrix rows must match batch");
    const int needed = (er - 1) * m;
    const std::uint64_t capacity =
        count_combinations(static_cast<std::uint64_t>(m), static_cast<std::uint64_t>(cfg.heads));
    if (static_cast<std::uint64_t>(needed) > capacity)
        throw CapacityError("expand: ER " + std::to_string(er) + " needs " + std::to_string(needed) +
                            " new combinations but m=" + std::to_string(m) + ", L=" + std::to_string(cfg.heads) +
                            " admits only " + std::to_string(capacity));
    ExpandNodes out;
    out.plan = needed > 0 ? selection_plan(m, cfg.heads, needed, seed) : std::vector<std::vector<int>>{};
    std::vector<Var> rows;
    rows.reserve(static_cast<std::size_t>(er) * static_cast<std::size_t>(m));
    for (int i = 0; i < m; ++i) rows.push_back(take_row(tp, y_class, i));
    for (const auto& sel : out.plan) rows.push_back(synthesize_datapoint(tp, p, feats, sel, g, cfg, prefix));
    out.yprime = stack_rows(tp, rows);
    out.labels.assign(rows.size(), class_id);
    return out;
}

void calibrate_convt(ParamStore& store, const Tensor& phi, const Tensor& targets, const ConvTConfig& cfg,
                     double ridge, const std::string& prefix) {
    if (phi.shape.size() != 2 || targets.shape.size() != 2 || phi.shape[0] != targets.shape[0])
        throw ShapeError("calibrate_convt: sample counts differ");
    const int n = phi.shape[0];
    const int fdim = cfg.heads * cfg.feat_dim;
    if (phi.shape[1] != fdim || targets.shape[1] != cfg.latent_dim)
        throw ShapeError("calibrate_convt: feature/target dims do not match the config");
    if (n < 1) throw ParamError("calibrate_convt: need at least one sample");
    const int cols = fdim + 1; // affine term
    Eigen::MatrixXd a(n, cols);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < fdim; ++j) a(i, j) = phi.v[static_cast<Eigen::Index>(i) * fdim + j];
        a(i, fdim) = 1.0;
    }
    Eigen::MatrixXd y(n, cfg.latent_dim);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < cfg.latent_dim; ++j) y(i, j) = targets.v[static_cast<Eigen::Index>(i) * cfg.latent_dim + j];
    Eigen::MatrixXd gram = a.transpose() * a;
    const double lam = ridge * std::max(1.0, gram.trace() / cols);
    gram += lam * Eigen::MatrixXd::Identity(cols, cols);
    const Eigen::MatrixXd x = gram.ldlt().solve(a.transpose() * y); // cols x d
    if (!x.allFinite()) throw NumericError("calibrate_convt: singular ridge system");
    for (int j = 0; j < cfg.heads; ++j) {
        const std::string base = prefix + ".t" + std::to_string(j);
        Tensor& w = store.at(base + ".w");
        for (int o = 0; o < cfg.latent_dim; ++o)
            for (int f = 0; f < cfg.feat_dim; ++f)
                w.v[static_cast<Eigen::Index>(o) * cfg.feat_dim + f] = static_cast<float>(x(j * cfg.feat_dim + f, o));
        Tensor& b = store.at(base + ".b");
        for (int o = 0; o < cfg.latent_dim; ++o)
            b.v[o] = static_cast<float>(x(fdim, o) / cfg.heads);
    }
}

} // namespace es
