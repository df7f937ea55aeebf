#pragma once

#include <string>
#include <vector>

#include "es/graph.hpp"
#include "es/param_store.hpp"
#include "es/selection.hpp"

namespace es {

/// Per-head feature-to-latent conversion transforms ("ConvT"): learned linear
/// maps applied after one round of degree-normalized adjacency mixing on the
/// code graph.
struct ConvTConfig {
    int heads = 4;
    int feat_dim = 16;   // flattened cropped-feature length
    int latent_dim = 64;
};

void init_convt_params(ParamStore& store, const ConvTConfig& cfg, std::uint64_t seed,
                       const std::string& prefix = "convt");

/// D^{-1/2} A D^{-1/2}; for an r-regular graph this is A/r. Isolated vertices
/// contribute zero rows.
Eigen::MatrixXf normalized_adjacency(const Graph& g);

/// g_j = v_j + sum_k Ahat_jk v_k with v_j = F[sel_j][j].
std::vector<Var> graph_mixed_features(Tape& tp, const std::vector<std::vector<Var>>& feats,
                                      const std::vector<int>& sel, const Eigen::MatrixXf& norm_adj);

/// y'_new = sum_j T_j(g_j); deterministic in its inputs.
Var synthesize_datapoint(Tape& tp, BoundParams& p, const std::vector<std::vector<Var>>& feats,
                         const std::vector<int>& sel, const CodeGraph& g, const ConvTConfig& cfg,
                         const std::string& prefix = "convt");

struct ExpandNodes {
    Var yprime;                         // (er*m, d): originals then synthesized
    std::vector<int> labels;
    std::vector<std::vector<int>> plan; // the distinct selections used
};

/// Full expansion of one class: originals plus (er-1)*m synthesized rows via
/// pairwise-distinct selections. CapacityError when er*m - m > m^L - m.
ExpandNodes expand(Tape& tp, BoundParams& p, Var y_class, const std::vector<std::vector<Var>>& feats,
                   const CodeGraph& g, int er, std::uint64_t seed, const ConvTConfig& cfg, int class_id,
                   const std::string& prefix = "convt");

/// Ridge least-squares fit of the ConvT maps so that identity-selection
/// synthesis reproduces each source latent: rows of `phi` hold the L
/// concatenated mixed features of one datapoint, rows of `targets` the latent
/// to reproduce. Data-dependent initialization, not a training step.
void calibrate_convt(ParamStore& store, const Tensor& phi, const Tensor& targets, const ConvTConfig& cfg,
                     double ridge = 1e-3, const std::string& prefix = "convt");

} // namespace es
