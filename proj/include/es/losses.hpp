#pragma once

#include <Eigen/Core>

#include <array>

#include "es/nn_ops.hpp"

namespace es {

/// The four weighted objective terms and their total.
struct LossBreakdown {
    float re = 0.0f;
    float ce = 0.0f;
    float w = 0.0f;
    float cov = 0.0f;
    float total = 0.0f;
    std::array<float, 4> alpha{1.0f, 0.5f, 0.1f, 0.01f};
};

LossBreakdown total_loss(float re, float ce, float w, float cov, const std::array<float, 4>& alpha);

struct SinkhornOpts {
    double epsilon = 0.05;
    int max_iters = 200;
    double tol = 1e-5; // L-inf marginal error target
};

struct TransportPlan {
    Eigen::MatrixXd pi; // n x n', row marginals 1/n, column marginals 1/n'
    bool converged = false;
    int iters = 0;
    double marginal_err = 0.0;
};

/// Entropic OT between uniform discrete measures under the given cost matrix,
/// alternating dual updates in the log domain. Returns <pi, C>.
double sinkhorn_cost(const Eigen::MatrixXd& cost, const SinkhornOpts& opts, TransportPlan* plan_out = nullptr);

/// Squared-Euclidean cost between latent rows, normalized by the latent dim.
Eigen::MatrixXd pairwise_sq_cost(const Tensor& y, const Tensor& yp);

/// Tape op: entropic Wasserstein between latent batches Y (n,d) and Y' (n',d).
/// The converged plan is treated as constant for the gradient.
Var wasserstein(Tape& tp, Var y, Var yp, const SinkhornOpts& opts, TransportPlan* plan_out = nullptr);

/// ||Cov(Y') - I||_F^2, rows as observations, divisor rows-1.
Var covariance_loss(Tape& tp, Var yp);

/// Mean -log softmax(logits)[label]; same contract as cross_entropy_mean.
inline Var cross_entropy(Tape& tp, Var logits, const std::vector<int>& labels) {
    return cross_entropy_mean(tp, logits, labels);
}

} // namespace es
