#include "es/losses.hpp"

#include <cmath>
#include <memory>

namespace es {

LossBreakdown total_loss(float re, float ce, float w, float cov, const std::array<float, 4>& alpha) {
    const float terms[4] = {re, ce, w, cov};
    const char* names[4] = {"re", "ce", "w", "cov"};
    for (int i = 0; i < 4; ++i)
        if (!std::isfinite(terms[i]) || !std::isfinite(alpha[static_cast<std::size_t>(i)]))
            throw NumericError(std::string("total_loss: non-finite ") + names[i] + " term");
    LossBreakdown out;
    out.re = re;
    out.ce = ce;
    out.w = w;
    out.cov = cov;
    out.alpha = alpha;
    const double total = static_cast<double>(alpha[0]) * re + static_cast<double>(alpha[1]) * ce +
                         static_cast<double>(alpha[2]) * w + static_cast<double>(alpha[3]) * cov;
    out.total = static_cast<float>(total);
    return out;
}

namespace {

double logsumexp_row(const Eigen::VectorXd& v) {
    const double m = v.maxCoeff();
    double acc = 0.0;
    for (Eigen::Index i = 0; i < v.size(); ++i) acc += std::exp(v(i) - m);
    return m + std::log(acc);
}

} // namespace

double sinkhorn_cost(const Eigen::MatrixXd& cost, const SinkhornOpts& opts, TransportPlan* plan_out) {
    const Eigen::Index n = cost.rows(), m = cost.cols();
    if (n < 1 || m < 1) throw ParamError("sinkhorn: empty marginals");
    if (opts.epsilon <= 0.0) throw ParamError("sinkhorn: epsilon must be positive");
    const double la = -std::log(static_cast<double>(n)); // log(1/n)
    const double lb = -std::log(static_cast<double>(m));
    const double eps = opts.epsilon;
    Eigen::VectorXd f = Eigen::VectorXd::Zero(n);
    Eigen::VectorXd g = Eigen::VectorXd::Zero(m);
    double err = 1e30;
    int it = 0;
    auto plan_from = [&](Eigen::MatrixXd& pi) {
        for (Eigen::Index i = 0; i < n; ++i)
            for (Eigen::Index j = 0; j < m; ++j) pi(i, j) = std::exp((f(i) + g(j) - cost(i, j)) / eps);
    };
    Eigen::MatrixXd pi(n, m);
    for (it = 0; it < opts.max_iters; ++it) {
        for (Eigen::Index i = 0; i < n; ++i) {
            Eigen::VectorXd row = (g - cost.row(i).transpose()) / eps;
            f(i) = eps * (la - logsumexp_row(row));
        }
        for (Eigen::Index j = 0; j < m; ++j) {
            Eigen::VectorXd col = (f - cost.col(j)) / eps;
            g(j) = eps * (lb - logsumexp_row(col));
        }
        plan_from(pi);
        // After the g-update column marginals are exact; track the row error.
        err = (pi.rowwise().sum().array() - 1.0 / static_cast<double>(n)).abs().maxCoeff();
        if (!std::isfinite(err)) throw NumericError("sinkhorn: non-finite scaling state");
        if (err < opts.tol) {
            ++it;
            break;
        }
    }
    double total = 0.0;
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < m; ++j) total += pi(i, j) * cost(i, j);
    if (!std::isfinite(total)) throw NumericError("sinkhorn: non-finite transport cost");
    if (plan_out) {
        plan_out->pi = std::move(pi);
        plan_out->converged = err < opts.tol;
        plan_out->iters = it;
        plan_out->marginal_err = err;
    }
    return total;
}

Eigen::MatrixXd pairwise_sq_cost(const Tensor& y, const Tensor& yp) {
    if (y.shape.size() != 2 || yp.shape.size() != 2 || y.shape[1] != yp.shape[1])
        throw ShapeError("pairwise_sq_cost: latent batches must share the feature dim");
    const int n = y.shape[0], m = yp.shape[0], d = y.shape[1];
    Eigen::MatrixXd c(n, m);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < m; ++j) {
            double acc = 0.0;
            for (int k = 0; k < d; ++k) {
                const double diff = static_cast<double>(y.v[static_cast<Eigen::Index>(i) * d + k]) -
                                    static_cast<double>(yp.v[static_cast<Eigen::Index>(j) * d + k]);
                acc += diff * diff;
            }
            c(i, j) = acc / d;
        }
    return c;
}

Var wasserstein(Tape& tp, Var y, Var yp, const SinkhornOpts& opts, TransportPlan* plan_out) {
    const Tensor& yv = tp.val(y);
    const Tensor& ypv = tp.val(yp);
    if (yv.shape[0] < 1 || ypv.shape[0] < 1) throw ParamError("wasserstein: empty latent batch");
    const Eigen::MatrixXd cost = pairwise_sq_cost(yv, ypv);
    auto plan = std::make_shared<TransportPlan>();
    const double total = sinkhorn_cost(cost, opts, plan.get());
    if (plan_out) *plan_out = *plan;
    const int iy = y.id, iyp = yp.id;
    const int n = yv.shape[0], m = ypv.shape[0], d = yv.shape[1];
    const bool rq = tp.requires_grad(y) || tp.requires_grad(yp);
    return tp.emit(Tensor::scalar(static_cast<float>(total)), rq, [iy, iyp, plan, n, m, d](Tape& t, int self) {
        const float gscale = t.grad_buf(self).v[0];
        const Eigen::ArrayXf& ya = t.val(Var{iy}).v;
        const Eigen::ArrayXf& yb = t.val(Var{iyp}).v;
        const float inv_d = 2.0f / static_cast<float>(d);
        // d<pi,C>/dY' with pi frozen; symmetric term for Y.
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < m; ++j) {
                const float p = static_cast<float>(plan->pi(i, j));
                if (p == 0.0f) continue;
                for (int k = 0; k < d; ++k) {
                    const float diff = ya[static_cast<Eigen::Index>(i) * d + k] - yb[static_cast<Eigen::Index>(j) * d + k];
                    if (t.requires_grad(Var{iy}))
                        t.grad_buf(iy).v[static_cast<Eigen::Index>(i) * d + k] += gscale * p * inv_d * diff;
                    if (t.requires_grad(Var{iyp}))
                        t.grad_buf(iyp).v[static_cast<Eigen::Index>(j) * d + k] -= gscale * p * inv_d * diff;
                }
            }
    });
}

Var covariance_loss(Tape& tp, Var yp) {
    const Shape& s = tp.shape(yp);
    if (s.size() != 2) throw ShapeError("covariance_loss: latent batch must be 2-D");
    const int n = s[0];
    if (n < 2) throw ParamError("covariance_loss: need at least 2 rows");
    Var mu = mean_rows(tp, yp);
    Var centered = sub_row_broadcast(tp, yp, mu);
    Var cov = scale(tp, matmul_tn(tp, centered, centered), 1.0f / static_cast<float>(n - 1));
    Tensor eye = Tensor::zeros({s[1], s[1]});
    for (int i = 0; i < s[1]; ++i) eye.v[static_cast<Eigen::Index>(i) * s[1] + i] = 1.0f;
    return sum_sq_diff(tp, cov, tp.constant(std::move(eye)));
}

} // namespace es
