#include "es/nn_ops.hpp"

#include <cmath>
#include <memory>

#include "conv_kernels.hpp"

namespace es {

namespace {

void require_same_shape(const Tape& tp, Var a, Var b, const char* op) {
    if (tp.shape(a) != tp.shape(b))
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(tp.shape(a)) + " vs " + shape_str(tp.shape(b)));
}

bool any_grad(const Tape& tp, std::initializer_list<Var> vs) {
    for (Var v : vs)
        if (tp.requires_grad(v)) return true;
    return false;
}

} // namespace

int conv_out_extent(int in, int k, int stride, int pad) {
    const int num = in + 2 * pad - k;
    if (num < 0 || stride < 1) throw ShapeError("conv: kernel does not fit input");
    return num / stride + 1;
}

int convt_out_extent(int in, int k, int stride, int pad, int out_pad) {
    const int out = (in - 1) * stride - 2 * pad + k + out_pad;
    if (out < 1) throw ShapeError("conv_transpose: degenerate output extent");
    return out;
}

Var add_weighted(Tape& tp, Var a, Var b, float ca, float cb) {
    require_same_shape(tp, a, b, "add_weighted");
    Tensor out(tp.shape(a), ca * tp.val(a).v + cb * tp.val(b).v);
    const int ia = a.id, ib = b.id;
    return tp.emit(std::move(out), any_grad(tp, {a, b}), [ia, ib, ca, cb](Tape& t, int self) {
        const Eigen::ArrayXf& g = t.grad_buf(self).v;
        if (t.requires_grad(Var{ia})) t.grad_buf(ia).v += ca * g;
        if (t.requires_grad(Var{ib})) t.grad_buf(ib).v += cb * g;
    });
}

Var add(Tape& tp, Var a, Var b) { return add_weighted(tp, a, b, 1.0f, 1.0f); }
Var sub(Tape& tp, Var a, Var b) { return add_weighted(tp, a, b, 1.0f, -1.0f); }

Var mul(Tape& tp, Var a, Var b) {
    require_same_shape(tp, a, b, "mul");
    Tensor out(tp.shape(a), tp.val(a).v * tp.val(b).v);
    const int ia = a.id, ib = b.id;
    return tp.emit(std::move(out), any_grad(tp, {a, b}), [ia, ib](Tape& t, int self) {
        const Eigen::ArrayXf& g = t.grad_buf(self).v;
        if (t.requires_grad(Var{ia})) t.grad_buf(ia).v += g * t.val(Var{ib}).v;
        if (t.requires_grad(Var{ib})) t.grad_buf(ib).v += g * t.val(Var{ia}).v;
    });
}

Var scale(Tape& tp, Var a, float c) {
    Tensor out(tp.shape(a), c * tp.val(a).v);
    const int ia = a.id;
    return tp.emit(std::move(out), tp.requires_grad(a), [ia, c](Tape& t, int self) {
        t.grad_buf(ia).v += c * t.grad_buf(self).v;
    });
}

Var add_scalar(Tape& tp, Var a, float c) {
    Tensor out(tp.shape(a), tp.val(a).v + c);
    const int ia = a.id;
    return tp.emit(std::move(out), tp.requires_grad(a), [ia](Tape& t, int self) {
        t.grad_buf(ia).v += t.grad_buf(self).v;
    });
}

Var relu(Tape& tp, Var x) {
    Tensor out(tp.shape(x), tp.val(x).v.max(0.0f));
    const int ix = x.id;
    return tp.emit(std::move(out), tp.requires_grad(x), [ix](Tape& t, int self) {
        const Eigen::ArrayXf& g = t.grad_buf(self).v;
        t.grad_buf(ix).v += g * (t.val(Var{ix}).v > 0.0f).cast<float>();
    });
}

Var sigmoid(Tape& tp, Var x) {
    Tensor out(tp.shape(x), 1.0f / (1.0f + (-tp.val(x).v).exp()));
    const int ix = x.id;
    return tp.emit(std::move(out), tp.requires_grad(x), [ix](Tape& t, int self) {
        const Eigen::ArrayXf& y = t.val(Var{self}).v;
        t.grad_buf(ix).v += t.grad_buf(self).v * y * (1.0f - y);
    });
}

Var exp_op(Tape& tp, Var x) {
    Tensor out(tp.shape(x), tp.val(x).v.exp());
    const int ix = x.id;
    return tp.emit(std::move(out), tp.requires_grad(x), [ix](Tape& t, int self) {
        t.grad_buf(ix).v += t.grad_buf(self).v * t.val(Var{self}).v;
    });
}

Var sum_all(Tape& tp, Var x) {
    const Eigen::ArrayXf& xv = tp.val(x).v;
    double acc = 0.0;
    for (Eigen::Index i = 0; i < xv.size(); ++i) acc += xv[i];
    const int ix = x.id;
    return tp.emit(Tensor::scalar(static_cast<float>(acc)), tp.requires_grad(x), [ix](Tape& t, int self) {
        t.grad_buf(ix).v += t.grad_buf(self).v[0];
    });
}

Var mean_all(Tape& tp, Var x) {
    const std::int64_t n = tp.val(x).size();
    if (n == 0) throw ShapeError("mean_all of empty tensor");
    return scale(tp, sum_all(tp, x), 1.0f / static_cast<float>(n));
}

Var sum_sq_diff(Tape& tp, Var a, Var b) {
    require_same_shape(tp, a, b, "sum_sq_diff");
    const Eigen::ArrayXf d = tp.val(a).v - tp.val(b).v;
    double acc = 0.0;
    for (Eigen::Index i = 0; i < d.size(); ++i) acc += static_cast<double>(d[i]) * d[i];
    const int ia = a.id, ib = b.id;
    return tp.emit(Tensor::scalar(static_cast<float>(acc)), any_grad(tp, {a, b}), [ia, ib](Tape& t, int self) {
        const float g = t.grad_buf(self).v[0];
        const Eigen::ArrayXf d2 = 2.0f * g * (t.val(Var{ia}).v - t.val(Var{ib}).v);
        if (t.requires_grad(Var{ia})) t.grad_buf(ia).v += d2;
        if (t.requires_grad(Var{ib})) t.grad_buf(ib).v -= d2;
    });
}

namespace {

enum class MatMode { NN, NT, TN };

Var matmul_impl(Tape& tp, Var a, Var b, MatMode mode) {
    const Shape& sa = tp.shape(a);
    const Shape& sb = tp.shape(b);
    if (sa.size() != 2 || sb.size() != 2) throw ShapeError("matmul requires 2-D operands");
    int m, k, n, kb;
    switch (mode) {
        case MatMode::NN: m = sa[0]; k = sa[1]; kb = sb[0]; n = sb[1]; break;
        case MatMode::NT: m = sa[0]; k = sa[1]; n = sb[0]; kb = sb[1]; break;
        case MatMode::TN: k = sa[0]; m = sa[1]; kb = sb[0]; n = sb[1]; break;
        default: throw Error("unreachable");
    }
    if (k != kb)
        throw ShapeError("matmul: inner extents differ " + shape_str(sa) + " vs " + shape_str(sb));
    Tensor out = Tensor::zeros({m, n});
    auto A = tp.val(a).mat();
    auto B = tp.val(b).mat();
    auto C = out.mat();
    switch (mode) {
        case MatMode::NN: C.noalias() = A * B; break;
        case MatMode::NT: C.noalias() = A * B.transpose(); break;
        case MatMode::TN: C.noalias() = A.transpose() * B; break;
    }
    const int ia = a.id, ib = b.id;
    return tp.emit(std::move(out), any_grad(tp, {a, b}), [ia, ib, mode](Tape& t, int self) {
        auto G = t.grad_buf(self).mat();
        auto A = t.val(Var{ia}).mat();
        auto B = t.val(Var{ib}).mat();
        if (t.requires_grad(Var{ia})) {
            auto GA = t.grad_buf(ia).mat();
            switch (mode) {
                case MatMode::NN: GA.noalias() += G * B.transpose(); break;
                case MatMode::NT: GA.noalias() += G * B; break;
                case MatMode::TN: GA.noalias() += B * G.transpose(); break;
            }
        }
        if (t.requires_grad(Var{ib})) {
            auto GB = t.grad_buf(ib).mat();
            switch (mode) {
                case MatMode::NN: GB.noalias() += A.transpose() * G; break;
                case MatMode::NT: GB.noalias() += G.transpose() * A; break;
                case MatMode::TN: GB.noalias() += A * G; break;
            }
        }
    });
}

} // namespace

Var matmul(Tape& tp, Var a, Var b) { return matmul_impl(tp, a, b, MatMode::NN); }
Var matmul_nt(Tape& tp, Var a, Var b) { return matmul_impl(tp, a, b, MatMode::NT); }
Var matmul_tn(Tape& tp, Var a, Var b) { return matmul_impl(tp, a, b, MatMode::TN); }

Var dense(Tape& tp, Var x, Var w, Var b) {
    const Shape& sx = tp.shape(x);
    const Shape& sw = tp.shape(w);
    if (sx.size() != 2 || sw.size() != 2) throw ShapeError("dense requires 2-D input and weight");
    if (sx[1] != sw[1])
        throw ShapeError("dense: input dim " + std::to_string(sx[1]) + " vs weight in-dim " + std::to_string(sw[1]));
    if (tp.shape(b) != Shape{sw[0]}) throw ShapeError("dense: bias shape " + shape_str(tp.shape(b)));
    const int n = sx[0], out_dim = sw[0];
    Tensor out = Tensor::zeros({n, out_dim});
    out.mat().noalias() = tp.val(x).mat() * tp.val(w).mat().transpose();
    out.mat().rowwise() += tp.val(b).v.matrix().transpose();
    const int ix = x.id, iw = w.id, ibi = b.id;
    return tp.emit(std::move(out), any_grad(tp, {x, w, b}), [ix, iw, ibi](Tape& t, int self) {
        auto G = t.grad_buf(self).mat();
        if (t.requires_grad(Var{ix})) t.grad_buf(ix).mat().noalias() += G * t.val(Var{iw}).mat();
        if (t.requires_grad(Var{iw})) t.grad_buf(iw).mat().noalias() += G.transpose() * t.val(Var{ix}).mat();
        if (t.requires_grad(Var{ibi})) t.grad_buf(ibi).v.matrix() += G.colwise().sum().transpose();
    });
}

Var softmax_rows(Tape& tp, Var x) {
    const Shape& s = tp.shape(x);
    if (s.size() != 2) throw ShapeError("softmax_rows requires a 2-D tensor");
    const int n = s[0], d = s[1];
    Tensor out = Tensor::zeros(s);
    for (int i = 0; i < n; ++i) {
        auto row = tp.val(x).v.segment(static_cast<Eigen::Index>(i) * d, d);
        const float m = row.maxCoeff();
        Eigen::ArrayXf e = (row - m).exp();
        double z = 0.0;
        for (int j = 0; j < d; ++j) z += e[j];
        out.v.segment(static_cast<Eigen::Index>(i) * d, d) = e / static_cast<float>(z);
    }
    const int ix = x.id;
    return tp.emit(std::move(out), tp.requires_grad(x), [ix, n, d](Tape& t, int self) {
        const Eigen::ArrayXf& y = t.val(Var{self}).v;
        const Eigen::ArrayXf& g = t.grad_buf(self).v;
        Eigen::ArrayXf& gx = t.grad_buf(ix).v;
        for (int i = 0; i < n; ++i) {
            const Eigen::Index o = static_cast<Eigen::Index>(i) * d;
            auto yi = y.segment(o, d);
            auto gi = g.segment(o, d);
            const float dot = (yi * gi).sum();
            gx.segment(o, d) += yi * (gi - dot);
        }
    });
}

Var layernorm_rows(Tape& tp, Var x, Var gamma, Var beta, float eps) {
    const Shape& s = tp.shape(x);
    if (s.size() != 2) throw ShapeError("layernorm_rows requires a 2-D tensor");
    const int n = s[0], d = s[1];
    if (tp.shape(gamma) != Shape{d} || tp.shape(beta) != Shape{d})
        throw ShapeError("layernorm_rows: gamma/beta must have shape (" + std::to_string(d) + ")");
    Tensor out = Tensor::zeros(s);
    Tensor xhat = Tensor::zeros(s);
    Tensor inv_std = Tensor::zeros({n});
    const Eigen::ArrayXf& xv = tp.val(x).v;
    for (int i = 0; i < n; ++i) {
        const Eigen::Index o = static_cast<Eigen::Index>(i) * d;
        auto row = xv.segment(o, d);
        const float mu = row.mean();
        const float var = (row - mu).square().mean();
        const float is = 1.0f / std::sqrt(var + eps);
        inv_std.v[i] = is;
        xhat.v.segment(o, d) = (row - mu) * is;
        out.v.segment(o, d) = xhat.v.segment(o, d) * tp.val(gamma).v + tp.val(beta).v;
    }
    const int ix = x.id, ig = gamma.id, ib = beta.id;
    auto xh = std::make_shared<Tensor>(std::move(xhat));
    auto istd = std::make_shared<Tensor>(std::move(inv_std));
    return tp.emit(std::move(out), any_grad(tp, {x, gamma, beta}), [ix, ig, ib, n, d, xh, istd](Tape& t, int self) {
        const Eigen::ArrayXf& g = t.grad_buf(self).v;
        for (int i = 0; i < n; ++i) {
            const Eigen::Index o = static_cast<Eigen::Index>(i) * d;
            auto gi = g.segment(o, d);
            auto xhi = xh->v.segment(o, d);
            if (t.requires_grad(Var{ig})) t.grad_buf(ig).v += gi * xhi;
            if (t.requires_grad(Var{ib})) t.grad_buf(ib).v += gi;
            if (t.requires_grad(Var{ix})) {
                const Eigen::ArrayXf gxh = gi * t.val(Var{ig}).v;
                const float m1 = gxh.mean();
                const float m2 = (gxh * xhi).mean();
                t.grad_buf(ix).v.segment(o, d) += istd->v[i] * (gxh - m1 - xhi * m2);
            }
        }
    });
}

Var reshape(Tape& tp, Var x, Shape s) {
    if (shape_size(s) != tp.val(x).size())
        throw ShapeError("reshape: size mismatch " + shape_str(tp.shape(x)) + " -> " + shape_str(s));
    Tensor out(std::move(s), tp.val(x).v);
    const int ix = x.id;
    return tp.emit(std::move(out), tp.requires_grad(x), [ix](Tape& t, int self) {
        t.grad_buf(ix).v += t.grad_buf(self).v;
    });
}

Var take_row(Tape& tp, Var x, int row) {
    const Shape& s = tp.shape(x);
    if (s.size() != 2 || row < 0 || row >= s[0]) throw ShapeError("take_row: bad row");
    const int d = s[1];
    Tensor out({d}, tp.val(x).v.segment(static_cast<Eigen::Index>(row) * d, d));
    const int ix = x.id;
    return tp.emit(std::move(out), tp.requires_grad(x), [ix, row, d](Tape& t, int self) {
        t.grad_buf(ix).v.segment(static_cast<Eigen::Index>(row) * d, d) += t.grad_buf(self).v;
    });
}

Var stack_rows(Tape& tp, std::span<const Var> rows) {
    if (rows.empty()) throw ShapeError("stack_rows of nothing");
    const Shape& rs = tp.shape(rows[0]);
    if (rs.size() != 1) throw ShapeError("stack_rows expects 1-D rows");
    const int d = rs[0];
    const int k = static_cast<int>(rows.size());
    Tensor out = Tensor::zeros({k, d});
    bool rq = false;
    std::vector<int> ids(rows.size());
    for (int i = 0; i < k; ++i) {
        if (tp.shape(rows[static_cast<std::size_t>(i)]) != rs) throw ShapeError("stack_rows: ragged rows");
        out.v.segment(static_cast<Eigen::Index>(i) * d, d) = tp.val(rows[static_cast<std::size_t>(i)]).v;
        rq = rq || tp.requires_grad(rows[static_cast<std::size_t>(i)]);
        ids[static_cast<std::size_t>(i)] = rows[static_cast<std::size_t>(i)].id;
    }
    return tp.emit(std::move(out), rq, [ids, d](Tape& t, int self) {
        const Eigen::ArrayXf& g = t.grad_buf(self).v;
        for (std::size_t i = 0; i < ids.size(); ++i) {
            Var r{ids[i]};
            if (t.requires_grad(r)) t.grad_buf(ids[i]).v += g.segment(static_cast<Eigen::Index>(i) * d, d);
        }
    });
}

Var slice_cols(Tape& tp, Var x, int c0, int len) {
    const Shape& s = tp.shape(x);
    if (s.size() != 2 || c0 < 0 || len < 1 || c0 + len > s[1]) throw ShapeError("slice_cols: bad range");
    const int n = s[0], d = s[1];
    Tensor out = Tensor::zeros({n, len});
    out.mat() = tp.val(x).mat().middleCols(c0, len);
    const int ix = x.id;
    (void)n;
    (void)d;
    return tp.emit(std::move(out), tp.requires_grad(x), [ix, c0, len](Tape& t, int self) {
        t.grad_buf(ix).mat().middleCols(c0, len) += t.grad_buf(self).mat();
    });
}

Var concat_cols(Tape& tp, std::span<const Var> parts) {
    if (parts.empty()) throw ShapeError("concat_cols of nothing");
    const int n = tp.shape(parts[0])[0];
    int total = 0;
    bool rq = false;
    for (Var p : parts) {
        const Shape& s = tp.shape(p);
        if (s.size() != 2 || s[0] != n) throw ShapeError("concat_cols: row mismatch");
        total += s[1];
        rq = rq || tp.requires_grad(p);
    }
    Tensor out = Tensor::zeros({n, total});
    std::vector<int> ids;
    std::vector<int> offs;
    std::vector<int> lens;
    int off = 0;
    for (Var p : parts) {
        const int len = tp.shape(p)[1];
        out.mat().middleCols(off, len) = tp.val(p).mat();
        ids.push_back(p.id);
        offs.push_back(off);
        lens.push_back(len);
        off += len;
    }
    return tp.emit(std::move(out), rq, [ids, offs, lens](Tape& t, int self) {
        for (std::size_t i = 0; i < ids.size(); ++i) {
            Var p{ids[i]};
            if (t.requires_grad(p)) t.grad_buf(ids[i]).mat() += t.grad_buf(self).mat().middleCols(offs[i], lens[i]);
        }
    });
}

Var permute_gather(Tape& tp, Var x, const std::vector<int>& index, Shape out_shape) {
    if (static_cast<std::int64_t>(index.size()) != shape_size(out_shape))
        throw ShapeError("permute_gather: index count does not match output shape");
    const Eigen::ArrayXf& xv = tp.val(x).v;
    Tensor out = Tensor::zeros(out_shape);
    for (std::size_t i = 0; i < index.size(); ++i) {
        const int j = index[i];
        if (j < 0 || j >= xv.size()) throw ShapeError("permute_gather: index out of range");
        out.v[static_cast<Eigen::Index>(i)] = xv[j];
    }
    const int ix = x.id;
    auto idx = std::make_shared<std::vector<int>>(index);
    return tp.emit(std::move(out), tp.requires_grad(x), [ix, idx](Tape& t, int self) {
        const Eigen::ArrayXf& g = t.grad_buf(self).v;
        Eigen::ArrayXf& gx = t.grad_buf(ix).v;
        for (std::size_t i = 0; i < idx->size(); ++i) gx[(*idx)[i]] += g[static_cast<Eigen::Index>(i)];
    });
}

Var mean_rows(Tape& tp, Var x) {
    const Shape& s = tp.shape(x);
    if (s.size() != 2) throw ShapeError("mean_rows requires a 2-D tensor");
    const int n = s[0], d = s[1];
    if (n == 0) throw ShapeError("mean_rows of empty tensor");
    Tensor out = Tensor::zeros({d});
    out.v.matrix() = tp.val(x).mat().colwise().mean().transpose();
    const int ix = x.id;
    return tp.emit(std::move(out), tp.requires_grad(x), [ix, n](Tape& t, int self) {
        const Eigen::ArrayXf& g = t.grad_buf(self).v;
        t.grad_buf(ix).mat().rowwise() += (g / static_cast<float>(n)).matrix().transpose();
    });
}

Var sub_row_broadcast(Tape& tp, Var x, Var row) {
    const Shape& s = tp.shape(x);
    if (s.size() != 2 || tp.shape(row) != Shape{s[1]}) throw ShapeError("sub_row_broadcast: shape mismatch");
    Tensor out = Tensor::zeros(s);
    out.mat() = tp.val(x).mat();
    out.mat().rowwise() -= tp.val(row).v.matrix().transpose();
    const int ix = x.id, ir = row.id;
    return tp.emit(std::move(out), any_grad(tp, {x, row}), [ix, ir](Tape& t, int self) {
        auto G = t.grad_buf(self).mat();
        if (t.requires_grad(Var{ix})) t.grad_buf(ix).mat() += G;
        if (t.requires_grad(Var{ir})) t.grad_buf(ir).v.matrix() -= G.colwise().sum().transpose();
    });
}

Var conv2d(Tape& tp, Var in, Var w, Var b, int stride, int pad) {
    const Shape& si = tp.shape(in);
    const Shape& sw = tp.shape(w);
    if (si.size() != 4 || sw.size() != 4) throw ShapeError("conv2d: input/weight must be 4-D");
    if (si[1] != sw[1]) throw ShapeError("conv2d: channel mismatch " + shape_str(si) + " vs " + shape_str(sw));
    if (sw[2] != sw[3]) throw ShapeError("conv2d: kernel must be square");
    if (tp.shape(b) != Shape{sw[0]}) throw ShapeError("conv2d: bias shape " + shape_str(tp.shape(b)));
    kernels::ConvDims d{si[0], si[1], si[2], si[3], sw[0], sw[2], stride, pad, 0, 0};
    d.ho = conv_out_extent(d.h, d.k, stride, pad);
    d.wo = conv_out_extent(d.w, d.k, stride, pad);
    Tensor out = Tensor::zeros({d.n, d.co, d.ho, d.wo});
    kernels::conv2d_forward(tp.val(in).v.data(), tp.val(w).v.data(), tp.val(b).v.data(), out.v.data(), d);
    const int ii = in.id, iw = w.id, ib = b.id;
    return tp.emit(std::move(out), any_grad(tp, {in, w, b}), [ii, iw, ib, d](Tape& t, int self) {
        float* gin = t.requires_grad(Var{ii}) ? t.grad_buf(ii).v.data() : nullptr;
        float* gw = t.requires_grad(Var{iw}) ? t.grad_buf(iw).v.data() : nullptr;
        float* gb = t.requires_grad(Var{ib}) ? t.grad_buf(ib).v.data() : nullptr;
        kernels::conv2d_backward(t.val(Var{ii}).v.data(), t.val(Var{iw}).v.data(), t.grad_buf(self).v.data(), gin, gw,
                                 gb, d);
    });
}

Var conv_transpose2d(Tape& tp, Var in, Var w, Var b, int stride, int pad, int out_pad) {
    const Shape& si = tp.shape(in);
    const Shape& sw = tp.shape(w);
    if (si.size() != 4 || sw.size() != 4) throw ShapeError("conv_transpose2d: input/weight must be 4-D");
    if (si[1] != sw[0]) throw ShapeError("conv_transpose2d: channel mismatch " + shape_str(si) + " vs " + shape_str(sw));
    if (sw[2] != sw[3]) throw ShapeError("conv_transpose2d: kernel must be square");
    if (out_pad >= stride) throw ShapeError("conv_transpose2d: out_pad must be < stride");
    if (tp.shape(b) != Shape{sw[1]}) throw ShapeError("conv_transpose2d: bias shape " + shape_str(tp.shape(b)));
    kernels::ConvTDims d{si[0], si[1], si[2], si[3], sw[1], sw[2], stride, pad, out_pad, 0, 0};
    d.ho = convt_out_extent(d.hi, d.k, stride, pad, out_pad);
    d.wo = convt_out_extent(d.wi, d.k, stride, pad, out_pad);
    Tensor out = Tensor::zeros({d.n, d.co, d.ho, d.wo});
    kernels::convt_forward(tp.val(in).v.data(), tp.val(w).v.data(), tp.val(b).v.data(), out.v.data(), d);
    const int ii = in.id, iw = w.id, ib = b.id;
    return tp.emit(std::move(out), any_grad(tp, {in, w, b}), [ii, iw, ib, d](Tape& t, int self) {
        float* gin = t.requires_grad(Var{ii}) ? t.grad_buf(ii).v.data() : nullptr;
        float* gw = t.requires_grad(Var{iw}) ? t.grad_buf(iw).v.data() : nullptr;
        float* gb = t.requires_grad(Var{ib}) ? t.grad_buf(ib).v.data() : nullptr;
        kernels::convt_backward(t.val(Var{ii}).v.data(), t.val(Var{iw}).v.data(), t.grad_buf(self).v.data(), gin, gw,
                                gb, d);
    });
}

Var channel_affine(Tape& tp, Var x, Var gamma, Var beta) {
    const Shape& s = tp.shape(x);
    if (s.size() != 4) throw ShapeError("channel_affine: input must be 4-D");
    const int n = s[0], c = s[1];
    const std::int64_t hw = static_cast<std::int64_t>(s[2]) * s[3];
    if (tp.shape(gamma) != Shape{c} || tp.shape(beta) != Shape{c})
        throw ShapeError("channel_affine: gamma/beta must have shape (" + std::to_string(c) + ")");
    Tensor out = Tensor::zeros(s);
    for (int ni = 0; ni < n; ++ni)
        for (int ci = 0; ci < c; ++ci) {
            const Eigen::Index o = (static_cast<Eigen::Index>(ni) * c + ci) * hw;
            out.v.segment(o, hw) = tp.val(x).v.segment(o, hw) * tp.val(gamma).v[ci] + tp.val(beta).v[ci];
        }
    const int ix = x.id, ig = gamma.id, ib = beta.id;
    return tp.emit(std::move(out), any_grad(tp, {x, gamma, beta}), [ix, ig, ib, n, c, hw](Tape& t, int self) {
        const Eigen::ArrayXf& g = t.grad_buf(self).v;
        for (int ni = 0; ni < n; ++ni)
            for (int ci = 0; ci < c; ++ci) {
                const Eigen::Index o = (static_cast<Eigen::Index>(ni) * c + ci) * hw;
                auto gseg = g.segment(o, hw);
                if (t.requires_grad(Var{ix})) t.grad_buf(ix).v.segment(o, hw) += gseg * t.val(Var{ig}).v[ci];
                if (t.requires_grad(Var{ig})) t.grad_buf(ig).v[ci] += (gseg * t.val(Var{ix}).v.segment(o, hw)).sum();
                if (t.requires_grad(Var{ib})) t.grad_buf(ib).v[ci] += gseg.sum();
            }
    });
}

Var crop_resize_bilinear(Tape& tp, Var map, int r0, int c0, int bh, int bw, int oh, int ow) {
    const Shape& s = tp.shape(map);
    if (s.size() != 3) throw ShapeError("crop_resize_bilinear: map must be (C,H,W)");
    const int C = s[0], H = s[1], W = s[2];
    if (r0 < 0 || c0 < 0 || bh < 1 || bw < 1 || r0 + bh > H || c0 + bw > W)
        throw ShapeError("crop_resize_bilinear: box outside map");
    struct Tap {
        int lo, hi;
        float w_hi;
    };
    auto make_taps = [](int o_extent, int b_extent, int base) {
        std::vector<Tap> taps(static_cast<std::size_t>(o_extent));
        for (int i = 0; i < o_extent; ++i) {
            float src = (static_cast<float>(i) + 0.5f) * static_cast<float>(b_extent) / static_cast<float>(o_extent) - 0.5f;
            if (src < 0.0f) src = 0.0f;
            const float last = static_cast<float>(b_extent - 1);
            if (src > last) src = last;
            const int lo = static_cast<int>(src);
            const int hi = lo < b_extent - 1 ? lo + 1 : lo;
            taps[static_cast<std::size_t>(i)] = {base + lo, base + hi, src - static_cast<float>(lo)};
        }
        return taps;
    };
    const auto rt = make_taps(oh, bh, r0);
    const auto ct = make_taps(ow, bw, c0);
    Tensor out = Tensor::zeros({C, oh, ow});
    const Eigen::ArrayXf& m = tp.val(map).v;
    for (int ch = 0; ch < C; ++ch) {
        const Eigen::Index mb = static_cast<Eigen::Index>(ch) * H * W;
        const Eigen::Index ob = static_cast<Eigen::Index>(ch) * oh * ow;
        for (int i = 0; i < oh; ++i)
            for (int j = 0; j < ow; ++j) {
                const Tap& a = rt[static_cast<std::size_t>(i)];
                const Tap& b = ct[static_cast<std::size_t>(j)];
                const float v00 = m[mb + static_cast<Eigen::Index>(a.lo) * W + b.lo];
                const float v01 = m[mb + static_cast<Eigen::Index>(a.lo) * W + b.hi];
                const float v10 = m[mb + static_cast<Eigen::Index>(a.hi) * W + b.lo];
                const float v11 = m[mb + static_cast<Eigen::Index>(a.hi) * W + b.hi];
                const float top = v00 + (v01 - v00) * b.w_hi;
                const float bot = v10 + (v11 - v10) * b.w_hi;
                out.v[ob + static_cast<Eigen::Index>(i) * ow + j] = top + (bot - top) * a.w_hi;
            }
    }
    const int im = map.id;
    auto rts = std::make_shared<std::vector<Tap>>(rt);
    auto cts = std::make_shared<std::vector<Tap>>(ct);
    return tp.emit(std::move(out), tp.requires_grad(map), [im, rts, cts, C, H, W, oh, ow](Tape& t, int self) {
        const Eigen::ArrayXf& g = t.grad_buf(self).v;
        Eigen::ArrayXf& gm = t.grad_buf(im).v;
        for (int ch = 0; ch < C; ++ch) {
            const Eigen::Index mb = static_cast<Eigen::Index>(ch) * H * W;
            const Eigen::Index ob = static_cast<Eigen::Index>(ch) * oh * ow;
            for (int i = 0; i < oh; ++i)
                for (int j = 0; j < ow; ++j) {
                    const Tap& a = (*rts)[static_cast<std::size_t>(i)];
                    const Tap& b = (*cts)[static_cast<std::size_t>(j)];
                    const float gv = g[ob + static_cast<Eigen::Index>(i) * ow + j];
                    const float wr = a.w_hi, wc = b.w_hi;
                    gm[mb + static_cast<Eigen::Index>(a.lo) * W + b.lo] += gv * (1 - wr) * (1 - wc);
                    gm[mb + static_cast<Eigen::Index>(a.lo) * W + b.hi] += gv * (1 - wr) * wc;
                    gm[mb + static_cast<Eigen::Index>(a.hi) * W + b.lo] += gv * wr * (1 - wc);
                    gm[mb + static_cast<Eigen::Index>(a.hi) * W + b.hi] += gv * wr * wc;
                }
        }
    });
}

Var cross_entropy_mean(Tape& tp, Var logits, const std::vector<int>& labels) {
    const Shape& s = tp.shape(logits);
    if (s.size() != 2) throw ShapeError("cross_entropy_mean: logits must be (N,C)");
    const int n = s[0], c = s[1];
    if (static_cast<int>(labels.size()) != n)
        throw ShapeError("cross_entropy_mean: " + std::to_string(labels.size()) + " labels for " + std::to_string(n) + " rows");
    for (int l : labels)
        if (l < 0 || l >= c) throw LabelError("cross_entropy_mean: label " + std::to_string(l) + " outside [0," + std::to_string(c) + ")");
    const Eigen::ArrayXf& x = tp.val(logits).v;
    double acc = 0.0;
    for (int i = 0; i < n; ++i) {
        auto row = x.segment(static_cast<Eigen::Index>(i) * c, c);
        const float m = row.maxCoeff();
        double z = 0.0;
        for (int j = 0; j < c; ++j) z += std::exp(static_cast<double>(row[j]) - m);
        acc += m + std::log(z) - row[labels[static_cast<std::size_t>(i)]];
    }
    const float loss = static_cast<float>(acc / n);
    const int il = logits.id;
    auto lab = std::make_shared<std::vector<int>>(labels);
    return tp.emit(Tensor::scalar(loss), tp.requires_grad(logits), [il, lab, n, c](Tape& t, int self) {
        const float g = t.grad_buf(self).v[0] / static_cast<float>(n);
        const Eigen::ArrayXf& x = t.val(Var{il}).v;
        Eigen::ArrayXf& gx = t.grad_buf(il).v;
        for (int i = 0; i < n; ++i) {
            const Eigen::Index o = static_cast<Eigen::Index>(i) * c;
            auto row = x.segment(o, c);
            const float m = row.maxCoeff();
            Eigen::ArrayXf p = (row - m).exp();
            p /= p.sum();
            gx.segment(o, c) += g * p;
            gx[o + (*lab)[static_cast<std::size_t>(i)]] -= g;
        }
    });
}

} // namespace es
