#include "conv_kernels.hpp"

#include <algorithm>
#include <cstdint>

namespace es::kernels {

namespace {

// Valid output range so that o*stride - pad + koff lands in [0, limit).
inline void out_range(int limit, int out_extent, int stride, int pad, int koff, int& lo, int& hi) {
    int numer = pad - koff;
    lo = numer <= 0 ? 0 : (numer + stride - 1) / stride;
    int last_num = limit - 1 + pad - koff;
    hi = last_num < 0 ? -1 : std::min(out_extent - 1, last_num / stride);
}

inline std::int64_t idx4(int a, int b, int c, int d, int B, int C, int D) {
    return ((static_cast<std::int64_t>(a) * B + b) * C + c) * D + d;
}

} // namespace

void conv2d_forward(const float* in, const float* w, const float* b, float* out, const ConvDims& d) {
    for (int n = 0; n < d.n; ++n) {
        for (int co = 0; co < d.co; ++co) {
            float* oplane = out + idx4(n, co, 0, 0, d.co, d.ho, d.wo);
            const float bias = b ? b[co] : 0.0f;
            std::fill(oplane, oplane + static_cast<std::int64_t>(d.ho) * d.wo, bias);
            for (int ci = 0; ci < d.ci; ++ci) {
                const float* iplane = in + idx4(n, ci, 0, 0, d.ci, d.h, d.w);
                for (int kh = 0; kh < d.k; ++kh) {
                    int oh_lo, oh_hi;
                    out_range(d.h, d.ho, d.stride, d.pad, kh, oh_lo, oh_hi);
                    for (int kw = 0; kw < d.k; ++kw) {
                        const float wv = w[idx4(co, ci, kh, kw, d.ci, d.k, d.k)];
                        int ow_lo, ow_hi;
                        out_range(d.w, d.wo, d.stride, d.pad, kw, ow_lo, ow_hi);
                        for (int oh = oh_lo; oh <= oh_hi; ++oh) {
                            const float* irow = iplane + static_cast<std::int64_t>(oh * d.stride - d.pad + kh) * d.w - d.pad + kw;
                            float* orow = oplane + static_cast<std::int64_t>(oh) * d.wo;
                            for (int ow = ow_lo; ow <= ow_hi; ++ow) orow[ow] += wv * irow[ow * d.stride];
                        }
                    }
                }
            }
        }
    }
}

void conv2d_backward(const float* in, const float* w, const float* gout, float* gin, float* gw, float* gb,
                     const ConvDims& d) {
    for (int n = 0; n < d.n; ++n) {
        for (int co = 0; co < d.co; ++co) {
            const float* gplane = gout + idx4(n, co, 0, 0, d.co, d.ho, d.wo);
            if (gb) {
                double acc = 0.0;
                const std::int64_t cnt = static_cast<std::int64_t>(d.ho) * d.wo;
                for (std::int64_t i = 0; i < cnt; ++i) acc += gplane[i];
                gb[co] += static_cast<float>(acc);
            }
            for (int ci = 0; ci < d.ci; ++ci) {
                const float* iplane = in + idx4(n, ci, 0, 0, d.ci, d.h, d.w);
                float* giplane = gin ? gin + idx4(n, ci, 0, 0, d.ci, d.h, d.w) : nullptr;
                for (int kh = 0; kh < d.k; ++kh) {
                    int oh_lo, oh_hi;
                    out_range(d.h, d.ho, d.stride, d.pad, kh, oh_lo, oh_hi);
                    for (int kw = 0; kw < d.k; ++kw) {
                        const float wv = w[idx4(co, ci, kh, kw, d.ci, d.k, d.k)];
                        int ow_lo, ow_hi;
                        out_range(d.w, d.wo, d.stride, d.pad, kw, ow_lo, ow_hi);
                        double gw_acc = 0.0;
                        for (int oh = oh_lo; oh <= oh_hi; ++oh) {
                            const std::int64_t ibase = static_cast<std::int64_t>(oh * d.stride - d.pad + kh) * d.w - d.pad + kw;
                            const float* grow = gplane + static_cast<std::int64_t>(oh) * d.wo;
                            for (int ow = ow_lo; ow <= ow_hi; ++ow) {
                                const float g = grow[ow];
                                gw_acc += static_cast<double>(g) * iplane[ibase + ow * d.stride];
                                if (giplane) giplane[ibase + ow * d.stride] += g * wv;
                            }
                        }
                        if (gw) gw[idx4(co, ci, kh, kw, d.ci, d.k, d.k)] += static_cast<float>(gw_acc);
                    }
                }
            }
        }
    }
}

// Scatter form; for each output element the (ci,kh,kw)-ascending visit order
// matches the gather definition.
void convt_forward(const float* in, const float* w, const float* b, float* out, const ConvTDims& d) {
    for (int n = 0; n < d.n; ++n) {
        for (int co = 0; co < d.co; ++co) {
            float* oplane = out + idx4(n, co, 0, 0, d.co, d.ho, d.wo);
            const float bias = b ? b[co] : 0.0f;
            std::fill(oplane, oplane + static_cast<std::int64_t>(d.ho) * d.wo, bias);
        }
        for (int ci = 0; ci < d.ci; ++ci) {
            const float* iplane = in + idx4(n, ci, 0, 0, d.ci, d.hi, d.wi);
            for (int kh = 0; kh < d.k; ++kh) {
                int ih_lo, ih_hi;
                out_range(d.ho, d.hi, d.stride, d.pad, kh, ih_lo, ih_hi);
                for (int kw = 0; kw < d.k; ++kw) {
                    int iw_lo, iw_hi;
                    out_range(d.wo, d.wi, d.stride, d.pad, kw, iw_lo, iw_hi);
                    for (int co = 0; co < d.co; ++co) {
                        const float wv = w[idx4(ci, co, kh, kw, d.co, d.k, d.k)];
                        float* oplane = out + idx4(n, co, 0, 0, d.co, d.ho, d.wo);
                        for (int ih = ih_lo; ih <= ih_hi; ++ih) {
                            const float* irow = iplane + static_cast<std::int64_t>(ih) * d.wi;
                            float* orow = oplane + static_cast<std::int64_t>(ih * d.stride - d.pad + kh) * d.wo - d.pad + kw;
                            for (int iw = iw_lo; iw <= iw_hi; ++iw) orow[iw * d.stride] += wv * irow[iw];
                        }
                    }
                }
            }
        }
    }
}

void convt_backward(const float* in, const float* w, const float* gout, float* gin, float* gw, float* gb,
                    const ConvTDims& d) {
    for (int n = 0; n < d.n; ++n) {
        if (gb) {
            for (int co = 0; co < d.co; ++co) {
                const float* gplane = gout + idx4(n, co, 0, 0, d.co, d.ho, d.wo);
                double acc = 0.0;
                const std::int64_t cnt = static_cast<std::int64_t>(d.ho) * d.wo;
                for (std::int64_t i = 0; i < cnt; ++i) acc += gplane[i];
                gb[co] += static_cast<float>(acc);
            }
        }
        for (int ci = 0; ci < d.ci; ++ci) {
            const float* iplane = in + idx4(n, ci, 0, 0, d.ci, d.hi, d.wi);
            float* giplane = gin ? gin + idx4(n, ci, 0, 0, d.ci, d.hi, d.wi) : nullptr;
            for (int kh = 0; kh < d.k; ++kh) {
                int ih_lo, ih_hi;
                out_range(d.ho, d.hi, d.stride, d.pad, kh, ih_lo, ih_hi);
                for (int kw = 0; kw < d.k; ++kw) {
                    int iw_lo, iw_hi;
                    out_range(d.wo, d.wi, d.stride, d.pad, kw, iw_lo, iw_hi);
                    for (int co = 0; co < d.co; ++co) {
                        const float wv = w[idx4(ci, co, kh, kw, d.co, d.k, d.k)];
                        const float* gplane = gout + idx4(n, co, 0, 0, d.co, d.ho, d.wo);
                        double gw_acc = 0.0;
                        for (int ih = ih_lo; ih <= ih_hi; ++ih) {
                            const float* irow = iplane + static_cast<std::int64_t>(ih) * d.wi;
                            float* girow = giplane ? giplane + static_cast<std::int64_t>(ih) * d.wi : nullptr;
                            const float* grow = gplane + static_cast<std::int64_t>(ih * d.stride - d.pad + kh) * d.wo - d.pad + kw;
                            for (int iw = iw_lo; iw <= iw_hi; ++iw) {
                                const float g = grow[iw * d.stride];
                                gw_acc += static_cast<double>(g) * irow[iw];
                                if (girow) girow[iw] += g * wv;
                            }
                        }
                        if (gw) gw[idx4(ci, co, kh, kw, d.co, d.k, d.k)] += static_cast<float>(gw_acc);
                    }
                }
            }
        }
    }
}

} // namespace es::kernels
