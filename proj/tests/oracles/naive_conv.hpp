#pragma once

// Independent quintuple-loop convolution oracle. Accumulation per output
// element starts from the bias and walks (cin,kh,kw) in ascending order with a
// single float accumulator; the production kernel must match it bit for bit.

#include "es/tensor.hpp"

namespace oracles {

inline es::Tensor naive_conv2d(const es::Tensor& in, const es::Tensor& w, const es::Tensor& b, int stride, int pad) {
    const int N = in.shape[0], Ci = in.shape[1], H = in.shape[2], W = in.shape[3];
    const int Co = w.shape[0], K = w.shape[2];
    const int Ho = (H + 2 * pad - K) / stride + 1;
    const int Wo = (W + 2 * pad - K) / stride + 1;
    es::Tensor out = es::Tensor::zeros({N, Co, Ho, Wo});
    for (int n = 0; n < N; ++n)
        for (int co = 0; co < Co; ++co)
            for (int oh = 0; oh < Ho; ++oh)
                for (int ow = 0; ow < Wo; ++ow) {
                    float acc = b.v[co];
                    for (int ci = 0; ci < Ci; ++ci)
                        for (int kh = 0; kh < K; ++kh)
                            for (int kw = 0; kw < K; ++kw) {
                                const int ih = oh * stride - pad + kh;
                                const int iw = ow * stride - pad + kw;
                                if (ih < 0 || ih >= H || iw < 0 || iw >= W) continue;
                                acc += w.at4(co, ci, kh, kw) * in.at4(n, ci, ih, iw);
                            }
                    out.at4(n, co, oh, ow) = acc;
                }
    return out;
}

inline es::Tensor naive_conv_transpose2d(const es::Tensor& in, const es::Tensor& w, const es::Tensor& b, int stride,
                                         int pad, int out_pad) {
    const int N = in.shape[0], Ci = in.shape[1], Hi = in.shape[2], Wi = in.shape[3];
    const int Co = w.shape[1], K = w.shape[2];
    const int Ho = (Hi - 1) * stride - 2 * pad + K + out_pad;
    const int Wo = (Wi - 1) * stride - 2 * pad + K + out_pad;
    es::Tensor out = es::Tensor::zeros({N, Co, Ho, Wo});
    for (int n = 0; n < N; ++n)
        for (int co = 0; co < Co; ++co)
            for (int oh = 0; oh < Ho; ++oh)
                for (int ow = 0; ow < Wo; ++ow) {
                    float acc = b.v[co];
                    for (int ci = 0; ci < Ci; ++ci)
                        for (int kh = 0; kh < K; ++kh)
                            for (int kw = 0; kw < K; ++kw) {
                                const int num_h = oh + pad - kh;
                                const int num_w = ow + pad - kw;
                                if (num_h < 0 || num_w < 0 || num_h % stride || num_w % stride) continue;
                                const int ih = num_h / stride;
                                const int iw = num_w / stride;
                                if (ih >= Hi || iw >= Wi) continue;
                                acc += w.at4(ci, co, kh, kw) * in.at4(n, ci, ih, iw);
                            }
                    out.at4(n, co, oh, ow) = acc;
                }
    return out;
}

} // namespace oracles
