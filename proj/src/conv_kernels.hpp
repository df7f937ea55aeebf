#pragma once

// Raw convolution kernels shared by the tape ops. Accumulation over
// (cin,kh,kw) is sequential per output element, matching the loop oracle
// bit for bit when built without FMA contraction.

namespace es::kernels {

struct ConvDims {
    int n, ci, h, w;
    int co, k;
    int stride, pad;
    int ho, wo;
};

void conv2d_forward(const float* in, const float* w, const float* b, float* out, const ConvDims& d);
void conv2d_backward(const float* in, const float* w, const float* gout, float* gin, float* gw, float* gb,
                     const ConvDims& d);

struct ConvTDims {
    int n, ci, hi, wi;
    int co, k;
    int stride, pad, out_pad;
    int ho, wo;
};

void convt_forward(const float* in, const float* w, const float* b, float* out, const ConvTDims& d);
void convt_backward(const float* in, const float* w, const float* gout, float* gin, float* gw, float* gb,
                    const ConvTDims& d);

} // namespace es::kernels
