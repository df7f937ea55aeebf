#pragma once

#include <span>
#include <vector>

#include "es/autodiff.hpp"

namespace es {

// Elementwise.
Var add(Tape& tp, Var a, Var b);
Var sub(Tape& tp, Var a, Var b);
Var mul(Tape& tp, Var a, Var b);
Var scale(Tape& tp, Var a, float c);
Var add_scalar(Tape& tp, Var a, float c);
Var add_weighted(Tape& tp, Var a, Var b, float ca, float cb);
Var relu(Tape& tp, Var x);
Var sigmoid(Tape& tp, Var x);
Var exp_op(Tape& tp, Var x);

// Reductions accumulate in double before narrowing (stable grad checks).
Var sum_all(Tape& tp, Var x);
Var mean_all(Tape& tp, Var x);
/// sum((a-b)^2) without materializing the square node.
Var sum_sq_diff(Tape& tp, Var a, Var b);

// 2-D linear algebra (Eigen GEMM underneath).
Var matmul(Tape& tp, Var a, Var b);     // (m,k) x (k,n)
Var matmul_nt(Tape& tp, Var a, Var b);  // (m,k) x (n,k)^T -> (m,n)
Var matmul_tn(Tape& tp, Var a, Var b);  // (k,m)^T x (k,n) -> (m,n)
Var dense(Tape& tp, Var x, Var w, Var b); // x (n,in), w (out,in), b (out)

Var softmax_rows(Tape& tp, Var x);
Var layernorm_rows(Tape& tp, Var x, Var gamma, Var beta, float eps = 1e-5f);

// Structure.
Var reshape(Tape& tp, Var x, Shape s);
Var take_row(Tape& tp, Var x, int row);                 // (n,d) -> (d)
Var stack_rows(Tape& tp, std::span<const Var> rows);    // k x (d) -> (k,d)
Var slice_cols(Tape& tp, Var x, int c0, int len);       // (n,d) -> (n,len)
Var concat_cols(Tape& tp, std::span<const Var> parts);  // (n,di) -> (n,sum di)
/// out[i] = x[index[i]] over flat storage; exact inverse available by passing
/// the inverse permutation. Carrier for patchify/unpatchify.
Var permute_gather(Tape& tp, Var x, const std::vector<int>& index, Shape out_shape);
Var mean_rows(Tape& tp, Var x);           // (n,d) -> (d)
Var sub_row_broadcast(Tape& tp, Var x, Var row);

// Convolution stack. Input (N,Cin,H,W); conv weight (Cout,Cin,k,k); transposed
// conv weight (Cin,Cout,k,k). Cross-correlation convention; per-output-element
// accumulation runs in fixed (cin,kh,kw) order.
Var conv2d(Tape& tp, Var in, Var w, Var b, int stride, int pad);
Var conv_transpose2d(Tape& tp, Var in, Var w, Var b, int stride, int pad, int out_pad);
/// x (N,C,H,W) -> x * gamma[c] + beta[c]; the scale/shift fine-tune hook.
Var channel_affine(Tape& tp, Var x, Var gamma, Var beta);

/// Crop a (C,H,W) map to the pixel box [r0,r0+bh) x [c0,c0+bw) and resize the
/// crop bilinearly to (C,oh,ow). Linear in the input (fixed sampling weights).
Var crop_resize_bilinear(Tape& tp, Var map, int r0, int c0, int bh, int bw, int oh, int ow);

/// Mean over rows of -log softmax(logits)[label]; log-sum-exp stabilized,
/// double accumulation across rows.
Var cross_entropy_mean(Tape& tp, Var logits, const std::vector<int>& labels);

int conv_out_extent(int in, int k, int stride, int pad);
int convt_out_extent(int in, int k, int stride, int pad, int out_pad);

} // namespace es
