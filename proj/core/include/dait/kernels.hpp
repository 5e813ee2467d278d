// Copyright (c) 2026, DAIT Contributors
// SPDX-License-Identifier: Apache-2.0
//
// Forward/backward numeric kernels shared by the pure-inference path and the
// autodiff graph. Convolutions go through im2col + GEMM.

#pragma once

#include "dait/tensor.hpp"

namespace dait {

struct ConvDims {
    std::int64_t batch, in_ch, in_h, in_w;
    std::int64_t out_ch, kernel, stride, pad;
    std::int64_t out_h, out_w;
};

ConvDims conv_dims(const Tensor& x, const Tensor& w, std::int64_t stride, std::int64_t pad);

// x: (B, Ci, H, W), w: (Co, Ci, K, K), b: (Co) -> (B, Co, Ho, Wo)
Tensor conv2d_forward(const Tensor& x, const Tensor& w, const Tensor& b, std::int64_t stride, std::int64_t pad);
void conv2d_backward(const Tensor& x, const Tensor& w, const Tensor& grad_out, std::int64_t stride,
                     std::int64_t pad, Tensor* grad_x, Tensor* grad_w, Tensor* grad_b);

// x: (B, I), w: (O, I), b: (O) -> (B, O)
Tensor linear_forward(const Tensor& x, const Tensor& w, const Tensor& b);
void linear_backward(const Tensor& x, const Tensor& w, const Tensor& grad_out, Tensor* grad_x, Tensor* grad_w,
                     Tensor* grad_b);

Tensor relu_forward(const Tensor& x);
Tensor relu_backward(const Tensor& x, const Tensor& grad_out);
Tensor tanh_forward(const Tensor& x);
Tensor tanh_backward(const Tensor& y, const Tensor& grad_out);  // y = tanh(x)

// (B, C, H, W) -> (B, C)
Tensor global_avg_pool_forward(const Tensor& x);
Tensor global_avg_pool_backward(const Tensor& x, const Tensor& grad_out);

// (B, C, H, W) -> (B, C, oh, ow); window i covers [floor(i*H/oh), ceil((i+1)*H/oh)).
Tensor adaptive_avg_pool_forward(const Tensor& x, std::int64_t oh, std::int64_t ow);
Tensor adaptive_avg_pool_backward(const Tensor& x, const Tensor& grad_out, std::int64_t oh, std::int64_t ow);

// Row-wise L2 normalization of a (B, D) matrix; throws DegenerateInputError
// naming the offending row if a norm underflows. `who` labels the operand.
Tensor l2_normalize_rows(const Tensor& x, const char* who);
Tensor l2_normalize_rows_backward(const Tensor& x, const Tensor& grad_out);

// Numerically stable row softmax / log-softmax of (B, N).
Tensor softmax_rows(const Tensor& x);
Tensor log_softmax_rows(const Tensor& x);

}  // namespace dait
