// Copyright (c) 2026, DAIT Contributors
// SPDX-License-Identifier: Apache-2.0

#include "dait/kernels.hpp"

#include <algorithm>
#include <cmath>

namespace dait {

namespace {

void require_4d(const Tensor& t, const char* name) {
    if (t.ndim() != 4) throw ContractError(std::string(name) + " must be 4-D, got " + t.shape_str());
}

// im2col: x (B,Ci,H,W) -> cols (B*Ho*Wo, Ci*K*K), zero padding.
Tensor im2col(const Tensor& x, const ConvDims& d) {
    Tensor cols({d.batch * d.out_h * d.out_w, d.in_ch * d.kernel * d.kernel});
    double* cp = cols.data();
    for (std::int64_t b = 0; b < d.batch; ++b) {
        for (std::int64_t oh = 0; oh < d.out_h; ++oh) {
            for (std::int64_t ow = 0; ow < d.out_w; ++ow) {
                const std::int64_t ih0 = oh * d.stride - d.pad;
                const std::int64_t iw0 = ow * d.stride - d.pad;
                for (std::int64_t c = 0; c < d.in_ch; ++c) {
                    for (std::int64_t kh = 0; kh < d.kernel; ++kh) {
                        const std::int64_t ih = ih0 + kh;
                        for (std::int64_t kw = 0; kw < d.kernel; ++kw) {
                            const std::int64_t iw = iw0 + kw;
                            *cp++ = (ih >= 0 && ih < d.in_h && iw >= 0 && iw < d.in_w) ? x.at4(b, c, ih, iw) : 0.0;
                        }
                    }
                }
            }
        }
    }
    return cols;
}

// col2im: scatter-add of cols gradient back into the input layout.
void col2im(const Tensor& cols, const ConvDims& d, Tensor& grad_x) {
    const double* cp = cols.data();
    for (std::int64_t b = 0; b < d.batch; ++b) {
        for (std::int64_t oh = 0; oh < d.out_h; ++oh) {
            for (std::int64_t ow = 0; ow < d.out_w; ++ow) {
                const std::int64_t ih0 = oh * d.stride - d.pad;
                const std::int64_t iw0 = ow * d.stride - d.pad;
                for (std::int64_t c = 0; c < d.in_ch; ++c) {
                    for (std::int64_t kh = 0; kh < d.kernel; ++kh) {
                        const std::int64_t ih = ih0 + kh;
                        for (std::int64_t kw = 0; kw < d.kernel; ++kw) {
                            const std::int64_t iw = iw0 + kw;
                            if (ih >= 0 && ih < d.in_h && iw >= 0 && iw < d.in_w) grad_x.at4(b, c, ih, iw) += *cp;
                            ++cp;
                        }
                    }
                }
            }
        }
    }
}

}  // namespace

ConvDims conv_dims(const Tensor& x, const Tensor& w, std::int64_t stride, std::int64_t pad) {
    require_4d(x, "conv input");
    require_4d(w, "conv weight");
    if (w.dim(2) != w.dim(3)) throw ContractError("conv kernel must be square");
    if (x.dim(1) != w.dim(1))
        throw ContractError("conv channel mismatch: input " + x.shape_str() + " weight " + w.shape_str());
    if (stride < 1) throw ContractError("conv stride must be >= 1");
    ConvDims d;
    d.batch = x.dim(0);
    d.in_ch = x.dim(1);
    d.in_h = x.dim(2);
    d.in_w = x.dim(3);
    d.out_ch = w.dim(0);
    d.kernel = w.dim(2);
    d.stride = stride;
    d.pad = pad;
    d.out_h = (d.in_h + 2 * pad - d.kernel) / stride + 1;
    d.out_w = (d.in_w + 2 * pad - d.kernel) / stride + 1;
    if (d.out_h < 1 || d.out_w < 1) throw ContractError("conv output would be empty");
    return d;
}

Tensor conv2d_forward(const Tensor& x, const Tensor& w, const Tensor& b, std::int64_t stride, std::int64_t pad) {
    const ConvDims d = conv_dims(x, w, stride, pad);
    if (b.numel() != d.out_ch) throw ContractError("conv bias size mismatch");
    const Tensor cols = im2col(x, d);
    const Tensor wmat = w.reshaped({d.out_ch, d.in_ch * d.kernel * d.kernel});
    Tensor flat = matmul_nt(cols, wmat);  // (B*Ho*Wo, Co)
    Tensor out({d.batch, d.out_ch, d.out_h, d.out_w});
    const std::int64_t sites = d.out_h * d.out_w;
    for (std::int64_t bi = 0; bi < d.batch; ++bi)
        for (std::int64_t s = 0; s < sites; ++s)
            for (std::int64_t c = 0; c < d.out_ch; ++c)
                out[((bi * d.out_ch + c) * sites) + s] = flat.at2(bi * sites + s, c) + b[c];
    return out;
}

void conv2d_backward(const Tensor& x, const Tensor& w, const Tensor& grad_out, std::int64_t stride,
                     std::int64_t pad, Tensor* grad_x, Tensor* grad_w, Tensor* grad_b) {
    const ConvDims d = conv_dims(x, w, stride, pad);
    const std::int64_t sites = d.out_h * d.out_w;
    // grad_out (B, Co, Ho, Wo) -> (B*Ho*Wo, Co)
    Tensor gflat({d.batch * sites, d.out_ch});
    for (std::int64_t bi = 0; bi < d.batch; ++bi)
        for (std::int64_t s = 0; s < sites; ++s)
            for (std::int64_t c = 0; c < d.out_ch; ++c)
                gflat.at2(bi * sites + s, c) = grad_out[((bi * d.out_ch + c) * sites) + s];
    const Tensor wmat = w.reshaped({d.out_ch, d.in_ch * d.kernel * d.kernel});
    if (grad_x) {
        Tensor gcols = matmul(gflat, wmat);  // (B*Ho*Wo, Ci*K*K)
        *grad_x = Tensor::zeros(x.shape());
        col2im(gcols, d, *grad_x);
    }
    if (grad_w) {
        const Tensor cols = im2col(x, d);
        Tensor gw = matmul_tn(gflat, cols);  // (Co, Ci*K*K)
        *grad_w = gw.reshaped(w.shape());
    }
    if (grad_b) {
        *grad_b = Tensor::zeros({d.out_ch});
        for (std::int64_t r = 0; r < gflat.dim(0); ++r)
            for (std::int64_t c = 0; c < d.out_ch; ++c) (*grad_b)[c] += gflat.at2(r, c);
    }
}

Tensor linear_forward(const Tensor& x, const Tensor& w, const Tensor& b) {
    if (x.ndim() != 2 || w.ndim() != 2) throw ContractError("linear expects 2-D input and weight");
    if (x.dim(1) != w.dim(1)) throw ContractError("linear dims: x " + x.shape_str() + " w " + w.shape_str());
    if (b.numel() != w.dim(0)) throw ContractError("linear bias size mismatch");
    Tensor out = matmul_nt(x, w);
    for (std::int64_t i = 0; i < out.dim(0); ++i)
        for (std::int64_t j = 0; j < out.dim(1); ++j) out.at2(i, j) += b[j];
    return out;
}

void linear_backward(const Tensor& x, const Tensor& w, const Tensor& grad_out, Tensor* grad_x, Tensor* grad_w,
                     Tensor* grad_b) {
    if (grad_x) *grad_x = matmul(grad_out, w);
    if (grad_w) *grad_w = matmul_tn(grad_out, x);
    if (grad_b) {
        *grad_b = Tensor::zeros({w.dim(0)});
        for (std::int64_t i = 0; i < grad_out.dim(0); ++i)
            for (std::int64_t j = 0; j < grad_out.dim(1); ++j) (*grad_b)[j] += grad_out.at2(i, j);
    }
}

Tensor relu_forward(const Tensor& x) {
    Tensor y = x;
    for (double& v : y.vec()) v = std::max(0.0, v);
    return y;
}

Tensor relu_backward(const Tensor& x, const Tensor& grad_out) {
    Tensor g = grad_out;
    for (std::int64_t i = 0; i < g.numel(); ++i)
        if (x[i] <= 0.0) g[i] = 0.0;
    return g;
}

Tensor tanh_forward(const Tensor& x) {
    Tensor y = x;
    for (double& v : y.vec()) v = std::tanh(v);
    return y;
}

Tensor tanh_backward(const Tensor& y, const Tensor& grad_out) {
    Tensor g = grad_out;
    for (std::int64_t i = 0; i < g.numel(); ++i) g[i] *= 1.0 - y[i] * y[i];
    return g;
}

Tensor global_avg_pool_forward(const Tensor& x) {
    require_4d(x, "global_avg_pool input");
    const std::int64_t B = x.dim(0), C = x.dim(1), sites = x.dim(2) * x.dim(3);
    Tensor out({B, C});
    for (std::int64_t b = 0; b < B; ++b)
        for (std::int64_t c = 0; c < C; ++c) {
            double s = 0.0;
            const double* p = x.data() + (b * C + c) * sites;
            for (std::int64_t i = 0; i < sites; ++i) s += p[i];
            out.at2(b, c) = s / static_cast<double>(sites);
        }
    return out;
}

Tensor global_avg_pool_backward(const Tensor& x, const Tensor& grad_out) {
    const std::int64_t B = x.dim(0), C = x.dim(1), sites = x.dim(2) * x.dim(3);
    Tensor gx = Tensor::zeros(x.shape());
    for (std::int64_t b = 0; b < B; ++b)
        for (std::int64_t c = 0; c < C; ++c) {
            const double g = grad_out.at2(b, c) / static_cast<double>(sites);
            double* p = gx.data() + (b * C + c) * sites;
            for (std::int64_t i = 0; i < sites; ++i) p[i] = g;
        }
    return gx;
}

namespace {
inline std::int64_t win_start(std::int64_t i, std::int64_t in, std::int64_t out) { return (i * in) / out; }
inline std::int64_t win_end(std::int64_t i, std::int64_t in, std::int64_t out) {
    return ((i + 1) * in + out - 1) / out;
}
}  // namespace

Tensor adaptive_avg_pool_forward(const Tensor& x, std::int64_t oh, std::int64_t ow) {
    require_4d(x, "adaptive_avg_pool input");
    if (oh < 1 || ow < 1) throw ContractError("adaptive_avg_pool target must be >= 1");
    const std::int64_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    Tensor out({B, C, oh, ow});
    for (std::int64_t b = 0; b < B; ++b)
        for (std::int64_t c = 0; c < C; ++c)
            for (std::int64_t i = 0; i < oh; ++i) {
                const std::int64_t h0 = win_start(i, H, oh), h1 = win_end(i, H, oh);
                for (std::int64_t j = 0; j < ow; ++j) {
                    const std::int64_t w0 = win_start(j, W, ow), w1 = win_end(j, W, ow);
                    double s = 0.0;
                    for (std::int64_t h = h0; h < h1; ++h)
                        for (std::int64_t w = w0; w < w1; ++w) s += x.at4(b, c, h, w);
                    out.at4(b, c, i, j) = s / static_cast<double>((h1 - h0) * (w1 - w0));
                }
            }
    return out;
}

Tensor adaptive_avg_pool_backward(const Tensor& x, const Tensor& grad_out, std::int64_t oh, std::int64_t ow) {
    const std::int64_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    Tensor gx = Tensor::zeros(x.shape());
    for (std::int64_t b = 0; b < B; ++b)
        for (std::int64_t c = 0; c < C; ++c)
            for (std::int64_t i = 0; i < oh; ++i) {
                const std::int64_t h0 = win_start(i, H, oh), h1 = win_end(i, H, oh);
                for (std::int64_t j = 0; j < ow; ++j) {
                    const std::int64_t w0 = win_start(j, W, ow), w1 = win_end(j, W, ow);
                    const double g = grad_out.at4(b, c, i, j) / static_cast<double>((h1 - h0) * (w1 - w0));
                    for (std::int64_t h = h0; h < h1; ++h)
                        for (std::int64_t w = w0; w < w1; ++w) gx.at4(b, c, h, w) += g;
                }
            }
    return gx;
}

Tensor l2_normalize_rows(const Tensor& x, const char* who) {
    if (x.ndim() != 2) throw ContractError("l2_normalize_rows expects 2-D, got " + x.shape_str());
    Tensor y = x;
    const std::int64_t B = x.dim(0), D = x.dim(1);
    for (std::int64_t i = 0; i < B; ++i) {
        double n2 = 0.0;
        for (std::int64_t j = 0; j < D; ++j) n2 += x.at2(i, j) * x.at2(i, j);
        const double n = std::sqrt(n2);
        if (!(n > 1e-300))
            throw DegenerateInputError(std::string(who) + " row " + std::to_string(i) + " has zero norm");
        for (std::int64_t j = 0; j < D; ++j) y.at2(i, j) /= n;
    }
    return y;
}

Tensor l2_normalize_rows_backward(const Tensor& x, const Tensor& grad_out) {
    const std::int64_t B = x.dim(0), D = x.dim(1);
    Tensor gx({B, D});
    for (std::int64_t i = 0; i < B; ++i) {
        double n2 = 0.0;
        for (std::int64_t j = 0; j < D; ++j) n2 += x.at2(i, j) * x.at2(i, j);
        const double n = std::sqrt(n2);
        double dot = 0.0;  // <grad_out_i, y_i>
        for (std::int64_t j = 0; j < D; ++j) dot += grad_out.at2(i, j) * x.at2(i, j) / n;
        for (std::int64_t j = 0; j < D; ++j)
            gx.at2(i, j) = (grad_out.at2(i, j) - (x.at2(i, j) / n) * dot) / n;
    }
    return gx;
}

Tensor softmax_rows(const Tensor& x) {
    if (x.ndim() != 2) throw ContractError("softmax_rows expects 2-D, got " + x.shape_str());
    Tensor y = x;
    const std::int64_t B = x.dim(0), N = x.dim(1);
    for (std::int64_t i = 0; i < B; ++i) {
        double m = y.at2(i, 0);
        for (std::int64_t j = 1; j < N; ++j) m = std::max(m, y.at2(i, j));
        double s = 0.0;
        for (std::int64_t j = 0; j < N; ++j) {
            y.at2(i, j) = std::exp(y.at2(i, j) - m);
            s += y.at2(i, j);
        }
        for (std::int64_t j = 0; j < N; ++j) y.at2(i, j) /= s;
    }
    return y;
}

Tensor log_softmax_rows(const Tensor& x) {
    if (x.ndim() != 2) throw ContractError("log_softmax_rows expects 2-D, got " + x.shape_str());
    Tensor y = x;
    const std::int64_t B = x.dim(0), N = x.dim(1);
    for (std::int64_t i = 0; i < B; ++i) {
        double m = y.at2(i, 0);
        for (std::int64_t j = 1; j < N; ++j) m = std::max(m, y.at2(i, j));
        double s = 0.0;
        for (std::int64_t j = 0; j < N; ++j) s += std::exp(y.at2(i, j) - m);
        const double lse = m + std::log(s);
        for (std::int64_t j = 0; j < N; ++j) y.at2(i, j) -= lse;
    }
    return y;
}

}  // namespace dait
