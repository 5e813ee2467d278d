// Copyright (c) 2026, DAIT Contributors
// SPDX-License-Identifier: Apache-2.0
//
// Dense row-major double tensor. Small by design: the desk-scale encoders
// and losses need 1-4D arrays, elementwise math, and GEMM-backed matmul.

#pragma once

#include <cstdint>
#include <initializer_list>
#include <string>
#include <vector>

#include "dait/errors.hpp"

namespace dait {

class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<std::int64_t> shape);
    Tensor(std::vector<std::int64_t> shape, std::vector<double> data);

    static Tensor zeros(std::vector<std::int64_t> shape) { return Tensor(std::move(shape)); }
    static Tensor full(std::vector<std::int64_t> shape, double value);
    static Tensor scalar(double value) { return Tensor({1}, {value}); }
    // Row-major 2-D convenience for tests and fixtures.
    static Tensor from_rows(const std::vector<std::vector<double>>& rows);

    const std::vector<std::int64_t>& shape() const { return shape_; }
    std::int64_t dim(std::size_t i) const { return shape_.at(i); }
    std::size_t ndim() const { return shape_.size(); }
    std::int64_t numel() const { return static_cast<std::int64_t>(data_.size()); }
    bool empty() const { return data_.empty(); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::vector<double>& vec() { return data_; }
    const std::vector<double>& vec() const { return data_; }

    double& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
    double operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }

    double& at2(std::int64_t i, std::int64_t j) { return data_[static_cast<std::size_t>(i * shape_[1] + j)]; }
    double at2(std::int64_t i, std::int64_t j) const { return data_[static_cast<std::size_t>(i * shape_[1] + j)]; }
    double& at4(std::int64_t b, std::int64_t c, std::int64_t h, std::int64_t w) {
        return data_[static_cast<std::size_t>(((b * shape_[1] + c) * shape_[2] + h) * shape_[3] + w)];
    }
    double at4(std::int64_t b, std::int64_t c, std::int64_t h, std::int64_t w) const {
        return data_[static_cast<std::size_t>(((b * shape_[1] + c) * shape_[2] + h) * shape_[3] + w)];
    }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }
    bool all_finite() const;
    double item() const;

    Tensor reshaped(std::vector<std::int64_t> shape) const;

    Tensor& operator+=(const Tensor& o);
    Tensor& operator-=(const Tensor& o);
    Tensor& operator*=(double s);

    std::string shape_str() const;

private:
    std::vector<std::int64_t> shape_;
    std::vector<double> data_;
};

Tensor operator+(const Tensor& a, const Tensor& b);
Tensor operator-(const Tensor& a, const Tensor& b);
Tensor operator*(const Tensor& a, double s);

// out(i,k) = sum_j a(i,j) * b(j,k)
Tensor matmul(const Tensor& a, const Tensor& b);
// out(i,k) = sum_j a(i,j) * b(k,j)   (b transposed)
Tensor matmul_nt(const Tensor& a, const Tensor& b);
// out(j,k) = sum_i a(i,j) * b(i,k)   (a transposed)
Tensor matmul_tn(const Tensor& a, const Tensor& b);

void require_same_shape(const Tensor& a, const Tensor& b, const std::string& op);

}  // namespace dait
