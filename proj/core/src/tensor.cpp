// Copyright (c) 2026, DAIT Contributors
// SPDX-License-Identifier: Apache-2.0

#include "dait/tensor.hpp"

#include "dait/digest.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <numeric>
#include <sstream>

namespace dait {

namespace {

std::int64_t shape_numel(const std::vector<std::int64_t>& shape) {
    std::int64_t n = 1;
    for (auto d : shape) {
        if (d < 0) throw ContractError("negative tensor dimension");
        n *= d;
    }
    return n;
}

using MatMap = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using ConstMatMap = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

}  // namespace

Tensor::Tensor(std::vector<std::int64_t> shape)
    : shape_(std::move(shape)), data_(static_cast<std::size_t>(shape_numel(shape_)), 0.0) {}

Tensor::Tensor(std::vector<std::int64_t> shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (shape_numel(shape_) != static_cast<std::int64_t>(data_.size()))
        throw ContractError("tensor data size does not match shape " + shape_str());
}

Tensor Tensor::full(std::vector<std::int64_t> shape, double value) {
    Tensor t(std::move(shape));
    std::fill(t.data_.begin(), t.data_.end(), value);
    return t;
}

Tensor Tensor::from_rows(const std::vector<std::vector<double>>& rows) {
    if (rows.empty()) throw ContractError("from_rows: empty input");
    const auto cols = static_cast<std::int64_t>(rows[0].size());
    Tensor t({static_cast<std::int64_t>(rows.size()), cols});
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (static_cast<std::int64_t>(rows[i].size()) != cols) throw ContractError("from_rows: ragged rows");
        for (std::int64_t j = 0; j < cols; ++j) t.at2(static_cast<std::int64_t>(i), j) = rows[i][static_cast<std::size_t>(j)];
    }
    return t;
}

bool Tensor::all_finite() const {
    for (double v : data_)
        if (!std::isfinite(v)) return false;
    return true;
}

double Tensor::item() const {
    if (data_.size() != 1) throw ContractError("item() on tensor with " + std::to_string(data_.size()) + " elements");
    return data_[0];
}

Tensor Tensor::reshaped(std::vector<std::int64_t> shape) const {
    if (shape_numel(shape) != numel()) throw ContractError("reshape element count mismatch");
    return Tensor(std::move(shape), data_);
}

Tensor& Tensor::operator+=(const Tensor& o) {
    require_same_shape(*this, o, "+=");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
    return *this;
}

Tensor& Tensor::operator-=(const Tensor& o) {
    require_same_shape(*this, o, "-=");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
    return *this;
}

Tensor& Tensor::operator*=(double s) {
    for (double& v : data_) v *= s;
    return *this;
}

std::string Tensor::shape_str() const {
    std::ostringstream os;
    os << "(";
    for (std::size_t i = 0; i < shape_.size(); ++i) os << (i ? "," : "") << shape_[i];
    os << ")";
    return os.str();
}

Tensor operator+(const Tensor& a, const Tensor& b) {
    Tensor r = a;
    r += b;
    return r;
}

Tensor operator-(const Tensor& a, const Tensor& b) {
    Tensor r = a;
    r -= b;
    return r;
}

Tensor operator*(const Tensor& a, double s) {
    Tensor r = a;
    r *= s;
    return r;
}

void require_same_shape(const Tensor& a, const Tensor& b, const std::string& op) {
    if (!a.same_shape(b))
        throw ContractError(op + ": shape mismatch " + a.shape_str() + " vs " + b.shape_str());
}

namespace {

void require_2d(const Tensor& t, const char* name) {
    if (t.ndim() != 2) throw ContractError(std::string(name) + " must be 2-D, got " + t.shape_str());
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_2d(a, "matmul lhs");
    require_2d(b, "matmul rhs");
    if (a.dim(1) != b.dim(0)) throw ContractError("matmul inner dims " + a.shape_str() + " x " + b.shape_str());
    Tensor out({a.dim(0), b.dim(1)});
    MatMap o(out.data(), a.dim(0), b.dim(1));
    o.noalias() = ConstMatMap(a.data(), a.dim(0), a.dim(1)) * ConstMatMap(b.data(), b.dim(0), b.dim(1));
    return out;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
    require_2d(a, "matmul_nt lhs");
    require_2d(b, "matmul_nt rhs");
    if (a.dim(1) != b.dim(1)) throw ContractError("matmul_nt inner dims " + a.shape_str() + " x " + b.shape_str());
    Tensor out({a.dim(0), b.dim(0)});
    MatMap o(out.data(), a.dim(0), b.dim(0));
    o.noalias() =
        ConstMatMap(a.data(), a.dim(0), a.dim(1)) * ConstMatMap(b.data(), b.dim(0), b.dim(1)).transpose();
    return out;
}

Tensor matmul_tn(const Tensor& a, const Tensor& b) {
    require_2d(a, "matmul_tn lhs");
    require_2d(b, "matmul_tn rhs");
    if (a.dim(0) != b.dim(0)) throw ContractError("matmul_tn inner dims " + a.shape_str() + " x " + b.shape_str());
    Tensor out({a.dim(1), b.dim(1)});
    MatMap o(out.data(), a.dim(1), b.dim(1));
    o.noalias() =
        ConstMatMap(a.data(), a.dim(0), a.dim(1)).transpose() * ConstMatMap(b.data(), b.dim(0), b.dim(1));
    return out;
}

std::string to_hex(std::uint64_t v) {
    static const char* digits = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i) {
        s[static_cast<std::size_t>(i)] = digits[v & 0xf];
        v >>= 4;
    }
    return s;
}

}  // namespace dait
