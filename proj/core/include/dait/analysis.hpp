// Copyright (c) 2026, DAIT Contributors
// SPDX-License-Identifier: Apache-2.0
//
// Representation diagnostics: linear CKA, class-mean similarity matrices,
// and columnar feature dumps for external projection tooling.

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dait/tensor.hpp"

namespace dait {

struct FeatureDump {
    Tensor features;                    // (M, D)
    std::vector<std::int64_t> labels;   // length M
    std::string source_tag;             // encoder role + checkpoint digest

    void validate() const;
    std::int64_t rows() const { return features.dim(0); }
    std::int64_t dim() const { return features.dim(1); }
};

// Linear CKA between two representations with the same row count (M >= 3);
// columns are centered internally. Symmetric, in [0, 1] up to rounding.
double linear_cka(const Tensor& x, const Tensor& y);

// (N, N) cosine similarities between class-mean features; every class in
// [0, max label] must have at least one row.
Tensor similarity_matrix(const FeatureDump& dump);

// Columnar text round trip: header "f0 f1 ... f<D-1> label", one row per item.
void write_feature_dump(const FeatureDump& dump, const std::filesystem::path& path);
FeatureDump read_feature_dump(const std::filesystem::path& path);

}  // namespace dait
