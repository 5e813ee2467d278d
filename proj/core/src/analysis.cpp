// Copyright (c) 2026, DAIT Contributors
// SPDX-License-Identifier: Apache-2.0

#include "dait/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "dait/kernels.hpp"

namespace dait {

void FeatureDump::validate() const {
    if (features.ndim() != 2) throw ContractError("feature dump must be (M, D), got " + features.shape_str());
    if (static_cast<std::int64_t>(labels.size()) != features.dim(0))
        throw ContractError("feature dump labels do not match row count");
    if (!features.all_finite()) throw ContractError("feature dump contains non-finite entries");
}

namespace {

// Column-centered copy.
Tensor center_columns(const Tensor& x) {
    Tensor c = x;
    const std::int64_t m = x.dim(0), d = x.dim(1);
    for (std::int64_t j = 0; j < d; ++j) {
        double mean = 0.0;
        for (std::int64_t i = 0; i < m; ++i) mean += x.at2(i, j);
        mean /= static_cast<double>(m);
        for (std::int64_t i = 0; i < m; ++i) c.at2(i, j) -= mean;
    }
    return c;
}

double frob_norm(const Tensor& x) {
    double s = 0.0;
    for (std::int64_t i = 0; i < x.numel(); ++i) s += x[i] * x[i];
    return std::sqrt(s);
}

}  // namespace

double linear_cka(const Tensor& x, const Tensor& y) {
    if (x.ndim() != 2 || y.ndim() != 2) throw ContractError("linear_cka expects 2-D matrices");
    if (x.dim(0) != y.dim(0))
        throw ContractError("linear_cka row counts differ: " + x.shape_str() + " vs " + y.shape_str());
    if (x.dim(0) < 3) throw ContractError("linear_cka needs at least 3 rows");
    const Tensor xc = center_columns(x);
    const Tensor yc = center_columns(y);
    const double cross = frob_norm(matmul_tn(yc, xc));  // ||Yc^T Xc||_F
    const double xx = frob_norm(matmul_tn(xc, xc));
    const double yy = frob_norm(matmul_tn(yc, yc));
    if (!(xx > 0.0))
        throw DegenerateInputError("linear_cka: first argument has zero variance (all rows identical)");
    if (!(yy > 0.0))
        throw DegenerateInputError("linear_cka: second argument has zero variance (all rows identical)");
    return (cross * cross) / (xx * yy);
}

Tensor similarity_matrix(const FeatureDump& dump) {
    dump.validate();
    std::int64_t num_classes = 0;
    for (std::int64_t l : dump.labels) {
        if (l < 0) throw ContractError("similarity_matrix: negative label");
        num_classes = std::max(num_classes, l + 1);
    }
    const std::int64_t d = dump.dim();
    Tensor means({num_classes, d});
    std::vector<std::int64_t> counts(static_cast<std::size_t>(num_classes), 0);
    for (std::int64_t i = 0; i < dump.rows(); ++i) {
        const std::int64_t c = dump.labels[static_cast<std::size_t>(i)];
        ++counts[static_cast<std::size_t>(c)];
        for (std::int64_t j = 0; j < d; ++j) means.at2(c, j) += dump.features.at2(i, j);
    }
    for (std::int64_t c = 0; c < num_classes; ++c) {
        if (counts[static_cast<std::size_t>(c)] == 0)
            throw ContractError("similarity_matrix: class " + std::to_string(c) + " has no rows");
        for (std::int64_t j = 0; j < d; ++j) means.at2(c, j) /= static_cast<double>(counts[static_cast<std::size_t>(c)]);
    }
    const Tensor unit = l2_normalize_rows(means, "class mean");
    return matmul_nt(unit, unit);
}

void write_feature_dump(const FeatureDump& dump, const std::filesystem::path& path) {
    dump.validate();
    std::ofstream f(path);
    if (!f) throw IoError("cannot write feature dump " + path.string());
    if (!dump.source_tag.empty()) f << "# source: " << dump.source_tag << "\n";
    for (std::int64_t j = 0; j < dump.dim(); ++j) f << "f" << j << " ";
    f << "label\n";
    f << std::setprecision(17);
    for (std::int64_t i = 0; i < dump.rows(); ++i) {
        for (std::int64_t j = 0; j < dump.dim(); ++j) f << dump.features.at2(i, j) << " ";
        f << dump.labels[static_cast<std::size_t>(i)] << "\n";
    }
    if (!f) throw IoError("failed writing feature dump " + path.string());
}

FeatureDump read_feature_dump(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot read feature dump " + path.string());
    FeatureDump dump;
    std::string line;
    std::int64_t dim = -1;
    std::vector<double> values;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        if (line[0] == '#') {
            const auto pos = line.find("source: ");
            if (pos != std::string::npos) dump.source_tag = line.substr(pos + 8);
            continue;
        }
        std::istringstream is(line);
        if (dim < 0) {  // header row
            std::string tok;
            std::int64_t cols = 0;
            while (is >> tok) ++cols;
            dim = cols - 1;
            if (dim < 1) throw IoError("feature dump header malformed: " + path.string());
            continue;
        }
        double v;
        for (std::int64_t j = 0; j < dim; ++j) {
            if (!(is >> v)) throw IoError("feature dump row truncated: " + path.string());
            values.push_back(v);
        }
        std::int64_t label;
        if (!(is >> label)) throw IoError("feature dump label missing: " + path.string());
        dump.labels.push_back(label);
    }
    if (dim < 1) throw IoError("feature dump has no header: " + path.string());
    dump.features = Tensor({static_cast<std::int64_t>(dump.labels.size()), dim}, std::move(values));
    dump.validate();
    return dump;
}

}  // namespace dait
