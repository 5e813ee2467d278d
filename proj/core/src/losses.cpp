// Copyright (c) 2026, DAIT Contributors
// SPDX-License-Identifier: Apache-2.0

#include "dait/losses.hpp"

#include <cmath>

namespace dait {

void FeatureBatch::validate(const char* who) const {
    if (values.ndim() != 2) throw ContractError(std::string(who) + " must be (B, D), got " + values.shape_str());
    if (values.dim(0) < 1 || values.dim(1) < 1)
        throw ContractError(std::string(who) + " needs B >= 1 and D >= 1");
    if (!values.all_finite()) throw ContractError(std::string(who) + " contains non-finite entries");
}

void ClassAnchors::validate() const {
    if (values.ndim() != 2) throw ContractError("anchors must be (N, D), got " + values.shape_str());
    if (!values.all_finite()) throw ContractError("anchors contain non-finite entries");
    if (!class_names.empty() && static_cast<std::int64_t>(class_names.size()) != values.dim(0))
        throw ContractError("anchor class_names size does not match row count");
    for (std::int64_t i = 0; i < values.dim(0); ++i) {
        double n2 = 0.0;
        for (std::int64_t j = 0; j < values.dim(1); ++j) n2 += values.at2(i, j) * values.at2(i, j);
        if (!(n2 > 0.0)) throw DegenerateInputError("anchor row " + std::to_string(i) + " has zero norm");
    }
}

void FeatureMap::validate(const char* who) const {
    if (values.ndim() != 4)
        throw ContractError(std::string(who) + " must be (B, D, H, W), got " + values.shape_str());
    if (values.dim(2) < 1 || values.dim(3) < 1) throw ContractError(std::string(who) + " needs H, W >= 1");
    if (!values.all_finite()) throw ContractError(std::string(who) + " contains non-finite entries");
}

void LabelBatch::validate(std::int64_t num_classes) const {
    for (std::size_t i = 0; i < indices.size(); ++i)
        if (indices[i] < 0 || indices[i] >= num_classes)
            throw ContractError("label " + std::to_string(indices[i]) + " at position " + std::to_string(i) +
                                " outside [0, " + std::to_string(num_classes) + ")");
}

void Temperature::validate() const {
    if (!(value > 0.0)) throw ContractError("temperature must be positive");
}

KlOrder kl_order_from_string(const std::string& s) {
    if (s == "as_printed") return KlOrder::as_printed;
    if (s == "teacher_first") return KlOrder::teacher_first;
    throw ConfigError("losses.kl_order must be 'as_printed' or 'teacher_first', got '" + s + "'");
}

std::string to_string(KlOrder o) { return o == KlOrder::as_printed ? "as_printed" : "teacher_first"; }

// --- cosine ------------------------------------------------------------------

Tensor cosine_matrix(const FeatureBatch& features, const ClassAnchors& anchors) {
    features.validate("features");
    anchors.validate();
    if (features.dim() != anchors.dim())
        throw ContractError("feature dim " + std::to_string(features.dim()) + " != anchor dim " +
                            std::to_string(anchors.dim()));
    return matmul_nt(l2_normalize_rows(features.values, "feature"), l2_normalize_rows(anchors.values, "anchor"));
}

Var cosine_matrix(const Var& features, const Tensor& anchors) {
    return vmatmul_nt(vl2_normalize_rows(features, "feature"),
                      make_constant(l2_normalize_rows(anchors, "anchor")));
}

Var cosine_matrix(const Var& features, const Var& anchors) {
    return vmatmul_nt(vl2_normalize_rows(features, "feature"), vl2_normalize_rows(anchors, "anchor"));
}

// --- temperature-scaled KL ----------------------------------------------------

namespace {

// loss = T^2 * mean_i KL(P_i || Q_i) with P from the student side when
// order == as_printed, from the teacher side otherwise. Returns the scalar
// and, when grad != nullptr, d loss / d student_scores.
double temperature_kl(const Tensor& student_scores, const Tensor& teacher_scores, double T, KlOrder order,
                      Tensor* grad) {
    require_same_shape(student_scores, teacher_scores, "temperature_kl");
    const std::int64_t B = student_scores.dim(0), N = student_scores.dim(1);
    Tensor s = student_scores * (1.0 / T);
    Tensor t = teacher_scores * (1.0 / T);
    const Tensor log_s = log_softmax_rows(s);
    const Tensor log_t = log_softmax_rows(t);
    double total = 0.0;
    if (grad) *grad = Tensor::zeros(student_scores.shape());
    for (std::int64_t i = 0; i < B; ++i) {
        double kl = 0.0;
        if (order == KlOrder::as_printed) {
            for (std::int64_t j = 0; j < N; ++j)
                kl += std::exp(log_s.at2(i, j)) * (log_s.at2(i, j) - log_t.at2(i, j));
        } else {
            for (std::int64_t j = 0; j < N; ++j)
                kl += std::exp(log_t.at2(i, j)) * (log_t.at2(i, j) - log_s.at2(i, j));
        }
        total += kl;
        if (grad) {
            // d(T^2/B * KL_i)/d student_scores_ij; one 1/T from the softmax argument.
            const double c = T / static_cast<double>(B);
            for (std::int64_t j = 0; j < N; ++j) {
                const double p_s = std::exp(log_s.at2(i, j));
                if (order == KlOrder::as_printed)
                    grad->at2(i, j) = c * p_s * ((log_s.at2(i, j) - log_t.at2(i, j)) - kl);
                else
                    grad->at2(i, j) = c * (p_s - std::exp(log_t.at2(i, j)));
            }
        }
    }
    return T * T * total / static_cast<double>(B);
}

Var kl_var(const Var& student, Tensor teacher, Temperature T, KlOrder order, const char* name) {
    T.validate();
    if (!student->value.same_shape(teacher))
        throw ContractError(std::string(name) + ": shape mismatch " + student->value.shape_str() + " vs " +
                            teacher.shape_str());
    const double value = temperature_kl(student->value, teacher, T.value, order, nullptr);
    const double temp = T.value;
    return make_op(Tensor::scalar(value), {student}, [teacher = std::move(teacher), temp, order](Node& n) {
        Tensor g;
        temperature_kl(n.parents[0]->value, teacher, temp, order, &g);
        g *= n.grad.item();
        n.parents[0]->accumulate(g);
    });
}

}  // namespace

Var sia_loss(const Var& cos_student, const Tensor& cos_teacher, Temperature T, KlOrder order) {
    return kl_var(cos_student, cos_teacher, T, order, "sia_loss");
}

double sia_loss(const Tensor& cos_student, const Tensor& cos_teacher, Temperature T, KlOrder order) {
    T.validate();
    require_same_shape(cos_student, cos_teacher, "sia_loss");
    return temperature_kl(cos_student, cos_teacher, T.value, order, nullptr);
}

Var logit_kd_loss(const Var& student_logits, const Tensor& teacher_logits, Temperature T, KlOrder order) {
    return kl_var(student_logits, teacher_logits, T, order, "logit_kd_loss");
}

double logit_kd_loss(const LogitBatch& student_logits, const LogitBatch& teacher_logits, Temperature T,
                     KlOrder order) {
    T.validate();
    require_same_shape(student_logits.values, teacher_logits.values, "logit_kd_loss");
    return temperature_kl(student_logits.values, teacher_logits.values, T.value, order, nullptr);
}

// --- IRA -----------------------------------------------------------------------

namespace {

double mean_abs_diff(const Tensor& a, const Tensor& b, Tensor* grad) {
    require_same_shape(a, b, "ira_loss");
    const double inv = 1.0 / static_cast<double>(a.numel());
    double total = 0.0;
    if (grad) *grad = Tensor::zeros(a.shape());
    for (std::int64_t i = 0; i < a.numel(); ++i) {
        const double d = a[i] - b[i];
        total += std::abs(d);
        if (grad) (*grad)[i] = d > 0.0 ? inv : (d < 0.0 ? -inv : 0.0);
    }
    return total * inv;
}

}  // namespace

Var ira_loss(const Var& z_student, const Tensor& z_teacher) {
    const double value = mean_abs_diff(z_student->value, z_teacher, nullptr);
    return make_op(Tensor::scalar(value), {z_student}, [z_teacher](Node& n) {
        Tensor g;
        mean_abs_diff(n.parents[0]->value, z_teacher, &g);
        g *= n.grad.item();
        n.parents[0]->accumulate(g);
    });
}

double ira_loss(const Tensor& z_student, const Tensor& z_teacher) {
    return mean_abs_diff(z_student, z_teacher, nullptr);
}

// --- classification --------------------------------------------------------------

namespace {

double cross_entropy(const Tensor& logits, const std::vector<std::int64_t>& labels, Tensor* grad) {
    if (logits.ndim() != 2) throw ContractError("cls_loss logits must be (B, N), got " + logits.shape_str());
    const std::int64_t B = logits.dim(0), N = logits.dim(1);
    if (static_cast<std::int64_t>(labels.size()) != B)
        throw ContractError("cls_loss: batch " + std::to_string(B) + " vs " + std::to_string(labels.size()) +
                            " labels");
    LabelBatch{labels}.validate(N);
    const Tensor log_p = log_softmax_rows(logits);
    double total = 0.0;
    for (std::int64_t i = 0; i < B; ++i) total -= log_p.at2(i, labels[static_cast<std::size_t>(i)]);
    if (grad) {
        *grad = Tensor::zeros(logits.shape());
        const double inv = 1.0 / static_cast<double>(B);
        for (std::int64_t i = 0; i < B; ++i)
            for (std::int64_t j = 0; j < N; ++j)
                grad->at2(i, j) =
                    (std::exp(log_p.at2(i, j)) - (labels[static_cast<std::size_t>(i)] == j ? 1.0 : 0.0)) * inv;
    }
    return total / static_cast<double>(B);
}

}  // namespace

Var cls_loss(const Var& logits, const LabelBatch& labels) {
    const double value = cross_entropy(logits->value, labels.indices, nullptr);
    return make_op(Tensor::scalar(value), {logits}, [labels](Node& n) {
        Tensor g;
        cross_entropy(n.parents[0]->value, labels.indices, &g);
        g *= n.grad.item();
        n.parents[0]->accumulate(g);
    });
}

double cls_loss(const LogitBatch& logits, const LabelBatch& labels) {
    return cross_entropy(logits.values, labels.indices, nullptr);
}

// --- SRA --------------------------------------------------------------------------

namespace {

double spatial_mse(const Tensor& a, const Tensor& b, Tensor* grad) {
    require_same_shape(a, b, "sra_loss");
    if (a.ndim() != 4) throw ContractError("sra_loss expects (B, D, H, W), got " + a.shape_str());
    const std::int64_t B = a.dim(0), sites = a.dim(2) * a.dim(3);
    const double inv = 1.0 / static_cast<double>(B * sites);
    double total = 0.0;
    if (grad) *grad = Tensor::zeros(a.shape());
    for (std::int64_t i = 0; i < a.numel(); ++i) {
        const double d = a[i] - b[i];
        total += d * d;
        if (grad) (*grad)[i] = 2.0 * d * inv;
    }
    return total * inv;
}

}  // namespace

Var sra_loss(const Var& map_student, const Tensor& map_teacher) {
    const double value = spatial_mse(map_student->value, map_teacher, nullptr);
    return make_op(Tensor::scalar(value), {map_student}, [map_teacher](Node& n) {
        Tensor g;
        spatial_mse(n.parents[0]->value, map_teacher, &g);
        g *= n.grad.item();
        n.parents[0]->accumulate(g);
    });
}

double sra_loss(const FeatureMap& map_student, const FeatureMap& map_teacher) {
    map_student.validate("student map");
    map_teacher.validate("teacher map");
    return spatial_mse(map_student.values, map_teacher.values, nullptr);
}

// --- stage totals -------------------------------------------------------------------

namespace {

void check_lambda(double lam) {
    if (!(lam >= 0.0 && lam <= 1.0))
        throw ContractError("lambda must lie in [0, 1], got " + std::to_string(lam));
}

}  // namespace

Var stage1_total(const Var& sia, const Var& ira, const Var& cls, double lam) {
    check_lambda(lam);
    return vcombine({{lam, cls}, {(1.0 - lam) / 2.0, sia}, {(1.0 - lam) / 2.0, ira}});
}

double stage1_total(double sia, double ira, double cls, double lam) {
    check_lambda(lam);
    return lam * cls + (1.0 - lam) / 2.0 * (sia + ira);
}

Var stage2_total(const Var& distill, const Var& cls, double lam) {
    check_lambda(lam);
    return vcombine({{lam, cls}, {1.0 - lam, distill}});
}

double stage2_total(double distill, double cls, double lam) {
    check_lambda(lam);
    return lam * cls + (1.0 - lam) * distill;
}

}  // namespace dait
