// Copyright (c) 2026, DAIT Contributors
// SPDX-License-Identifier: Apache-2.0
//
// Distillation and classification objectives for both training stages.
// Every loss takes the student-side operand as an autodiff Var and the
// teacher-side operand as a plain Tensor, so teacher targets are constants
// by construction and can never receive gradients. Scalar-value overloads
// wrap the inputs as constants and read the forward value.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dait/autodiff.hpp"
#include "dait/tensor.hpp"

namespace dait {

// --- domain types -----------------------------------------------------------

// Pooled embeddings, one row per batch item: (B, D).
struct FeatureBatch {
    Tensor values;

    std::int64_t batch() const { return values.dim(0); }
    std::int64_t dim() const { return values.dim(1); }
    void validate(const char* who) const;
};

// Projected per-class text embeddings: (N, D), row order = label order.
struct ClassAnchors {
    Tensor values;
    std::vector<std::string> class_names;
    std::vector<std::string> prompts;  // prompt string that produced each row

    std::int64_t num_classes() const { return values.dim(0); }
    std::int64_t dim() const { return values.dim(1); }
    void validate() const;
};

// Spatial features: (B, D, H, W).
struct FeatureMap {
    Tensor values;
    void validate(const char* who) const;
};

// Pre-softmax class scores: (B, N).
struct LogitBatch {
    Tensor values;
};

// Ground-truth class indices, each in [0, N).
struct LabelBatch {
    std::vector<std::int64_t> indices;

    void validate(std::int64_t num_classes) const;
};

struct Temperature {
    double value = 2.0;  // softening divisor; losses rescale by T^2

    void validate() const;
};

// KL argument order for SIA / logit KD. `as_printed` puts the student-derived
// distribution first in KL(P || Q); `teacher_first` is the Hinton convention.
enum class KlOrder { as_printed, teacher_first };

KlOrder kl_order_from_string(const std::string& s);
std::string to_string(KlOrder o);

// --- operations -------------------------------------------------------------

// Pairwise cosine similarities between feature rows and anchor rows: (B, N).
Tensor cosine_matrix(const FeatureBatch& features, const ClassAnchors& anchors);
// Differentiable in `features`; anchors stay constant.
Var cosine_matrix(const Var& features, const Tensor& anchors);
// Differentiable in both operands (used when fitting the shared projection).
Var cosine_matrix(const Var& features, const Var& anchors);

// Semantic image alignment: T^2 * mean-over-rows KL between the
// temperature-softened class-similarity distributions.
Var sia_loss(const Var& cos_student, const Tensor& cos_teacher, Temperature T,
             KlOrder order = KlOrder::as_printed);
double sia_loss(const Tensor& cos_student, const Tensor& cos_teacher, Temperature T,
                KlOrder order = KlOrder::as_printed);

// Image representation alignment: mean absolute difference over all entries.
Var ira_loss(const Var& z_student, const Tensor& z_teacher);
double ira_loss(const Tensor& z_student, const Tensor& z_teacher);

// Cross-entropy over logits, mean over the batch, max-shift stabilized.
Var cls_loss(const Var& logits, const LabelBatch& labels);
double cls_loss(const LogitBatch& logits, const LabelBatch& labels);

// Spatial representation alignment: squared L2 over channels at each site,
// averaged over sites and then over the batch.
Var sra_loss(const Var& map_student, const Tensor& map_teacher);
double sra_loss(const FeatureMap& map_student, const FeatureMap& map_teacher);

// Logit-level distillation; same KL form and orientation switch as sia_loss.
Var logit_kd_loss(const Var& student_logits, const Tensor& teacher_logits, Temperature T,
                  KlOrder order = KlOrder::as_printed);
double logit_kd_loss(const LogitBatch& student_logits, const LogitBatch& teacher_logits, Temperature T,
                     KlOrder order = KlOrder::as_printed);

// Stage totals. Coefficients sum to one for any lambda in [0, 1].
Var stage1_total(const Var& sia, const Var& ira, const Var& cls, double lam);
double stage1_total(double sia, double ira, double cls, double lam);
Var stage2_total(const Var& distill, const Var& cls, double lam);
double stage2_total(double distill, double cls, double lam);

}  // namespace dait
