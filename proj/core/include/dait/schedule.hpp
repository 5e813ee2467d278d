// Copyright (c) 2026, DAIT Contributors
// SPDX-License-Identifier: Apache-2.0
//
// Epoch-dependent loss-balancing weight lambda(e) = clamp(k*e + b).
// lambda weights the classification term; 1 - lambda weights distillation.

#pragma once

#include <cstdint>

#include "dait/errors.hpp"

namespace dait {

struct ScheduleParams {
    double k = 0.0;         // lambda increment per epoch
    double b = 0.0;         // lambda at epoch 0
    double clamp_lo = 0.0;
    double clamp_hi = 1.0;

    void validate() const {
        if (!(clamp_lo <= clamp_hi)) throw ContractError("schedule clamp_lo must be <= clamp_hi");
    }

    // Default ramp 0 -> 1 across a run of `epochs` epochs.
    static ScheduleParams linear_ramp(std::int64_t epochs) {
        ScheduleParams p;
        p.k = epochs > 0 ? 1.0 / static_cast<double>(epochs) : 0.0;
        p.b = 0.0;
        return p;
    }
};

inline double lambda_at(const ScheduleParams& params, std::int64_t epoch) {
    if (epoch < 0) throw ContractError("lambda_at: epoch must be non-negative");
    params.validate();
    const double raw = params.k * static_cast<double>(epoch) + params.b;
    if (raw < params.clamp_lo) return params.clamp_lo;
    if (raw > params.clamp_hi) return params.clamp_hi;
    return raw;
}

}  // namespace dait
