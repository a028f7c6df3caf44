#pragma once

#include "knobrec/numerics/matrix.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace knobrec {

struct AdamConfig {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

struct OptimizerState {
    AdamConfig config;
    std::vector<RealMatrix> first_moment;
    std::vector<RealMatrix> second_moment;
    std::uint64_t step = 0;

    /// Zeroed moments shaped like `params`.
    static OptimizerState for_params(std::span<const RealMatrix> params, AdamConfig config = {});
};

/// One bias-corrected Adam update of every tensor in `params`.
void adam_step(std::span<RealMatrix> params, std::span<const RealMatrix> grads, OptimizerState& state);

} // namespace knobrec
