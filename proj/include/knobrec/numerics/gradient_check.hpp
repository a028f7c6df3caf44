#pragma once

#include "knobrec/numerics/matrix.hpp"
#include "knobrec/numerics/tape.hpp"

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace knobrec {

/// Builds a scalar loss on `tape` from leaf handles of the parameters.
using TapeLossFn = std::function<Var(Tape& tape, std::span<const Var> params)>;

struct GradientCoordinate {
    std::size_t tensor = 0;
    std::size_t index = 0;
    double analytic = 0.0;
    double numeric = 0.0;
    double relative_error = 0.0;
};

struct GradientCheckReport {
    double max_relative_error = 0.0;
    std::size_t coordinates_checked = 0;
    bool passed = false;
    /// Largest errors first.
    std::vector<GradientCoordinate> worst;

    std::string diagnostic() const;
};

struct GradientCheckOptions {
    double tolerance = 1e-4;
    /// Step is relative_step * max(1, |p|).
    double relative_step = 1e-5;
    /// Denominator floor for the relative error of near-zero gradients.
    double absolute_floor = 1e-6;
    std::size_t report_worst = 5;
};

/// Compares tape gradients of `loss` against central finite differences at
/// `params`.
GradientCheckReport gradient_check(const TapeLossFn& loss, std::span<const RealMatrix> params,
                                   const GradientCheckOptions& options = {});

/// gradient_check that throws NumericalError with the diagnostic on failure.
GradientCheckReport require_gradients_match(const TapeLossFn& loss, std::span<const RealMatrix> params,
                                            const GradientCheckOptions& options = {});

} // namespace knobrec
