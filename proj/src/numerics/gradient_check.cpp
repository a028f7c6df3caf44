#include "knobrec/numerics/gradient_check.hpp"

#include "knobrec/errors.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace knobrec {

namespace {

double evaluate(const TapeLossFn& loss, std::span<const RealMatrix> params) {
    Tape tape;
    std::vector<Var> vars;
    vars.reserve(params.size());
    for (const RealMatrix& p : params) vars.push_back(tape.leaf(p, false));
    return loss(tape, vars).value()(0, 0);
}

} // namespace

std::string GradientCheckReport::diagnostic() const {
    std::ostringstream out;
    out << "gradient check " << (passed ? "passed" : "FAILED") << ": max relative error "
        << max_relative_error << " over " << coordinates_checked << " coordinates";
    for (const auto& w : worst) {
        out << "\n  tensor " << w.tensor << " [" << w.index << "] analytic=" << w.analytic
            << " numeric=" << w.numeric << " rel=" << w.relative_error;
    }
    return out.str();
}

GradientCheckReport gradient_check(const TapeLossFn& loss, std::span<const RealMatrix> params,
                                   const GradientCheckOptions& options) {
    std::vector<RealMatrix> analytic;
    {
        Tape tape;
        std::vector<Var> vars;
        for (const RealMatrix& p : params) vars.push_back(tape.leaf(p, true));
        Var out = loss(tape, vars);
        tape.backward(out);
        for (const Var& v : vars) analytic.push_back(v.grad());
    }

    std::vector<RealMatrix> probe(params.begin(), params.end());
    std::vector<GradientCoordinate> all;
    for (std::size_t t = 0; t < probe.size(); ++t) {
        auto values = probe[t].values();
        for (std::size_t i = 0; i < values.size(); ++i) {
            const double original = values[i];
            const double h = options.relative_step * std::max(1.0, std::abs(original));
            values[i] = original + h;
            const double up = evaluate(loss, probe);
            values[i] = original - h;
            const double down = evaluate(loss, probe);
            values[i] = original;

            GradientCoordinate c;
            c.tensor = t;
            c.index = i;
            c.analytic = analytic[t].values()[i];
            c.numeric = (up - down) / (2.0 * h);
            const double scale =
                std::max({std::abs(c.analytic), std::abs(c.numeric), options.absolute_floor});
            c.relative_error = std::abs(c.analytic - c.numeric) / scale;
            all.push_back(c);
        }
    }

    GradientCheckReport report;
    report.coordinates_checked = all.size();
    std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) {
        return a.relative_error > b.relative_error;
    });
    if (!all.empty()) report.max_relative_error = all.front().relative_error;
    report.passed = std::isfinite(report.max_relative_error) && report.max_relative_error < options.tolerance;
    all.resize(std::min(all.size(), options.report_worst));
    report.worst = std::move(all);
    return report;
}

GradientCheckReport require_gradients_match(const TapeLossFn& loss, std::span<const RealMatrix> params,
                                            const GradientCheckOptions& options) {
    GradientCheckReport report = gradient_check(loss, params, options);
    if (!report.passed) throw NumericalError(report.diagnostic());
    return report;
}

} // namespace knobrec
