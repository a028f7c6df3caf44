#include "knobrec/numerics/adam.hpp"

#include "knobrec/errors.hpp"

#include <cmath>

namespace knobrec {

OptimizerState OptimizerState::for_params(std::span<const RealMatrix> params, AdamConfig config) {
    OptimizerState state;
    state.config = config;
    for (const RealMatrix& p : params) {
        state.first_moment.emplace_back(p.rows(), p.cols());
        state.second_moment.emplace_back(p.rows(), p.cols());
    }
    return state;
}

void adam_step(std::span<RealMatrix> params, std::span<const RealMatrix> grads, OptimizerState& state) {
    if (params.size() != grads.size() || params.size() != state.first_moment.size() ||
        params.size() != state.second_moment.size()) {
        throw DimensionError("adam_step: parameter/gradient/moment count mismatch");
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        require_same_shape(params[i], grads[i], "adam_step gradient");
        require_same_shape(params[i], state.first_moment[i], "adam_step moment");
    }

    const AdamConfig& c = state.config;
    ++state.step;
    const double t = static_cast<double>(state.step);
    const double correction1 = 1.0 - std::pow(c.beta1, t);
    const double correction2 = 1.0 - std::pow(c.beta2, t);

    for (std::size_t i = 0; i < params.size(); ++i) {
        auto p = params[i].values();
        auto g = grads[i].values();
        auto m = state.first_moment[i].values();
        auto v = state.second_moment[i].values();
        for (std::size_t k = 0; k < p.size(); ++k) {
            m[k] = c.beta1 * m[k] + (1.0 - c.beta1) * g[k];
            v[k] = c.beta2 * v[k] + (1.0 - c.beta2) * g[k] * g[k];
            const double m_hat = m[k] / correction1;
            const double v_hat = v[k] / correction2;
            p[k] -= c.learning_rate * m_hat / (std::sqrt(v_hat) + c.epsilon);
        }
    }
}

} // namespace knobrec
