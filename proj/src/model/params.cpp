#include "knobrec/model.hpp"

#include "knobrec/errors.hpp"
#include "knobrec/numerics/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace knobrec::model {

std::string to_string(Variant v) { return v == Variant::beta_vae ? "beta_vae" : "tc_vae"; }
std::string to_string(Activation a) { return a == Activation::tanh ? "tanh" : "softplus"; }

Variant parse_variant(const std::string& s) {
    if (s == "beta_vae") return Variant::beta_vae;
    if (s == "tc_vae") return Variant::tc_vae;
    throw ConfigError("unknown model variant '" + s + "' (expected beta_vae or tc_vae)");
}

Activation parse_activation(const std::string& s) {
    if (s == "tanh") return Activation::tanh;
    if (s == "softplus") return Activation::softplus;
    throw ConfigError("unknown activation '" + s + "' (expected tanh or softplus)");
}

const char* ModelParams::tensor_name(std::size_t t) {
    static constexpr const char* names[] = {"encoder.w1",     "encoder.b1",     "encoder.w2", "encoder.b2",
                                            "mean.w",         "mean.b",         "log_variance.w",
                                            "log_variance.b", "decoder.w",      "decoder.b"};
    if (t >= tensor_count) throw std::out_of_range("tensor index");
    return names[t];
}

std::vector<std::pair<std::size_t, std::size_t>> ModelParams::tensor_shapes(const Dimensions& d) {
    return {{d.n_items, d.hidden1}, {1, d.hidden1}, {d.hidden1, d.hidden2}, {1, d.hidden2},
            {d.hidden2, d.latent},  {1, d.latent},  {d.hidden2, d.latent},  {1, d.latent},
            {d.latent, d.n_items},  {1, d.n_items}};
}

ModelParams::ModelParams(Dimensions dims, Activation activation, std::vector<RealMatrix> tensors)
    : dims_(dims), activation_(activation), tensors_(std::move(tensors)) {
    const auto shapes = tensor_shapes(dims_);
    if (tensors_.size() != shapes.size()) throw DimensionError("model expects 10 tensors");
    for (std::size_t t = 0; t < shapes.size(); ++t) {
        if (tensors_[t].rows() != shapes[t].first || tensors_[t].cols() != shapes[t].second) {
            throw DimensionError(std::string("tensor ") + tensor_name(t) + " has the wrong shape");
        }
    }
}

ModelParams ModelParams::initialize(const Dimensions& dims, Activation activation, std::uint64_t seed) {
    if (dims.n_items == 0 || dims.hidden1 == 0 || dims.hidden2 == 0 || dims.latent == 0) {
        throw ConfigError("model dimensions must be positive");
    }
    std::mt19937_64 rng(seed);
    std::vector<RealMatrix> tensors;
    for (const auto& [rows, cols] : tensor_shapes(dims)) {
        RealMatrix m(rows, cols);
        if (rows > 1) {
            const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
            std::uniform_real_distribution<double> uniform(-limit, limit);
            for (double& v : m.values()) v = uniform(rng);
        }
        tensors.push_back(std::move(m));
    }
    return ModelParams(dims, activation, std::move(tensors));
}

namespace {

RealMatrix activate(Activation a, const RealMatrix& x) {
    return a == Activation::tanh ? tanh_activation(x) : softplus_activation(x);
}

} // namespace

Encoding encode(const ModelParams& params, const RealMatrix& x) {
    if (x.cols() != params.dims().n_items) {
        throw DimensionError("encode: input width " + std::to_string(x.cols()) + " != " +
                             std::to_string(params.dims().n_items) + " items");
    }
    using T = ModelParams::Tensor;
    const RealMatrix normalized = l2_normalize_rows(x);
    RealMatrix h = activate(params.activation(),
                            linear(normalized, params.tensor(T::encoder_w1), params.tensor(T::encoder_b1)));
    h = activate(params.activation(), linear(h, params.tensor(T::encoder_w2), params.tensor(T::encoder_b2)));
    return {linear(h, params.tensor(T::mean_w), params.tensor(T::mean_b)),
            linear(h, params.tensor(T::log_variance_w), params.tensor(T::log_variance_b))};
}

RealMatrix decode(const ModelParams& params, const RealMatrix& z) {
    if (z.cols() != params.dims().latent) {
        throw DimensionError("decode: latent width " + std::to_string(z.cols()) + " != " +
                             std::to_string(params.dims().latent));
    }
    using T = ModelParams::Tensor;
    return log_softmax(linear(z, params.tensor(T::decoder_w), params.tensor(T::decoder_b)));
}

RealMatrix interaction_rows(std::span<const std::vector<std::size_t>> items, std::size_t n_items) {
    RealMatrix x(items.size(), n_items);
    for (std::size_t r = 0; r < items.size(); ++r) {
        for (std::size_t i : items[r]) {
            if (i >= n_items) throw DimensionError("item index " + std::to_string(i) + " out of range");
            x(r, i) = 1.0;
        }
    }
    return x;
}

void LossConfig::validate() const {
    if (!(beta >= 0.0)) throw ConfigError("beta must be >= 0");
    if (variant == Variant::tc_vae && !(alpha >= 0.0 && gamma >= 0.0)) {
        throw ConfigError("alpha and gamma must be >= 0");
    }
    if (!(gamma_ss >= 0.0)) throw ConfigError("gamma_ss must be >= 0");
    if (!(supervision_fraction >= 0.0 && supervision_fraction <= 1.0)) {
        throw ConfigError("supervision fraction must lie in [0, 1]");
    }
}

double anneal_beta(std::size_t step, const LossConfig& config) {
    if (config.anneal_steps == 0 || step >= config.anneal_steps) return config.beta;
    return config.beta * static_cast<double>(step) / static_cast<double>(config.anneal_steps);
}

std::size_t SupervisionMask::count() const {
    std::size_t n = 0;
    for (char s : supervised) n += s ? 1 : 0;
    return n;
}

SupervisionMask draw_supervision(const RealMatrix& targets, double fraction, std::uint64_t seed) {
    if (!(fraction >= 0.0 && fraction <= 1.0)) throw ConfigError("supervision fraction must lie in [0, 1]");
    for (double v : targets.values()) {
        if (!(v >= 0.0 && v <= 1.0)) throw DataError("supervision targets must lie in [0, 1]");
    }
    const std::size_t n = targets.rows();
    const auto n_supervised = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);
    SupervisionMask mask;
    mask.supervised.assign(n, 0);
    for (std::size_t k = 0; k < n_supervised; ++k) mask.supervised[order[k]] = 1;
    mask.targets = targets;
    return mask;
}

} // namespace knobrec::model
