#pragma once

// Toy models and batches shared by the unit tests and the acceptance suite.

#include "knobrec/data.hpp"
#include "knobrec/model.hpp"
#include "knobrec/numerics/gradient_check.hpp"
#include "knobrec/numerics/kernels.hpp"

#include <random>
#include <vector>

namespace fixture {

using namespace knobrec;

inline model::ModelParams toy_params(std::size_t n_items, std::size_t hidden, std::size_t latent, std::uint64_t seed,
                                     double head_scale = 1.0) {
    model::ModelParams p = model::ModelParams::initialize({n_items, hidden, hidden, latent}, model::Activation::tanh, seed);
    // default init gives near-zero posteriors; spread them so every term matters
    std::mt19937_64 rng(seed + 1000);
    std::normal_distribution<double> n(0.0, 0.3);
    for (RealMatrix& t : p.tensors())
        for (double& v : t.values()) v += n(rng);
    for (double& v : p.tensor(model::ModelParams::mean_w).values()) v *= head_scale;
    return p;
}

inline model::Batch toy_batch(std::size_t rows, std::size_t n_items, std::size_t latent, std::size_t n_factors,
                              std::uint64_t seed, double supervised_fraction = 0.5) {
    std::mt19937_64 rng(seed);
    std::bernoulli_distribution coin(0.3), sup(supervised_fraction);
    std::normal_distribution<double> normal;
    std::uniform_real_distribution<double> unit;
    model::Batch b;
    b.x = RealMatrix(rows, n_items);
    for (std::size_t r = 0; r < rows; ++r) {
        b.x(r, r % n_items) = 1.0;
        for (std::size_t i = 0; i < n_items; ++i)
            if (coin(rng)) b.x(r, i) = 1.0;
    }
    b.noise = RealMatrix(rows, latent);
    for (double& v : b.noise.values()) v = normal(rng);
    b.targets = RealMatrix(rows, n_factors);
    for (double& v : b.targets.values()) v = unit(rng);
    for (std::size_t r = 0; r < rows; ++r) b.supervised.push_back(sup(rng) || r == 0 ? 1 : 0);
    return b;
}

/// Tape gradients of the chosen loss against finite differences on a toy
/// model with |I| = 30, D = 6, batch = 8 and half the rows supervised.
inline GradientCheckReport loss_gradient_check(model::Variant variant, std::uint64_t seed) {
    const std::size_t n_items = 30, latent = 6, hidden = 10, n_factors = 3, rows = 8;
    const model::ModelParams params = toy_params(n_items, hidden, latent, seed);
    const model::Batch batch = toy_batch(rows, n_items, latent, n_factors, seed + 7);
    model::LossConfig cfg;
    cfg.variant = variant;
    cfg.beta = 2.5;
    cfg.alpha = 0.7;
    cfg.gamma = 1.3;
    cfg.gamma_ss = 1.0;
    cfg.supervision_fraction = 0.5;
    const TapeLossFn loss = [&](Tape& tape, std::span<const Var> leaves) {
        return model::build_loss(tape, leaves, model::Activation::tanh, batch, cfg, 1.7, 500).total;
    };
    return gradient_check(loss, params.tensors());
}

struct TcTrial {
    double decomposed = 0.0;
    double analytic_kl = 0.0;
};

/// One minibatch of a toy encoder population (D = 4, batch 256, N = 5000):
/// the three minibatch-weighted estimates summed, against the mean analytic KL.
inline TcTrial tc_consistency_trial(std::uint64_t seed) {
    const std::size_t n_items = 40, latent = 4, rows = 256, population = 5000;
    const model::ModelParams params = toy_params(n_items, 12, latent, 99, 3.0);
    const model::Batch batch = toy_batch(rows, n_items, latent, 1, seed);
    const model::Encoding enc = model::encode(params, batch.x);
    const RealMatrix z = gaussian_reparameterize(enc.mean, enc.log_variance, batch.noise);
    const model::TcTerms t = model::tc_decomposition_terms(z, enc.mean, enc.log_variance, population);
    TcTrial out;
    out.decomposed = t.index_code_mi + t.dimension_kl + t.total_correlation;
    for (double v : kl_diag_gaussian_vs_standard(enc.mean, enc.log_variance)) out.analytic_kl += v / rows;
    return out;
}

/// A small synthetic catalogue with a model trained on it. Factor j is tied to latent dim j
/// when supervision is on.
struct TrainedSynthetic {
    data::SyntheticDataset synthetic;
    data::UserSplit split;
    model::FitResult fit;
};

inline TrainedSynthetic trained_synthetic(double supervision, std::size_t epochs = 30, std::uint64_t seed = 7) {
    data::SyntheticSpec spec;
    spec.n_users = 600;
    spec.n_items = 160;
    spec.seed = seed;
    TrainedSynthetic out;
    out.synthetic = data::generate_synthetic(spec);
    out.split = data::split_users(out.synthetic.dataset, 50, 100, 0.2, seed);
    model::TrainConfig cfg;
    cfg.dims = {spec.n_items, 64, 64, 8};
    cfg.loss.supervision_fraction = supervision;
    cfg.loss.gamma_ss = supervision > 0 ? 1.0 : 0.0;
    cfg.epochs = epochs;
    cfg.batch_size = 50;
    cfg.seed = seed;
    out.fit = model::fit(out.synthetic.dataset, out.split, cfg);
    return out;
}

} // namespace fixture
