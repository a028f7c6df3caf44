#include "knobrec/model.hpp"

#include "knobrec/errors.hpp"
#include "knobrec/numerics/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

namespace knobrec::model {

namespace {

Var activate(Activation a, const Var& x) { return a == Activation::tanh ? ad::tanh(x) : ad::softplus(x); }

void check_supervision_shapes(std::size_t rows, std::size_t latent, const RealMatrix& targets,
                              std::span<const char> supervised) {
    if (targets.cols() > latent) {
        throw ConfigError("supervised factor count " + std::to_string(targets.cols()) + " exceeds latent size " +
                          std::to_string(latent));
    }
    if (supervised.size() != rows || (targets.rows() != rows && targets.cols() > 0)) {
        throw DimensionError("semi_supervised_penalty: mask/targets do not match the batch");
    }
}

double log_sum_exp(std::span<const double> v) {
    const double peak = *std::max_element(v.begin(), v.end());
    double total = 0.0;
    for (double x : v) total += std::exp(x - peak);
    return peak + std::log(total);
}

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

// Pairwise log-density ingredients shared by the forward and backward passes
// of the minibatch-weighted estimator.
struct PairwiseDensity {
    std::size_t m = 0;
    std::size_t d = 0;
    RealMatrix joint;          // S_ij = sum_d log q(z_id | x_j)
    RealVector joint_lse;      // logsumexp_j S_ij
    RealMatrix marginal_lse;   // logsumexp_j log q(z_id | x_j)
    RealMatrix inv_variance;   // exp(-log_variance)
};

PairwiseDensity pairwise_density(const RealMatrix& z, const RealMatrix& mean, const RealMatrix& log_variance) {
    PairwiseDensity p;
    p.m = z.rows();
    p.d = z.cols();
    p.joint = RealMatrix(p.m, p.m);
    p.joint_lse.assign(p.m, 0.0);
    p.marginal_lse = RealMatrix(p.m, p.d);
    p.inv_variance = RealMatrix(p.m, p.d);
    for (std::size_t k = 0; k < p.inv_variance.size(); ++k) {
        p.inv_variance.values()[k] = std::exp(-log_variance.values()[k]);
    }
    RealMatrix per_dim(p.d, p.m);  // log q(z_id | x_j) for fixed i, laid out [d][j]
    for (std::size_t i = 0; i < p.m; ++i) {
        for (std::size_t j = 0; j < p.m; ++j) {
            double s = 0.0;
            for (std::size_t dd = 0; dd < p.d; ++dd) {
                const double diff = z(i, dd) - mean(j, dd);
                const double l = -0.5 * (diff * diff * p.inv_variance(j, dd) + log_variance(j, dd) + kLog2Pi);
                per_dim(dd, j) = l;
                s += l;
            }
            p.joint(i, j) = s;
        }
        p.joint_lse[i] = log_sum_exp(p.joint.row(i));
        for (std::size_t dd = 0; dd < p.d; ++dd) p.marginal_lse(i, dd) = log_sum_exp(per_dim.row(dd));
    }
    return p;
}

TcTerms terms_from(const PairwiseDensity& p, const RealMatrix& z, std::size_t dataset_size) {
    const double log_norm = std::log(static_cast<double>(dataset_size) * static_cast<double>(p.m));
    TcTerms t;
    for (std::size_t i = 0; i < p.m; ++i) {
        const double log_qz = p.joint_lse[i] - log_norm;
        double log_prod_marginals = 0.0;
        double log_prior = 0.0;
        for (std::size_t dd = 0; dd < p.d; ++dd) {
            log_prod_marginals += p.marginal_lse(i, dd) - log_norm;
            log_prior += -0.5 * (z(i, dd) * z(i, dd) + kLog2Pi);
        }
        t.index_code_mi += p.joint(i, i) - log_qz;
        t.total_correlation += log_qz - log_prod_marginals;
        t.dimension_kl += log_prod_marginals - log_prior;
    }
    const double m = static_cast<double>(p.m);
    t.index_code_mi /= m;
    t.total_correlation /= m;
    t.dimension_kl /= m;
    return t;
}

void validate_tc_inputs(const RealMatrix& z, const RealMatrix& mean, const RealMatrix& log_variance,
                        std::size_t dataset_size) {
    require_same_shape(z, mean, "tc_decomposition");
    require_same_shape(z, log_variance, "tc_decomposition");
    if (z.rows() < 2) throw ConfigError("tc_decomposition needs a batch of at least 2 rows");
    if (dataset_size < z.rows()) throw ConfigError("tc_decomposition: dataset size smaller than the batch");
}

} // namespace

double semi_supervised_penalty(const RealMatrix& mean, const RealMatrix& targets, std::span<const char> supervised) {
    check_supervision_shapes(mean.rows(), mean.cols(), targets, supervised);
    double total = 0.0;
    std::size_t n = 0;
    for (std::size_t r = 0; r < mean.rows(); ++r) {
        if (!supervised[r]) continue;
        ++n;
        for (std::size_t j = 0; j < targets.cols(); ++j) {
            // -[a log s(mu) + (1 - a) log(1 - s(mu))] == softplus(mu) - a * mu
            total += softplus(mean(r, j)) - targets(r, j) * mean(r, j);
        }
    }
    return n == 0 ? 0.0 : total / static_cast<double>(n);
}

Var semi_supervised_penalty(const Var& mean, const RealMatrix& targets, std::span<const char> supervised) {
    const RealMatrix& mu = mean.value();
    const double value = semi_supervised_penalty(mu, targets, supervised);
    std::vector<char> mask(supervised.begin(), supervised.end());
    std::size_t n = 0;
    for (char s : mask) n += s ? 1 : 0;
    const std::size_t m = mean.id();
    return mean.tape()->record(RealMatrix(1, 1, value), {m}, [m, targets, mask, n](Tape& t, std::size_t self) {
        if (n == 0) return;
        const double g = t.grad(self)(0, 0) / static_cast<double>(n);
        const RealMatrix& mu = t.value(m);
        RealMatrix& gm = t.grad_accumulator(m);
        for (std::size_t r = 0; r < mu.rows(); ++r) {
            if (!mask[r]) continue;
            // only the first A columns receive gradient
            for (std::size_t j = 0; j < targets.cols(); ++j) gm(r, j) += g * (sigmoid(mu(r, j)) - targets(r, j));
        }
    });
}

TcTerms tc_decomposition_terms(const RealMatrix& z, const RealMatrix& mean, const RealMatrix& log_variance,
                               std::size_t dataset_size) {
    validate_tc_inputs(z, mean, log_variance, dataset_size);
    return terms_from(pairwise_density(z, mean, log_variance), z, dataset_size);
}

Var tc_decomposition(const Var& z, const Var& mean, const Var& log_variance, double alpha, double gamma,
                     double beta, std::size_t dataset_size, TcTerms* terms) {
    validate_tc_inputs(z.value(), mean.value(), log_variance.value(), dataset_size);
    auto density = std::make_shared<PairwiseDensity>(pairwise_density(z.value(), mean.value(), log_variance.value()));
    const TcTerms t = terms_from(*density, z.value(), dataset_size);
    if (terms) *terms = t;
    const double value = alpha * t.index_code_mi + gamma * t.dimension_kl + beta * t.total_correlation;

    const std::size_t zi = z.id(), mi = mean.id(), lvi = log_variance.id();
    return z.tape()->record(
        RealMatrix(1, 1, value), {zi, mi, lvi}, [=](Tape& tape, std::size_t self) {
            const PairwiseDensity& p = *density;
            const RealMatrix& zv = tape.value(zi);
            const RealMatrix& mv = tape.value(mi);
            const RealMatrix& lvv = tape.value(lvi);
            const double scale = tape.grad(self)(0, 0) / static_cast<double>(p.m);
            RealMatrix* gz = tape.requires_grad(zi) ? &tape.grad_accumulator(zi) : nullptr;
            RealMatrix* gm = tape.requires_grad(mi) ? &tape.grad_accumulator(mi) : nullptr;
            RealMatrix* glv = tape.requires_grad(lvi) ? &tape.grad_accumulator(lvi) : nullptr;

            // loss = mean_i [alpha S_ii + (beta - alpha) Q_i + (gamma - beta) sum_d P_id - gamma log p(z_i)]
            for (std::size_t i = 0; i < p.m; ++i) {
                for (std::size_t j = 0; j < p.m; ++j) {
                    const double w = std::exp(p.joint(i, j) - p.joint_lse[i]);
                    const double common = (i == j ? alpha : 0.0) + (beta - alpha) * w;
                    for (std::size_t d = 0; d < p.d; ++d) {
                        const double diff = zv(i, d) - mv(j, d);
                        const double inv = p.inv_variance(j, d);
                        const double l = -0.5 * (diff * diff * inv + lvv(j, d) + kLog2Pi);
                        const double v = std::exp(l - p.marginal_lse(i, d));
                        const double coef = scale * (common + (gamma - beta) * v);
                        if (coef == 0.0) continue;
                        const double dl_dz = -diff * inv;
                        if (gz) (*gz)(i, d) += coef * dl_dz;
                        if (gm) (*gm)(j, d) -= coef * dl_dz;
                        if (glv) (*glv)(j, d) += coef * 0.5 * (diff * diff * inv - 1.0);
                    }
                }
                if (gz) {
                    for (std::size_t d = 0; d < p.d; ++d) (*gz)(i, d) += scale * gamma * zv(i, d);
                }
            }
        });
}

ForwardVars forward(Tape& tape, std::span<const Var> params, Activation activation, const RealMatrix& x,
                    const RealMatrix& noise) {
    using T = ModelParams::Tensor;
    if (params.size() != T::tensor_count) throw DimensionError("forward: expected 10 parameter tensors");
    Var input = tape.constant(l2_normalize_rows(x));
    Var h = activate(activation, ad::linear(input, params[T::encoder_w1], params[T::encoder_b1]));
    h = activate(activation, ad::linear(h, params[T::encoder_w2], params[T::encoder_b2]));
    ForwardVars out;
    out.mean = ad::linear(h, params[T::mean_w], params[T::mean_b]);
    out.log_variance = ad::linear(h, params[T::log_variance_w], params[T::log_variance_b]);
    out.z = ad::gaussian_reparameterize(out.mean, out.log_variance, noise);
    out.log_pi = ad::log_softmax(ad::linear(out.z, params[T::decoder_w], params[T::decoder_b]));
    return out;
}

namespace {

bool any_supervised(const Batch& batch) {
    return std::any_of(batch.supervised.begin(), batch.supervised.end(), [](char s) { return s != 0; });
}

} // namespace

LossGraph loss_beta_vae(Tape& tape, std::span<const Var> params, Activation activation, const Batch& batch,
                        const LossConfig& config, double beta_t) {
    if (config.variant != Variant::beta_vae) throw ConfigError("loss_beta_vae called with a tc_vae config");
    ForwardVars f = forward(tape, params, activation, batch.x, batch.noise);
    Var reconstruction = ad::mean(ad::multinomial_nll(batch.x, f.log_pi));
    Var kl = ad::mean(ad::kl_diag_gaussian_vs_standard(f.mean, f.log_variance));

    std::vector<std::pair<double, Var>> terms{{1.0, reconstruction}, {beta_t, kl}};
    LossGraph out;
    if (config.gamma_ss > 0.0 && any_supervised(batch)) {
        Var rs = semi_supervised_penalty(f.mean, batch.targets, batch.supervised);
        terms.emplace_back(config.gamma_ss, rs);
        out.terms.supervision = rs.value()(0, 0);
    }
    out.total = ad::weighted_sum(terms);
    out.terms.total = out.total.value()(0, 0);
    out.terms.reconstruction = reconstruction.value()(0, 0);
    out.terms.kl = kl.value()(0, 0);
    out.terms.beta_t = beta_t;
    return out;
}

LossGraph loss_tc_vae(Tape& tape, std::span<const Var> params, Activation activation, const Batch& batch,
                      const LossConfig& config, double beta_t, std::size_t dataset_size) {
    if (config.variant != Variant::tc_vae) throw ConfigError("loss_tc_vae called with a beta_vae config");
    if (batch.x.rows() < 2) throw ConfigError("tc_vae loss needs a batch of at least 2 rows");
    ForwardVars f = forward(tape, params, activation, batch.x, batch.noise);
    Var reconstruction = ad::mean(ad::multinomial_nll(batch.x, f.log_pi));
    TcTerms tc;
    Var decomposition =
        tc_decomposition(f.z, f.mean, f.log_variance, config.alpha, config.gamma, beta_t, dataset_size, &tc);

    std::vector<std::pair<double, Var>> terms{{1.0, reconstruction}, {1.0, decomposition}};
    LossGraph out;
    if (config.gamma_ss > 0.0 && any_supervised(batch)) {
        Var rs = semi_supervised_penalty(f.mean, batch.targets, batch.supervised);
        terms.emplace_back(config.gamma_ss, rs);
        out.terms.supervision = rs.value()(0, 0);
    }
    out.total = ad::weighted_sum(terms);
    out.terms.total = out.total.value()(0, 0);
    out.terms.reconstruction = reconstruction.value()(0, 0);
    const RealVector kl = kl_diag_gaussian_vs_standard(f.mean.value(), f.log_variance.value());
    for (double v : kl) out.terms.kl += v / static_cast<double>(kl.size());
    out.terms.index_code_mi = tc.index_code_mi;
    out.terms.dimension_kl = tc.dimension_kl;
    out.terms.total_correlation = tc.total_correlation;
    out.terms.beta_t = beta_t;
    return out;
}

LossGraph build_loss(Tape& tape, std::span<const Var> params, Activation activation, const Batch& batch,
                     const LossConfig& config, double beta_t, std::size_t dataset_size) {
    return config.variant == Variant::beta_vae
               ? loss_beta_vae(tape, params, activation, batch, config, beta_t)
               : loss_tc_vae(tape, params, activation, batch, config, beta_t, dataset_size);
}

} // namespace knobrec::model
