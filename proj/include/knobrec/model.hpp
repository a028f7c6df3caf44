#pragma once

#include "knobrec/data.hpp"
#include "knobrec/numerics/adam.hpp"
#include "knobrec/numerics/matrix.hpp"
#include "knobrec/numerics/tape.hpp"

#include <array>
#include <random>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace knobrec::model {

enum class Variant { beta_vae, tc_vae };
enum class Activation { tanh, softplus };

std::string to_string(Variant v);
std::string to_string(Activation a);
Variant parse_variant(const std::string& s);
Activation parse_activation(const std::string& s);

/// Layer widths: n_items -> hidden1 -> hidden2 -> (mean, log-variance) of
/// width latent; the decoder maps latent -> n_items.
struct Dimensions {
    std::size_t n_items = 0;
    std::size_t hidden1 = 600;
    std::size_t hidden2 = 600;
    std::size_t latent = 200;

    bool operator==(const Dimensions&) const = default;
};

/// Encoder and decoder weights. Weights are (fan_in x fan_out) and biases
/// are 1 x fan_out rows.
class ModelParams {
public:
    enum Tensor : std::size_t {
        encoder_w1,
        encoder_b1,
        encoder_w2,
        encoder_b2,
        mean_w,
        mean_b,
        log_variance_w,
        log_variance_b,
        decoder_w,
        decoder_b,
        tensor_count
    };

    ModelParams() = default;
    ModelParams(Dimensions dims, Activation activation, std::vector<RealMatrix> tensors);

    /// Xavier-uniform weights and zero biases.
    static ModelParams initialize(const Dimensions& dims, Activation activation, std::uint64_t seed);

    const Dimensions& dims() const { return dims_; }
    Activation activation() const { return activation_; }

    std::span<RealMatrix> tensors() { return tensors_; }
    std::span<const RealMatrix> tensors() const { return tensors_; }
    RealMatrix& tensor(Tensor t) { return tensors_.at(t); }
    const RealMatrix& tensor(Tensor t) const { return tensors_.at(t); }

    static const char* tensor_name(std::size_t t);
    /// Shapes implied by `dims`, in Tensor order.
    static std::vector<std::pair<std::size_t, std::size_t>> tensor_shapes(const Dimensions& dims);

    bool operator==(const ModelParams&) const = default;

private:
    Dimensions dims_;
    Activation activation_ = Activation::tanh;
    std::vector<RealMatrix> tensors_;
};

struct Encoding {
    RealMatrix mean;
    RealMatrix log_variance;
};

/// Posterior parameters for binary interaction rows. Rows are L2-normalised
/// before the first layer; there is no dropout.
Encoding encode(const ModelParams& params, const RealMatrix& x);
/// Row-wise log pi(z) over items.
RealMatrix decode(const ModelParams& params, const RealMatrix& z);

/// Binary rows for the given per-user item lists.
RealMatrix interaction_rows(std::span<const std::vector<std::size_t>> items, std::size_t n_items);

struct LossConfig {
    Variant variant = Variant::beta_vae;
    double beta = 1.0;
    /// Index-code MI weight (tc_vae only).
    double alpha = 1.0;
    /// Dimension-wise KL weight (tc_vae only).
    double gamma = 1.0;
    double gamma_ss = 0.0;
    double supervision_fraction = 0.0;
    /// Steps of the linear 0 -> beta ramp; 0 means no annealing.
    std::size_t anneal_steps = 0;

    void validate() const;
};

/// beta * min(1, step / anneal_steps).
double anneal_beta(std::size_t step, const LossConfig& config);

/// Which training users receive supervision, with their factor targets.
struct SupervisionMask {
    /// One flag per training-user position.
    std::vector<char> supervised;
    /// Training users x A preference distributions.
    RealMatrix targets;

    std::size_t count() const;
};

/// round(fraction * n) users chosen uniformly under `seed`.
SupervisionMask draw_supervision(const RealMatrix& targets, double fraction, std::uint64_t seed);

struct Batch {
    /// Binary interactions, batch x n_items.
    RealMatrix x;
    /// Standard-normal draws, batch x latent.
    RealMatrix noise;
    /// Per-row supervision flag.
    std::vector<char> supervised;
    /// batch x A targets; rows of unsupervised users are ignored.
    RealMatrix targets;
};

struct LossTerms {
    double total = 0.0;
    double reconstruction = 0.0;
    /// Analytic KL to the prior, batch mean.
    double kl = 0.0;
    double index_code_mi = 0.0;
    double dimension_kl = 0.0;
    double total_correlation = 0.0;
    double supervision = 0.0;
    double beta_t = 0.0;
};

struct ForwardVars {
    Var mean;
    Var log_variance;
    Var z;
    Var log_pi;
};

/// Records the encoder/decoder on `tape`. `params` are leaves in Tensor order.
ForwardVars forward(Tape& tape, std::span<const Var> params, Activation activation, const RealMatrix& x,
                    const RealMatrix& noise);

/// Mean over supervised rows of the binary cross-entropy between sigmoid of
/// the first A dims of `mean` and the soft targets. Zero when no row is
/// supervised.
Var semi_supervised_penalty(const Var& mean, const RealMatrix& targets, std::span<const char> supervised);
double semi_supervised_penalty(const RealMatrix& mean, const RealMatrix& targets, std::span<const char> supervised);

struct TcTerms {
    double index_code_mi = 0.0;
    double dimension_kl = 0.0;
    double total_correlation = 0.0;
};

/// alpha * MI + gamma * dimension-wise KL + beta * TC, each estimated by
/// minibatch-weighted sampling over the batch with `dataset_size` N.
Var tc_decomposition(const Var& z, const Var& mean, const Var& log_variance, double alpha, double gamma,
                     double beta, std::size_t dataset_size, TcTerms* terms = nullptr);
/// The three estimates without recording anything.
TcTerms tc_decomposition_terms(const RealMatrix& z, const RealMatrix& mean, const RealMatrix& log_variance,
                               std::size_t dataset_size);

struct LossGraph {
    Var total;
    LossTerms terms;
};

/// mean(nll + beta_t * KL) + gamma_ss * R_s.
LossGraph loss_beta_vae(Tape& tape, std::span<const Var> params, Activation activation, const Batch& batch,
                        const LossConfig& config, double beta_t);
/// mean(nll) + alpha * MI + gamma * dim-KL + beta_t * TC + gamma_ss * R_s.
LossGraph loss_tc_vae(Tape& tape, std::span<const Var> params, Activation activation, const Batch& batch,
                      const LossConfig& config, double beta_t, std::size_t dataset_size);
LossGraph build_loss(Tape& tape, std::span<const Var> params, Activation activation, const Batch& batch,
                     const LossConfig& config, double beta_t, std::size_t dataset_size);

struct TrainConfig {
    Dimensions dims;
    Activation activation = Activation::tanh;
    LossConfig loss;
    std::size_t epochs = 50;
    std::size_t batch_size = 500;
    AdamConfig adam;
    /// Fraction of total steps used for beta annealing when loss.anneal_steps is 0.
    double anneal_fraction = 0.2;
    std::size_t eval_k = 100;
    std::uint64_t seed = 1;
};

struct EpochRecord {
    std::size_t epoch = 0;
    LossTerms mean_terms;
    double validation_ndcg = 0.0;
};

struct TrainReport {
    std::vector<EpochRecord> epochs;
    std::size_t selected_epoch = 0;
    double selected_ndcg = 0.0;
    std::size_t supervised_users = 0;
};

struct FitResult {
    ModelParams params;
    TrainReport report;
};

/// Everything needed to continue training bit-identically.
struct TrainerState {
    ModelParams current;
    ModelParams best;
    OptimizerState optimizer;
    TrainReport report;
    std::size_t epochs_done = 0;
    std::size_t step = 0;
    std::string shuffle_rng;
    std::string noise_rng;
    std::string normal_state;
};

/// Minibatch Adam training on the split's training users with per-epoch
/// validation NDCG; keeps the best-validation parameters.
class Trainer {
public:
    Trainer(const data::InteractionDataset& dataset, const data::UserSplit& split, TrainConfig config);

    /// Trains one epoch and scores the validation users. Throws
    /// NumericalError on a non-finite loss.
    const EpochRecord& run_epoch();
    bool done() const { return state_.epochs_done >= config_.epochs; }
    FitResult result() const;

    const TrainConfig& config() const { return config_; }
    const SupervisionMask& supervision() const { return mask_; }
    /// Resolved annealing budget in steps.
    std::size_t anneal_steps() const { return loss_.anneal_steps; }

    TrainerState state() const;
    void restore(const TrainerState& state);

private:
    Batch make_batch(std::span<const std::size_t> positions);

    const data::InteractionDataset& dataset_;
    const data::UserSplit& split_;
    TrainConfig config_;
    LossConfig loss_;
    SupervisionMask mask_;
    TrainerState state_;
    std::mt19937_64 shuffle_rng_;
    std::mt19937_64 noise_rng_;
    std::normal_distribution<double> normal_;
};

FitResult fit(const data::InteractionDataset& dataset, const data::UserSplit& split, const TrainConfig& config);

} // namespace knobrec::model
