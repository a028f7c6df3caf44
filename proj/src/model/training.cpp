#include "knobrec/model.hpp"

#include "knobrec/errors.hpp"
#include "knobrec/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace knobrec::model {

namespace {

enum SeedTag : std::uint64_t { init_tag = 1, mask_tag = 2, shuffle_tag = 3, noise_tag = 4 };

std::uint64_t derive_seed(std::uint64_t seed, SeedTag tag) {
    std::seed_seq seq{seed, static_cast<std::uint64_t>(tag)};
    std::mt19937_64 rng(seq);
    return rng();
}

template <class T>
std::string serialize(const T& engine) {
    std::ostringstream os;
    os << engine;
    return os.str();
}

template <class T>
void deserialize(const std::string& text, T& engine) {
    std::istringstream is(text);
    is >> engine;
    if (!is) throw ConfigError("trainer state: corrupt random-number state");
}

void accumulate(LossTerms& into, const LossTerms& t) {
    into.total += t.total;
    into.reconstruction += t.reconstruction;
    into.kl += t.kl;
    into.index_code_mi += t.index_code_mi;
    into.dimension_kl += t.dimension_kl;
    into.total_correlation += t.total_correlation;
    into.supervision += t.supervision;
    into.beta_t += t.beta_t;
}

void scale(LossTerms& t, double s) {
    t.total *= s;
    t.reconstruction *= s;
    t.kl *= s;
    t.index_code_mi *= s;
    t.dimension_kl *= s;
    t.total_correlation *= s;
    t.supervision *= s;
    t.beta_t *= s;
}

std::size_t batches_per_epoch(std::size_t n, std::size_t batch_size, Variant variant) {
    std::size_t full = n / batch_size;
    const std::size_t rest = n % batch_size;
    if (rest >= 2 || (rest == 1 && variant == Variant::beta_vae)) ++full;
    return full;
}

} // namespace

Trainer::Trainer(const data::InteractionDataset& dataset, const data::UserSplit& split, TrainConfig config)
    : dataset_(dataset), split_(split), config_(std::move(config)) {
    if (config_.dims.n_items == 0) config_.dims.n_items = dataset_.n_items();
    if (config_.dims.n_items != dataset_.n_items()) throw DimensionError("trainer: model width != item count");
    if (config_.epochs == 0) throw ConfigError("trainer: epochs must be >= 1");
    if (config_.batch_size == 0) throw ConfigError("trainer: batch_size must be >= 1");
    if (config_.anneal_fraction < 0.0 || config_.anneal_fraction > 1.0) {
        throw ConfigError("trainer: anneal_fraction must lie in [0, 1]");
    }
    config_.loss.validate();
    if (split_.train_users.empty()) throw DataError("trainer: no training users");
    if (config_.loss.variant == Variant::tc_vae && split_.train_users.size() < 2) {
        throw DataError("trainer: tc_vae needs at least two training users");
    }
    if (dataset_.n_factors() > config_.dims.latent && config_.loss.supervision_fraction > 0.0) {
        throw ConfigError("trainer: more supervised factors than latent dimensions");
    }

    loss_ = config_.loss;
    if (loss_.anneal_steps == 0 && config_.anneal_fraction > 0.0) {
        const std::size_t total = config_.epochs *
                                  batches_per_epoch(split_.train_users.size(), config_.batch_size, loss_.variant);
        loss_.anneal_steps = std::max<std::size_t>(
            1, static_cast<std::size_t>(std::llround(config_.anneal_fraction * static_cast<double>(total))));
    }

    std::vector<std::vector<std::size_t>> histories;
    histories.reserve(split_.train_users.size());
    for (std::size_t u : split_.train_users) histories.push_back(dataset_.user_items.at(u));
    mask_ = draw_supervision(data::compute_preference_distribution(dataset_, histories),
                             loss_.supervision_fraction, derive_seed(config_.seed, mask_tag));

    state_.current = ModelParams::initialize(config_.dims, config_.activation, derive_seed(config_.seed, init_tag));
    state_.best = state_.current;
    state_.optimizer = OptimizerState::for_params(state_.current.tensors(), config_.adam);
    state_.report.supervised_users = mask_.count();
    shuffle_rng_.seed(derive_seed(config_.seed, shuffle_tag));
    noise_rng_.seed(derive_seed(config_.seed, noise_tag));
}

Batch Trainer::make_batch(std::span<const std::size_t> positions) {
    Batch batch;
    std::vector<std::vector<std::size_t>> items;
    items.reserve(positions.size());
    for (std::size_t p : positions) items.push_back(dataset_.user_items.at(split_.train_users[p]));
    batch.x = interaction_rows(items, config_.dims.n_items);

    batch.noise = RealMatrix(positions.size(), config_.dims.latent);
    for (double& v : batch.noise.values()) v = normal_(noise_rng_);

    batch.targets = RealMatrix(positions.size(), mask_.targets.cols());
    for (std::size_t r = 0; r < positions.size(); ++r) {
        batch.supervised.push_back(mask_.supervised[positions[r]]);
        std::copy_n(mask_.targets.row(positions[r]).begin(), mask_.targets.cols(), batch.targets.row(r).begin());
    }
    return batch;
}

const EpochRecord& Trainer::run_epoch() {
    if (done()) throw ConfigError("trainer: all epochs already run");

    std::vector<std::size_t> order(split_.train_users.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), shuffle_rng_);

    EpochRecord record;
    record.epoch = state_.epochs_done + 1;
    std::size_t n_batches = 0;
    const std::size_t n_train = order.size();

    for (std::size_t begin = 0; begin < n_train; begin += config_.batch_size) {
        const std::size_t end = std::min(n_train, begin + config_.batch_size);
        if (end - begin < 2 && loss_.variant == Variant::tc_vae) continue;
        const Batch batch = make_batch(std::span<const std::size_t>(order).subspan(begin, end - begin));

        Tape tape;
        std::vector<Var> leaves;
        for (const RealMatrix& t : state_.current.tensors()) leaves.push_back(tape.leaf(t));
        const double beta_t = anneal_beta(state_.step, loss_);
        const LossGraph graph = build_loss(tape, leaves, config_.activation, batch, loss_, beta_t, n_train);
        if (!std::isfinite(graph.terms.total)) {
            throw NumericalError("trainer: non-finite loss at epoch " + std::to_string(record.epoch) + ", step " +
                                 std::to_string(state_.step));
        }
        tape.backward(graph.total);

        std::vector<RealMatrix> grads;
        grads.reserve(leaves.size());
        for (const Var& v : leaves) grads.push_back(v.grad());
        adam_step(state_.current.tensors(), grads, state_.optimizer);
        for (const RealMatrix& t : state_.current.tensors()) {
            if (!t.all_finite()) throw NumericalError("trainer: parameters became non-finite");
        }

        accumulate(record.mean_terms, graph.terms);
        ++n_batches;
        ++state_.step;
    }
    if (n_batches > 0) scale(record.mean_terms, 1.0 / static_cast<double>(n_batches));

    record.validation_ndcg =
        split_.validation.empty() ? 0.0 : metrics::evaluate_recommender(state_.current, split_.validation, config_.eval_k);
    if (state_.report.epochs.empty() || record.validation_ndcg > state_.report.selected_ndcg) {
        state_.best = state_.current;
        state_.report.selected_epoch = record.epoch;
        state_.report.selected_ndcg = record.validation_ndcg;
    }
    state_.report.epochs.push_back(record);
    ++state_.epochs_done;
    return state_.report.epochs.back();
}

FitResult Trainer::result() const { return {state_.best, state_.report}; }

TrainerState Trainer::state() const {
    TrainerState s = state_;
    s.shuffle_rng = serialize(shuffle_rng_);
    s.noise_rng = serialize(noise_rng_);
    s.normal_state = serialize(normal_);
    return s;
}

void Trainer::restore(const TrainerState& state) {
    const auto shapes = ModelParams::tensor_shapes(config_.dims);
    for (const ModelParams* p : {&state.current, &state.best}) {
        if (p->dims().n_items != config_.dims.n_items || p->dims().hidden1 != config_.dims.hidden1 ||
            p->dims().hidden2 != config_.dims.hidden2 || p->dims().latent != config_.dims.latent) {
            throw ConfigError("trainer: saved state does not match the configured dimensions");
        }
    }
    if (state.optimizer.first_moment.size() != shapes.size() || state.optimizer.second_moment.size() != shapes.size()) {
        throw ConfigError("trainer: saved optimizer state does not match the model");
    }
    if (state.epochs_done > config_.epochs) throw ConfigError("trainer: saved state is past the epoch budget");
    deserialize(state.shuffle_rng, shuffle_rng_);
    deserialize(state.noise_rng, noise_rng_);
    deserialize(state.normal_state, normal_);
    state_ = state;
}

FitResult fit(const data::InteractionDataset& dataset, const data::UserSplit& split, const TrainConfig& config) {
    Trainer trainer(dataset, split, config);
    while (!trainer.done()) trainer.run_epoch();
    return trainer.result();
}

} // namespace knobrec::model
