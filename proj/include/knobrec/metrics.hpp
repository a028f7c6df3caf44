#pragma once

#include "knobrec/control.hpp"
#include "knobrec/data.hpp"
#include "knobrec/model.hpp"

#include <json.hpp>

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace knobrec::metrics {

/// Binary-relevance NDCG over the first k ranks with 1/log2(rank + 1) gains.
double ndcg_at_k(const control::RankedList& ranked, std::span<const std::size_t> holdout, std::size_t k = 100);

/// Pearson correlation; 0 when either side has zero variance.
double pearson_correlation(std::span<const double> x, std::span<const double> y);

struct MeanWithError {
    double mean = 0.0;
    double standard_error = 0.0;
    std::size_t count = 0;
};

/// Sample mean and standard error (sd / sqrt(n)).
MeanWithError summarize(std::span<const double> values);

/// Mean mean-of-means across groups with the propagated standard error.
MeanWithError combine_groups(std::span<const MeanWithError> groups);

// ---------------------------------------------------------------- holdouts

struct CaseFloors {
    std::size_t min_input = 10;
    std::size_t min_holdout = 5;
};

/// Inputs and holdouts for the correlation metrics contrasting g_j with a
/// control factor g_i.
struct ControlCase {
    std::size_t control_factor = 0;
    /// I_u - I_(u,g_j) - I_(u,g_i)
    std::vector<std::size_t> input;
    /// I_(u,g_j)
    std::vector<std::size_t> holdout_ctrl;
    /// I_(u,g_i)
    std::vector<std::size_t> holdout_rand;
};

struct HoldoutCase {
    std::size_t user = 0;
    std::size_t factor = 0;
    /// I_u - I_(u,g_j)
    std::vector<std::size_t> input;
    /// I_(u,g_j)
    std::vector<std::size_t> holdout;
    /// I_(g_j) - I_(u,g_j); empty when below the holdout floor.
    std::vector<std::size_t> irrelevant_holdout;
    std::optional<ControlCase> easy;
    std::optional<ControlCase> difficult;
};

/// Up to n_users eligible cases for `factor`, drawn from `users` in a
/// seed-determined order.
std::vector<HoldoutCase> build_holdout_cases(const data::InteractionDataset& dataset,
                                             std::span<const std::size_t> users, std::size_t factor,
                                             std::size_t n_users, std::uint64_t seed, const CaseFloors& floors = {});

// ---------------------------------------------------------- controllability

/// NDCG after minus NDCG before, both against `holdout`.
double delta_between(const control::RankedList& before, const control::RankedList& after,
                     std::span<const std::size_t> holdout, std::size_t k);

/// NDCG change on `holdout` when the factor's knob is set to 1 for a user
/// represented by `input` (input items excluded from both rankings).
double delta_metric(const model::ModelParams& params, const control::KnobMapping& mapping, std::size_t factor,
                    std::span<const std::size_t> input, std::span<const std::size_t> holdout, std::size_t k = 100);
double delta_ctrl(const model::ModelParams& params, const control::KnobMapping& mapping, const HoldoutCase& c,
                  std::size_t k = 100);
/// Requires a non-empty irrelevant holdout.
double delta_irrel(const model::ModelParams& params, const control::KnobMapping& mapping, const HoldoutCase& c,
                   std::size_t k = 100);

struct SweepResult {
    RealVector knob_values;
    RealVector latent_values;
    RealVector ndcg;
    double correlation = 0.0;
};

/// NDCG on `holdout` for n_steps evenly spaced knob values in [0, 1]; the
/// correlation is taken against the knob values, or against the latent
/// values when `against_latent` is set.
SweepResult correlation_sweep(const model::ModelParams& params, const control::KnobMapping& mapping,
                              std::size_t factor, std::span<const std::size_t> input,
                              std::span<const std::size_t> holdout, std::size_t n_steps = 50, std::size_t k = 100,
                              bool against_latent = false);

enum Metric : std::size_t {
    delta_ctrl_metric,
    delta_irrel_metric,
    corr,
    easy_corr_ctrl,
    easy_corr_rand,
    diff_corr_ctrl,
    diff_corr_rand,
    metric_count
};
const char* metric_name(std::size_t m);

struct CaseResult {
    std::size_t user = 0;
    std::size_t factor = 0;
    std::array<std::optional<double>, metric_count> values;
};

struct ControllabilityReport {
    std::vector<CaseResult> cases;
    /// Indexed [factor][metric]; count 0 where no case qualified.
    std::vector<std::array<MeanWithError, metric_count>> per_factor;
    /// Mean over users within a factor, then over factors.
    std::array<MeanWithError, metric_count> aggregate;
};

struct ControllabilityOptions {
    std::size_t k = 100;
    std::size_t n_users = 100;
    std::size_t n_steps = 50;
    std::uint64_t seed = 1;
    CaseFloors floors;
    bool against_latent = false;
};

ControllabilityReport evaluate_controllability(const model::ModelParams& params, const control::KnobMapping& mapping,
                                               const data::InteractionDataset& dataset,
                                               std::span<const std::size_t> users,
                                               const ControllabilityOptions& options = {});

// ---------------------------------------------------------------------- MIG

struct MIGReport {
    /// Indexed [factor][latent dim], nats.
    std::vector<RealVector> mutual_information;
    RealVector factor_entropy;
    RealVector gap;
    double mean_gap = 0.0;
    std::vector<std::string> warnings;
};

/// Equal-count bins by rank; tied values share the bin of their first rank.
std::vector<std::size_t> quantile_bins(std::span<const double> values, std::size_t n_bins);
double discrete_entropy(std::span<const std::size_t> labels, std::size_t n_bins);
double discrete_mutual_information(std::span<const std::size_t> a, std::span<const std::size_t> b,
                                   std::size_t n_bins);

/// Mutual information gap of `representations` (U' x D) against `factors`
/// (U' x A), normalised by each factor's discrete entropy.
MIGReport mig(const RealMatrix& representations, const RealMatrix& factors, std::size_t n_bins = 20);

// -------------------------------------------------------------- recommender

/// Per-user NDCG@k of fold-in -> holdout rankings (fold-in excluded).
RealVector recommender_ndcg(const model::ModelParams& params, std::span<const data::EvalUser> users,
                            std::size_t k = 100);
double evaluate_recommender(const model::ModelParams& params, std::span<const data::EvalUser> users,
                            std::size_t k = 100);

/// Posterior means for the given item lists, computed in chunks.
RealMatrix encode_means(const model::ModelParams& params, std::span<const std::vector<std::size_t>> items);

// ------------------------------------------------------------------ report

struct EvalOptions {
    ControllabilityOptions controllability;
    std::size_t n_bins = 20;
    /// Score MIG on every user instead of the test users only.
    bool mig_all_users = false;
};

struct EvalReport {
    std::vector<std::string> factor_names;
    MeanWithError ndcg;
    MIGReport mig;
    std::optional<ControllabilityReport> controllability;
    std::vector<std::string> notes;

    nlohmann::json to_json() const;
    std::string to_markdown() const;
};

/// NDCG and MIG on the test users, and the controllability suite when a
/// knob mapping is supplied.
EvalReport evaluate_model(const model::ModelParams& params, const std::optional<control::KnobMapping>& mapping,
                          const data::InteractionDataset& dataset, const data::UserSplit& split,
                          const EvalOptions& options = {});

} // namespace knobrec::metrics
