#pragma once

#include "knobrec/model.hpp"

#include <cstddef>
#include <random>
#include <span>
#include <vector>

namespace knobrec::control {

/// Knob values are clamped to [kKnobClamp, 1 - kKnobClamp] before inversion.
inline constexpr double kKnobClamp = 1e-6;

/// Injective map from supervised factor index to latent dimension.
class KnobMapping {
public:
    KnobMapping() = default;
    KnobMapping(std::vector<std::size_t> dims, std::size_t latent);

    /// Factor j -> latent dim j, the layout produced by supervised training.
    static KnobMapping identity(std::size_t n_factors, std::size_t latent);

    std::size_t dimension(std::size_t factor) const;
    std::size_t size() const { return dims_.size(); }
    const std::vector<std::size_t>& dims() const { return dims_; }

private:
    std::vector<std::size_t> dims_;
};

struct KnobSetting {
    std::size_t factor = 0;
    /// Position in [0, 1].
    double value = 0.5;
};

double standard_normal_cdf(double x);

/// Standard-normal inverse CDF of the clamped knob value.
double knob_to_latent(double value);

/// Posterior mean for the binary row of `fold_in`.
RealVector infer_representation(const model::ModelParams& params, std::span<const std::size_t> fold_in);
/// A posterior draw instead of the mean.
RealVector sample_representation(const model::ModelParams& params, std::span<const std::size_t> fold_in,
                                 std::mt19937_64& rng);

/// Copy of z with dimension k(j) replaced by knob_to_latent(v).
RealVector manipulate(std::span<const double> z, const KnobSetting& knob, const KnobMapping& mapping);

/// Items ordered by (score desc, index asc).
struct RankedList {
    std::vector<std::size_t> items;
    std::vector<double> scores;

    std::size_t size() const { return items.size(); }
};

/// Top-n of `scores` skipping `exclude` (need not be sorted). Returns every
/// remaining item when fewer than n are left.
RankedList rank_scores(std::span<const double> scores, std::span<const std::size_t> exclude, std::size_t n);

/// Decodes z and ranks items by log-likelihood.
RankedList recommend(const model::ModelParams& params, std::span<const double> z,
                     std::span<const std::size_t> exclude, std::size_t n);

/// Count(top_n, g_j).
std::size_t count_with_factor(const RankedList& ranked, const data::InteractionDataset& dataset,
                              std::size_t factor);

} // namespace knobrec::control
