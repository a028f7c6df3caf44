#include "knobrec/control.hpp"

#include "knobrec/errors.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <set>
#include <string>
#include <unordered_set>

namespace knobrec::control {

KnobMapping::KnobMapping(std::vector<std::size_t> dims, std::size_t latent) : dims_(std::move(dims)) {
    std::set<std::size_t> seen;
    for (std::size_t d : dims_) {
        if (d >= latent) {
            throw ConfigError("knob dimension " + std::to_string(d) + " outside latent size " + std::to_string(latent));
        }
        if (!seen.insert(d).second) throw ConfigError("knob mapping is not injective");
    }
}

KnobMapping KnobMapping::identity(std::size_t n_factors, std::size_t latent) {
    if (n_factors > latent) {
        throw ConfigError(std::to_string(n_factors) + " factors do not fit in " + std::to_string(latent) +
                          " latent dims");
    }
    std::vector<std::size_t> dims(n_factors);
    for (std::size_t j = 0; j < n_factors; ++j) dims[j] = j;
    return KnobMapping(std::move(dims), latent);
}

std::size_t KnobMapping::dimension(std::size_t factor) const {
    if (factor >= dims_.size()) throw ConfigError("factor " + std::to_string(factor) + " has no knob");
    return dims_[factor];
}

double standard_normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

double knob_to_latent(double value) {
    if (std::isnan(value)) throw ConfigError("knob value is NaN");
    const double p = std::clamp(value, kKnobClamp, 1.0 - kKnobClamp);

    // Rational approximation (Acklam), relative error ~1e-9.
    static constexpr std::array<double, 6> a{-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
                                             1.383577518672690e+02,  -3.066479806614716e+01, 2.506628277459239e+00};
    static constexpr std::array<double, 5> b{-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
                                             6.680131188771972e+01,  -1.328068155288572e+01};
    static constexpr std::array<double, 6> c{-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
                                             -2.549732539343734e+00, 4.374664141464968e+00,  2.938163982698783e+00};
    static constexpr std::array<double, 4> d{7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
                                             3.754408661907416e+00};
    constexpr double p_low = 0.02425;

    double x = 0.0;
    if (p < p_low) {
        const double q = std::sqrt(-2.0 * std::log(p));
        x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    } else if (p <= 1.0 - p_low) {
        const double q = p - 0.5;
        const double r = q * q;
        x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
            (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
    } else {
        const double q = std::sqrt(-2.0 * std::log1p(-p));
        x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }

    // One Newton step on Phi(x) - p.
    const double density = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
    x -= (standard_normal_cdf(x) - p) / density;
    return x;
}

namespace {

RealMatrix fold_in_row(const model::ModelParams& params, std::span<const std::size_t> fold_in) {
    if (fold_in.empty()) throw DataError("cannot infer a representation from an empty item set");
    RealMatrix x(1, params.dims().n_items);
    for (std::size_t i : fold_in) {
        if (i >= x.cols()) throw DataError("item index " + std::to_string(i) + " out of range");
        x(0, i) = 1.0;
    }
    return x;
}

} // namespace

RealVector infer_representation(const model::ModelParams& params, std::span<const std::size_t> fold_in) {
    const model::Encoding enc = model::encode(params, fold_in_row(params, fold_in));
    auto row = enc.mean.row(0);
    return {row.begin(), row.end()};
}

RealVector sample_representation(const model::ModelParams& params, std::span<const std::size_t> fold_in,
                                 std::mt19937_64& rng) {
    const model::Encoding enc = model::encode(params, fold_in_row(params, fold_in));
    std::normal_distribution<double> normal;
    RealVector z(enc.mean.cols());
    for (std::size_t d = 0; d < z.size(); ++d) {
        z[d] = enc.mean(0, d) + std::exp(0.5 * enc.log_variance(0, d)) * normal(rng);
    }
    return z;
}

RealVector manipulate(std::span<const double> z, const KnobSetting& knob, const KnobMapping& mapping) {
    if (!(knob.value >= 0.0 && knob.value <= 1.0)) throw ConfigError("knob value must lie in [0, 1]");
    const std::size_t dim = mapping.dimension(knob.factor);
    if (dim >= z.size()) throw DimensionError("knob dimension outside representation");
    RealVector out(z.begin(), z.end());
    out[dim] = knob_to_latent(knob.value);
    return out;
}

RankedList rank_scores(std::span<const double> scores, std::span<const std::size_t> exclude, std::size_t n) {
    if (n == 0) throw ConfigError("recommendation list length must be >= 1");
    std::vector<char> excluded(scores.size(), 0);
    for (std::size_t i : exclude) {
        if (i < excluded.size()) excluded[i] = 1;
    }
    std::vector<std::size_t> candidates;
    candidates.reserve(scores.size());
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (!excluded[i]) candidates.push_back(i);
    }
    const auto better = [&](std::size_t a, std::size_t b) {
        return scores[a] > scores[b] || (scores[a] == scores[b] && a < b);
    };
    const std::size_t take = std::min(n, candidates.size());
    std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(take), candidates.end(),
                      better);
    RankedList out;
    out.items.assign(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(take));
    out.scores.reserve(take);
    for (std::size_t i : out.items) out.scores.push_back(scores[i]);
    return out;
}

RankedList recommend(const model::ModelParams& params, std::span<const double> z,
                     std::span<const std::size_t> exclude, std::size_t n) {
    const RealMatrix log_pi = model::decode(params, RealMatrix::row_vector(z));
    return rank_scores(log_pi.row(0), exclude, n);
}

std::size_t count_with_factor(const RankedList& ranked, const data::InteractionDataset& dataset,
                              std::size_t factor) {
    std::size_t n = 0;
    for (std::size_t i : ranked.items) n += dataset.item_has_factor(i, factor) ? 1 : 0;
    return n;
}

} // namespace knobrec::control
