#include "knobrec/metrics.hpp"

#include "knobrec/errors.hpp"

#include <algorithm>

namespace knobrec::metrics {

double delta_between(const control::RankedList& before, const control::RankedList& after,
                     std::span<const std::size_t> holdout, std::size_t k) {
    return ndcg_at_k(after, holdout, k) - ndcg_at_k(before, holdout, k);
}

double delta_metric(const model::ModelParams& params, const control::KnobMapping& mapping, std::size_t factor,
                    std::span<const std::size_t> input, std::span<const std::size_t> holdout, std::size_t k) {
    const RealVector z = control::infer_representation(params, input);
    const RealVector z_max = control::manipulate(z, {factor, 1.0}, mapping);
    const control::RankedList before = control::recommend(params, z, input, k);
    const control::RankedList after = control::recommend(params, z_max, input, k);
    return delta_between(before, after, holdout, k);
}

double delta_ctrl(const model::ModelParams& params, const control::KnobMapping& mapping, const HoldoutCase& c,
                  std::size_t k) {
    return delta_metric(params, mapping, c.factor, c.input, c.holdout, k);
}

double delta_irrel(const model::ModelParams& params, const control::KnobMapping& mapping, const HoldoutCase& c,
                   std::size_t k) {
    if (c.irrelevant_holdout.empty()) throw DataError("delta_irrel: case has no irrelevant holdout");
    return delta_metric(params, mapping, c.factor, c.input, c.irrelevant_holdout, k);
}

SweepResult correlation_sweep(const model::ModelParams& params, const control::KnobMapping& mapping,
                              std::size_t factor, std::span<const std::size_t> input,
                              std::span<const std::size_t> holdout, std::size_t n_steps, std::size_t k,
                              bool against_latent) {
    if (n_steps < 2) throw ConfigError("correlation_sweep: need at least 2 steps");
    const RealVector z = control::infer_representation(params, input);
    const std::size_t dim = mapping.dimension(factor);

    SweepResult out;
    RealMatrix grid(n_steps, z.size());
    for (std::size_t s = 0; s < n_steps; ++s) {
        const double v = static_cast<double>(s) / static_cast<double>(n_steps - 1);
        out.knob_values.push_back(v);
        out.latent_values.push_back(control::knob_to_latent(v));
        std::copy(z.begin(), z.end(), grid.row(s).begin());
        grid(s, dim) = out.latent_values.back();
    }
    const RealMatrix log_pi = model::decode(params, grid);
    for (std::size_t s = 0; s < n_steps; ++s) {
        out.ndcg.push_back(ndcg_at_k(control::rank_scores(log_pi.row(s), input, k), holdout, k));
    }
    out.correlation = pearson_correlation(against_latent ? out.latent_values : out.knob_values, out.ndcg);
    return out;
}

const char* metric_name(std::size_t m) {
    switch (m) {
    case delta_ctrl_metric: return "delta_ctrl";
    case delta_irrel_metric: return "delta_irrel";
    case corr: return "corr";
    case easy_corr_ctrl: return "easy_corr_ctrl";
    case easy_corr_rand: return "easy_corr_rand";
    case diff_corr_ctrl: return "diff_corr_ctrl";
    case diff_corr_rand: return "diff_corr_rand";
    default: throw ConfigError("metric_name: unknown metric");
    }
}

ControllabilityReport evaluate_controllability(const model::ModelParams& params, const control::KnobMapping& mapping,
                                               const data::InteractionDataset& dataset,
                                               std::span<const std::size_t> users,
                                               const ControllabilityOptions& options) {
    ControllabilityReport report;
    const std::size_t n_factors = mapping.size();
    report.per_factor.resize(n_factors);

    auto sweep = [&](std::size_t factor, std::span<const std::size_t> input, std::span<const std::size_t> holdout) {
        return correlation_sweep(params, mapping, factor, input, holdout, options.n_steps, options.k,
                                 options.against_latent)
            .correlation;
    };

    for (std::size_t j = 0; j < n_factors; ++j) {
        const auto cases = build_holdout_cases(dataset, users, j, options.n_users, options.seed, options.floors);
        std::array<RealVector, metric_count> collected;
        for (const HoldoutCase& c : cases) {
            CaseResult r;
            r.user = c.user;
            r.factor = j;
            r.values[delta_ctrl_metric] = delta_ctrl(params, mapping, c, options.k);
            if (!c.irrelevant_holdout.empty()) r.values[delta_irrel_metric] = delta_irrel(params, mapping, c, options.k);
            r.values[corr] = sweep(j, c.input, c.holdout);
            if (c.easy) {
                r.values[easy_corr_ctrl] = sweep(j, c.easy->input, c.easy->holdout_ctrl);
                r.values[easy_corr_rand] = sweep(j, c.easy->input, c.easy->holdout_rand);
            }
            if (c.difficult) {
                r.values[diff_corr_ctrl] = sweep(j, c.difficult->input, c.difficult->holdout_ctrl);
                r.values[diff_corr_rand] = sweep(j, c.difficult->input, c.difficult->holdout_rand);
            }
            for (std::size_t m = 0; m < metric_count; ++m) {
                if (r.values[m]) collected[m].push_back(*r.values[m]);
            }
            report.cases.push_back(std::move(r));
        }
        for (std::size_t m = 0; m < metric_count; ++m) report.per_factor[j][m] = summarize(collected[m]);
    }

    for (std::size_t m = 0; m < metric_count; ++m) {
        std::vector<MeanWithError> groups;
        for (const auto& f : report.per_factor) groups.push_back(f[m]);
        report.aggregate[m] = combine_groups(groups);
    }
    return report;
}

} // namespace knobrec::metrics
