#include "knobrec/metrics.hpp"

#include <cstdio>
#include <sstream>

namespace knobrec::metrics {

namespace {

nlohmann::json to_json(const MeanWithError& m) {
    return {{"mean", m.mean}, {"standard_error", m.standard_error}, {"count", m.count}};
}

std::string cell(const MeanWithError& m) {
    if (m.count == 0) return "n/a";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.4f (%.4f)", m.mean, m.standard_error);
    return buf;
}

std::string cell(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4f", v);
    return buf;
}

} // namespace

nlohmann::json EvalReport::to_json() const {
    nlohmann::json aggregate;
    aggregate["ndcg"] = metrics::to_json(ndcg);
    aggregate["mig"] = {{"mean", mig.mean_gap}};
    if (controllability) {
        for (std::size_t m = 0; m < metric_count; ++m) {
            aggregate[metric_name(m)] = metrics::to_json(controllability->aggregate[m]);
        }
    }

    nlohmann::json per_factor = nlohmann::json::array();
    for (std::size_t a = 0; a < factor_names.size(); ++a) {
        nlohmann::json f;
        f["factor"] = factor_names[a];
        if (a < mig.gap.size()) {
            f["mig"] = mig.gap[a];
            f["entropy"] = mig.factor_entropy[a];
            f["mutual_information"] = mig.mutual_information[a];
        }
        if (controllability && a < controllability->per_factor.size()) {
            for (std::size_t m = 0; m < metric_count; ++m) {
                f[metric_name(m)] = metrics::to_json(controllability->per_factor[a][m]);
            }
        }
        per_factor.push_back(std::move(f));
    }

    nlohmann::json out;
    out["factors"] = factor_names;
    out["aggregate"] = std::move(aggregate);
    out["per_factor"] = std::move(per_factor);
    out["notes"] = notes;
    out["warnings"] = mig.warnings;
    if (controllability) out["controllability_cases"] = controllability->cases.size();
    return out;
}

std::string EvalReport::to_markdown() const {
    std::ostringstream os;
    os << "| NDCG | MIG |";
    if (controllability) {
        for (std::size_t m = 0; m < metric_count; ++m) os << ' ' << metric_name(m) << " |";
    }
    os << "\n|---|---|";
    if (controllability) {
        for (std::size_t m = 0; m < metric_count; ++m) os << "---|";
    }
    os << "\n| " << cell(ndcg) << " | " << cell(mig.mean_gap) << " |";
    if (controllability) {
        for (std::size_t m = 0; m < metric_count; ++m) os << ' ' << cell(controllability->aggregate[m]) << " |";
    }
    os << "\n\nValues in parentheses are standard errors.\n";

    os << "\n### Per factor\n\n| factor | MIG |";
    if (controllability) {
        for (std::size_t m = 0; m < metric_count; ++m) os << ' ' << metric_name(m) << " |";
    }
    os << "\n|---|---|";
    if (controllability) {
        for (std::size_t m = 0; m < metric_count; ++m) os << "---|";
    }
    os << '\n';
    for (std::size_t a = 0; a < factor_names.size(); ++a) {
        os << "| " << factor_names[a] << " | " << (a < mig.gap.size() ? cell(mig.gap[a]) : "n/a") << " |";
        if (controllability && a < controllability->per_factor.size()) {
            for (std::size_t m = 0; m < metric_count; ++m) os << ' ' << cell(controllability->per_factor[a][m]) << " |";
        }
        os << '\n';
    }
    if (!notes.empty() || !mig.warnings.empty()) {
        os << "\n### Notes\n\n";
        for (const auto& n : notes) os << "- " << n << '\n';
        for (const auto& w : mig.warnings) os << "- " << w << '\n';
    }
    return os.str();
}

EvalReport evaluate_model(const model::ModelParams& params, const std::optional<control::KnobMapping>& mapping,
                          const data::InteractionDataset& dataset, const data::UserSplit& split,
                          const EvalOptions& options) {
    EvalReport report;
    report.factor_names = dataset.factor_names;

    const RealVector per_user = recommender_ndcg(params, split.test, options.controllability.k);
    report.ndcg = summarize(per_user);

    std::vector<std::size_t> mig_users;
    if (options.mig_all_users) {
        for (std::size_t u = 0; u < dataset.n_users(); ++u) mig_users.push_back(u);
    } else {
        for (const auto& e : split.test) mig_users.push_back(e.user);
    }
    std::vector<std::vector<std::size_t>> histories;
    for (std::size_t u : mig_users) histories.push_back(dataset.user_items[u]);
    if (histories.size() >= options.n_bins) {
        const RealMatrix reps = encode_means(params, histories);
        const data::FactorMatrix factors = data::compute_preference_distribution(dataset, histories);
        report.mig = mig(reps, factors, options.n_bins);
    } else {
        report.notes.push_back("MIG skipped: fewer users than bins");
    }

    if (mapping && mapping->size() > 0) {
        std::vector<std::size_t> users;
        for (const auto& e : split.test) users.push_back(e.user);
        report.controllability =
            evaluate_controllability(params, *mapping, dataset, users, options.controllability);
        if (report.controllability->cases.empty()) report.notes.push_back("no user met the 10/5 case floors");
    } else {
        report.notes.push_back("controllability skipped: model has no supervised knob dimensions");
    }
    return report;
}

} // namespace knobrec::metrics
