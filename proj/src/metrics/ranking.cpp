#include "knobrec/metrics.hpp"

#include "knobrec/errors.hpp"

#include <algorithm>
#include <cmath>

namespace knobrec::metrics {

double ndcg_at_k(const control::RankedList& ranked, std::span<const std::size_t> holdout, std::size_t k) {
    if (holdout.empty()) throw DataError("ndcg_at_k: empty holdout");
    if (k == 0) throw ConfigError("ndcg_at_k: k must be >= 1");
    std::vector<std::size_t> relevant(holdout.begin(), holdout.end());
    std::sort(relevant.begin(), relevant.end());
    relevant.erase(std::unique(relevant.begin(), relevant.end()), relevant.end());

    double dcg = 0.0;
    const std::size_t depth = std::min(k, ranked.items.size());
    for (std::size_t r = 0; r < depth; ++r) {
        if (std::binary_search(relevant.begin(), relevant.end(), ranked.items[r])) {
            dcg += 1.0 / std::log2(static_cast<double>(r) + 2.0);
        }
    }
    double ideal = 0.0;
    const std::size_t n_ideal = std::min(relevant.size(), k);
    for (std::size_t r = 0; r < n_ideal; ++r) ideal += 1.0 / std::log2(static_cast<double>(r) + 2.0);
    return dcg / ideal;
}

double pearson_correlation(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) throw DimensionError("pearson_correlation: length mismatch");
    const std::size_t n = x.size();
    if (n < 2) return 0.0;
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double dx = x[i] - mx;
        const double dy = y[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx == 0.0 || syy == 0.0) return 0.0;
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

MeanWithError summarize(std::span<const double> values) {
    MeanWithError out;
    out.count = values.size();
    if (values.empty()) return out;
    double total = 0.0;
    for (double v : values) total += v;
    out.mean = total / static_cast<double>(values.size());
    if (values.size() > 1) {
        double ss = 0.0;
        for (double v : values) ss += (v - out.mean) * (v - out.mean);
        const double sd = std::sqrt(ss / static_cast<double>(values.size() - 1));
        out.standard_error = sd / std::sqrt(static_cast<double>(values.size()));
    }
    return out;
}

MeanWithError combine_groups(std::span<const MeanWithError> groups) {
    MeanWithError out;
    double total = 0.0, variance = 0.0;
    std::size_t n_groups = 0;
    for (const MeanWithError& g : groups) {
        if (g.count == 0) continue;
        ++n_groups;
        total += g.mean;
        variance += g.standard_error * g.standard_error;
        out.count += g.count;
    }
    if (n_groups == 0) return out;
    out.mean = total / static_cast<double>(n_groups);
    out.standard_error = std::sqrt(variance) / static_cast<double>(n_groups);
    return out;
}

RealMatrix encode_means(const model::ModelParams& params, std::span<const std::vector<std::size_t>> items) {
    constexpr std::size_t kChunk = 256;
    RealMatrix out(items.size(), params.dims().latent);
    for (std::size_t begin = 0; begin < items.size(); begin += kChunk) {
        const std::size_t end = std::min(items.size(), begin + kChunk);
        const RealMatrix x = model::interaction_rows(items.subspan(begin, end - begin), params.dims().n_items);
        const model::Encoding enc = model::encode(params, x);
        for (std::size_t r = begin; r < end; ++r) {
            std::copy_n(enc.mean.row(r - begin).begin(), out.cols(), out.row(r).begin());
        }
    }
    return out;
}

RealVector recommender_ndcg(const model::ModelParams& params, std::span<const data::EvalUser> users, std::size_t k) {
    constexpr std::size_t kChunk = 256;
    RealVector out;
    out.reserve(users.size());
    for (std::size_t begin = 0; begin < users.size(); begin += kChunk) {
        const std::size_t end = std::min(users.size(), begin + kChunk);
        std::vector<std::vector<std::size_t>> fold_in;
        for (std::size_t u = begin; u < end; ++u) fold_in.push_back(users[u].fold_in);
        const RealMatrix x = model::interaction_rows(fold_in, params.dims().n_items);
        const RealMatrix log_pi = model::decode(params, model::encode(params, x).mean);
        for (std::size_t u = begin; u < end; ++u) {
            const control::RankedList ranked = control::rank_scores(log_pi.row(u - begin), users[u].fold_in, k);
            out.push_back(ndcg_at_k(ranked, users[u].holdout, k));
        }
    }
    return out;
}

double evaluate_recommender(const model::ModelParams& params, std::span<const data::EvalUser> users, std::size_t k) {
    const RealVector per_user = recommender_ndcg(params, users, k);
    return summarize(per_user).mean;
}

} // namespace knobrec::metrics
