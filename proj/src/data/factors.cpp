#include "knobrec/data.hpp"

#include "knobrec/errors.hpp"

#include <tuple>

namespace knobrec::data {

FactorMatrix compute_preference_distribution(const InteractionDataset& dataset,
                                             std::span<const std::vector<std::size_t>> item_subsets) {
    FactorMatrix out(item_subsets.size(), dataset.n_factors());
    for (std::size_t u = 0; u < item_subsets.size(); ++u) {
        const auto& items = item_subsets[u];
        if (items.empty()) {
            throw DataError("preference distribution of an empty item set (row " + std::to_string(u) + ")");
        }
        auto row = out.row(u);
        for (std::size_t item : items) {
            for (std::size_t j : dataset.item_factors.at(item)) row[j] += 1.0;
        }
        for (double& v : row) v /= static_cast<double>(items.size());
    }
    return out;
}

FactorMatrix compute_preference_distribution(const InteractionDataset& dataset) {
    return compute_preference_distribution(dataset, dataset.user_items);
}

CooccurrenceProfile cooccurrence_profile(const InteractionDataset& dataset, std::span<const std::size_t> items,
                                         std::size_t factor) {
    const std::size_t n_factors = dataset.n_factors();
    if (factor >= n_factors) throw DataError("factor index out of range");

    const std::vector<std::size_t> prevalence = dataset.factor_prevalence();
    std::vector<std::size_t> together(n_factors, 0);
    std::vector<bool> user_has(n_factors, false);
    bool has_factor = false;
    for (std::size_t item : items) {
        const auto& f = dataset.item_factors.at(item);
        const bool carries = dataset.item_has_factor(item, factor);
        has_factor = has_factor || carries;
        for (std::size_t k : f) {
            user_has[k] = true;
            if (carries) ++together[k];
        }
    }
    if (!has_factor) throw DataError("user has no item carrying factor " + dataset.factor_names[factor]);

    std::vector<std::size_t> candidates;
    for (std::size_t k = 0; k < n_factors; ++k) {
        if (k != factor && prevalence[k] > 0) candidates.push_back(k);
    }
    if (candidates.size() < 2) {
        throw DataError("co-occurrence profile needs at least two other factors in the dataset");
    }

    // Factors the user never consumed rank after the ones they did: a control
    // factor needs the user's own items of it as a holdout.
    auto easy_key = [&](std::size_t k) { return std::make_tuple(user_has[k] ? 0 : 1, together[k], k); };
    auto difficult_key = [&](std::size_t k) {
        return std::make_tuple(-static_cast<long long>(together[k]), user_has[k] ? 0 : 1, k);
    };
    CooccurrenceProfile out{candidates.front(), candidates.front()};
    for (std::size_t k : candidates) {
        if (easy_key(k) < easy_key(out.easy)) out.easy = k;
        if (difficult_key(k) < difficult_key(out.difficult)) out.difficult = k;
    }
    return out;
}

CooccurrenceProfile cooccurrence_profile(const InteractionDataset& dataset, std::size_t user, std::size_t factor) {
    return cooccurrence_profile(dataset, dataset.user_items.at(user), factor);
}

} // namespace knobrec::data
