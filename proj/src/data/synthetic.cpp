#include "knobrec/data.hpp"

#include "knobrec/errors.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

namespace knobrec::data {

void SyntheticSpec::validate() const {
    if (n_users == 0 || n_items == 0 || n_factors == 0) throw ConfigError("synthetic: sizes must be positive");
    if (n_items < n_factors) throw ConfigError("synthetic: need at least one item per factor");
    if (min_interactions == 0 || min_interactions > max_interactions) {
        throw ConfigError("synthetic: require 0 < min_interactions <= max_interactions");
    }
    if (max_interactions > n_items) throw ConfigError("synthetic: max_interactions exceeds item count");
    if (!(affinity_concentration > 0.0)) throw ConfigError("synthetic: affinity_concentration must be > 0");
    if (secondary_factor_probability < 0.0 || secondary_factor_probability > 1.0) {
        throw ConfigError("synthetic: secondary_factor_probability must lie in [0, 1]");
    }
    if (disliked_fraction < 0.0) throw ConfigError("synthetic: disliked_fraction must be >= 0");
}

std::vector<std::size_t> sample_user_items(std::span<const double> affinity, std::size_t count,
                                           const std::vector<std::vector<std::size_t>>& pools,
                                           std::mt19937_64& rng) {
    std::discrete_distribution<std::size_t> pick_factor(affinity.begin(), affinity.end());
    std::set<std::size_t> chosen;
    const std::size_t max_attempts = 50 * count + 100;
    for (std::size_t attempt = 0; attempt < max_attempts && chosen.size() < count; ++attempt) {
        const auto& pool = pools.at(pick_factor(rng));
        if (pool.empty()) continue;
        std::uniform_int_distribution<std::size_t> pick_item(0, pool.size() - 1);
        chosen.insert(pool[pick_item(rng)]);
    }
    return {chosen.begin(), chosen.end()};
}

SyntheticDataset generate_synthetic(const SyntheticSpec& spec) {
    spec.validate();
    std::mt19937_64 rng(spec.seed);
    const std::size_t n_factors = spec.n_factors;

    SyntheticDataset out;
    InteractionDataset& ds = out.dataset;
    for (std::size_t j = 0; j < n_factors; ++j) ds.factor_names.push_back("factor_" + std::to_string(j));

    out.factor_pools.assign(n_factors, {});
    std::bernoulli_distribution has_secondary(n_factors > 1 ? spec.secondary_factor_probability : 0.0);
    for (std::size_t i = 0; i < spec.n_items; ++i) {
        std::vector<std::size_t> factors{i % n_factors};
        if (has_secondary(rng)) {
            std::uniform_int_distribution<std::size_t> other(0, n_factors - 2);
            std::size_t k = other(rng);
            if (k >= factors[0]) ++k;
            factors.push_back(k);
            std::sort(factors.begin(), factors.end());
        }
        for (std::size_t j : factors) out.factor_pools[j].push_back(i);
        ds.item_ids.push_back(std::to_string(i + 1));
        ds.item_titles.push_back("Item " + std::to_string(i + 1));
        ds.item_factors.push_back(std::move(factors));
    }

    out.affinities = RealMatrix(spec.n_users, n_factors);
    std::gamma_distribution<double> gamma(spec.affinity_concentration, 1.0);
    std::uniform_int_distribution<std::size_t> n_interactions(spec.min_interactions, spec.max_interactions);
    std::uniform_int_distribution<std::size_t> any_item(0, spec.n_items - 1);
    std::uniform_int_distribution<int> liked_rating(8, 10);
    std::uniform_int_distribution<int> disliked_rating(1, 3);

    for (std::size_t u = 0; u < spec.n_users; ++u) {
        auto affinity = out.affinities.row(u);
        double total = 0.0;
        for (double& a : affinity) total += (a = gamma(rng));
        for (double& a : affinity) a = total > 0.0 ? a / total : 1.0 / static_cast<double>(n_factors);

        const std::string user_id = std::to_string(u + 1);
        std::vector<std::size_t> items = sample_user_items(affinity, n_interactions(rng), out.factor_pools, rng);
        for (std::size_t i : items) {
            out.raw.rows.push_back({user_id, ds.item_ids[i], 0.5 * liked_rating(rng)});
        }
        const auto n_disliked = static_cast<std::size_t>(std::llround(spec.disliked_fraction * items.size()));
        for (std::size_t k = 0; k < n_disliked; ++k) {
            const std::size_t i = any_item(rng);
            if (std::binary_search(items.begin(), items.end(), i)) continue;
            out.raw.rows.push_back({user_id, ds.item_ids[i], static_cast<double>(disliked_rating(rng))});
        }
        ds.user_ids.push_back(user_id);
        ds.user_items.push_back(std::move(items));
    }

    for (std::size_t i = 0; i < spec.n_items; ++i) {
        ItemMetadata meta{ds.item_titles[i], {}};
        for (std::size_t j : ds.item_factors[i]) meta.factors.push_back(ds.factor_names[j]);
        out.raw.items[ds.item_ids[i]] = std::move(meta);
    }
    return out;
}

void write_synthetic(const SyntheticDataset& synthetic, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    {
        std::ofstream ratings(dir / "ratings.csv");
        if (!ratings) throw DataError("cannot write " + (dir / "ratings.csv").string());
        ratings << "userId,itemId,rating,timestamp\n";
        for (const RatingRow& row : synthetic.raw.rows) {
            ratings << row.user << ',' << row.item << ',' << row.rating << ",0\n";
        }
    }
    const InteractionDataset& ds = synthetic.dataset;
    {
        std::ofstream items(dir / "items.csv");
        if (!items) throw DataError("cannot write " + (dir / "items.csv").string());
        items << "itemId,title,factors\n";
        for (std::size_t i = 0; i < ds.n_items(); ++i) {
            items << ds.item_ids[i] << ",\"" << ds.item_titles[i] << "\",";
            for (std::size_t k = 0; k < ds.item_factors[i].size(); ++k) {
                items << (k ? "|" : "") << ds.factor_names[ds.item_factors[i][k]];
            }
            items << '\n';
        }
    }
    nlohmann::json truth;
    truth["factors"] = ds.factor_names;
    nlohmann::json users = nlohmann::json::object();
    for (std::size_t u = 0; u < ds.n_users(); ++u) {
        auto row = synthetic.affinities.row(u);
        users[ds.user_ids[u]] = std::vector<double>(row.begin(), row.end());
    }
    truth["affinities"] = std::move(users);
    std::ofstream sidecar(dir / "ground_truth.json");
    if (!sidecar) throw DataError("cannot write " + (dir / "ground_truth.json").string());
    sidecar << truth.dump(1) << '\n';
}

} // namespace knobrec::data
