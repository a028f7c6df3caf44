#pragma once

#include "knobrec/numerics/matrix.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace knobrec::data {

struct RatingRow {
    std::string user;
    std::string item;
    double rating = 0.0;
};

struct ItemMetadata {
    std::string title;
    std::vector<std::string> factors;
};

/// Ratings as read from disk plus the item -> factor labels map.
struct RawRatings {
    std::vector<RatingRow> rows;
    std::map<std::string, ItemMetadata> items;
};

/// Ratings CSV (`userId,itemId,rating[,timestamp]`) and metadata CSV
/// (`itemId,title,factors` with `|`-separated factors). Throws DataError with
/// the file and line number on malformed rows.
RawRatings load_ratings(const std::filesystem::path& ratings_csv, const std::filesystem::path& metadata_csv);
RawRatings parse_ratings(std::istream& ratings_csv, std::istream& metadata_csv);

/// Splits one CSV line, honouring double-quoted fields.
std::vector<std::string> split_csv_line(const std::string& line);

/// Binary implicit-feedback dataset with dense user and item indices.
struct InteractionDataset {
    std::vector<std::string> user_ids;
    std::vector<std::string> item_ids;
    std::vector<std::string> item_titles;
    /// Sorted factor indices per item; may be empty.
    std::vector<std::vector<std::size_t>> item_factors;
    std::vector<std::string> factor_names;
    /// Sorted item indices per user (I_u).
    std::vector<std::vector<std::size_t>> user_items;

    std::size_t n_users() const { return user_items.size(); }
    std::size_t n_items() const { return item_ids.size(); }
    std::size_t n_factors() const { return factor_names.size(); }

    bool item_has_factor(std::size_t item, std::size_t factor) const;
    /// I_{g_j}: every item carrying `factor`, ascending.
    std::vector<std::size_t> factor_items(std::size_t factor) const;
    /// Items of `items` carrying `factor`, preserving order.
    std::vector<std::size_t> items_with_factor(std::span<const std::size_t> items, std::size_t factor) const;
    /// Number of items carrying each factor.
    std::vector<std::size_t> factor_prevalence() const;

    /// Throws DataError if index or ordering invariants are broken.
    void validate(std::size_t min_interactions = 1) const;
};

struct FilterOptions {
    double min_rating = 4.0;
    std::size_t min_interactions = 5;
    /// Keep only the `max_factors` most frequent labels (0 keeps all).
    std::size_t max_factors = 0;
};

/// Keeps ratings >= min_rating as binary interactions, then drops users with
/// fewer than min_interactions of them and re-densifies indices.
InteractionDataset binarize_and_filter(const RawRatings& raw, const FilterOptions& options = {});

struct EvalUser {
    std::size_t user = 0;
    std::vector<std::size_t> fold_in;
    std::vector<std::size_t> holdout;
};

struct UserSplit {
    std::vector<std::size_t> train_users;
    std::vector<EvalUser> validation;
    std::vector<EvalUser> test;
};

/// Disjoint train/validation/test users. Every evaluation user gets a uniform
/// holdout of max(1, round(holdout_fraction * |I_u|)) items.
UserSplit split_users(const InteractionDataset& dataset, std::size_t n_validation, std::size_t n_test,
                      double holdout_fraction, std::uint64_t seed);

/// U x A matrix of preference distributions.
using FactorMatrix = RealMatrix;

/// Row u holds, for each factor, the fraction of item_subsets[u] carrying it.
FactorMatrix compute_preference_distribution(const InteractionDataset& dataset,
                                             std::span<const std::vector<std::size_t>> item_subsets);
/// Preference distributions over each user's full history.
FactorMatrix compute_preference_distribution(const InteractionDataset& dataset);

struct CooccurrenceProfile {
    std::size_t easy = 0;
    std::size_t difficult = 0;
};

/// Least and most co-occurring factors with `factor` among `items`.
CooccurrenceProfile cooccurrence_profile(const InteractionDataset& dataset, std::span<const std::size_t> items,
                                         std::size_t factor);
CooccurrenceProfile cooccurrence_profile(const InteractionDataset& dataset, std::size_t user, std::size_t factor);

struct SyntheticSpec {
    std::size_t n_users = 2000;
    std::size_t n_items = 500;
    std::size_t n_factors = 4;
    /// Probability that an item carries a second, distinct factor.
    double secondary_factor_probability = 0.2;
    /// Symmetric Dirichlet concentration of per-user factor affinities.
    double affinity_concentration = 0.5;
    std::size_t min_interactions = 20;
    std::size_t max_interactions = 60;
    /// Extra low ratings (< 4) per user, as a fraction of its interactions.
    double disliked_fraction = 0.1;
    std::uint64_t seed = 7;

    void validate() const;
};

struct SyntheticDataset {
    InteractionDataset dataset;
    /// Ratings table equivalent to `dataset` plus the disliked rows.
    RawRatings raw;
    /// U x A planted affinities.
    RealMatrix affinities;
    /// Items carrying each factor.
    std::vector<std::vector<std::size_t>> factor_pools;
};

SyntheticDataset generate_synthetic(const SyntheticSpec& spec);

/// Draws `count` distinct items: factor ~ affinity, then an item uniformly
/// from that factor's pool. Stops early if the pools are exhausted.
std::vector<std::size_t> sample_user_items(std::span<const double> affinity, std::size_t count,
                                           const std::vector<std::vector<std::size_t>>& pools,
                                           std::mt19937_64& rng);

/// Writes `ratings.csv`, `items.csv` and `ground_truth.json` into `dir`.
void write_synthetic(const SyntheticDataset& synthetic, const std::filesystem::path& dir);

/// Filtered dataset, split and factor matrix in a directory.
struct PreparedData {
    InteractionDataset dataset;
    UserSplit split;
};

void save_prepared(const PreparedData& prepared, const std::filesystem::path& dir);
PreparedData load_prepared(const std::filesystem::path& dir);

} // namespace knobrec::data
