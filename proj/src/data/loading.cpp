#include "knobrec/data.hpp"

#include "knobrec/errors.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

namespace knobrec::data {

namespace {

constexpr const char* kNoFactorLabel = "(no genres listed)";

std::string trim(std::string s) {
    const auto not_space = [](unsigned char c) { return !std::isspace(c); };
    s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
    s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
    return s;
}

bool all_digits(const std::string& s) {
    return !s.empty() && std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isdigit(c); });
}

// Integer-looking ids sort numerically and before any other id.
bool id_less(const std::string& a, const std::string& b) {
    const bool na = all_digits(a);
    const bool nb = all_digits(b);
    if (na != nb) return na;
    if (na && a.size() != b.size()) return a.size() < b.size();
    return a < b;
}

std::vector<std::string> split_factors(const std::string& field) {
    std::vector<std::string> out;
    std::stringstream in(field);
    std::string label;
    while (std::getline(in, label, '|')) {
        label = trim(label);
        if (label.empty() || label == kNoFactorLabel) continue;
        if (std::find(out.begin(), out.end(), label) == out.end()) out.push_back(label);
    }
    return out;
}

[[noreturn]] void parse_failure(const std::string& source, std::size_t line, const std::string& what) {
    throw DataError(source + ":" + std::to_string(line) + ": " + what);
}

} // namespace

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string current;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    current.push_back('"');
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                current.push_back(c);
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            fields.push_back(std::move(current));
            current.clear();
        } else if (c != '\r') {
            current.push_back(c);
        }
    }
    if (quoted) throw DataError("unterminated quoted field");
    fields.push_back(std::move(current));
    return fields;
}

RawRatings parse_ratings(std::istream& ratings_csv, std::istream& metadata_csv) {
    RawRatings raw;
    std::string line;

    std::size_t line_no = 0;
    bool header_seen = false;
    while (std::getline(ratings_csv, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        if (!header_seen) {
            header_seen = true;
            continue;
        }
        std::vector<std::string> fields;
        try {
            fields = split_csv_line(line);
        } catch (const DataError& e) {
            parse_failure("ratings", line_no, e.what());
        }
        if (fields.size() < 3) parse_failure("ratings", line_no, "expected userId,itemId,rating");
        RatingRow row{trim(fields[0]), trim(fields[1]), 0.0};
        const std::string rating = trim(fields[2]);
        const char* end = rating.data() + rating.size();
        auto [ptr, ec] = std::from_chars(rating.data(), end, row.rating);
        if (ec != std::errc() || ptr != end || !std::isfinite(row.rating)) {
            parse_failure("ratings", line_no, "non-numeric rating '" + rating + "'");
        }
        if (row.user.empty() || row.item.empty()) parse_failure("ratings", line_no, "empty user or item id");
        raw.rows.push_back(std::move(row));
    }
    if (!header_seen) throw DataError("ratings: empty file");
    if (raw.rows.empty()) throw DataError("ratings: no data rows");

    line_no = 0;
    header_seen = false;
    while (std::getline(metadata_csv, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        if (!header_seen) {
            header_seen = true;
            continue;
        }
        std::vector<std::string> fields;
        try {
            fields = split_csv_line(line);
        } catch (const DataError& e) {
            parse_failure("metadata", line_no, e.what());
        }
        if (fields.size() < 3) parse_failure("metadata", line_no, "expected itemId,title,factors");
        const std::string id = trim(fields[0]);
        if (id.empty()) parse_failure("metadata", line_no, "empty item id");
        raw.items[id] = ItemMetadata{trim(fields[1]), split_factors(fields[2])};
    }
    if (!header_seen) throw DataError("metadata: empty file");
    return raw;
}

RawRatings load_ratings(const std::filesystem::path& ratings_csv, const std::filesystem::path& metadata_csv) {
    std::ifstream ratings(ratings_csv);
    if (!ratings) throw DataError("cannot open ratings file " + ratings_csv.string());
    std::ifstream metadata(metadata_csv);
    if (!metadata) throw DataError("cannot open metadata file " + metadata_csv.string());
    try {
        return parse_ratings(ratings, metadata);
    } catch (const DataError& e) {
        throw DataError(std::string(e.what()) + " (" + ratings_csv.string() + ", " + metadata_csv.string() + ")");
    }
}

InteractionDataset binarize_and_filter(const RawRatings& raw, const FilterOptions& options) {
    std::unordered_map<std::string, std::set<std::string>> positives;
    for (const RatingRow& row : raw.rows) {
        if (row.rating >= options.min_rating) positives[row.user].insert(row.item);
    }

    std::vector<std::string> users;
    std::set<std::string> item_set;
    for (const auto& [user, items] : positives) {
        if (items.size() < options.min_interactions) continue;
        users.push_back(user);
        item_set.insert(items.begin(), items.end());
    }
    if (users.empty()) {
        throw DataError("no users left after keeping ratings >= " + std::to_string(options.min_rating) +
                        " and requiring " + std::to_string(options.min_interactions) + " interactions");
    }
    std::sort(users.begin(), users.end(), id_less);
    std::vector<std::string> items(item_set.begin(), item_set.end());
    std::sort(items.begin(), items.end(), id_less);

    std::map<std::string, std::size_t> label_counts;
    for (const std::string& item : items) {
        auto it = raw.items.find(item);
        if (it == raw.items.end()) continue;
        for (const std::string& label : it->second.factors) ++label_counts[label];
    }
    std::vector<std::string> labels;
    for (const auto& [label, count] : label_counts) labels.push_back(label);
    if (options.max_factors > 0 && labels.size() > options.max_factors) {
        std::stable_sort(labels.begin(), labels.end(), [&](const std::string& a, const std::string& b) {
            return label_counts[a] > label_counts[b];
        });
        labels.resize(options.max_factors);
        std::sort(labels.begin(), labels.end());
    }
    std::map<std::string, std::size_t> label_index;
    for (std::size_t j = 0; j < labels.size(); ++j) label_index[labels[j]] = j;

    InteractionDataset out;
    out.factor_names = labels;
    out.user_ids = users;
    out.item_ids = items;
    std::unordered_map<std::string, std::size_t> item_index;
    for (std::size_t i = 0; i < items.size(); ++i) {
        item_index[items[i]] = i;
        std::vector<std::size_t> factors;
        auto it = raw.items.find(items[i]);
        if (it != raw.items.end()) {
            out.item_titles.push_back(it->second.title);
            for (const std::string& label : it->second.factors) {
                auto li = label_index.find(label);
                if (li != label_index.end()) factors.push_back(li->second);
            }
        } else {
            out.item_titles.emplace_back();
        }
        std::sort(factors.begin(), factors.end());
        out.item_factors.push_back(std::move(factors));
    }
    for (const std::string& user : users) {
        std::vector<std::size_t> row;
        for (const std::string& item : positives[user]) row.push_back(item_index.at(item));
        std::sort(row.begin(), row.end());
        out.user_items.push_back(std::move(row));
    }
    return out;
}

bool InteractionDataset::item_has_factor(std::size_t item, std::size_t factor) const {
    const auto& f = item_factors.at(item);
    return std::binary_search(f.begin(), f.end(), factor);
}

std::vector<std::size_t> InteractionDataset::factor_items(std::size_t factor) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < n_items(); ++i) {
        if (item_has_factor(i, factor)) out.push_back(i);
    }
    return out;
}

std::vector<std::size_t> InteractionDataset::items_with_factor(std::span<const std::size_t> items,
                                                               std::size_t factor) const {
    std::vector<std::size_t> out;
    for (std::size_t i : items) {
        if (item_has_factor(i, factor)) out.push_back(i);
    }
    return out;
}

std::vector<std::size_t> InteractionDataset::factor_prevalence() const {
    std::vector<std::size_t> counts(n_factors(), 0);
    for (const auto& factors : item_factors) {
        for (std::size_t j : factors) ++counts[j];
    }
    return counts;
}

void InteractionDataset::validate(std::size_t min_interactions) const {
    if (item_titles.size() != n_items() || item_factors.size() != n_items()) {
        throw DataError("item tables have inconsistent lengths");
    }
    if (user_ids.size() != n_users()) throw DataError("user tables have inconsistent lengths");
    for (const auto& factors : item_factors) {
        for (std::size_t j : factors) {
            if (j >= n_factors()) throw DataError("factor label outside vocabulary");
        }
        if (!std::is_sorted(factors.begin(), factors.end())) throw DataError("item factors not sorted");
    }
    for (std::size_t u = 0; u < n_users(); ++u) {
        const auto& items = user_items[u];
        if (items.size() < min_interactions) {
            throw DataError("user " + user_ids[u] + " has " + std::to_string(items.size()) + " interactions");
        }
        if (std::adjacent_find(items.begin(), items.end(), std::greater_equal<>()) != items.end()) {
            throw DataError("user " + user_ids[u] + " items not strictly increasing");
        }
        if (!items.empty() && items.back() >= n_items()) throw DataError("item index out of range");
    }
}

} // namespace knobrec::data
