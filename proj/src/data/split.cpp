#include "knobrec/data.hpp"

#include "knobrec/errors.hpp"

#include <algorithm>
#include <cmath>

namespace knobrec::data {

namespace {

EvalUser hold_out(const InteractionDataset& dataset, std::size_t user, double fraction, std::mt19937_64& rng) {
    std::vector<std::size_t> items = dataset.user_items[user];
    const std::size_t n = items.size();
    std::size_t n_holdout = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(fraction * n)));
    if (n >= 2) n_holdout = std::min(n_holdout, n - 1);
    if (n < 2) {
        throw DataError("user " + dataset.user_ids[user] + " has too few items for a fold-in/holdout split");
    }
    std::shuffle(items.begin(), items.end(), rng);
    EvalUser out;
    out.user = user;
    out.holdout.assign(items.begin(), items.begin() + static_cast<std::ptrdiff_t>(n_holdout));
    out.fold_in.assign(items.begin() + static_cast<std::ptrdiff_t>(n_holdout), items.end());
    std::sort(out.holdout.begin(), out.holdout.end());
    std::sort(out.fold_in.begin(), out.fold_in.end());
    return out;
}

} // namespace

UserSplit split_users(const InteractionDataset& dataset, std::size_t n_validation, std::size_t n_test,
                      double holdout_fraction, std::uint64_t seed) {
    const std::size_t n_users = dataset.n_users();
    if (n_validation + n_test >= n_users) {
        throw DataError("cannot split " + std::to_string(n_users) + " users into " + std::to_string(n_validation) +
                        " validation and " + std::to_string(n_test) + " test users with a non-empty train set");
    }
    if (!(holdout_fraction > 0.0 && holdout_fraction < 1.0)) {
        throw ConfigError("holdout fraction must lie in (0, 1)");
    }

    std::mt19937_64 rng(seed);
    std::vector<std::size_t> order(n_users);
    for (std::size_t u = 0; u < n_users; ++u) order[u] = u;
    std::shuffle(order.begin(), order.end(), rng);

    auto test_end = order.begin() + static_cast<std::ptrdiff_t>(n_test);
    auto val_end = test_end + static_cast<std::ptrdiff_t>(n_validation);
    std::vector<std::size_t> test(order.begin(), test_end);
    std::vector<std::size_t> validation(test_end, val_end);
    UserSplit split;
    split.train_users.assign(val_end, order.end());
    std::sort(test.begin(), test.end());
    std::sort(validation.begin(), validation.end());
    std::sort(split.train_users.begin(), split.train_users.end());

    for (std::size_t u : test) split.test.push_back(hold_out(dataset, u, holdout_fraction, rng));
    for (std::size_t u : validation) split.validation.push_back(hold_out(dataset, u, holdout_fraction, rng));
    return split;
}

} // namespace knobrec::data
