#include "knobrec/metrics.hpp"

#include "knobrec/errors.hpp"

#include <algorithm>
#include <iterator>
#include <random>

namespace knobrec::metrics {

namespace {

std::vector<std::size_t> difference(std::span<const std::size_t> a, std::span<const std::size_t> b) {
    std::vector<std::size_t> out;
    std::set_difference(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
    return out;
}

std::optional<ControlCase> control_case(const data::InteractionDataset& dataset, const HoldoutCase& c,
                                        std::size_t control_factor, const CaseFloors& floors) {
    ControlCase out;
    out.control_factor = control_factor;
    out.holdout_rand = dataset.items_with_factor(dataset.user_items[c.user], control_factor);
    out.input = difference(c.input, out.holdout_rand);
    out.holdout_ctrl = c.holdout;
    if (out.input.size() < floors.min_input || out.holdout_rand.size() < floors.min_holdout) return std::nullopt;
    return out;
}

} // namespace

std::vector<HoldoutCase> build_holdout_cases(const data::InteractionDataset& dataset,
                                             std::span<const std::size_t> users, std::size_t factor,
                                             std::size_t n_users, std::uint64_t seed, const CaseFloors& floors) {
    if (factor >= dataset.n_factors()) throw DataError("build_holdout_cases: factor out of range");
    const std::vector<std::size_t> factor_items = dataset.factor_items(factor);

    std::vector<std::size_t> order(users.begin(), users.end());
    std::seed_seq seq{seed, static_cast<std::uint64_t>(factor)};
    std::mt19937_64 rng(seq);
    std::shuffle(order.begin(), order.end(), rng);

    std::vector<HoldoutCase> cases;
    for (std::size_t u : order) {
        if (cases.size() >= n_users) break;
        const auto& items = dataset.user_items.at(u);
        HoldoutCase c;
        c.user = u;
        c.factor = factor;
        c.holdout = dataset.items_with_factor(items, factor);
        c.input = difference(items, c.holdout);
        if (c.input.size() < floors.min_input || c.holdout.size() < floors.min_holdout) continue;
        c.irrelevant_holdout = difference(factor_items, c.holdout);
        if (c.irrelevant_holdout.size() < floors.min_holdout) c.irrelevant_holdout.clear();

        try {
            const data::CooccurrenceProfile profile = data::cooccurrence_profile(dataset, items, factor);
            c.easy = control_case(dataset, c, profile.easy, floors);
            c.difficult = control_case(dataset, c, profile.difficult, floors);
        } catch (const DataError&) {
            // fewer than two other factors: no control contrasts
        }
        cases.push_back(std::move(c));
    }
    return cases;
}

} // namespace knobrec::metrics
