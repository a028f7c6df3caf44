#include "knobrec/data.hpp"
#include "knobrec/errors.hpp"

#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <numeric>
#include <sstream>

using namespace knobrec;
using namespace knobrec::data;

namespace {

RawRatings parse(const std::string& ratings, const std::string& items) {
    std::istringstream r(ratings), m(items);
    return parse_ratings(r, m);
}

std::string ratings_for(const std::string& user, const std::vector<double>& ratings, std::size_t first_item = 1) {
    std::string out;
    for (std::size_t i = 0; i < ratings.size(); ++i) {
        out += user + "," + std::to_string(first_item + i) + "," + std::to_string(ratings[i]) + ",0\n";
    }
    return out;
}

/// Items: 0..3 {A,B}, 4 {A,C}, 5 {D}, 6 {B}, 7 {C}. Factors A=0 B=1 C=2 D=3.
InteractionDataset toy_dataset() {
    InteractionDataset d;
    d.factor_names = {"A", "B", "C", "D"};
    d.item_factors = {{0, 1}, {0, 1}, {0, 1}, {0, 1}, {0, 2}, {3}, {1}, {2}};
    for (std::size_t i = 0; i < d.item_factors.size(); ++i) {
        d.item_ids.push_back(std::to_string(i));
        d.item_titles.push_back("item " + std::to_string(i));
    }
    d.user_ids = {"u0", "u1"};
    d.user_items = {{0, 1, 2, 4}, {0, 1, 2, 4, 5}};
    return d;
}

InteractionDataset sequential_dataset(std::size_t n_users, std::size_t items_per_user) {
    InteractionDataset d;
    d.factor_names = {"f"};
    for (std::size_t i = 0; i < items_per_user * 2; ++i) {
        d.item_ids.push_back(std::to_string(i));
        d.item_titles.push_back("");
        d.item_factors.push_back({0});
    }
    for (std::size_t u = 0; u < n_users; ++u) {
        d.user_ids.push_back("u" + std::to_string(u));
        std::vector<std::size_t> items(items_per_user);
        std::iota(items.begin(), items.end(), u % items_per_user);
        d.user_items.push_back(items);
    }
    return d;
}

} // namespace

TEST_CASE("load: rows, pipe-separated factors, missing metadata") {
    const RawRatings raw = parse("userId,itemId,rating,timestamp\n1,10,5,0\n1,11,4,0\n2,10,3,0\n",
                                 "itemId,title,factors\n10,\"Heat, 1995\",Action|Adventure\n12,Other,(no genres listed)\n");
    CHECK(raw.rows.size() == 3);
    CHECK(raw.rows[2].rating == 3.0);
    REQUIRE(raw.items.count("10") == 1);
    CHECK(raw.items.at("10").title == "Heat, 1995");
    CHECK(raw.items.at("10").factors == std::vector<std::string>{"Action", "Adventure"});
    CHECK(raw.items.at("12").factors.empty());
}

TEST_CASE("load: errors carry line numbers; empty files are rejected") {
    try {
        parse("userId,itemId,rating\n1,10,5\n1,11,great\n", "itemId,title,factors\n");
        FAIL("expected a parse error");
    } catch (const DataError& e) {
        CHECK(std::string(e.what()).find("ratings:3") != std::string::npos);
    }
    CHECK_THROWS_AS(parse("", "itemId,title,factors\n"), DataError);
    CHECK_THROWS_AS(parse("userId,itemId,rating\n1,1,5\n", ""), DataError);
    CHECK_THROWS_AS(load_ratings("/nonexistent/ratings.csv", "/nonexistent/items.csv"), DataError);
}

TEST_CASE("binarize and filter: rating and activity thresholds") {
    const std::string ratings = "userId,itemId,rating\n" + ratings_for("keep", {5, 4, 4, 4, 4}) +
                                ratings_for("drop", {5, 3, 3, 3, 3, 3});
    const InteractionDataset ds = binarize_and_filter(parse(ratings, "itemId,title,factors\n1,a,X\n"));
    REQUIRE(ds.n_users() == 1);
    CHECK(ds.user_ids[0] == "keep");
    CHECK(ds.user_items[0].size() == 5);
    CHECK(ds.n_items() == 5);
    CHECK(ds.factor_names == std::vector<std::string>{"X"});
    CHECK_NOTHROW(ds.validate(5));

    CHECK_THROWS_AS(binarize_and_filter(parse("userId,itemId,rating\n" + ratings_for("u", {3, 2, 1, 3, 3, 2}),
                                              "itemId,title,factors\n")),
                    DataError);
}

TEST_CASE("binarize and filter: every retained user meets the threshold") {
    SyntheticSpec spec;
    spec.n_users = 300;
    spec.n_items = 120;
    spec.min_interactions = 3;
    spec.max_interactions = 12;
    const SyntheticDataset s = generate_synthetic(spec);
    FilterOptions f;
    f.min_interactions = 6;
    const InteractionDataset ds = binarize_and_filter(s.raw, f);
    for (const auto& items : ds.user_items) CHECK(items.size() >= 6);
    CHECK(ds.n_users() < 300);
}

TEST_CASE("binarize and filter: top-A factor option keeps the most frequent labels") {
    const std::string ratings = "userId,itemId,rating\n" + ratings_for("u", {5, 5, 5, 5, 5});
    const std::string items = "itemId,title,factors\n1,a,X|Y\n2,b,X\n3,c,X|Z\n4,d,Y\n5,e,W\n";
    FilterOptions f;
    f.max_factors = 2;
    const InteractionDataset ds = binarize_and_filter(parse(ratings, items), f);
    CHECK(ds.factor_names == std::vector<std::string>{"X", "Y"});
}

TEST_CASE("split: sizes, 20 percent holdout, determinism, disjointness") {
    const InteractionDataset ds = sequential_dataset(100, 10);
    const UserSplit a = split_users(ds, 10, 10, 0.2, 42);
    CHECK(a.train_users.size() == 80);
    CHECK(a.validation.size() == 10);
    CHECK(a.test.size() == 10);
    for (const auto& e : a.test) {
        CHECK(e.fold_in.size() == 8);
        CHECK(e.holdout.size() == 2);
        std::vector<std::size_t> all = e.fold_in;
        all.insert(all.end(), e.holdout.begin(), e.holdout.end());
        std::sort(all.begin(), all.end());
        CHECK(all == ds.user_items[e.user]);
    }

    std::vector<std::size_t> seen = a.train_users;
    for (const auto& e : a.validation) seen.push_back(e.user);
    for (const auto& e : a.test) seen.push_back(e.user);
    std::sort(seen.begin(), seen.end());
    std::vector<std::size_t> expected(100);
    std::iota(expected.begin(), expected.end(), 0);
    CHECK(seen == expected);

    const UserSplit b = split_users(ds, 10, 10, 0.2, 42);
    CHECK(a.train_users == b.train_users);
    for (std::size_t i = 0; i < a.test.size(); ++i) CHECK(a.test[i].holdout == b.test[i].holdout);
    const UserSplit c = split_users(ds, 10, 10, 0.2, 43);
    CHECK(a.train_users != c.train_users);

    CHECK_THROWS_AS(split_users(ds, 60, 40, 0.2, 1), DataError);
}

TEST_CASE("split: holdout size is max(1, round(0.2 n))") {
    for (std::size_t n : {2, 3, 5, 7, 12, 13}) {
        const InteractionDataset ds = sequential_dataset(4, n);
        const UserSplit s = split_users(ds, 1, 1, 0.2, 5);
        const std::size_t expect = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(0.2 * n)));
        CHECK(s.test[0].holdout.size() == expect);
    }
}

TEST_CASE("preference distribution: ratios, multi-factor rows, empty subsets") {
    InteractionDataset d = toy_dataset();
    const std::vector<std::vector<std::size_t>> subsets{{0, 5, 6, 7}, {0, 1}, {6}};
    const FactorMatrix m = compute_preference_distribution(d, subsets);
    CHECK(m(0, 0) == 0.25);
    CHECK(m(1, 0) == 1.0);
    CHECK(m(1, 1) == 1.0);
    CHECK(m(1, 0) + m(1, 1) + m(1, 2) + m(1, 3) == 2.0);
    CHECK(m(2, 1) == 1.0);
    CHECK(m(2, 0) == 0.0);

    // 4 items, 2 tagged A
    const FactorMatrix half = compute_preference_distribution(d, std::vector<std::vector<std::size_t>>{{0, 4, 6, 7}});
    CHECK(half(0, 0) == 0.5);

    CHECK_THROWS_AS(compute_preference_distribution(d, std::vector<std::vector<std::size_t>>{{}}), DataError);

    const FactorMatrix full = compute_preference_distribution(d);
    CHECK(full.rows() == 2);
    for (double v : full.values()) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }
}

TEST_CASE("preference distribution: zero exactly when the factor is absent") {
    const SyntheticDataset s = generate_synthetic(SyntheticSpec{300, 80, 4});
    const FactorMatrix m = compute_preference_distribution(s.dataset);
    for (std::size_t u = 0; u < s.dataset.n_users(); ++u)
        for (std::size_t j = 0; j < 4; ++j) {
            const bool present = !s.dataset.items_with_factor(s.dataset.user_items[u], j).empty();
            CHECK((m(u, j) > 0.0) == present);
        }
}

TEST_CASE("co-occurrence: toy profile, ties, errors, order invariance") {
    InteractionDataset d = toy_dataset();
    // user 0: 3 x {A,B}, 1 x {A,C}; D exists in the dataset but not for this user
    const CooccurrenceProfile p = cooccurrence_profile(d, 0, 0);
    CHECK(p.difficult == 1);
    CHECK(p.easy == 2);

    // user 1 also owns a D item that never co-occurs with A: it becomes g_easy
    const CooccurrenceProfile q = cooccurrence_profile(d, 1, 0);
    CHECK(q.easy == 3);
    CHECK(q.difficult == 1);

    // tie between B and C (one A item each) goes to the lower index
    InteractionDataset t = d;
    t.item_factors[0] = {0, 1};
    t.item_factors[4] = {0, 2};
    const std::vector<std::size_t> pair{0, 4};
    CHECK(cooccurrence_profile(t, pair, 0).difficult == 1);
    CHECK(cooccurrence_profile(t, pair, 0).easy == 1);

    std::vector<std::size_t> shuffled{4, 2, 0, 1};
    CHECK(cooccurrence_profile(d, shuffled, 0).difficult == p.difficult);
    CHECK(cooccurrence_profile(d, shuffled, 0).easy == p.easy);

    InteractionDataset two = d;
    two.factor_names = {"A", "B"};
    two.item_factors = {{0, 1}, {0}, {1}, {0}, {0}, {1}, {1}, {0}};
    CHECK_THROWS_AS(cooccurrence_profile(two, 0, 0), DataError);
    CHECK_THROWS_AS(cooccurrence_profile(d, std::vector<std::size_t>{6, 7}, 0), DataError);
}

TEST_CASE("synthetic: concentrated affinity stays in its pool") {
    std::vector<std::vector<std::size_t>> pools(4);
    for (std::size_t i = 0; i < 8000; ++i) pools[i % 4].push_back(i);
    const std::vector<double> affinity{0.97, 0.01, 0.01, 0.01};
    std::mt19937_64 rng(1);
    const auto items = sample_user_items(affinity, 1000, pools, rng);
    REQUIRE(items.size() == 1000);
    const auto in_pool0 = std::count_if(items.begin(), items.end(), [](std::size_t i) { return i % 4 == 0; });
    CHECK(in_pool0 >= 900);
    std::vector<std::size_t> sorted = items;
    std::sort(sorted.begin(), sorted.end());
    CHECK(std::adjacent_find(sorted.begin(), sorted.end()) == sorted.end());
}

TEST_CASE("synthetic: determinism, factor coverage, single factor") {
    SyntheticSpec spec;
    spec.n_users = 200;
    spec.n_items = 100;
    const SyntheticDataset a = generate_synthetic(spec);
    const SyntheticDataset b = generate_synthetic(spec);
    CHECK(a.dataset.user_items == b.dataset.user_items);
    CHECK(a.affinities == b.affinities);
    for (const auto& f : a.dataset.item_factors) CHECK(!f.empty());
    CHECK_NOTHROW(a.dataset.validate(spec.min_interactions));

    spec.n_factors = 1;
    const SyntheticDataset one = generate_synthetic(spec);
    const FactorMatrix m = compute_preference_distribution(one.dataset);
    for (double v : m.values()) CHECK(v == 1.0);

    SyntheticSpec bad;
    bad.max_interactions = bad.n_items + 1;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("synthetic files load back to the same interactions; prepared data round-trips") {
    SyntheticSpec spec;
    spec.n_users = 150;
    spec.n_items = 90;
    const SyntheticDataset s = generate_synthetic(spec);
    const auto dir = std::filesystem::temp_directory_path() / "knobrec_test_data";
    std::filesystem::remove_all(dir);
    write_synthetic(s, dir);
    CHECK(std::filesystem::exists(dir / "ground_truth.json"));

    const InteractionDataset loaded = binarize_and_filter(load_ratings(dir / "ratings.csv", dir / "items.csv"));
    CHECK(loaded.n_users() == s.dataset.n_users());
    std::size_t total_a = 0, total_b = 0;
    for (const auto& v : loaded.user_items) total_a += v.size();
    for (const auto& v : s.dataset.user_items) total_b += v.size();
    CHECK(total_a == total_b);

    PreparedData p{loaded, split_users(loaded, 20, 20, 0.2, 3)};
    save_prepared(p, dir / "prepared");
    const PreparedData back = load_prepared(dir / "prepared");
    CHECK(back.dataset.user_items == p.dataset.user_items);
    CHECK(back.dataset.item_ids == p.dataset.item_ids);
    CHECK(back.dataset.item_titles == p.dataset.item_titles);
    CHECK(back.dataset.item_factors == p.dataset.item_factors);
    CHECK(back.dataset.factor_names == p.dataset.factor_names);
    CHECK(back.split.train_users == p.split.train_users);
    REQUIRE(back.split.test.size() == p.split.test.size());
    for (std::size_t i = 0; i < p.split.test.size(); ++i) {
        CHECK(back.split.test[i].fold_in == p.split.test[i].fold_in);
        CHECK(back.split.test[i].holdout == p.split.test[i].holdout);
    }
    std::filesystem::remove_all(dir);
}
