#include "fixtures.hpp"
#include "oracles.hpp"

#include "knobrec/control.hpp"
#include "knobrec/errors.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>

using namespace knobrec;
using namespace knobrec::control;

TEST_CASE("inverse CDF: round trip, median, tail value") {
    for (int i = 1; i <= 99; ++i) {
        const double v = i / 100.0;
        const long double back = oracle::normal_cdf_series(knob_to_latent(v));
        CHECK(std::abs(static_cast<double>(back) - v) < 1e-9);
    }
    CHECK(knob_to_latent(0.5) == 0.0);
    CHECK(std::abs(knob_to_latent(0.975) - static_cast<double>(oracle::normal_quantile_bisect(0.975L))) < 1e-6);
    CHECK(knob_to_latent(0.975) == doctest::Approx(1.959963984540054).epsilon(1e-12));
}

TEST_CASE("inverse CDF: strictly increasing, clamped at the ends") {
    double prev = -1e300;
    for (int i = 0; i <= 10000; ++i) {
        const double x = knob_to_latent(i / 10000.0);
        CHECK(std::isfinite(x));
        CHECK(x > prev);
        prev = x;
    }
    CHECK(knob_to_latent(0.0) == knob_to_latent(kKnobClamp));
    CHECK(knob_to_latent(1.0) == knob_to_latent(1.0 - kKnobClamp));
    CHECK(knob_to_latent(1.0) == doctest::Approx(4.753424).epsilon(1e-6));
    CHECK(knob_to_latent(1e-3) == doctest::Approx(-knob_to_latent(1 - 1e-3)).epsilon(1e-12));
    CHECK_THROWS_AS(knob_to_latent(std::nan("")), ConfigError);
}

TEST_CASE("knob mapping validation") {
    CHECK_THROWS_AS(KnobMapping({0, 0}, 4), ConfigError);
    CHECK_THROWS_AS(KnobMapping({4}, 4), ConfigError);
    CHECK_THROWS_AS(KnobMapping::identity(5, 4), ConfigError);
    const KnobMapping m({3, 1}, 4);
    CHECK(m.dimension(0) == 3);
    CHECK(m.dimension(1) == 1);
    CHECK_THROWS_AS(m.dimension(2), ConfigError);
    CHECK(KnobMapping::identity(3, 8).dims() == std::vector<std::size_t>{0, 1, 2});
}

TEST_CASE("manipulate: one coordinate, no-op at the median, commuting knobs") {
    const RealVector z{0.3, 0.0, -1.2, 2.0};
    const KnobMapping m = KnobMapping::identity(3, 4);
    CHECK(manipulate(z, {1, 0.5}, m) == z);

    const RealVector a = manipulate(z, {2, 0.9}, m);
    std::size_t changed = 0;
    for (std::size_t d = 0; d < 4; ++d) changed += a[d] != z[d];
    CHECK(changed == 1);
    CHECK(a[2] == knob_to_latent(0.9));

    CHECK(manipulate(manipulate(z, {0, 0.1}, m), {2, 0.7}, m) == manipulate(manipulate(z, {2, 0.7}, m), {0, 0.1}, m));
    CHECK_THROWS_AS(manipulate(z, {3, 0.5}, m), ConfigError);
    CHECK_THROWS_AS(manipulate(z, {0, 1.5}, m), ConfigError);
    CHECK_THROWS_AS(manipulate(RealVector{1.0}, {2, 0.5}, m), DimensionError);
}

TEST_CASE("rank_scores: ties by index, exclusion, short lists") {
    const std::vector<double> s{0.5, 2.0, 0.5, -1.0, 2.0};
    const RankedList all = rank_scores(s, {}, 5);
    CHECK(all.items == std::vector<std::size_t>{1, 4, 0, 2, 3});
    CHECK(all.scores == std::vector<double>{2.0, 2.0, 0.5, 0.5, -1.0});

    const std::vector<std::size_t> ex{1};
    const RankedList r = rank_scores(s, ex, 2);
    CHECK(r.items == std::vector<std::size_t>{4, 0});

    const std::vector<std::size_t> many{0, 1, 2};
    CHECK(rank_scores(s, many, 10).items == std::vector<std::size_t>{4, 3});
    CHECK_THROWS_AS(rank_scores(s, {}, 0), ConfigError);
}

TEST_CASE("recommend: permutation of the catalogue, exclusion, purity") {
    const model::ModelParams p = fixture::toy_params(25, 8, 4, 3);
    const std::vector<std::size_t> fold{2, 7, 11};
    const RealVector z = infer_representation(p, fold);
    CHECK(z.size() == 4);
    CHECK(infer_representation(p, fold) == z);
    CHECK_THROWS_AS(infer_representation(p, std::vector<std::size_t>{}), DataError);

    RankedList full = recommend(p, z, {}, 25);
    std::vector<std::size_t> sorted = full.items;
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t i = 0; i < 25; ++i) CHECK(sorted[i] == i);
    for (std::size_t i = 1; i < 25; ++i) CHECK(full.scores[i - 1] >= full.scores[i]);

    const std::vector<std::size_t> top{full.items[0]};
    CHECK(recommend(p, z, top, 1).items[0] == full.items[1]);
    const RankedList ex = recommend(p, z, fold, 25);
    CHECK(ex.size() == 22);
    for (std::size_t i : ex.items) CHECK(std::find(fold.begin(), fold.end(), i) == fold.end());
    CHECK(recommend(p, z, fold, 10).items == recommend(p, z, fold, 10).items);
}

TEST_CASE("supervised model: knobs steer recommendations and codes track preferences") {
    const fixture::TrainedSynthetic t = fixture::trained_synthetic(1.0);
    const auto& ds = t.synthetic.dataset;
    const std::size_t A = ds.n_factors();
    const KnobMapping mapping = KnobMapping::identity(A, 8);
    const data::FactorMatrix prefs = data::compute_preference_distribution(ds);

    std::vector<double> code_corr, knob_corr;
    std::size_t wins = 0, pairs = 0;
    for (const data::EvalUser& u : t.split.test) {
        const RealVector z = infer_representation(t.fit.params, u.fold_in);
        std::vector<double> sig(A), truth(A);
        for (std::size_t j = 0; j < A; ++j) {
            sig[j] = 1.0 / (1.0 + std::exp(-z[j]));
            truth[j] = prefs(u.user, j);
        }
        code_corr.push_back(oracle::spearman_direct(sig, truth));

        for (std::size_t j = 0; j < A; ++j) {
            std::vector<double> vs, counts;
            for (int s = 0; s <= 10; ++s) {
                const double v = s == 0 ? 0.01 : (s == 10 ? 0.99 : s / 10.0);
                const RankedList r = recommend(t.fit.params, manipulate(z, {j, v}, mapping), u.fold_in, 20);
                vs.push_back(v);
                counts.push_back(static_cast<double>(count_with_factor(r, ds, j)));
            }
            wins += counts.back() > counts.front();
            ++pairs;
            knob_corr.push_back(oracle::spearman_direct(vs, counts));
        }
    }
    const auto median = [](std::vector<double> v) {
        std::sort(v.begin(), v.end());
        return v.size() % 2 ? v[v.size() / 2] : 0.5 * (v[v.size() / 2 - 1] + v[v.size() / 2]);
    };
    INFO("wins ", wins, "/", pairs, " median knob spearman ", median(knob_corr), " median code spearman ",
         median(code_corr));
    CHECK(2 * wins > pairs);
    CHECK(median(knob_corr) > 0.5);
    CHECK(median(code_corr) > 0.0);
}
