#include "oracles.hpp"

#include "knobrec/errors.hpp"
#include "knobrec/numerics/adam.hpp"
#include "knobrec/numerics/gradient_check.hpp"
#include "knobrec/numerics/kernels.hpp"
#include "knobrec/numerics/tape.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace knobrec;

namespace {

void check_close(const RealMatrix& a, const RealMatrix& b, double tol) {
    REQUIRE(a.rows() == b.rows());
    REQUIRE(a.cols() == b.cols());
    for (std::size_t i = 0; i < a.values().size(); ++i) CHECK(a.values()[i] == doctest::Approx(b.values()[i]).epsilon(tol));
}

} // namespace

TEST_CASE("linear: identity weight and row sum") {
    const RealMatrix x = RealMatrix::from_rows({{1, 2}});
    const RealMatrix eye = RealMatrix::from_rows({{1, 0}, {0, 1}});
    CHECK(linear(x, eye, RealMatrix(1, 2)) == x);

    const RealMatrix out = linear(RealMatrix::from_rows({{3, 4}}), RealMatrix::from_rows({{1}, {1}}), RealMatrix(1, 1));
    CHECK(out(0, 0) == 7.0);
}

TEST_CASE("linear matches the triple-loop product plus bias") {
    std::mt19937_64 rng(3);
    const RealMatrix x = oracle::random_matrix(2, 3, rng);
    const RealMatrix w = oracle::random_matrix(3, 4, rng);
    const RealMatrix b = oracle::random_matrix(1, 4, rng);
    RealMatrix expected = oracle::naive_product(x, w);
    for (std::size_t r = 0; r < 2; ++r)
        for (std::size_t c = 0; c < 4; ++c) expected(r, c) += b(0, c);
    check_close(linear(x, w, b), expected, 1e-14);
}

TEST_CASE("linear rejects mismatched shapes") {
    CHECK_THROWS_AS(linear(RealMatrix(2, 3), RealMatrix(2, 3), RealMatrix(1, 3)), DimensionError);
    CHECK_THROWS_AS(linear(RealMatrix(2, 3), RealMatrix(3, 2), RealMatrix(1, 3)), DimensionError);
}

TEST_CASE("transposed products match the naive oracle for any thread count") {
    std::mt19937_64 rng(11);
    const RealMatrix a = oracle::random_matrix(7, 5, rng);
    const RealMatrix b = oracle::random_matrix(6, 5, rng);
    const RealMatrix c = oracle::random_matrix(7, 3, rng);

    RealMatrix abt(7, 6);
    matmul_add_bt(a, b, abt);
    check_close(abt, oracle::naive_product(a, oracle::transpose(b)), 1e-13);

    RealMatrix atc(5, 3);
    matmul_add_at(a, c, atc);
    check_close(atc, oracle::naive_product(oracle::transpose(a), c), 1e-13);

    const RealMatrix w = oracle::random_matrix(5, 9, rng);
    const RealMatrix single = matmul(a, w);
    set_kernel_threads(3);
    const RealMatrix threaded = matmul(a, w);
    set_kernel_threads(1);
    CHECK(single == threaded);
}

TEST_CASE("matmul skips zero entries without changing the result") {
    std::mt19937_64 rng(5);
    RealMatrix a = oracle::random_matrix(4, 6, rng);
    a(1, 2) = 0.0;
    a(3, 0) = 0.0;
    const RealMatrix b = oracle::random_matrix(6, 2, rng);
    check_close(matmul(a, b), oracle::naive_product(a, b), 1e-14);
}

TEST_CASE("tanh: zero, saturation and slope at zero") {
    const RealMatrix out = tanh_activation(RealMatrix::from_rows({{0.0, 100.0}}));
    CHECK(out(0, 0) == 0.0);
    CHECK(out(0, 1) == 1.0);
    CHECK(out.all_finite());

    Tape tape;
    const Var x = tape.leaf(RealMatrix(1, 1, 0.0));
    tape.backward(ad::sum(ad::tanh(x)));
    CHECK(x.grad()(0, 0) == 1.0);
}

TEST_CASE("softplus is overflow safe") {
    CHECK(softplus(1000.0) == 1000.0);
    CHECK(softplus(-1000.0) >= 0.0);
    CHECK(softplus(0.0) == doctest::Approx(std::log(2.0)));
    CHECK(sigmoid(0.0) == 0.5);
}

TEST_CASE("log_softmax: uniform row, shift invariance, extended-precision oracle") {
    const RealMatrix uniform = log_softmax(RealMatrix(1, 4, 3.0));
    for (double v : uniform.values()) CHECK(v == doctest::Approx(-std::log(4.0)).epsilon(1e-15));

    std::mt19937_64 rng(9);
    const RealMatrix logits = oracle::random_matrix(1, 5, rng, 3.0);
    RealMatrix shifted = logits;
    for (double& v : shifted.values()) v += 17.25;
    check_close(log_softmax(logits), log_softmax(shifted), 1e-12);

    long double total = 0;
    for (double v : logits.values()) total += std::exp(static_cast<long double>(v));
    const RealMatrix out = log_softmax(logits);
    for (std::size_t i = 0; i < 5; ++i) {
        CHECK(out(0, i) == doctest::Approx(static_cast<double>(logits(0, i) - std::log(total))).epsilon(1e-14));
    }
}

TEST_CASE("log_softmax rows sum to one") {
    std::mt19937_64 rng(13);
    const RealMatrix out = log_softmax(oracle::random_matrix(6, 40, rng, 5.0));
    for (std::size_t r = 0; r < out.rows(); ++r) {
        double s = 0;
        for (double v : out.row(r)) s += std::exp(v);
        CHECK(std::abs(s - 1.0) < 1e-12);
    }
}

TEST_CASE("reparameterization: fixed points and Monte-Carlo moments") {
    const RealMatrix mean = RealMatrix::from_rows({{0.3, -1.2}});
    CHECK(gaussian_reparameterize(mean, RealMatrix(1, 2, 0.7), RealMatrix(1, 2)) == mean);
    CHECK(gaussian_reparameterize(RealMatrix(1, 1), RealMatrix(1, 1), RealMatrix(1, 1, 1.0))(0, 0) == 1.0);

    const std::size_t n = 100000;
    const double mu = 1.5, lv = std::log(0.49);
    std::mt19937_64 rng(17);
    std::normal_distribution<double> normal;
    RealMatrix noise(n, 1);
    for (double& v : noise.values()) v = normal(rng);
    const RealMatrix z = gaussian_reparameterize(RealMatrix(n, 1, mu), RealMatrix(n, 1, lv), noise);
    double m = 0, s = 0;
    for (double v : z.values()) m += v;
    m /= n;
    for (double v : z.values()) s += (v - m) * (v - m);
    s /= (n - 1);
    CHECK(m == doctest::Approx(mu).epsilon(0.02));
    CHECK(s == doctest::Approx(0.49).epsilon(0.02));
}

TEST_CASE("analytic KL: fixed points, non-negativity, Monte-Carlo oracle") {
    CHECK(kl_diag_gaussian_vs_standard(RealMatrix(1, 3), RealMatrix(1, 3))[0] == 0.0);
    CHECK(kl_diag_gaussian_vs_standard(RealMatrix(1, 1, 2.0), RealMatrix(1, 1))[0] == doctest::Approx(2.0));

    std::mt19937_64 rng(23);
    std::uniform_real_distribution<double> u(-3.0, 3.0);
    for (int i = 0; i < 200; ++i) {
        const RealMatrix m = RealMatrix::from_rows({{u(rng), u(rng)}});
        const RealMatrix l = RealMatrix::from_rows({{u(rng), u(rng)}});
        CHECK(kl_diag_gaussian_vs_standard(m, l)[0] >= 0.0);
    }
    CHECK(kl_diag_gaussian_vs_standard(RealMatrix(1, 1, 1e-8), RealMatrix(1, 1))[0] > 0.0);

    std::uniform_real_distribution<double> mu_d(-2.0, 2.0), lv_d(-1.5, 1.5);
    for (int draw = 0; draw < 5; ++draw) {
        std::vector<double> mu(8), lv(8);
        for (std::size_t d = 0; d < 8; ++d) {
            mu[d] = mu_d(rng);
            lv[d] = lv_d(rng);
        }
        const double analytic = kl_diag_gaussian_vs_standard(RealMatrix(1, 8, mu), RealMatrix(1, 8, lv))[0];
        const double mc = oracle::kl_monte_carlo(mu, lv, 100000, rng);
        CHECK(std::abs(mc - analytic) / analytic < 0.01);
    }
}

TEST_CASE("multinomial nll: one-hot uniform, zero row, direct sum") {
    const RealMatrix log_pi = log_softmax(RealMatrix(1, 7));
    RealMatrix x(1, 7);
    x(0, 3) = 1.0;
    CHECK(multinomial_nll(x, log_pi)[0] == doctest::Approx(std::log(7.0)));
    CHECK(multinomial_nll(RealMatrix(1, 7), log_pi)[0] == 0.0);

    std::mt19937_64 rng(29);
    const RealMatrix lp = log_softmax(oracle::random_matrix(3, 20, rng));
    RealMatrix xs(3, 20);
    std::bernoulli_distribution coin(0.2);
    for (double& v : xs.values()) v = coin(rng) ? 1.0 : 0.0;
    const RealVector nll = multinomial_nll(xs, lp);
    for (std::size_t r = 0; r < 3; ++r) {
        double expect = 0;
        for (std::size_t i = 0; i < 20; ++i) expect -= xs(r, i) * lp(r, i);
        CHECK(nll[r] == doctest::Approx(expect).epsilon(1e-14));
    }
}

TEST_CASE("adam: zero gradient, descent direction, first step size") {
    std::vector<RealMatrix> p{RealMatrix::from_rows({{1.0, -2.0}})};
    const std::vector<RealMatrix> zero{RealMatrix(1, 2)};
    OptimizerState st = OptimizerState::for_params(p);
    adam_step(p, zero, st);
    CHECK(p[0] == RealMatrix::from_rows({{1.0, -2.0}}));

    const std::vector<RealMatrix> g{RealMatrix::from_rows({{0.5, -3.0}})};
    for (int i = 0; i < 100; ++i) adam_step(p, g, st);
    CHECK(p[0](0, 0) < 1.0);
    CHECK(p[0](0, 1) > -2.0);

    std::vector<RealMatrix> s{RealMatrix(1, 1, 0.0)};
    OptimizerState one = OptimizerState::for_params(s);
    adam_step(s, std::vector<RealMatrix>{RealMatrix(1, 1, 1.0)}, one);
    // m_hat = 1, v_hat = 1: the step is lr / (1 + eps)
    CHECK(s[0](0, 0) == doctest::Approx(-1e-3 / (1.0 + 1e-8)).epsilon(1e-12));
    CHECK(one.step == 1);
}

TEST_CASE("tape: backward runs each op once in reverse order and only once") {
    Tape tape;
    const Var a = tape.leaf(RealMatrix::from_rows({{1.0, 2.0}}));
    const Var b = ad::tanh(a);
    const Var c = ad::square(b);
    const Var d = ad::sum(c);
    tape.backward(d);
    const std::vector<std::size_t> expected{d.id(), c.id(), b.id()};
    CHECK(tape.backward_order() == expected);
    CHECK_THROWS(tape.backward(d));
    CHECK_THROWS_AS(tape.backward(c), std::logic_error);
}

TEST_CASE("gradient check: quadratic is exact to 1e-8") {
    std::vector<RealMatrix> p{RealMatrix::from_rows({{0.3, -1.7, 2.2}})};
    const TapeLossFn f = [](Tape&, std::span<const Var> v) { return ad::sum(ad::square(v[0])); };
    GradientCheckOptions opts;
    opts.tolerance = 1e-8;
    const GradientCheckReport r = gradient_check(f, p, opts);
    CHECK(r.passed);
    CHECK(r.max_relative_error < 1e-8);
    CHECK(r.coordinates_checked == 3);
}

TEST_CASE("gradient check: multinomial likelihood w.r.t. logits to 1e-6") {
    std::mt19937_64 rng(31);
    std::vector<RealMatrix> p{oracle::random_matrix(2, 6, rng)};
    RealMatrix x(2, 6);
    x(0, 1) = x(0, 4) = x(1, 0) = 1.0;
    const TapeLossFn f = [&](Tape&, std::span<const Var> v) { return ad::sum(ad::multinomial_nll(x, ad::log_softmax(v[0]))); };
    GradientCheckOptions opts;
    opts.tolerance = 1e-6;
    CHECK(gradient_check(f, p, opts).passed);
}

TEST_CASE("gradient check: every primitive over random shapes and seeds") {
    for (std::uint64_t seed = 1; seed <= 6; ++seed) {
        std::mt19937_64 rng(seed);
        std::uniform_int_distribution<std::size_t> dim(1, 5);
        const std::size_t n = dim(rng), in = dim(rng), out = dim(rng);
        std::vector<RealMatrix> p{oracle::random_matrix(n, in, rng), oracle::random_matrix(in, out, rng),
                                  oracle::random_matrix(1, out, rng), oracle::random_matrix(n, out, rng, 0.5)};
        const RealMatrix noise = oracle::random_matrix(n, out, rng);
        RealMatrix x(n, out);
        for (std::size_t r = 0; r < n; ++r) x(r, r % out) = 1.0;

        const TapeLossFn f = [&](Tape&, std::span<const Var> v) {
            const Var h = ad::linear(v[0], v[1], v[2]);
            const Var t = ad::tanh(h);
            const Var s = ad::softplus(h);
            const Var z = ad::gaussian_reparameterize(t, v[3], noise);
            const Var kl = ad::kl_diag_gaussian_vs_standard(s, v[3]);
            const Var nll = ad::multinomial_nll(x, ad::log_softmax(z));
            return ad::weighted_sum({{1.0, ad::sum(nll)}, {0.7, ad::mean(kl)}, {0.3, ad::mean(ad::square(s))}});
        };
        const GradientCheckReport r = gradient_check(f, p);
        INFO(r.diagnostic());
        CHECK(r.passed);
    }
}

TEST_CASE("gradient check reports the worst coordinates of a wrong gradient") {
    std::vector<RealMatrix> p{RealMatrix::from_rows({{0.5, 1.5}})};
    // a custom op whose backward is deliberately off by a factor of two
    const TapeLossFn f = [](Tape& tape, std::span<const Var> v) {
        const std::size_t in = v[0].id();
        RealMatrix value(1, 1);
        for (double e : v[0].value().values()) value(0, 0) += e * e;
        return tape.record(value, {in}, [in](Tape& t, std::size_t self) {
            const double g = t.grad(self)(0, 0);
            RealMatrix& acc = t.grad_accumulator(in);
            for (std::size_t i = 0; i < acc.values().size(); ++i) acc.values()[i] += g * 4.0 * t.value(in).values()[i];
        });
    };
    const GradientCheckReport r = gradient_check(f, p);
    CHECK_FALSE(r.passed);
    CHECK(r.worst.size() == 2);
    CHECK(r.max_relative_error > 0.4);
    CHECK(r.diagnostic().find("tensor") != std::string::npos);
    CHECK_THROWS_AS(require_gradients_match(f, p), NumericalError);
}
