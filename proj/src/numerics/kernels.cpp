#include "knobrec/numerics/kernels.hpp"

#include "knobrec/errors.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <string>
#include <thread>
#include <vector>

namespace knobrec {

namespace {

std::atomic<std::size_t> g_threads{1};

// Below this many multiply-adds a kernel stays on the calling thread.
constexpr std::size_t kParallelWork = 1u << 18;

template <class Fn>
void for_row_blocks(std::size_t n_rows, std::size_t work, Fn&& fn) {
    const std::size_t threads = std::min(g_threads.load(), n_rows);
    if (threads <= 1 || work < kParallelWork) {
        fn(std::size_t{0}, n_rows);
        return;
    }
    std::vector<std::jthread> workers;
    workers.reserve(threads - 1);
    const std::size_t chunk = (n_rows + threads - 1) / threads;
    for (std::size_t t = 1; t < threads; ++t) {
        const std::size_t begin = t * chunk;
        const std::size_t end = std::min(n_rows, begin + chunk);
        if (begin < end) {
            workers.emplace_back([&fn, begin, end] { fn(begin, end); });
        }
    }
    fn(std::size_t{0}, std::min(n_rows, chunk));
}

std::string shape(const RealMatrix& m) {
    return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

} // namespace

void set_kernel_threads(std::size_t n) { g_threads = std::max<std::size_t>(1, n); }
std::size_t kernel_threads() { return g_threads; }

RealMatrix matmul(const RealMatrix& a, const RealMatrix& b) {
    if (a.cols() != b.rows()) {
        throw DimensionError("matmul: " + shape(a) + " * " + shape(b));
    }
    RealMatrix out(a.rows(), b.cols());
    const std::size_t inner = a.cols();
    const std::size_t n = b.cols();
    for_row_blocks(a.rows(), a.size() * n, [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            double* o = out.row(i).data();
            const double* ai = a.row(i).data();
            for (std::size_t k = 0; k < inner; ++k) {
                const double aik = ai[k];
                // interaction rows are mostly zeros
                if (aik == 0.0) continue;
                const double* bk = b.row(k).data();
                for (std::size_t j = 0; j < n; ++j) o[j] += aik * bk[j];
            }
        }
    });
    return out;
}

void matmul_add_bt(const RealMatrix& a, const RealMatrix& b, RealMatrix& out) {
    if (a.cols() != b.cols() || out.rows() != a.rows() || out.cols() != b.rows()) {
        throw DimensionError("matmul_add_bt: " + shape(a) + " * (" + shape(b) + ")^T -> " + shape(out));
    }
    const std::size_t inner = a.cols();
    for_row_blocks(a.rows(), a.rows() * b.size(), [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            const double* ai = a.row(i).data();
            double* o = out.row(i).data();
            for (std::size_t j = 0; j < b.rows(); ++j) {
                const double* bj = b.row(j).data();
                double acc = 0.0;
                for (std::size_t k = 0; k < inner; ++k) acc += ai[k] * bj[k];
                o[j] += acc;
            }
        }
    });
}

void matmul_add_at(const RealMatrix& a, const RealMatrix& b, RealMatrix& out) {
    if (a.rows() != b.rows() || out.rows() != a.cols() || out.cols() != b.cols()) {
        throw DimensionError("matmul_add_at: (" + shape(a) + ")^T * " + shape(b) + " -> " + shape(out));
    }
    const std::size_t n = b.cols();
    for_row_blocks(a.cols(), a.size() * n, [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = 0; i < a.rows(); ++i) {
            const double* ai = a.row(i).data();
            const double* bi = b.row(i).data();
            for (std::size_t k = begin; k < end; ++k) {
                const double aik = ai[k];
                if (aik == 0.0) continue;
                double* o = out.row(k).data();
                for (std::size_t j = 0; j < n; ++j) o[j] += aik * bi[j];
            }
        }
    });
}

RealMatrix linear(const RealMatrix& input, const RealMatrix& weight, const RealMatrix& bias) {
    if (input.cols() != weight.rows()) {
        throw DimensionError("linear: input " + shape(input) + " vs weight " + shape(weight));
    }
    if (bias.rows() != 1 || bias.cols() != weight.cols()) {
        throw DimensionError("linear: bias " + shape(bias) + " vs weight " + shape(weight));
    }
    RealMatrix out = matmul(input, weight);
    for (std::size_t r = 0; r < out.rows(); ++r) {
        auto row = out.row(r);
        for (std::size_t c = 0; c < row.size(); ++c) row[c] += bias(0, c);
    }
    return out;
}

RealMatrix tanh_activation(const RealMatrix& input) {
    RealMatrix out = input;
    for (double& v : out.values()) v = std::tanh(v);
    return out;
}

double softplus(double x) {
    return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

double sigmoid(double x) {
    if (x >= 0.0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

RealMatrix softplus_activation(const RealMatrix& input) {
    RealMatrix out = input;
    for (double& v : out.values()) v = softplus(v);
    return out;
}

RealMatrix log_softmax(const RealMatrix& logits) {
    RealMatrix out = logits;
    for (std::size_t r = 0; r < out.rows(); ++r) {
        auto row = out.row(r);
        if (row.empty()) continue;
        const double peak = *std::max_element(row.begin(), row.end());
        double total = 0.0;
        for (double v : row) total += std::exp(v - peak);
        const double log_norm = peak + std::log(total);
        for (double& v : row) v -= log_norm;
    }
    return out;
}

RealMatrix gaussian_reparameterize(const RealMatrix& mean, const RealMatrix& log_variance,
                                   const RealMatrix& noise) {
    require_same_shape(mean, log_variance, "gaussian_reparameterize");
    require_same_shape(mean, noise, "gaussian_reparameterize");
    RealMatrix out(mean.rows(), mean.cols());
    auto m = mean.values();
    auto lv = log_variance.values();
    auto eps = noise.values();
    auto z = out.values();
    for (std::size_t i = 0; i < z.size(); ++i) z[i] = m[i] + std::exp(0.5 * lv[i]) * eps[i];
    return out;
}

RealVector kl_diag_gaussian_vs_standard(const RealMatrix& mean, const RealMatrix& log_variance) {
    require_same_shape(mean, log_variance, "kl_diag_gaussian_vs_standard");
    RealVector kl(mean.rows(), 0.0);
    for (std::size_t r = 0; r < mean.rows(); ++r) {
        auto m = mean.row(r);
        auto lv = log_variance.row(r);
        double acc = 0.0;
        for (std::size_t d = 0; d < m.size(); ++d) {
            // expm1(lv) - lv is the accurate form of exp(lv) - lv - 1 near lv = 0
            acc += m[d] * m[d] + (std::expm1(lv[d]) - lv[d]);
        }
        kl[r] = 0.5 * acc;
    }
    return kl;
}

RealVector multinomial_nll(const RealMatrix& x, const RealMatrix& log_pi) {
    require_same_shape(x, log_pi, "multinomial_nll");
    RealVector nll(x.rows(), 0.0);
    for (std::size_t r = 0; r < x.rows(); ++r) {
        auto xr = x.row(r);
        auto lp = log_pi.row(r);
        double acc = 0.0;
        for (std::size_t i = 0; i < xr.size(); ++i) {
            if (xr[i] != 0.0) acc += xr[i] * lp[i];
        }
        nll[r] = -acc;
    }
    return nll;
}

RealMatrix l2_normalize_rows(const RealMatrix& x) {
    RealMatrix out = x;
    for (std::size_t r = 0; r < out.rows(); ++r) {
        auto row = out.row(r);
        double norm = 0.0;
        for (double v : row) norm += v * v;
        if (norm == 0.0) continue;
        norm = std::sqrt(norm);
        for (double& v : row) v /= norm;
    }
    return out;
}

} // namespace knobrec
