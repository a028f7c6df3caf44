#include "knobrec/metrics.hpp"

#include "knobrec/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace knobrec::metrics {

std::vector<std::size_t> quantile_bins(std::span<const double> values, std::size_t n_bins) {
    if (n_bins == 0) throw ConfigError("quantile_bins: n_bins must be >= 1");
    const std::size_t n = values.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });

    std::vector<std::size_t> bins(n);
    std::size_t first_rank = 0;
    for (std::size_t r = 0; r < n; ++r) {
        if (r > 0 && values[order[r]] != values[order[r - 1]]) first_rank = r;
        bins[order[r]] = first_rank * n_bins / n;
    }
    return bins;
}

double discrete_entropy(std::span<const std::size_t> labels, std::size_t n_bins) {
    if (labels.empty()) return 0.0;
    std::vector<double> counts(n_bins, 0.0);
    for (std::size_t l : labels) {
        if (l >= n_bins) throw DimensionError("discrete_entropy: label out of range");
        counts[l] += 1.0;
    }
    const double n = static_cast<double>(labels.size());
    double h = 0.0;
    for (double c : counts) {
        if (c > 0.0) h -= (c / n) * std::log(c / n);
    }
    return h;
}

double discrete_mutual_information(std::span<const std::size_t> a, std::span<const std::size_t> b,
                                   std::size_t n_bins) {
    if (a.size() != b.size()) throw DimensionError("discrete_mutual_information: length mismatch");
    if (a.empty()) return 0.0;
    std::vector<double> joint(n_bins * n_bins, 0.0), pa(n_bins, 0.0), pb(n_bins, 0.0);
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i] >= n_bins || b[i] >= n_bins) throw DimensionError("discrete_mutual_information: label out of range");
        joint[a[i] * n_bins + b[i]] += 1.0;
        pa[a[i]] += 1.0;
        pb[b[i]] += 1.0;
    }
    const double n = static_cast<double>(a.size());
    double mi = 0.0;
    for (std::size_t x = 0; x < n_bins; ++x) {
        for (std::size_t y = 0; y < n_bins; ++y) {
            const double c = joint[x * n_bins + y];
            if (c > 0.0) mi += (c / n) * std::log(c * n / (pa[x] * pb[y]));
        }
    }
    return std::max(0.0, mi);
}

MIGReport mig(const RealMatrix& representations, const RealMatrix& factors, std::size_t n_bins) {
    if (representations.rows() != factors.rows()) throw DimensionError("mig: row count mismatch");
    const std::size_t n = representations.rows();
    if (n < n_bins) throw ConfigError("mig: need at least n_bins samples");

    auto column = [n](const RealMatrix& m, std::size_t c) {
        RealVector out(n);
        for (std::size_t r = 0; r < n; ++r) out[r] = m(r, c);
        return out;
    };
    auto is_constant = [](const RealVector& v) {
        return std::all_of(v.begin(), v.end(), [&](double x) { return x == v.front(); });
    };

    MIGReport report;
    std::vector<std::vector<std::size_t>> latent_bins(representations.cols());
    std::vector<char> latent_constant(representations.cols(), 0);
    for (std::size_t d = 0; d < representations.cols(); ++d) {
        const RealVector col = column(representations, d);
        latent_constant[d] = is_constant(col);
        if (latent_constant[d]) report.warnings.push_back("latent dimension " + std::to_string(d) + " is constant");
        latent_bins[d] = quantile_bins(col, n_bins);
    }

    for (std::size_t a = 0; a < factors.cols(); ++a) {
        const RealVector col = column(factors, a);
        const auto bins = quantile_bins(col, n_bins);
        const double h = discrete_entropy(bins, n_bins);
        RealVector mi(representations.cols(), 0.0);
        for (std::size_t d = 0; d < representations.cols(); ++d) {
            if (!latent_constant[d]) mi[d] = discrete_mutual_information(bins, latent_bins[d], n_bins);
        }
        double gap = 0.0;
        if (is_constant(col) || h <= 0.0) {
            report.warnings.push_back("factor " + std::to_string(a) + " is constant");
        } else {
            RealVector sorted = mi;
            std::sort(sorted.begin(), sorted.end(), std::greater<>());
            const double second = sorted.size() > 1 ? sorted[1] : 0.0;
            gap = std::clamp((sorted.front() - second) / h, 0.0, 1.0);
        }
        report.mutual_information.push_back(std::move(mi));
        report.factor_entropy.push_back(h);
        report.gap.push_back(gap);
    }
    if (!report.gap.empty()) {
        report.mean_gap = std::accumulate(report.gap.begin(), report.gap.end(), 0.0) /
                          static_cast<double>(report.gap.size());
    }
    return report;
}

} // namespace knobrec::metrics
