#pragma once

// Gaussian mean widths and the sample-size calculators built on them.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>

#include "errors.hpp"
#include "hypothesis_set.hpp"
#include "quadrature.hpp"
#include "rng.hpp"

namespace mismatch_lasso {

enum class WidthKind { global, conic_l1, local_bound };

inline std::string to_string(WidthKind k) {
    switch (k) {
        case WidthKind::global: return "global";
        case WidthKind::conic_l1: return "conic_l1";
        case WidthKind::local_bound: return "local_bound";
    }
    return "unknown";
}

struct WidthEstimate {
    double value = 0.0;
    double stderr_ = 0.0;  // sample standard deviation / sqrt(n_mc); 0 for deterministic values
    std::uint64_t n_mc = 0;
    WidthKind kind = WidthKind::global;
};

// Monte Carlo estimate of w(K) = E sup_{h in K} <g, h>, g ~ N(0, I_d).
// Draw i uses substream (seed, width, i), so equal seeds give matched draws.
inline WidthEstimate mean_width_global(const HypothesisSet& set, Index d, std::uint64_t n_mc, std::uint64_t seed) {
    detail::require(d >= 1, "mean_width_global: d must be >= 1");
    detail::require(n_mc >= 2, "mean_width_global: need n_mc >= 2");
    if (!set.bounded()) throw UnsupportedError("mean_width_global: unbounded hypothesis set " + set.name());

    double mean = 0.0;
    double m2 = 0.0;
    VectorXd g(d);
    for (std::uint64_t i = 0; i < n_mc; ++i) {
        auto eng = substream(seed, Stream::width, i);
        std::normal_distribution<double> nd(0.0, 1.0);
        for (Index j = 0; j < d; ++j) g(j) = nd(eng);
        const double h = support_function(set, g);
        const double delta = h - mean;
        mean += delta / static_cast<double>(i + 1);
        m2 += delta * (h - mean);
    }
    const double var = m2 / static_cast<double>(n_mc - 1);
    return WidthEstimate{mean, std::sqrt(var / static_cast<double>(n_mc)), n_mc, WidthKind::global};
}

// E[(|gamma| - tau)_+^2] for gamma ~ N(0,1), by quadrature split at +-tau.
inline double gaussian_tail_second_moment(double tau) {
    return normal_expectation(
        [tau](double x) {
            const double e = std::abs(x) - tau;
            return e > 0.0 ? e * e : 0.0;
        },
        {tau});
}

// Grid of `points` equally spaced values on [0, hi].
inline std::vector<double> uniform_tau_grid(std::size_t points = 4001, double hi = 10.0) {
    std::vector<double> grid(points);
    for (std::size_t i = 0; i < points; ++i) {
        grid[i] = points == 1 ? 0.0 : hi * static_cast<double>(i) / static_cast<double>(points - 1);
    }
    return grid;
}

// Upper bound on the conic mean width of the l1-ball descent cone at an
// s-sparse boundary point of R^d:
//   sqrt( min_tau s (1 + tau^2) + (d - s) E(|gamma| - tau)_+^2 ).
inline WidthEstimate conic_width_l1_descent(Index d, Index s, const std::vector<double>& tau_grid = uniform_tau_grid()) {
    if (s < 1 || s > d) throw ParameterError("conic_width_l1_descent: need 1 <= s <= d");
    detail::require(!tau_grid.empty(), "conic_width_l1_descent: empty tau grid");
    const double sd = static_cast<double>(s);
    const double rest = static_cast<double>(d - s);
    double best = std::numeric_limits<double>::infinity();
    for (double tau : tau_grid) {
        const double tail = rest > 0.0 ? gaussian_tail_second_moment(tau) : 0.0;
        best = std::min(best, sd * (1.0 + tau * tau) + rest * tail);
    }
    return WidthEstimate{std::sqrt(best), 0.0, 0, WidthKind::conic_l1};
}

// Certified upper bound on the local mean width w_t(K - z):
// min of w(K - z) / t and, for an l1 ball with z on its boundary, the conic
// l1 value at sparsity |supp z|.
inline WidthEstimate local_width_bound(const HypothesisSet& set, const VectorXd& z, double t, std::uint64_t n_mc,
                                       std::uint64_t seed) {
    if (!(t > 0.0)) throw ParameterError("local_width_bound: t must be > 0");
    const Index d = z.size();
    const WidthEstimate global = mean_width_global(HypothesisSet::shifted(set, -z), d, n_mc, seed);
    WidthEstimate out{global.value / t, global.stderr_ / t, n_mc, WidthKind::local_bound};

    if (const auto* ball = set.get_if<L1Ball>()) {
        const double l1 = z.lpNorm<1>();
        if (std::abs(l1 - ball->radius) <= 1e-10 * std::max(1.0, ball->radius)) {
            Index sparsity = 0;
            for (Index i = 0; i < d; ++i) sparsity += z(i) != 0.0 ? 1 : 0;
            const WidthEstimate conic = conic_width_l1_descent(d, sparsity);
            if (conic.value < out.value) out = WidthEstimate{conic.value, 0.0, n_mc, WidthKind::local_bound};
        }
    }
    return out;
}

enum class SampleRegime { global, conic };

// ceil(C kappa^4 delta^-4 w^2) (global) or ceil(C kappa^4 delta^-2 w^2) (conic).
inline std::uint64_t required_samples(double width_sq, double kappa, double delta, SampleRegime regime,
                                      double c = 1.0) {
    if (!(delta > 0.0 && delta <= 1.0)) throw ParameterError("required_samples: delta must lie in (0, 1]");
    detail::require(width_sq >= 0.0 && kappa > 0.0 && c > 0.0,
                    "required_samples: width_sq must be >= 0 and kappa, C > 0");
    const double exponent = regime == SampleRegime::global ? 4.0 : 2.0;
    const double n = c * std::pow(kappa, 4) * width_sq / std::pow(delta, exponent);
    // Guard against 100.00000000000001 from rounding in pow.
    return static_cast<std::uint64_t>(std::ceil(n * (1.0 - 1e-14)));
}

}  // namespace mismatch_lasso
