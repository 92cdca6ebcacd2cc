#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "errors.hpp"

namespace mismatch_lasso {

// Quadrature rule for E[f(gamma)], gamma ~ N(0,1), stored on the half line:
// E[f(gamma)] ~= sum_i weight[i] * (f(node[i]) + f(-node[i])).
// A node at the origin carries half its weight so the formula stays uniform.
// Pairing f(x) with f(-x) makes odd integrands vanish exactly.
struct SymmetricGaussRule {
    std::vector<double> nodes;
    std::vector<double> weights;

    template <class F>
    double expectation(F&& f) const {
        double acc = 0.0;
        for (std::size_t i = 0; i < nodes.size(); ++i) {
            acc += weights[i] * (f(nodes[i]) + f(-nodes[i]));
        }
        return acc;
    }
};

namespace detail {

// Golub-Welsch: nodes/weights from the symmetric Jacobi matrix with zero
// diagonal and off-diagonal `beta`, normalized by the total mass `mu0`.
inline void golub_welsch(const Eigen::VectorXd& beta, double mu0, std::vector<double>& x,
                         std::vector<double>& w) {
    const Eigen::Index n = beta.size() + 1;
    Eigen::VectorXd diag = Eigen::VectorXd::Zero(n);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es;
    es.computeFromTridiagonal(diag, beta, Eigen::ComputeEigenvectors);
    x.resize(static_cast<std::size_t>(n));
    w.resize(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) {
        x[static_cast<std::size_t>(i)] = es.eigenvalues()(i);
        const double v0 = es.eigenvectors()(0, i);
        w[static_cast<std::size_t>(i)] = mu0 * v0 * v0;
    }
}

// Fold an ascending rule symmetric about 0 onto the half line.
inline SymmetricGaussRule fold_symmetric(const std::vector<double>& x, const std::vector<double>& w) {
    const std::size_t n = x.size();
    SymmetricGaussRule rule;
    for (std::size_t i = 0; i < n / 2; ++i) {
        const std::size_t j = n - 1 - i;
        rule.nodes.push_back(0.5 * (x[j] - x[i]));
        rule.weights.push_back(0.5 * (w[i] + w[j]));
    }
    if (n % 2 == 1) {
        rule.nodes.push_back(0.0);
        rule.weights.push_back(0.5 * w[n / 2]);
    }
    return rule;
}

}  // namespace detail

// Gauss-Hermite rule with `n` nodes, rescaled to the standard normal law.
inline SymmetricGaussRule gauss_hermite_rule(int n) {
    detail::require(n >= 1, "gauss_hermite_rule: need at least one node");
    // Probabilists' Hermite recurrence: off-diagonal sqrt(k).
    Eigen::VectorXd beta(n - 1);
    for (int k = 1; k < n; ++k) beta(k - 1) = std::sqrt(static_cast<double>(k));
    std::vector<double> x, w;
    detail::golub_welsch(beta, 1.0, x, w);
    return detail::fold_symmetric(x, w);
}

// Gauss-Legendre nodes/weights on [-1, 1], ascending.
inline void gauss_legendre(int n, std::vector<double>& x, std::vector<double>& w) {
    detail::require(n >= 1, "gauss_legendre: need at least one node");
    Eigen::VectorXd beta(n - 1);
    for (int k = 1; k < n; ++k) {
        const double kk = static_cast<double>(k);
        beta(k - 1) = kk / std::sqrt(4.0 * kk * kk - 1.0);
    }
    detail::golub_welsch(beta, 2.0, x, w);
}

// The 200-node Gauss-Hermite rule used for smooth Gaussian functionals.
inline const SymmetricGaussRule& standard_hermite_rule() {
    static const SymmetricGaussRule rule = gauss_hermite_rule(200);
    return rule;
}

// Composite Gauss-Legendre rule for the standard normal law on [-cutoff, cutoff]
// with panel edges at every |breakpoint|. Used for integrands with kinks or
// jumps, where Gauss-Hermite converges only algebraically.
inline SymmetricGaussRule piecewise_normal_rule(std::vector<double> breakpoints, double cutoff = 14.0,
                                                double max_panel = 0.5, int panel_nodes = 16) {
    std::vector<double> edges{0.0, cutoff};
    for (double b : breakpoints) {
        const double a = std::abs(b);
        if (a > 0.0 && a < cutoff) edges.push_back(a);
    }
    std::sort(edges.begin(), edges.end());
    edges.erase(std::unique(edges.begin(), edges.end()), edges.end());

    std::vector<double> gx, gw;
    gauss_legendre(panel_nodes, gx, gw);
    const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);

    SymmetricGaussRule rule;
    for (std::size_t e = 0; e + 1 < edges.size(); ++e) {
        const double lo = edges[e];
        const double hi = edges[e + 1];
        const int panels = std::max(1, static_cast<int>(std::ceil((hi - lo) / max_panel)));
        const double h = (hi - lo) / panels;
        for (int p = 0; p < panels; ++p) {
            const double a = lo + p * h;
            for (std::size_t k = 0; k < gx.size(); ++k) {
                const double t = a + 0.5 * h * (gx[k] + 1.0);
                rule.nodes.push_back(t);
                rule.weights.push_back(0.5 * h * gw[k] * inv_sqrt_2pi * std::exp(-0.5 * t * t));
            }
        }
    }
    return rule;
}

// E[f(gamma)] for gamma ~ N(0,1). Smooth integrands (no breakpoints) use the
// 200-node Gauss-Hermite rule; otherwise panels are split at the breakpoints.
template <class F>
double normal_expectation(F&& f, const std::vector<double>& breakpoints = {}) {
    if (breakpoints.empty()) return standard_hermite_rule().expectation(f);
    return piecewise_normal_rule(breakpoints).expectation(f);
}

}  // namespace mismatch_lasso
