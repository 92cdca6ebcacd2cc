#pragma once

// The generalized Lasso
//     min_{beta in K} (1/n) sum_i (y_i - <x_i, beta>)^2
// solved by projected gradient descent with the fixed step 1/L, L = 2 sigma_max(X)^2 / n.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <vector>

#include "errors.hpp"
#include "hypothesis_set.hpp"
#include "model_gen.hpp"
#include "rng.hpp"

namespace mismatch_lasso {

struct SolverConfig {
    int max_iters = 5000;
    // Stop when (f_old - f_new) <= rel_tol * f_new and the step is <= 10 rel_tol (1 + ||beta||).
    double rel_tol = 1e-9;
    std::uint64_t seed = 0;  // power iteration start vector
    bool record_trace = false;

    void validate() const {
        detail::require(max_iters >= 1, "SolverConfig: max_iters must be >= 1");
        detail::require(rel_tol > 0.0, "SolverConfig: rel_tol must be > 0");
    }
};

struct FitResult {
    VectorXd beta_hat;
    double objective = 0.0;
    int iters = 0;
    bool converged = false;
    std::optional<VectorXd> z_hat;
    double fixed_point_residual = 0.0;  // ||beta - P_K(beta - grad / L)||
    std::vector<double> objective_trace;  // filled when SolverConfig::record_trace
};

// Largest singular value by power iteration on X^T X. Stops when the relative
// change of the eigenvalue estimate is <= 1e-12 or after 1000 iterations.
inline double spectral_norm(const MatrixXd& x, std::uint64_t seed = 0) {
    if (x.size() == 0) return 0.0;
    const Index p = x.cols();
    auto eng = substream(seed, Stream::power_iteration);
    std::normal_distribution<double> nd(0.0, 1.0);
    VectorXd v(p);
    for (Index j = 0; j < p; ++j) v(j) = nd(eng);
    v.normalize();

    double lambda = 0.0;
    for (int it = 0; it < 1000; ++it) {
        const VectorXd w = x.transpose() * (x * v);
        const double next = v.dot(w);
        const double nw = w.norm();
        if (nw == 0.0) return 0.0;
        v = w / nw;
        const bool done = it > 0 && std::abs(next - lambda) <= 1e-12 * std::abs(next);
        lambda = next;
        if (done) break;
    }
    return std::sqrt(std::max(0.0, lambda));
}

namespace detail {

inline void require_finite(const MatrixXd& x, const VectorXd& y) {
    if (!x.allFinite() || !y.allFinite()) throw ParameterError("solver: non-finite data");
}

inline double least_squares_objective(const MatrixXd& x, const VectorXd& y, const VectorXd& beta) {
    return (y - x * beta).squaredNorm() / static_cast<double>(x.rows());
}

}  // namespace detail

// Projected gradient descent from beta_0 = P_K(0). The objective sequence is
// checked for monotone descent at every iteration.
inline FitResult solve_klasso(const MatrixXd& x, const VectorXd& y, const HypothesisSet& set,
                              const SolverConfig& cfg = {}) {
    cfg.validate();
    detail::require(x.rows() >= 1, "solve_klasso: need n >= 1");
    detail::require_dims(x.rows() == y.size(), "solve_klasso: X and y differ in row count");
    detail::require_finite(x, y);

    const Index p = x.cols();
    const double n = static_cast<double>(x.rows());
    const double sigma = spectral_norm(x, cfg.seed);
    const double lip = 2.0 * sigma * sigma / n;

    FitResult fit;
    VectorXd beta = project(set, VectorXd::Zero(p));
    VectorXd resid = x * beta - y;
    double f = resid.squaredNorm() / n;
    if (cfg.record_trace) fit.objective_trace.push_back(f);

    auto gradient = [&](const VectorXd& r) -> VectorXd { return (2.0 / n) * (x.transpose() * r); };
    // Rounding slack for the monotonicity check.
    const double slack = 64.0 * std::numeric_limits<double>::epsilon() * (1.0 + y.squaredNorm() / n);

    if (lip == 0.0) {
        fit.converged = true;
    } else {
        for (int it = 0; it < cfg.max_iters; ++it) {
            VectorXd next = project(set, beta - gradient(resid) / lip);
            VectorXd next_resid = x * next - y;
            const double f_next = next_resid.squaredNorm() / n;
            if (f_next > f + slack * (1.0 + f)) {
                throw std::logic_error("solve_klasso: objective increased during projected gradient descent");
            }
            const double decrease = f - f_next;
            const double step = (next - beta).norm();
            beta = std::move(next);
            resid = std::move(next_resid);
            f = f_next;
            fit.iters = it + 1;
            if (cfg.record_trace) fit.objective_trace.push_back(f);
            // The step is the fixed-point residual of the previous iterate, so
            // convergence also certifies near-stationarity.
            if (decrease <= cfg.rel_tol * f_next && step <= 10.0 * cfg.rel_tol * (1.0 + beta.norm())) {
                fit.converged = true;
                break;
            }
        }
    }

    fit.objective = detail::least_squares_objective(x, y, beta);
    fit.fixed_point_residual = lip > 0.0 ? (beta - project(set, beta - gradient(x * beta - y) / lip)).norm() : 0.0;
    fit.beta_hat = std::move(beta);
    return fit;
}

// z_hat = A^T beta_hat, stored into the fit.
inline VectorXd pushforward_estimate(const MixingMatrix& a, FitResult& fit) {
    detail::require_dims(a.p() == fit.beta_hat.size(), "pushforward_estimate: A has " + std::to_string(a.p()) +
                                                            " rows, beta_hat has " +
                                                            std::to_string(fit.beta_hat.size()) + " entries");
    fit.z_hat = a.entries.transpose() * fit.beta_hat;
    return *fit.z_hat;
}

// Pseudo-inverse of a full column rank matrix; throws when the smallest
// singular value is <= 1e-8.
inline MatrixXd full_rank_pseudo_inverse(const MatrixXd& a) {
    detail::require_dims(a.rows() >= a.cols() && a.cols() >= 1, "pseudo-inverse: need p >= d >= 1");
    Eigen::JacobiSVD<MatrixXd> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const auto& sv = svd.singularValues();
    if (sv(sv.size() - 1) <= 1e-8) throw ParameterError("A_tilde is rank deficient (smallest singular value <= 1e-8)");
    return svd.matrixV() * sv.cwiseInverse().asDiagonal() * svd.matrixU().transpose();
}

// The generalized Lasso over K = (A_tilde^+)^T K_tilde, solved in w-space:
// beta = (A_tilde^+)^T w with w in K_tilde and inputs X (A_tilde^+)^T.
// Returns beta_hat and z_hat = A_tilde^T beta_hat.
inline FitResult solve_adapted(const MatrixXd& x, const VectorXd& y, const MatrixXd& a_tilde,
                               const HypothesisSet& k_tilde, const SolverConfig& cfg = {}) {
    detail::require_dims(x.cols() == a_tilde.rows(), "solve_adapted: X and A_tilde disagree on p");
    const MatrixXd pinv = full_rank_pseudo_inverse(a_tilde);  // d x p
    const MatrixXd lift = pinv.transpose();                    // p x d
    FitResult w_fit = solve_klasso(x * lift, y, k_tilde, cfg);

    FitResult fit = w_fit;
    fit.beta_hat = lift * w_fit.beta_hat;
    fit.z_hat = a_tilde.transpose() * fit.beta_hat;
    fit.objective = detail::least_squares_objective(x, y, fit.beta_hat);
    return fit;
}

}  // namespace mismatch_lasso
