#pragma once

// Mismatch covariance and deviation (empirical and exact), and the target
// vectors that minimize the mismatch covariance on a model's target set.

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <iomanip>
#include <optional>
#include <sstream>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

#include "errors.hpp"
#include "hypothesis_set.hpp"
#include "model_gen.hpp"
#include "quadrature.hpp"
#include "rng.hpp"

namespace mismatch_lasso {

// ---------------------------------------------------------------------------
// Sub-Gaussian norm proxy

inline constexpr std::array<double, 5> kMomentGrid{1.0, 2.0, 4.0, 8.0, 16.0};

// max over q in {1,2,4,8,16} of q^{-1/2} (mean |v|^q)^{1/q}.
inline double subgaussian_norm(const VectorXd& v) {
    if (v.size() == 0) throw ParameterError("subgaussian_norm: empty input");
    const double scale = v.cwiseAbs().maxCoeff();
    if (scale == 0.0) return 0.0;
    // Moments of v / scale avoid overflow at q = 16.
    const VectorXd a = v.cwiseAbs() / scale;
    double best = 0.0;
    for (double q : kMomentGrid) {
        const double m = a.array().pow(q).mean();
        best = std::max(best, scale * std::pow(m, 1.0 / q) / std::sqrt(q));
    }
    return best;
}

// ---------------------------------------------------------------------------
// Empirical mismatch parameters

// || (1/n) sum_i (y_i - <s_i, z>) s_i ||_2
inline double mismatch_covariance(const MatrixXd& latent, const VectorXd& y, const VectorXd& z) {
    detail::require_dims(latent.cols() == z.size(), "mismatch_covariance: z has wrong dimension");
    detail::require_dims(latent.rows() == y.size(), "mismatch_covariance: outputs and latent differ in length");
    detail::require(latent.rows() >= 1, "mismatch_covariance: need n >= 1");
    const VectorXd r = y - latent * z;
    return (latent.transpose() * r).norm() / static_cast<double>(latent.rows());
}

// Grid psi_2 proxy of the residuals y_i - <s_i, z>.
inline double mismatch_deviation(const MatrixXd& latent, const VectorXd& y, const VectorXd& z) {
    detail::require_dims(latent.cols() == z.size(), "mismatch_deviation: z has wrong dimension");
    detail::require_dims(latent.rows() == y.size(), "mismatch_deviation: outputs and latent differ in length");
    detail::require(latent.rows() >= 100, "mismatch_deviation: need n >= 100");
    return subgaussian_norm(y - latent * z);
}

// ---------------------------------------------------------------------------
// Exact expectations E[y s]

namespace detail {

inline constexpr Index kMaxEnumerationDim = 20;

// E[m(<s, z>) s] for Gaussian s: only the component along z survives.
template <class F>
VectorXd gaussian_single_index_ys(const VectorXd& z, F&& cond_mean, const std::vector<double>& kinks) {
    const double c = z.norm();
    if (c == 0.0) throw ParameterError("exact expectation: index vector is zero");
    std::vector<double> bp;
    for (double k : kinks) bp.push_back(k / c);
    const double a = normal_expectation([&](double x) { return cond_mean(c * x) * x; }, bp);
    return (a / c) * z;
}

// Coordinates where any column of `indices` is nonzero.
inline std::vector<Index> support_union(const MatrixXd& indices) {
    std::vector<Index> out;
    for (Index i = 0; i < indices.rows(); ++i) {
        if ((indices.row(i).array() != 0.0).any()) out.push_back(i);
    }
    return out;
}

// E[f(s) s] for Rademacher s in R^d where f only reads the coordinates in
// `support`; f receives the full vector with zeros off the support.
template <class F>
VectorXd rademacher_enumerate_ys(Index d, const std::vector<Index>& support, F&& f) {
    const auto k = static_cast<Index>(support.size());
    if (k > kMaxEnumerationDim) {
        throw UnsupportedError("exact expectation: Rademacher enumeration limited to effective dimension 20");
    }
    VectorXd acc = VectorXd::Zero(d);
    VectorXd s = VectorXd::Zero(d);
    const std::uint64_t atoms = std::uint64_t{1} << k;
    for (std::uint64_t mask = 0; mask < atoms; ++mask) {
        for (Index j = 0; j < k; ++j) s(support[static_cast<std::size_t>(j)]) = ((mask >> j) & 1U) ? 1.0 : -1.0;
        const double fy = f(s);
        for (Index j = 0; j < k; ++j) {
            const Index c = support[static_cast<std::size_t>(j)];
            acc(c) += fy * s(c);
        }
    }
    return acc / static_cast<double>(atoms);
}

// E[G(gamma_1..gamma_S) gamma_j] for i.i.d. standard normals.
inline VectorXd gaussian_multi_mu(const MultiFn& g, Index s) {
    const double e_sign = normal_expectation([](double x) { return sign_of(x) * x; }, {0.0});
    VectorXd mu = VectorXd::Zero(s);
    switch (g.kind) {
        case MultiKind::sum: mu.setOnes(); break;
        case MultiKind::weighted:
            for (Index j = 0; j < s; ++j) mu(j) = g.weights[static_cast<std::size_t>(j)];
            break;
        case MultiKind::product:
            if (s == 1) mu(0) = 1.0;
            break;
        case MultiKind::sum_of_signs: mu.setConstant(e_sign); break;
        case MultiKind::sign_first: mu(0) = e_sign; break;
        case MultiKind::sign_of_sum:
            // gamma_j = U / S + (independent part), U = sum gamma ~ N(0, S).
            mu.setConstant(e_sign / std::sqrt(static_cast<double>(s)));
            break;
    }
    return mu;
}

inline double dither_mean(double t, double delta) { return std::clamp(t, -delta, delta); }

inline double logistic_mean(double t) { return 1.0 / (1.0 + std::exp(-t)); }

}  // namespace detail

// E[y s] computed without sampling: Gauss-Hermite (or breakpoint-split)
// quadrature for Gaussian latents, full enumeration for Rademacher latents of
// effective dimension <= 20, closed form for the linear model. Anything else
// raises UnsupportedError.
inline VectorXd expected_ys(const ObservationModel& model, const LatentDistribution& dist) {
    validate_model(model);
    const Index d = model_dim(model);
    detail::require_dims(dist.dim == d, "expected_ys: distribution and model dimensions differ");
    const bool gaussian = dist.kind == DistributionKind::gaussian;
    const bool rademacher = dist.kind == DistributionKind::rademacher;

    auto unsupported = [&]() -> UnsupportedError {
        return UnsupportedError("exact expectation not available for " + to_string(dist.kind) + " latents with " +
                                model_name(model) + " model");
    };

    return std::visit(
        [&](const auto& mm) -> VectorXd {
            using T = std::decay_t<decltype(mm)>;
            if constexpr (std::is_same_v<T, LinearModel>) {
                return mm.index;
            } else if constexpr (std::is_same_v<T, SingleIndexModel> || std::is_same_v<T, DitheredOneBitModel> ||
                                 std::is_same_v<T, LogisticModel>) {
                std::function<double(double)> mean;
                std::vector<double> kinks;
                if constexpr (std::is_same_v<T, SingleIndexModel>) {
                    mean = [g = mm.g](double t) { return g.conditional_mean(t); };
                    kinks = mm.g.kinks();
                } else if constexpr (std::is_same_v<T, DitheredOneBitModel>) {
                    mean = [delta = mm.delta](double t) { return detail::dither_mean(t, delta); };
                    kinks = {mm.delta, -mm.delta};
                } else {
                    mean = [](double t) { return detail::logistic_mean(t); };
                }
                if (gaussian) return detail::gaussian_single_index_ys(mm.index, mean, kinks);
                if (rademacher) {
                    return detail::rademacher_enumerate_ys(d, detail::support_union(mm.index),
                                                           [&](const VectorXd& s) { return mean(s.dot(mm.index)); });
                }
                throw unsupported();
            } else if constexpr (std::is_same_v<T, MultiIndexModel> || std::is_same_v<T, VariableSelectionModel> ||
                                 std::is_same_v<T, NoisySplitModel>) {
                const MatrixXd z = model_indices(model);
                const MultiFn& g = mm.G;
                const Index s = z.cols();
                if (gaussian) return z * detail::gaussian_multi_mu(g, s);
                if (rademacher) {
                    VectorXd proj(s);
                    return detail::rademacher_enumerate_ys(d, detail::support_union(z), [&](const VectorXd& sv) {
                        proj.noalias() = z.transpose() * sv;
                        return g.conditional_mean(proj.data(), s);
                    });
                }
                throw unsupported();
            } else if constexpr (std::is_same_v<T, SuperimposedModel>) {
                if (dist.kind != mm.block_kind) throw unsupported();
                VectorXd acc = VectorXd::Zero(d);
                for (const OutputFn& g : mm.fns) {
                    acc += expected_ys(SingleIndexModel{mm.index, g}, dist);
                }
                return acc / static_cast<double>(mm.fns.size());
            }
        },
        model);
}

// rho(z) = || E[y s] - z ||, valid for isotropic latents.
inline double mismatch_covariance_exact(const ObservationModel& model, const LatentDistribution& dist,
                                        const VectorXd& z) {
    const VectorXd eys = expected_ys(model, dist);
    detail::require_dims(eys.size() == z.size(), "mismatch_covariance_exact: z has wrong dimension");
    return (eys - z).norm();
}

// ---------------------------------------------------------------------------
// Target vectors

enum class TargetFamily { linear, single_index, multi_index, superimposed, noisy_split, index };

inline std::string to_string(TargetFamily f) {
    switch (f) {
        case TargetFamily::linear: return "linear";
        case TargetFamily::single_index: return "single_index";
        case TargetFamily::multi_index: return "multi_index";
        case TargetFamily::superimposed: return "superimposed";
        case TargetFamily::noisy_split: return "noisy_split";
        case TargetFamily::index: return "index";
    }
    return "unknown";
}

struct TargetVector {
    VectorXd z;
    std::vector<double> mu;
    std::vector<double> mu_stderr;  // empty when exact
    TargetFamily family = TargetFamily::single_index;
    bool exact = true;
};

// Monte Carlo is used only when n_mc is given and no exact backend exists.
struct TargetOptions {
    std::optional<std::uint64_t> n_mc;
    std::uint64_t seed = 0;
};

namespace detail {

struct MeanWithError {
    VectorXd mean;
    VectorXd stderr_;
};

// Monte Carlo mean of y * <s, z_j> for each column z_j of `dirs`.
inline MeanWithError monte_carlo_projections(const ObservationModel& model, const LatentDistribution& dist,
                                             const MatrixXd& dirs, std::uint64_t n_mc, std::uint64_t seed) {
    require(n_mc >= 2, "Monte Carlo target: need n_mc >= 2");
    const auto n = static_cast<Index>(n_mc);
    MatrixXd latent = sample_latent(dist, n, derive_seed(seed, Stream::monte_carlo, 0));
    Outputs out = generate_outputs(model, latent, derive_seed(seed, Stream::monte_carlo, 1));
    if (out.averaged_latent) latent = std::move(*out.averaged_latent);
    const MatrixXd prod = (latent * dirs).array().colwise() * out.y.array();
    MeanWithError r;
    r.mean = prod.colwise().mean().transpose();
    const MatrixXd centered = prod.rowwise() - r.mean.transpose();
    const VectorXd var = centered.colwise().squaredNorm().transpose() / static_cast<double>(n - 1);
    r.stderr_ = (var / static_cast<double>(n)).cwiseSqrt();
    return r;
}

inline std::vector<double> to_std(const VectorXd& v) { return {v.data(), v.data() + v.size()}; }

}  // namespace detail

// z = mu * index with mu = ||index||^{-2} E[g(<s, index>) <s, index>].
// Accepts single-index, logistic, dithered 1-bit and linear models.
inline TargetVector target_single_index(const ObservationModel& model, const LatentDistribution& dist,
                                        const TargetOptions& opts = {}) {
    const bool ok = std::holds_alternative<SingleIndexModel>(model) || std::holds_alternative<LogisticModel>(model) ||
                    std::holds_alternative<DitheredOneBitModel>(model) || std::holds_alternative<LinearModel>(model);
    if (!ok) throw ParameterError("target_single_index: model is not a single-index model");
    const VectorXd index = model_indices(model).col(0);
    const double nz2 = index.squaredNorm();
    if (nz2 == 0.0) throw ParameterError("target_single_index: index vector is zero");

    TargetVector t;
    t.family = std::holds_alternative<LinearModel>(model) ? TargetFamily::linear : TargetFamily::single_index;
    try {
        const double mu = expected_ys(model, dist).dot(index) / nz2;
        t.mu = {mu};
        t.z = mu * index;
        return t;
    } catch (const UnsupportedError&) {
        if (!opts.n_mc) throw;
    }
    const auto mc = detail::monte_carlo_projections(model, dist, index, *opts.n_mc, opts.seed);
    t.exact = false;
    t.mu = {mc.mean(0) / nz2};
    t.mu_stderr = {mc.stderr_(0) / nz2};
    t.z = t.mu[0] * index;
    return t;
}

// z = sum_j mu_j z_j with mu_j = E[G(...) <s, z_j>].
inline TargetVector target_multi_index(const ObservationModel& model, const LatentDistribution& dist,
                                       const TargetOptions& opts = {}) {
    const bool ok = std::holds_alternative<MultiIndexModel>(model) ||
                    std::holds_alternative<VariableSelectionModel>(model) ||
                    std::holds_alternative<NoisySplitModel>(model);
    if (!ok) throw ParameterError("target_multi_index: model is not a multi-index model");
    validate_model(model);
    const MatrixXd dirs = model_indices(model);

    TargetVector t;
    t.family = std::holds_alternative<NoisySplitModel>(model) ? TargetFamily::noisy_split : TargetFamily::multi_index;
    VectorXd mu;
    try {
        mu = dirs.transpose() * expected_ys(model, dist);
    } catch (const UnsupportedError&) {
        if (!opts.n_mc) throw;
        const auto mc = detail::monte_carlo_projections(model, dist, dirs, *opts.n_mc, opts.seed);
        mu = mc.mean;
        t.exact = false;
        t.mu_stderr = detail::to_std(mc.stderr_);
    }
    t.mu = detail::to_std(mu);
    t.z = VectorXd::Zero(dirs.rows());
    // Accumulate column by column so entries off the index supports stay exactly zero.
    for (Index j = 0; j < dirs.cols(); ++j) {
        for (Index i = 0; i < dirs.rows(); ++i) {
            if (dirs(i, j) != 0.0) t.z(i) += mu(j) * dirs(i, j);
        }
    }
    return t;
}

// z = mubar * index with mubar = M^{-1} sum_j E[g_j(gamma) gamma] (unit index, Gaussian blocks).
inline TargetVector target_superimposed(const SuperimposedModel& model, const LatentDistribution& dist) {
    validate_model(model);
    if (std::abs(model.index.norm() - 1.0) > 1e-10) {
        throw ParameterError("target_superimposed: index vector must have unit norm");
    }
    if (dist.kind != DistributionKind::gaussian || model.block_kind != DistributionKind::gaussian) {
        throw UnsupportedError("target_superimposed: requires Gaussian latent blocks");
    }
    double acc = 0.0;
    for (const OutputFn& g : model.fns) {
        acc += normal_expectation([&g](double x) { return g.conditional_mean(x) * x; }, g.kinks());
    }
    const double mubar = acc / static_cast<double>(model.fns.size());
    TargetVector t;
    t.family = TargetFamily::superimposed;
    t.mu = {mubar};
    t.z = mubar * model.index;
    return t;
}

// Dispatch on the model family.
inline TargetVector construct_target(const ObservationModel& model, const LatentDistribution& dist,
                                     const TargetOptions& opts = {}) {
    if (const auto* sup = std::get_if<SuperimposedModel>(&model)) {
        if (dist.kind == DistributionKind::gaussian) return target_superimposed(*sup, dist);
        throw UnsupportedError("construct_target: superimposed targets need Gaussian latents");
    }
    if (std::holds_alternative<MultiIndexModel>(model) || std::holds_alternative<VariableSelectionModel>(model) ||
        std::holds_alternative<NoisySplitModel>(model)) {
        return target_multi_index(model, dist, opts);
    }
    return target_single_index(model, dist, opts);
}

// ---------------------------------------------------------------------------
// Noisy split: mismatch decomposition and the noise-power target

struct MismatchDecomposition {
    double rho_total = 0.0;
    double rho_signal = 0.0;
    double noise_norm = 0.0;
    double residual = 0.0;  // rho_total^2 - rho_signal^2 - noise_norm^2
    bool exact = false;
};

namespace detail {

inline void check_partition(const NoisySplitModel& model, const VectorXd& z) {
    if (z.size() != model.d1 + model.d2) {
        throw DimensionError("mismatch_decomposition: z has length " + std::to_string(z.size()) +
                             ", partition expects " + std::to_string(model.d1 + model.d2));
    }
}

inline MismatchDecomposition finish(double total, double signal, double noise, bool exact) {
    return {total, signal, noise, total * total - signal * signal - noise * noise, exact};
}

}  // namespace detail

inline MismatchDecomposition mismatch_decomposition_exact(const NoisySplitModel& model, const LatentDistribution& dist,
                                                          const VectorXd& z) {
    detail::check_partition(model, z);
    const VectorXd eys = expected_ys(model, dist);
    const double total = (eys - z).norm();
    const double signal = (eys.head(model.d1) - z.head(model.d1)).norm();
    return detail::finish(total, signal, z.tail(model.d2).norm(), true);
}

inline MismatchDecomposition mismatch_decomposition_empirical(const NoisySplitModel& model, const MatrixXd& latent,
                                                              const VectorXd& y, const VectorXd& z) {
    detail::check_partition(model, z);
    detail::require_dims(latent.cols() == z.size(), "mismatch_decomposition: latent has wrong dimension");
    const double total = mismatch_covariance(latent, y, z);
    const double signal = mismatch_covariance(latent.leftCols(model.d1), y, z.head(model.d1));
    return detail::finish(total, signal, z.tail(model.d2).norm(), false);
}

// Exact when the (distribution, G) pair has an exact backend, empirical otherwise.
inline MismatchDecomposition mismatch_decomposition(const NoisySplitModel& model, const LatentDistribution& dist,
                                                    const MatrixXd& latent, const VectorXd& y, const VectorXd& z) {
    try {
        return mismatch_decomposition_exact(model, dist, z);
    } catch (const UnsupportedError&) {
        return mismatch_decomposition_empirical(model, latent, y, z);
    }
}

struct NoisePowerTarget {
    VectorXd beta;
    VectorXd z_noise;
    double residual = 0.0;  // || A_v^T beta - z_v ||
    int outer_iterations = 0;
};

struct NoisePowerOptions {
    std::vector<double> eps_schedule{1e-1, 1e-2, 1e-3, 1e-4};
    double feasibility_tol = 1e-6;
    int max_inner = 20000;
    int max_multiplier_rounds = 200;
};

namespace detail {

// Accelerated projected gradient for min 0.5 b^T Q b - c^T b over K.
inline VectorXd fista_quadratic(const MatrixXd& q, const VectorXd& c, const HypothesisSet& set, VectorXd x,
                                double lip, int max_iter) {
    VectorXd yk = x;
    double tk = 1.0;
    for (int it = 0; it < max_iter; ++it) {
        const VectorXd grad = q * yk - c;
        VectorXd next = project(set, yk - grad / lip);
        const double tn = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * tk * tk));
        const double step = (next - x).norm();
        // Restart momentum when it points uphill.
        if ((yk - next).dot(next - x) > 0.0) {
            yk = next;
            tk = 1.0;
        } else {
            yk = next + ((tk - 1.0) / tn) * (next - x);
            tk = tn;
        }
        x = std::move(next);
        if (step <= 1e-14 * (1.0 + x.norm())) break;
    }
    return x;
}

}  // namespace detail

// Among all beta in K with A_v^T beta = z_v, the one minimizing ||A_n^T beta||.
// Full space: least-norm solution of the KKT system. Other sets: augmented
// Lagrangian with the penalty schedule in `opts`, inner problems solved by
// accelerated projected gradient.
inline NoisePowerTarget noise_power_target(const MatrixXd& a_v, const MatrixXd& a_n, const HypothesisSet& set,
                                           const VectorXd& z_v, const NoisePowerOptions& opts = {}) {
    const Index p = a_v.rows();
    detail::require_dims(a_n.rows() == p, "noise_power_target: A_v and A_n differ in row count");
    detail::require_dims(z_v.size() == a_v.cols(), "noise_power_target: z_v has wrong dimension");

    // Least-norm solution of the affine constraint; certifies the fiber is nonempty in R^p.
    const Eigen::CompleteOrthogonalDecomposition<MatrixXd> cod_v(a_v.transpose());
    const VectorXd beta_ln = cod_v.solve(z_v);
    const double ln_residual = (a_v.transpose() * beta_ln - z_v).norm();
    if (ln_residual > opts.feasibility_tol) {
        throw InfeasibleError("noise_power_target: A_v^T beta = z_v has no solution", ln_residual);
    }

    NoisePowerTarget out;
    if (std::holds_alternative<FullSpace>(set.variant())) {
        const Index m = a_v.cols();
        MatrixXd kkt = MatrixXd::Zero(p + m, p + m);
        kkt.topLeftCorner(p, p) = 2.0 * a_n * a_n.transpose();
        kkt.topRightCorner(p, m) = a_v;
        kkt.bottomLeftCorner(m, p) = a_v.transpose();
        VectorXd rhs = VectorXd::Zero(p + m);
        rhs.tail(m) = z_v;
        const VectorXd sol = kkt.completeOrthogonalDecomposition().solve(rhs);
        out.beta = sol.head(p);
    } else {
        const double nv = a_v.operatorNorm();
        const double nn = a_n.cols() > 0 ? a_n.operatorNorm() : 0.0;
        const MatrixXd qn = 2.0 * a_n * a_n.transpose();
        const MatrixXd qv = a_v * a_v.transpose();
        VectorXd beta = project(set, VectorXd::Zero(p));
        VectorXd nu = VectorXd::Zero(a_v.cols());
        double residual = (a_v.transpose() * beta - z_v).norm();

        auto solve_at = [&](double eps) {
            // F(b) = ||A_n^T b||^2 + <nu, A_v^T b - z_v> + (1/eps) ||A_v^T b - z_v||^2
            const MatrixXd q = qn + (2.0 / eps) * qv;
            const VectorXd c = (2.0 / eps) * (a_v * z_v) - a_v * nu;
            const double lip = std::max(2.0 * nn * nn + (2.0 / eps) * nv * nv, 1e-300);
            beta = detail::fista_quadratic(q, c, set, beta, lip, opts.max_inner);
            const VectorXd r = a_v.transpose() * beta - z_v;
            nu += (2.0 / eps) * r;
            residual = r.norm();
            ++out.outer_iterations;
        };

        for (double eps : opts.eps_schedule) solve_at(eps);
        const double eps_final = opts.eps_schedule.empty() ? 1e-4 : opts.eps_schedule.back();
        for (int round = 0; round < opts.max_multiplier_rounds && residual > opts.feasibility_tol; ++round) {
            solve_at(eps_final);
        }
        if (residual > opts.feasibility_tol) {
            throw InfeasibleError("noise_power_target: fiber {beta in K : A_v^T beta = z_v} looks empty", residual);
        }
        out.beta = std::move(beta);
    }
    out.residual = (a_v.transpose() * out.beta - z_v).norm();
    if (out.residual > opts.feasibility_tol) {
        throw InfeasibleError("noise_power_target: KKT solution violates the constraint", out.residual);
    }
    out.z_noise = a_n.transpose() * out.beta;
    return out;
}

// ---------------------------------------------------------------------------
// Reports

struct MismatchReport {
    double rho_hat = 0.0;
    double dev_hat = 0.0;
    std::uint64_t n_used = 0;
    std::optional<double> rho_exact;
    std::string model_digest;
};

// Canonical text of a model, hashed into MismatchReport::model_digest.
inline std::string canonical_model_text(const ObservationModel& model) {
    std::ostringstream os;
    os << std::setprecision(17) << model_name(model);
    auto put_vec = [&os](const char* tag, const auto& v) {
        os << ' ' << tag << '[';
        for (Index i = 0; i < static_cast<Index>(v.size()); ++i) os << (i ? "," : "") << v[static_cast<std::size_t>(i)];
        os << ']';
    };
    auto put_fn = [&os](const OutputFn& g) { os << " g" << static_cast<int>(g.kind) << ':' << g.param; };
    auto put_multi = [&](const MultiFn& g) {
        os << " G" << static_cast<int>(g.kind) << ':' << g.noise_sd;
        put_vec("w", g.weights);
    };
    std::visit(
        [&](const auto& mm) {
            using T = std::decay_t<decltype(mm)>;
            if constexpr (std::is_same_v<T, LinearModel>) {
                put_vec("z", detail::to_std(mm.index));
                os << " sigma:" << mm.noise_sd;
            } else if constexpr (std::is_same_v<T, SingleIndexModel>) {
                put_vec("z", detail::to_std(mm.index));
                put_fn(mm.g);
            } else if constexpr (std::is_same_v<T, DitheredOneBitModel>) {
                put_vec("z", detail::to_std(mm.index));
                os << " delta:" << mm.delta;
            } else if constexpr (std::is_same_v<T, LogisticModel>) {
                put_vec("z", detail::to_std(mm.index));
            } else if constexpr (std::is_same_v<T, MultiIndexModel>) {
                const Eigen::Map<const VectorXd> flat(mm.indices.data(), mm.indices.size());
                os << " shape:" << mm.indices.rows() << 'x' << mm.indices.cols();
                put_vec("Z", detail::to_std(flat));
                put_multi(mm.G);
            } else if constexpr (std::is_same_v<T, VariableSelectionModel>) {
                os << " d:" << mm.dim;
                put_vec("S", mm.active);
                put_multi(mm.G);
            } else if constexpr (std::is_same_v<T, SuperimposedModel>) {
                put_vec("z", detail::to_std(mm.index));
                for (const auto& g : mm.fns) put_fn(g);
                os << " blocks:" << static_cast<int>(mm.block_kind);
            } else if constexpr (std::is_same_v<T, NoisySplitModel>) {
                os << " d1:" << mm.d1 << " d2:" << mm.d2;
                put_multi(mm.G);
            }
        },
        model);
    return os.str();
}

// FNV-1a (64 bit), hex encoded.
inline std::string model_digest(const ObservationModel& model) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : canonical_model_text(model)) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << h;
    return os.str();
}

inline MismatchReport mismatch_report(const ObservationModel& model, const LatentDistribution& dist,
                                      const MatrixXd& latent, const VectorXd& y, const VectorXd& z) {
    MismatchReport r;
    r.rho_hat = mismatch_covariance(latent, y, z);
    r.dev_hat = latent.rows() >= 100 ? mismatch_deviation(latent, y, z) : subgaussian_norm(y - latent * z);
    r.n_used = static_cast<std::uint64_t>(latent.rows());
    try {
        r.rho_exact = mismatch_covariance_exact(model, dist, z);
    } catch (const UnsupportedError&) {
        r.rho_exact.reset();
    }
    r.model_digest = model_digest(model);
    return r;
}

}  // namespace mismatch_lasso
