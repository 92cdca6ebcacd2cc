#pragma once

// Synthetic sampling processes x = A s, y = F(s) for the observation models
// handled by the library. All randomness comes from per-row substreams of a
// master seed, so a sample set is a pure function of (model, n, seed).

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <numeric>
#include <optional>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

#include "errors.hpp"
#include "rng.hpp"

namespace mismatch_lasso {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

// ---------------------------------------------------------------------------
// Latent distributions

enum class DistributionKind { gaussian, rademacher, uniform_scaled };

struct LatentDistribution {
    DistributionKind kind = DistributionKind::gaussian;
    Index dim = 1;
};

inline std::string to_string(DistributionKind k) {
    switch (k) {
        case DistributionKind::gaussian: return "gaussian";
        case DistributionKind::rademacher: return "rademacher";
        case DistributionKind::uniform_scaled: return "uniform_scaled";
    }
    return "unknown";
}

// Sub-Gaussian constant of a 1-D marginal under the moment-grid convention
// max_{q in {1,2,4,8,16}} q^{-1/2} (E|v|^q)^{1/q}. For all three kinds the
// maximum sits at q = 1, so the constant is E|v|.
inline double subgaussian_constant(DistributionKind k) {
    switch (k) {
        case DistributionKind::gaussian: return std::sqrt(2.0 / std::numbers::pi);
        case DistributionKind::rademacher: return 1.0;
        case DistributionKind::uniform_scaled: return std::sqrt(3.0) / 2.0;
    }
    return 1.0;
}

// n x dim matrix of i.i.d. rows. Row i is drawn from substream (seed, latent, i).
inline MatrixXd sample_latent(const LatentDistribution& dist, Index n, std::uint64_t seed,
                              Stream stream = Stream::latent) {
    detail::require(n >= 1, "sample_latent: n must be >= 1");
    detail::require(dist.dim >= 1, "sample_latent: dimension must be >= 1");
    MatrixXd s(n, dist.dim);
    const double sqrt3 = std::sqrt(3.0);
    for (Index i = 0; i < n; ++i) {
        auto eng = substream(seed, stream, static_cast<std::uint64_t>(i));
        switch (dist.kind) {
            case DistributionKind::gaussian: {
                std::normal_distribution<double> nd(0.0, 1.0);
                for (Index j = 0; j < dist.dim; ++j) s(i, j) = nd(eng);
                break;
            }
            case DistributionKind::rademacher:
                for (Index j = 0; j < dist.dim; ++j) s(i, j) = (eng() >> 63) ? 1.0 : -1.0;
                break;
            case DistributionKind::uniform_scaled:
                for (Index j = 0; j < dist.dim; ++j) s(i, j) = sqrt3 * (2.0 * uniform01(eng) - 1.0);
                break;
        }
    }
    return s;
}

// ---------------------------------------------------------------------------
// Mixing matrices

struct MixingMatrix {
    MatrixXd entries;  // p x d
    Index rank = 0;

    Index p() const { return entries.rows(); }
    Index d() const { return entries.cols(); }

    static MixingMatrix identity(Index d) {
        return MixingMatrix{MatrixXd::Identity(d, d), d};
    }

    // Rank measured by SVD with relative tolerance 1e-10.
    static MixingMatrix from_entries(MatrixXd a) {
        Index r = 0;
        if (a.size() > 0) {
            Eigen::JacobiSVD<MatrixXd> svd(a);
            const auto& sv = svd.singularValues();
            const double tol = 1e-10 * std::max(1.0, sv.size() ? sv(0) : 0.0);
            for (Index i = 0; i < sv.size(); ++i) r += sv(i) > tol ? 1 : 0;
        }
        return MixingMatrix{std::move(a), r};
    }
};

// A = U D with U^T U = I_d, D = diag(sqrt(eigenvalues)) sorted descending and
// A A^T = Sigma. Column signs are fixed so that each column's largest-magnitude
// entry is positive. When `rank` is empty it is read off the spectrum.
inline MixingMatrix isotropic_decomposition(const MatrixXd& sigma, std::optional<Index> rank = std::nullopt,
                                            double tol = 1e-10) {
    detail::require_dims(sigma.rows() == sigma.cols() && sigma.rows() >= 1,
                         "isotropic_decomposition: Sigma must be square and non-empty");
    const double scale = std::max(1.0, sigma.cwiseAbs().maxCoeff());
    if ((sigma - sigma.transpose()).cwiseAbs().maxCoeff() > tol * scale) {
        throw ParameterError("isotropic_decomposition: Sigma is not symmetric");
    }
    const MatrixXd sym = 0.5 * (sigma + sigma.transpose());
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(sym);
    if (es.info() != Eigen::Success) throw ParameterError("isotropic_decomposition: eigensolver failed");

    const Index p = sym.rows();
    const VectorXd& ev = es.eigenvalues();
    const double lam_max = std::max(0.0, ev.maxCoeff());
    const double eig_tol = tol * std::max(1.0, lam_max);
    if (ev.minCoeff() < -eig_tol) {
        throw ParameterError("isotropic_decomposition: Sigma has a negative eigenvalue");
    }

    std::vector<Index> order(static_cast<std::size_t>(p));
    std::iota(order.begin(), order.end(), Index{0});
    std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return ev(a) > ev(b); });

    Index numerical_rank = 0;
    for (Index i = 0; i < p; ++i) numerical_rank += ev(i) > eig_tol ? 1 : 0;
    const Index d = rank.value_or(numerical_rank);
    detail::require(d >= 1 && d <= p, "isotropic_decomposition: rank out of range");
    if (d < numerical_rank) {
        throw ParameterError("isotropic_decomposition: requested rank below numerical rank of Sigma");
    }

    MatrixXd a(p, d);
    for (Index c = 0; c < d; ++c) {
        const Index k = order[static_cast<std::size_t>(c)];
        VectorXd u = es.eigenvectors().col(k);
        Index arg = 0;
        u.cwiseAbs().maxCoeff(&arg);
        if (u(arg) < 0.0) u = -u;
        a.col(c) = std::sqrt(std::max(0.0, ev(k))) * u;
    }
    return MixingMatrix{std::move(a), d};
}

// Row-wise x_i = A s_i, i.e. latent * A^T.
inline MatrixXd apply_mixing(const MixingMatrix& a, const MatrixXd& latent) {
    detail::require_dims(latent.cols() == a.d(), "apply_mixing: latent has " + std::to_string(latent.cols()) +
                                                     " columns, A has " + std::to_string(a.d()));
    return latent * a.entries.transpose();
}

// ---------------------------------------------------------------------------
// Output functions

enum class OutputKind { sign, identity, identity_plus_gauss, tanh, abs, sign_with_flip };

// Convention: sign(0) = +1, so 1-bit outputs always lie in {-1, +1}.
inline double sign_of(double t) noexcept { return t >= 0.0 ? 1.0 : -1.0; }

struct OutputFn {
    OutputKind kind = OutputKind::identity;
    // identity_plus_gauss: noise standard deviation; sign_with_flip: probability q of keeping the bit.
    double param = 0.0;

    static OutputFn sign() { return {OutputKind::sign, 0.0}; }
    static OutputFn identity() { return {OutputKind::identity, 0.0}; }
    static OutputFn identity_plus_gauss(double sigma) { return {OutputKind::identity_plus_gauss, sigma}; }
    static OutputFn tanh() { return {OutputKind::tanh, 0.0}; }
    static OutputFn abs() { return {OutputKind::abs, 0.0}; }
    static OutputFn sign_with_flip(double q) { return {OutputKind::sign_with_flip, q}; }

    // One realization of g(t); draws from `eng` only for the randomized kinds.
    double operator()(double t, SplitMix64& eng) const {
        switch (kind) {
            case OutputKind::sign: return sign_of(t);
            case OutputKind::identity: return t;
            case OutputKind::identity_plus_gauss: return t + param * standard_normal(eng);
            case OutputKind::tanh: return std::tanh(t);
            case OutputKind::abs: return std::abs(t);
            case OutputKind::sign_with_flip: return uniform01(eng) < param ? sign_of(t) : -sign_of(t);
        }
        return t;
    }

    // E[g(t) | t].
    double conditional_mean(double t) const {
        switch (kind) {
            case OutputKind::sign: return sign_of(t);
            case OutputKind::identity:
            case OutputKind::identity_plus_gauss: return t;
            case OutputKind::tanh: return std::tanh(t);
            case OutputKind::abs: return std::abs(t);
            case OutputKind::sign_with_flip: return (2.0 * param - 1.0) * sign_of(t);
        }
        return t;
    }

    // Points where the conditional mean is not smooth.
    std::vector<double> kinks() const {
        switch (kind) {
            case OutputKind::sign:
            case OutputKind::abs:
            case OutputKind::sign_with_flip: return {0.0};
            default: return {};
        }
    }

    void validate() const {
        if (kind == OutputKind::identity_plus_gauss) detail::require(param >= 0.0, "identity_plus_gauss: sigma < 0");
        if (kind == OutputKind::sign_with_flip)
            detail::require(param >= 0.0 && param <= 1.0, "sign_with_flip: q must lie in [0, 1]");
    }
};

// Functions G of several index projections (v_1, ..., v_S).
enum class MultiKind { sum, sum_of_signs, sign_of_sum, sign_first, product, weighted };

struct MultiFn {
    MultiKind kind = MultiKind::sum;
    std::vector<double> weights;  // used by `weighted`
    double noise_sd = 0.0;        // independent additive Gaussian noise

    double conditional_mean(const double* v, Index s) const {
        switch (kind) {
            case MultiKind::sum: {
                double acc = 0.0;
                for (Index j = 0; j < s; ++j) acc += v[j];
                return acc;
            }
            case MultiKind::sum_of_signs: {
                double acc = 0.0;
                for (Index j = 0; j < s; ++j) acc += sign_of(v[j]);
                return acc;
            }
            case MultiKind::sign_of_sum: {
                double acc = 0.0;
                for (Index j = 0; j < s; ++j) acc += v[j];
                return sign_of(acc);
            }
            case MultiKind::sign_first: return sign_of(v[0]);
            case MultiKind::product: {
                double acc = 1.0;
                for (Index j = 0; j < s; ++j) acc *= v[j];
                return acc;
            }
            case MultiKind::weighted: {
                double acc = 0.0;
                for (Index j = 0; j < s; ++j) acc += weights[static_cast<std::size_t>(j)] * v[j];
                return acc;
            }
        }
        return 0.0;
    }

    double operator()(const double* v, Index s, SplitMix64& eng) const {
        const double m = conditional_mean(v, s);
        return noise_sd > 0.0 ? m + noise_sd * standard_normal(eng) : m;
    }

    void validate(Index s) const {
        detail::require(s >= 1, "MultiFn: need at least one index");
        detail::require(noise_sd >= 0.0, "MultiFn: noise_sd < 0");
        if (kind == MultiKind::weighted) {
            detail::require_dims(static_cast<Index>(weights.size()) == s, "MultiFn: weights must have one entry per index");
        }
    }
};

// ---------------------------------------------------------------------------
// Observation models

struct LinearModel {
    VectorXd index;
    double noise_sd = 0.0;
};

struct SingleIndexModel {
    VectorXd index;
    OutputFn g;
};

// y = delta * sign(<s, index> + tau), tau ~ Uniform[-delta, delta].
struct DitheredOneBitModel {
    VectorXd index;
    double delta = 1.0;
};

// y in {0, 1} with P(y = 1 | s) = 1 / (1 + exp(-<s, index>)).
struct LogisticModel {
    VectorXd index;
};

// y = G(<s, z_1>, ..., <s, z_S>); columns of `indices` are orthonormal.
struct MultiIndexModel {
    MatrixXd indices;  // d x S
    MultiFn G;
};

// y = G(s_{k_1}, ..., s_{k_S}); `active` is 0-based, sorted, duplicate free.
struct VariableSelectionModel {
    Index dim = 1;
    std::vector<Index> active;
    MultiFn G;
};

// y = M^{-1/2} sum_j g_j(<s^j, index>) with the estimator seeing s = M^{-1/2} sum_j s^j.
struct SuperimposedModel {
    VectorXd index;
    std::vector<OutputFn> fns;
    DistributionKind block_kind = DistributionKind::gaussian;
};

// s = (v, n) with v the first d1 coordinates; y = G(v).
struct NoisySplitModel {
    Index d1 = 1;
    Index d2 = 0;
    MultiFn G;
};

using ObservationModel = std::variant<LinearModel, SingleIndexModel, DitheredOneBitModel, LogisticModel,
                                      MultiIndexModel, VariableSelectionModel, SuperimposedModel, NoisySplitModel>;

inline std::string model_name(const ObservationModel& m) {
    static constexpr const char* names[] = {"linear",           "single_index", "dithered_one_bit", "logistic",
                                            "multi_index",      "variable_selection", "superimposed",
                                            "noisy_split"};
    return names[m.index()];
}

// Latent dimension d the model expects.
inline Index model_dim(const ObservationModel& m) {
    return std::visit(
        [](const auto& mm) -> Index {
            using T = std::decay_t<decltype(mm)>;
            if constexpr (std::is_same_v<T, MultiIndexModel>) {
                return mm.indices.rows();
            } else if constexpr (std::is_same_v<T, VariableSelectionModel>) {
                return mm.dim;
            } else if constexpr (std::is_same_v<T, NoisySplitModel>) {
                return mm.d1 + mm.d2;
            } else {
                return mm.index.size();
            }
        },
        m);
}

inline void validate_model(const ObservationModel& m) {
    std::visit(
        [](const auto& mm) {
            using T = std::decay_t<decltype(mm)>;
            if constexpr (std::is_same_v<T, LinearModel>) {
                detail::require(mm.index.size() >= 1, "linear: empty index");
                detail::require(mm.noise_sd >= 0.0, "linear: noise_sd < 0");
            } else if constexpr (std::is_same_v<T, SingleIndexModel>) {
                detail::require(mm.index.size() >= 1, "single_index: empty index");
                mm.g.validate();
            } else if constexpr (std::is_same_v<T, DitheredOneBitModel>) {
                detail::require(mm.index.size() >= 1, "dithered_one_bit: empty index");
                detail::require(mm.delta > 0.0, "dithered_one_bit: delta must be > 0");
            } else if constexpr (std::is_same_v<T, LogisticModel>) {
                detail::require(mm.index.size() >= 1, "logistic: empty index");
            } else if constexpr (std::is_same_v<T, MultiIndexModel>) {
                const Index s = mm.indices.cols();
                detail::require(s >= 1 && mm.indices.rows() >= s, "multi_index: need 1 <= S <= d indices");
                const MatrixXd gram = mm.indices.transpose() * mm.indices;
                if ((gram - MatrixXd::Identity(s, s)).cwiseAbs().maxCoeff() > 1e-10) {
                    throw ParameterError("multi_index: index vectors are not orthonormal");
                }
                mm.G.validate(s);
            } else if constexpr (std::is_same_v<T, VariableSelectionModel>) {
                detail::require(!mm.active.empty(), "variable_selection: empty active set");
                for (std::size_t i = 0; i < mm.active.size(); ++i) {
                    detail::require(mm.active[i] >= 0 && mm.active[i] < mm.dim,
                                    "variable_selection: active index out of range");
                    if (i > 0) {
                        detail::require(mm.active[i - 1] < mm.active[i],
                                        "variable_selection: active set must be sorted and duplicate free");
                    }
                }
                mm.G.validate(static_cast<Index>(mm.active.size()));
            } else if constexpr (std::is_same_v<T, SuperimposedModel>) {
                detail::require(mm.index.size() >= 1, "superimposed: empty index");
                detail::require(!mm.fns.empty(), "superimposed: need at least one branch");
                for (const auto& g : mm.fns) g.validate();
            } else if constexpr (std::is_same_v<T, NoisySplitModel>) {
                detail::require(mm.d1 >= 1 && mm.d2 >= 0, "noisy_split: need d1 >= 1, d2 >= 0");
                mm.G.validate(mm.d1);
            }
        },
        m);
}

// Index vectors z_1..z_S of the model as columns of a d x S matrix (empty for NoisySplit).
inline MatrixXd model_indices(const ObservationModel& m) {
    return std::visit(
        [](const auto& mm) -> MatrixXd {
            using T = std::decay_t<decltype(mm)>;
            if constexpr (std::is_same_v<T, MultiIndexModel>) {
                return mm.indices;
            } else if constexpr (std::is_same_v<T, VariableSelectionModel>) {
                MatrixXd z = MatrixXd::Zero(mm.dim, static_cast<Index>(mm.active.size()));
                for (std::size_t j = 0; j < mm.active.size(); ++j) z(mm.active[j], static_cast<Index>(j)) = 1.0;
                return z;
            } else if constexpr (std::is_same_v<T, NoisySplitModel>) {
                MatrixXd z = MatrixXd::Zero(mm.d1 + mm.d2, mm.d1);
                z.topRows(mm.d1).setIdentity();
                return z;
            } else {
                return mm.index;
            }
        },
        m);
}

// Result of generate_outputs. `averaged_latent` is set only for the
// superimposed model and replaces the latent block the caller passed in.
struct Outputs {
    VectorXd y;
    std::optional<MatrixXd> averaged_latent;
};

inline Outputs generate_outputs(const ObservationModel& model, const MatrixXd& latent, std::uint64_t seed) {
    validate_model(model);
    const Index n = latent.rows();
    const Index d = latent.cols();
    detail::require_dims(d == model_dim(model), "generate_outputs: latent has " + std::to_string(d) +
                                                    " columns, model expects " + std::to_string(model_dim(model)));
    Outputs out;
    out.y.resize(n);

    auto row_engine = [seed](Index i) { return substream(seed, Stream::outputs, static_cast<std::uint64_t>(i)); };

    std::visit(
        [&](const auto& mm) {
            using T = std::decay_t<decltype(mm)>;
            if constexpr (std::is_same_v<T, LinearModel>) {
                const VectorXd t = latent * mm.index;
                for (Index i = 0; i < n; ++i) {
                    auto eng = row_engine(i);
                    out.y(i) = mm.noise_sd > 0.0 ? t(i) + mm.noise_sd * standard_normal(eng) : t(i);
                }
            } else if constexpr (std::is_same_v<T, SingleIndexModel>) {
                const VectorXd t = latent * mm.index;
                for (Index i = 0; i < n; ++i) {
                    auto eng = row_engine(i);
                    out.y(i) = mm.g(t(i), eng);
                }
            } else if constexpr (std::is_same_v<T, DitheredOneBitModel>) {
                const VectorXd t = latent * mm.index;
                for (Index i = 0; i < n; ++i) {
                    auto eng = row_engine(i);
                    const double tau = mm.delta * (2.0 * uniform01(eng) - 1.0);
                    out.y(i) = mm.delta * sign_of(t(i) + tau);
                }
            } else if constexpr (std::is_same_v<T, LogisticModel>) {
                const VectorXd t = latent * mm.index;
                for (Index i = 0; i < n; ++i) {
                    auto eng = row_engine(i);
                    const double p1 = 1.0 / (1.0 + std::exp(-t(i)));
                    out.y(i) = uniform01(eng) < p1 ? 1.0 : 0.0;
                }
            } else if constexpr (std::is_same_v<T, MultiIndexModel>) {
                const MatrixXd v = latent * mm.indices;
                const Index s = v.cols();
                std::vector<double> buf(static_cast<std::size_t>(s));
                for (Index i = 0; i < n; ++i) {
                    auto eng = row_engine(i);
                    for (Index j = 0; j < s; ++j) buf[static_cast<std::size_t>(j)] = v(i, j);
                    out.y(i) = mm.G(buf.data(), s, eng);
                }
            } else if constexpr (std::is_same_v<T, VariableSelectionModel>) {
                const Index s = static_cast<Index>(mm.active.size());
                std::vector<double> buf(static_cast<std::size_t>(s));
                for (Index i = 0; i < n; ++i) {
                    auto eng = row_engine(i);
                    for (Index j = 0; j < s; ++j) buf[static_cast<std::size_t>(j)] = latent(i, mm.active[static_cast<std::size_t>(j)]);
                    out.y(i) = mm.G(buf.data(), s, eng);
                }
            } else if constexpr (std::is_same_v<T, SuperimposedModel>) {
                const auto m = static_cast<Index>(mm.fns.size());
                const double scale = 1.0 / std::sqrt(static_cast<double>(m));
                MatrixXd sum = latent;
                VectorXd acc = VectorXd::Zero(n);
                const LatentDistribution block{mm.block_kind, d};
                for (Index j = 0; j < m; ++j) {
                    MatrixXd extra;
                    if (j > 0) {
                        extra = sample_latent(block, n, derive_seed(seed, Stream::superimposed, static_cast<std::uint64_t>(j)));
                        sum += extra;
                    }
                    const MatrixXd& sj = j == 0 ? latent : extra;
                    const VectorXd t = sj * mm.index;
                    const OutputFn& g = mm.fns[static_cast<std::size_t>(j)];
                    for (Index i = 0; i < n; ++i) {
                        auto eng = substream(derive_seed(seed, Stream::superimposed, static_cast<std::uint64_t>(j)),
                                             Stream::outputs, static_cast<std::uint64_t>(i));
                        acc(i) += g(t(i), eng);
                    }
                }
                out.y = scale * acc;
                out.averaged_latent = scale * sum;
            } else if constexpr (std::is_same_v<T, NoisySplitModel>) {
                std::vector<double> buf(static_cast<std::size_t>(mm.d1));
                for (Index i = 0; i < n; ++i) {
                    auto eng = row_engine(i);
                    for (Index j = 0; j < mm.d1; ++j) buf[static_cast<std::size_t>(j)] = latent(i, j);
                    out.y(i) = mm.G(buf.data(), mm.d1, eng);
                }
            }
        },
        model);
    return out;
}

// delta = C * kappa * lambda * sqrt(log(2n)).
inline double dithering_scale(double kappa, double lambda, Index n, double c = 1.0) {
    detail::require(kappa > 0.0 && lambda > 0.0 && c > 0.0, "dithering_scale: kappa, lambda, C must be > 0");
    detail::require(n >= 1, "dithering_scale: n must be >= 1");
    return c * kappa * lambda * std::sqrt(std::log(2.0 * static_cast<double>(n)));
}

// ---------------------------------------------------------------------------
// Sample sets

struct SampleSet {
    MatrixXd latent;  // n x d
    MatrixXd inputs;  // n x p
    VectorXd outputs;
    std::uint64_t seed = 0;

    Index n() const { return latent.rows(); }
};

inline SampleSet generate_samples(const LatentDistribution& dist, const MixingMatrix& a, const ObservationModel& model,
                                  Index n, std::uint64_t seed) {
    detail::require_dims(dist.dim == model_dim(model), "generate_samples: distribution and model dimensions differ");
    SampleSet set;
    set.seed = seed;
    set.latent = sample_latent(dist, n, seed);
    Outputs out = generate_outputs(model, set.latent, seed);
    if (out.averaged_latent) set.latent = std::move(*out.averaged_latent);
    set.outputs = std::move(out.y);
    set.inputs = apply_mixing(a, set.latent);
    return set;
}

}  // namespace mismatch_lasso
