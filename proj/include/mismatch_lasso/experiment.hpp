#pragma once

// Config-driven experiment harness: for each (n, trial) cell it generates
// data, builds the target vector, solves the generalized Lasso and records
// ||A^T beta_hat - z_target|| together with the empirical mismatch parameters.

#include <Eigen/Dense>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "errors.hpp"
#include "geometry.hpp"
#include "hypothesis_set.hpp"
#include "io.hpp"
#include "mismatch.hpp"
#include "model_gen.hpp"
#include "rng.hpp"
#include "solver.hpp"

namespace mismatch_lasso {

// ---------------------------------------------------------------------------
// Small statistics helpers

struct SlopeFit {
    double slope = 0.0;
    double half_width = 0.0;  // 2 * standard error of the slope
    bool defined = false;
};

// Ordinary least squares of log(error) on log(n).
inline SlopeFit fit_decay_slope(const std::vector<std::pair<double, double>>& points) {
    if (points.size() < 3) throw ParameterError("fit_decay_slope: need at least 3 points");
    SlopeFit fit;
    for (const auto& [n, e] : points) {
        if (!(n > 0.0)) throw ParameterError("fit_decay_slope: sample sizes must be positive");
        if (!(e > 0.0)) return fit;  // exact recovery somewhere: slope undefined
    }
    const auto m = static_cast<double>(points.size());
    double mx = 0.0, my = 0.0;
    for (const auto& [n, e] : points) {
        mx += std::log(n);
        my += std::log(e);
    }
    mx /= m;
    my /= m;
    double sxx = 0.0, sxy = 0.0;
    for (const auto& [n, e] : points) {
        sxx += (std::log(n) - mx) * (std::log(n) - mx);
        sxy += (std::log(n) - mx) * (std::log(e) - my);
    }
    if (sxx == 0.0) throw ParameterError("fit_decay_slope: sample sizes must not all be equal");
    fit.slope = sxy / sxx;
    const double intercept = my - fit.slope * mx;
    double sse = 0.0;
    for (const auto& [n, e] : points) {
        const double r = std::log(e) - (intercept + fit.slope * std::log(n));
        sse += r * r;
    }
    fit.half_width = 2.0 * std::sqrt(sse / (m - 2.0) / sxx);
    fit.defined = true;
    return fit;
}

// Indices (0-based, ascending) of the k largest |z_i|; ties go to the lower index.
inline std::vector<Index> top_k_support(const VectorXd& z, Index k) {
    if (k < 1 || k > z.size()) throw ParameterError("top_k_support: need 1 <= k <= d");
    std::vector<Index> order(static_cast<std::size_t>(z.size()));
    std::iota(order.begin(), order.end(), Index{0});
    std::stable_sort(order.begin(), order.end(),
                     [&z](Index a, Index b) { return std::abs(z(a)) > std::abs(z(b)); });
    order.resize(static_cast<std::size_t>(k));
    std::sort(order.begin(), order.end());
    return order;
}

inline double median(std::vector<double> v) {
    if (v.empty()) return std::nan("");
    std::sort(v.begin(), v.end());
    const std::size_t h = v.size() / 2;
    return v.size() % 2 ? v[h] : 0.5 * (v[h - 1] + v[h]);
}

// ---------------------------------------------------------------------------
// Configuration

enum class ExperimentKind {
    error_decay,
    variable_selection,
    dithering,
    rademacher_worstcase,
    noisy_split,
    adapted_mixing,
    width_report
};

inline std::string to_string(ExperimentKind k) {
    switch (k) {
        case ExperimentKind::error_decay: return "error_decay";
        case ExperimentKind::variable_selection: return "variable_selection";
        case ExperimentKind::dithering: return "dithering";
        case ExperimentKind::rademacher_worstcase: return "rademacher_worstcase";
        case ExperimentKind::noisy_split: return "noisy_split";
        case ExperimentKind::adapted_mixing: return "adapted_mixing";
        case ExperimentKind::width_report: return "width_report";
    }
    return "unknown";
}

// How the hypothesis set is sized. `radius` wins; otherwise
// radius = radius_factor * ||beta_target|| (l1 norm for l1 balls, l2 otherwise).
struct SetSpec {
    std::string type = "l2_ball";  // l2_ball | l1_ball | full_space
    std::optional<double> radius;
    double radius_factor = 2.0;
};

struct ExperimentConfig {
    ExperimentKind experiment = ExperimentKind::error_decay;
    LatentDistribution dist;
    ObservationModel model = LinearModel{VectorXd::Ones(1), 0.0};
    MixingMatrix mixing = MixingMatrix::identity(1);
    SetSpec set;
    bool target_is_index = false;  // measure error against the index vector instead of the mismatch target
    std::vector<Index> n_grid;
    int trials = 1;
    std::uint64_t master_seed = 0;
    std::filesystem::path output_dir;
    SolverConfig solver;
    std::optional<std::uint64_t> n_mc;
    double dithering_c = 1.0;
    std::optional<double> dither_lambda;
    double perturbation = 0.0;  // adapted_mixing: relative spectral perturbation of A
    int threads = 1;
    nlohmann::json widths = nlohmann::json::array();  // width_report entries
    nlohmann::json raw;                               // the parsed file, echoed into summary.json
};

namespace detail {

using nlohmann::json;

template <class T>
T get_field(const json& j, const std::string& key, const std::string& path) {
    if (!j.contains(key)) throw ConfigError(path + "." + key, "missing");
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(path + "." + key, e.what());
    }
}

template <class T>
T get_or(const json& j, const std::string& key, T fallback, const std::string& path) {
    if (!j.contains(key)) return fallback;
    return get_field<T>(j, key, path);
}

inline VectorXd parse_vector(const json& j, const std::string& path) {
    if (!j.is_array()) throw ConfigError(path, "expected an array of numbers");
    VectorXd v(static_cast<Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i) {
        if (!j[i].is_number()) throw ConfigError(path, "expected an array of numbers");
        v(static_cast<Index>(i)) = j[i].get<double>();
    }
    return v;
}

inline VectorXd random_unit_vector(Index d, Index sparsity, SplitMix64& eng) {
    std::normal_distribution<double> nd(0.0, 1.0);
    VectorXd v = VectorXd::Zero(d);
    std::vector<Index> idx(static_cast<std::size_t>(d));
    std::iota(idx.begin(), idx.end(), Index{0});
    std::shuffle(idx.begin(), idx.end(), eng);
    for (Index i = 0; i < sparsity; ++i) v(idx[static_cast<std::size_t>(i)]) = nd(eng);
    return v / v.norm();
}

// Index vector: explicit array, {"type":"random_unit","sparsity":k} or
// {"type":"sparse","entries":[[k, value], ...]} with 1-based k.
inline VectorXd parse_index(const json& j, Index d, SplitMix64& eng, const std::string& path) {
    VectorXd v;
    if (j.is_array()) {
        v = parse_vector(j, path);
    } else if (j.is_object()) {
        const auto type = get_field<std::string>(j, "type", path);
        if (type == "random_unit") {
            const auto k = get_or<Index>(j, "sparsity", d, path);
            if (k < 1 || k > d) throw ConfigError(path + ".sparsity", "must lie in [1, d]");
            v = random_unit_vector(d, k, eng);
        } else if (type == "sparse") {
            v = VectorXd::Zero(d);
            for (const auto& e : get_field<json>(j, "entries", path)) {
                const auto k = e.at(0).get<Index>();
                if (k < 1 || k > d) throw ConfigError(path + ".entries", "index out of range");
                v(k - 1) = e.at(1).get<double>();
            }
        } else {
            throw ConfigError(path + ".type", "unknown index type '" + type + "'");
        }
    } else {
        throw ConfigError(path, "expected array or object");
    }
    if (v.size() != d) throw ConfigError(path, "length " + std::to_string(v.size()) + " differs from dim " + std::to_string(d));
    if (v.norm() == 0.0) throw ConfigError(path, "index vector is zero");
    return v;
}

inline OutputFn parse_output_fn(const json& j, const std::string& path) {
    const auto kind = j.is_string() ? j.get<std::string>() : get_field<std::string>(j, "kind", path);
    const double param = j.is_object() ? get_or<double>(j, "param", 0.0, path) : 0.0;
    if (kind == "sign") return OutputFn::sign();
    if (kind == "identity") return OutputFn::identity();
    if (kind == "identity_plus_gauss") return OutputFn::identity_plus_gauss(param);
    if (kind == "tanh") return OutputFn::tanh();
    if (kind == "abs") return OutputFn::abs();
    if (kind == "sign_with_flip") return OutputFn::sign_with_flip(param);
    throw ConfigError(path, "unknown output function '" + kind + "'");
}

inline MultiFn parse_multi_fn(const json& j, const std::string& path) {
    const auto kind = j.is_string() ? j.get<std::string>() : get_field<std::string>(j, "kind", path);
    MultiFn g;
    if (kind == "sum") g.kind = MultiKind::sum;
    else if (kind == "sum_of_signs") g.kind = MultiKind::sum_of_signs;
    else if (kind == "sign_of_sum") g.kind = MultiKind::sign_of_sum;
    else if (kind == "sign_first") g.kind = MultiKind::sign_first;
    else if (kind == "product") g.kind = MultiKind::product;
    else if (kind == "weighted") g.kind = MultiKind::weighted;
    else throw ConfigError(path, "unknown multi-index function '" + kind + "'");
    if (j.is_object()) {
        g.noise_sd = get_or<double>(j, "noise_sd", 0.0, path);
        if (j.contains("weights")) {
            const VectorXd w = parse_vector(j.at("weights"), path + ".weights");
            g.weights.assign(w.data(), w.data() + w.size());
        }
    }
    return g;
}

inline DistributionKind parse_dist_kind(const std::string& s, const std::string& path) {
    if (s == "gaussian") return DistributionKind::gaussian;
    if (s == "rademacher") return DistributionKind::rademacher;
    if (s == "uniform_scaled") return DistributionKind::uniform_scaled;
    throw ConfigError(path, "unknown distribution '" + s + "'");
}

inline ObservationModel parse_model(const json& j, const LatentDistribution& dist, SplitMix64& eng) {
    const std::string path = "model";
    const auto type = get_field<std::string>(j, "type", path);
    const Index d = dist.dim;
    auto index = [&]() { return parse_index(get_field<json>(j, "index", path), d, eng, path + ".index"); };
    if (type == "linear") return LinearModel{index(), get_or<double>(j, "noise_sd", 0.0, path)};
    if (type == "single_index") return SingleIndexModel{index(), parse_output_fn(get_field<json>(j, "g", path), path + ".g")};
    if (type == "dithered_one_bit") return DitheredOneBitModel{index(), get_or<double>(j, "delta", 1.0, path)};
    if (type == "logistic") return LogisticModel{index()};
    if (type == "multi_index") {
        const auto count = get_field<Index>(j, "count", path);
        if (count < 1 || count > d) throw ConfigError(path + ".count", "must lie in [1, d]");
        std::normal_distribution<double> nd(0.0, 1.0);
        MatrixXd raw(d, count);
        for (Index c = 0; c < count; ++c)
            for (Index r = 0; r < d; ++r) raw(r, c) = nd(eng);
        MatrixXd q = Eigen::HouseholderQR<MatrixXd>(raw).householderQ() * MatrixXd::Identity(d, count);
        return MultiIndexModel{q, parse_multi_fn(get_field<json>(j, "G", path), path + ".G")};
    }
    if (type == "variable_selection") {
        VariableSelectionModel m;
        m.dim = d;
        if (j.contains("active")) {
            for (const auto& k : j.at("active")) m.active.push_back(k.get<Index>() - 1);
        } else {
            const auto s = get_field<Index>(j, "active_count", path);
            if (s < 1 || s > d) throw ConfigError(path + ".active_count", "must lie in [1, d]");
            std::vector<Index> idx(static_cast<std::size_t>(d));
            std::iota(idx.begin(), idx.end(), Index{0});
            std::shuffle(idx.begin(), idx.end(), eng);
            m.active.assign(idx.begin(), idx.begin() + s);
        }
        std::sort(m.active.begin(), m.active.end());
        m.G = parse_multi_fn(get_field<json>(j, "G", path), path + ".G");
        return m;
    }
    if (type == "superimposed") {
        SuperimposedModel m;
        m.index = index();
        for (const auto& f : get_field<json>(j, "fns", path)) m.fns.push_back(parse_output_fn(f, path + ".fns"));
        m.block_kind = dist.kind;
        return m;
    }
    if (type == "noisy_split") {
        NoisySplitModel m;
        m.d1 = get_field<Index>(j, "d1", path);
        m.d2 = d - m.d1;
        if (m.d1 < 1 || m.d2 < 0) throw ConfigError(path + ".d1", "must lie in [1, dim]");
        m.G = parse_multi_fn(get_field<json>(j, "G", path), path + ".G");
        return m;
    }
    throw ConfigError(path + ".type", "unknown model type '" + type + "'");
}

inline MatrixXd gaussian_matrix(Index rows, Index cols, SplitMix64& eng) {
    std::normal_distribution<double> nd(0.0, 1.0);
    MatrixXd m(rows, cols);
    for (Index c = 0; c < cols; ++c)
        for (Index r = 0; r < rows; ++r) m(r, c) = nd(eng);
    return m;
}

// Mixing: {"type":"identity"}, {"type":"explicit","rows":[[...]]},
// {"type":"random_spd"} (A from the isotropic decomposition of a random SPD
// matrix), {"type":"random_gaussian","p":p} (entries N(0, 1/p)), or
// {"type":"signal_plus_noise","noise_scale":c} = [A_v, c I] for noisy splits.
inline MixingMatrix parse_mixing(const json& j, const LatentDistribution& dist, const ObservationModel& model,
                                 SplitMix64& eng) {
    const std::string path = "mixing";
    const Index d = dist.dim;
    const auto type = j.is_null() ? std::string("identity") : get_field<std::string>(j, "type", path);
    if (type == "identity") return MixingMatrix::identity(d);
    if (type == "explicit") {
        const auto rows = get_field<json>(j, "rows", path);
        MatrixXd a(static_cast<Index>(rows.size()), d);
        for (std::size_t r = 0; r < rows.size(); ++r) {
            const VectorXd row = parse_vector(rows[r], path + ".rows");
            if (row.size() != d) throw ConfigError(path + ".rows", "row length differs from dim");
            a.row(static_cast<Index>(r)) = row.transpose();
        }
        return MixingMatrix::from_entries(std::move(a));
    }
    if (type == "random_spd") {
        const MatrixXd g = gaussian_matrix(d, d, eng);
        const MatrixXd sigma = g * g.transpose() / static_cast<double>(d) + 0.5 * MatrixXd::Identity(d, d);
        return isotropic_decomposition(sigma, d);
    }
    if (type == "random_gaussian") {
        const auto p = get_or<Index>(j, "p", d, path);
        if (p < d) throw ConfigError(path + ".p", "must be >= dim");
        return MixingMatrix::from_entries(gaussian_matrix(p, d, eng) / std::sqrt(static_cast<double>(p)));
    }
    if (type == "signal_plus_noise") {
        const auto* split = std::get_if<NoisySplitModel>(&model);
        if (!split) throw ConfigError(path + ".type", "signal_plus_noise requires a noisy_split model");
        const Index p = split->d2;
        if (p < split->d1) throw ConfigError(path, "signal_plus_noise needs d2 >= d1");
        const double c = get_or<double>(j, "noise_scale", 0.3, path);
        MatrixXd a(p, d);
        a.leftCols(split->d1) = gaussian_matrix(p, split->d1, eng) / std::sqrt(static_cast<double>(split->d1));
        a.rightCols(p) = c * MatrixXd::Identity(p, p);
        return MixingMatrix::from_entries(std::move(a));
    }
    throw ConfigError(path + ".type", "unknown mixing type '" + type + "'");
}

inline ExperimentKind parse_kind(const std::string& s) {
    for (auto k : {ExperimentKind::error_decay, ExperimentKind::variable_selection, ExperimentKind::dithering,
                   ExperimentKind::rademacher_worstcase, ExperimentKind::noisy_split, ExperimentKind::adapted_mixing,
                   ExperimentKind::width_report}) {
        if (to_string(k) == s) return k;
    }
    throw ConfigError("experiment", "unknown experiment '" + s + "'");
}

}  // namespace detail

inline ExperimentConfig parse_config(const nlohmann::json& j) {
    using detail::get_field;
    using detail::get_or;
    if (!j.is_object()) throw ConfigError("<root>", "config must be a JSON object");
    ExperimentConfig cfg;
    cfg.raw = j;
    cfg.experiment = detail::parse_kind(get_field<std::string>(j, "experiment", "<root>"));
    cfg.master_seed = get_or<std::uint64_t>(j, "master_seed", 0, "<root>");
    cfg.output_dir = get_or<std::string>(j, "output_dir", "", "<root>");
    cfg.threads = get_or<int>(j, "threads", 1, "<root>");
    if (cfg.threads < 1) throw ConfigError("threads", "must be >= 1");

    if (cfg.experiment == ExperimentKind::width_report) {
        cfg.widths = get_field<nlohmann::json>(j, "widths", "<root>");
        if (!cfg.widths.is_array()) throw ConfigError("widths", "expected an array");
        return cfg;
    }

    const auto dj = get_field<nlohmann::json>(j, "dist", "<root>");
    cfg.dist.kind = detail::parse_dist_kind(get_field<std::string>(dj, "kind", "dist"), "dist.kind");
    cfg.dist.dim = get_field<Index>(dj, "dim", "dist");
    if (cfg.dist.dim < 1) throw ConfigError("dist.dim", "must be >= 1");

    auto eng = substream(cfg.master_seed, Stream::model_setup);
    try {
        cfg.model = detail::parse_model(get_field<nlohmann::json>(j, "model", "<root>"), cfg.dist, eng);
        validate_model(cfg.model);
        cfg.mixing = detail::parse_mixing(j.contains("mixing") ? j.at("mixing") : nlohmann::json(), cfg.dist,
                                          cfg.model, eng);
    } catch (const std::invalid_argument& e) {
        throw ConfigError("model", e.what());
    }

    if (j.contains("hypothesis_set")) {
        const auto& hj = j.at("hypothesis_set");
        cfg.set.type = get_field<std::string>(hj, "type", "hypothesis_set");
        if (hj.contains("radius")) cfg.set.radius = get_field<double>(hj, "radius", "hypothesis_set");
        cfg.set.radius_factor = get_or<double>(hj, "radius_factor", cfg.set.type == "l1_ball" ? 1.0 : 2.0,
                                               "hypothesis_set");
        if (cfg.set.type != "l2_ball" && cfg.set.type != "l1_ball" && cfg.set.type != "full_space") {
            throw ConfigError("hypothesis_set.type", "expected l2_ball, l1_ball or full_space");
        }
        if (cfg.set.radius && !(*cfg.set.radius > 0.0)) throw ConfigError("hypothesis_set.radius", "must be > 0");
        if (!(cfg.set.radius_factor > 0.0)) throw ConfigError("hypothesis_set.radius_factor", "must be > 0");
    }
    if (j.contains("lambda")) cfg.set.radius = get_field<double>(j, "lambda", "<root>");

    const auto target = get_or<std::string>(j, "target", "mismatch", "<root>");
    if (target != "mismatch" && target != "index") throw ConfigError("target", "expected 'mismatch' or 'index'");
    cfg.target_is_index = target == "index";

    for (const auto& n : get_field<nlohmann::json>(j, "n_grid", "<root>")) cfg.n_grid.push_back(n.get<Index>());
    if (cfg.n_grid.empty()) throw ConfigError("n_grid", "must not be empty");
    for (std::size_t i = 0; i < cfg.n_grid.size(); ++i) {
        if (cfg.n_grid[i] < 1) throw ConfigError("n_grid", "sample sizes must be >= 1");
        if (i > 0 && cfg.n_grid[i] <= cfg.n_grid[i - 1]) throw ConfigError("n_grid", "must be strictly increasing");
    }
    cfg.trials = get_or<int>(j, "trials", 1, "<root>");
    if (cfg.trials < 1) throw ConfigError("trials", "must be >= 1");

    if (j.contains("solver")) {
        const auto& sj = j.at("solver");
        cfg.solver.max_iters = get_or<int>(sj, "max_iters", cfg.solver.max_iters, "solver");
        cfg.solver.rel_tol = get_or<double>(sj, "rel_tol", cfg.solver.rel_tol, "solver");
        try {
            cfg.solver.validate();
        } catch (const ParameterError& e) {
            throw ConfigError("solver", e.what());
        }
    }
    if (j.contains("n_mc")) cfg.n_mc = get_field<std::uint64_t>(j, "n_mc", "<root>");
    cfg.dithering_c = get_or<double>(j, "dithering_C", 1.0, "<root>");
    if (j.contains("dither_lambda")) cfg.dither_lambda = get_field<double>(j, "dither_lambda", "<root>");
    cfg.perturbation = get_or<double>(j, "perturbation", 0.0, "<root>");

    switch (cfg.experiment) {
        case ExperimentKind::variable_selection:
            if (!std::holds_alternative<VariableSelectionModel>(cfg.model))
                throw ConfigError("model.type", "variable_selection needs a variable_selection model");
            break;
        case ExperimentKind::dithering:
            if (!std::holds_alternative<DitheredOneBitModel>(cfg.model))
                throw ConfigError("model.type", "dithering needs a dithered_one_bit model");
            break;
        case ExperimentKind::rademacher_worstcase:
            if (cfg.dist.kind != DistributionKind::rademacher || !std::holds_alternative<SingleIndexModel>(cfg.model))
                throw ConfigError("model", "rademacher_worstcase needs rademacher latents and a single_index model");
            break;
        case ExperimentKind::noisy_split:
            if (!std::holds_alternative<NoisySplitModel>(cfg.model))
                throw ConfigError("model.type", "noisy_split needs a noisy_split model");
            break;
        case ExperimentKind::adapted_mixing:
            if (!(cfg.perturbation >= 0.0)) throw ConfigError("perturbation", "must be >= 0");
            break;
        default: break;
    }
    if (cfg.mixing.d() != cfg.dist.dim) throw ConfigError("mixing", "column count differs from dist.dim");
    return cfg;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config " + path.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("<root>", std::string("invalid JSON: ") + e.what());
    }
    return parse_config(j);
}

// ---------------------------------------------------------------------------
// Running

struct ResultRow {
    Index n = 0;
    int trial = 0;
    double error = 0.0;
    double rho_hat = 0.0;
    double dev_hat = 0.0;
    double objective = 0.0;
    bool converged = false;
    // Experiment-specific extras, aggregated into summary.json.
    double extra_a = 0.0;
    double extra_b = 0.0;
};

struct ExperimentResult {
    std::vector<ResultRow> rows;  // sorted by (n, trial)
    nlohmann::json summary;
};

inline std::string results_csv(const std::string& experiment, const std::vector<ResultRow>& rows) {
    std::ostringstream os;
    os << "experiment,n,trial,error,rho_hat,dev_hat,objective,converged\n";
    for (const auto& r : rows) {
        os << experiment << ',' << r.n << ',' << r.trial << ',' << format_double(r.error) << ','
           << format_double(r.rho_hat) << ',' << format_double(r.dev_hat) << ',' << format_double(r.objective) << ','
           << (r.converged ? 1 : 0) << '\n';
    }
    return os.str();
}

namespace detail {

// Everything about a run that does not depend on (n, trial).
struct Plan {
    TargetVector target;
    VectorXd beta_target;  // a preimage of the target under A^T
    HypothesisSet set = HypothesisSet::full_space();
    double lambda = 0.0;
    MatrixXd a_tilde;      // adapted_mixing
    VectorXd beta_natural; // adapted_mixing: (A_tilde^+)^T M^{-T} z
    MismatchDecomposition decomposition;
    double kappa = 1.0;
    double dither_lambda = 1.0;
    ObservationModel target_model;  // the model the target was built from
};

inline HypothesisSet make_set(const SetSpec& spec, const VectorXd& beta_target, double& lambda) {
    if (spec.type == "full_space") {
        lambda = 0.0;
        return HypothesisSet::full_space();
    }
    const bool l1 = spec.type == "l1_ball";
    const double norm = l1 ? beta_target.lpNorm<1>() : beta_target.norm();
    lambda = spec.radius ? *spec.radius : spec.radius_factor * norm;
    if (!(lambda > 0.0)) throw ConfigError("hypothesis_set", "radius resolves to zero; set it explicitly");
    return l1 ? HypothesisSet::l1_ball(lambda) : HypothesisSet::l2_ball(lambda);
}

inline Plan make_plan(const ExperimentConfig& cfg) {
    Plan plan;
    const TargetOptions topts{cfg.n_mc, derive_seed(cfg.master_seed, Stream::monte_carlo, 0)};
    plan.target_model = cfg.model;
    const MatrixXd& a = cfg.mixing.entries;

    if (cfg.experiment == ExperimentKind::dithering) {
        plan.kappa = subgaussian_constant(cfg.dist.kind);
        const VectorXd& idx = std::get<DitheredOneBitModel>(cfg.model).index;
        plan.dither_lambda = cfg.dither_lambda.value_or(idx.norm());
        if (plan.dither_lambda < idx.norm()) throw ConfigError("dither_lambda", "must be >= ||index||");
    }

    if (cfg.experiment == ExperimentKind::noisy_split) {
        const auto& m = std::get<NoisySplitModel>(cfg.model);
        const TargetVector signal = target_multi_index(cfg.model, cfg.dist, topts);
        const VectorXd z_v = signal.z.head(m.d1);
        const MatrixXd a_v = a.leftCols(m.d1);
        const MatrixXd a_n = a.rightCols(m.d2);
        // Size the set from the unconstrained noise-power solution, then redo it on K.
        NoisePowerTarget np = noise_power_target(a_v, a_n, HypothesisSet::full_space(), z_v);
        plan.set = make_set(cfg.set, np.beta, plan.lambda);
        if (!std::holds_alternative<FullSpace>(plan.set.variant())) np = noise_power_target(a_v, a_n, plan.set, z_v);
        plan.target = signal;
        plan.target.z.tail(m.d2) = np.z_noise;
        plan.beta_target = np.beta;
        plan.decomposition = mismatch_decomposition_exact(m, cfg.dist, plan.target.z);
        return plan;
    }

    ObservationModel& target_model = plan.target_model;
    if (cfg.experiment == ExperimentKind::dithering) {
        // Delta only grows with n, so the target at the smallest n is the one for every n.
        std::get<DitheredOneBitModel>(target_model).delta =
            dithering_scale(plan.kappa, plan.dither_lambda, cfg.n_grid.front(), cfg.dithering_c);
    }
    if (cfg.target_is_index) {
        plan.target.z = model_indices(cfg.model).col(0);
        plan.target.mu = {1.0};
        plan.target.family = TargetFamily::index;
    } else {
        plan.target = construct_target(target_model, cfg.dist, topts);
    }

    if (cfg.experiment == ExperimentKind::adapted_mixing) {
        // A_tilde = A + E with ||E||_op = perturbation * ||A||_op.
        auto eng = substream(cfg.master_seed, Stream::model_setup, 1);
        const MatrixXd e = gaussian_matrix(a.rows(), a.cols(), eng);
        const double scale = cfg.perturbation * a.operatorNorm() / e.operatorNorm();
        plan.a_tilde = a + scale * e;
        const MatrixXd pinv = full_rank_pseudo_inverse(plan.a_tilde);
        const MatrixXd m = pinv * a;
        plan.beta_natural = pinv.transpose() * m.transpose().fullPivLu().solve(plan.target.z);
        // K_tilde lives in w-space, where the target is M^{-T} z.
        const VectorXd w_target = m.transpose().fullPivLu().solve(plan.target.z);
        plan.set = make_set(cfg.set, w_target, plan.lambda);
        plan.beta_target = plan.beta_natural;
        return plan;
    }

    // Least-norm preimage of the target: A^T beta = z.
    plan.beta_target = a.transpose().completeOrthogonalDecomposition().solve(plan.target.z);
    plan.set = make_set(cfg.set, plan.beta_target, plan.lambda);
    return plan;
}

inline ResultRow run_cell(const ExperimentConfig& cfg, const Plan& plan, Index n, int trial) {
    const std::uint64_t seed = derive_seed(derive_seed(cfg.master_seed, Stream::experiment, static_cast<std::uint64_t>(n)),
                                           Stream::experiment, static_cast<std::uint64_t>(trial));
    ObservationModel model = cfg.model;
    double delta = 0.0;
    if (cfg.experiment == ExperimentKind::dithering) {
        delta = dithering_scale(plan.kappa, plan.dither_lambda, n, cfg.dithering_c);
        std::get<DitheredOneBitModel>(model).delta = delta;
    }
    const SampleSet data = generate_samples(cfg.dist, cfg.mixing, model, n, seed);

    SolverConfig scfg = cfg.solver;
    scfg.seed = seed;
    ResultRow row;
    row.n = n;
    row.trial = trial;

    FitResult fit;
    if (cfg.experiment == ExperimentKind::adapted_mixing) {
        fit = solve_adapted(data.inputs, data.outputs, plan.a_tilde, plan.set, scfg);
        row.extra_a = (fit.beta_hat - plan.beta_natural).norm();
    } else {
        fit = solve_klasso(data.inputs, data.outputs, plan.set, scfg);
    }
    // The error always uses the true A, also when the solver only knew A_tilde.
    pushforward_estimate(cfg.mixing, fit);
    const VectorXd& z_hat = *fit.z_hat;
    row.error = (z_hat - plan.target.z).norm();
    row.objective = fit.objective;
    row.converged = fit.converged;
    row.rho_hat = mismatch_covariance(data.latent, data.outputs, plan.target.z);
    row.dev_hat = n >= 100 ? mismatch_deviation(data.latent, data.outputs, plan.target.z)
                           : subgaussian_norm(data.outputs - data.latent * plan.target.z);

    switch (cfg.experiment) {
        case ExperimentKind::variable_selection: {
            const auto& vs = std::get<VariableSelectionModel>(cfg.model);
            const auto top = top_k_support(z_hat, static_cast<Index>(vs.active.size()));
            row.extra_a = top == vs.active ? 1.0 : 0.0;
            break;
        }
        case ExperimentKind::dithering:
            row.extra_a = row.rho_hat * std::sqrt(static_cast<double>(n)) / delta;
            row.extra_b = delta;
            break;
        case ExperimentKind::noisy_split: {
            const auto& m = std::get<NoisySplitModel>(cfg.model);
            VectorXd ideal = plan.target.z;
            ideal.tail(m.d2).setZero();
            row.extra_a = (z_hat - ideal).norm();
            row.extra_b = mismatch_decomposition_empirical(m, data.latent, data.outputs, plan.target.z).residual;
            break;
        }
        default: break;
    }
    return row;
}

}  // namespace detail

// Runs every (n, trial) cell and writes results.csv and summary.json into
// cfg.output_dir when it is non-empty. Cells may run on several threads; the
// rows are collected in (n, trial) order so the CSV is deterministic.
inline ExperimentResult run_experiment(const ExperimentConfig& cfg);

inline nlohmann::json width_report(const nlohmann::json& entries, std::uint64_t master_seed);

namespace detail {

inline void write_outputs(const ExperimentConfig& cfg, const ExperimentResult& res, bool with_csv) {
    if (cfg.output_dir.empty()) return;
    std::error_code ec;
    std::filesystem::create_directories(cfg.output_dir, ec);
    if (ec) throw IoError("cannot create output directory " + cfg.output_dir.string() + ": " + ec.message());
    if (with_csv) {
        std::ofstream csv(cfg.output_dir / "results.csv", std::ios::binary);
        if (!csv) throw IoError("cannot write " + (cfg.output_dir / "results.csv").string());
        csv << results_csv(to_string(cfg.experiment), res.rows);
        if (!csv) throw IoError("write failed for results.csv");
    }
    std::ofstream sum(cfg.output_dir / "summary.json", std::ios::binary);
    if (!sum) throw IoError("cannot write " + (cfg.output_dir / "summary.json").string());
    sum << res.summary.dump(2) << '\n';
    if (!sum) throw IoError("write failed for summary.json");
}

}  // namespace detail

inline ExperimentResult run_experiment(const ExperimentConfig& cfg) {
    ExperimentResult res;
    if (cfg.experiment == ExperimentKind::width_report) {
        res.summary = {{"experiment", "width_report"}, {"widths", width_report(cfg.widths, cfg.master_seed)}};
        detail::write_outputs(cfg, res, false);
        return res;
    }

    const detail::Plan plan = detail::make_plan(cfg);
    const std::size_t cells = cfg.n_grid.size() * static_cast<std::size_t>(cfg.trials);
    res.rows.resize(cells);
    auto work = [&](std::size_t begin, std::size_t stride) {
        for (std::size_t c = begin; c < cells; c += stride) {
            const Index n = cfg.n_grid[c / static_cast<std::size_t>(cfg.trials)];
            const int trial = static_cast<int>(c % static_cast<std::size_t>(cfg.trials));
            res.rows[c] = detail::run_cell(cfg, plan, n, trial);
        }
    };
    if (cfg.threads <= 1) {
        work(0, 1);
    } else {
        std::vector<std::jthread> pool;
        for (int t = 0; t < cfg.threads; ++t) pool.emplace_back(work, static_cast<std::size_t>(t), static_cast<std::size_t>(cfg.threads));
    }

    using nlohmann::json;
    json per_n = json::array();
    std::vector<std::pair<double, double>> points;
    for (std::size_t k = 0; k < cfg.n_grid.size(); ++k) {
        std::vector<double> err, rho, dev, ea, eb;
        int converged = 0;
        for (int t = 0; t < cfg.trials; ++t) {
            const auto& r = res.rows[k * static_cast<std::size_t>(cfg.trials) + static_cast<std::size_t>(t)];
            err.push_back(r.error);
            rho.push_back(r.rho_hat);
            dev.push_back(r.dev_hat);
            ea.push_back(r.extra_a);
            eb.push_back(r.extra_b);
            converged += r.converged ? 1 : 0;
        }
        const double n = static_cast<double>(cfg.n_grid[k]);
        json entry{{"n", cfg.n_grid[k]},
                   {"median_error", median(err)},
                   {"median_rho_hat", median(rho)},
                   {"median_dev_hat", median(dev)},
                   {"converged_fraction", static_cast<double>(converged) / cfg.trials}};
        switch (cfg.experiment) {
            case ExperimentKind::variable_selection:
                entry["support_recovery_rate"] = std::accumulate(ea.begin(), ea.end(), 0.0) / cfg.trials;
                break;
            case ExperimentKind::dithering:
                entry["median_scaled_rho"] = median(ea);
                entry["delta"] = eb.front();
                break;
            case ExperimentKind::noisy_split:
                entry["median_error_vs_ideal"] = median(ea);
                entry["median_decomposition_residual"] = median(eb);
                break;
            case ExperimentKind::adapted_mixing:
                entry["median_beta_error"] = median(ea);
                break;
            default: break;
        }
        per_n.push_back(entry);
        points.emplace_back(n, median(err));
    }

    json summary{{"experiment", to_string(cfg.experiment)},
                 {"master_seed", cfg.master_seed},
                 {"trials", cfg.trials},
                 {"lambda", plan.lambda},
                 {"hypothesis_set", plan.set.name()},
                 {"target", to_json(plan.target)},
                 {"per_n", per_n}};
    if (points.size() >= 3) {
        const SlopeFit fit = fit_decay_slope(points);
        summary["slope"] = fit.defined ? json(fit.slope) : json(nullptr);
        summary["slope_half_width"] = fit.defined ? json(fit.half_width) : json(nullptr);
        summary["slope_defined"] = fit.defined;
    }
    switch (cfg.experiment) {
        case ExperimentKind::rademacher_worstcase: {
            const VectorXd idx = model_indices(cfg.model).col(0);
            VectorXd e1 = VectorXd::Zero(idx.size());
            e1(0) = 1.0;
            summary["rho_exact_pair"] = {mismatch_covariance_exact(cfg.model, cfg.dist, e1),
                                         mismatch_covariance_exact(cfg.model, cfg.dist, idx)};
            break;
        }
        case ExperimentKind::dithering:
            summary["kappa"] = plan.kappa;
            summary["dither_lambda"] = plan.dither_lambda;
            summary["dithering_C"] = cfg.dithering_c;
            break;
        case ExperimentKind::noisy_split:
            summary["decomposition"] = to_json(plan.decomposition);
            break;
        case ExperimentKind::adapted_mixing:
            summary["perturbation"] = cfg.perturbation;
            summary["beta_natural"] = to_json_vector(plan.beta_natural);
            break;
        default: break;
    }
    try {
        summary["rho_exact"] = mismatch_covariance_exact(plan.target_model, cfg.dist, plan.target.z);
    } catch (const UnsupportedError&) {
        summary["rho_exact"] = nullptr;
    }
    res.summary = std::move(summary);
    detail::write_outputs(cfg, res, true);
    return res;
}

// Entries: {"set": {...}, "dim": d, "n_mc": m} for global widths,
// {"conic_l1": {"d": d, "s": s}} for the l1 descent-cone bound.
// Set objects: {"type": "l2_ball"|"l1_ball", "radius": r}.
inline nlohmann::json width_report(const nlohmann::json& entries, std::uint64_t master_seed) {
    using nlohmann::json;
    json out = json::array();
    std::uint64_t k = 0;
    for (const auto& e : entries) {
        const std::string path = "widths[" + std::to_string(k) + "]";
        if (e.contains("conic_l1")) {
            const auto& c = e.at("conic_l1");
            const auto d = detail::get_field<Index>(c, "d", path + ".conic_l1");
            const auto s = detail::get_field<Index>(c, "s", path + ".conic_l1");
            json item = to_json(conic_width_l1_descent(d, s));
            item["d"] = d;
            item["s"] = s;
            out.push_back(item);
        } else {
            const auto& sj = detail::get_field<json>(e, "set", path);
            const auto type = detail::get_field<std::string>(sj, "type", path + ".set");
            const double r = detail::get_or<double>(sj, "radius", 1.0, path + ".set");
            const auto d = detail::get_field<Index>(e, "dim", path);
            const auto n_mc = detail::get_or<std::uint64_t>(e, "n_mc", 10000, path);
            HypothesisSet set = type == "l1_ball"   ? HypothesisSet::l1_ball(r)
                                : type == "l2_ball" ? HypothesisSet::l2_ball(r)
                                                    : throw ConfigError(path + ".set.type", "expected l1_ball or l2_ball");
            json item = to_json(mean_width_global(set, d, n_mc, derive_seed(master_seed, Stream::width, k)));
            item["set"] = type;
            item["radius"] = r;
            item["dim"] = d;
            out.push_back(item);
        }
        ++k;
    }
    return out;
}

}  // namespace mismatch_lasso
