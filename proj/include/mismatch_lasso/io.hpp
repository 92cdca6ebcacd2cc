#pragma once

// JSON and CSV encodings of the library's result types.

#include <Eigen/Dense>
#include <json.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "errors.hpp"
#include "geometry.hpp"
#include "mismatch.hpp"
#include "model_gen.hpp"
#include "solver.hpp"

namespace mismatch_lasso {

using json = nlohmann::json;

// Shortest decimal text that parses back to the same double.
inline std::string format_double(double v) {
    char buf[32];
    for (int prec = 15; prec <= 17; ++prec) {
        std::snprintf(buf, sizeof buf, "%.*g", prec, v);
        if (std::strtod(buf, nullptr) == v) break;
    }
    return buf;
}

inline json to_json_vector(const VectorXd& v) {
    json out = json::array();
    for (Index i = 0; i < v.size(); ++i) out.push_back(v(i));
    return out;
}

inline VectorXd vector_from_json(const json& j) {
    VectorXd v(static_cast<Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Index>(i)) = j.at(i).get<double>();
    return v;
}

inline json to_json(const WidthEstimate& w) {
    return json{{"value", w.value}, {"stderr", w.stderr_}, {"n_mc", w.n_mc}, {"kind", to_string(w.kind)}};
}

inline json to_json(const FitResult& f) {
    json j{{"beta_hat", to_json_vector(f.beta_hat)},
           {"z_hat", f.z_hat ? to_json_vector(*f.z_hat) : json(nullptr)},
           {"objective", f.objective},
           {"iters", f.iters},
           {"converged", f.converged},
           {"fixed_point_residual", f.fixed_point_residual}};
    return j;
}

inline json to_json(const MismatchReport& r) {
    return json{{"rho_hat", r.rho_hat},
                {"rho_exact", r.rho_exact ? json(*r.rho_exact) : json(nullptr)},
                {"dev_hat", r.dev_hat},
                {"n_used", r.n_used},
                {"model_digest", r.model_digest}};
}

inline json to_json(const TargetVector& t) {
    json j{{"z", to_json_vector(t.z)}, {"mu", t.mu}, {"family", to_string(t.family)}, {"exact", t.exact}};
    if (!t.mu_stderr.empty()) j["mu_stderr"] = t.mu_stderr;
    return j;
}

inline json to_json(const MismatchDecomposition& m) {
    return json{{"rho_total", m.rho_total},
                {"rho_signal", m.rho_signal},
                {"noise_norm", m.noise_norm},
                {"residual", m.residual},
                {"exact", m.exact}};
}

// ---------------------------------------------------------------------------
// Sample sets: CSV with columns s_1..s_d, x_1..x_p, y plus a JSON manifest.

inline void write_sample_csv(std::ostream& os, const SampleSet& set) {
    const Index d = set.latent.cols();
    const Index p = set.inputs.cols();
    for (Index j = 0; j < d; ++j) os << (j ? "," : "") << "s_" << (j + 1);
    for (Index j = 0; j < p; ++j) os << ",x_" << (j + 1);
    os << ",y\n";
    for (Index i = 0; i < set.n(); ++i) {
        for (Index j = 0; j < d; ++j) os << (j ? "," : "") << format_double(set.latent(i, j));
        for (Index j = 0; j < p; ++j) os << ',' << format_double(set.inputs(i, j));
        os << ',' << format_double(set.outputs(i)) << '\n';
    }
}

inline json sample_manifest(const SampleSet& set, const std::string& csv_name) {
    return json{{"data", csv_name},
                {"seed", set.seed},
                {"n", set.n()},
                {"d", set.latent.cols()},
                {"p", set.inputs.cols()}};
}

// Writes <stem>.csv and <stem>.json into `dir`.
inline void save_sample_set(const SampleSet& set, const std::filesystem::path& dir, const std::string& stem) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    std::ofstream csv(dir / (stem + ".csv"));
    std::ofstream man(dir / (stem + ".json"));
    if (!csv || !man) throw IoError("cannot write sample set into " + dir.string());
    write_sample_csv(csv, set);
    man << sample_manifest(set, stem + ".csv").dump(2) << '\n';
    if (!csv || !man) throw IoError("write failed in " + dir.string());
}

inline SampleSet load_sample_set(const std::filesystem::path& manifest_path) {
    std::ifstream man(manifest_path);
    if (!man) throw IoError("cannot open " + manifest_path.string());
    json m;
    try {
        m = json::parse(man);
    } catch (const json::exception& e) {
        throw IoError(std::string("malformed manifest: ") + e.what());
    }
    const auto d = m.at("d").get<Index>();
    const auto p = m.at("p").get<Index>();
    const auto n = m.at("n").get<Index>();
    std::ifstream csv(manifest_path.parent_path() / m.at("data").get<std::string>());
    if (!csv) throw IoError("cannot open sample CSV next to " + manifest_path.string());

    SampleSet set;
    set.seed = m.at("seed").get<std::uint64_t>();
    set.latent.resize(n, d);
    set.inputs.resize(n, p);
    set.outputs.resize(n);
    std::string line;
    std::getline(csv, line);  // header
    for (Index i = 0; i < n; ++i) {
        if (!std::getline(csv, line)) throw IoError("sample CSV has fewer rows than the manifest");
        std::stringstream ss(line);
        std::string cell;
        auto next = [&]() {
            if (!std::getline(ss, cell, ',')) throw IoError("sample CSV row " + std::to_string(i + 1) + " is short");
            return std::strtod(cell.c_str(), nullptr);
        };
        for (Index j = 0; j < d; ++j) set.latent(i, j) = next();
        for (Index j = 0; j < p; ++j) set.inputs(i, j) = next();
        set.outputs(i) = next();
    }
    return set;
}

}  // namespace mismatch_lasso
