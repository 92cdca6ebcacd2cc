#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "mismatch_lasso/io.hpp"

using namespace mismatch_lasso;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / ("mismatch_lasso_io_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

}  // namespace

TEST(FormatDouble, RoundTrips) {
    for (double v : {0.1, 1.0 / 3.0, -2.5e-300, 123456789.123456789, 0.0, std::sqrt(2.0)}) {
        EXPECT_EQ(std::strtod(format_double(v).c_str(), nullptr), v);
    }
    EXPECT_EQ(format_double(0.5), "0.5");
}

TEST(SampleCsv, HeaderAndShape) {
    const auto set = generate_samples({DistributionKind::gaussian, 2}, MixingMatrix::from_entries(MatrixXd::Ones(3, 2)),
                                      LinearModel{Eigen::Vector2d(1, 0), 0.0}, 4, 1);
    std::ostringstream os;
    write_sample_csv(os, set);
    std::istringstream is(os.str());
    std::string header;
    std::getline(is, header);
    EXPECT_EQ(header, "s_1,s_2,x_1,x_2,x_3,y");
    int rows = 0;
    for (std::string line; std::getline(is, line);) ++rows;
    EXPECT_EQ(rows, 4);
}

TEST(SampleSetFiles, RoundTripIsBitExact) {
    const auto dir = scratch_dir("roundtrip");
    const auto a = isotropic_decomposition((MatrixXd(2, 2) << 2.0, 0.3, 0.3, 1.0).finished());
    const auto set = generate_samples({DistributionKind::uniform_scaled, 2}, a,
                                      SingleIndexModel{Eigen::Vector2d(0.6, 0.8), OutputFn::tanh()}, 50, 42);
    save_sample_set(set, dir, "samples");
    const auto back = load_sample_set(dir / "samples.json");
    EXPECT_EQ(back.seed, 42u);
    EXPECT_EQ(back.latent, set.latent);
    EXPECT_EQ(back.inputs, set.inputs);
    EXPECT_EQ(back.outputs, set.outputs);

    std::ifstream man(dir / "samples.json");
    const auto j = json::parse(man);
    EXPECT_EQ(j.at("data"), "samples.csv");
    EXPECT_EQ(j.at("n"), 50);
    EXPECT_EQ(j.at("d"), 2);
    EXPECT_EQ(j.at("p"), 2);
}

TEST(SampleSetFiles, MissingOrShortFilesRaiseIoError) {
    const auto dir = scratch_dir("missing");
    EXPECT_THROW(load_sample_set(dir / "nope.json"), IoError);
    std::ofstream(dir / "m.json") << R"({"data":"m.csv","seed":1,"n":3,"d":1,"p":1})";
    std::ofstream(dir / "m.csv") << "s_1,x_1,y\n1,1,1\n";
    EXPECT_THROW(load_sample_set(dir / "m.json"), IoError);
    std::ofstream(dir / "bad.json") << "{not json";
    EXPECT_THROW(load_sample_set(dir / "bad.json"), IoError);
}

TEST(JsonEncodings, FieldNames) {
    const json w = to_json(WidthEstimate{1.5, 0.01, 100, WidthKind::conic_l1});
    EXPECT_EQ(w.at("value"), 1.5);
    EXPECT_EQ(w.at("stderr"), 0.01);
    EXPECT_EQ(w.at("n_mc"), 100);
    EXPECT_EQ(w.at("kind"), "conic_l1");

    FitResult fit;
    fit.beta_hat = Eigen::Vector2d(1, 2);
    fit.objective = 0.25;
    fit.iters = 7;
    fit.converged = true;
    fit.fixed_point_residual = 1e-12;
    json f = to_json(fit);
    for (const char* key : {"beta_hat", "z_hat", "objective", "iters", "converged", "fixed_point_residual"}) {
        EXPECT_TRUE(f.contains(key)) << key;
    }
    EXPECT_TRUE(f.at("z_hat").is_null());
    fit.z_hat = Eigen::Vector3d(1, 2, 3);
    EXPECT_EQ(to_json(fit).at("z_hat").size(), 3u);

    MismatchReport r;
    r.rho_hat = 0.1;
    r.dev_hat = 0.2;
    r.n_used = 1000;
    r.model_digest = "00ff";
    json rj = to_json(r);
    EXPECT_TRUE(rj.at("rho_exact").is_null());
    r.rho_exact = 0.05;
    rj = to_json(r);
    EXPECT_EQ(rj.at("rho_exact"), 0.05);
    for (const char* key : {"rho_hat", "rho_exact", "dev_hat", "n_used", "model_digest"}) {
        EXPECT_TRUE(rj.contains(key)) << key;
    }
}

TEST(JsonEncodings, VectorRoundTrip) {
    const VectorXd v = Eigen::Vector4d(0.1, -2.0, 1e-300, 3.0);
    EXPECT_EQ(vector_from_json(json::parse(to_json_vector(v).dump())), v);
}
