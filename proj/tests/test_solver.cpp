#include <gtest/gtest.h>

#include <cmath>

#include "mismatch_lasso/solver.hpp"

using namespace mismatch_lasso;

namespace {

MatrixXd gaussian_matrix(Index rows, Index cols, std::uint64_t seed) {
    auto eng = substream(seed, Stream::experiment);
    MatrixXd m(rows, cols);
    for (Index i = 0; i < m.size(); ++i) m.data()[i] = standard_normal(eng);
    return m;
}

}  // namespace

TEST(SpectralNorm, SimpleMatrices) {
    EXPECT_NEAR(spectral_norm(MatrixXd::Identity(4, 4)), 1.0, 1e-12);
    EXPECT_NEAR(spectral_norm(Eigen::Vector2d(3.0, 1.0).asDiagonal().toDenseMatrix()), 3.0, 1e-10);
    EXPECT_EQ(spectral_norm(MatrixXd::Zero(3, 2)), 0.0);
}

TEST(SpectralNorm, MatchesDenseSvd) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const MatrixXd x = gaussian_matrix(50, 20, seed);
        const double svd = Eigen::JacobiSVD<MatrixXd>(x).singularValues()(0);
        EXPECT_NEAR(spectral_norm(x, seed), svd, 1e-8 * svd);
    }
}

TEST(SolveKlasso, ZeroOutputs) {
    const MatrixXd x = gaussian_matrix(30, 5, 1);
    const auto fit = solve_klasso(x, VectorXd::Zero(30), HypothesisSet::l2_ball(1.0));
    EXPECT_EQ(fit.beta_hat.norm(), 0.0);
    EXPECT_EQ(fit.objective, 0.0);
    EXPECT_TRUE(fit.converged);
}

TEST(SolveKlasso, SymmetricL1Budget) {
    // (1/n) X^T X = I with n = 2.
    const MatrixXd x = std::sqrt(2.0) * MatrixXd::Identity(2, 2);
    const auto fit = solve_klasso(x, Eigen::Vector2d(1.0, 1.0), HypothesisSet::l1_ball(1.0));
    EXPECT_NEAR(fit.beta_hat(0), 0.5, 1e-8);
    EXPECT_NEAR(fit.beta_hat(1), 0.5, 1e-8);
}

TEST(SolveKlasso, InactiveBallMatchesNormalEquations) {
    const MatrixXd x = gaussian_matrix(200, 10, 2);
    const VectorXd y = gaussian_matrix(200, 1, 3).col(0);
    const VectorXd oracle = (x.transpose() * x).ldlt().solve(x.transpose() * y);
    const auto fit = solve_klasso(x, y, HypothesisSet::l2_ball(1e6));
    EXPECT_TRUE(fit.converged);
    EXPECT_LE((fit.beta_hat - oracle).norm(), 1e-6);
}

TEST(SolveKlasso, ObjectiveIsMonotone) {
    const MatrixXd x = gaussian_matrix(80, 30, 4);
    const VectorXd y = gaussian_matrix(80, 1, 5).col(0);
    SolverConfig cfg;
    cfg.record_trace = true;
    for (const auto& set : {HypothesisSet::l1_ball(0.7), HypothesisSet::l2_ball(0.5),
                            HypothesisSet::box(VectorXd::Constant(30, -0.1), VectorXd::Constant(30, 0.2))}) {
        const auto fit = solve_klasso(x, y, set, cfg);
        ASSERT_GE(fit.objective_trace.size(), 2u);
        for (std::size_t k = 1; k < fit.objective_trace.size(); ++k) {
            EXPECT_LE(fit.objective_trace[k], fit.objective_trace[k - 1] * (1 + 1e-15) + 1e-300) << set.name();
        }
    }
}

TEST(SolveKlasso, ResultInvariants) {
    const MatrixXd x = gaussian_matrix(60, 15, 6);
    const VectorXd y = gaussian_matrix(60, 1, 7).col(0);
    SolverConfig cfg;
    for (const auto& set : {HypothesisSet::l1_ball(0.4), HypothesisSet::l2_ball(0.3)}) {
        const auto fit = solve_klasso(x, y, set, cfg);
        EXPECT_TRUE(contains(set, fit.beta_hat, 1e-10)) << set.name();
        EXPECT_NEAR(fit.objective, (y - x * fit.beta_hat).squaredNorm() / 60.0, 1e-12);
        ASSERT_TRUE(fit.converged);
        EXPECT_LE(fit.fixed_point_residual, 10.0 * cfg.rel_tol * (1.0 + fit.beta_hat.norm())) << set.name();
    }
}

TEST(SolveKlasso, StartsFromProjectedOrigin) {
    // Box excluding the origin; one iteration keeps the iterate inside.
    const MatrixXd x = gaussian_matrix(20, 3, 8);
    const auto set = HypothesisSet::box(Eigen::Vector3d(1, 1, 1), Eigen::Vector3d(2, 2, 2));
    SolverConfig cfg;
    cfg.max_iters = 1;
    const auto fit = solve_klasso(x, VectorXd::Zero(20), set, cfg);
    EXPECT_TRUE(contains(set, fit.beta_hat));
    EXPECT_EQ(fit.iters, 1);
}

TEST(SolveKlasso, Errors) {
    const MatrixXd x = MatrixXd::Ones(4, 2);
    EXPECT_THROW(solve_klasso(x, VectorXd::Ones(3), HypothesisSet::l2_ball(1.0)), DimensionError);
    MatrixXd bad = x;
    bad(0, 0) = std::nan("");
    EXPECT_THROW(solve_klasso(bad, VectorXd::Ones(4), HypothesisSet::l2_ball(1.0)), ParameterError);
    const auto img = HypothesisSet::linear_image(MatrixXd::Identity(2, 2), HypothesisSet::l2_ball(1.0));
    EXPECT_THROW(solve_klasso(x, VectorXd::Ones(4), img), UnsupportedError);
    SolverConfig cfg;
    cfg.rel_tol = 0.0;
    EXPECT_THROW(solve_klasso(x, VectorXd::Ones(4), HypothesisSet::l2_ball(1.0), cfg), ParameterError);
    cfg = SolverConfig{};
    cfg.max_iters = 0;
    EXPECT_THROW(cfg.validate(), ParameterError);
}

TEST(PushforwardEstimate, Examples) {
    FitResult fit;
    fit.beta_hat = Eigen::Vector2d(1.0, 1.0);
    EXPECT_EQ(pushforward_estimate(MixingMatrix::identity(2), fit), fit.beta_hat);
    const auto a = MixingMatrix::from_entries(Eigen::Vector2d(2.0, 1.0).asDiagonal());
    const VectorXd z = pushforward_estimate(a, fit);
    EXPECT_EQ(z(0), 2.0);
    EXPECT_EQ(z(1), 1.0);
    ASSERT_TRUE(fit.z_hat.has_value());
    FitResult wrong;
    wrong.beta_hat = VectorXd::Ones(3);
    EXPECT_THROW(pushforward_estimate(a, wrong), DimensionError);
}

TEST(PushforwardEstimate, ObjectiveIdentity) {
    const auto a = MixingMatrix::from_entries(gaussian_matrix(7, 4, 9));
    const auto set = generate_samples({DistributionKind::gaussian, 4}, a,
                                      SingleIndexModel{Eigen::Vector4d(1, 0, 0, 0), OutputFn::tanh()}, 100, 9);
    auto fit = solve_klasso(set.inputs, set.outputs, HypothesisSet::l1_ball(1.0));
    const VectorXd z = pushforward_estimate(a, fit);
    const double via_latent = (set.outputs - set.latent * z).squaredNorm() / 100.0;
    EXPECT_NEAR(fit.objective, via_latent, 1e-10);
}

TEST(SolveAdapted, IdentityMatchesPlainSolve) {
    const MatrixXd x = gaussian_matrix(50, 6, 10);
    const VectorXd y = gaussian_matrix(50, 1, 11).col(0);
    const auto k = HypothesisSet::l1_ball(0.5);
    const auto plain = solve_klasso(x, y, k);
    const auto adapted = solve_adapted(x, y, MatrixXd::Identity(6, 6), k);
    EXPECT_LE((plain.beta_hat - adapted.beta_hat).norm(), 1e-12);
    EXPECT_LE((*adapted.z_hat - adapted.beta_hat).norm(), 1e-12);
}

TEST(SolveAdapted, RangeIdentity) {
    const MatrixXd a_tilde = gaussian_matrix(9, 4, 12);
    const auto a = MixingMatrix::from_entries(a_tilde);
    const auto set = generate_samples({DistributionKind::gaussian, 4}, a,
                                      SingleIndexModel{Eigen::Vector4d(0, 1, 0, 0), OutputFn::sign()}, 200, 12);
    const auto k = HypothesisSet::l2_ball(1.0);
    const auto fit = solve_adapted(set.inputs, set.outputs, a_tilde, k);
    // z_hat = A_tilde^T beta_hat equals the w-space solution.
    const MatrixXd pinv = full_rank_pseudo_inverse(a_tilde);
    const auto w = solve_klasso(set.inputs * pinv.transpose(), set.outputs, k);
    EXPECT_LE((*fit.z_hat - w.beta_hat).norm(), 1e-10);
}

TEST(SolveAdapted, ExactMixingRecoversNoiselessCoefficients) {
    const Index d = 8, p = 12, n = 10 * d;
    const MatrixXd a = gaussian_matrix(p, d, 13) / std::sqrt(static_cast<double>(p));
    const VectorXd z = Eigen::VectorXd::LinSpaced(d, -1.0, 1.0);
    const auto set = generate_samples({DistributionKind::gaussian, d}, MixingMatrix::from_entries(a),
                                      LinearModel{z, 0.0}, n, 13);
    const auto fit = solve_adapted(set.inputs, set.outputs, a, HypothesisSet::l2_ball(10.0));
    const VectorXd beta_nat = full_rank_pseudo_inverse(a).transpose() * z;
    EXPECT_LE((fit.beta_hat - beta_nat).norm(), 1e-4);
}

TEST(SolveAdapted, RankDeficientThrows) {
    MatrixXd a = MatrixXd::Zero(4, 2);
    a(0, 0) = 1.0;
    a(1, 0) = 1.0;
    EXPECT_THROW(solve_adapted(MatrixXd::Ones(5, 4), VectorXd::Ones(5), a, HypothesisSet::l2_ball(1.0)),
                 ParameterError);
}
