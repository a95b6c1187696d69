#include "oracles.hpp"

#include <collective/gp.hpp>

#include <doctest.h>

#include <numbers>

using namespace collective;

namespace {

TrajectoryDataset fwep_data(int M, int N, int L, std::uint64_t seed, double friction = 0.0) {
  const auto model = catalog("fwep", {{"N", N}, {"friction", friction}});
  GenerateOptions g;
  g.M = M;
  g.times = uniform_times(model.T, L);
  g.seed = seed;
  return generate_dataset(model, g);
}

// Ordered pairs (i, j), i != j; force on i is sum_j phi(r_ij) (x_j - x_i) / N.
struct DenseGP {
  Eigen::VectorXd r;
  Eigen::MatrixXd OE, OA;
  Eigen::VectorXd mZ;
};

DenseGP dense_gp(const TrajectoryDataset& ds) {
  const int N = ds.spec.N, d = ds.spec.d;
  const int S = static_cast<int>(ds.positions.cols());
  const int P = N * (N - 1);
  DenseGP g;
  g.r.resize(S * P);
  g.OE = Eigen::MatrixXd::Zero(S * N * d, S * P);
  g.OA = g.OE;
  g.mZ.resize(S * N * d);
  int col = 0;
  for (int s = 0; s < S; ++s) {
    const Eigen::VectorXd x = ds.positions.col(s), v = ds.velocities->col(s), a = ds.accelerations->col(s);
    for (int i = 0; i < N; ++i) {
      g.mZ.segment((s * N + i) * d, d) = ds.spec.masses[i] * a.segment(i * d, d);
      for (int j = 0; j < N; ++j) {
        if (j == i) continue;
        const Eigen::VectorXd dx = x.segment(j * d, d) - x.segment(i * d, d);
        g.r[col] = dx.norm();
        g.OE.block((s * N + i) * d, col, d, 1) = dx / N;
        g.OA.block((s * N + i) * d, col, d, 1) = (v.segment(j * d, d) - v.segment(i * d, d)) / N;
        ++col;
      }
    }
  }
  return g;
}

Eigen::MatrixXd gram(const CovarianceParams& k, const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  Eigen::MatrixXd K(a.size(), b.size());
  for (Eigen::Index p = 0; p < a.size(); ++p)
    for (Eigen::Index q = 0; q < b.size(); ++q) K(p, q) = k(a[p] - b[q]);
  return K;
}

Eigen::MatrixXd dense_covariance(const DenseGP& g, const GPConfig& cfg) {
  return g.OE * gram(cfg.energy, g.r, g.r) * g.OE.transpose() + g.OA * gram(cfg.alignment, g.r, g.r) * g.OA.transpose();
}

GPConfig config(CovarianceFamily f) {
  GPConfig cfg;
  cfg.energy = {f, 1.3, 0.7};
  cfg.alignment = {f, 0.6, 1.9};
  cfg.noise_variance = 1e-3;
  return cfg;
}

}  // namespace

TEST_CASE("covariance functions") {
  const CovarianceParams se{CovarianceFamily::SquaredExponential, 2.0, 0.5};
  CHECK(se(0.0) == 2.0);
  CHECK(se(0.5) == doctest::Approx(2.0 * std::exp(-0.5)));
  CHECK(se(-0.5) == se(0.5));
  const CovarianceParams m{CovarianceFamily::Matern52, 1.0, 2.0};
  const double a = std::sqrt(5.0) * 0.5;
  CHECK(m(1.0) == doctest::Approx((1.0 + a + a * a / 3.0) * std::exp(-a)));
  Eigen::ArrayXXd tau(1, 3);
  tau << 0.0, 1.0, -3.0;
  const Eigen::ArrayXXd v = m(tau);
  for (int k = 0; k < 3; ++k) CHECK(v(0, k) == doctest::Approx(m(tau(0, k))));
  CHECK(parse_covariance("se") == CovarianceFamily::SquaredExponential);
  CHECK(parse_covariance(to_string(CovarianceFamily::Matern52)) == CovarianceFamily::Matern52);
  CHECK_THROWS_AS(parse_covariance("rbf2"), ConfigError);
}

TEST_CASE("config validation") {
  GPConfig cfg;
  CHECK(cfg.violations().empty());
  cfg.energy.lengthscale = 0.0;
  cfg.noise_variance = -1.0;
  CHECK(cfg.violations().size() == 2);
  const auto ds = fwep_data(1, 3, 2, 1);
  CHECK_THROWS_AS(nlml(ds, cfg), ConfigError);
}

TEST_CASE("force covariance matches the ordered-pair oracle") {
  const auto ds = fwep_data(2, 4, 3, 5);
  const DenseGP g = dense_gp(ds);
  const GPProblem problem(ds);
  CHECK(problem.size() == 2 * 3 * 4 * 2);
  CHECK(problem.pair_count() == 6 * 6);
  CHECK((problem.response(ParametricForce{}) - g.mZ).cwiseAbs().maxCoeff() == 0.0);
  for (auto f : {CovarianceFamily::Matern52, CovarianceFamily::SquaredExponential}) {
    const GPConfig cfg = config(f);
    const Eigen::MatrixXd want = dense_covariance(g, cfg);
    const Eigen::MatrixXd got = problem.covariance(cfg);
    CHECK((got - want).cwiseAbs().maxCoeff() < 1e-12 * want.cwiseAbs().maxCoeff());
    CHECK((assemble_gp_covariance(ds, cfg) - got).cwiseAbs().maxCoeff() == 0.0);
    CHECK((got - got.transpose()).cwiseAbs().maxCoeff() == 0.0);
    Eigen::MatrixXd one = problem.covariance(cfg, 1);
    CHECK(one == got);
  }
}

TEST_CASE("force parameters enter the response linearly") {
  const auto ds = fwep_data(1, 3, 4, 2, 0.4);
  const GPProblem problem(ds);
  const ParametricForce f{true, 0.4, -0.2};
  const Eigen::VectorXd r = problem.response(f);
  const Eigen::MatrixXd B = problem.force_basis();
  CHECK((problem.response(ParametricForce{}) - r - B * Eigen::Vector2d(0.4, -0.2)).cwiseAbs().maxCoeff() < 1e-14);
  for (int s = 0; s < ds.snapshots(); ++s)
    for (int i = 0; i < 3; ++i) {
      const Eigen::VectorXd v = ds.velocities->col(s).segment(2 * i, 2);
      CHECK((B.block((s * 3 + i) * 2, 0, 2, 1) - v).isZero(0.0));
    }
}

TEST_CASE("negative log marginal likelihood matches the dense formula") {
  const auto ds = fwep_data(2, 3, 3, 7);
  const DenseGP g = dense_gp(ds);
  const GPConfig cfg = config(CovarianceFamily::Matern52);
  Eigen::MatrixXd C = dense_covariance(g, cfg);
  C.diagonal().array() += cfg.noise_variance;
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(C);
  const Eigen::VectorXd proj = es.eigenvectors().transpose() * g.mZ;
  const double quad = proj.cwiseAbs2().cwiseQuotient(es.eigenvalues()).sum();
  const double want = 0.5 * quad + 0.5 * es.eigenvalues().array().log().sum() +
                      0.5 * static_cast<double>(g.mZ.size()) * std::log(2.0 * std::numbers::pi);
  CHECK(nlml(ds, cfg) == doctest::Approx(want).epsilon(1e-9));
}

TEST_CASE("posterior matches the dense conditioning formulas") {
  const auto ds = fwep_data(2, 3, 3, 9);
  const DenseGP g = dense_gp(ds);
  const GPConfig cfg = config(CovarianceFamily::SquaredExponential);
  Eigen::MatrixXd C = dense_covariance(g, cfg);
  C.diagonal().array() += cfg.noise_variance;
  const Eigen::MatrixXd Cinv = C.inverse();
  const Eigen::VectorXd rstar = Eigen::VectorXd::LinSpaced(7, 0.0, 2.5);
  const GPPosterior post = GPPosterior::fit(ds, cfg);
  CHECK(post.jitter() == 0.0);
  for (KernelRole role : {KernelRole::Energy, KernelRole::Alignment}) {
    const auto& k = role == KernelRole::Energy ? cfg.energy : cfg.alignment;
    const auto& O = role == KernelRole::Energy ? g.OE : g.OA;
    const Eigen::MatrixXd Kc = gram(k, rstar, g.r) * O.transpose();
    const Eigen::VectorXd mean = Kc * Cinv * g.mZ;
    const Eigen::VectorXd var =
        (Eigen::VectorXd::Constant(7, k(0.0)) - (Kc * Cinv * Kc.transpose()).diagonal()).cwiseMax(0.0);
    const KernelPrediction pred = posterior_kernel(post, role, rstar);
    CHECK((pred.mean - mean).cwiseAbs().maxCoeff() < 1e-7 * std::max(1.0, mean.cwiseAbs().maxCoeff()));
    CHECK((pred.variance - var).cwiseAbs().maxCoeff() < 1e-7 * k(0.0));
    CHECK((pred.variance.array() >= 0.0).all());
  }
  CHECK_THROWS_AS(post.predict(KernelRole::Energy, Eigen::VectorXd::Constant(1, -1.0)), ConfigError);
  CHECK_THROWS_AS(GPPosterior().predict(KernelRole::Energy, rstar), StateError);
}

TEST_CASE("jitter escalation") {
  std::mt19937_64 rng(1);
  Eigen::MatrixXd R(4, 4);
  for (int k = 0; k < 4; ++k) R.col(k) = oracle::random_vector(4, rng);
  const Eigen::MatrixXd spd = R * R.transpose() + Eigen::MatrixXd::Identity(4, 4);
  CHECK(factorize_with_jitter(spd).jitter == 0.0);
  const Eigen::MatrixXd ones = Eigen::MatrixXd::Ones(5, 5);
  const Factorization f = factorize_with_jitter(ones);
  CHECK(f.jitter == doctest::Approx(1e-10));
  CHECK_THROWS_AS(factorize_with_jitter(-Eigen::MatrixXd::Identity(3, 3)), NumericalError);
}

TEST_CASE("problem preconditions") {
  const auto ds = fwep_data(3, 10, 6, 1);
  CHECK_THROWS_AS(GPProblem(ds, 100), ConfigError);
  const auto first = catalog("opinion", {{"N", 3}});
  GenerateOptions g;
  g.times = uniform_times(1.0, 3);
  CHECK_THROWS_AS(GPProblem(generate_dataset(first, g)), DataError);
}

TEST_CASE("training lowers the objective and is reproducible") {
  const auto ds = fwep_data(2, 4, 3, 3, 0.3);
  GPConfig init = default_gp_config(ds);
  init.force = ParametricForce{true, 0.0, 0.0};
  init.train_force = true;
  TrainOptions o;
  o.restarts = 2;
  o.max_evaluations = 150;
  o.seed = 4;
  const TrainResult a = train(ds, init, {}, o);
  const TrainResult b = train(ds, init, {}, o);
  CHECK(a.nlml == b.nlml);
  CHECK(a.nlml <= nlml(ds, init));
  CHECK(a.nlml == doctest::Approx(nlml(ds, a.config)).epsilon(1e-12));
  REQUIRE(a.trace.size() == 2);
  CHECK(a.trace[1] <= a.trace[0]);
  CHECK(a.evaluations <= 2 * 150);
  CHECK(std::abs(a.config.force.friction - 0.3) < 0.1);
  o.restarts = 0;
  CHECK_THROWS_AS(train(ds, init, {}, o), ConfigError);
}

TEST_CASE("representer route agrees with the scaled-prior posterior") {
  const auto ds = fwep_data(2, 3, 3, 6);
  const GPConfig cfg = config(CovarianceFamily::Matern52);
  const RepresenterResult res = representer_check(ds, cfg, 0.01, 0.02);
  const double scale = std::max(res.ridge_energy.cwiseAbs().maxCoeff(), res.ridge_alignment.cwiseAbs().maxCoeff());
  CHECK(res.grid.size() > 0);
  CHECK(res.max_discrepancy <= 1e-6 * std::max(1.0, scale));
  const RepresenterResult off = representer_check(ds, cfg, 0.01, 0.02, std::nullopt, false);
  CHECK(off.max_discrepancy > 1e-3);
  CHECK_THROWS_AS(representer_check(ds, cfg, 0.0, 1.0), ConfigError);
}
