#include "oracles.hpp"

#include <collective/io.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

using namespace collective;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

TrajectoryDataset generate(const ModelDefinition& model, int M, int L, std::uint64_t seed, double noise = 0.0,
                           double derivative_noise = -1.0) {
  GenerateOptions g;
  g.M = M;
  g.times = uniform_times(model.T, L);
  g.integrator = default_integrator(model.kernels);
  g.seed = seed;
  g.noise_sigma = noise;
  g.derivative_noise_sigma = derivative_noise;
  return generate_dataset(model, g);
}

const KernelFunction zero_fn = KernelFunction::zero();

double relative_error(const std::function<double(double)>& est, const KernelFunction& truth, const EmpiricalRho& rho) {
  return kernel_error(est, truth, rho, true);
}

Outcome opinion_recovery() {
  const auto start = std::chrono::steady_clock::now();
  const auto model = catalog("opinion", {{"N", 20}, {"T", 10.0}, {"L", 100}});
  const auto ds = generate(model, 50, 100, 1);
  LearnConfig cfg;
  const double rmax = support_radii(ds)[0].r_max;
  cfg.knots = {0.0, std::sqrt(0.5), 1.0};
  if (rmax > 1.0) cfg.knots.push_back(rmax);
  const LearnResult res = learn_kernels(ds, cfg);
  const KernelEstimate& est = res.find(KernelRole::Energy, 0, 0);
  const double err = relative_error(est, model.kernels.energy[0], res.report.rho.front());

  const KernelSet learned = res.kernels(1, false);
  std::mt19937_64 rng(77);
  double future = 0.0;
  for (int m = 0; m < 10; ++m) {
    const Eigen::VectorXd x0 = oracle::random_vector(20, rng, 0.0, 2.0);
    const PredictionErrors pe = prediction_errors(model.spec, model.kernels, learned, x0, {}, 10.0, 100);
    future = std::max(future, pe.future.sup);
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return {err < 1e-3 && future < 1e-2 && secs < 60.0,
          "rel L2(rho) err " + fmt("%.3e", err) + ", future sup err " + fmt("%.3e", future) + ", " +
              fmt("%.1f", secs) + " s"};
}

Outcome convergence_rate() {
  const auto start = std::chrono::steady_clock::now();
  SweepConfig cfg;
  cfg.model = catalog("power_law", {{"theta", -1.0}});
  cfg.Ms = {8, 16, 32, 64, 128, 256, 512};
  cfg.trials = 20;
  cfg.seed = 1;
  cfg.learn.smoothness = 1.0;
  const SweepResult res = convergence_sweep(cfg);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return {res.slope >= -0.6 && res.slope <= -0.15 && secs < 600.0,
          "slope " + fmt("%.4f", res.slope) + " over M = 8..512, " + fmt("%.1f", secs) + " s"};
}

Outcome oracle_equivalence() {
  // two agents: each snapshot reports phi(r) = 2 <v_1, x_2 - x_1> / r^2, and
  // the loss weighs it by r^2 / 4 per agent
  const auto model = catalog("power_law", {{"N", 2}, {"theta", -1.0}});
  const auto ds = generate(model, 6, 20, 3);
  const Radii rr = support_radii(ds)[0];
  LearnConfig cfg;
  cfg.family = BasisFamily::PiecewiseLinear;
  cfg.n = 6;
  const LearnResult res = learn_kernels(ds, cfg);
  const KernelEstimate& est = res.estimates.front();
  const std::vector<double> breaks = est.space.breakpoints();

  const int S = static_cast<int>(ds.positions.cols());
  const int n = 6;
  Eigen::MatrixXd W(S, n);
  Eigen::VectorXd y(S);
  for (int s = 0; s < S; ++s) {
    const Eigen::Vector2d dx = ds.positions.col(s).segment<2>(2) - ds.positions.col(s).head<2>();
    const double r = dx.norm();
    const double psi = 2.0 * ds.velocities->col(s).head<2>().dot(dx) / (r * r);
    const auto b = oracle::basis_values(breaks, 1, r);
    for (int k = 0; k < n; ++k) W(s, k) = r * b[k];
    y[s] = r * psi;
  }
  const Eigen::VectorXd alpha = W.colPivHouseholderQr().solve(y);
  double worst = 0.0;
  for (int q = 0; q <= 200; ++q) {
    const double r = rr.r_min + (rr.r_max - rr.r_min) * q / 200.0;
    const auto b = oracle::basis_values(breaks, 1, r);
    double want = 0.0;
    for (int k = 0; k < n; ++k) want += alpha[k] * b[k];
    worst = std::max(worst, std::abs(est(r) - want));
  }
  return {worst <= 1e-8, "max deviation " + fmt("%.3e", worst) + " at 201 points"};
}

Outcome assembly_determinism() {
  std::mt19937_64 rng(2024);
  const std::vector<std::string> names = {"opinion", "power_law", "predator_prey", "fwep", "constant"};
  double worst = 0.0, worst_sym = 0.0, min_eig = 0.0;
  int count = 0;
  for (int k = 0; k < 20; ++k) {
    const std::string& name = names[k % names.size()];
    std::map<std::string, double> params;
    if (name == "predator_prey") params = {{"N1", 5}, {"N2", 2}};
    if (name == "fwep") params = {{"N", 6}};
    if (name == "opinion") params = {{"N", 8}, {"L", 30}};
    const auto model = catalog(name, params);
    const auto ds = generate(model, 2 + static_cast<int>(rng() % 4), 8 + static_cast<int>(rng() % 12), rng());
    const auto radii = support_radii(ds);
    const int K = model.spec.partition.types();
    const BasisFamily fam = static_cast<BasisFamily>(rng() % 3);
    const int n = 3 + static_cast<int>(rng() % 6);
    std::vector<KernelBlock> blocks;
    const int roles = model.spec.order == SystemOrder::Second ? 2 : 1;
    for (int role = 0; role < roles; ++role)
      for (int k1 = 0; k1 < K; ++k1)
        for (int k2 = 0; k2 < K; ++k2) {
          const Radii& r = radii[k1 * K + k2];
          blocks.push_back({role == 0 ? KernelRole::Energy : KernelRole::Alignment, k1, k2,
                            HypothesisSpace::uniform(0.0, r.r_max * 1.01, n, fam, fam == BasisFamily::BSpline ? 2 : -1)});
        }
    AssemblyOptions serial, parallel;
    serial.threads = 1;
    parallel.threads = 4;
    const NormalSystem a = assemble_normal_system(ds, blocks, serial);
    const NormalSystem b = assemble_normal_system(ds, blocks, parallel);
    worst = std::max({worst, (a.A - b.A).cwiseAbs().maxCoeff(), (a.b - b.b).cwiseAbs().maxCoeff()});
    worst_sym = std::max(worst_sym, (a.A - a.A.transpose()).cwiseAbs().maxCoeff());
    const double lmin = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(a.A).eigenvalues().minCoeff();
    min_eig = std::min(min_eig, lmin / std::max(1e-300, a.A.cwiseAbs().maxCoeff()));
    ++count;
  }
  return {worst <= 1e-12 && worst_sym <= 1e-12 && min_eig >= -1e-12,
          std::to_string(count) + " datasets, max serial/parallel diff " + fmt("%.1e", worst) + ", asymmetry " +
              fmt("%.1e", worst_sym) + ", min scaled eigenvalue " + fmt("%.1e", min_eig)};
}

Outcome analytic_dynamics() {
  const auto spec = SystemSpec::first_order(8, 2);
  const KernelSet ks = KernelSet::single(KernelFunction::constant(1.0));
  std::mt19937_64 rng(5);
  const Eigen::VectorXd x0 = oracle::random_vector(16, rng, 0.0, 1.0);
  const Eigen::VectorXd t = uniform_times(3.0, 31);
  IntegratorConfig tight;
  tight.abs_tol = tight.rel_tol = 1e-11;
  const Trajectory tr = integrate(spec, ks, x0, {}, t, tight);
  Eigen::Vector2d bar = Eigen::Vector2d::Zero();
  for (int i = 0; i < 8; ++i) bar += x0.segment<2>(2 * i) / 8.0;
  double err = 0.0, com = 0.0;
  for (int l = 0; l < t.size(); ++l) {
    Eigen::Vector2d c = Eigen::Vector2d::Zero();
    for (int i = 0; i < 8; ++i) {
      const Eigen::Vector2d want = bar + std::exp(-t[l]) * (x0.segment<2>(2 * i) - bar);
      err = std::max(err, (tr.positions.col(l).segment<2>(2 * i) - want).cwiseAbs().maxCoeff());
      c += tr.positions.col(l).segment<2>(2 * i) / 8.0;
    }
    com = std::max(com, (c - bar).cwiseAbs().maxCoeff());
  }

  const KernelSet smooth = KernelSet::single(fwep_kernels().alignment[0]);
  const auto s4 = SystemSpec::first_order(5, 2);
  const Eigen::VectorXd y0 = oracle::random_vector(10, rng, -2.0, 2.0);
  const Eigen::VectorXd tt = uniform_times(1.0, 3);
  IntegratorConfig ref;
  ref.abs_tol = ref.rel_tol = 1e-14;
  const Eigen::MatrixXd exact = integrate(s4, smooth, y0, {}, tt, ref).positions;
  IntegratorConfig rk;
  rk.method = IntegratorMethod::RK4Fixed;
  rk.step = 0.1;
  const double e1 = (integrate(s4, smooth, y0, {}, tt, rk).positions - exact).cwiseAbs().maxCoeff();
  rk.step = 0.05;
  const double e2 = (integrate(s4, smooth, y0, {}, tt, rk).positions - exact).cwiseAbs().maxCoeff();
  const double ratio = e1 / e2;
  return {err <= 1e-8 && com <= 1e-12 && ratio >= 12.0 && ratio <= 20.0,
          "closed-form err " + fmt("%.2e", err) + ", centre-of-mass drift " + fmt("%.2e", com) + ", RK4 ratio " +
              fmt("%.2f", ratio)};
}

Outcome gp_reproduction() {
  const auto start = std::chrono::steady_clock::now();
  const auto model = catalog("fwep", {{"N", 20}, {"L", 6}});
  // states exact, accelerations observed with noise
  const auto ds = generate(model, 3, 6, 11, 0.0, 0.01);
  auto problem = std::make_shared<const GPProblem>(ds);
  GPConfig init = default_gp_config(ds);
  TrainOptions opts;
  opts.restarts = 2;
  opts.max_evaluations = 250;
  opts.seed = 3;
  const TrainResult trained = train(*problem, init, {}, opts);
  const GPPosterior post = GPPosterior::fit(problem, trained.config);

  RhoOptions ro;
  ro.bins = 50;
  const EmpiricalRho rho = estimate_rho(ds, ro);
  std::vector<double> grid;
  for (int b = 0; b < rho.bins(); ++b)
    if (rho.weights[b] > 0.0) grid.push_back(rho.midpoint(b));
  const Eigen::VectorXd r = Eigen::Map<Eigen::VectorXd>(grid.data(), static_cast<Eigen::Index>(grid.size()));
  std::string detail;
  bool pass = true;
  for (KernelRole role : {KernelRole::Energy, KernelRole::Alignment}) {
    const KernelPrediction pred = post.predict(role, r);
    const KernelFunction& truth = model.kernels.get(role, 0, 0);
    int inside = 0;
    for (Eigen::Index q = 0; q < r.size(); ++q)
      if (std::abs(pred.mean[q] - truth(r[q])) <= 2.0 * std::sqrt(pred.variance[q])) ++inside;
    const double frac = static_cast<double>(inside) / static_cast<double>(r.size());
    pass = pass && frac >= 0.9;
    detail += to_string(role) + " coverage " + fmt("%.3f", frac) + ", ";
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  pass = pass && secs < 300.0;
  return {pass, detail + std::to_string(r.size()) + " grid points, " + fmt("%.1f", secs) + " s"};
}

Outcome representer() {
  const auto model = catalog("fwep", {{"N", 3}});
  double worst = 0.0, control = 1e300;
  for (std::uint64_t seed : {1, 2, 3}) {
    const auto ds = generate(model, 2, 2, seed);
    GPConfig cfg;
    cfg.energy = {CovarianceFamily::Matern52, 1.0, 0.8};
    cfg.alignment = {CovarianceFamily::SquaredExponential, 0.5, 1.2};
    cfg.noise_variance = 1e-2;
    worst = std::max(worst, representer_check(ds, cfg, 1e-2, 5e-3).max_discrepancy);
    control = std::min(control, representer_check(ds, cfg, 1e-2, 5e-3, std::nullopt, false).max_discrepancy);
  }
  return {worst <= 1e-8 && control > 1e-3,
          "max discrepancy " + fmt("%.2e", worst) + ", mis-scaled control " + fmt("%.2e", control)};
}

Outcome mpls() {
  std::mt19937_64 rng(8);
  const Eigen::VectorXd beta = oracle::random_vector(14, rng);
  std::vector<FeatureSample> lin;
  for (int q = 0; q < 400; ++q) {
    const Eigen::VectorXd z = pairwise_feature_map(oracle::random_vector(2, rng), oracle::random_vector(2, rng));
    lin.push_back({z, beta.dot(z)});
  }
  MplsOptions o;
  o.seed = 1;
  const ReductionMap a = mpls_reduce(lin, o);
  const double angle_lin = std::acos(std::min(1.0, (a.B * beta.normalized()).norm())) * 180.0 / 3.14159265358979323846;

  std::normal_distribution<double> gauss;
  const Eigen::VectorXd index = oracle::random_vector(5, rng).normalized();
  std::vector<FeatureSample> quad;
  for (int q = 0; q < 4000; ++q) {
    const Eigen::VectorXd z = Eigen::VectorXd::NullaryExpr(5, [&] { return gauss(rng); });
    quad.push_back({z, std::pow(index.dot(z), 2)});
  }
  o.centers = 50;
  const ReductionMap b = mpls_reduce(quad, o);
  const double angle_quad = std::acos(std::min(1.0, std::abs(b.B.row(0).dot(index)))) * 180.0 / 3.14159265358979323846;
  return {a.P_hat.norm() < 1e-6 && angle_lin < 1.0 && angle_quad < 5.0,
          "linear |P| " + fmt("%.1e", a.P_hat.norm()) + ", angle " + fmt("%.2e", angle_lin) +
              " deg; single-index angle " + fmt("%.2f", angle_quad) + " deg"};
}

Outcome measure() {
  double worst_sum = 0.0;
  double min_coercivity = 1e300;
  std::string weakest;
  for (const auto& name : catalog_names()) {
    std::map<std::string, double> params;
    int M = 20;
    if (name == "predator_prey") params = {{"N1", 9}, {"N2", 1}, {"L", 40}};
    if (name == "fwep") params = {{"N", 8}};
    if (name == "opinion") params = {{"N", 10}, {"L", 40}};
    const auto model = catalog(name, params);
    const auto ds = generate(model, M, model.L, 17);
    RhoOptions ro;
    ro.bins = 100;
    worst_sum = std::max(worst_sum, std::abs(estimate_rho(ds, ro).weights.sum() - 1.0));
    for (const auto& r : estimate_rho_per_type(ds, ro))
      if (r.bins() > 0) worst_sum = std::max(worst_sum, std::abs(r.weights.sum() - 1.0));
    LearnConfig cfg;
    cfg.n = 3;
    const LearnResult res = learn_kernels(ds, cfg);
    const double c = res.report.coercivity.value_or(-1.0);
    if (c < min_coercivity) {
      min_coercivity = c;
      weakest = name;
    }
  }

  std::mt19937_64 rng(31);
  const auto ds = generate(catalog("opinion", {{"N", 10}, {"L", 20}}), 3, 20, 5);
  const EmpiricalRho rho = estimate_rho(ds);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  double axiom = 0.0;
  for (int k = 0; k < 1000; ++k) {
    const double a = u(rng), b = u(rng), c = u(rng), e = u(rng);
    const auto f = [=](double r) { return a * std::cos(r) + b; };
    const auto g = [=](double r) { return c * r * r; };
    const auto h = [=](double r) { return r < std::abs(e) ? e : 0.0; };
    axiom = std::max(axiom, l2rho_distance(f, f, rho));
    axiom = std::max(axiom, std::abs(l2rho_distance(f, g, rho) - l2rho_distance(g, f, rho)));
    axiom = std::max(axiom, l2rho_distance(f, h, rho) - l2rho_distance(f, g, rho) - l2rho_distance(g, h, rho));
    axiom = std::max(axiom, -l2rho_distance(f, g, rho));
  }
  return {worst_sum <= 1e-12 && axiom <= 1e-12 && min_coercivity > 0.0,
          "max |sum rho - 1| " + fmt("%.1e", worst_sum) + ", axiom violation " + fmt("%.1e", axiom) +
              ", min coercivity " + fmt("%.3e", min_coercivity) + " (" + weakest + ")"};
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

Outcome round_trip() {
  const fs::path root = fs::temp_directory_path() / "collective_acceptance_io";
  fs::remove_all(root);
  bool ok = true;
  int files = 0;
  for (const auto& name : catalog_names()) {
    std::map<std::string, double> params;
    if (name == "predator_prey") params = {{"N1", 4}, {"N2", 2}};
    if (name == "fwep") params = {{"N", 4}, {"friction", 0.1}};
    const auto model = catalog(name, params);
    const auto ds = generate(model, 2, 5, 9, 0.01);
    write_dataset(ds, root / name / "a");
    const TrajectoryDataset back = read_dataset(root / name / "a");
    ok = ok && back.positions == ds.positions && back.times == ds.times && *back.velocities == *ds.velocities;
    if (ds.accelerations) ok = ok && *back.accelerations == *ds.accelerations;
    write_dataset(generate(model, 2, 5, 9, 0.01), root / name / "b");
    for (const auto& entry : fs::directory_iterator(root / name / "a")) {
      ok = ok && slurp(entry.path()) == slurp(root / name / "b" / entry.path().filename());
      ++files;
    }

    LearnConfig cfg;
    cfg.family = BasisFamily::BSpline;
    cfg.n = 5;
    cfg.coercivity = false;
    for (const auto& est : learn_kernels(ds, cfg).estimates) {
      const fs::path p = root / name / "estimate.json";
      write_json(to_json(est), p);
      const KernelEstimate back_est = kernel_estimate_from_json(read_json(p));
      ok = ok && back_est.alpha == est.alpha && back_est.space.breakpoints() == est.space.breakpoints();
    }
  }
  fs::remove_all(root);
  return {ok, std::to_string(files) + " files compared byte for byte across identical seeds"};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"opinion dynamics recovery", opinion_recovery},
      {"convergence rate", convergence_rate},
      {"two-agent oracle equivalence", oracle_equivalence},
      {"assembly determinism", assembly_determinism},
      {"analytic dynamics", analytic_dynamics},
      {"GP band coverage", gp_reproduction},
      {"representer theorem", representer},
      {"MPLS subspace recovery", mpls},
      {"measure properties", measure},
      {"round-trip I/O", round_trip},
  };
  int failed = 0;
  for (std::size_t k = 0; k < criteria.size(); ++k) {
    Outcome o;
    try {
      o = criteria[k].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.pass) ++failed;
    std::cout << "criterion " << k + 1 << " [" << criteria[k].first << "]: " << (o.pass ? "PASS" : "FAIL") << " ("
              << o.detail << ")" << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
