#include "collective/metrics.hpp"

#include <omp.h>

#include <cmath>
#include <exception>

namespace collective {

WindowError trajectory_error(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& truth,
                             const Eigen::VectorXd& pred_times, const Eigen::VectorXd& truth_times,
                             const TypePartition& partition, int d) {
  if (pred_times.size() != truth_times.size() ||
      (pred_times - truth_times).cwiseAbs().maxCoeff() > 1e-12 * std::max(1.0, truth_times.cwiseAbs().maxCoeff()))
    throw DataError("trajectory grids do not match");
  if (pred.rows() != truth.rows() || pred.cols() != truth.cols() || pred.cols() != truth_times.size())
    throw DataError("trajectory shapes do not match");
  if (pred.rows() != static_cast<Eigen::Index>(partition.agents()) * d)
    throw DataError("trajectory rows do not match N*d");
  const Eigen::VectorXd w = agent_weights(partition);
  WindowError out;
  if (pred.cols() == 0) return out;
  for (Eigen::Index l = 0; l < pred.cols(); ++l) {
    double s = 0.0;
    for (int i = 0; i < partition.agents(); ++i)
      s += w[i] * (pred.col(l).segment(i * d, d) - truth.col(l).segment(i * d, d)).squaredNorm();
    const double e = std::sqrt(s);
    out.sup = std::max(out.sup, e);
    out.mean += e;
  }
  out.mean /= static_cast<double>(pred.cols());
  return out;
}

PredictionErrors prediction_errors(const SystemSpec& spec, const KernelSet& truth, const KernelSet& learned,
                                   const Eigen::VectorXd& x0, const Eigen::VectorXd& v0, double T, int L,
                                   const std::optional<IntegratorConfig>& cfg) {
  const Eigen::VectorXd t = uniform_times(T, L);
  const IntegratorConfig ct = cfg ? *cfg : default_integrator(truth);
  const IntegratorConfig cl = cfg ? *cfg : default_integrator(learned);
  const Trajectory tr_train = integrate(spec, truth, x0, v0, t, ct);
  const Trajectory pr_train = integrate(spec, learned, x0, v0, t, cl);

  const Eigen::VectorXd xT = tr_train.positions.col(L - 1);
  const Eigen::VectorXd vT = spec.order == SystemOrder::Second ? Eigen::VectorXd(tr_train.velocities.col(L - 1))
                                                               : Eigen::VectorXd();
  const Trajectory tr_future = integrate(spec, truth, xT, vT, t, ct);
  const Trajectory pr_future = integrate(spec, learned, xT, vT, t, cl);

  PredictionErrors out;
  out.training = trajectory_error(pr_train.positions, tr_train.positions, t, t, spec.partition, spec.d);
  out.future = trajectory_error(pr_future.positions, tr_future.positions, t, t, spec.partition, spec.d);
  return out;
}

std::pair<double, double> loglog_fit(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw ConfigError("log-log fit needs at least two points");
  const Eigen::Index n = static_cast<Eigen::Index>(x.size());
  Eigen::MatrixXd A(n, 2);
  Eigen::VectorXd b(n);
  for (Eigen::Index k = 0; k < n; ++k) {
    if (!(x[k] > 0.0) || !(y[k] > 0.0)) throw DataError("log-log fit needs positive values");
    A(k, 0) = std::log(x[k]);
    A(k, 1) = 1.0;
    b[k] = std::log(y[k]);
  }
  const Eigen::Vector2d c = A.colPivHouseholderQr().solve(b);
  return {c[0], c[1]};
}

SweepResult convergence_sweep(const SweepConfig& cfg) {
  if (cfg.Ms.size() < 3) throw ConfigError("convergence sweep needs at least three values of M");
  for (std::size_t k = 0; k < cfg.Ms.size(); ++k) {
    if (cfg.Ms[k] < 2) throw ConfigError("convergence sweep needs M >= 2");
    if (k > 0 && cfg.Ms[k] <= cfg.Ms[k - 1]) throw ConfigError("sweep values of M must increase");
  }
  if (cfg.trials < 1) throw ConfigError("sweep needs at least one trial");
  const ModelDefinition& model = cfg.model;
  const KernelFunction& truth = model.kernels.get(KernelRole::Energy, 0, 0);
  const Eigen::VectorXd times = uniform_times(model.T, model.L);
  const IntegratorConfig integ = cfg.integrator ? *cfg.integrator : default_integrator(model.kernels);

  // reference measure from an independent noise-free dataset
  GenerateOptions ref;
  ref.M = cfg.reference_M;
  ref.times = times;
  ref.integrator = integ;
  ref.seed = derive_seed(cfg.seed, 0xFFFFFFFFULL);
  ref.threads = cfg.threads;
  RhoOptions ro;
  ro.bins = cfg.rho_bins;
  const EmpiricalRho rho = estimate_rho(generate_dataset(model, ref), ro);

  SweepResult result;
  for (int M : cfg.Ms) {
    SweepRow row;
    row.M = M;
    row.n_star = choose_dimension(M, cfg.learn.smoothness);
    row.trials = cfg.trials;
    row.errors.assign(cfg.trials, 0.0);
    std::vector<std::exception_ptr> errors(cfg.trials);
    const int threads = cfg.threads > 0 ? cfg.threads : omp_get_max_threads();
#pragma omp parallel for schedule(dynamic) num_threads(threads)
    for (int k = 0; k < cfg.trials; ++k) {
      try {
        GenerateOptions g;
        g.M = M;
        g.times = times;
        g.integrator = integ;
        g.seed = derive_seed(derive_seed(cfg.seed, static_cast<std::uint64_t>(M)), static_cast<std::uint64_t>(k));
        g.noise_sigma = cfg.noise_sigma;
        g.threads = 1;
        const TrajectoryDataset ds = generate_dataset(model, g);
        LearnConfig lc = cfg.learn;
        lc.n = row.n_star;
        lc.threads = 1;
        lc.coercivity = false;
        const LearnResult lr = learn_kernels(ds, lc);
        const KernelEstimate& est = lr.find(KernelRole::Energy, 0, 0);
        row.errors[k] = kernel_error(est, truth, rho, true);
      } catch (...) {
        errors[k] = std::current_exception();
      }
    }
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
    double sum = 0.0;
    for (double e : row.errors) sum += e;
    row.mean = sum / cfg.trials;
    double var = 0.0;
    for (double e : row.errors) var += (e - row.mean) * (e - row.mean);
    row.std = cfg.trials > 1 ? std::sqrt(var / (cfg.trials - 1)) : 0.0;
    result.rows.push_back(std::move(row));
  }
  std::vector<double> xs, ys;
  for (const auto& r : result.rows) {
    xs.push_back(r.M);
    ys.push_back(r.mean);
  }
  if (std::all_of(ys.begin(), ys.end(), [](double y) { return y > 0.0; }))
    std::tie(result.slope, result.intercept) = loglog_fit(xs, ys);
  return result;
}

}  // namespace collective
