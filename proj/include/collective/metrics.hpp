#pragma once

#include "collective/estimator.hpp"

namespace collective {

/// l2rho_distance(est, truth); divided by l2rho_distance(0, truth) when
/// relative. A zero truth norm makes the relative error undefined.
template <typename E, typename T>
double kernel_error(const E& est, const T& truth, const EmpiricalRho& rho, bool relative) {
  const double err = l2rho_distance(est, truth, rho);
  if (!relative) return err;
  const double norm = l2rho_distance([](double) { return 0.0; }, truth, rho);
  if (!(norm > 0.0)) throw DataError("relative kernel error undefined: truth has zero norm under rho");
  return err / norm;
}

struct WindowError {
  double sup = 0.0;   // max over snapshots of the S-norm discrepancy
  double mean = 0.0;  // its mean over snapshots
};

/// Per-snapshot S-norm (agent weights 1/N_{c(i)}) of pred - truth. Grids
/// must match.
WindowError trajectory_error(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& truth,
                             const Eigen::VectorXd& pred_times, const Eigen::VectorXd& truth_times,
                             const TypePartition& partition, int d);

struct PredictionErrors {
  WindowError training;  // [0, T] from x0
  WindowError future;    // [T, 2T] restarted from the true state at T
};

/// Simulates truth and learned systems on [0, 2T] with L snapshots per
/// window and compares positions.
PredictionErrors prediction_errors(const SystemSpec& spec, const KernelSet& truth, const KernelSet& learned,
                                   const Eigen::VectorXd& x0, const Eigen::VectorXd& v0, double T, int L,
                                   const std::optional<IntegratorConfig>& cfg = std::nullopt);

struct SweepConfig {
  ModelDefinition model;
  std::vector<int> Ms;
  int trials = 5;
  std::uint64_t seed = 0;
  double noise_sigma = 0.0;
  /// n is always n*(M, smoothness); other fields are passed through.
  LearnConfig learn;
  /// Trajectories used to build the reference rho the errors are measured on.
  int reference_M = 200;
  int rho_bins = 200;
  std::optional<IntegratorConfig> integrator;
  int threads = 0;
};

struct SweepRow {
  int M = 0;
  int n_star = 0;
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation across trials
  int trials = 0;
  std::vector<double> errors;

  double standard_error() const { return trials > 0 ? std / std::sqrt(static_cast<double>(trials)) : 0.0; }
};

struct SweepResult {
  std::vector<SweepRow> rows;
  double slope = 0.0;  // least squares fit of log mean error against log M
  double intercept = 0.0;
};

/// Relative L2(rho) error of the learned energy kernel (type pair 1,1)
/// for every M and trial.
SweepResult convergence_sweep(const SweepConfig& cfg);

/// Least squares slope and intercept of log y against log x.
std::pair<double, double> loglog_fit(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace collective
