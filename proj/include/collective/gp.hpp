#pragma once

#include "collective/measure.hpp"
#include "collective/models.hpp"

#include <Eigen/Cholesky>

#include <cstdint>
#include <memory>

namespace collective {

enum class CovarianceFamily { SquaredExponential, Matern52 };

std::string to_string(CovarianceFamily f);
/// Accepts se, matern52.
CovarianceFamily parse_covariance(const std::string& s);

/// Stationary covariance on distances: k(r, r') = variance * g(|r - r'| / lengthscale).
struct CovarianceParams {
  CovarianceFamily family = CovarianceFamily::Matern52;
  double variance = 1.0;
  double lengthscale = 1.0;

  double operator()(double tau) const;
  /// Elementwise on an array of |r - r'| values.
  Eigen::ArrayXXd operator()(const Eigen::ArrayXXd& tau) const;
};

struct GPConfig {
  CovarianceParams energy;
  CovarianceParams alignment;
  double noise_variance = 1e-4;
  /// Known force, or the starting point when train_force is set.
  ParametricForce force;
  bool train_force = false;

  std::vector<std::string> violations() const;
};

inline constexpr int kMaxGPSize = 6000;

/// Second-order data reorganized for the GP: unique pairs i < i' per
/// snapshot with the linear maps taking kernel values at those pairs to the
/// stacked interaction forces. Output component (s, i, c) sits at index
/// (s N + i) d + c.
class GPProblem {
 public:
  explicit GPProblem(const TrajectoryDataset& ds, int cap = kMaxGPSize);

  int size() const { return n_; }
  int agents() const { return N_; }
  int dim() const { return d_; }
  int snapshot_count() const { return static_cast<int>(blocks_.size()); }
  int pair_count() const;

  /// m Z - F_alpha(Y).
  Eigen::VectorXd response(const ParametricForce& force) const;
  /// Columns are the responses of each force parameter (friction, propulsion).
  Eigen::MatrixXd force_basis() const;

  /// K_f(Y, Y) without noise.
  Eigen::MatrixXd covariance(const GPConfig& cfg, int threads = 0) const;
  /// K_{phi, f}(r*, Y) for one role: rows follow r*.
  Eigen::MatrixXd cross_covariance(KernelRole role, const Eigen::VectorXd& rstar, const GPConfig& cfg) const;

  /// All unique pair distances, snapshot-major.
  Eigen::VectorXd pair_distances() const;
  /// Dense n x P map from kernel values at the pairs to forces.
  Eigen::MatrixXd operator_matrix(KernelRole role) const;

 private:
  struct Block {
    Eigen::VectorXd r;
    Eigen::MatrixXd energy;     // N d x P_s
    Eigen::MatrixXd alignment;  // N d x P_s
  };
  int N_ = 0;
  int d_ = 0;
  int n_ = 0;
  std::vector<Block> blocks_;
  Eigen::VectorXd mZ_;
  Eigen::VectorXd velocities_;
};

Eigen::MatrixXd assemble_gp_covariance(const TrajectoryDataset& ds, const GPConfig& cfg);

/// Cholesky of C + jitter I, trying no jitter first and then 1e-10 tr/n
/// up to 1e-4 tr/n in factors of 10. Throws NumericalError past the cap.
struct Factorization {
  Eigen::LLT<Eigen::MatrixXd> llt;
  double jitter = 0.0;
};
Factorization factorize_with_jitter(const Eigen::MatrixXd& C);

/// 1/2 r' C^-1 r + 1/2 log det C + n/2 log 2 pi with C = K_f + sigma^2 I.
double nlml(const GPProblem& problem, const GPConfig& cfg);
double nlml(const TrajectoryDataset& ds, const GPConfig& cfg);

struct TrainBounds {
  std::pair<double, double> signal_variance{1e-4, 1e4};
  std::pair<double, double> lengthscale{1e-3, 1e3};
  std::pair<double, double> noise_variance{1e-12, 1e2};
  std::pair<double, double> force{-10.0, 10.0};
};

struct TrainOptions {
  int restarts = 5;
  /// Objective evaluations per start, refinement restarts included.
  int max_evaluations = 400;
  std::uint64_t seed = 0;
  int threads = 0;
};

struct TrainResult {
  GPConfig config;
  double nlml = 0.0;
  /// Best objective after each start.
  std::vector<double> trace;
  int evaluations = 0;
};

/// Nelder-Mead over log variances / lengthscales / noise (and raw force
/// parameters when trainable), clamped to bounds, from `init` and
/// restarts - 1 seeded random points.
TrainResult train(const GPProblem& problem, const GPConfig& init, const TrainBounds& bounds = {},
                  const TrainOptions& opts = {});
TrainResult train(const TrajectoryDataset& ds, const GPConfig& init, const TrainBounds& bounds = {},
                  const TrainOptions& opts = {});

/// Unit signal variance and median pair distance as lengthscale.
GPConfig default_gp_config(const TrajectoryDataset& ds);

struct KernelPrediction {
  Eigen::VectorXd mean;
  Eigen::VectorXd variance;
  int clamped = 0;  // negative variances raised to zero
};

class GPPosterior {
 public:
  GPPosterior() = default;
  static GPPosterior fit(std::shared_ptr<const GPProblem> problem, const GPConfig& cfg);
  static GPPosterior fit(const TrajectoryDataset& ds, const GPConfig& cfg);

  bool trained() const { return trained_; }
  const GPConfig& config() const { return cfg_; }
  double jitter() const { return jitter_; }
  const GPProblem& problem() const { return *problem_; }

  /// Posterior mean and variance of one kernel at the distances r*.
  KernelPrediction predict(KernelRole role, const Eigen::VectorXd& rstar) const;

 private:
  std::shared_ptr<const GPProblem> problem_;
  GPConfig cfg_;
  Eigen::LLT<Eigen::MatrixXd> llt_;
  Eigen::VectorXd weights_;  // C^-1 r
  double jitter_ = 0.0;
  bool trained_ = false;
};

KernelPrediction posterior_kernel(const GPPosterior& post, KernelRole role, const Eigen::VectorXd& rstar);

struct RepresenterResult {
  double max_discrepancy = 0.0;
  Eigen::VectorXd grid;
  Eigen::VectorXd gp_energy, gp_alignment;
  Eigen::VectorXd ridge_energy, ridge_alignment;
};

/// Compares the GP posterior mean under the prior sigma^2 K / (M N L lambda)
/// with the kernel-ridge minimizer of (1/LM) sum |f_phi - r|_S^2 +
/// lambda_E |phi_E|^2 + lambda_A |phi_A|^2 over representer coefficients.
/// With scale_prior = false the prior is left unscaled (negative control).
/// The grid defaults to the midpoints of the nonempty bins of a 50-bin rho.
RepresenterResult representer_check(const TrajectoryDataset& ds, const GPConfig& cfg, double lambda_E,
                                    double lambda_A, std::optional<Eigen::VectorXd> grid = std::nullopt,
                                    bool scale_prior = true);

}  // namespace collective
