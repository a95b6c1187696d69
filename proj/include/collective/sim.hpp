#pragma once

#include "collective/models.hpp"

#include <cstdint>
#include <functional>
#include <random>

namespace collective {

enum class IntegratorMethod { RK4Fixed, RK45Adaptive };

std::string to_string(IntegratorMethod m);
IntegratorMethod parse_integrator(const std::string& s);

struct IntegratorConfig {
  IntegratorMethod method = IntegratorMethod::RK45Adaptive;
  /// Requested RK4 step; shrunk per observation interval so it divides it.
  double step = 1e-2;
  double abs_tol = 1e-9;
  double rel_tol = 1e-9;
  long max_steps = 10'000'000;

  std::vector<std::string> violations() const;
};

/// RK45 unless some kernel is discontinuous, in which case fixed-step RK4.
IntegratorConfig default_integrator(const KernelSet& kernels);

/// SplitMix64 mixing of (seed, stream), used to derive independent RNG
/// streams per trajectory.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

/// N i.i.d. draws from mu on R^d, agent-major.
Eigen::VectorXd sample_agents(const InitialDistribution& mu, int N, int d, std::mt19937_64& rng);

struct InitialState {
  Eigen::VectorXd positions;
  Eigen::VectorXd velocities;  // empty for first-order systems
};

InitialState sample_initial(const InitialDistribution& positions, const InitialDistribution& velocities,
                            const SystemSpec& spec, std::uint64_t seed);

/// Single trajectory; columns are snapshots.
struct Trajectory {
  Eigen::VectorXd times;
  Eigen::MatrixXd positions;
  Eigen::MatrixXd velocities;
  Eigen::MatrixXd accelerations;  // second order only
};

using OdeRhs = std::function<void(double, const Eigen::VectorXd&, Eigen::VectorXd&)>;

/// Integrates y' = f(t, y) from times[0] and returns y at every time as a
/// column. Throws IntegrationError naming the time of failure.
Eigen::MatrixXd integrate_ode(const OdeRhs& f, const Eigen::VectorXd& y0, const Eigen::VectorXd& times,
                              const IntegratorConfig& cfg);

/// Integrates the system and stores exact RHS derivatives at each time.
Trajectory integrate(const SystemSpec& spec, const KernelSet& kernels, const Eigen::VectorXd& x0,
                     const Eigen::VectorXd& v0, const Eigen::VectorXd& times, const IntegratorConfig& cfg);

/// t_l = l T / (L - 1), l = 0..L-1 (just {0} when L = 1).
Eigen::VectorXd uniform_times(double T, int L);

struct GenerateOptions {
  int M = 1;
  Eigen::VectorXd times;
  IntegratorConfig integrator;
  std::uint64_t seed = 0;
  double noise_sigma = 0.0;
  /// Noise on stored derivatives; negative means "same as noise_sigma".
  double derivative_noise_sigma = -1.0;
  int threads = 0;  // 0: OpenMP default
  /// Fixed initial state used for every trajectory instead of sampling.
  std::optional<InitialState> fixed_initial;
};

TrajectoryDataset generate_dataset(const SystemSpec& spec, const KernelSet& kernels,
                                   const InitialDistribution& positions0, const InitialDistribution& velocities0,
                                   const GenerateOptions& opts);

/// Convenience overload using the model's defaults for mu0.
TrajectoryDataset generate_dataset(const ModelDefinition& model, const GenerateOptions& opts);

/// Replaces derivatives by second-order finite differences of the positions
/// (three-point stencils; two-point when L = 2).
TrajectoryDataset approx_derivatives(const TrajectoryDataset& ds);

}  // namespace collective
