#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace collective {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration, unknown catalog identifiers, resource caps.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Dataset content does not support the requested operation.
class DataError : public Error {
 public:
  using Error::Error;
};

/// Non-finite values, singular systems, failed factorizations.
class NumericalError : public Error {
 public:
  using Error::Error;
};

class IntegrationError : public Error {
 public:
  using Error::Error;
};

/// Object used before it reached the state the call requires.
class StateError : public Error {
 public:
  using Error::Error;
};

enum class SystemOrder { First, Second };
enum class DerivativeSource { Observed, FiniteDifference };

std::string to_string(SystemOrder order);
SystemOrder parse_order(const std::string& s);
std::string to_string(DerivativeSource src);
DerivativeSource parse_derivative_source(const std::string& s);

/// Assignment of agents to K types. Labels are 0-based internally; file
/// formats use 1-based labels.
class TypePartition {
 public:
  TypePartition() = default;
  TypePartition(std::vector<int> labels, int K);

  static TypePartition homogeneous(int N);
  /// Agents 0..counts[0]-1 get type 0, the next counts[1] get type 1, ...
  static TypePartition from_counts(const std::vector<int>& counts);

  int agents() const { return static_cast<int>(labels_.size()); }
  int types() const { return K_; }
  int type_of(int agent) const { return labels_[agent]; }
  int count(int type) const { return counts_[type]; }
  const std::vector<int>& labels() const { return labels_; }

  /// Empty if valid; otherwise one message per violated invariant.
  std::vector<std::string> violations() const;

  bool operator==(const TypePartition& other) const = default;

 private:
  std::vector<int> labels_;
  std::vector<int> counts_;
  int K_ = 0;
};

/// Friction / self-propulsion family F(x, v; a) = a1 v + a2 (1 - |v|^2) v.
struct ParametricForce {
  bool enabled = false;
  double friction = 0.0;
  double propulsion = 0.0;

  template <typename Derived>
  Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1> apply(
      const Eigen::MatrixBase<Derived>& v) const {
    using Scalar = typename Derived::Scalar;
    Eigen::Matrix<Scalar, Eigen::Dynamic, 1> out = v;
    if (!enabled) return out.setZero();
    const Scalar speed2 = v.squaredNorm();
    out *= Scalar(friction) + Scalar(propulsion) * (Scalar(1) - speed2);
    return out;
  }

  /// Contribution of each parameter, so F = friction * basis.col(0) +
  /// propulsion * basis.col(1).
  template <typename Derived>
  Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 2> basis(
      const Eigen::MatrixBase<Derived>& v) const {
    using Scalar = typename Derived::Scalar;
    Eigen::Matrix<Scalar, Eigen::Dynamic, 2> out(v.size(), 2);
    out.col(0) = v;
    out.col(1) = (Scalar(1) - v.squaredNorm()) * v;
    return out;
  }
};

struct SystemSpec {
  SystemOrder order = SystemOrder::First;
  int N = 2;
  int d = 1;
  TypePartition partition = TypePartition::homogeneous(2);
  Eigen::VectorXd masses;  // length N for second-order systems
  ParametricForce force;
  std::string model;       // catalog identifier

  static SystemSpec first_order(int N, int d);
  static SystemSpec second_order(int N, int d);

  std::vector<std::string> violations() const;
  /// Throws ConfigError listing every violation.
  void validate() const;
};

/// Observation data, snapshot-major: column m * L + l of every array holds
/// the flat state (agent-major, d entries per agent) of trajectory m at t_l.
struct TrajectoryDataset {
  Eigen::VectorXd times;
  int M = 0;
  Eigen::MatrixXd positions;
  std::optional<Eigen::MatrixXd> velocities;
  std::optional<Eigen::MatrixXd> accelerations;
  DerivativeSource derivative_source = DerivativeSource::Observed;
  SystemSpec spec;
  std::uint64_t seed = 0;
  double noise_sigma = 0.0;
  /// Noise on the highest stored derivative (velocities for first order,
  /// accelerations for second order).
  double derivative_noise_sigma = 0.0;
  std::map<std::string, double> model_params;

  int L() const { return static_cast<int>(times.size()); }
  int snapshots() const { return M * L(); }
  int column(int m, int l) const { return m * L() + l; }

  auto state(int m, int l) const { return positions.col(column(m, l)); }
};

/// Every violated invariant of the dataset, empty when valid. Pure.
std::vector<std::string> validate_dataset(const TrajectoryDataset& ds);

/// Throws DataError if validate_dataset reports anything.
void require_valid(const TrajectoryDataset& ds);

enum class DistributionFamily { UniformBox, Gaussian, UniformAnnulus };

/// Per-agent i.i.d. law on R^d. Box: every coordinate uniform on
/// [lower, upper]. Gaussian: every coordinate N(mean, stddev^2). Annulus:
/// uniform on the shell inner <= |x| <= outer.
struct InitialDistribution {
  DistributionFamily family = DistributionFamily::UniformBox;
  double lower = 0.0;
  double upper = 1.0;
  double mean = 0.0;
  double stddev = 1.0;
  double inner = 0.5;
  double outer = 1.0;

  static InitialDistribution box(double lower, double upper);
  static InitialDistribution gaussian(double mean, double stddev);
  static InitialDistribution annulus(double inner, double outer);

  std::vector<std::string> violations() const;
};

std::string to_string(DistributionFamily f);

/// 1.0 / N_{c(i)} for every agent (1/N when K = 1).
Eigen::VectorXd agent_weights(const TypePartition& partition);

}  // namespace collective
