#pragma once

#include "collective/core.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <string>
#include <vector>

namespace collective {

/// Distances below this are evaluated at this value when two distinct agents
/// coincide, so singular kernels stay finite.
inline constexpr double kCoincidenceEpsilon = 1e-10;

/// Radial interaction kernel r -> phi(r), zero outside [0, support].
struct KernelFunction {
  std::function<double(double)> fn;
  double support = std::numeric_limits<double>::infinity();
  /// Hoelder exponent, only used to pick hypothesis-space dimensions.
  double smoothness = 1.0;
  /// Discontinuous kernels make the adaptive integrator thrash.
  bool continuous = true;
  std::string name;

  double operator()(double r) const {
    if (!(r >= 0.0) || r > support || !fn) return 0.0;
    return fn(r);
  }

  static KernelFunction zero();
  static KernelFunction constant(double c, double support = std::numeric_limits<double>::infinity());
};

enum class KernelRole { Energy, Alignment };

std::string to_string(KernelRole role);
KernelRole parse_role(const std::string& s);

/// K x K grid of kernels per role; alignment is empty for first-order systems.
struct KernelSet {
  int K = 1;
  std::vector<KernelFunction> energy;
  std::vector<KernelFunction> alignment;

  bool has_alignment() const { return !alignment.empty(); }
  const KernelFunction& get(KernelRole role, int k1, int k2) const {
    return role == KernelRole::Energy ? energy[k1 * K + k2] : alignment[k1 * K + k2];
  }
  KernelFunction& get(KernelRole role, int k1, int k2) {
    return role == KernelRole::Energy ? energy[k1 * K + k2] : alignment[k1 * K + k2];
  }
  bool complete(bool need_alignment) const;
  bool continuous() const;

  static KernelSet single(KernelFunction energy);
  static KernelSet uniform(int K, const KernelFunction& energy);
};

/// phi(r) = 1 on [0, 1/sqrt 2), 0.1 on [1/sqrt 2, 1], 0 beyond.
KernelFunction opinion_kernel();

/// phi^E = 1, phi^A = (1 + r^2)^(-1/2), both supported on [0, domain_bound].
KernelSet fwep_kernels(double domain_bound = 100.0);

/// Everything a forward simulation of a named model needs.
struct ModelDefinition {
  std::string name;
  SystemSpec spec;
  KernelSet kernels;
  InitialDistribution positions0;
  InitialDistribution velocities0;  // second order only
  double T = 1.0;
  int L = 50;
  std::map<std::string, double> params;  // resolved parameter values
};

/// Catalog of built-in models: opinion, predator_prey, power_law, fwep,
/// constant. Unknown names or parameters raise ConfigError. Parameters
/// N and d override the default system size for homogeneous models;
/// predator_prey takes N1 and N2 instead.
ModelDefinition catalog(const std::string& name, const std::map<std::string, double>& params = {});

const std::vector<std::string>& catalog_names();

namespace detail {

template <typename Derived>
void require_finite(const Eigen::MatrixBase<Derived>& x, const char* what) {
  if (!x.allFinite()) throw NumericalError(std::string("non-finite ") + what + " passed to right-hand side");
}

}  // namespace detail

/// First-order interaction right-hand side for a flat agent-major state:
///   dx_i = sum_{i' != i} (1 / N_{c(i')}) phi_{c(i), c(i')}(|x_i' - x_i|) (x_i' - x_i).
/// With K = 1 every weight is 1/N.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1> rhs_first_order(
    const Eigen::MatrixBase<Derived>& X, const KernelSet& kernels, const TypePartition& partition, int d) {
  using Scalar = typename Derived::Scalar;
  using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  detail::require_finite(X, "state");
  if (!kernels.complete(false)) throw ConfigError("energy kernel grid incomplete");
  const int N = partition.agents();
  const Eigen::VectorXd w = agent_weights(partition);
  Vec out = Vec::Zero(X.size());
  Vec delta(d);
  for (int i = 0; i < N; ++i) {
    const int ci = partition.type_of(i);
    for (int j = i + 1; j < N; ++j) {
      const int cj = partition.type_of(j);
      delta = X.segment(j * d, d) - X.segment(i * d, d);
      const double r = std::max(static_cast<double>(delta.norm()), kCoincidenceEpsilon);
      out.segment(i * d, d) += Scalar(w[j] * kernels.get(KernelRole::Energy, ci, cj)(r)) * delta;
      out.segment(j * d, d) -= Scalar(w[i] * kernels.get(KernelRole::Energy, cj, ci)(r)) * delta;
    }
  }
  return out;
}

/// Second-order accelerations:
///   a_i = (1/m_i) [F(v_i) + sum_{i'} (1/N_{c(i')}) (phi^E(r) (x_i' - x_i) + phi^A(r) (v_i' - v_i))].
template <typename DerivedX, typename DerivedV>
Eigen::Matrix<typename DerivedX::Scalar, Eigen::Dynamic, 1> rhs_second_order(
    const Eigen::MatrixBase<DerivedX>& X, const Eigen::MatrixBase<DerivedV>& V, const KernelSet& kernels,
    const SystemSpec& spec) {
  using Scalar = typename DerivedX::Scalar;
  using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  detail::require_finite(X, "positions");
  detail::require_finite(V, "velocities");
  if (!kernels.complete(true)) throw ConfigError("energy/alignment kernel grid incomplete");
  const int N = spec.N;
  const int d = spec.d;
  const auto& partition = spec.partition;
  const Eigen::VectorXd w = agent_weights(partition);
  Vec out = Vec::Zero(X.size());
  Vec dx(d), dv(d);
  for (int i = 0; i < N; ++i) {
    const int ci = partition.type_of(i);
    for (int j = i + 1; j < N; ++j) {
      const int cj = partition.type_of(j);
      dx = X.segment(j * d, d) - X.segment(i * d, d);
      dv = V.segment(j * d, d) - V.segment(i * d, d);
      const double r = std::max(static_cast<double>(dx.norm()), kCoincidenceEpsilon);
      const double eij = kernels.get(KernelRole::Energy, ci, cj)(r);
      const double eji = kernels.get(KernelRole::Energy, cj, ci)(r);
      const double aij = kernels.get(KernelRole::Alignment, ci, cj)(r);
      const double aji = kernels.get(KernelRole::Alignment, cj, ci)(r);
      out.segment(i * d, d) += Scalar(w[j]) * (Scalar(eij) * dx + Scalar(aij) * dv);
      out.segment(j * d, d) -= Scalar(w[i]) * (Scalar(eji) * dx + Scalar(aji) * dv);
    }
  }
  for (int i = 0; i < N; ++i) {
    if (spec.force.enabled) out.segment(i * d, d) += spec.force.apply(V.segment(i * d, d));
    out.segment(i * d, d) /= Scalar(spec.masses[i]);
  }
  return out;
}

}  // namespace collective
