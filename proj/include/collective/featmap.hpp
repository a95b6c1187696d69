#pragma once

#include "collective/estimator.hpp"

#include <array>
#include <cstdint>

namespace collective {

/// D = 2 d^2 + 3 d.
constexpr int feature_dimension(int d) { return 2 * d * d + 3 * d; }

/// Inverse of feature_dimension; throws ConfigError when D is not of that form.
int state_dimension(int D);

/// z(x_i, x_j) = [x_i, x_j, (x_i)_a (x_i)_b for a <= b, (x_j)_a (x_j)_b for
/// a <= b, (x_i)_a (x_j)_b for all a, b].
template <typename DerivedA, typename DerivedB>
Eigen::Matrix<typename DerivedA::Scalar, Eigen::Dynamic, 1> pairwise_feature_map(
    const Eigen::MatrixBase<DerivedA>& xi, const Eigen::MatrixBase<DerivedB>& xj) {
  using Scalar = typename DerivedA::Scalar;
  const int d = static_cast<int>(xi.size());
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> z(feature_dimension(d));
  int k = 0;
  for (int a = 0; a < d; ++a) z[k++] = xi[a];
  for (int a = 0; a < d; ++a) z[k++] = xj[a];
  for (int a = 0; a < d; ++a)
    for (int b = a; b < d; ++b) z[k++] = xi[a] * xi[b];
  for (int a = 0; a < d; ++a)
    for (int b = a; b < d; ++b) z[k++] = xj[a] * xj[b];
  for (int a = 0; a < d; ++a)
    for (int b = 0; b < d; ++b) z[k++] = xi[a] * xj[b];
  return z;
}

struct FeatureSample {
  Eigen::VectorXd z;
  double psi = 0.0;
};

/// For every snapshot of two-agent data: psi_12 = 2 <dx_1, x_2 - x_1> / |x_2 - x_1|^2
/// paired with z(x_1, x_2), then the symmetric sample for agent 2.
std::vector<FeatureSample> kernel_values_from_pairs(const TrajectoryDataset& ds);

struct MplsOptions {
  int d_prime = 1;
  /// Number of anchors; ceil(4 d' ln max(d', 2)) when unset.
  std::optional<int> centers;
  /// Weight bandwidth; 1 / D when unset.
  std::optional<double> lambda;
  std::uint64_t seed = 0;
  /// beta_hat is projected out and enters B_hat only if the linear fit
  /// explains at least this fraction of the (uncentered) response energy.
  double linear_r2_threshold = 0.05;
  int threads = 0;
};

struct ReductionMap {
  int d = 0;
  int D = 0;
  int d_prime = 0;
  Eigen::MatrixXd B;      // d' x D, orthonormal rows
  Eigen::VectorXd beta;   // linear component
  Eigen::MatrixXd A_hat;  // d' x D, top right singular vectors of P_hat
  Eigen::MatrixXd P_hat;  // centers x D slope perturbations
  Eigen::VectorXd singular_values;
  bool beta_used = false;
  double linear_r2 = 0.0;
  int centers = 0;
  double lambda = 0.0;

  Eigen::VectorXd reduce(const Eigen::VectorXd& z) const { return B * z; }
};

/// Multiplicatively perturbed least squares estimate of the feature
/// reduction map. The result does not depend on the order of `samples`.
ReductionMap mpls_reduce(const std::vector<FeatureSample>& samples, const MplsOptions& opts = {});

/// Tensor product of one-dimensional spaces, one per reduced coordinate.
struct ReducedSpace {
  std::vector<HypothesisSpace> axes;

  int dim() const;
  /// Writes up to (degree+1)^axes (index, value) pairs; returns the count.
  int eval_nonzero(const double* xi, int* index, double* values) const;
  double evaluate(const Eigen::VectorXd& alpha, const Eigen::VectorXd& xi) const;
};

struct ReducedKernelEstimate {
  ReductionMap map;
  ReducedSpace space;
  Eigen::VectorXd alpha;

  double at(const Eigen::VectorXd& xi) const { return space.evaluate(alpha, xi); }
  /// Phi_hat(x_i, x_j) = phi_hat(B z(x_i, x_j)).
  double operator()(const Eigen::VectorXd& xi, const Eigen::VectorXd& xj) const {
    return at(map.reduce(pairwise_feature_map(xi, xj)));
  }
};

struct ReducedLearnConfig {
  BasisFamily family = BasisFamily::PiecewiseConstant;
  int degree = -1;
  /// Dimension per reduced coordinate.
  int n = 8;
  /// Explicit breakpoints per reduced coordinate; overrides n.
  std::vector<std::vector<double>> knots;
  double ridge = 0.0;
  double trunc_tol = 1e-12;
  int threads = 0;
};

struct ReducedLearnResult {
  ReducedKernelEstimate estimate;
  int rank = 0;
  double condition = 0.0;
  double empirical_loss = 0.0;
  std::vector<std::pair<double, double>> ranges;  // observed reduced ranges
};

/// Least squares over the full N-agent first-order loss with kernel weights
/// phi(B z(x_i, x_j)) on x_j - x_i.
ReducedLearnResult learn_reduced_kernel(const TrajectoryDataset& ds, const ReductionMap& map,
                                        const ReducedLearnConfig& cfg = {});

}  // namespace collective
