#pragma once

#include "collective/basis.hpp"

#include <cmath>
#include <optional>
#include <utility>

namespace collective {

/// Histogram of pairwise distances. Weights sum to 1; `mass` keeps the raw
/// per-bin pair counts so histograms of disjoint pair sets can be added.
struct EmpiricalRho {
  Eigen::VectorXd edges;
  Eigen::VectorXd weights;
  Eigen::VectorXd mass;
  int k1 = -1;  // -1: all pairs
  int k2 = -1;
  long dropped = 0;  // distances outside [edges(0), edges(B)]

  int bins() const { return static_cast<int>(weights.size()); }
  double midpoint(int b) const { return 0.5 * (edges[b] + edges[b + 1]); }
  bool all_pairs() const { return k1 < 0; }
};

struct RhoOptions {
  int bins = 200;
  /// Histogram range; the observed [R_min, R_max] when absent.
  std::optional<std::pair<double, double>> range;
  int threads = 0;
};

struct Radii {
  double r_min = 0.0;
  double r_max = 0.0;
  long count = 0;  // zero when the type pair never interacts
};

/// Every pair i < i' at every snapshot of every trajectory.
EmpiricalRho estimate_rho(const TrajectoryDataset& ds, const RhoOptions& opts = {});

/// Histograms of pairs {i, i'} with {c(i), c(i')} = {k1, k2}, indexed
/// k1 * K + k2; the (k1, k2) and (k2, k1) entries coincide. Pairs that
/// never occur yield an empty histogram (no bins).
std::vector<EmpiricalRho> estimate_rho_per_type(const TrajectoryDataset& ds, const RhoOptions& opts = {});

/// Min / max observed distance per type pair, indexed k1 * K + k2.
std::vector<Radii> support_radii(const TrajectoryDataset& ds);

/// (sum_b w_b |f(r_b) - g(r_b)|^2 r_b^2)^(1/2) at bin midpoints r_b.
template <typename F, typename G>
double l2rho_distance(const F& f, const G& g, const EmpiricalRho& rho) {
  double sum = 0.0;
  for (int b = 0; b < rho.bins(); ++b) {
    if (rho.weights[b] == 0.0) continue;
    const double r = rho.midpoint(b);
    const double diff = f(r) - g(r);
    sum += rho.weights[b] * diff * diff * r * r;
  }
  return std::sqrt(sum);
}

/// G_pq = sum_b w_b psi_p(r_b) psi_q(r_b) r_b^2.
Eigen::MatrixXd rho_gram(const HypothesisSpace& space, const EmpiricalRho& rho);

/// Gram with explicit per-bin second moments: sum_b moment_b psi_p psi_q.
Eigen::MatrixXd moment_gram(const HypothesisSpace& space, const EmpiricalRho& rho, const Eigen::VectorXd& moment);

/// Smallest lambda with A v = lambda G v. Throws DataError naming basis
/// elements (1-based) whose G diagonal vanishes, or NumericalError when G is
/// singular without a dead element.
double min_generalized_eigenvalue(const Eigen::MatrixXd& A, const Eigen::MatrixXd& G);

/// Empirical coercivity constant of a homogeneous first-order dataset on H:
/// smallest generalized eigenvalue of the loss Gram A against G_rho.
double estimate_coercivity(const TrajectoryDataset& ds, const HypothesisSpace& H, int bins = 200);

}  // namespace collective
