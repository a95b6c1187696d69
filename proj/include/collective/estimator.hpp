#pragma once

#include "collective/measure.hpp"
#include "collective/sim.hpp"

#include <functional>
#include <optional>

namespace collective {

/// One kernel to learn: role and ordered type pair, with its space.
struct KernelBlock {
  KernelRole role = KernelRole::Energy;
  int k1 = 0;
  int k2 = 0;
  HypothesisSpace space;
};

/// phi_hat(r) = sum_eta alpha_eta psi_eta(r).
struct KernelEstimate {
  KernelRole role = KernelRole::Energy;
  int k1 = 0;
  int k2 = 0;
  HypothesisSpace space;
  Eigen::VectorXd alpha;

  double operator()(double r) const { return space.empty() ? 0.0 : space.evaluate(alpha, r); }
  KernelFunction as_function() const;
};

struct BlockRange {
  int offset = 0;
  int size = 0;
};

struct NormalSystem {
  Eigen::MatrixXd A;
  Eigen::VectorXd b;
  std::vector<KernelBlock> blocks;
  std::vector<BlockRange> ranges;
  /// (1/LM) sum |response|_S^2, so the loss is a'Aa - 2b'a + response_energy.
  double response_energy = 0.0;
  int snapshots = 0;

  int n_tot() const { return static_cast<int>(b.size()); }
  double loss(const Eigen::VectorXd& alpha) const;
};

struct AssemblyOptions {
  int threads = 0;
  /// Snapshots per partial sum; fixed so results never depend on threads.
  int chunk = 16;
};

/// Fills the feature matrix F (rows N*d, one column per coefficient) and the
/// response y of snapshot (m, l). Both arrive zeroed and sized.
using SnapshotFeatures = std::function<void(int m, int l, Eigen::MatrixXd& F, Eigen::VectorXd& y)>;

/// A = (1/LM) sum F' W F, b = (1/LM) sum F' W y with W = diag(row_weights).
/// Partial sums over fixed chunks of snapshots are merged in index order.
NormalSystem accumulate_normal_system(const TrajectoryDataset& ds, int n_tot, const SnapshotFeatures& features,
                                      const Eigen::VectorXd& row_weights, const AssemblyOptions& opts = {});

/// Normal equations of the kernel loss for the given blocks. The response
/// is the observed velocity (first order) or m a - F(v) (second order);
/// agent rows carry weights 1/N_{c(i)}.
NormalSystem assemble_normal_system(const TrajectoryDataset& ds, const std::vector<KernelBlock>& blocks,
                                    const AssemblyOptions& opts = {});

struct SolveResult {
  Eigen::VectorXd alpha;
  int rank = 0;
  double condition = 0.0;
  double lambda_max = 0.0;
};

/// Minimum-norm solution of (A + ridge I) alpha = b through a symmetric
/// eigendecomposition, dropping eigenvalues below trunc_tol * lambda_max.
SolveResult solve(const NormalSystem& sys, double ridge = 0.0, double trunc_tol = 1e-12);

/// n* = max(1, round((M / ln M)^(1 / (2s + 1)))).
int choose_dimension(int M, double s);

struct LearnConfig {
  BasisFamily family = BasisFamily::PiecewiseConstant;
  int degree = -1;
  /// Dimension per kernel; choose_dimension(M, smoothness) when unset.
  std::optional<int> n;
  double smoothness = 1.0;
  /// Explicit breakpoints shared by all kernels; overrides n and range.
  std::vector<double> knots;
  /// Interval for every kernel instead of the observed radii.
  std::optional<std::pair<double, double>> range;
  double ridge = 0.0;
  double trunc_tol = 1e-12;
  int rho_bins = 200;
  /// Per type pair histograms; defaults to true when K > 1.
  std::optional<bool> rho_per_type;
  bool coercivity = true;
  int threads = 0;
};

struct BlockReport {
  KernelRole role = KernelRole::Energy;
  int k1 = 0;
  int k2 = 0;
  Radii radii;
  int n = 0;
  bool observed = true;
  std::vector<int> dead_basis;  // 1-based within the block
};

struct LearnReport {
  std::vector<BlockReport> blocks;
  std::vector<EmpiricalRho> rho;
  std::optional<int> n_star;
  int n_tot = 0;
  int rank = 0;
  double condition = 0.0;
  std::optional<double> coercivity;
  std::string coercivity_note;
  double empirical_loss = 0.0;
  int snapshots = 0;
};

struct LearnResult {
  std::vector<KernelEstimate> estimates;
  LearnReport report;

  /// Kernel grid for forward simulation; unobserved blocks are zero.
  KernelSet kernels(int K, bool with_alignment) const;
  const KernelEstimate& find(KernelRole role, int k1, int k2) const;
};

/// radii -> hypothesis spaces -> assembly -> solve; errors carry the stage.
LearnResult learn_kernels(const TrajectoryDataset& ds, const LearnConfig& cfg = {});

/// Forward simulation of the learned system.
Trajectory predict_trajectories(const std::vector<KernelEstimate>& estimates, const SystemSpec& spec,
                                const Eigen::VectorXd& x0, const Eigen::VectorXd& v0, const Eigen::VectorXd& times,
                                const std::optional<IntegratorConfig>& cfg = std::nullopt);

}  // namespace collective
