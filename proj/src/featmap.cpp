#include "collective/featmap.hpp"

#include <Eigen/QR>
#include <Eigen/SVD>
#include <omp.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

namespace collective {

int state_dimension(int D) {
  for (int d = 1; feature_dimension(d) <= D; ++d)
    if (feature_dimension(d) == D) return d;
  throw ConfigError("feature dimension " + std::to_string(D) + " is not of the form 2d^2 + 3d");
}

std::vector<FeatureSample> kernel_values_from_pairs(const TrajectoryDataset& ds) {
  if (ds.spec.N != 2) throw DataError("kernel_values_from_pairs needs two-agent data (N = 2)");
  if (!ds.velocities) throw DataError("missing derivatives for learning");
  if (ds.spec.order != SystemOrder::First) throw DataError("kernel_values_from_pairs needs first-order data");
  const int d = ds.spec.d;
  std::vector<FeatureSample> out;
  out.reserve(2 * static_cast<std::size_t>(ds.snapshots()));
  for (int m = 0; m < ds.M; ++m) {
    for (int l = 0; l < ds.L(); ++l) {
      const auto c = ds.column(m, l);
      const Eigen::VectorXd x1 = ds.positions.col(c).head(d);
      const Eigen::VectorXd x2 = ds.positions.col(c).tail(d);
      const Eigen::VectorXd v1 = ds.velocities->col(c).head(d);
      const Eigen::VectorXd v2 = ds.velocities->col(c).tail(d);
      const Eigen::VectorXd diff = x2 - x1;
      const double r2 = diff.squaredNorm();
      if (!(std::sqrt(r2) >= kCoincidenceEpsilon))
        throw DataError("degenerate pair: agents coincide at m=" + std::to_string(m + 1) +
                        ", l=" + std::to_string(l + 1));
      out.push_back({pairwise_feature_map(x1, x2), 2.0 * v1.dot(diff) / r2});
      out.push_back({pairwise_feature_map(x2, x1), -2.0 * v2.dot(diff) / r2});
    }
  }
  return out;
}

namespace {

Eigen::MatrixXd stack(const std::vector<FeatureSample>& s, const std::vector<int>& idx, int D,
                      Eigen::VectorXd& y) {
  Eigen::MatrixXd Z(idx.size(), D);
  y.resize(idx.size());
  for (std::size_t k = 0; k < idx.size(); ++k) {
    Z.row(k) = s[idx[k]].z.transpose();
    y[k] = s[idx[k]].psi;
  }
  return Z;
}

// appends v to the orthonormal rows of B when it has a new direction
bool gram_schmidt_add(Eigen::MatrixXd& B, int& rows, Eigen::VectorXd v) {
  const double norm0 = v.norm();
  if (!(norm0 > 0.0)) return false;
  v /= norm0;
  for (int pass = 0; pass < 2; ++pass)
    for (int k = 0; k < rows; ++k) v -= B.row(k).dot(v) * B.row(k).transpose();
  const double n = v.norm();
  if (n < 1e-8) return false;
  B.row(rows++) = v.transpose() / n;
  return true;
}

}  // namespace

ReductionMap mpls_reduce(const std::vector<FeatureSample>& samples, const MplsOptions& opts) {
  if (samples.empty()) throw DataError("MPLS needs samples");
  const int D = static_cast<int>(samples.front().z.size());
  for (const auto& s : samples)
    if (s.z.size() != D || !s.z.allFinite() || !std::isfinite(s.psi))
      throw DataError("feature samples must share one finite dimension");
  if (opts.d_prime < 1 || opts.d_prime > D) throw ConfigError("d' must lie in 1..D");
  const int Q = static_cast<int>(samples.size());
  if (Q < 2 * (D + 1))
    throw DataError("ill-posed split: MPLS needs Q >= 2(D+1) = " + std::to_string(2 * (D + 1)) +
                    " samples, got " + std::to_string(Q) + "; collect more samples");
  const double lambda = opts.lambda.value_or(1.0 / D);
  if (!(lambda > 0.0)) throw ConfigError("MPLS lambda must be positive");
  const int dp = opts.d_prime;
  const int centers =
      opts.centers.value_or(static_cast<int>(std::ceil(4.0 * dp * std::log(std::max(dp, 2)))));
  if (centers < 1 || centers > Q) throw ConfigError("number of MPLS anchors must lie in 1..Q");

  // canonical order first, so the seeded split ignores the input order
  std::vector<int> order(Q);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    const auto& za = samples[a].z;
    const auto& zb = samples[b].z;
    for (int k = 0; k < D; ++k)
      if (za[k] != zb[k]) return za[k] < zb[k];
    return samples[a].psi < samples[b].psi;
  });
  std::mt19937_64 rng(opts.seed);
  for (int k = Q - 1; k > 0; --k) {
    std::uniform_int_distribution<int> pick(0, k);
    std::swap(order[k], order[pick(rng)]);
  }
  const std::vector<int> S(order.begin(), order.begin() + Q / 2);
  const std::vector<int> Sp(order.begin() + Q / 2, order.end());

  ReductionMap map;
  map.D = D;
  map.d = state_dimension(D);
  map.d_prime = dp;
  map.centers = centers;
  map.lambda = lambda;

  // step 1: linear approximation on S'
  Eigen::VectorXd yp;
  const Eigen::MatrixXd Zp = stack(samples, Sp, D, yp);
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(Zp);
  if (qr.rank() < D)
    throw DataError("ill-posed split: design rank " + std::to_string(qr.rank()) + " < D = " + std::to_string(D) +
                    " on S'; collect more samples");
  map.beta = qr.solve(yp);
  const double energy = yp.squaredNorm();
  map.linear_r2 = energy > 0.0 ? 1.0 - (yp - Zp * map.beta).squaredNorm() / energy : 0.0;
  map.beta_used = map.linear_r2 >= opts.linear_r2_threshold && map.beta.norm() > 0.0;

  // step 2: residuals on S with z projected away from beta_hat; an
  // insignificant fit counts as beta_hat = 0
  Eigen::VectorXd y;
  Eigen::MatrixXd Zt = stack(samples, S, D, y);
  {
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qs(Zt);
    if (qs.rank() < D)
      throw DataError("ill-posed split: design rank " + std::to_string(qs.rank()) + " < D = " +
                      std::to_string(D) + " on S; collect more samples");
  }
  const Eigen::VectorXd b = map.beta_used ? map.beta : Eigen::VectorXd::Zero(D);
  const Eigen::VectorXd resid = y - Zt * b;
  const double bnorm2 = b.squaredNorm();
  if (bnorm2 > 0.0) Zt -= (Zt * b / bnorm2) * b.transpose();

  // step 3: anchored slope perturbations
  std::vector<int> pool(Q);
  std::iota(pool.begin(), pool.end(), 0);
  for (int k = 0; k < centers; ++k) {
    std::uniform_int_distribution<int> pick(k, Q - 1);
    std::swap(pool[k], pool[pick(rng)]);
  }
  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(Zt);
  map.P_hat.resize(centers, D);
  const int threads = opts.threads > 0 ? opts.threads : omp_get_max_threads();
#pragma omp parallel for num_threads(threads)
  for (int k = 0; k < centers; ++k) {
    const Eigen::VectorXd u = samples[order[pool[k]]].z;
    Eigen::VectorXd w(Zt.rows());
    for (Eigen::Index q = 0; q < Zt.rows(); ++q) w[q] = std::exp(-lambda * (Zt.row(q).transpose() - u).squaredNorm());
    const double wsum = w.sum();
    const double mean = wsum > 0.0 ? w.dot(resid) / wsum : 0.0;
    const Eigen::VectorXd target = w.cwiseProduct((resid.array() - mean).matrix());
    map.P_hat.row(k) = cod.solve(target).transpose();
  }

  // step 4: rank-d' SVD and orthonormal combination with beta_hat
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(map.P_hat, Eigen::ComputeFullV);
  const Eigen::MatrixXd& V = svd.matrixV();
  map.singular_values = svd.singularValues();
  map.A_hat = V.leftCols(dp).transpose();
  map.B.resize(dp, D);
  int rows = 0;
  if (map.beta_used) gram_schmidt_add(map.B, rows, map.beta);
  for (int k = 0; k < D && rows < dp; ++k) gram_schmidt_add(map.B, rows, V.col(k));
  for (int k = 0; k < D && rows < dp; ++k) gram_schmidt_add(map.B, rows, Eigen::VectorXd::Unit(D, k));
  return map;
}

int ReducedSpace::dim() const {
  int n = axes.empty() ? 0 : 1;
  for (const auto& a : axes) n *= a.dim();
  return n;
}

int ReducedSpace::eval_nonzero(const double* xi, int* index, double* values) const {
  if (axes.size() == 1) {
    const int first = axes[0].eval_nonzero(xi[0], values);
    if (first < 0) return 0;
    for (int p = 0; p <= axes[0].degree(); ++p) index[p] = first + p;
    return axes[0].degree() + 1;
  }
  if (axes.size() == 2) {
    double v0[16], v1[16];
    const int f0 = axes[0].eval_nonzero(xi[0], v0);
    const int f1 = axes[1].eval_nonzero(xi[1], v1);
    if (f0 < 0 || f1 < 0) return 0;
    const int n1 = axes[1].dim();
    int k = 0;
    for (int p = 0; p <= axes[0].degree(); ++p) {
      for (int q = 0; q <= axes[1].degree(); ++q) {
        index[k] = (f0 + p) * n1 + f1 + q;
        values[k++] = v0[p] * v1[q];
      }
    }
    return k;
  }
  throw ConfigError("reduced spaces support one or two coordinates");
}

double ReducedSpace::evaluate(const Eigen::VectorXd& alpha, const Eigen::VectorXd& xi) const {
  int idx[128];
  double vals[128];
  const int k = eval_nonzero(xi.data(), idx, vals);
  double sum = 0.0;
  for (int q = 0; q < k; ++q) sum += alpha[idx[q]] * vals[q];
  return sum;
}

ReducedLearnResult learn_reduced_kernel(const TrajectoryDataset& ds, const ReductionMap& map,
                                        const ReducedLearnConfig& cfg) {
  require_valid(ds);
  if (ds.spec.order != SystemOrder::First || ds.spec.partition.types() != 1)
    throw ConfigError("reduced kernels are learned from homogeneous first-order data");
  if (map.d_prime < 1 || map.d_prime > 2) throw ConfigError("reduced kernels support d' in {1, 2}");
  if (map.d != ds.spec.d || map.B.rows() != map.d_prime || map.B.cols() != feature_dimension(ds.spec.d))
    throw ConfigError("reduction map does not match the dataset dimension");
  if (!cfg.knots.empty() && static_cast<int>(cfg.knots.size()) != map.d_prime)
    throw ConfigError("need one knot vector per reduced coordinate");

  const int N = ds.spec.N;
  const int d = ds.spec.d;
  const int dp = map.d_prime;

  ReducedLearnResult out;
  out.ranges.assign(dp, {std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()});
  for (Eigen::Index c = 0; c < ds.positions.cols(); ++c) {
    auto x = ds.positions.col(c);
    for (int i = 0; i < N; ++i) {
      for (int j = 0; j < N; ++j) {
        if (i == j) continue;
        const Eigen::VectorXd xi = map.B * pairwise_feature_map(x.segment(i * d, d), x.segment(j * d, d));
        for (int a = 0; a < dp; ++a) {
          out.ranges[a].first = std::min(out.ranges[a].first, xi[a]);
          out.ranges[a].second = std::max(out.ranges[a].second, xi[a]);
        }
      }
    }
  }

  ReducedSpace space;
  for (int a = 0; a < dp; ++a) {
    if (!cfg.knots.empty()) {
      space.axes.emplace_back(cfg.family, cfg.knots[a], cfg.degree);
      continue;
    }
    double lo = out.ranges[a].first, hi = out.ranges[a].second;
    if (!(hi > lo)) {
      const double pad = std::max(1e-8, 1e-8 * std::abs(lo));
      lo -= pad;
      hi += pad;
    }
    space.axes.push_back(HypothesisSpace::uniform(lo, hi, cfg.n, cfg.family, cfg.degree));
  }
  const int n_tot = space.dim();

  const double w = 1.0 / N;
  auto features = [&](int m, int l, Eigen::MatrixXd& F, Eigen::VectorXd& y) {
    const auto c = ds.column(m, l);
    auto x = ds.positions.col(c);
    y = ds.velocities->col(c);
    int idx[128];
    double vals[128];
    for (int i = 0; i < N; ++i) {
      for (int j = 0; j < N; ++j) {
        if (i == j) continue;
        const Eigen::VectorXd xi = map.B * pairwise_feature_map(x.segment(i * d, d), x.segment(j * d, d));
        const int k = space.eval_nonzero(xi.data(), idx, vals);
        const Eigen::VectorXd diff = x.segment(j * d, d) - x.segment(i * d, d);
        for (int q = 0; q < k; ++q) F.block(i * d, idx[q], d, 1) += (w * vals[q]) * diff;
      }
    }
  };
  AssemblyOptions aopt;
  aopt.threads = cfg.threads;
  NormalSystem sys = accumulate_normal_system(ds, n_tot, features,
                                              Eigen::VectorXd::Constant(static_cast<Eigen::Index>(N) * d, w), aopt);
  SolveResult sol = solve(sys, cfg.ridge, cfg.trunc_tol);
  out.estimate = ReducedKernelEstimate{map, space, sol.alpha};
  out.rank = sol.rank;
  out.condition = sol.condition;
  out.empirical_loss = std::max(0.0, sys.loss(sol.alpha));
  return out;
}

}  // namespace collective
