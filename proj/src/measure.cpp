#include "collective/measure.hpp"

#include "collective/estimator.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <limits>
#include <sstream>

namespace collective {

namespace {

void require_positions(const TrajectoryDataset& ds) {
  if (ds.spec.N < 2) throw DataError("pairwise distances need N >= 2");
  const long rows = static_cast<long>(ds.spec.N) * ds.spec.d;
  if (ds.positions.rows() != rows || ds.positions.cols() != static_cast<long>(ds.M) * ds.L())
    throw DataError("positions shape inconsistent with (M, L, N, d)");
}

template <typename Visit>
void for_each_pair(const TrajectoryDataset& ds, Visit&& visit) {
  const int N = ds.spec.N;
  const int d = ds.spec.d;
  for (Eigen::Index c = 0; c < ds.positions.cols(); ++c) {
    auto x = ds.positions.col(c);
    for (int i = 0; i < N; ++i)
      for (int j = i + 1; j < N; ++j) visit(c, i, j, (x.segment(j * d, d) - x.segment(i * d, d)).norm());
  }
}

std::pair<double, double> histogram_range(double lo, double hi) {
  if (hi > lo) return {lo, hi};
  const double pad = std::max(1e-8, 1e-8 * std::abs(lo));
  return {std::max(0.0, lo - pad), hi + pad};
}

EmpiricalRho make_histogram(double lo, double hi, int bins) {
  if (bins < 1) throw ConfigError("rho needs at least one bin");
  if (!(hi > lo)) throw ConfigError("rho range must satisfy lo < hi");
  EmpiricalRho rho;
  rho.edges.resize(bins + 1);
  for (int b = 0; b <= bins; ++b) rho.edges[b] = lo + (hi - lo) * b / bins;
  rho.edges[bins] = hi;
  rho.mass = Eigen::VectorXd::Zero(bins);
  rho.weights = Eigen::VectorXd::Zero(bins);
  return rho;
}

void add_sample(EmpiricalRho& rho, double r) {
  const int B = rho.bins();
  const double lo = rho.edges[0];
  const double hi = rho.edges[B];
  if (!(r >= lo) || !(r <= hi)) {
    ++rho.dropped;
    return;
  }
  int b = static_cast<int>((r - lo) / (hi - lo) * B);
  b = std::clamp(b, 0, B - 1);
  // guard against rounding across an edge
  while (b > 0 && r < rho.edges[b]) --b;
  while (b < B - 1 && r >= rho.edges[b + 1]) ++b;
  rho.mass[b] += 1.0;
}

void normalize(EmpiricalRho& rho) {
  const double total = rho.mass.sum();
  if (total <= 0.0) throw DataError("no pairwise distances inside the rho range");
  rho.weights = rho.mass / total;
}

}  // namespace

std::vector<Radii> support_radii(const TrajectoryDataset& ds) {
  require_positions(ds);
  const auto& part = ds.spec.partition;
  const int K = part.types();
  std::vector<Radii> out(static_cast<std::size_t>(K) * K);
  for (auto& r : out) {
    r.r_min = std::numeric_limits<double>::infinity();
    r.r_max = -std::numeric_limits<double>::infinity();
  }
  for_each_pair(ds, [&](Eigen::Index, int i, int j, double r) {
    const int a = part.type_of(i);
    const int b = part.type_of(j);
    for (auto idx : {a * K + b, b * K + a}) {
      out[idx].r_min = std::min(out[idx].r_min, r);
      out[idx].r_max = std::max(out[idx].r_max, r);
      ++out[idx].count;
      if (a == b) break;
    }
  });
  for (auto& r : out)
    if (r.count == 0) r.r_min = r.r_max = 0.0;
  return out;
}

EmpiricalRho estimate_rho(const TrajectoryDataset& ds, const RhoOptions& opts) {
  require_positions(ds);
  double lo, hi;
  if (opts.range) {
    std::tie(lo, hi) = *opts.range;
  } else {
    lo = std::numeric_limits<double>::infinity();
    hi = -lo;
    for_each_pair(ds, [&](Eigen::Index, int, int, double r) {
      lo = std::min(lo, r);
      hi = std::max(hi, r);
    });
    std::tie(lo, hi) = histogram_range(lo, hi);
  }
  EmpiricalRho rho = make_histogram(lo, hi, opts.bins);
  for_each_pair(ds, [&](Eigen::Index, int, int, double r) { add_sample(rho, r); });
  normalize(rho);
  return rho;
}

std::vector<EmpiricalRho> estimate_rho_per_type(const TrajectoryDataset& ds, const RhoOptions& opts) {
  require_positions(ds);
  const auto& part = ds.spec.partition;
  const int K = part.types();
  const auto radii = support_radii(ds);
  std::vector<EmpiricalRho> out(static_cast<std::size_t>(K) * K);
  for (int a = 0; a < K; ++a) {
    for (int b = a; b < K; ++b) {
      const Radii& rr = radii[a * K + b];
      EmpiricalRho rho;
      if (rr.count > 0) {
        auto [lo, hi] = opts.range ? *opts.range : histogram_range(rr.r_min, rr.r_max);
        rho = make_histogram(lo, hi, opts.bins);
      }
      rho.k1 = a;
      rho.k2 = b;
      out[a * K + b] = rho;
    }
  }
  for_each_pair(ds, [&](Eigen::Index, int i, int j, double r) {
    int a = part.type_of(i);
    int b = part.type_of(j);
    if (a > b) std::swap(a, b);
    add_sample(out[a * K + b], r);
  });
  for (int a = 0; a < K; ++a) {
    for (int b = a; b < K; ++b) {
      EmpiricalRho& rho = out[a * K + b];
      if (rho.bins() > 0 && rho.mass.sum() > 0.0) normalize(rho);
      if (a != b) {
        out[b * K + a] = rho;
        out[b * K + a].k1 = b;
        out[b * K + a].k2 = a;
      }
    }
  }
  return out;
}

Eigen::MatrixXd moment_gram(const HypothesisSpace& space, const EmpiricalRho& rho, const Eigen::VectorXd& moment) {
  const int n = space.dim();
  Eigen::MatrixXd G = Eigen::MatrixXd::Zero(n, n);
  double v[16];
  for (int b = 0; b < rho.bins(); ++b) {
    if (moment[b] == 0.0) continue;
    const int first = space.eval_nonzero(rho.midpoint(b), v);
    if (first < 0) continue;
    for (int p = 0; p <= space.degree(); ++p)
      for (int q = 0; q <= space.degree(); ++q) G(first + p, first + q) += moment[b] * v[p] * v[q];
  }
  return G;
}

Eigen::MatrixXd rho_gram(const HypothesisSpace& space, const EmpiricalRho& rho) {
  Eigen::VectorXd moment(rho.bins());
  for (int b = 0; b < rho.bins(); ++b) moment[b] = rho.weights[b] * rho.midpoint(b) * rho.midpoint(b);
  return moment_gram(space, rho, moment);
}

double min_generalized_eigenvalue(const Eigen::MatrixXd& A, const Eigen::MatrixXd& G) {
  if (A.rows() != A.cols() || G.rows() != G.cols() || A.rows() != G.rows())
    throw ConfigError("generalized eigenproblem needs square matrices of equal size");
  const Eigen::Index n = G.rows();
  if (n == 0) throw ConfigError("empty basis");
  const double scale = G.diagonal().cwiseAbs().maxCoeff();
  std::vector<int> dead;
  for (Eigen::Index p = 0; p < n; ++p)
    if (!(G(p, p) > 1e-14 * scale)) dead.push_back(static_cast<int>(p) + 1);
  if (!dead.empty() || scale <= 0.0) {
    std::ostringstream os;
    os << "degenerate basis: elements";
    for (int p : dead) os << " " << p;
    os << " vanish on the support of rho";
    throw DataError(os.str());
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eg(G);
  const Eigen::VectorXd gl = eg.eigenvalues();
  if (!(gl.minCoeff() > 1e-13 * gl.maxCoeff()))
    throw NumericalError("degenerate basis: rho Gram matrix is singular");
  const Eigen::MatrixXd Ginvhalf =
      eg.eigenvectors() * gl.cwiseSqrt().cwiseInverse().asDiagonal() * eg.eigenvectors().transpose();
  Eigen::MatrixXd C = Ginvhalf * A * Ginvhalf;
  C = 0.5 * (C + C.transpose()).eval();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> ec(C, Eigen::EigenvaluesOnly);
  return std::max(0.0, ec.eigenvalues()[0]);
}

double estimate_coercivity(const TrajectoryDataset& ds, const HypothesisSpace& H, int bins) {
  if (ds.spec.order != SystemOrder::First || ds.spec.partition.types() != 1)
    throw ConfigError("estimate_coercivity expects a homogeneous first-order dataset");
  NormalSystem sys = assemble_normal_system(ds, {KernelBlock{KernelRole::Energy, 0, 0, H}});
  RhoOptions ro;
  ro.bins = bins;
  EmpiricalRho rho = estimate_rho(ds, ro);
  return min_generalized_eigenvalue(sys.A, rho_gram(H, rho));
}

}  // namespace collective
