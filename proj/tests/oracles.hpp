#pragma once

#include <collective/estimator.hpp>

#include <cmath>
#include <functional>
#include <random>
#include <vector>

namespace oracle {

using Kernel = std::function<double(double)>;

/// Textbook recursive Cox-de Boor basis N_{i,p} on a clamped knot vector,
/// with the right end of the last nonempty interval closed.
inline double cox_de_boor(const std::vector<double>& t, int i, int p, double r) {
  if (p == 0) {
    const bool last = t[i + 1] == t.back() && t[i] < t[i + 1];
    if (t[i] <= r && (r < t[i + 1] || (last && r == t[i + 1]))) return 1.0;
    return 0.0;
  }
  double out = 0.0;
  const double a = t[i + p] - t[i];
  const double b = t[i + p + 1] - t[i + 1];
  if (a > 0.0) out += (r - t[i]) / a * cox_de_boor(t, i, p - 1, r);
  if (b > 0.0) out += (t[i + p + 1] - r) / b * cox_de_boor(t, i + 1, p - 1, r);
  return out;
}

/// All basis functions of a clamped spline space with the given breakpoints.
inline std::vector<double> basis_values(const std::vector<double>& breaks, int p, double r) {
  std::vector<double> t;
  for (int k = 0; k < p; ++k) t.push_back(breaks.front());
  t.insert(t.end(), breaks.begin(), breaks.end());
  for (int k = 0; k < p; ++k) t.push_back(breaks.back());
  const int n = static_cast<int>(breaks.size()) - 1 + p;
  std::vector<double> out(n, 0.0);
  if (r < breaks.front() || r > breaks.back()) return out;
  for (int i = 0; i < n; ++i) out[i] = cox_de_boor(t, i, p, r);
  return out;
}

/// Double loop over ordered pairs (i, i'), i' != i.
inline Eigen::VectorXd rhs_first(const Eigen::VectorXd& X, const std::vector<std::vector<Kernel>>& phi,
                                 const std::vector<int>& type, int d) {
  const int N = static_cast<int>(type.size());
  std::vector<int> count(phi.size(), 0);
  for (int c : type) ++count[c];
  Eigen::VectorXd out = Eigen::VectorXd::Zero(X.size());
  for (int i = 0; i < N; ++i) {
    for (int j = 0; j < N; ++j) {
      if (j == i) continue;
      double r2 = 0.0;
      for (int c = 0; c < d; ++c) r2 += (X[j * d + c] - X[i * d + c]) * (X[j * d + c] - X[i * d + c]);
      const double r = std::max(std::sqrt(r2), 1e-10);
      const double w = phi[type[i]][type[j]](r) / count[type[j]];
      for (int c = 0; c < d; ++c) out[i * d + c] += w * (X[j * d + c] - X[i * d + c]);
    }
  }
  return out;
}

inline Eigen::VectorXd rhs_second(const Eigen::VectorXd& X, const Eigen::VectorXd& V, const Kernel& phiE,
                                  const Kernel& phiA, const Eigen::VectorXd& mass, double a1, double a2, int d) {
  const int N = static_cast<int>(mass.size());
  Eigen::VectorXd out = Eigen::VectorXd::Zero(X.size());
  for (int i = 0; i < N; ++i) {
    double v2 = 0.0;
    for (int c = 0; c < d; ++c) v2 += V[i * d + c] * V[i * d + c];
    for (int c = 0; c < d; ++c) out[i * d + c] = a1 * V[i * d + c] + a2 * (1.0 - v2) * V[i * d + c];
    for (int j = 0; j < N; ++j) {
      if (j == i) continue;
      double r2 = 0.0;
      for (int c = 0; c < d; ++c) r2 += (X[j * d + c] - X[i * d + c]) * (X[j * d + c] - X[i * d + c]);
      const double r = std::sqrt(r2);
      for (int c = 0; c < d; ++c)
        out[i * d + c] +=
            (phiE(r) * (X[j * d + c] - X[i * d + c]) + phiA(r) * (V[j * d + c] - V[i * d + c])) / N;
    }
    for (int c = 0; c < d; ++c) out[i * d + c] /= mass[i];
  }
  return out;
}

/// Dense normal equations for one homogeneous first-order energy kernel,
/// one snapshot at a time, with the basis from basis_values.
struct Dense {
  Eigen::MatrixXd A;
  Eigen::VectorXd b;
};

inline Dense first_order_normal_equations(const collective::TrajectoryDataset& ds, const std::vector<double>& breaks,
                                          int p) {
  const int N = ds.spec.N, d = ds.spec.d;
  const int n = static_cast<int>(breaks.size()) - 1 + p;
  Dense out{Eigen::MatrixXd::Zero(n, n), Eigen::VectorXd::Zero(n)};
  const int S = static_cast<int>(ds.positions.cols());
  for (int s = 0; s < S; ++s) {
    Eigen::MatrixXd F = Eigen::MatrixXd::Zero(N * d, n);
    const Eigen::VectorXd x = ds.positions.col(s);
    for (int i = 0; i < N; ++i) {
      for (int j = 0; j < N; ++j) {
        if (i == j) continue;
        const Eigen::VectorXd dx = x.segment(j * d, d) - x.segment(i * d, d);
        const auto psi = basis_values(breaks, p, dx.norm());
        for (int k = 0; k < n; ++k) F.block(i * d, k, d, 1) += psi[k] * dx / N;
      }
    }
    const Eigen::VectorXd y = ds.velocities->col(s);
    out.A += F.transpose() * F / N;
    out.b += F.transpose() * y / N;
  }
  out.A /= S;
  out.b /= S;
  return out;
}

inline Eigen::VectorXd random_vector(int n, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Eigen::VectorXd v(n);
  for (int k = 0; k < n; ++k) v[k] = u(rng);
  return v;
}

/// First-order dataset holding the given snapshot columns as one trajectory.
inline collective::TrajectoryDataset snapshots(const collective::SystemSpec& spec, const Eigen::MatrixXd& X,
                                               const Eigen::MatrixXd& V) {
  collective::TrajectoryDataset ds;
  ds.spec = spec;
  ds.M = 1;
  ds.times = Eigen::VectorXd::LinSpaced(X.cols(), 0.0, static_cast<double>(X.cols() - 1));
  ds.positions = X;
  ds.velocities = V;
  return ds;
}

}  // namespace oracle
