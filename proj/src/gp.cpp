#include "collective/gp.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/QR>
#include <omp.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>

namespace collective {

std::string to_string(CovarianceFamily f) {
  return f == CovarianceFamily::SquaredExponential ? "se" : "matern52";
}

CovarianceFamily parse_covariance(const std::string& s) {
  if (s == "se" || s == "squared_exponential") return CovarianceFamily::SquaredExponential;
  if (s == "matern52") return CovarianceFamily::Matern52;
  throw ConfigError("unknown covariance family '" + s + "' (expected se|matern52)");
}

double CovarianceParams::operator()(double tau) const {
  const double u = std::abs(tau) / lengthscale;
  if (family == CovarianceFamily::SquaredExponential) return variance * std::exp(-0.5 * u * u);
  const double a = std::sqrt(5.0) * u;
  return variance * (1.0 + a + a * a / 3.0) * std::exp(-a);
}

Eigen::ArrayXXd CovarianceParams::operator()(const Eigen::ArrayXXd& tau) const {
  const Eigen::ArrayXXd u = tau.abs() / lengthscale;
  if (family == CovarianceFamily::SquaredExponential) return variance * (-0.5 * u.square()).exp();
  const Eigen::ArrayXXd a = std::sqrt(5.0) * u;
  return variance * (1.0 + a + a.square() / 3.0) * (-a).exp();
}

std::vector<std::string> GPConfig::violations() const {
  std::vector<std::string> out;
  auto check = [&](const CovarianceParams& p, const char* role) {
    if (!(p.variance > 0.0) || !std::isfinite(p.variance))
      out.push_back(std::string(role) + " signal variance must be positive");
    if (!(p.lengthscale > 0.0) || !std::isfinite(p.lengthscale))
      out.push_back(std::string(role) + " lengthscale must be positive");
  };
  check(energy, "energy");
  check(alignment, "alignment");
  if (!(noise_variance > 0.0) || !std::isfinite(noise_variance)) out.emplace_back("noise variance must be positive");
  return out;
}

namespace {

void require_config(const GPConfig& cfg) {
  auto v = cfg.violations();
  if (!v.empty()) throw ConfigError("invalid GP config: " + v.front());
}

}  // namespace

GPProblem::GPProblem(const TrajectoryDataset& ds, int cap) : N_(ds.spec.N), d_(ds.spec.d) {
  if (ds.spec.order != SystemOrder::Second) throw DataError("GP learning needs a second-order dataset");
  if (ds.spec.partition.types() > 1) throw ConfigError("GP learning supports homogeneous systems (K = 1)");
  if (N_ < 1 || d_ < 1) throw DataError("GP learning needs N >= 1 and d >= 1");
  const long S = static_cast<long>(ds.M) * ds.L();
  const long n = S * N_ * d_;
  if (n > cap)
    throw ConfigError("resource limit: dNML = " + std::to_string(n) + " exceeds cap " + std::to_string(cap) +
                      "; subsample trajectories or snapshots");
  const long rows = static_cast<long>(N_) * d_;
  if (S > 0) {
    if (!ds.velocities || !ds.accelerations) throw DataError("missing derivatives for learning");
    if (ds.positions.rows() != rows || ds.positions.cols() != S || ds.velocities->rows() != rows ||
        ds.velocities->cols() != S || ds.accelerations->rows() != rows || ds.accelerations->cols() != S)
      throw DataError("array shapes inconsistent with (M, L, N, d)");
  }
  n_ = static_cast<int>(n);
  const Eigen::VectorXd masses = ds.spec.masses.size() == N_ ? ds.spec.masses : Eigen::VectorXd::Ones(N_);
  mZ_.resize(n_);
  velocities_.resize(n_);
  const int P = N_ * (N_ - 1) / 2;
  const double w = 1.0 / N_;
  for (long s = 0; s < S; ++s) {
    auto x = ds.positions.col(s);
    auto v = ds.velocities->col(s);
    auto a = ds.accelerations->col(s);
    for (int i = 0; i < N_; ++i) mZ_.segment(s * rows + i * d_, d_) = masses[i] * a.segment(i * d_, d_);
    velocities_.segment(s * rows, rows) = v;
    Block b;
    b.r.resize(P);
    b.energy = Eigen::MatrixXd::Zero(rows, P);
    b.alignment = Eigen::MatrixXd::Zero(rows, P);
    int p = 0;
    for (int i = 0; i < N_; ++i) {
      for (int j = i + 1; j < N_; ++j, ++p) {
        const Eigen::VectorXd dx = x.segment(j * d_, d_) - x.segment(i * d_, d_);
        const Eigen::VectorXd dv = v.segment(j * d_, d_) - v.segment(i * d_, d_);
        b.r[p] = dx.norm();
        b.energy.block(i * d_, p, d_, 1) = w * dx;
        b.energy.block(j * d_, p, d_, 1) = -w * dx;
        b.alignment.block(i * d_, p, d_, 1) = w * dv;
        b.alignment.block(j * d_, p, d_, 1) = -w * dv;
      }
    }
    blocks_.push_back(std::move(b));
  }
}

int GPProblem::pair_count() const {
  int P = 0;
  for (const auto& b : blocks_) P += static_cast<int>(b.r.size());
  return P;
}

Eigen::MatrixXd GPProblem::force_basis() const {
  Eigen::MatrixXd out(n_, 2);
  for (int k = 0; k < n_ / std::max(d_, 1); ++k) {
    auto v = velocities_.segment(static_cast<Eigen::Index>(k) * d_, d_);
    out.block(static_cast<Eigen::Index>(k) * d_, 0, d_, 1) = v;
    out.block(static_cast<Eigen::Index>(k) * d_, 1, d_, 1) = (1.0 - v.squaredNorm()) * v;
  }
  return out;
}

Eigen::VectorXd GPProblem::response(const ParametricForce& force) const {
  if (!force.enabled || n_ == 0) return mZ_;
  const Eigen::MatrixXd Fb = force_basis();
  return mZ_ - force.friction * Fb.col(0) - force.propulsion * Fb.col(1);
}

Eigen::MatrixXd GPProblem::covariance(const GPConfig& cfg, int threads) const {
  require_config(cfg);
  Eigen::MatrixXd C = Eigen::MatrixXd::Zero(n_, n_);
  const int S = snapshot_count();
  const int rows = N_ * d_;
  if (S == 0 || N_ < 2) return C;
  std::vector<std::pair<int, int>> tasks;
  for (int s = 0; s < S; ++s)
    for (int t = s; t < S; ++t) tasks.emplace_back(s, t);
  std::vector<std::pair<int, int>> pairs;
  for (int i = 0; i < N_; ++i)
    for (int j = i + 1; j < N_; ++j) pairs.emplace_back(i, j);
  const int P = static_cast<int>(pairs.size());
  const int nt = threads > 0 ? threads : omp_get_max_threads();
#pragma omp parallel for schedule(dynamic) num_threads(nt)
  for (std::size_t k = 0; k < tasks.size(); ++k) {
    const auto [s, t] = tasks[k];
    const Block& a = blocks_[s];
    const Block& b = blocks_[t];
    // tau(q, p) = r_q(t) - r_p(s); each pair column of Phi touches two agents only
    const Eigen::ArrayXXd tau = (b.r.replicate(1, P).rowwise() - a.r.transpose()).array();
    Eigen::MatrixXd blk = Eigen::MatrixXd::Zero(rows, rows);
    Eigen::MatrixXd Tt(P, rows);
    for (int role = 0; role < 2; ++role) {
      const Eigen::MatrixXd Kt = (role == 0 ? cfg.energy(tau) : cfg.alignment(tau)).matrix();
      const Eigen::MatrixXd& phi_s = role == 0 ? a.energy : a.alignment;
      const Eigen::MatrixXd& phi_t = role == 0 ? b.energy : b.alignment;
      Tt.setZero();
      for (int p = 0; p < P; ++p) {
        const auto [i, j] = pairs[p];
        for (int c = 0; c < d_; ++c) {
          const double u = phi_s(i * d_ + c, p);
          Tt.col(i * d_ + c) += u * Kt.col(p);
          Tt.col(j * d_ + c) -= u * Kt.col(p);
        }
      }
      for (int q = 0; q < P; ++q) {
        const auto [i, j] = pairs[q];
        for (int c = 0; c < d_; ++c) {
          const double w = phi_t(i * d_ + c, q);
          blk.col(i * d_ + c) += w * Tt.row(q).transpose();
          blk.col(j * d_ + c) -= w * Tt.row(q).transpose();
        }
      }
    }
    if (s == t) blk = 0.5 * (blk + blk.transpose()).eval();
    C.block(static_cast<Eigen::Index>(s) * rows, static_cast<Eigen::Index>(t) * rows, rows, rows) = blk;
    if (s != t)
      C.block(static_cast<Eigen::Index>(t) * rows, static_cast<Eigen::Index>(s) * rows, rows, rows) = blk.transpose();
  }
  return C;
}

Eigen::MatrixXd GPProblem::cross_covariance(KernelRole role, const Eigen::VectorXd& rstar, const GPConfig& cfg) const {
  require_config(cfg);
  const CovarianceParams& k = role == KernelRole::Energy ? cfg.energy : cfg.alignment;
  const int rows = N_ * d_;
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(rstar.size(), n_);
  if (N_ < 2) return out;
  for (int s = 0; s < snapshot_count(); ++s) {
    const Block& b = blocks_[s];
    const Eigen::ArrayXXd tau = (rstar.replicate(1, b.r.size()).rowwise() - b.r.transpose()).array();
    const Eigen::MatrixXd& phi = role == KernelRole::Energy ? b.energy : b.alignment;
    out.middleCols(static_cast<Eigen::Index>(s) * rows, rows) = k(tau).matrix() * phi.transpose();
  }
  return out;
}

Eigen::VectorXd GPProblem::pair_distances() const {
  Eigen::VectorXd r(pair_count());
  Eigen::Index k = 0;
  for (const auto& b : blocks_) {
    r.segment(k, b.r.size()) = b.r;
    k += b.r.size();
  }
  return r;
}

Eigen::MatrixXd GPProblem::operator_matrix(KernelRole role) const {
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(n_, pair_count());
  const int rows = N_ * d_;
  Eigen::Index col = 0;
  for (int s = 0; s < snapshot_count(); ++s) {
    const Block& b = blocks_[s];
    const Eigen::MatrixXd& phi = role == KernelRole::Energy ? b.energy : b.alignment;
    out.block(static_cast<Eigen::Index>(s) * rows, col, rows, phi.cols()) = phi;
    col += phi.cols();
  }
  return out;
}

Eigen::MatrixXd assemble_gp_covariance(const TrajectoryDataset& ds, const GPConfig& cfg) {
  return GPProblem(ds).covariance(cfg);
}

Factorization factorize_with_jitter(const Eigen::MatrixXd& C) {
  Factorization f;
  const Eigen::Index n = C.rows();
  if (n == 0) {
    f.llt.compute(C);
    return f;
  }
  if (!C.allFinite()) throw NumericalError("conditioning: covariance contains non-finite entries");
  const double base = C.trace() / n;
  auto ok = [](const Eigen::LLT<Eigen::MatrixXd>& llt) {
    return llt.info() == Eigen::Success && llt.matrixLLT().diagonal().allFinite() &&
           (llt.matrixLLT().diagonal().array() > 0.0).all();
  };
  f.llt.compute(C);
  if (ok(f.llt)) return f;
  for (double j = 1e-10; j <= 1e-4 * (1 + 1e-9); j *= 10.0) {
    Eigen::MatrixXd Cj = C;
    Cj.diagonal().array() += j * base;
    f.llt.compute(Cj);
    if (ok(f.llt)) {
      f.jitter = j * base;
      return f;
    }
  }
  throw NumericalError("conditioning: covariance factorization failed after maximum jitter");
}

double nlml(const GPProblem& problem, const GPConfig& cfg) {
  require_config(cfg);
  Eigen::MatrixXd C = problem.covariance(cfg);
  C.diagonal().array() += cfg.noise_variance;
  const Factorization f = factorize_with_jitter(C);
  const Eigen::VectorXd r = problem.response(cfg.force);
  const int n = problem.size();
  if (n == 0) return 0.0;
  const Eigen::VectorXd alpha = f.llt.solve(r);
  const double logdet = 2.0 * f.llt.matrixLLT().diagonal().array().log().sum();
  return 0.5 * r.dot(alpha) + 0.5 * logdet + 0.5 * n * std::log(2.0 * std::numbers::pi);
}

double nlml(const TrajectoryDataset& ds, const GPConfig& cfg) { return nlml(GPProblem(ds), cfg); }

GPConfig default_gp_config(const TrajectoryDataset& ds) {
  GPConfig cfg;
  GPProblem problem(ds);
  Eigen::VectorXd r = problem.pair_distances();
  double median = 1.0;
  if (r.size() > 0) {
    std::vector<double> v(r.data(), r.data() + r.size());
    std::nth_element(v.begin(), v.begin() + v.size() / 2, v.end());
    median = v[v.size() / 2] > 0.0 ? v[v.size() / 2] : 1.0;
  }
  cfg.energy.lengthscale = median;
  cfg.alignment.lengthscale = median;
  cfg.noise_variance = 1e-3;
  cfg.force = ds.spec.force;
  return cfg;
}

namespace {

struct ParamMap {
  bool train_force;
  std::vector<double> lo, hi;

  explicit ParamMap(const TrainBounds& b, bool force) : train_force(force) {
    auto add_log = [&](std::pair<double, double> p) {
      if (!(p.first > 0.0) || !(p.second >= p.first)) throw ConfigError("GP bounds must be positive with lo <= hi");
      lo.push_back(std::log(p.first));
      hi.push_back(std::log(p.second));
    };
    add_log(b.signal_variance);
    add_log(b.lengthscale);
    add_log(b.signal_variance);
    add_log(b.lengthscale);
    add_log(b.noise_variance);
    if (force) {
      if (!(b.force.second >= b.force.first)) throw ConfigError("force bounds must satisfy lo <= hi");
      for (int k = 0; k < 2; ++k) {
        lo.push_back(b.force.first);
        hi.push_back(b.force.second);
      }
    }
  }

  int size() const { return static_cast<int>(lo.size()); }

  Eigen::VectorXd clamp(Eigen::VectorXd u) const {
    for (int k = 0; k < size(); ++k) u[k] = std::clamp(u[k], lo[k], hi[k]);
    return u;
  }

  Eigen::VectorXd encode(const GPConfig& c) const {
    Eigen::VectorXd u(size());
    u[0] = std::log(c.energy.variance);
    u[1] = std::log(c.energy.lengthscale);
    u[2] = std::log(c.alignment.variance);
    u[3] = std::log(c.alignment.lengthscale);
    u[4] = std::log(c.noise_variance);
    if (train_force) {
      u[5] = c.force.friction;
      u[6] = c.force.propulsion;
    }
    return clamp(u);
  }

  GPConfig decode(const Eigen::VectorXd& u, GPConfig base) const {
    base.energy.variance = std::exp(u[0]);
    base.energy.lengthscale = std::exp(u[1]);
    base.alignment.variance = std::exp(u[2]);
    base.alignment.lengthscale = std::exp(u[3]);
    base.noise_variance = std::exp(u[4]);
    if (train_force) {
      base.force.enabled = true;
      base.force.friction = u[5];
      base.force.propulsion = u[6];
    }
    return base;
  }
};

struct NelderMead {
  std::function<double(const Eigen::VectorXd&)> f;
  const ParamMap* map;
  int max_evals;
  int evals = 0;

  double eval(const Eigen::VectorXd& u) {
    if (evals >= max_evals) return std::numeric_limits<double>::infinity();
    ++evals;
    return f(u);
  }

  std::pair<Eigen::VectorXd, double> run(Eigen::VectorXd x0, double step) {
    const int n = static_cast<int>(x0.size());
    x0 = map->clamp(x0);
    std::vector<Eigen::VectorXd> x(n + 1, x0);
    std::vector<double> fx(n + 1);
    for (int k = 0; k < n; ++k) {
      double s = step;
      if (x0[k] + s > map->hi[k]) s = -step;
      x[k + 1][k] += s;
      x[k + 1] = map->clamp(x[k + 1]);
    }
    for (int k = 0; k <= n; ++k) fx[k] = eval(x[k]);
    std::vector<int> idx(n + 1);
    while (evals < max_evals) {
      std::iota(idx.begin(), idx.end(), 0);
      std::sort(idx.begin(), idx.end(), [&](int a, int b) { return fx[a] < fx[b]; });
      const int best = idx[0], worst = idx[n], second = idx[n - 1];
      double xspread = 0.0;
      for (int k = 1; k <= n; ++k) xspread = std::max(xspread, (x[idx[k]] - x[best]).cwiseAbs().maxCoeff());
      const double fspread = std::abs(fx[worst] - fx[best]);
      if (xspread <= 1e-8 || (std::isfinite(fx[worst]) && fspread <= 1e-10 * (1.0 + std::abs(fx[best])) &&
                              xspread <= 1e-4))
        break;
      Eigen::VectorXd c = Eigen::VectorXd::Zero(n);
      for (int k = 0; k < n; ++k) c += x[idx[k]];
      c /= n;
      const Eigen::VectorXd xr = map->clamp(c + (c - x[worst]));
      const double fr = eval(xr);
      if (fr < fx[best]) {
        const Eigen::VectorXd xe = map->clamp(c + 2.0 * (c - x[worst]));
        const double fe = eval(xe);
        if (fe < fr) {
          x[worst] = xe;
          fx[worst] = fe;
        } else {
          x[worst] = xr;
          fx[worst] = fr;
        }
      } else if (fr < fx[second]) {
        x[worst] = xr;
        fx[worst] = fr;
      } else {
        const bool outside = fr < fx[worst];
        const Eigen::VectorXd xc = map->clamp(outside ? c + 0.5 * (xr - c) : c + 0.5 * (x[worst] - c));
        const double fc = eval(xc);
        if (fc < (outside ? fr : fx[worst])) {
          x[worst] = xc;
          fx[worst] = fc;
        } else {
          for (int k = 1; k <= n; ++k) {
            x[idx[k]] = map->clamp(x[best] + 0.5 * (x[idx[k]] - x[best]));
            fx[idx[k]] = eval(x[idx[k]]);
          }
        }
      }
    }
    int best = 0;
    for (int k = 1; k <= n; ++k)
      if (fx[k] < fx[best]) best = k;
    return {x[best], fx[best]};
  }
};

}  // namespace

TrainResult train(const GPProblem& problem, const GPConfig& init, const TrainBounds& bounds,
                  const TrainOptions& opts) {
  require_config(init);
  if (opts.restarts < 1) throw ConfigError("restarts must be at least 1");
  const ParamMap map(bounds, init.train_force);
  auto objective = [&](const Eigen::VectorXd& u) {
    try {
      const double v = nlml(problem, map.decode(u, init));
      return std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
    } catch (const NumericalError&) {
      return std::numeric_limits<double>::infinity();
    }
  };

  TrainResult result;
  result.nlml = std::numeric_limits<double>::infinity();
  Eigen::VectorXd best_u = map.encode(init);
  std::mt19937_64 rng(opts.seed);
  const Eigen::VectorXd u0 = map.encode(init);
  for (int start = 0; start < opts.restarts; ++start) {
    Eigen::VectorXd u = u0;
    if (start > 0) {
      for (int k = 0; k < map.size(); ++k) {
        const double lo = std::max(map.lo[k], u0[k] - 2.0);
        const double hi = std::min(map.hi[k], u0[k] + 2.0);
        u[k] = lo < hi ? std::uniform_real_distribution<double>(lo, hi)(rng) : lo;
      }
    }
    NelderMead nm{objective, &map, opts.max_evaluations};
    auto [x, fx] = nm.run(u, 0.5);
    // restart from the optimum until it stops improving
    while (std::isfinite(fx) && nm.evals + map.size() + 1 < opts.max_evaluations) {
      NelderMead nm2{objective, &map, opts.max_evaluations - nm.evals};
      auto [x2, f2] = nm2.run(x, 0.1);
      nm.evals += nm2.evals;
      const bool improved = f2 < fx - 1e-9 * (1.0 + std::abs(fx));
      if (f2 < fx) {
        x = x2;
        fx = f2;
      }
      if (!improved) break;
    }
    result.evaluations += nm.evals;
    if (fx < result.nlml) {
      result.nlml = fx;
      best_u = x;
    }
    result.trace.push_back(result.nlml);
  }
  if (!std::isfinite(result.nlml)) throw NumericalError("conditioning: every training start failed to factorize");
  result.config = map.decode(best_u, init);
  return result;
}

TrainResult train(const TrajectoryDataset& ds, const GPConfig& init, const TrainBounds& bounds,
                  const TrainOptions& opts) {
  return train(GPProblem(ds), init, bounds, opts);
}

GPPosterior GPPosterior::fit(std::shared_ptr<const GPProblem> problem, const GPConfig& cfg) {
  require_config(cfg);
  GPPosterior post;
  post.problem_ = std::move(problem);
  post.cfg_ = cfg;
  Eigen::MatrixXd C = post.problem_->covariance(cfg);
  C.diagonal().array() += cfg.noise_variance;
  Factorization f = factorize_with_jitter(C);
  post.llt_ = std::move(f.llt);
  post.jitter_ = f.jitter;
  const Eigen::VectorXd r = post.problem_->response(cfg.force);
  post.weights_ = r.size() ? Eigen::VectorXd(post.llt_.solve(r)) : Eigen::VectorXd();
  post.trained_ = true;
  return post;
}

GPPosterior GPPosterior::fit(const TrajectoryDataset& ds, const GPConfig& cfg) {
  return fit(std::make_shared<const GPProblem>(ds), cfg);
}

KernelPrediction GPPosterior::predict(KernelRole role, const Eigen::VectorXd& rstar) const {
  if (!trained_) throw StateError("GP posterior used before training");
  if ((rstar.array() < 0.0).any()) throw ConfigError("posterior grid must be nonnegative");
  const CovarianceParams& k = role == KernelRole::Energy ? cfg_.energy : cfg_.alignment;
  KernelPrediction out;
  out.mean = Eigen::VectorXd::Zero(rstar.size());
  out.variance = Eigen::VectorXd::Constant(rstar.size(), k(0.0));
  if (problem_->size() == 0) return out;
  const Eigen::MatrixXd Kc = problem_->cross_covariance(role, rstar, cfg_);
  out.mean = Kc * weights_;
  const Eigen::MatrixXd V = llt_.matrixL().solve(Kc.transpose());
  out.variance -= V.colwise().squaredNorm().transpose();
  for (Eigen::Index q = 0; q < out.variance.size(); ++q) {
    if (out.variance[q] < 0.0) {
      out.variance[q] = 0.0;
      ++out.clamped;
    }
  }
  return out;
}

KernelPrediction posterior_kernel(const GPPosterior& post, KernelRole role, const Eigen::VectorXd& rstar) {
  return post.predict(role, rstar);
}

RepresenterResult representer_check(const TrajectoryDataset& ds, const GPConfig& cfg, double lambda_E,
                                    double lambda_A, std::optional<Eigen::VectorXd> grid, bool scale_prior) {
  require_config(cfg);
  if (!(lambda_E > 0.0) || !(lambda_A > 0.0)) throw ConfigError("regularization weights must be positive");
  auto problem = std::make_shared<const GPProblem>(ds);
  RepresenterResult res;
  if (grid) {
    res.grid = *grid;
  } else {
    RhoOptions ro;
    ro.bins = 50;
    const EmpiricalRho rho = estimate_rho(ds, ro);
    std::vector<double> g;
    for (int b = 0; b < rho.bins(); ++b)
      if (rho.weights[b] > 0.0) g.push_back(rho.midpoint(b));
    res.grid = Eigen::Map<Eigen::VectorXd>(g.data(), static_cast<Eigen::Index>(g.size()));
  }

  const double S = static_cast<double>(ds.M) * ds.L();
  const double N = ds.spec.N;
  const double sigma2 = cfg.noise_variance;

  // GP route: posterior mean under the rescaled prior
  GPConfig gcfg = cfg;
  if (scale_prior) {
    gcfg.energy.variance *= sigma2 / (S * N * lambda_E);
    gcfg.alignment.variance *= sigma2 / (S * N * lambda_A);
  }
  const GPPosterior post = GPPosterior::fit(problem, gcfg);
  res.gp_energy = post.predict(KernelRole::Energy, res.grid).mean;
  res.gp_alignment = post.predict(KernelRole::Alignment, res.grid).mean;

  // ridge route: representer coefficients on the pair distances
  const Eigen::VectorXd r = problem->pair_distances();
  const Eigen::Index P = r.size();
  const Eigen::ArrayXXd tau = (r.replicate(1, P).rowwise() - r.transpose()).array();
  const Eigen::MatrixXd KE = cfg.energy(tau).matrix();
  const Eigen::MatrixXd KA = cfg.alignment(tau).matrix();
  const Eigen::MatrixXd PhiE = problem->operator_matrix(KernelRole::Energy);
  const Eigen::MatrixXd PhiA = problem->operator_matrix(KernelRole::Alignment);
  const Eigen::VectorXd z = problem->response(cfg.force);
  const Eigen::Index n = z.size();

  auto sqrt_psd = [](const Eigen::MatrixXd& K) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(K);
    const Eigen::VectorXd ev = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    return Eigen::MatrixXd(ev.asDiagonal() * es.eigenvectors().transpose());
  };
  // minimize |B beta - z|^2 + S N beta' R beta as one stacked least squares
  Eigen::MatrixXd Aug = Eigen::MatrixXd::Zero(n + 2 * P, 2 * P);
  Aug.block(0, 0, n, P) = PhiE * KE;
  Aug.block(0, P, n, P) = PhiA * KA;
  Aug.block(n, 0, P, P) = std::sqrt(S * N * lambda_E) * sqrt_psd(KE);
  Aug.block(n + P, P, P, P) = std::sqrt(S * N * lambda_A) * sqrt_psd(KA);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n + 2 * P);
  rhs.head(n) = z;
  const Eigen::VectorXd beta = Aug.completeOrthogonalDecomposition().solve(rhs);

  const Eigen::ArrayXXd tg = (res.grid.replicate(1, P).rowwise() - r.transpose()).array();
  res.ridge_energy = cfg.energy(tg).matrix() * beta.head(P);
  res.ridge_alignment = cfg.alignment(tg).matrix() * beta.tail(P);

  res.max_discrepancy = 0.0;
  if (res.grid.size() > 0) {
    res.max_discrepancy = std::max((res.gp_energy - res.ridge_energy).cwiseAbs().maxCoeff(),
                                   (res.gp_alignment - res.ridge_alignment).cwiseAbs().maxCoeff());
  }
  return res;
}

}  // namespace collective
