#include "collective/sim.hpp"

#include <omp.h>

#include <cmath>
#include <exception>
#include <sstream>

namespace collective {

std::string to_string(IntegratorMethod m) { return m == IntegratorMethod::RK4Fixed ? "rk4" : "rk45"; }

IntegratorMethod parse_integrator(const std::string& s) {
  if (s == "rk4") return IntegratorMethod::RK4Fixed;
  if (s == "rk45") return IntegratorMethod::RK45Adaptive;
  throw ConfigError("unknown integrator '" + s + "' (expected rk4|rk45)");
}

std::vector<std::string> IntegratorConfig::violations() const {
  std::vector<std::string> out;
  if (!(step > 0.0)) out.emplace_back("integrator step must be positive");
  if (!(abs_tol > 0.0) || !(rel_tol > 0.0)) out.emplace_back("integrator tolerances must be positive");
  if (max_steps < 1) out.emplace_back("max_steps must be positive");
  return out;
}

IntegratorConfig default_integrator(const KernelSet& kernels) {
  IntegratorConfig cfg;
  if (!kernels.continuous()) cfg.method = IntegratorMethod::RK4Fixed;
  return cfg;
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

Eigen::VectorXd sample_agents(const InitialDistribution& mu, int N, int d, std::mt19937_64& rng) {
  auto bad = mu.violations();
  if (!bad.empty()) throw ConfigError("invalid initial distribution: " + bad.front());
  Eigen::VectorXd x(static_cast<Eigen::Index>(N) * d);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  switch (mu.family) {
    case DistributionFamily::UniformBox:
      for (Eigen::Index k = 0; k < x.size(); ++k) x[k] = mu.lower + (mu.upper - mu.lower) * unif(rng);
      break;
    case DistributionFamily::Gaussian:
      for (Eigen::Index k = 0; k < x.size(); ++k) x[k] = mu.mean + mu.stddev * normal(rng);
      break;
    case DistributionFamily::UniformAnnulus:
      for (int i = 0; i < N; ++i) {
        Eigen::VectorXd dir(d);
        do {
          for (int j = 0; j < d; ++j) dir[j] = normal(rng);
        } while (dir.norm() == 0.0);
        dir.normalize();
        const double a = std::pow(mu.inner, d);
        const double b = std::pow(mu.outer, d);
        const double r = std::pow(a + (b - a) * unif(rng), 1.0 / d);
        x.segment(i * d, d) = r * dir;
      }
      break;
  }
  return x;
}

InitialState sample_initial(const InitialDistribution& positions, const InitialDistribution& velocities,
                            const SystemSpec& spec, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  InitialState s;
  s.positions = sample_agents(positions, spec.N, spec.d, rng);
  if (spec.order == SystemOrder::Second) s.velocities = sample_agents(velocities, spec.N, spec.d, rng);
  return s;
}

namespace {

std::string at_time(double t) {
  std::ostringstream os;
  os.precision(17);
  os << "t=" << t;
  return os.str();
}

void check_finite(const Eigen::VectorXd& y, double t) {
  if (!y.allFinite()) throw IntegrationError("non-finite state at " + at_time(t));
}

void rk4_interval(const OdeRhs& f, Eigen::VectorXd& y, double t0, double t1, double h_req, long& steps,
                  long max_steps) {
  const double span = t1 - t0;
  const long n = std::max(1L, static_cast<long>(std::ceil(span / h_req - 1e-9)));
  const double h = span / n;
  const Eigen::Index dim = y.size();
  Eigen::VectorXd k1(dim), k2(dim), k3(dim), k4(dim), tmp(dim);
  for (long s = 0; s < n; ++s) {
    if (++steps > max_steps) throw IntegrationError("max_steps exceeded at " + at_time(t0 + s * h));
    const double t = t0 + s * h;
    f(t, y, k1);
    tmp = y + 0.5 * h * k1;
    f(t + 0.5 * h, tmp, k2);
    tmp = y + 0.5 * h * k2;
    f(t + 0.5 * h, tmp, k3);
    tmp = y + h * k3;
    f(t + h, tmp, k4);
    y += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    check_finite(y, t + h);
  }
}

// Dormand-Prince 5(4) tableau.
constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
constexpr double a21 = 1.0 / 5;
constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561, a54 = -212.0 / 729;
constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                 a65 = -5103.0 / 18656;
constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784, b6 = 11.0 / 84;
constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                 e6 = 22.0 / 525, e7 = -1.0 / 40;

void rk45_interval(const OdeRhs& f, Eigen::VectorXd& y, double t0, double t1, double& h, long& steps,
                   const IntegratorConfig& cfg) {
  const Eigen::Index dim = y.size();
  Eigen::VectorXd k1(dim), k2(dim), k3(dim), k4(dim), k5(dim), k6(dim), k7(dim), tmp(dim), ynew(dim), err(dim);
  double t = t0;
  f(t, y, k1);
  while (t < t1) {
    if (++steps > cfg.max_steps) throw IntegrationError("max_steps exceeded at " + at_time(t));
    const bool last = t + h * (1.0 + 1e-8) >= t1;
    const double hs = last ? t1 - t : h;
    if (hs < 1e-14 * std::max(1.0, std::abs(t))) throw IntegrationError("step size underflow at " + at_time(t));
    tmp = y + hs * a21 * k1;
    f(t + c2 * hs, tmp, k2);
    tmp = y + hs * (a31 * k1 + a32 * k2);
    f(t + c3 * hs, tmp, k3);
    tmp = y + hs * (a41 * k1 + a42 * k2 + a43 * k3);
    f(t + c4 * hs, tmp, k4);
    tmp = y + hs * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4);
    f(t + c5 * hs, tmp, k5);
    tmp = y + hs * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5);
    f(t + hs, tmp, k6);
    ynew = y + hs * (b1 * k1 + b3 * k3 + b4 * k4 + b5 * k5 + b6 * k6);
    f(t + hs, ynew, k7);
    err = hs * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);

    double en = 0.0;
    for (Eigen::Index k = 0; k < dim; ++k) {
      const double sc = cfg.abs_tol + cfg.rel_tol * std::max(std::abs(y[k]), std::abs(ynew[k]));
      en = std::max(en, std::abs(err[k]) / sc);
    }
    if (!std::isfinite(en)) {
      h = 0.25 * hs;
      if (h < 1e-14 * std::max(1.0, std::abs(t))) throw IntegrationError("non-finite state at " + at_time(t));
      continue;
    }
    const double factor = en == 0.0 ? 5.0 : std::clamp(0.9 * std::pow(en, -0.2), 0.2, 5.0);
    if (en <= 1.0) {
      t = last ? t1 : t + hs;
      y = ynew;
      k1 = k7;
      check_finite(y, t);
      if (!last || factor < 1.0) h = hs * factor;
    } else {
      h = hs * std::min(1.0, factor);
    }
  }
}

}  // namespace

Eigen::MatrixXd integrate_ode(const OdeRhs& f, const Eigen::VectorXd& y0, const Eigen::VectorXd& times,
                              const IntegratorConfig& cfg) {
  auto bad = cfg.violations();
  if (!bad.empty()) throw ConfigError(bad.front());
  for (Eigen::Index l = 1; l < times.size(); ++l)
    if (!(times[l] > times[l - 1])) throw ConfigError("times not strictly increasing");

  Eigen::MatrixXd out(y0.size(), times.size());
  if (times.size() == 0) return out;
  Eigen::VectorXd y = y0;
  check_finite(y, times[0]);
  out.col(0) = y;
  long steps = 0;
  double h = times.size() > 1 ? std::min(cfg.step, times[1] - times[0]) : cfg.step;
  for (Eigen::Index l = 1; l < times.size(); ++l) {
    if (cfg.method == IntegratorMethod::RK4Fixed) {
      rk4_interval(f, y, times[l - 1], times[l], cfg.step, steps, cfg.max_steps);
    } else {
      rk45_interval(f, y, times[l - 1], times[l], h, steps, cfg);
    }
    out.col(l) = y;
  }
  return out;
}

Trajectory integrate(const SystemSpec& spec, const KernelSet& kernels, const Eigen::VectorXd& x0,
                     const Eigen::VectorXd& v0, const Eigen::VectorXd& times, const IntegratorConfig& cfg) {
  spec.validate();
  const Eigen::Index nd = static_cast<Eigen::Index>(spec.N) * spec.d;
  if (x0.size() != nd) throw ConfigError("initial positions must have N*d entries");
  const bool second = spec.order == SystemOrder::Second;
  if (second && v0.size() != nd) throw ConfigError("initial velocities must have N*d entries");
  if (!kernels.complete(second)) throw ConfigError("kernel grid incomplete for the system order");

  Trajectory tr;
  tr.times = times;
  if (!second) {
    OdeRhs f = [&](double, const Eigen::VectorXd& y, Eigen::VectorXd& dy) {
      dy = rhs_first_order(y, kernels, spec.partition, spec.d);
    };
    tr.positions = integrate_ode(f, x0, times, cfg);
    tr.velocities.resize(nd, times.size());
    for (Eigen::Index l = 0; l < times.size(); ++l)
      tr.velocities.col(l) = rhs_first_order(tr.positions.col(l), kernels, spec.partition, spec.d);
    return tr;
  }

  OdeRhs f = [&](double, const Eigen::VectorXd& y, Eigen::VectorXd& dy) {
    dy.resize(2 * nd);
    dy.head(nd) = y.tail(nd);
    dy.tail(nd) = rhs_second_order(y.head(nd), y.tail(nd), kernels, spec);
  };
  Eigen::VectorXd y0(2 * nd);
  y0 << x0, v0;
  Eigen::MatrixXd Y = integrate_ode(f, y0, times, cfg);
  tr.positions = Y.topRows(nd);
  tr.velocities = Y.bottomRows(nd);
  tr.accelerations.resize(nd, times.size());
  for (Eigen::Index l = 0; l < times.size(); ++l)
    tr.accelerations.col(l) = rhs_second_order(tr.positions.col(l), tr.velocities.col(l), kernels, spec);
  return tr;
}

Eigen::VectorXd uniform_times(double T, int L) {
  if (L < 1) throw ConfigError("L must be at least 1");
  if (L == 1) return Eigen::VectorXd::Zero(1);
  if (!(T > 0.0)) throw ConfigError("T must be positive");
  Eigen::VectorXd t(L);
  for (int l = 0; l < L; ++l) t[l] = T * l / (L - 1);
  return t;
}

TrajectoryDataset generate_dataset(const SystemSpec& spec, const KernelSet& kernels,
                                   const InitialDistribution& positions0, const InitialDistribution& velocities0,
                                   const GenerateOptions& opts) {
  spec.validate();
  if (opts.M < 1) throw ConfigError("M must be at least 1");
  if (opts.times.size() < 1) throw ConfigError("L must be at least 1");
  if (opts.noise_sigma < 0.0) throw ConfigError("noise_sigma must be nonnegative");

  const int M = opts.M;
  const int L = static_cast<int>(opts.times.size());
  const Eigen::Index nd = static_cast<Eigen::Index>(spec.N) * spec.d;
  const bool second = spec.order == SystemOrder::Second;
  const double sigma_x = opts.noise_sigma;
  const double sigma_d = opts.derivative_noise_sigma < 0.0 ? sigma_x : opts.derivative_noise_sigma;

  TrajectoryDataset ds;
  ds.times = opts.times;
  ds.M = M;
  ds.spec = spec;
  ds.seed = opts.seed;
  ds.noise_sigma = sigma_x;
  ds.derivative_noise_sigma = sigma_d;
  ds.derivative_source = DerivativeSource::Observed;
  ds.positions.resize(nd, static_cast<Eigen::Index>(M) * L);
  ds.velocities = Eigen::MatrixXd(nd, static_cast<Eigen::Index>(M) * L);
  if (second) ds.accelerations = Eigen::MatrixXd(nd, static_cast<Eigen::Index>(M) * L);

  std::vector<std::exception_ptr> errors(M);
  std::vector<std::string> messages(M);
  const int threads = opts.threads > 0 ? opts.threads : omp_get_max_threads();

#pragma omp parallel for schedule(dynamic) num_threads(threads)
  for (int m = 0; m < M; ++m) {
    try {
      InitialState init = opts.fixed_initial
                              ? *opts.fixed_initial
                              : sample_initial(positions0, velocities0, spec, derive_seed(opts.seed, 2 * m));
      Trajectory tr = integrate(spec, kernels, init.positions, init.velocities, opts.times, opts.integrator);
      if (sigma_x > 0.0 || sigma_d > 0.0) {
        std::mt19937_64 rng(derive_seed(opts.seed, 2 * m + 1));
        std::normal_distribution<double> normal(0.0, 1.0);
        auto perturb = [&](Eigen::MatrixXd& a, double s) {
          if (s <= 0.0) return;
          for (Eigen::Index k = 0; k < a.size(); ++k) a.data()[k] += s * normal(rng);
        };
        perturb(tr.positions, sigma_x);
        perturb(tr.velocities, second ? sigma_x : sigma_d);
        if (second) perturb(tr.accelerations, sigma_d);
      }
      ds.positions.middleCols(static_cast<Eigen::Index>(m) * L, L) = tr.positions;
      ds.velocities->middleCols(static_cast<Eigen::Index>(m) * L, L) = tr.velocities;
      if (second) ds.accelerations->middleCols(static_cast<Eigen::Index>(m) * L, L) = tr.accelerations;
    } catch (const std::exception& e) {
      messages[m] = e.what();
      errors[m] = std::current_exception();
    }
  }
  for (int m = 0; m < M; ++m) {
    if (!errors[m]) continue;
    try {
      std::rethrow_exception(errors[m]);
    } catch (const IntegrationError&) {
      throw IntegrationError("trajectory m=" + std::to_string(m + 1) + ": " + messages[m]);
    }
  }
  return ds;
}

TrajectoryDataset generate_dataset(const ModelDefinition& model, const GenerateOptions& opts) {
  TrajectoryDataset ds = generate_dataset(model.spec, model.kernels, model.positions0, model.velocities0, opts);
  ds.model_params = model.params;
  return ds;
}

namespace {

Eigen::MatrixXd differentiate(const Eigen::MatrixXd& a, const Eigen::VectorXd& t, int M) {
  const int L = static_cast<int>(t.size());
  Eigen::MatrixXd out(a.rows(), a.cols());
  for (int m = 0; m < M; ++m) {
    auto x = a.middleCols(static_cast<Eigen::Index>(m) * L, L);
    auto dx = out.middleCols(static_cast<Eigen::Index>(m) * L, L);
    if (L == 2) {
      dx.col(0) = (x.col(1) - x.col(0)) / (t[1] - t[0]);
      dx.col(1) = dx.col(0);
      continue;
    }
    for (int l = 1; l + 1 < L; ++l) {
      const double h1 = t[l] - t[l - 1];
      const double h2 = t[l + 1] - t[l];
      dx.col(l) = -h2 / (h1 * (h1 + h2)) * x.col(l - 1) + (h2 - h1) / (h1 * h2) * x.col(l) +
                  h1 / (h2 * (h1 + h2)) * x.col(l + 1);
    }
    double h1 = t[1] - t[0];
    double h2 = t[2] - t[1];
    dx.col(0) = -(2 * h1 + h2) / (h1 * (h1 + h2)) * x.col(0) + (h1 + h2) / (h1 * h2) * x.col(1) -
                h1 / (h2 * (h1 + h2)) * x.col(2);
    h1 = t[L - 2] - t[L - 3];
    h2 = t[L - 1] - t[L - 2];
    dx.col(L - 1) = h2 / (h1 * (h1 + h2)) * x.col(L - 3) - (h1 + h2) / (h1 * h2) * x.col(L - 2) +
                    (2 * h2 + h1) / (h2 * (h1 + h2)) * x.col(L - 1);
  }
  return out;
}

}  // namespace

TrajectoryDataset approx_derivatives(const TrajectoryDataset& ds) {
  if (ds.L() < 2) throw DataError("insufficient data: finite differences need L >= 2");
  TrajectoryDataset out = ds;
  out.derivative_source = DerivativeSource::FiniteDifference;
  if (ds.spec.order == SystemOrder::First) {
    out.velocities = differentiate(ds.positions, ds.times, ds.M);
  } else {
    // velocities are part of the observed state when present
    if (!out.velocities) out.velocities = differentiate(ds.positions, ds.times, ds.M);
    out.accelerations = differentiate(*out.velocities, ds.times, ds.M);
  }
  return out;
}

}  // namespace collective
