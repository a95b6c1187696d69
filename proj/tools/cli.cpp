#include "cli.hpp"

#include "collective/io.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

namespace collective::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const std::vector<std::string> kModelParams = {"N", "d",          "N1",         "N2",  "c",    "theta", "R",
                                               "friction", "propulsion", "box", "vstd", "T",     "L"};

struct ModelFlags {
  std::map<std::string, double> values;
  std::map<std::string, CLI::Option*> options;
  std::vector<std::string> extra;

  void attach(CLI::App* sub) {
    for (const auto& name : kModelParams) values[name] = 0.0;
    for (const auto& name : kModelParams)
      options[name] = sub->add_option("--" + name, values[name], "model parameter " + name);
    sub->add_option("--param", extra, "further model parameters as key=value");
  }

  std::map<std::string, double> collect() const {
    std::map<std::string, double> out;
    for (const auto& [name, opt] : options)
      if (opt->count() > 0) out[name] = values.at(name);
    for (const auto& kv : extra) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos || eq == 0) throw ConfigError("--param expects key=value, got '" + kv + "'");
      try {
        std::size_t used = 0;
        const std::string rhs = kv.substr(eq + 1);
        const double v = std::stod(rhs, &used);
        if (used != rhs.size()) throw std::invalid_argument(rhs);
        out[kv.substr(0, eq)] = v;
      } catch (const std::logic_error&) {
        throw ConfigError("--param value is not a number: '" + kv + "'");
      }
    }
    return out;
  }
};

std::vector<double> parse_list(const std::string& s, const std::string& flag) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(cell, &used));
      if (used != cell.size()) throw std::invalid_argument(cell);
    } catch (const std::logic_error&) {
      throw ConfigError(flag + " expects comma-separated numbers, got '" + s + "'");
    }
  }
  return out;
}

/// ConfigError maps to a usage failure; everything else to `code`.
template <typename F>
int guarded(const std::string& stage, int code, std::ostream& err, F&& f) {
  try {
    f();
    return kExitOk;
  } catch (const ConfigError& e) {
    err << "error [" << stage << "]: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error [" << stage << "]: " << e.what() << '\n';
    return code;
  }
}

std::optional<ModelDefinition> truth_model(const TrajectoryDataset& ds) {
  if (ds.spec.model.empty()) return std::nullopt;
  try {
    return catalog(ds.spec.model, ds.model_params);
  } catch (const Error&) {
    return std::nullopt;
  }
}

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path);
  if (!os) throw DataError("cannot write " + path.string());
  return os;
}

TrajectoryDataset load_for_learning(const std::string& dir, bool fd) {
  TrajectoryDataset ds = read_dataset(dir);
  const bool missing =
      !ds.velocities || (ds.spec.order == SystemOrder::Second && !ds.accelerations);
  if (fd || missing) ds = approx_derivatives(ds);
  return ds;
}

Eigen::VectorXd plot_grid(const EmpiricalRho* rho, const HypothesisSpace& space, int points) {
  if (rho && rho->bins() > 0) {
    Eigen::VectorXd r(rho->bins());
    for (int b = 0; b < rho->bins(); ++b) r[b] = rho->midpoint(b);
    return r;
  }
  if (space.empty()) return Eigen::VectorXd();
  return Eigen::VectorXd::LinSpaced(points, space.r_min(), space.r_max());
}

double rho_weight_at(const EmpiricalRho* rho, int k) {
  return rho && k < rho->bins() ? rho->weights[k] : 0.0;
}

// simulate

struct SimulateArgs {
  std::string model;
  std::string out;
  int M = 10;
  std::uint64_t seed = 0;
  double noise = 0.0;
  double derivative_noise = -1.0;
  std::string integrator;
  double step = 1e-2;
  std::string x0, v0;
  int threads = 0;
  ModelFlags params;
};

void setup_simulate(CLI::App* sub, SimulateArgs& a) {
  sub->add_option("--model", a.model, "catalog model")->required();
  sub->add_option("--out", a.out, "output directory")->required();
  sub->add_option("--M", a.M, "number of trajectories")->check(CLI::PositiveNumber);
  sub->add_option("--seed", a.seed, "random seed");
  sub->add_option("--noise", a.noise, "observation noise standard deviation")->check(CLI::NonNegativeNumber);
  sub->add_option("--derivative-noise", a.derivative_noise,
                  "noise on the highest stored derivative (default: same as --noise)")
      ->check(CLI::NonNegativeNumber);
  sub->add_option("--integrator", a.integrator, "rk4 or rk45 (default: by kernel continuity)");
  sub->add_option("--step", a.step, "rk4 step")->check(CLI::PositiveNumber);
  sub->add_option("--x0", a.x0, "fixed initial positions, N*d comma-separated values");
  sub->add_option("--v0", a.v0, "fixed initial velocities, N*d comma-separated values");
  sub->add_option("--threads", a.threads, "worker cap (0: all)");
  a.params.attach(sub);
}

int cmd_simulate(const SimulateArgs& a, std::ostream& out, std::ostream& err) {
  ModelDefinition model;
  GenerateOptions g;
  int code = guarded("configure", kExitUsage, err, [&] {
    model = catalog(a.model, a.params.collect());
    g.M = a.M;
    g.times = uniform_times(model.T, model.L);
    g.integrator = default_integrator(model.kernels);
    if (!a.integrator.empty()) g.integrator.method = parse_integrator(a.integrator);
    g.integrator.step = a.step;
    g.seed = a.seed;
    g.noise_sigma = a.noise;
    g.derivative_noise_sigma = a.derivative_noise;
    g.threads = a.threads;
    const int nd = model.spec.N * model.spec.d;
    if (!a.x0.empty() || !a.v0.empty()) {
      InitialState init;
      const auto x = parse_list(a.x0, "--x0");
      if (static_cast<int>(x.size()) != nd) throw ConfigError("--x0 needs N*d = " + std::to_string(nd) + " values");
      init.positions = Eigen::Map<const Eigen::VectorXd>(x.data(), nd);
      if (model.spec.order == SystemOrder::Second) {
        const auto v = parse_list(a.v0, "--v0");
        if (static_cast<int>(v.size()) != nd) throw ConfigError("--v0 needs N*d = " + std::to_string(nd) + " values");
        init.velocities = Eigen::Map<const Eigen::VectorXd>(v.data(), nd);
      }
      g.fixed_initial = init;
    }
  });
  if (code != kExitOk) return code;

  TrajectoryDataset ds;
  code = guarded("simulate", kExitSimulation, err, [&] { ds = generate_dataset(model, g); });
  if (code != kExitOk) return code;
  code = guarded("write", kExitSimulation, err, [&] { write_dataset(ds, a.out); });
  if (code != kExitOk) return code;
  out << "simulated " << model.name << ": M=" << ds.M << " L=" << ds.L() << " N=" << ds.spec.N
      << " d=" << ds.spec.d << " seed=" << ds.seed << " -> " << a.out << '\n';
  return kExitOk;
}

// learn

struct LearnArgs {
  std::string data;
  std::string out;
  std::string basis = "pw-constant";
  int degree = -1;
  std::string knots;
  std::string n = "auto";
  double s = 1.0;
  double ridge = 0.0;
  int rho_bins = 200;
  std::string range;
  bool fd = false;
  bool no_coercivity = false;
  int threads = 0;
};

void setup_learn(CLI::App* sub, LearnArgs& a) {
  sub->add_option("--data", a.data, "dataset directory")->required();
  sub->add_option("--out", a.out, "output directory")->required();
  sub->add_option("--basis", a.basis, "pw-constant, pw-linear or bspline");
  sub->add_option("--degree", a.degree, "B-spline degree");
  sub->add_option("--knots", a.knots, "explicit breakpoints, comma-separated");
  sub->add_option("--n", a.n, "basis dimension per kernel, or auto");
  sub->add_option("--s", a.s, "smoothness used by --n auto")->check(CLI::PositiveNumber);
  sub->add_option("--ridge", a.ridge, "ridge added to the normal matrix")->check(CLI::NonNegativeNumber);
  sub->add_option("--rho-bins", a.rho_bins, "histogram bins for rho")->check(CLI::PositiveNumber);
  sub->add_option("--range", a.range, "kernel interval as lo,hi");
  sub->add_flag("--fd", a.fd, "replace stored derivatives by finite differences");
  sub->add_flag("--no-coercivity", a.no_coercivity, "skip the coercivity estimate");
  sub->add_option("--threads", a.threads, "worker cap (0: all)");
}

int cmd_learn(const LearnArgs& a, std::ostream& out, std::ostream& err) {
  LearnConfig cfg;
  int code = guarded("configure", kExitUsage, err, [&] {
    cfg.family = parse_basis_family(a.basis);
    cfg.degree = a.degree;
    if (!a.knots.empty()) cfg.knots = parse_list(a.knots, "--knots");
    if (a.n != "auto") {
      const auto v = parse_list(a.n, "--n");
      if (v.size() != 1 || v[0] != std::floor(v[0])) throw ConfigError("--n expects an integer or auto");
      cfg.n = static_cast<int>(v[0]);
    }
    cfg.smoothness = a.s;
    cfg.ridge = a.ridge;
    cfg.rho_bins = a.rho_bins;
    if (!a.range.empty()) {
      const auto v = parse_list(a.range, "--range");
      if (v.size() != 2) throw ConfigError("--range expects lo,hi");
      cfg.range = std::make_pair(v[0], v[1]);
    }
    cfg.coercivity = !a.no_coercivity;
    cfg.threads = a.threads;
  });
  if (code != kExitOk) return code;

  TrajectoryDataset ds;
  LearnResult res;
  code = guarded("load", kExitLearning, err, [&] { ds = load_for_learning(a.data, a.fd); });
  if (code != kExitOk) return code;
  code = guarded("learn", kExitLearning, err, [&] { res = learn_kernels(ds, cfg); });
  if (code != kExitOk) return code;

  code = guarded("write", kExitLearning, err, [&] {
    const fs::path dir(a.out);
    const int K = ds.spec.partition.types();
    json est;
    est["schema_version"] = kSchemaVersion;
    est["model"] = ds.spec.model;
    est["K"] = K;
    est["order"] = to_string(ds.spec.order);
    est["estimates"] = json::array();
    for (const auto& e : res.estimates) est["estimates"].push_back(to_json(e));
    write_json(est, dir / "estimate.json");

    json rep = to_json(res.report);
    rep["schema_version"] = kSchemaVersion;
    rep["derivative_source"] = to_string(ds.derivative_source);
    write_json(rep, dir / "report.json");

    const auto truth = truth_model(ds);
    const bool per_type = res.report.rho.size() > 1;
    for (const auto& e : res.estimates) {
      const EmpiricalRho* rho = nullptr;
      if (!res.report.rho.empty()) rho = per_type ? &res.report.rho[e.k1 * K + e.k2] : &res.report.rho.front();
      const Eigen::VectorXd r = plot_grid(rho, e.space, 200);
      auto os = open_out(dir / ("plot_" + to_string(e.role) + "_" + std::to_string(e.k1 + 1) + "_" +
                                std::to_string(e.k2 + 1) + ".csv"));
      os << "r,truth,estimate,rho_weight\n";
      for (Eigen::Index k = 0; k < r.size(); ++k) {
        os << format_double(r[k]) << ',';
        if (truth) os << format_double(truth->kernels.get(e.role, e.k1, e.k2)(r[k]));
        os << ',' << format_double(e(r[k])) << ',' << format_double(rho_weight_at(rho, static_cast<int>(k)))
           << '\n';
      }
    }
  });
  if (code != kExitOk) return code;

  const auto& rep = res.report;
  out << "learned " << res.estimates.size() << " kernel(s): n_tot=" << rep.n_tot << " rank=" << rep.rank;
  if (rep.n_star) out << " n_star=" << *rep.n_star;
  out << " condition=" << rep.condition;
  if (rep.coercivity) out << " coercivity=" << *rep.coercivity;
  out << " -> " << a.out << '\n';
  return kExitOk;
}

// learn-gp

struct LearnGPArgs {
  std::string data;
  std::string out;
  std::string covariance = "matern52";
  double noise_var = -1.0;
  bool train_force = false;
  bool no_train = false;
  int restarts = 3;
  int max_evals = 400;
  std::uint64_t seed = 0;
  int grid_bins = 100;
  bool fd = false;
  int threads = 0;
};

void setup_learn_gp(CLI::App* sub, LearnGPArgs& a) {
  sub->add_option("--data", a.data, "dataset directory")->required();
  sub->add_option("--out", a.out, "output directory")->required();
  sub->add_option("--covariance", a.covariance, "se or matern52");
  sub->add_option("--noise-var", a.noise_var, "initial noise variance");
  sub->add_flag("--train-force", a.train_force, "also fit friction and propulsion");
  sub->add_flag("--no-train", a.no_train, "keep the initial hyperparameters");
  sub->add_option("--restarts", a.restarts, "optimizer starts")->check(CLI::PositiveNumber);
  sub->add_option("--max-evals", a.max_evals, "objective evaluations per start")->check(CLI::PositiveNumber);
  sub->add_option("--seed", a.seed, "random seed for restarts");
  sub->add_option("--grid-bins", a.grid_bins, "rho bins used as prediction grid")->check(CLI::PositiveNumber);
  sub->add_flag("--fd", a.fd, "replace stored derivatives by finite differences");
  sub->add_option("--threads", a.threads, "worker cap (0: all)");
}

int cmd_learn_gp(const LearnGPArgs& a, std::ostream& out, std::ostream& err) {
  CovarianceFamily family{};
  int code = guarded("configure", kExitUsage, err, [&] { family = parse_covariance(a.covariance); });
  if (code != kExitOk) return code;

  TrajectoryDataset ds;
  std::shared_ptr<GPProblem> problem;
  GPConfig cfg;
  TrainResult trained;
  GPPosterior post;
  code = guarded("load", kExitLearning, err, [&] {
    ds = load_for_learning(a.data, a.fd);
    problem = std::make_shared<GPProblem>(ds);
  });
  if (code != kExitOk) return code;
  code = guarded("train", kExitLearning, err, [&] {
    cfg = default_gp_config(ds);
    cfg.energy.family = cfg.alignment.family = family;
    if (a.noise_var > 0.0) cfg.noise_variance = a.noise_var;
    cfg.train_force = a.train_force;
    if (a.no_train) {
      trained.config = cfg;
      trained.nlml = nlml(*problem, cfg);
      trained.trace = {trained.nlml};
      trained.evaluations = 1;
    } else {
      TrainOptions opts;
      opts.restarts = a.restarts;
      opts.max_evaluations = a.max_evals;
      opts.seed = a.seed;
      opts.threads = a.threads;
      trained = train(*problem, cfg, {}, opts);
    }
    post = GPPosterior::fit(problem, trained.config);
  });
  if (code != kExitOk) return code;

  code = guarded("write", kExitLearning, err, [&] {
    const fs::path dir(a.out);
    json gp;
    gp["schema_version"] = kSchemaVersion;
    gp["model"] = ds.spec.model;
    gp["config"] = to_json(trained.config);
    write_json(gp, dir / "gp.json");

    json rep;
    rep["schema_version"] = kSchemaVersion;
    rep["nlml"] = trained.nlml;
    rep["nlml_trace"] = trained.trace;
    rep["evaluations"] = trained.evaluations;
    rep["jitter"] = post.jitter();
    rep["size"] = problem->size();
    rep["derivative_source"] = to_string(ds.derivative_source);
    write_json(rep, dir / "report.json");

    RhoOptions ro;
    ro.bins = a.grid_bins;
    const EmpiricalRho rho = estimate_rho(ds, ro);
    Eigen::VectorXd r(rho.bins());
    for (int b = 0; b < rho.bins(); ++b) r[b] = rho.midpoint(b);
    const auto truth = truth_model(ds);
    for (KernelRole role : {KernelRole::Energy, KernelRole::Alignment}) {
      const KernelPrediction pred = post.predict(role, r);
      auto os = open_out(dir / ("plot_" + to_string(role) + ".csv"));
      os << "r,truth,mean,std,rho_weight\n";
      for (Eigen::Index k = 0; k < r.size(); ++k) {
        os << format_double(r[k]) << ',';
        if (truth) os << format_double(truth->kernels.get(role, 0, 0)(r[k]));
        os << ',' << format_double(pred.mean[k]) << ',' << format_double(std::sqrt(pred.variance[k])) << ','
           << format_double(rho.weights[k]) << '\n';
      }
    }
  });
  if (code != kExitOk) return code;
  out << "trained GP: nlml=" << trained.nlml << " evaluations=" << trained.evaluations << " -> " << a.out << '\n';
  return kExitOk;
}

// learn-features

struct LearnFeaturesArgs {
  std::string data;
  std::string out;
  int dprime = 1;
  int centers = 0;
  double lambda = 0.0;
  std::uint64_t seed = 0;
  int fit_n = 0;
  bool fd = false;
  int threads = 0;
};

void setup_learn_features(CLI::App* sub, LearnFeaturesArgs& a) {
  sub->add_option("--data", a.data, "two-agent dataset directory")->required();
  sub->add_option("--out", a.out, "output directory")->required();
  sub->add_option("--dprime", a.dprime, "reduced dimension")->check(CLI::PositiveNumber);
  sub->add_option("--centers", a.centers, "anchor count (0: default)");
  sub->add_option("--lambda", a.lambda, "weight bandwidth (0: 1/D)");
  sub->add_option("--seed", a.seed, "random seed for split and anchors");
  sub->add_option("--fit", a.fit_n, "also fit the reduced kernel with this many basis functions per axis");
  sub->add_flag("--fd", a.fd, "replace stored derivatives by finite differences");
  sub->add_option("--threads", a.threads, "worker cap (0: all)");
}

int cmd_learn_features(const LearnFeaturesArgs& a, std::ostream& out, std::ostream& err) {
  TrajectoryDataset ds;
  ReductionMap map;
  std::optional<ReducedLearnResult> fit;
  int code = guarded("load", kExitLearning, err, [&] { ds = load_for_learning(a.data, a.fd); });
  if (code != kExitOk) return code;
  code = guarded("mpls", kExitLearning, err, [&] {
    MplsOptions opts;
    opts.d_prime = a.dprime;
    if (a.centers > 0) opts.centers = a.centers;
    if (a.lambda > 0.0) opts.lambda = a.lambda;
    opts.seed = a.seed;
    opts.threads = a.threads;
    map = mpls_reduce(kernel_values_from_pairs(ds), opts);
    if (a.fit_n > 0) {
      ReducedLearnConfig rc;
      rc.n = a.fit_n;
      rc.threads = a.threads;
      fit = learn_reduced_kernel(ds, map, rc);
    }
  });
  if (code != kExitOk) return code;
  code = guarded("write", kExitLearning, err, [&] {
    const fs::path dir(a.out);
    json j = to_json(map);
    j["schema_version"] = kSchemaVersion;
    write_json(j, dir / "reduction.json");
    json rep;
    rep["schema_version"] = kSchemaVersion;
    rep["singular_values"] = std::vector<double>(map.singular_values.data(),
                                                 map.singular_values.data() + map.singular_values.size());
    rep["beta_used"] = map.beta_used;
    rep["linear_r2"] = map.linear_r2;
    if (fit) {
      rep["reduced_fit"] = {{"rank", fit->rank},
                            {"condition_number", fit->condition},
                            {"empirical_loss", fit->empirical_loss},
                            {"alpha", std::vector<double>(fit->estimate.alpha.data(),
                                                          fit->estimate.alpha.data() + fit->estimate.alpha.size())}};
    }
    write_json(rep, dir / "report.json");
  });
  if (code != kExitOk) return code;
  out << "reduction map: D=" << map.D << " d_prime=" << map.d_prime << " beta_used=" << map.beta_used << " -> "
      << a.out << '\n';
  return kExitOk;
}

// eval

struct EvalArgs {
  std::string data;
  std::string estimate;
  std::string out;
  double T = 0.0;
  int L = 0;
  int trajectories = 0;
  int rho_bins = 200;
  int threads = 0;
};

void setup_eval(CLI::App* sub, EvalArgs& a) {
  sub->add_option("--data", a.data, "dataset directory (truth and initial conditions)")->required();
  sub->add_option("--estimate", a.estimate, "estimate.json; the true kernels when omitted");
  sub->add_option("--out", a.out, "output directory")->required();
  sub->add_option("--T", a.T, "window length (default: observation span)");
  sub->add_option("--L", a.L, "snapshots per window (default: dataset L)");
  sub->add_option("--trajectories", a.trajectories, "initial conditions used (0: all)");
  sub->add_option("--rho-bins", a.rho_bins, "histogram bins for rho")->check(CLI::PositiveNumber);
  sub->add_option("--threads", a.threads, "worker cap (0: all)");
}

int cmd_eval(const EvalArgs& a, std::ostream& out, std::ostream& err) {
  TrajectoryDataset ds;
  ModelDefinition model;
  KernelSet learned;
  int code = guarded("load", kExitLearning, err, [&] {
    ds = read_dataset(a.data);
    const auto truth = truth_model(ds);
    if (!truth) throw DataError("eval needs a dataset generated from a catalog model");
    model = *truth;
    const bool second = ds.spec.order == SystemOrder::Second;
    if (a.estimate.empty()) {
      learned = model.kernels;
    } else {
      const json j = read_json(a.estimate);
      LearnResult holder;
      for (const auto& e : j.at("estimates")) holder.estimates.push_back(kernel_estimate_from_json(e));
      learned = holder.kernels(ds.spec.partition.types(), second);
    }
  });
  if (code != kExitOk) return code;

  code = guarded("eval", kExitLearning, err, [&] {
    const fs::path dir(a.out);
    const bool second = ds.spec.order == SystemOrder::Second;
    const double T = a.T > 0.0 ? a.T : ds.times[ds.L() - 1] - ds.times[0];
    const int L = a.L > 1 ? a.L : std::max(ds.L(), 2);
    const int count = a.trajectories > 0 ? std::min(a.trajectories, ds.M) : ds.M;
    auto os = open_out(dir / "trajectory_errors.csv");
    os << "trajectory,train_sup,train_mean,future_sup,future_mean\n";
    for (int m = 0; m < count; ++m) {
      const Eigen::VectorXd x0 = ds.positions.col(ds.column(m, 0));
      const Eigen::VectorXd v0 = second ? Eigen::VectorXd(ds.velocities->col(ds.column(m, 0))) : Eigen::VectorXd();
      const PredictionErrors pe = prediction_errors(ds.spec, model.kernels, learned, x0, v0, T, L);
      os << m + 1 << ',' << format_double(pe.training.sup) << ',' << format_double(pe.training.mean) << ','
         << format_double(pe.future.sup) << ',' << format_double(pe.future.mean) << '\n';
    }

    const int K = ds.spec.partition.types();
    RhoOptions ro;
    ro.bins = a.rho_bins;
    ro.threads = a.threads;
    const std::vector<EmpiricalRho> rhos =
        K > 1 ? estimate_rho_per_type(ds, ro) : std::vector<EmpiricalRho>{estimate_rho(ds, ro)};
    auto ks = open_out(dir / "kernel_errors.csv");
    ks << "role,k1,k2,abs_err,rel_err\n";
    for (KernelRole role : {KernelRole::Energy, KernelRole::Alignment}) {
      if (role == KernelRole::Alignment && !second) continue;
      for (int k1 = 0; k1 < K; ++k1) {
        for (int k2 = 0; k2 < K; ++k2) {
          const EmpiricalRho& rho = K > 1 ? rhos[k1 * K + k2] : rhos.front();
          const KernelFunction& truth = model.kernels.get(role, k1, k2);
          const KernelFunction& est = learned.get(role, k1, k2);
          ks << to_string(role) << ',' << k1 + 1 << ',' << k2 + 1 << ','
             << format_double(kernel_error(est, truth, rho, false)) << ',';
          try {
            ks << format_double(kernel_error(est, truth, rho, true));
          } catch (const DataError&) {
            ks << "nan";
          }
          ks << '\n';
        }
      }
    }
  });
  if (code != kExitOk) return code;
  out << "evaluated -> " << a.out << '\n';
  return kExitOk;
}

// sweep

struct SweepArgs {
  std::string model;
  std::vector<int> Ms;
  int trials = 5;
  std::uint64_t seed = 0;
  double noise = 0.0;
  std::string basis = "pw-constant";
  int degree = -1;
  double s = 1.0;
  int reference_M = 200;
  int rho_bins = 200;
  std::string out;
  int threads = 0;
  ModelFlags params;
};

void setup_sweep(CLI::App* sub, SweepArgs& a) {
  sub->add_option("--model", a.model, "catalog model")->required();
  sub->add_option("--Ms", a.Ms, "comma-separated trajectory counts")->required()->delimiter(',');
  sub->add_option("--trials", a.trials, "trials per M")->check(CLI::PositiveNumber);
  sub->add_option("--seed", a.seed, "random seed");
  sub->add_option("--noise", a.noise, "observation noise standard deviation")->check(CLI::NonNegativeNumber);
  sub->add_option("--basis", a.basis, "pw-constant, pw-linear or bspline");
  sub->add_option("--degree", a.degree, "B-spline degree");
  sub->add_option("--s", a.s, "smoothness for n*(M)")->check(CLI::PositiveNumber);
  sub->add_option("--reference-M", a.reference_M, "trajectories for the reference rho")->check(CLI::PositiveNumber);
  sub->add_option("--rho-bins", a.rho_bins, "histogram bins for rho")->check(CLI::PositiveNumber);
  sub->add_option("--out", a.out, "CSV path (stdout when omitted)");
  sub->add_option("--threads", a.threads, "worker cap (0: all)");
  a.params.attach(sub);
}

int cmd_sweep(const SweepArgs& a, std::ostream& out, std::ostream& err) {
  if (a.Ms.size() < 3) {
    err << "error [configure]: sweep needs at least three values of M\n";
    return kExitUsage;
  }
  SweepConfig cfg;
  int code = guarded("configure", kExitUsage, err, [&] {
    cfg.model = catalog(a.model, a.params.collect());
    cfg.Ms = a.Ms;
    cfg.trials = a.trials;
    cfg.seed = a.seed;
    cfg.noise_sigma = a.noise;
    cfg.learn.family = parse_basis_family(a.basis);
    cfg.learn.degree = a.degree;
    cfg.learn.smoothness = a.s;
    cfg.reference_M = a.reference_M;
    cfg.rho_bins = a.rho_bins;
    cfg.threads = a.threads;
  });
  if (code != kExitOk) return code;
  SweepResult res;
  code = guarded("sweep", kExitLearning, err, [&] { res = convergence_sweep(cfg); });
  if (code != kExitOk) return code;
  code = guarded("write", kExitLearning, err, [&] {
    if (a.out.empty()) {
      write_sweep_csv(res, out);
    } else {
      auto os = open_out(a.out);
      write_sweep_csv(res, os);
    }
  });
  if (code != kExitOk) return code;
  out << "slope," << format_double(res.slope) << '\n';
  return kExitOk;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string flag_name(const std::string& arg) {
  if (arg.rfind("--", 0) != 0) return "";
  return arg.substr(2, arg.find('=') == std::string::npos ? std::string::npos : arg.find('=') - 2);
}

/// Reads the --config file named in args and returns --key=value arguments
/// for every key not already given as a flag.
std::vector<std::string> config_arguments(const std::vector<std::string>& args) {
  std::string path;
  std::set<std::string> given;
  for (std::size_t k = 0; k < args.size(); ++k) {
    const std::string name = flag_name(args[k]);
    if (name.empty()) continue;
    given.insert(name);
    if (name != "config") continue;
    if (args[k].find('=') != std::string::npos) {
      path = args[k].substr(args[k].find('=') + 1);
    } else if (k + 1 < args.size()) {
      path = args[k + 1];
    }
  }
  if (path.empty()) return {};
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot read config file " + path);
  std::vector<std::string> out;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(path + ":" + std::to_string(lineno) + ": expected key=value");
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key.rfind("--", 0) == 0) key.erase(0, 2);
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
    if (key.empty() || key == "config")
      throw ConfigError(path + ":" + std::to_string(lineno) + ": invalid key");
    if (!given.count(key)) out.push_back("--" + key + "=" + value);
  }
  return out;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Simulate interacting-agent systems and learn their interaction kernels"};
  app.name("collective");
  app.require_subcommand(1, 1);

  SimulateArgs sim;
  LearnArgs learn;
  LearnGPArgs gp;
  LearnFeaturesArgs feat;
  EvalArgs ev;
  SweepArgs sw;
  std::vector<CLI::App*> subs = {
      app.add_subcommand("simulate", "generate a trajectory dataset from a catalog model"),
      app.add_subcommand("learn", "least-squares kernel estimation"),
      app.add_subcommand("learn-gp", "Gaussian-process kernel estimation for second-order data"),
      app.add_subcommand("learn-features", "MPLS feature reduction on two-agent data"),
      app.add_subcommand("eval", "trajectory and kernel errors of an estimate"),
      app.add_subcommand("sweep", "convergence-rate sweep over M"),
  };
  setup_simulate(subs[0], sim);
  setup_learn(subs[1], learn);
  setup_learn_gp(subs[2], gp);
  setup_learn_features(subs[3], feat);
  setup_eval(subs[4], ev);
  setup_sweep(subs[5], sw);
  std::string config_path;
  for (auto* sub : subs) sub->add_option("--config", config_path, "flat key=value file; flags take precedence");

  std::vector<std::string> storage;
  storage.emplace_back("collective");
  storage.insert(storage.end(), args.begin(), args.end());
  try {
    for (auto& extra : config_arguments(args)) storage.push_back(std::move(extra));
  } catch (const ConfigError& e) {
    err << "error [configure]: " << e.what() << '\n';
    return kExitUsage;
  }
  std::vector<char*> argv;
  for (auto& s : storage) argv.push_back(s.data());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    if (code == 0) return kExitOk;
    CLI::App* active = &app;
    for (auto* sub : subs)
      if (sub->parsed()) active = sub;
    err << active->help();
    return kExitUsage;
  }

  if (subs[0]->parsed()) return cmd_simulate(sim, out, err);
  if (subs[1]->parsed()) return cmd_learn(learn, out, err);
  if (subs[2]->parsed()) return cmd_learn_gp(gp, out, err);
  if (subs[3]->parsed()) return cmd_learn_features(feat, out, err);
  if (subs[4]->parsed()) return cmd_eval(ev, out, err);
  return cmd_sweep(sw, out, err);
}

int run(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(args, std::cout, std::cerr);
}

}  // namespace collective::cli
