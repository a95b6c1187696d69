#include "collective/io.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace collective {

using nlohmann::json;
namespace fs = std::filesystem;

std::string format_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

namespace {

std::vector<double> to_vector(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Eigen::VectorXd from_vector(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, sep)) out.push_back(cell);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

double parse_double(const std::string& s, const std::string& where) {
  const char* begin = s.c_str();
  char* end = nullptr;
  const double v = std::strtod(begin, &end);
  if (end == begin || *end != '\0') throw DataError("malformed number '" + s + "' in " + where);
  return v;
}

std::string trim_cr(std::string s) {
  if (!s.empty() && s.back() == '\r') s.pop_back();
  return s;
}

}  // namespace

void write_dataset(const TrajectoryDataset& ds, const fs::path& dir) {
  const int N = ds.spec.N;
  const int d = ds.spec.d;
  const int L = ds.L();
  fs::create_directories(dir);

  json meta;
  meta["schema_version"] = kSchemaVersion;
  meta["M"] = ds.M;
  meta["L"] = L;
  meta["N"] = N;
  meta["d"] = d;
  meta["K"] = ds.spec.partition.types();
  meta["order"] = to_string(ds.spec.order);
  std::vector<int> types;
  for (int label : ds.spec.partition.labels()) types.push_back(label + 1);
  meta["types"] = types;
  meta["times"] = to_vector(ds.times);
  meta["model"] = ds.spec.model;
  meta["model_params"] = json::object();
  for (const auto& [k, v] : ds.model_params) meta["model_params"][k] = v;
  meta["seed"] = ds.seed;
  meta["noise_sigma"] = ds.noise_sigma;
  meta["derivative_noise_sigma"] = ds.derivative_noise_sigma;
  meta["derivative_source"] = to_string(ds.derivative_source);
  if (ds.spec.order == SystemOrder::Second) {
    meta["masses"] = to_vector(ds.spec.masses);
    meta["force"] = {{"enabled", ds.spec.force.enabled},
                     {"friction", ds.spec.force.friction},
                     {"propulsion", ds.spec.force.propulsion}};
  }
  write_json(meta, dir / "meta.json");

  for (int m = 0; m < ds.M; ++m) {
    std::ofstream os(dir / ("traj_" + std::to_string(m + 1) + ".csv"));
    if (!os) throw DataError("cannot write " + (dir / ("traj_" + std::to_string(m + 1) + ".csv")).string());
    os << "t,agent";
    for (int k = 1; k <= d; ++k) os << ",x" << k;
    if (ds.velocities)
      for (int k = 1; k <= d; ++k) os << ",v" << k;
    if (ds.accelerations)
      for (int k = 1; k <= d; ++k) os << ",a" << k;
    os << '\n';
    for (int l = 0; l < L; ++l) {
      const auto c = ds.column(m, l);
      for (int i = 0; i < N; ++i) {
        os << format_double(ds.times[l]) << ',' << (i + 1);
        for (int k = 0; k < d; ++k) os << ',' << format_double(ds.positions(i * d + k, c));
        if (ds.velocities)
          for (int k = 0; k < d; ++k) os << ',' << format_double((*ds.velocities)(i * d + k, c));
        if (ds.accelerations)
          for (int k = 0; k < d; ++k) os << ',' << format_double((*ds.accelerations)(i * d + k, c));
        os << '\n';
      }
    }
  }
}

TrajectoryDataset read_dataset(const fs::path& dir) {
  const json meta = read_json(dir / "meta.json");
  TrajectoryDataset ds;
  try {
    if (meta.at("schema_version").get<int>() != kSchemaVersion) throw DataError("unsupported schema_version");
    ds.M = meta.at("M").get<int>();
    const int L = meta.at("L").get<int>();
    const int N = meta.at("N").get<int>();
    const int d = meta.at("d").get<int>();
    const int K = meta.at("K").get<int>();
    const SystemOrder order = parse_order(meta.at("order").get<std::string>());
    std::vector<int> labels = meta.at("types").get<std::vector<int>>();
    if (static_cast<int>(labels.size()) != N) throw DataError("meta.json types must have N entries");
    for (int& k : labels) --k;
    ds.spec = order == SystemOrder::First ? SystemSpec::first_order(N, d) : SystemSpec::second_order(N, d);
    ds.spec.partition = TypePartition(labels, K);
    ds.spec.model = meta.value("model", std::string());
    ds.times = from_vector(meta.at("times").get<std::vector<double>>());
    if (ds.times.size() != L) throw DataError("meta.json times must have L entries");
    for (auto& [k, v] : meta.at("model_params").items()) ds.model_params[k] = v.get<double>();
    ds.seed = meta.at("seed").get<std::uint64_t>();
    ds.noise_sigma = meta.at("noise_sigma").get<double>();
    ds.derivative_noise_sigma = meta.value("derivative_noise_sigma", ds.noise_sigma);
    ds.derivative_source = parse_derivative_source(meta.at("derivative_source").get<std::string>());
    if (order == SystemOrder::Second) {
      if (meta.contains("masses")) ds.spec.masses = from_vector(meta.at("masses").get<std::vector<double>>());
      if (meta.contains("force")) {
        const json& f = meta.at("force");
        ds.spec.force.enabled = f.at("enabled").get<bool>();
        ds.spec.force.friction = f.at("friction").get<double>();
        ds.spec.force.propulsion = f.at("propulsion").get<double>();
      }
    }
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed meta.json: ") + e.what());
  }

  const int N = ds.spec.N;
  const int d = ds.spec.d;
  const int L = ds.L();
  const Eigen::Index rows = static_cast<Eigen::Index>(N) * d;
  const Eigen::Index cols = static_cast<Eigen::Index>(ds.M) * L;
  ds.positions = Eigen::MatrixXd::Zero(rows, cols);
  bool have_v = false, have_a = false;

  for (int m = 0; m < ds.M; ++m) {
    const fs::path path = dir / ("traj_" + std::to_string(m + 1) + ".csv");
    std::ifstream is(path);
    if (!is) throw DataError("cannot read " + path.string());
    std::string line;
    std::getline(is, line);
    const auto header = split(trim_cr(line), ',');
    const int width = static_cast<int>(header.size());
    const bool v = width >= 2 + 2 * d && header[2 + d] == "v1";
    const bool a = width == 2 + 3 * d || (width == 2 + 2 * d && header[2 + d] == "a1");
    if (width != 2 + d * (1 + v + a) || header[0] != "t" || header[1] != "agent")
      throw DataError("unexpected header in " + path.string());
    if (m == 0) {
      have_v = v;
      have_a = a;
      if (have_v) ds.velocities = Eigen::MatrixXd::Zero(rows, cols);
      if (have_a) ds.accelerations = Eigen::MatrixXd::Zero(rows, cols);
    } else if (v != have_v || a != have_a) {
      throw DataError("inconsistent columns across trajectory files");
    }
    for (int l = 0; l < L; ++l) {
      const auto c = ds.column(m, l);
      for (int i = 0; i < N; ++i) {
        if (!std::getline(is, line)) throw DataError(path.string() + " has too few rows");
        const auto cells = split(trim_cr(line), ',');
        const std::string where = path.string() + " row " + std::to_string(l * N + i + 2);
        if (static_cast<int>(cells.size()) != width) throw DataError("wrong column count in " + where);
        if (parse_double(cells[0], where) != ds.times[l] || std::stoi(cells[1]) != i + 1)
          throw DataError("rows must be sorted by (t, agent) in " + where);
        int k = 2;
        for (int q = 0; q < d; ++q) ds.positions(i * d + q, c) = parse_double(cells[k++], where);
        if (have_v)
          for (int q = 0; q < d; ++q) (*ds.velocities)(i * d + q, c) = parse_double(cells[k++], where);
        if (have_a)
          for (int q = 0; q < d; ++q) (*ds.accelerations)(i * d + q, c) = parse_double(cells[k++], where);
      }
    }
  }
  return ds;
}

json to_json(const KernelEstimate& est) {
  json j;
  j["role"] = to_string(est.role);
  j["type_pair"] = {est.k1 + 1, est.k2 + 1};
  j["family"] = to_string(est.space.family());
  j["degree"] = est.space.degree();
  if (est.space.empty()) {
    j["R_min"] = 0.0;
    j["R_max"] = 0.0;
    j["knots"] = json::array();
  } else {
    j["R_min"] = est.space.r_min();
    j["R_max"] = est.space.r_max();
    j["knots"] = est.space.breakpoints();
  }
  j["alpha"] = to_vector(est.alpha);
  return j;
}

KernelEstimate kernel_estimate_from_json(const json& j) {
  try {
    KernelEstimate est;
    est.role = parse_role(j.at("role").get<std::string>());
    const auto tp = j.at("type_pair").get<std::vector<int>>();
    if (tp.size() != 2) throw DataError("type_pair must have two entries");
    est.k1 = tp[0] - 1;
    est.k2 = tp[1] - 1;
    const auto knots = j.at("knots").get<std::vector<double>>();
    const BasisFamily family = parse_basis_family(j.at("family").get<std::string>());
    if (!knots.empty()) est.space = HypothesisSpace(family, knots, j.value("degree", -1));
    est.alpha = from_vector(j.at("alpha").get<std::vector<double>>());
    if (est.alpha.size() != est.space.dim()) throw DataError("alpha length does not match the basis");
    return est;
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed kernel estimate: ") + e.what());
  }
}

json to_json(const ReductionMap& map) {
  json j;
  j["d"] = map.d;
  j["D"] = map.D;
  j["d_prime"] = map.d_prime;
  j["beta"] = to_vector(map.beta);
  json B = json::array();
  for (Eigen::Index r = 0; r < map.B.rows(); ++r) B.push_back(to_vector(map.B.row(r).transpose()));
  j["B"] = B;
  j["beta_used"] = map.beta_used;
  j["linear_r2"] = map.linear_r2;
  j["centers"] = map.centers;
  j["lambda"] = map.lambda;
  return j;
}

ReductionMap reduction_map_from_json(const json& j) {
  try {
    ReductionMap map;
    map.d = j.at("d").get<int>();
    map.D = j.at("D").get<int>();
    map.d_prime = j.at("d_prime").get<int>();
    map.beta = from_vector(j.at("beta").get<std::vector<double>>());
    const auto rows = j.at("B").get<std::vector<std::vector<double>>>();
    map.B.resize(static_cast<Eigen::Index>(rows.size()), map.D);
    for (std::size_t r = 0; r < rows.size(); ++r) {
      if (static_cast<int>(rows[r].size()) != map.D) throw DataError("B rows must have D entries");
      map.B.row(r) = from_vector(rows[r]).transpose();
    }
    map.beta_used = j.value("beta_used", false);
    map.linear_r2 = j.value("linear_r2", 0.0);
    map.centers = j.value("centers", 0);
    map.lambda = j.value("lambda", 0.0);
    return map;
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed reduction map: ") + e.what());
  }
}

json to_json(const GPConfig& cfg) {
  auto cov = [](const CovarianceParams& p) {
    return json{{"family", to_string(p.family)}, {"variance", p.variance}, {"lengthscale", p.lengthscale}};
  };
  return json{{"energy", cov(cfg.energy)},
              {"alignment", cov(cfg.alignment)},
              {"noise_variance", cfg.noise_variance},
              {"force",
               {{"enabled", cfg.force.enabled},
                {"friction", cfg.force.friction},
                {"propulsion", cfg.force.propulsion}}},
              {"train_force", cfg.train_force}};
}

GPConfig gp_config_from_json(const json& j) {
  try {
    auto cov = [](const json& c) {
      CovarianceParams p;
      p.family = parse_covariance(c.at("family").get<std::string>());
      p.variance = c.at("variance").get<double>();
      p.lengthscale = c.at("lengthscale").get<double>();
      return p;
    };
    GPConfig cfg;
    cfg.energy = cov(j.at("energy"));
    cfg.alignment = cov(j.at("alignment"));
    cfg.noise_variance = j.at("noise_variance").get<double>();
    const json& f = j.at("force");
    cfg.force.enabled = f.at("enabled").get<bool>();
    cfg.force.friction = f.at("friction").get<double>();
    cfg.force.propulsion = f.at("propulsion").get<double>();
    cfg.train_force = j.value("train_force", false);
    return cfg;
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed GP config: ") + e.what());
  }
}

json to_json(const LearnReport& report) {
  json j;
  json blocks = json::array();
  for (const auto& b : report.blocks) {
    blocks.push_back({{"role", to_string(b.role)},
                      {"type_pair", {b.k1 + 1, b.k2 + 1}},
                      {"R_min", b.radii.r_min},
                      {"R_max", b.radii.r_max},
                      {"pair_count", b.radii.count},
                      {"n", b.n},
                      {"observed", b.observed},
                      {"dead_basis", b.dead_basis}});
  }
  j["blocks"] = blocks;
  json rhos = json::array();
  for (const auto& r : report.rho) {
    json e;
    e["type_pair"] = r.all_pairs() ? json("all") : json({r.k1 + 1, r.k2 + 1});
    e["bins"] = r.bins();
    e["range"] = r.bins() ? json({r.edges[0], r.edges[r.bins()]}) : json::array();
    e["dropped"] = r.dropped;
    rhos.push_back(e);
  }
  j["rho"] = rhos;
  j["n_star"] = report.n_star ? json(*report.n_star) : json(nullptr);
  j["n_tot"] = report.n_tot;
  j["rank"] = report.rank;
  j["condition_number"] = std::isfinite(report.condition) ? json(report.condition) : json(nullptr);
  j["coercivity"] = report.coercivity ? json(*report.coercivity) : json(nullptr);
  if (!report.coercivity_note.empty()) j["coercivity_note"] = report.coercivity_note;
  j["empirical_loss"] = report.empirical_loss;
  j["snapshots"] = report.snapshots;
  return j;
}

void write_json(const json& j, const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path);
  if (!os) throw DataError("cannot write " + path.string());
  os << j.dump(2) << '\n';
}

json read_json(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot read " + path.string());
  try {
    return json::parse(is);
  } catch (const json::exception& e) {
    throw DataError("malformed JSON in " + path.string() + ": " + e.what());
  }
}

void write_rho_csv(const EmpiricalRho& rho, std::ostream& os) {
  os << "bin_left,bin_right,weight\n";
  for (int b = 0; b < rho.bins(); ++b)
    os << format_double(rho.edges[b]) << ',' << format_double(rho.edges[b + 1]) << ','
       << format_double(rho.weights[b]) << '\n';
}

void write_posterior_csv(const Eigen::VectorXd& r, const KernelPrediction& pred, std::ostream& os) {
  os << "r,mean,std\n";
  for (Eigen::Index k = 0; k < r.size(); ++k)
    os << format_double(r[k]) << ',' << format_double(pred.mean[k]) << ','
       << format_double(std::sqrt(pred.variance[k])) << '\n';
}

void write_sweep_csv(const SweepResult& sweep, std::ostream& os) {
  os << "M,n_star,mean_rel_err,std,trials\n";
  for (const auto& r : sweep.rows)
    os << r.M << ',' << r.n_star << ',' << format_double(r.mean) << ',' << format_double(r.std) << ',' << r.trials
       << '\n';
}

}  // namespace collective
