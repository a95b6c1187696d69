#include <collective/io.hpp>

#include <doctest.h>

#include <fstream>
#include <sstream>

using namespace collective;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / ("collective_test_" + name)) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::string slurp(const fs::path& p) {
  std::ifstream is(p);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

TrajectoryDataset sample(const std::string& name, const std::map<std::string, double>& params, double noise) {
  const auto model = catalog(name, params);
  GenerateOptions g;
  g.M = 2;
  g.times = uniform_times(model.T, 4);
  g.seed = 31;
  g.noise_sigma = noise;
  g.integrator = default_integrator(model.kernels);
  return generate_dataset(model, g);
}

void check_same(const TrajectoryDataset& a, const TrajectoryDataset& b) {
  CHECK(a.M == b.M);
  CHECK(a.spec.N == b.spec.N);
  CHECK(a.spec.d == b.spec.d);
  CHECK(a.spec.order == b.spec.order);
  CHECK(a.spec.partition.labels() == b.spec.partition.labels());
  CHECK(a.spec.model == b.spec.model);
  CHECK(a.times == b.times);
  CHECK(a.positions == b.positions);
  CHECK(a.velocities.has_value() == b.velocities.has_value());
  if (a.velocities && b.velocities) CHECK(*a.velocities == *b.velocities);
  CHECK(a.accelerations.has_value() == b.accelerations.has_value());
  if (a.accelerations && b.accelerations) CHECK(*a.accelerations == *b.accelerations);
  CHECK(a.model_params == b.model_params);
  CHECK(a.seed == b.seed);
  CHECK(a.noise_sigma == b.noise_sigma);
  CHECK(a.derivative_noise_sigma == b.derivative_noise_sigma);
  CHECK(a.derivative_source == b.derivative_source);
}

}  // namespace

TEST_CASE("doubles survive formatting") {
  for (double x : {0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, std::nextafter(1.0, 2.0)})
    CHECK(std::stod(format_double(x)) == x);
}

TEST_CASE("dataset round trip") {
  for (const auto& [name, params, noise] :
       std::vector<std::tuple<std::string, std::map<std::string, double>, double>>{
           {"opinion", {{"N", 4}}, 0.0},
           {"predator_prey", {{"N1", 4}, {"N2", 1}}, 0.01},
           {"fwep", {{"N", 3}, {"friction", 0.2}}, 0.0}}) {
    TempDir dir(name);
    const TrajectoryDataset ds = sample(name, params, noise);
    write_dataset(ds, dir.path);
    CHECK(fs::exists(dir.path / "meta.json"));
    CHECK(fs::exists(dir.path / "traj_1.csv"));
    CHECK(fs::exists(dir.path / "traj_2.csv"));
    const TrajectoryDataset back = read_dataset(dir.path);
    check_same(ds, back);
    if (ds.spec.order == SystemOrder::Second) {
      CHECK(back.spec.masses == ds.spec.masses);
      CHECK(back.spec.force.friction == ds.spec.force.friction);
    }

    TempDir again(name + "_again");
    write_dataset(back, again.path);
    for (const char* f : {"meta.json", "traj_1.csv", "traj_2.csv"})
      CHECK(slurp(dir.path / f) == slurp(again.path / f));
  }
}

TEST_CASE("trajectory file layout") {
  TempDir dir("layout");
  write_dataset(sample("fwep", {{"N", 2}, {"d", 1}}, 0.0), dir.path);
  std::ifstream is(dir.path / "traj_1.csv");
  std::string header, first;
  std::getline(is, header);
  std::getline(is, first);
  CHECK(header == "t,agent,x1,v1,a1");
  CHECK(first.rfind("0,1,", 0) == 0);
  const auto meta = read_json(dir.path / "meta.json");
  CHECK(meta.at("types") == nlohmann::json({1, 1}));
  CHECK(meta.at("schema_version") == kSchemaVersion);
}

TEST_CASE("malformed datasets are rejected") {
  TempDir dir("bad");
  const TrajectoryDataset ds = sample("opinion", {{"N", 3}}, 0.0);
  write_dataset(ds, dir.path);
  SUBCASE("missing trajectory file") {
    fs::remove(dir.path / "traj_2.csv");
    CHECK_THROWS_AS(read_dataset(dir.path), DataError);
  }
  SUBCASE("wrong header") {
    std::string text = slurp(dir.path / "traj_1.csv");
    text.replace(0, 1, "T");
    std::ofstream(dir.path / "traj_1.csv") << text;
    CHECK_THROWS_AS(read_dataset(dir.path), DataError);
  }
  SUBCASE("truncated rows") {
    std::string text = slurp(dir.path / "traj_1.csv");
    text.resize(text.size() / 2);
    text.resize(text.rfind('\n') + 1);
    std::ofstream(dir.path / "traj_1.csv") << text;
    CHECK_THROWS_AS(read_dataset(dir.path), DataError);
  }
  SUBCASE("bad number") {
    std::string text = slurp(dir.path / "traj_1.csv");
    const auto pos = text.find('\n') + 1;
    text.replace(pos, 1, "x");
    std::ofstream(dir.path / "traj_1.csv") << text;
    CHECK_THROWS_AS(read_dataset(dir.path), DataError);
  }
  SUBCASE("broken meta") {
    std::ofstream(dir.path / "meta.json") << "{\"schema_version\": 1";
    CHECK_THROWS_AS(read_dataset(dir.path), DataError);
  }
  CHECK_THROWS_AS(read_dataset(dir.path / "nowhere"), DataError);
}

TEST_CASE("kernel estimate JSON round trip") {
  KernelEstimate est{KernelRole::Alignment, 1, 0, HypothesisSpace(BasisFamily::BSpline, {0.0, 0.5, 1.25, 2.0}, 2),
                     Eigen::VectorXd::LinSpaced(5, -1.0, 1.0 / 3.0)};
  const auto j = to_json(est);
  CHECK(j.at("type_pair") == nlohmann::json({2, 1}));
  const KernelEstimate back = kernel_estimate_from_json(nlohmann::json::parse(j.dump()));
  CHECK(back.role == est.role);
  CHECK(back.k1 == 1);
  CHECK(back.k2 == 0);
  CHECK(back.alpha == est.alpha);
  CHECK(back.space.breakpoints() == est.space.breakpoints());
  for (double r : {0.0, 0.3, 1.7, 2.0}) CHECK(back(r) == est(r));

  auto bad = j;
  bad["alpha"] = {1.0};
  CHECK_THROWS_AS(kernel_estimate_from_json(bad), DataError);
  CHECK_THROWS_AS(kernel_estimate_from_json(nlohmann::json::object()), DataError);
}

TEST_CASE("reduction map and GP config JSON round trip") {
  ReductionMap map;
  map.d = 1;
  map.D = 5;
  map.d_prime = 2;
  map.B = Eigen::MatrixXd::Identity(2, 5);
  map.beta = Eigen::VectorXd::LinSpaced(5, 0.1, 0.5);
  map.beta_used = true;
  map.centers = 7;
  map.lambda = 0.2;
  const auto j = to_json(map);
  for (const char* key : {"d", "D", "d_prime", "beta", "B"}) CHECK(j.contains(key));
  const ReductionMap back = reduction_map_from_json(nlohmann::json::parse(j.dump()));
  CHECK(back.B == map.B);
  CHECK(back.beta == map.beta);
  CHECK(back.d_prime == 2);
  CHECK(back.beta_used);

  GPConfig cfg;
  cfg.energy = {CovarianceFamily::SquaredExponential, 0.3, 1.7};
  cfg.noise_variance = 2e-5;
  cfg.force = ParametricForce{true, 0.1, -0.2};
  cfg.train_force = true;
  const GPConfig g = gp_config_from_json(nlohmann::json::parse(to_json(cfg).dump()));
  CHECK(g.energy.family == CovarianceFamily::SquaredExponential);
  CHECK(g.energy.lengthscale == 1.7);
  CHECK(g.alignment.family == CovarianceFamily::Matern52);
  CHECK(g.noise_variance == 2e-5);
  CHECK(g.force.propulsion == -0.2);
  CHECK(g.train_force);
}

TEST_CASE("learn report JSON") {
  LearnReport rep;
  rep.condition = std::numeric_limits<double>::infinity();
  rep.n_tot = 3;
  const auto j = to_json(rep);
  CHECK(j.at("condition_number").is_null());
  CHECK(j.at("coercivity").is_null());
  CHECK(j.at("n_tot") == 3);
}

TEST_CASE("csv writers") {
  EmpiricalRho rho;
  rho.edges = Eigen::Vector3d(0.0, 0.5, 1.0);
  rho.weights = Eigen::Vector2d(0.25, 0.75);
  std::ostringstream a;
  write_rho_csv(rho, a);
  CHECK(a.str() == "bin_left,bin_right,weight\n0,0.5,0.25\n0.5,1,0.75\n");

  KernelPrediction pred;
  pred.mean = Eigen::Vector2d(1.0, 2.0);
  pred.variance = Eigen::Vector2d(4.0, 0.0);
  std::ostringstream b;
  write_posterior_csv(Eigen::Vector2d(0.0, 1.0), pred, b);
  CHECK(b.str() == "r,mean,std\n0,1,2\n1,2,0\n");

  SweepResult sw;
  SweepRow row;
  row.M = 8;
  row.n_star = 2;
  row.mean = 0.5;
  row.std = 0.125;
  row.trials = 4;
  sw.rows.push_back(row);
  std::ostringstream c;
  write_sweep_csv(sw, c);
  CHECK(c.str() == "M,n_star,mean_rel_err,std,trials\n8,2,0.5,0.125,4\n");
}
