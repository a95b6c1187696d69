#include "cli.hpp"

#include <collective/io.hpp>

#include <doctest.h>

#include <fstream>
#include <sstream>

using namespace collective;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run call(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

struct Workspace {
  fs::path root;
  Workspace() : root(fs::temp_directory_path() / "collective_cli_test") {
    fs::remove_all(root);
    fs::create_directories(root);
  }
  ~Workspace() { fs::remove_all(root); }
  std::string at(const std::string& name) const { return (root / name).string(); }
};

std::vector<std::string> lines(const fs::path& p) {
  std::ifstream is(p);
  std::vector<std::string> out;
  for (std::string line; std::getline(is, line);) out.push_back(line);
  return out;
}

}  // namespace

TEST_CASE("usage errors exit with code 2") {
  CHECK(call({"--help"}).code == cli::kExitOk);
  CHECK(call({"--help"}).out.find("simulate") != std::string::npos);
  CHECK(call({}).code == cli::kExitUsage);
  CHECK(call({"fly"}).code == cli::kExitUsage);
  const Run r = call({"simulate", "--model", "opinion"});
  CHECK(r.code == cli::kExitUsage);
  CHECK(r.err.find("--out") != std::string::npos);
  const Run bad = call({"simulate", "--model", "flocking", "--out", "/tmp/none"});
  CHECK(bad.code == cli::kExitUsage);
  CHECK(bad.err.find("error [configure]") != std::string::npos);
  CHECK(call({"sweep", "--model", "opinion", "--Ms", "4,8"}).code == cli::kExitUsage);
}

TEST_CASE("simulate, learn and eval chain") {
  Workspace ws;
  const Run sim = call({"simulate", "--model", "constant", "--N", "3", "--d", "1", "--M", "3", "--L", "5", "--seed",
                        "4", "--out", ws.at("data")});
  REQUIRE(sim.code == cli::kExitOk);
  const TrajectoryDataset ds = read_dataset(ws.at("data"));
  CHECK(ds.M == 3);
  CHECK(ds.L() == 5);
  CHECK(ds.seed == 4);

  const Run learn = call({"learn", "--data", ws.at("data"), "--out", ws.at("fit"), "--n", "2"});
  REQUIRE(learn.code == cli::kExitOk);
  const auto est = read_json(ws.at("fit") + "/estimate.json").at("estimates");
  REQUIRE(est.size() == 1);
  const KernelEstimate k = kernel_estimate_from_json(est.at(0));
  CHECK((k.alpha.array() - 1.0).abs().maxCoeff() < 1e-8);
  const auto rep = read_json(ws.at("fit") + "/report.json");
  CHECK(rep.at("n_tot") == 2);
  CHECK(fs::exists(ws.at("fit") + "/plot_E_1_1.csv"));
  CHECK(lines(ws.at("fit") + "/plot_E_1_1.csv").front() == "r,truth,estimate,rho_weight");

  const Run ev = call({"eval", "--data", ws.at("data"), "--estimate", ws.at("fit") + "/estimate.json", "--out",
                       ws.at("eval")});
  REQUIRE(ev.code == cli::kExitOk);
  const auto traj = lines(ws.at("eval") + "/trajectory_errors.csv");
  CHECK(traj.size() == 4);
  const auto kern = lines(ws.at("eval") + "/kernel_errors.csv");
  REQUIRE(kern.size() == 2);
  const double abs_err = std::stod(kern[1].substr(kern[1].find(',', 6) + 1));
  CHECK(abs_err < 1e-8);

  CHECK(call({"learn", "--data", ws.at("missing"), "--out", ws.at("x")}).code == cli::kExitLearning);
  const Run degen = call({"learn", "--data", ws.at("data"), "--out", ws.at("y"), "--n", "0"});
  CHECK(degen.code == cli::kExitUsage);
}

TEST_CASE("config files fill in flags that were not given") {
  Workspace ws;
  {
    std::ofstream cfg(ws.at("sim.cfg"));
    cfg << "# constant model\nmodel = constant\nN=2\n--d=1\nM = 3\nx0 = \"0,2\"\nL=2\nT=0.1\n";
  }
  const Run r = call({"simulate", "--config", ws.at("sim.cfg"), "--M", "1", "--out", ws.at("data")});
  REQUIRE(r.code == cli::kExitOk);
  const TrajectoryDataset ds = read_dataset(ws.at("data"));
  CHECK(ds.M == 1);
  CHECK(ds.positions(1, 1) - ds.positions(0, 1) == doctest::Approx(2.0 * std::exp(-0.1)).epsilon(1e-8));

  {
    std::ofstream cfg(ws.at("bad.cfg"));
    cfg << "model constant\n";
  }
  CHECK(call({"simulate", "--config", ws.at("bad.cfg"), "--out", ws.at("d2")}).code == cli::kExitUsage);
  CHECK(call({"simulate", "--config", ws.at("absent.cfg"), "--out", ws.at("d3")}).code == cli::kExitUsage);
}

TEST_CASE("feature learning, GP learning and sweep commands") {
  Workspace ws;
  REQUIRE(call({"simulate", "--model", "power_law", "--N", "2", "--theta", "-1", "--M", "10", "--L", "10", "--out",
                ws.at("pl")})
              .code == cli::kExitOk);
  const Run feat = call({"learn-features", "--data", ws.at("pl"), "--out", ws.at("feat"), "--dprime", "1"});
  REQUIRE(feat.code == cli::kExitOk);
  const ReductionMap map = reduction_map_from_json(read_json(ws.at("feat") + "/reduction.json"));
  CHECK(map.d_prime == 1);
  CHECK(map.D == 14);

  REQUIRE(call({"simulate", "--model", "fwep", "--N", "3", "--M", "1", "--L", "3", "--out", ws.at("fw")}).code ==
          cli::kExitOk);
  const Run gp = call({"learn-gp", "--data", ws.at("fw"), "--out", ws.at("gp"), "--restarts", "1", "--max-evals",
                       "40"});
  REQUIRE(gp.code == cli::kExitOk);
  CHECK(fs::exists(ws.at("gp") + "/gp.json"));
  CHECK(lines(ws.at("gp") + "/plot_E.csv").front() == "r,truth,mean,std,rho_weight");
  CHECK(call({"learn-gp", "--data", ws.at("pl"), "--out", ws.at("gp2")}).code == cli::kExitLearning);

  const Run sw = call({"sweep", "--model", "opinion", "--N", "5", "--L", "10", "--Ms", "4,8,16", "--trials", "2",
                       "--reference-M", "10", "--out", ws.at("sweep.csv")});
  REQUIRE(sw.code == cli::kExitOk);
  CHECK(sw.out.rfind("slope,", 0) == 0);
  const auto rows = lines(ws.at("sweep.csv"));
  CHECK(rows.size() == 4);
  CHECK(rows.front() == "M,n_star,mean_rel_err,std,trials");
}
