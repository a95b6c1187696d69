#include "collective/core.hpp"

#include <cmath>
#include <sstream>

namespace collective {

std::string to_string(SystemOrder order) { return order == SystemOrder::First ? "first" : "second"; }

SystemOrder parse_order(const std::string& s) {
  if (s == "first") return SystemOrder::First;
  if (s == "second") return SystemOrder::Second;
  throw ConfigError("unknown system order '" + s + "' (expected first|second)");
}

std::string to_string(DerivativeSource src) {
  return src == DerivativeSource::Observed ? "observed" : "finite_difference";
}

DerivativeSource parse_derivative_source(const std::string& s) {
  if (s == "observed") return DerivativeSource::Observed;
  if (s == "finite_difference") return DerivativeSource::FiniteDifference;
  throw ConfigError("unknown derivative source '" + s + "'");
}

std::string to_string(DistributionFamily f) {
  switch (f) {
    case DistributionFamily::UniformBox: return "uniform_box";
    case DistributionFamily::Gaussian: return "gaussian";
    case DistributionFamily::UniformAnnulus: return "uniform_annulus";
  }
  return "?";
}

TypePartition::TypePartition(std::vector<int> labels, int K) : labels_(std::move(labels)), K_(K) {
  counts_.assign(K_ > 0 ? K_ : 0, 0);
  for (int label : labels_)
    if (label >= 0 && label < K_) ++counts_[label];
}

TypePartition TypePartition::homogeneous(int N) { return TypePartition(std::vector<int>(N, 0), 1); }

TypePartition TypePartition::from_counts(const std::vector<int>& counts) {
  std::vector<int> labels;
  for (std::size_t k = 0; k < counts.size(); ++k) labels.insert(labels.end(), counts[k], static_cast<int>(k));
  return TypePartition(std::move(labels), static_cast<int>(counts.size()));
}

std::vector<std::string> TypePartition::violations() const {
  std::vector<std::string> out;
  if (K_ < 1) out.emplace_back("partition must have at least one type");
  for (std::size_t i = 0; i < labels_.size(); ++i) {
    if (labels_[i] < 0 || labels_[i] >= K_) {
      out.emplace_back("agent " + std::to_string(i + 1) + " has type label outside 1.." + std::to_string(K_));
    }
  }
  for (int k = 0; k < K_; ++k) {
    if (counts_[k] == 0) out.emplace_back("type " + std::to_string(k + 1) + " has no members");
  }
  return out;
}

SystemSpec SystemSpec::first_order(int N, int d) {
  SystemSpec s;
  s.order = SystemOrder::First;
  s.N = N;
  s.d = d;
  s.partition = TypePartition::homogeneous(N);
  return s;
}

SystemSpec SystemSpec::second_order(int N, int d) {
  SystemSpec s = first_order(N, d);
  s.order = SystemOrder::Second;
  s.masses = Eigen::VectorXd::Ones(N);
  return s;
}

std::vector<std::string> SystemSpec::violations() const {
  std::vector<std::string> out;
  if (N < 2) out.emplace_back("N must be at least 2");
  if (d < 1) out.emplace_back("d must be at least 1");
  if (partition.agents() != N) out.emplace_back("partition does not cover exactly agents 1..N");
  for (auto& v : partition.violations()) out.push_back(v);
  if (order == SystemOrder::Second) {
    if (masses.size() != N) {
      out.emplace_back("masses must have length N");
    } else if (!(masses.array() > 0.0).all() || !masses.allFinite()) {
      out.emplace_back("masses must be strictly positive");
    }
  }
  return out;
}

void SystemSpec::validate() const {
  auto v = violations();
  if (v.empty()) return;
  std::ostringstream os;
  os << "invalid system spec:";
  for (auto& s : v) os << " " << s << ";";
  throw ConfigError(os.str());
}

std::vector<std::string> validate_dataset(const TrajectoryDataset& ds) {
  std::vector<std::string> out;
  for (auto& v : ds.spec.violations()) out.push_back(v);

  const int L = ds.L();
  if (L < 1) out.emplace_back("times empty");
  if (!ds.times.allFinite()) out.emplace_back("times not finite");
  if (L >= 1 && ds.times[0] != 0.0) out.emplace_back("times must start at 0");
  for (int l = 1; l < L; ++l) {
    if (!(ds.times[l] > ds.times[l - 1])) {
      out.emplace_back("times not strictly increasing");
      break;
    }
  }
  if (ds.M < 1) out.emplace_back("M must be at least 1");
  if (ds.noise_sigma < 0.0 || !std::isfinite(ds.noise_sigma)) out.emplace_back("noise_sigma must be nonnegative");
  if (ds.derivative_noise_sigma < 0.0 || !std::isfinite(ds.derivative_noise_sigma))
    out.emplace_back("derivative_noise_sigma must be nonnegative");

  const long rows = static_cast<long>(ds.spec.N) * ds.spec.d;
  const long cols = static_cast<long>(ds.M) * L;
  auto check_shape = [&](const Eigen::MatrixXd& a, const std::string& name) {
    if (a.rows() != rows || a.cols() != cols) {
      out.emplace_back(name + " shape inconsistent with (M, L, N, d)");
    } else if (!a.allFinite()) {
      out.emplace_back(name + " contain non-finite values");
    }
  };
  check_shape(ds.positions, "positions");
  if (ds.velocities) check_shape(*ds.velocities, "velocities");
  if (ds.accelerations) check_shape(*ds.accelerations, "accelerations");

  const bool first = ds.spec.order == SystemOrder::First;
  if ((first && !ds.velocities) || (!first && (!ds.velocities || !ds.accelerations))) {
    out.emplace_back("missing derivatives for learning");
  }
  return out;
}

void require_valid(const TrajectoryDataset& ds) {
  auto v = validate_dataset(ds);
  if (v.empty()) return;
  std::ostringstream os;
  os << "invalid dataset:";
  for (auto& s : v) os << " " << s << ";";
  throw DataError(os.str());
}

InitialDistribution InitialDistribution::box(double lower, double upper) {
  InitialDistribution d;
  d.family = DistributionFamily::UniformBox;
  d.lower = lower;
  d.upper = upper;
  return d;
}

InitialDistribution InitialDistribution::gaussian(double mean, double stddev) {
  InitialDistribution d;
  d.family = DistributionFamily::Gaussian;
  d.mean = mean;
  d.stddev = stddev;
  return d;
}

InitialDistribution InitialDistribution::annulus(double inner, double outer) {
  InitialDistribution d;
  d.family = DistributionFamily::UniformAnnulus;
  d.inner = inner;
  d.outer = outer;
  return d;
}

std::vector<std::string> InitialDistribution::violations() const {
  std::vector<std::string> out;
  switch (family) {
    case DistributionFamily::UniformBox:
      // a zero-width box is a point mass and stays valid
      if (!std::isfinite(lower) || !std::isfinite(upper) || lower > upper)
        out.emplace_back("box bounds must be finite with lower <= upper");
      break;
    case DistributionFamily::Gaussian:
      if (!std::isfinite(mean) || !std::isfinite(stddev) || stddev < 0.0)
        out.emplace_back("gaussian needs finite mean and stddev >= 0");
      break;
    case DistributionFamily::UniformAnnulus:
      if (!std::isfinite(inner) || !std::isfinite(outer) || inner < 0.0 || inner > outer)
        out.emplace_back("annulus radii must satisfy 0 <= inner <= outer");
      break;
  }
  return out;
}

Eigen::VectorXd agent_weights(const TypePartition& partition) {
  Eigen::VectorXd w(partition.agents());
  for (int i = 0; i < partition.agents(); ++i) w[i] = 1.0 / partition.count(partition.type_of(i));
  return w;
}

}  // namespace collective
