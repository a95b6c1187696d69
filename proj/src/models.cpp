#include "collective/models.hpp"

#include <set>

namespace collective {

std::string to_string(KernelRole role) { return role == KernelRole::Energy ? "E" : "A"; }

KernelRole parse_role(const std::string& s) {
  if (s == "E" || s == "energy") return KernelRole::Energy;
  if (s == "A" || s == "alignment") return KernelRole::Alignment;
  throw ConfigError("unknown kernel role '" + s + "' (expected E|A)");
}

KernelFunction KernelFunction::zero() {
  KernelFunction k;
  k.fn = [](double) { return 0.0; };
  k.name = "zero";
  return k;
}

KernelFunction KernelFunction::constant(double c, double support) {
  KernelFunction k;
  k.fn = [c](double) { return c; };
  k.support = support;
  k.name = "constant";
  return k;
}

bool KernelSet::complete(bool need_alignment) const {
  const std::size_t n = static_cast<std::size_t>(K) * K;
  if (K < 1 || energy.size() != n) return false;
  return !need_alignment || alignment.size() == n;
}

bool KernelSet::continuous() const {
  for (auto& k : energy)
    if (!k.continuous) return false;
  for (auto& k : alignment)
    if (!k.continuous) return false;
  return true;
}

KernelSet KernelSet::single(KernelFunction energy) {
  KernelSet s;
  s.K = 1;
  s.energy.push_back(std::move(energy));
  return s;
}

KernelSet KernelSet::uniform(int K, const KernelFunction& energy) {
  KernelSet s;
  s.K = K;
  s.energy.assign(static_cast<std::size_t>(K) * K, energy);
  return s;
}

KernelFunction opinion_kernel() {
  KernelFunction k;
  const double knot = std::sqrt(0.5);
  k.fn = [knot](double r) { return r < knot ? 1.0 : (r <= 1.0 ? 0.1 : 0.0); };
  k.support = 1.0;
  k.smoothness = 1.0;
  k.continuous = false;
  k.name = "opinion";
  return k;
}

KernelSet fwep_kernels(double domain_bound) {
  KernelSet s;
  s.K = 1;
  KernelFunction e = KernelFunction::constant(1.0, domain_bound);
  e.name = "fwep_energy";
  KernelFunction a;
  a.fn = [](double r) { return 1.0 / std::sqrt(1.0 + r * r); };
  a.support = domain_bound;
  a.name = "fwep_alignment";
  s.energy.push_back(e);
  s.alignment.push_back(a);
  return s;
}

const std::vector<std::string>& catalog_names() {
  static const std::vector<std::string> names = {"opinion", "predator_prey", "power_law", "fwep", "constant"};
  return names;
}

namespace {

class ParamReader {
 public:
  explicit ParamReader(const std::map<std::string, double>& given) : given_(given) {}

  double get(const std::string& key, double fallback) {
    used_.insert(key);
    auto it = given_.find(key);
    double v = it == given_.end() ? fallback : it->second;
    resolved_[key] = v;
    return v;
  }

  int get_int(const std::string& key, int fallback) {
    double v = get(key, fallback);
    if (v != std::floor(v)) throw ConfigError("parameter " + key + " must be an integer");
    return static_cast<int>(v);
  }

  void finish(const std::string& model) const {
    for (auto& [k, v] : given_) {
      if (!used_.count(k)) throw ConfigError("model '" + model + "' has no parameter '" + k + "'");
    }
  }

  const std::map<std::string, double>& resolved() const { return resolved_; }

 private:
  const std::map<std::string, double>& given_;
  std::set<std::string> used_;
  std::map<std::string, double> resolved_;
};

KernelFunction inverse_square(double scale, double offset, double support, const std::string& name) {
  KernelFunction k;
  k.fn = [scale, offset](double r) { return offset + scale / (r * r); };
  k.support = support;
  k.name = name;
  return k;
}

}  // namespace

ModelDefinition catalog(const std::string& name, const std::map<std::string, double>& params) {
  ParamReader p(params);
  ModelDefinition m;
  m.name = name;

  if (name == "opinion") {
    m.spec = SystemSpec::first_order(p.get_int("N", 20), p.get_int("d", 1));
    m.kernels = KernelSet::single(opinion_kernel());
    m.positions0 = InitialDistribution::box(0.0, p.get("box", 2.0));
    m.T = p.get("T", 10.0);
    m.L = p.get_int("L", 100);
  } else if (name == "predator_prey") {
    const int n1 = p.get_int("N1", 19);
    const int n2 = p.get_int("N2", 1);
    m.spec = SystemSpec::first_order(n1 + n2, p.get_int("d", 2));
    m.spec.partition = TypePartition::from_counts({n1, n2});
    const double R = p.get("R", 100.0);
    m.kernels.K = 2;
    m.kernels.energy = {inverse_square(-1.0, 1.0, R, "prey_prey"), inverse_square(-2.0, 0.0, R, "prey_predator"),
                        inverse_square(3.5, 0.0, R, "predator_prey"), KernelFunction::constant(0.0, R)};
    m.positions0 = InitialDistribution::box(-p.get("box", 2.0), p.get("box", 2.0));
    m.T = p.get("T", 5.0);
    m.L = p.get_int("L", 100);
  } else if (name == "power_law") {
    m.spec = SystemSpec::first_order(p.get_int("N", 3), p.get_int("d", 2));
    const double theta = p.get("theta", 1.0);
    KernelFunction k;
    k.fn = [theta](double r) { return std::pow(r, -theta); };
    k.support = p.get("R", 100.0);
    k.name = "power_law";
    m.kernels = KernelSet::single(k);
    m.positions0 = InitialDistribution::box(0.0, p.get("box", 3.0));
    m.T = p.get("T", 0.5);
    m.L = p.get_int("L", 50);
  } else if (name == "fwep") {
    m.spec = SystemSpec::second_order(p.get_int("N", 20), p.get_int("d", 2));
    m.kernels = fwep_kernels(p.get("R", 100.0));
    const double a1 = p.get("friction", 0.0);
    const double a2 = p.get("propulsion", 0.0);
    m.spec.force.enabled = a1 != 0.0 || a2 != 0.0;
    m.spec.force.friction = a1;
    m.spec.force.propulsion = a2;
    m.positions0 = InitialDistribution::box(-p.get("box", 1.0), p.get("box", 1.0));
    m.velocities0 = InitialDistribution::gaussian(0.0, p.get("vstd", 0.5));
    m.T = p.get("T", 1.0);
    m.L = p.get_int("L", 6);
  } else if (name == "constant") {
    m.spec = SystemSpec::first_order(p.get_int("N", 10), p.get_int("d", 2));
    m.kernels = KernelSet::single(KernelFunction::constant(p.get("c", 1.0), p.get("R", 100.0)));
    m.positions0 = InitialDistribution::box(0.0, p.get("box", 1.0));
    m.T = p.get("T", 1.0);
    m.L = p.get_int("L", 20);
  } else {
    std::string valid;
    for (auto& n : catalog_names()) valid += (valid.empty() ? "" : ", ") + n;
    throw ConfigError("unknown model '" + name + "'; valid identifiers: " + valid);
  }

  p.finish(name);
  m.spec.model = name;
  m.params = p.resolved();
  m.spec.validate();
  return m;
}

}  // namespace collective
