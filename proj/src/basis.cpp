#include "collective/basis.hpp"

#include <algorithm>
#include <cmath>

namespace collective {

std::string to_string(BasisFamily f) {
  switch (f) {
    case BasisFamily::PiecewiseConstant: return "pw-constant";
    case BasisFamily::PiecewiseLinear: return "pw-linear";
    case BasisFamily::BSpline: return "bspline";
  }
  return "?";
}

BasisFamily parse_basis_family(const std::string& s) {
  if (s == "pw-constant") return BasisFamily::PiecewiseConstant;
  if (s == "pw-linear") return BasisFamily::PiecewiseLinear;
  if (s == "bspline") return BasisFamily::BSpline;
  throw ConfigError("unknown basis family '" + s + "' (expected pw-constant|pw-linear|bspline)");
}

namespace {

int family_degree(BasisFamily f, int degree) {
  switch (f) {
    case BasisFamily::PiecewiseConstant: return 0;
    case BasisFamily::PiecewiseLinear: return 1;
    case BasisFamily::BSpline: return degree < 0 ? 3 : degree;
  }
  return 0;
}

}  // namespace

HypothesisSpace::HypothesisSpace(BasisFamily family, std::vector<double> breakpoints, int degree)
    : family_(family), degree_(family_degree(family, degree)), breakpoints_(std::move(breakpoints)) {
  if (breakpoints_.size() < 2) throw ConfigError("hypothesis space needs at least two breakpoints");
  for (std::size_t j = 0; j < breakpoints_.size(); ++j) {
    if (!std::isfinite(breakpoints_[j])) throw ConfigError("breakpoints must be finite");
    if (j > 0 && !(breakpoints_[j] > breakpoints_[j - 1]))
      throw ConfigError("breakpoints must be strictly increasing");
  }
  if (degree_ > 10) throw ConfigError("spline degree above 10 not supported");
  if (dim() > kMaxBasisDimension)
    throw ConfigError("resource limit: basis dimension " + std::to_string(dim()) + " exceeds cap " +
                      std::to_string(kMaxBasisDimension));
  knots_.assign(degree_, breakpoints_.front());
  knots_.insert(knots_.end(), breakpoints_.begin(), breakpoints_.end());
  knots_.insert(knots_.end(), degree_, breakpoints_.back());
}

HypothesisSpace HypothesisSpace::uniform(double r_min, double r_max, int n, BasisFamily family, int degree) {
  if (!(r_min < r_max)) throw ConfigError("hypothesis space needs R_min < R_max");
  const int p = family_degree(family, degree);
  if (n > kMaxBasisDimension)
    throw ConfigError("resource limit: basis dimension " + std::to_string(n) + " exceeds cap " +
                      std::to_string(kMaxBasisDimension));
  const int intervals = n - p;
  if (intervals < 1)
    throw ConfigError("dimension " + std::to_string(n) + " too small for degree " + std::to_string(p));
  std::vector<double> br(intervals + 1);
  for (int j = 0; j <= intervals; ++j) br[j] = r_min + (r_max - r_min) * j / intervals;
  br.back() = r_max;
  return HypothesisSpace(family, std::move(br), p);
}

int HypothesisSpace::span(double r) const {
  if (empty() || !(r >= r_min()) || !(r <= r_max())) return -1;
  const int intervals = static_cast<int>(breakpoints_.size()) - 1;
  auto it = std::upper_bound(breakpoints_.begin(), breakpoints_.end(), r);
  int j = static_cast<int>(it - breakpoints_.begin()) - 1;
  return std::min(j, intervals - 1);
}

int HypothesisSpace::eval_nonzero(double r, double* values) const {
  const int j = span(r);
  if (j < 0) return -1;
  const int p = degree_;
  const int s = j + p;  // index of the knot interval in knots_
  values[0] = 1.0;
  double left[16], right[16];
  for (int k = 1; k <= p; ++k) {
    left[k] = r - knots_[s + 1 - k];
    right[k] = knots_[s + k] - r;
    double saved = 0.0;
    for (int q = 0; q < k; ++q) {
      const double tmp = values[q] / (right[q + 1] + left[k - q]);
      values[q] = saved + right[q + 1] * tmp;
      saved = left[k - q] * tmp;
    }
    values[k] = saved;
  }
  return j;
}

Eigen::VectorXd HypothesisSpace::eval(double r) const {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(dim());
  double v[16];
  const int first = eval_nonzero(r, v);
  if (first < 0) return out;
  for (int q = 0; q <= degree_; ++q) out[first + q] = v[q];
  return out;
}

double HypothesisSpace::evaluate(const Eigen::VectorXd& alpha, double r) const {
  double v[16];
  const int first = eval_nonzero(r, v);
  if (first < 0) return 0.0;
  double sum = 0.0;
  for (int q = 0; q <= degree_; ++q) sum += alpha[first + q] * v[q];
  return sum;
}

}  // namespace collective
