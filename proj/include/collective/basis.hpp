#pragma once

#include "collective/core.hpp"

#include <vector>

namespace collective {

enum class BasisFamily { PiecewiseConstant, PiecewiseLinear, BSpline };

std::string to_string(BasisFamily f);
/// Accepts pw-constant, pw-linear, bspline.
BasisFamily parse_basis_family(const std::string& s);

inline constexpr int kMaxBasisDimension = 10'000;

/// Clamped B-spline space on [R_min, R_max] with the given breakpoints.
/// Degree 0 gives indicators of right-open intervals (last one closed),
/// degree 1 the nodal hat functions. Dimension = intervals + degree. Every
/// basis function vanishes outside [R_min, R_max].
class HypothesisSpace {
 public:
  HypothesisSpace() = default;
  HypothesisSpace(BasisFamily family, std::vector<double> breakpoints, int degree = -1);

  /// n basis functions on uniform breakpoints.
  static HypothesisSpace uniform(double r_min, double r_max, int n, BasisFamily family, int degree = -1);

  int dim() const { return empty() ? 0 : static_cast<int>(breakpoints_.size()) - 1 + degree_; }
  bool empty() const { return breakpoints_.size() < 2; }
  int degree() const { return degree_; }
  BasisFamily family() const { return family_; }
  double r_min() const { return breakpoints_.front(); }
  double r_max() const { return breakpoints_.back(); }
  const std::vector<double>& breakpoints() const { return breakpoints_; }

  /// Writes the degree+1 possibly nonzero values at r into `values` and
  /// returns the index of the first one, or -1 when r is outside the space.
  int eval_nonzero(double r, double* values) const;

  Eigen::VectorXd eval(double r) const;
  double evaluate(const Eigen::VectorXd& alpha, double r) const;

  bool operator==(const HypothesisSpace& other) const = default;

 private:
  int span(double r) const;

  BasisFamily family_ = BasisFamily::PiecewiseConstant;
  int degree_ = 0;
  std::vector<double> breakpoints_;
  std::vector<double> knots_;  // clamped knot vector
};

}  // namespace collective
