#include "collective/estimator.hpp"

#include <Eigen/Eigenvalues>
#include <omp.h>

#include <cmath>
#include <exception>
#include <limits>

namespace collective {

KernelFunction KernelEstimate::as_function() const {
  KernelFunction k;
  auto self = *this;
  k.fn = [self](double r) { return self(r); };
  k.support = space.empty() ? 0.0 : space.r_max();
  k.continuous = !space.empty() && space.degree() >= 1;
  k.name = "estimate";
  return k;
}

double NormalSystem::loss(const Eigen::VectorXd& alpha) const {
  return alpha.dot(A * alpha) - 2.0 * b.dot(alpha) + response_energy;
}

NormalSystem accumulate_normal_system(const TrajectoryDataset& ds, int n_tot, const SnapshotFeatures& features,
                                      const Eigen::VectorXd& row_weights, const AssemblyOptions& opts) {
  const int L = ds.L();
  const int S = ds.snapshots();
  const Eigen::Index rows = static_cast<Eigen::Index>(ds.spec.N) * ds.spec.d;
  if (S < 1) throw DataError("no snapshots to assemble");
  if (row_weights.size() != rows) throw ConfigError("row weights must have N*d entries");
  const int chunk = std::max(1, opts.chunk);
  const int chunks = (S + chunk - 1) / chunk;

  std::vector<Eigen::MatrixXd> pA(chunks);
  std::vector<Eigen::VectorXd> pb(chunks);
  std::vector<double> pe(chunks, 0.0);
  std::vector<std::exception_ptr> errors(chunks);
  const int threads = opts.threads > 0 ? opts.threads : omp_get_max_threads();

#pragma omp parallel num_threads(threads)
  {
    Eigen::MatrixXd F(rows, n_tot), FW(rows, n_tot);
    Eigen::VectorXd y(rows);
#pragma omp for schedule(dynamic)
    for (int c = 0; c < chunks; ++c) {
      try {
        Eigen::MatrixXd A = Eigen::MatrixXd::Zero(n_tot, n_tot);
        Eigen::VectorXd b = Eigen::VectorXd::Zero(n_tot);
        double e = 0.0;
        for (int s = c * chunk; s < std::min(S, (c + 1) * chunk); ++s) {
          F.setZero();
          y.setZero();
          features(s / L, s % L, F, y);
          FW = row_weights.asDiagonal() * F;
          A.noalias() += FW.transpose() * F;
          b.noalias() += FW.transpose() * y;
          e += y.dot(row_weights.asDiagonal() * y);
        }
        pA[c] = std::move(A);
        pb[c] = std::move(b);
        pe[c] = e;
      } catch (...) {
        errors[c] = std::current_exception();
      }
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);

  NormalSystem sys;
  sys.A = Eigen::MatrixXd::Zero(n_tot, n_tot);
  sys.b = Eigen::VectorXd::Zero(n_tot);
  for (int c = 0; c < chunks; ++c) {
    sys.A += pA[c];
    sys.b += pb[c];
    sys.response_energy += pe[c];
  }
  sys.A /= S;
  sys.b /= S;
  sys.response_energy /= S;
  sys.A = (0.5 * (sys.A + sys.A.transpose())).eval();
  sys.snapshots = S;
  return sys;
}

NormalSystem assemble_normal_system(const TrajectoryDataset& ds, const std::vector<KernelBlock>& blocks,
                                    const AssemblyOptions& opts) {
  const SystemSpec& spec = ds.spec;
  const bool second = spec.order == SystemOrder::Second;
  if (!ds.velocities || (second && !ds.accelerations)) throw DataError("missing derivatives for learning");
  const int N = spec.N;
  const int d = spec.d;
  const int K = spec.partition.types();
  const Eigen::VectorXd w = agent_weights(spec.partition);

  // block lookup per (role, k1, k2); -1 when the kernel is not learned
  std::vector<int> lookup(2 * static_cast<std::size_t>(K) * K, -1);
  std::vector<BlockRange> ranges;
  int offset = 0;
  for (std::size_t q = 0; q < blocks.size(); ++q) {
    const auto& blk = blocks[q];
    if (blk.k1 < 0 || blk.k1 >= K || blk.k2 < 0 || blk.k2 >= K) throw ConfigError("block type pair out of range");
    if (blk.role == KernelRole::Alignment && !second) throw ConfigError("alignment kernels need a second-order system");
    const std::size_t key = (blk.role == KernelRole::Energy ? 0 : 1) * K * K + blk.k1 * K + blk.k2;
    if (lookup[key] >= 0) throw ConfigError("duplicate kernel block");
    lookup[key] = static_cast<int>(q);
    ranges.push_back({offset, blk.space.dim()});
    offset += blk.space.dim();
  }
  const int n_tot = offset;
  if (n_tot < 1) throw ConfigError("no basis functions to learn");

  Eigen::VectorXd row_w(static_cast<Eigen::Index>(N) * d);
  for (int i = 0; i < N; ++i) row_w.segment(i * d, d).setConstant(w[i]);

  const Eigen::MatrixXd& X = ds.positions;
  const Eigen::MatrixXd& V = *ds.velocities;

  auto features = [&](int m, int l, Eigen::MatrixXd& F, Eigen::VectorXd& y) {
    const Eigen::Index col = ds.column(m, l);
    auto x = X.col(col);
    auto v = V.col(col);
    if (!second) {
      y = v;
    } else {
      auto a = ds.accelerations->col(col);
      for (int i = 0; i < N; ++i) {
        y.segment(i * d, d) = spec.masses[i] * a.segment(i * d, d);
        if (spec.force.enabled) y.segment(i * d, d) -= spec.force.apply(v.segment(i * d, d));
      }
    }
    double vals[16];
    Eigen::VectorXd dx(d), dv(d);
    auto add = [&](KernelRole role, int receiver, int ci, int cj, double weight, double r,
                   const Eigen::VectorXd& diff, double sign) {
      const std::size_t key = (role == KernelRole::Energy ? 0 : 1) * K * K + ci * K + cj;
      const int q = lookup[key];
      if (q < 0) return;
      const auto& space = blocks[q].space;
      const int first = space.eval_nonzero(r, vals);
      if (first < 0) return;
      for (int p = 0; p <= space.degree(); ++p)
        F.block(receiver * d, ranges[q].offset + first + p, d, 1) += (sign * weight * vals[p]) * diff;
    };
    for (int i = 0; i < N; ++i) {
      const int ci = spec.partition.type_of(i);
      for (int j = i + 1; j < N; ++j) {
        const int cj = spec.partition.type_of(j);
        dx = x.segment(j * d, d) - x.segment(i * d, d);
        const double r = std::max(dx.norm(), kCoincidenceEpsilon);
        add(KernelRole::Energy, i, ci, cj, w[j], r, dx, 1.0);
        add(KernelRole::Energy, j, cj, ci, w[i], r, dx, -1.0);
        if (second) {
          dv = v.segment(j * d, d) - v.segment(i * d, d);
          add(KernelRole::Alignment, i, ci, cj, w[j], r, dv, 1.0);
          add(KernelRole::Alignment, j, cj, ci, w[i], r, dv, -1.0);
        }
      }
    }
  };

  NormalSystem sys = accumulate_normal_system(ds, n_tot, features, row_w, opts);
  sys.blocks = blocks;
  sys.ranges = ranges;
  return sys;
}

SolveResult solve(const NormalSystem& sys, double ridge, double trunc_tol) {
  const Eigen::MatrixXd& A = sys.A;
  if (A.rows() != A.cols() || A.rows() != sys.b.size()) throw ConfigError("normal system dimensions mismatch");
  if (ridge < 0.0) throw ConfigError("ridge must be nonnegative");
  if (!A.allFinite() || !sys.b.allFinite()) throw NumericalError("normal system contains non-finite entries");
  const double scale = std::max(1.0, A.cwiseAbs().maxCoeff());
  if ((A - A.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale)
    throw NumericalError("assembly corruption: normal matrix is not symmetric");

  Eigen::MatrixXd M = A;
  M.diagonal().array() += ridge;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(M);
  if (es.info() != Eigen::Success) throw NumericalError("eigendecomposition of the normal matrix failed");
  const Eigen::VectorXd& ev = es.eigenvalues();
  SolveResult out;
  out.lambda_max = ev.size() ? ev.maxCoeff() : 0.0;
  out.alpha = Eigen::VectorXd::Zero(sys.b.size());
  if (!(out.lambda_max > 0.0)) {
    out.condition = std::numeric_limits<double>::infinity();
    return out;
  }
  const double cut = trunc_tol * out.lambda_max;
  const Eigen::VectorXd proj = es.eigenvectors().transpose() * sys.b;
  Eigen::VectorXd coef = Eigen::VectorXd::Zero(ev.size());
  double lambda_min = out.lambda_max;
  for (Eigen::Index k = 0; k < ev.size(); ++k) {
    if (ev[k] <= cut) continue;
    coef[k] = proj[k] / ev[k];
    lambda_min = std::min(lambda_min, ev[k]);
    ++out.rank;
  }
  out.alpha = es.eigenvectors() * coef;
  out.condition = out.lambda_max / lambda_min;
  return out;
}

int choose_dimension(int M, double s) {
  if (M < 2) throw ConfigError("choose_dimension needs M >= 2");
  if (!(s > 0.0)) throw ConfigError("smoothness must be positive");
  const double n = std::pow(M / std::log(static_cast<double>(M)), 1.0 / (2.0 * s + 1.0));
  return std::max(1, static_cast<int>(std::lround(n)));
}

KernelSet LearnResult::kernels(int K, bool with_alignment) const {
  KernelSet ks;
  ks.K = K;
  ks.energy.assign(static_cast<std::size_t>(K) * K, KernelFunction::zero());
  if (with_alignment) ks.alignment.assign(static_cast<std::size_t>(K) * K, KernelFunction::zero());
  for (const auto& e : estimates) {
    if (e.role == KernelRole::Alignment && !with_alignment) continue;
    ks.get(e.role, e.k1, e.k2) = e.as_function();
  }
  return ks;
}

const KernelEstimate& LearnResult::find(KernelRole role, int k1, int k2) const {
  for (const auto& e : estimates)
    if (e.role == role && e.k1 == k1 && e.k2 == k2) return e;
  throw ConfigError("no estimate for kernel " + to_string(role) + "(" + std::to_string(k1 + 1) + "," +
                    std::to_string(k2 + 1) + ")");
}

namespace {

template <typename Fn>
auto staged(const char* stage, Fn&& fn) -> decltype(fn()) {
  auto label = [&](const std::exception& e) { return std::string(stage) + ": " + e.what(); };
  try {
    return fn();
  } catch (const ConfigError& e) {
    throw ConfigError(label(e));
  } catch (const DataError& e) {
    throw DataError(label(e));
  } catch (const NumericalError& e) {
    throw NumericalError(label(e));
  } catch (const IntegrationError& e) {
    throw IntegrationError(label(e));
  } catch (const Error& e) {
    throw Error(label(e));
  }
}

// Per-bin mean of |v_i' - v_i|^2 over the pairs of the given types, scaled
// by the bin weight, so sum_b moment_b psi_p psi_q is the alignment Gram.
Eigen::VectorXd alignment_moment(const TrajectoryDataset& ds, const EmpiricalRho& rho) {
  const int N = ds.spec.N;
  const int d = ds.spec.d;
  const auto& part = ds.spec.partition;
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(rho.bins());
  double total = 0.0;
  const int B = rho.bins();
  const double lo = rho.edges[0];
  const double hi = rho.edges[B];
  for (Eigen::Index c = 0; c < ds.positions.cols(); ++c) {
    auto x = ds.positions.col(c);
    auto v = ds.velocities->col(c);
    for (int i = 0; i < N; ++i) {
      for (int j = i + 1; j < N; ++j) {
        int a = part.type_of(i), b = part.type_of(j);
        if (a > b) std::swap(a, b);
        if (!rho.all_pairs() && !(a == std::min(rho.k1, rho.k2) && b == std::max(rho.k1, rho.k2))) continue;
        const double r = (x.segment(j * d, d) - x.segment(i * d, d)).norm();
        total += 1.0;
        if (!(r >= lo) || !(r <= hi)) continue;
        int bin = std::clamp(static_cast<int>((r - lo) / (hi - lo) * B), 0, B - 1);
        sum[bin] += (v.segment(j * d, d) - v.segment(i * d, d)).squaredNorm();
      }
    }
  }
  return total > 0.0 ? Eigen::VectorXd(sum / total) : sum;
}

}  // namespace

LearnResult learn_kernels(const TrajectoryDataset& ds, const LearnConfig& cfg) {
  staged("validate", [&] {
    require_valid(ds);
    return 0;
  });
  const SystemSpec& spec = ds.spec;
  const bool second = spec.order == SystemOrder::Second;
  const int K = spec.partition.types();
  const bool per_type = cfg.rho_per_type.value_or(K > 1);

  LearnResult result;
  LearnReport& rep = result.report;

  const auto radii = staged("support_radii", [&] { return support_radii(ds); });

  int n = 0;
  staged("build_hypothesis_space", [&] {
    if (cfg.n) {
      n = *cfg.n;
    } else if (cfg.knots.empty()) {
      if (ds.M >= 2) {
        rep.n_star = choose_dimension(ds.M, cfg.smoothness);
        n = *rep.n_star;
      } else {
        n = 1;
      }
      if (cfg.family != BasisFamily::PiecewiseConstant) {
        const int p = cfg.family == BasisFamily::PiecewiseLinear ? 1 : (cfg.degree < 0 ? 3 : cfg.degree);
        n = std::max(n, p + 1);
      }
    }
    if (cfg.knots.empty() && n < 1) throw ConfigError("dimension n must be at least 1");
    return 0;
  });

  std::vector<KernelBlock> blocks;
  std::vector<KernelEstimate> unobserved;
  const int roles = second ? 2 : 1;
  for (int role_i = 0; role_i < roles; ++role_i) {
    const KernelRole role = role_i == 0 ? KernelRole::Energy : KernelRole::Alignment;
    for (int k1 = 0; k1 < K; ++k1) {
      for (int k2 = 0; k2 < K; ++k2) {
        const Radii& rr = radii[k1 * K + k2];
        BlockReport br;
        br.role = role;
        br.k1 = k1;
        br.k2 = k2;
        br.radii = rr;
        if (rr.count == 0) {
          br.observed = false;
          rep.blocks.push_back(br);
          unobserved.push_back(KernelEstimate{role, k1, k2, HypothesisSpace(), Eigen::VectorXd()});
          continue;
        }
        HypothesisSpace space = staged("build_hypothesis_space", [&] {
          if (!cfg.knots.empty()) return HypothesisSpace(cfg.family, cfg.knots, cfg.degree);
          double lo = rr.r_min, hi = rr.r_max;
          if (cfg.range) std::tie(lo, hi) = *cfg.range;
          if (!(hi > lo)) {
            const double pad = std::max(1e-8, 1e-8 * std::abs(lo));
            lo = std::max(0.0, lo - pad);
            hi += pad;
          }
          return HypothesisSpace::uniform(lo, hi, n, cfg.family, cfg.degree);
        });
        br.n = space.dim();
        rep.blocks.push_back(br);
        blocks.push_back(KernelBlock{role, k1, k2, std::move(space)});
      }
    }
  }

  AssemblyOptions aopt;
  aopt.threads = cfg.threads;
  NormalSystem sys = staged("assemble", [&] { return assemble_normal_system(ds, blocks, aopt); });
  SolveResult sol = staged("solve", [&] { return solve(sys, cfg.ridge, cfg.trunc_tol); });

  rep.n_tot = sys.n_tot();
  rep.rank = sol.rank;
  rep.condition = sol.condition;
  rep.snapshots = sys.snapshots;
  rep.empirical_loss = std::max(0.0, sys.loss(sol.alpha));

  const double diag_scale = sys.A.diagonal().cwiseAbs().maxCoeff();
  std::size_t bi = 0;
  for (auto& br : rep.blocks) {
    if (!br.observed) continue;
    const BlockRange& range = sys.ranges[bi++];
    for (int p = 0; p < range.size; ++p)
      if (!(sys.A(range.offset + p, range.offset + p) > 1e-14 * diag_scale)) br.dead_basis.push_back(p + 1);
  }

  for (std::size_t q = 0; q < blocks.size(); ++q) {
    const auto& blk = blocks[q];
    result.estimates.push_back(
        KernelEstimate{blk.role, blk.k1, blk.k2, blk.space, sol.alpha.segment(sys.ranges[q].offset, sys.ranges[q].size)});
  }
  for (auto& e : unobserved) result.estimates.push_back(std::move(e));

  RhoOptions ro;
  ro.bins = cfg.rho_bins;
  ro.threads = cfg.threads;
  rep.rho = staged("rho", [&] {
    if (per_type) return estimate_rho_per_type(ds, ro);
    return std::vector<EmpiricalRho>{estimate_rho(ds, ro)};
  });

  if (cfg.coercivity) {
    try {
      Eigen::MatrixXd G = Eigen::MatrixXd::Zero(sys.n_tot(), sys.n_tot());
      for (std::size_t q = 0; q < blocks.size(); ++q) {
        const auto& blk = blocks[q];
        const EmpiricalRho& rho = per_type ? rep.rho[blk.k1 * K + blk.k2] : rep.rho.front();
        Eigen::MatrixXd Gq = blk.role == KernelRole::Energy
                                 ? rho_gram(blk.space, rho)
                                 : moment_gram(blk.space, rho, alignment_moment(ds, rho));
        G.block(sys.ranges[q].offset, sys.ranges[q].offset, sys.ranges[q].size, sys.ranges[q].size) = Gq;
      }
      rep.coercivity = min_generalized_eigenvalue(sys.A, G);
    } catch (const Error& e) {
      rep.coercivity_note = e.what();
    }
  }
  return result;
}

Trajectory predict_trajectories(const std::vector<KernelEstimate>& estimates, const SystemSpec& spec,
                                const Eigen::VectorXd& x0, const Eigen::VectorXd& v0, const Eigen::VectorXd& times,
                                const std::optional<IntegratorConfig>& cfg) {
  const bool second = spec.order == SystemOrder::Second;
  LearnResult holder;
  holder.estimates = estimates;
  KernelSet ks = holder.kernels(spec.partition.types(), second);
  return integrate(spec, ks, x0, v0, times, cfg ? *cfg : default_integrator(ks));
}

}  // namespace collective
