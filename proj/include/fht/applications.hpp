#pragma once

// Downstream uses of a fitted model: observable estimation, two-point
// correlation maps, sequential conditional sampling, and the end-to-end
// multi-snapshot Fokker-Planck solve.

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fht/dynamics.hpp"
#include "fht/model.hpp"
#include "fht/sketching.hpp"

namespace fht {

// Structured moment observables over leaf variables (1-based).
struct Observable {
  enum class Kind { Mean, Second, Cross };
  Kind kind = Kind::Mean;
  int u = 1;
  int v = 1;  // Cross only

  static Observable mean(int u) { return {Kind::Mean, u, u}; }
  static Observable second(int u) { return {Kind::Second, u, u}; }
  static Observable cross(int u, int v) { return {Kind::Cross, u, v}; }
};

// E[O] under the (assumed normalized) model: the named leaves contract with
// the basis moment vectors, all others with the integral vector.
inline double estimate_observable(const FhtModel& model, const Observable& obs) {
  if (obs.u < 1 || obs.u > model.d() || obs.v < 1 || obs.v > model.d())
    throw std::out_of_range("estimate_observable: variable index out of range");
  auto [m1, m2] = model.basis.moment_vectors();
  TreeContraction sweep(model);
  sweep.set_all_leaves(model.basis.integral_vector());
  switch (obs.kind) {
    case Observable::Kind::Mean:
      sweep.set_leaf(obs.u, m1);
      break;
    case Observable::Kind::Second:
      sweep.set_leaf(obs.u, m2);
      break;
    case Observable::Kind::Cross:
      if (obs.u == obs.v) throw std::invalid_argument("cross observable needs distinct variables");
      sweep.set_leaf(obs.u, m1);
      sweep.set_leaf(obs.v, m1);
      break;
  }
  return sweep.value();
}

// General observable given as another model: <O, p> by tensor contraction.
inline double estimate_observable(const FhtModel& model, const FhtModel& obs) {
  return inner_product(obs, model);
}

struct CorrelationMap {
  std::vector<double> corr;      // indexed by 1-based linear variable index - 1
  std::vector<bool> undefined;   // true where a site variance vanished
  int anchor_var = 1;
};

// Pearson correlation between the anchor site and every site, from first
// and second moments of the fitted density.
inline CorrelationMap two_point_correlation(const FhtModel& model, int anchor_var) {
  int d = model.d();
  if (anchor_var < 1 || anchor_var > d) throw std::out_of_range("two_point_correlation: anchor out of range");
  auto [m1, m2] = model.basis.moment_vectors();
  Eigen::VectorXd e = model.basis.integral_vector();

  TreeContraction sweep(model);
  sweep.set_all_leaves(e);
  std::vector<double> mean(d), second(d);
  for (int v = 1; v <= d; ++v) {
    Eigen::VectorXd w = sweep.influence(v);
    mean[v - 1] = w.dot(m1);
    second[v - 1] = w.dot(m2);
  }
  std::vector<double> cross(d);
  sweep.set_leaf(anchor_var, m1);
  for (int v = 1; v <= d; ++v) {
    if (v == anchor_var) continue;
    cross[v - 1] = sweep.influence(v).dot(m1);
  }

  CorrelationMap map;
  map.anchor_var = anchor_var;
  map.corr.assign(d, 0.0);
  map.undefined.assign(d, false);
  double var_a = second[anchor_var - 1] - mean[anchor_var - 1] * mean[anchor_var - 1];
  for (int v = 1; v <= d; ++v) {
    if (v == anchor_var) {
      map.corr[v - 1] = 1.0;
      continue;
    }
    double var_v = second[v - 1] - mean[v - 1] * mean[v - 1];
    if (var_a <= 0.0 || var_v <= 0.0) {
      map.undefined[v - 1] = true;
      map.corr[v - 1] = std::numeric_limits<double>::quiet_NaN();
      continue;
    }
    double cov = cross[v - 1] - mean[anchor_var - 1] * mean[v - 1];
    map.corr[v - 1] = cov / std::sqrt(var_a * var_v);
  }
  return map;
}

struct SampleResult {
  Eigen::MatrixXd samples;     // count x d
  double clipped_mass = 0.0;   // fraction of conditional mass clipped at 0
};

namespace detail {

// Inverse-CDF draw from a piecewise-linear nonnegative density on a uniform
// grid. Returns the sampled abscissa.
inline double sample_piecewise_linear(const std::vector<double>& xs, std::vector<double>& ys, double u01) {
  int n = static_cast<int>(xs.size());
  std::vector<double> cdf(n, 0.0);
  for (int i = 1; i < n; ++i) cdf[i] = cdf[i - 1] + 0.5 * (ys[i - 1] + ys[i]) * (xs[i] - xs[i - 1]);
  double total = cdf[n - 1];
  double target = u01 * total;
  int seg = 0;
  while (seg + 2 < n && cdf[seg + 1] < target) ++seg;
  double c0 = cdf[seg], y0 = ys[seg], y1 = ys[seg + 1];
  double hseg = xs[seg + 1] - xs[seg];
  double rem = target - c0;
  // CDF over the segment: y0 t + (y1-y0) t^2 / (2h), t in [0, h].
  double a = (y1 - y0) / (2.0 * hseg);
  double t;
  if (std::abs(a) < 1e-300) {
    t = y0 > 0 ? rem / y0 : 0.5 * hseg;
  } else {
    double disc = y0 * y0 + 4.0 * a * rem;
    t = disc > 0 ? (-y0 + std::sqrt(disc)) / (2.0 * a) : 0.5 * hseg;
  }
  if (!(t >= 0.0)) t = 0.0;
  if (!(t <= hseg)) t = hseg;
  return xs[seg] + t;
}

inline std::uint64_t per_sample_seed(std::uint64_t seed, std::int64_t i) {
  return splitmix64(seed ^ splitmix64(0x7331'beefULL + i));
}

}  // namespace detail

// Sequential conditional sampling in leaf order 1..d. At step k the
// unnormalized conditional p(x_k | x_<k) is evaluated on a uniform grid over
// [-B, B] via the influence vector of leaf k; negative values are clipped.
inline SampleResult sample(const FhtModel& model, std::int64_t count, std::uint64_t seed,
                           int grid_points_per_axis = 512) {
  int d = model.d();
  double B = model.basis.B;
  int g = grid_points_per_axis;
  if (g < 2) throw std::invalid_argument("sample: grid too small");
  std::vector<double> xs(g);
  for (int i = 0; i < g; ++i) xs[i] = -B + 2.0 * B * i / (g - 1);
  Eigen::MatrixXd Psi(g, model.n());
  for (int i = 0; i < g; ++i) Psi.row(i) = model.basis.eval(xs[i]);

  SampleResult result;
  result.samples.resize(count, d);
  double clipped = 0.0, kept = 0.0;

  Eigen::VectorXd e = model.basis.integral_vector();
  for (std::int64_t s = 0; s < count; ++s) {
    std::mt19937_64 rng(detail::per_sample_seed(seed, s));
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    TreeContraction sweep(model);
    sweep.set_all_leaves(e);
    for (int k = 1; k <= d; ++k) {
      Eigen::VectorXd w = sweep.influence(k);
      Eigen::VectorXd dens = Psi * w;
      std::vector<double> ys(g);
      double pos = 0.0, neg = 0.0;
      for (int i = 0; i < g; ++i) {
        double v = dens(i);
        if (v < 0.0) {
          neg -= v;
          v = 0.0;
        } else {
          pos += v;
        }
        ys[i] = v;
      }
      if (pos <= 0.0)
        throw std::runtime_error("sample: conditional density nonpositive everywhere at step " +
                                 std::to_string(k));
      clipped += neg;
      kept += pos;
      double x = detail::sample_piecewise_linear(xs, ys, unif(rng));
      result.samples(s, k - 1) = x;
      sweep.set_leaf(k, model.basis.eval(x));
    }
  }
  result.clipped_mass = (clipped + kept) > 0 ? clipped / (clipped + kept) : 0.0;
  return result;
}

enum class TimeInterpolation { Nearest, Linear };

struct FokkerPlanckSolution {
  std::vector<double> times;
  std::vector<FhtModel> models;  // normalized, one per snapshot
  TimeInterpolation mode = TimeInterpolation::Linear;
};

// p(t, x): nearest snapshot, or the convex combination of the two bracketing
// snapshots (which preserves normalization).
inline double query_density(const FokkerPlanckSolution& sol, double t, const Eigen::VectorXd& x) {
  if (sol.times.empty()) throw std::runtime_error("query_density: empty solution");
  if (t < sol.times.front() - 1e-12 || t > sol.times.back() + 1e-12)
    throw std::out_of_range("query_density: t outside snapshot range");
  std::size_t j = 0;
  while (j + 1 < sol.times.size() && sol.times[j + 1] <= t) ++j;
  if (j + 1 == sol.times.size() || t <= sol.times[j]) return evaluate(sol.models[j], x);
  if (sol.mode == TimeInterpolation::Nearest) {
    std::size_t near = (t - sol.times[j] <= sol.times[j + 1] - t) ? j : j + 1;
    return evaluate(sol.models[near], x);
  }
  double w = (t - sol.times[j]) / (sol.times[j + 1] - sol.times[j]);
  return (1.0 - w) * evaluate(sol.models[j], x) + w * evaluate(sol.models[j + 1], x);
}

// End-to-end: simulate, then fit + normalize each snapshot independently.
inline FokkerPlanckSolution solve_fokker_planck(const DriftFn& drift, int d, const SdeConfig& sde,
                                                const DimensionTree& tree, const FourierBasis& basis,
                                                const SketchConfig& sketch_cfg,
                                                TimeInterpolation mode = TimeInterpolation::Linear) {
  TrajectoryBatch batch = simulate(drift, d, sde);
  SketchSet sketches = build_default_sketches(tree, sketch_cfg.caps);
  FokkerPlanckSolution sol;
  sol.times = batch.times;
  sol.mode = mode;
  for (std::int64_t j = 0; j < batch.K; ++j) {
    Eigen::MatrixXd Y = batch.snapshot(j);
    try {
      FhtModel model = sketch_density(Y, tree, basis, sketches, sketch_cfg);
      model.meta["snapshot_time"] = batch.times[j];
      sol.models.push_back(normalize(model));
    } catch (const std::exception& e) {
      throw std::runtime_error("solve_fokker_planck: snapshot " + std::to_string(j) + ": " + e.what());
    }
  }
  return sol;
}

inline FokkerPlanckSolution solve_fokker_planck(const GinzburgLandauPotential& pot, const SdeConfig& sde,
                                                const DimensionTree& tree, const FourierBasis& basis,
                                                const SketchConfig& sketch_cfg,
                                                TimeInterpolation mode = TimeInterpolation::Linear) {
  return solve_fokker_planck(langevin_drift(pot), pot.dimension(), sde, tree, basis, sketch_cfg, mode);
}

}  // namespace fht
