#pragma once

// Ginzburg-Landau lattice potentials in 1/2/3 physical dimensions and the
// overdamped Langevin simulator (Euler-Maruyama) with snapshot recording.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <functional>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "fht/topology.hpp"

namespace fht {

enum class PotentialKind { GL1D, GL2D, GL3D };

inline PotentialKind potential_kind_from_string(const std::string& s) {
  if (s == "gl1d") return PotentialKind::GL1D;
  if (s == "gl2d") return PotentialKind::GL2D;
  if (s == "gl3d") return PotentialKind::GL3D;
  throw std::invalid_argument("unknown potential kind: " + s);
}

// V(x) = (lambda/2) sum_{v~w} ((x_v - x_w)/h)^2 + (1/4lambda) sum_v (1-x_v^2)^2
// over the Cartesian lattice with zero-Dirichlet ghost sites. Variables are
// addressed by the bit-interleaved linear index of topology.hpp.
class GinzburgLandauPotential {
 public:
  GinzburgLandauPotential(PotentialKind kind, const GridSpec& grid, double lambda)
      : kind_(kind), grid_(grid), lambda_(lambda) {
    int expected = kind == PotentialKind::GL1D ? 1 : (kind == PotentialKind::GL2D ? 2 : 3);
    if (grid.delta != expected) throw std::invalid_argument("potential kind / grid delta mismatch");
    if (lambda <= 0.0) throw std::invalid_argument("lambda must be positive");
    d_ = static_cast<int>(grid.site_count());
    boundary_edges_.assign(d_, 0);
    // Interior edges counted once (toward the +axis neighbor); ghost edges
    // counted per site.
    for (int k = 1; k <= d_; ++k) {
      std::vector<int> c = deinterleave_index(k, grid_);
      for (int axis = 0; axis < grid_.delta; ++axis) {
        if (c[axis] < grid_.m) {
          std::vector<int> cn = c;
          cn[axis] += 1;
          pairs_.emplace_back(k - 1, interleave_index(cn, grid_) - 1);
        } else {
          boundary_edges_[k - 1] += 1;  // ghost at coordinate m+1
        }
        if (c[axis] == 1) boundary_edges_[k - 1] += 1;  // ghost at coordinate 0
      }
    }
  }

  int dimension() const { return d_; }
  PotentialKind kind() const { return kind_; }
  const GridSpec& grid() const { return grid_; }
  double lambda() const { return lambda_; }

  double value(const Eigen::VectorXd& x) const {
    check_dim(x);
    double coupling = 0.0;
    for (const auto& [v, w] : pairs_) {
      double diff = x(v) - x(w);
      coupling += diff * diff;
    }
    double quartic = 0.0;
    for (int v = 0; v < d_; ++v) {
      coupling += boundary_edges_[v] * x(v) * x(v);
      double t = 1.0 - x(v) * x(v);
      quartic += t * t;
    }
    double h = grid_.h;
    return 0.5 * lambda_ / (h * h) * coupling + quartic / (4.0 * lambda_);
  }

  void gradient(const Eigen::VectorXd& x, Eigen::VectorXd& g) const {
    check_dim(x);
    g.setZero(d_);
    double c = lambda_ / (grid_.h * grid_.h);
    for (const auto& [v, w] : pairs_) {
      double diff = x(v) - x(w);
      g(v) += c * diff;
      g(w) -= c * diff;
    }
    for (int v = 0; v < d_; ++v) {
      g(v) += c * boundary_edges_[v] * x(v);
      g(v) -= (1.0 - x(v) * x(v)) * x(v) / lambda_;
    }
  }

  Eigen::VectorXd gradient(const Eigen::VectorXd& x) const {
    Eigen::VectorXd g;
    gradient(x, g);
    return g;
  }

 private:
  void check_dim(const Eigen::VectorXd& x) const {
    if (x.size() != d_) throw std::invalid_argument("potential: state dimension mismatch");
  }

  PotentialKind kind_;
  GridSpec grid_;
  double lambda_;
  int d_;
  std::vector<std::pair<int, int>> pairs_;
  std::vector<int> boundary_edges_;
};

// Drift hook: writes the drift b(x) (for Langevin dynamics, b = -grad V).
using DriftFn = std::function<void(const Eigen::VectorXd& x, Eigen::VectorXd& drift)>;

inline DriftFn langevin_drift(const GinzburgLandauPotential& pot) {
  return [&pot](const Eigen::VectorXd& x, Eigen::VectorXd& drift) {
    pot.gradient(x, drift);
    drift = -drift;
  };
}

struct SdeConfig {
  double beta = 1.0;  // may be +inf to disable noise
  double T = 1.0;
  double dt = 1e-3;
  std::int64_t N = 1;
  std::vector<double> snapshot_times = {1.0};
  std::uint64_t seed = 0;
  Eigen::VectorXd initial;  // empty means origin

  void validate() const {
    if (!(dt > 0.0)) throw std::invalid_argument("SdeConfig: dt must be positive");
    if (N < 1) throw std::invalid_argument("SdeConfig: N must be >= 1");
    if (!(beta > 0.0)) throw std::invalid_argument("SdeConfig: beta must be positive");
    if (snapshot_times.empty()) throw std::invalid_argument("SdeConfig: no snapshot times");
    for (std::size_t i = 0; i < snapshot_times.size(); ++i) {
      double t = snapshot_times[i];
      if (t < 0.0 || t > T + 1e-12) throw std::invalid_argument("SdeConfig: snapshot time outside [0, T]");
      if (i > 0 && t < snapshot_times[i - 1]) throw std::invalid_argument("SdeConfig: snapshot times not sorted");
    }
  }
};

// N x K x d particle snapshots, stored snapshot-major.
struct TrajectoryBatch {
  std::int64_t N = 0;
  std::int64_t K = 0;
  std::int64_t d = 0;
  std::vector<double> times;          // requested snapshot times
  std::vector<std::int64_t> steps;    // nearest integration step per snapshot
  std::vector<double> data;           // [K][N][d]
  nlohmann::json meta;                // config echo, seed, clamp counters

  double& at(std::int64_t snap, std::int64_t traj, std::int64_t var) {
    return data[(snap * N + traj) * d + var];
  }
  double at(std::int64_t snap, std::int64_t traj, std::int64_t var) const {
    return data[(snap * N + traj) * d + var];
  }

  // Snapshot as an N x d matrix (copy).
  Eigen::MatrixXd snapshot(std::int64_t snap) const {
    Eigen::MatrixXd Y(N, d);
    for (std::int64_t i = 0; i < N; ++i)
      for (std::int64_t j = 0; j < d; ++j) Y(i, j) = at(snap, i, j);
    return Y;
  }

  std::int64_t count_outside(double B) const {
    std::int64_t c = 0;
    for (double v : data)
      if (std::abs(v) > B) ++c;
    return c;
  }
};

namespace detail {
inline std::uint64_t splitmix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d4a2fa79c7b397ULL;
  return z ^ (z >> 31);
}
}  // namespace detail

// Euler-Maruyama: X_{k+1} = X_k + b(X_k) dt + sqrt(2 dt / beta) xi. Each
// trajectory runs on its own RNG stream derived from (seed, i), so results
// do not depend on scheduling order.
inline TrajectoryBatch simulate(const DriftFn& drift, int d, const SdeConfig& config) {
  config.validate();
  if (config.initial.size() != 0 && config.initial.size() != d)
    throw std::invalid_argument("simulate: initial point dimension mismatch");

  TrajectoryBatch batch;
  batch.N = config.N;
  batch.K = static_cast<std::int64_t>(config.snapshot_times.size());
  batch.d = d;
  batch.times = config.snapshot_times;

  std::int64_t nsteps = std::llround(config.T / config.dt);
  for (double t : config.snapshot_times) {
    std::int64_t s = std::llround(t / config.dt);
    if (s > nsteps) s = nsteps;
    batch.steps.push_back(s);
  }
  batch.data.assign(batch.K * batch.N * batch.d, 0.0);

  double noise_coef = std::isinf(config.beta) ? 0.0 : std::sqrt(2.0 * config.dt / config.beta);
  Eigen::VectorXd x0 = config.initial.size() ? config.initial : Eigen::VectorXd::Zero(d);

  std::int64_t bad_traj = -1;
#pragma omp parallel for schedule(dynamic, 16)
  for (std::int64_t i = 0; i < config.N; ++i) {
    std::mt19937_64 rng(detail::splitmix64(config.seed ^ detail::splitmix64(0x5bf0'3635ULL + i)));
    std::normal_distribution<double> normal(0.0, 1.0);
    Eigen::VectorXd x = x0;
    Eigen::VectorXd b(d);
    std::size_t next_snap = 0;
    for (std::int64_t step = 0; step <= nsteps; ++step) {
      while (next_snap < batch.steps.size() && batch.steps[next_snap] == step) {
        for (int j = 0; j < d; ++j) batch.at(next_snap, i, j) = x(j);
        ++next_snap;
      }
      if (step == nsteps) break;
      drift(x, b);
      for (int j = 0; j < d; ++j) x(j) += b(j) * config.dt + noise_coef * normal(rng);
      if (!x.allFinite()) {
#pragma omp critical
        bad_traj = i;
        break;
      }
    }
  }
  if (bad_traj >= 0)
    throw std::runtime_error("simulate: non-finite state in trajectory " + std::to_string(bad_traj) +
                             " (dt too large for this potential?)");

  batch.meta = {{"seed", config.seed},
                {"beta", config.beta},
                {"T", config.T},
                {"dt", config.dt},
                {"N", config.N},
                {"snapshot_times", config.snapshot_times},
                {"snapshot_steps", batch.steps},
                {"snapshot_alignment", "nearest-step"}};
  return batch;
}

inline TrajectoryBatch simulate(const GinzburgLandauPotential& pot, const SdeConfig& config) {
  return simulate(langevin_drift(pot), pot.dimension(), config);
}

// --- Trajectory file format -------------------------------------------------
// magic "FHTRAJ01" | u64 N | u64 K | u64 d | K*N*d float64 (snapshot-major)
// | JSON trailer (UTF-8) | u64 trailer byte length. Little-endian throughout.

inline constexpr char kTrajMagic[8] = {'F', 'H', 'T', 'R', 'A', 'J', '0', '1'};

inline void save_trajectory(const TrajectoryBatch& batch, const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw std::runtime_error("cannot open for writing: " + path);
  std::fwrite(kTrajMagic, 1, 8, f);
  std::uint64_t dims[3] = {static_cast<std::uint64_t>(batch.N), static_cast<std::uint64_t>(batch.K),
                           static_cast<std::uint64_t>(batch.d)};
  std::fwrite(dims, sizeof(std::uint64_t), 3, f);
  std::fwrite(batch.data.data(), sizeof(double), batch.data.size(), f);
  nlohmann::json trailer = batch.meta;
  trailer["times"] = batch.times;
  trailer["steps"] = batch.steps;
  std::string ts = trailer.dump();
  std::fwrite(ts.data(), 1, ts.size(), f);
  std::uint64_t tlen = ts.size();
  std::fwrite(&tlen, sizeof(std::uint64_t), 1, f);
  if (std::fclose(f) != 0) throw std::runtime_error("write failed: " + path);
}

inline TrajectoryBatch load_trajectory(const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "rb");
  if (!f) throw std::runtime_error("cannot open: " + path);
  char magic[8];
  if (std::fread(magic, 1, 8, f) != 8 || std::memcmp(magic, kTrajMagic, 8) != 0) {
    std::fclose(f);
    throw std::runtime_error("not a trajectory file: " + path);
  }
  std::uint64_t dims[3];
  if (std::fread(dims, sizeof(std::uint64_t), 3, f) != 3) {
    std::fclose(f);
    throw std::runtime_error("truncated trajectory file: " + path);
  }
  TrajectoryBatch batch;
  batch.N = dims[0];
  batch.K = dims[1];
  batch.d = dims[2];
  batch.data.resize(batch.N * batch.K * batch.d);
  if (std::fread(batch.data.data(), sizeof(double), batch.data.size(), f) != batch.data.size()) {
    std::fclose(f);
    throw std::runtime_error("truncated trajectory payload: " + path);
  }
  long payload_end = std::ftell(f);
  std::fseek(f, 0, SEEK_END);
  long end = std::ftell(f);
  std::uint64_t tlen = 0;
  std::fseek(f, end - 8, SEEK_SET);
  if (std::fread(&tlen, sizeof(std::uint64_t), 1, f) != 1 ||
      static_cast<long>(tlen) != end - 8 - payload_end) {
    std::fclose(f);
    throw std::runtime_error("corrupt trajectory trailer: " + path);
  }
  std::string ts(tlen, '\0');
  std::fseek(f, payload_end, SEEK_SET);
  if (std::fread(ts.data(), 1, tlen, f) != tlen) {
    std::fclose(f);
    throw std::runtime_error("truncated trajectory trailer: " + path);
  }
  std::fclose(f);
  batch.meta = nlohmann::json::parse(ts);
  batch.times = batch.meta.value("times", std::vector<double>{});
  batch.steps = batch.meta.value("steps", std::vector<std::int64_t>{});
  return batch;
}

}  // namespace fht
