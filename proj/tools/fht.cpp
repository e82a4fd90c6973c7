// Command-line front end: configuration-driven pipeline with persistent,
// versioned artifacts.
//
//   fht simulate   --config run.json [--out traj.fhtraj]
//   fht estimate   --config run.json --trajectory traj.fhtraj --snapshot 0 [--out model.fhtm]
//   fht marginal   --model model.fhtm --vars 19,59 [--points 101] [--out marginal.csv]
//   fht correlate  --model model.fhtm --anchor 2,2 [--out corr.csv]
//   fht sample     --model model.fhtm --count 1000 --seed 7 [--grid 512] [--out samples.fhtraj]
//   fht observable --model model.fhtm --kind mean|second|cross --u 3 [--v 5]
//   fht solve      --config run.json
//   fht verify     --file artifact
//
// Exit codes: 0 success, 2 config error, 3 numeric failure.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "fht/applications.hpp"
#include "fht/config.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace {

using nlohmann::json;

json load_patched_config_json(const std::string& path, const std::vector<std::string>& overrides) {
  std::ifstream in(path);
  if (!in) throw fht::ConfigError("cannot open config file: " + path);
  json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw fht::ConfigError(std::string("config parse error: ") + e.what());
  }
  for (const std::string& ov : overrides) {
    auto eq = ov.find('=');
    if (eq == std::string::npos) throw fht::ConfigError("override must be section.key=value: " + ov);
    std::string keypath = ov.substr(0, eq), value = ov.substr(eq + 1);
    auto dot = keypath.find('.');
    if (dot == std::string::npos) throw fht::ConfigError("override must be section.key=value: " + ov);
    json parsed;
    try {
      parsed = json::parse(value);
    } catch (...) {
      parsed = value;
    }
    j[keypath.substr(0, dot)][keypath.substr(dot + 1)] = parsed;
  }
  return j;
}

std::string default_out(const fht::RunConfig& cfg, const std::string& name) {
  std::filesystem::create_directories(cfg.output_dir);
  return (std::filesystem::path(cfg.output_dir) / name).string();
}

void stamp(json& meta, const json& cfg_echo) {
  meta["config"] = cfg_echo;
  meta["config_hash"] = fht::config_hash(cfg_echo);
  meta["version"] = fht::kArtifactVersion;
}

void print_snapshot_stats(const fht::TrajectoryBatch& batch, double B) {
  for (std::int64_t s = 0; s < batch.K; ++s) {
    double lo = 1e300, hi = -1e300, sum = 0;
    std::int64_t outside = 0;
    for (std::int64_t i = 0; i < batch.N; ++i)
      for (std::int64_t j = 0; j < batch.d; ++j) {
        double v = batch.at(s, i, j);
        lo = std::min(lo, v);
        hi = std::max(hi, v);
        sum += v;
        if (std::abs(v) > B) ++outside;
      }
    double total = double(batch.N) * batch.d;
    std::cout << "snapshot " << s << " t=" << batch.times[s] << " min=" << lo << " max=" << hi
              << " mean=" << sum / total << " outside[-B,B]=" << outside << " (" << 100.0 * outside / total
              << "%)\n";
  }
}

fht::TrajectoryBatch run_simulate(const fht::RunConfig& cfg, const std::string& out_path) {
  fht::GinzburgLandauPotential pot = cfg.potential();
  fht::TrajectoryBatch batch = fht::simulate(pot, cfg.sde);
  stamp(batch.meta, cfg.echo);
  std::vector<std::int64_t> clamp_counts;
  for (std::int64_t s = 0; s < batch.K; ++s) {
    std::int64_t c = 0;
    for (std::int64_t i = 0; i < batch.N; ++i)
      for (std::int64_t j = 0; j < batch.d; ++j)
        if (std::abs(batch.at(s, i, j)) > cfg.B) ++c;
    clamp_counts.push_back(c);
  }
  batch.meta["clamp_counts"] = clamp_counts;
  batch.meta["basis_B"] = cfg.B;
  fht::save_trajectory(batch, out_path);
  print_snapshot_stats(batch, cfg.B);
  std::cout << "wrote " << out_path << " (N=" << batch.N << " K=" << batch.K << " d=" << batch.d << ")\n";
  return batch;
}

fht::FhtModel run_estimate(const fht::RunConfig& cfg, const fht::TrajectoryBatch& batch, int snapshot,
                           const std::string& out_path) {
  if (snapshot < 0 || snapshot >= batch.K) throw fht::ConfigError("snapshot index out of range");
  if (batch.N < 1) throw fht::ConfigError("empty trajectory");
  Eigen::MatrixXd Y = batch.snapshot(snapshot);
  fht::DimensionTree tree = cfg.tree();
  fht::FourierBasis basis = cfg.basis();
  fht::SketchSet sketches = fht::build_default_sketches(tree, cfg.sketch.caps);
  fht::FhtModel model = fht::sketch_density(Y, tree, basis, sketches, cfg.sketch);
  double z = fht::integrate(model);
  model = fht::normalize(model);
  stamp(model.meta, cfg.echo);
  model.meta["snapshot_index"] = snapshot;
  model.meta["snapshot_time"] = batch.times[snapshot];
  model.meta["raw_integral"] = z;
  model.meta["grid"] = {{"m", cfg.m}, {"delta", cfg.delta}};
  fht::save_model(model, out_path);
  int rmax = 0;
  for (int id = 1; id < model.tree.node_count(); ++id) rmax = std::max(rmax, model.tree.nodes[id].rank);
  std::cout << "wrote " << out_path << " (raw integral " << z << ", max effective rank " << rmax << ")\n";
  return model;
}

std::ofstream open_csv(const std::string& path, const json& meta) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << "# version=" << fht::kArtifactVersion;
  if (meta.contains("config_hash")) out << " config_hash=" << meta["config_hash"].get<std::uint64_t>();
  out << "\n";
  out.precision(12);
  return out;
}

int cmd_marginal(const std::string& model_path, const std::string& vars_arg, int points,
                 std::string out_path) {
  fht::FhtModel model = fht::load_model(model_path);
  std::vector<int> vars;
  std::stringstream ss(vars_arg);
  std::string tok;
  while (std::getline(ss, tok, ',')) vars.push_back(std::stoi(tok));
  double B = model.basis.B;
  std::vector<double> grid(points);
  for (int i = 0; i < points; ++i) grid[i] = -B + 2.0 * B * i / (points - 1);
  std::vector<std::vector<double>> grids(vars.size(), grid);
  Eigen::MatrixXd M = fht::marginal_grid(model, vars, grids);
  if (out_path.empty()) out_path = "marginal.csv";
  std::ofstream out = open_csv(out_path, model.meta);
  if (vars.size() == 1) {
    out << "x" << vars[0] << ",density\n";
    for (int i = 0; i < points; ++i) out << grid[i] << "," << M(i, 0) << "\n";
  } else {
    out << "x" << vars[0] << ",x" << vars[1] << ",density\n";
    for (int i = 0; i < points; ++i)
      for (int j = 0; j < points; ++j) out << grid[i] << "," << grid[j] << "," << M(i, j) << "\n";
  }
  std::cout << "wrote " << out_path << "\n";
  return 0;
}

int cmd_correlate(const std::string& model_path, const std::string& anchor_arg, std::string out_path) {
  fht::FhtModel model = fht::load_model(model_path);
  if (!model.meta.contains("grid")) throw std::runtime_error("model carries no grid metadata");
  fht::GridSpec grid(model.meta["grid"]["delta"].get<int>(), model.meta["grid"]["m"].get<int>());
  std::vector<int> anchor;
  std::stringstream ss(anchor_arg);
  std::string tok;
  while (std::getline(ss, tok, ',')) anchor.push_back(std::stoi(tok));
  int anchor_var = fht::interleave_index(anchor, grid);
  fht::CorrelationMap map = fht::two_point_correlation(model, anchor_var);
  if (out_path.empty()) out_path = "correlation.csv";
  std::ofstream out = open_csv(out_path, model.meta);
  out << "linear_index";
  for (int a = 1; a <= grid.delta; ++a) out << ",coord" << a;
  out << ",corr\n";
  for (int v = 1; v <= model.d(); ++v) {
    out << v;
    for (int c : fht::deinterleave_index(v, grid)) out << "," << c;
    out << "," << map.corr[v - 1] << "\n";
  }
  std::cout << "wrote " << out_path << " (anchor linear index " << anchor_var << ")\n";
  return 0;
}

int cmd_sample(const std::string& model_path, std::int64_t count, std::uint64_t seed, int grid_pts,
               std::string out_path) {
  fht::FhtModel model = fht::load_model(model_path);
  fht::SampleResult res = fht::sample(model, count, seed, grid_pts);
  fht::TrajectoryBatch batch;
  batch.N = count;
  batch.K = 1;
  batch.d = model.d();
  batch.times = {0.0};
  batch.steps = {0};
  batch.data.assign(count * model.d(), 0.0);
  for (std::int64_t i = 0; i < count; ++i)
    for (int j = 0; j < model.d(); ++j) batch.at(0, i, j) = res.samples(i, j);
  batch.meta = {{"kind", "model_samples"}, {"seed", seed}, {"clipped_mass", res.clipped_mass}};
  if (model.meta.contains("config")) stamp(batch.meta, model.meta["config"]);
  if (out_path.empty()) out_path = "samples.fhtraj";
  fht::save_trajectory(batch, out_path);
  std::cout << "wrote " << out_path << " (clipped mass fraction " << res.clipped_mass << ")\n";
  return 0;
}

int cmd_observable(const std::string& model_path, const std::string& kind, int u, int v) {
  fht::FhtModel model = fht::load_model(model_path);
  fht::Observable obs = kind == "mean"     ? fht::Observable::mean(u)
                        : kind == "second" ? fht::Observable::second(u)
                        : kind == "cross"  ? fht::Observable::cross(u, v)
                                           : throw fht::ConfigError("observable kind must be mean|second|cross");
  std::cout.precision(12);
  std::cout << fht::estimate_observable(model, obs) << "\n";
  return 0;
}

int cmd_verify(const std::string& path) {
  json meta;
  if (path.size() > 7 && path.substr(path.size() - 7) == ".fhtraj") {
    meta = fht::load_trajectory(path).meta;
  } else {
    meta = fht::load_model(path).meta;
  }
  if (!meta.contains("config") || !meta.contains("config_hash"))
    throw std::runtime_error("artifact carries no config stamp: " + path);
  std::uint64_t stored = meta["config_hash"].get<std::uint64_t>();
  std::uint64_t recomputed = fht::config_hash(meta["config"]);
  if (stored != recomputed) {
    std::cerr << "hash mismatch: stored " << stored << " recomputed " << recomputed << "\n";
    return 3;
  }
  std::cout << "ok: " << path << " (version " << meta.value("version", std::string("?")) << ", hash "
            << stored << ")\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
#ifdef _OPENMP
  if (const char* t = std::getenv("FHT_THREADS")) omp_set_num_threads(std::atoi(t));
#endif
  // Keep Eigen's internal GEMM single-threaded: its parallel reductions change
  // summation order with the thread count, and artifacts must be bit-identical
  // regardless of FHT_THREADS. Simulation parallelism (per-trajectory RNG
  // streams, disjoint writes) is thread-count-invariant and stays enabled.
  Eigen::setNbThreads(1);
  CLI::App app{"Fokker-Planck solver via Langevin simulation and hierarchical tensor sketching"};
  app.require_subcommand(1);

  std::string config_path, traj_path, model_path, out_path, vars_arg, anchor_arg, kind_arg, file_arg;
  std::vector<std::string> overrides;
  int snapshot = 0, points = 101, grid_pts = 512, u = 1, v = 2;
  std::int64_t count = 1000;
  std::uint64_t seed = 0;

  auto add_config = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "run configuration JSON")->required();
    sub->add_option("--set", overrides, "override config keys, section.key=value");
  };

  CLI::App* sim = app.add_subcommand("simulate", "run SDE simulation, write trajectory file");
  add_config(sim);
  sim->add_option("--out", out_path);

  CLI::App* est = app.add_subcommand("estimate", "fit a density model to one snapshot");
  add_config(est);
  est->add_option("--trajectory", traj_path)->required();
  est->add_option("--snapshot", snapshot);
  est->add_option("--out", out_path);

  CLI::App* mar = app.add_subcommand("marginal", "evaluate a 1D/2D marginal on a grid");
  mar->add_option("--model", model_path)->required();
  mar->add_option("--vars", vars_arg, "1 or 2 comma-separated variable indices")->required();
  mar->add_option("--points", points);
  mar->add_option("--out", out_path);

  CLI::App* cor = app.add_subcommand("correlate", "two-point correlation map against an anchor site");
  cor->add_option("--model", model_path)->required();
  cor->add_option("--anchor", anchor_arg, "comma-separated grid coordinates")->required();
  cor->add_option("--out", out_path);

  CLI::App* smp = app.add_subcommand("sample", "draw samples from a fitted model");
  smp->add_option("--model", model_path)->required();
  smp->add_option("--count", count);
  smp->add_option("--seed", seed);
  smp->add_option("--grid", grid_pts);
  smp->add_option("--out", out_path);

  CLI::App* obs = app.add_subcommand("observable", "estimate a moment observable");
  obs->add_option("--model", model_path)->required();
  obs->add_option("--kind", kind_arg, "mean|second|cross")->required();
  obs->add_option("--u", u);
  obs->add_option("--v", v);

  CLI::App* slv = app.add_subcommand("solve", "end-to-end: simulate then fit every snapshot");
  add_config(slv);

  CLI::App* ver = app.add_subcommand("verify", "recheck the config hash embedded in an artifact");
  ver->add_option("--file", file_arg)->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (sim->parsed()) {
      fht::RunConfig cfg = fht::parse_run_config(load_patched_config_json(config_path, overrides));
      run_simulate(cfg, out_path.empty() ? default_out(cfg, "trajectory.fhtraj") : out_path);
      return 0;
    }
    if (est->parsed()) {
      fht::RunConfig cfg = fht::parse_run_config(load_patched_config_json(config_path, overrides));
      fht::TrajectoryBatch batch = fht::load_trajectory(traj_path);
      std::string out = out_path.empty()
                            ? default_out(cfg, "model_snap" + std::to_string(snapshot) + ".fhtm")
                            : out_path;
      run_estimate(cfg, batch, snapshot, out);
      return 0;
    }
    if (mar->parsed()) return cmd_marginal(model_path, vars_arg, points, out_path);
    if (cor->parsed()) return cmd_correlate(model_path, anchor_arg, out_path);
    if (smp->parsed()) return cmd_sample(model_path, count, seed, grid_pts, out_path);
    if (obs->parsed()) return cmd_observable(model_path, kind_arg, u, v);
    if (slv->parsed()) {
      fht::RunConfig cfg = fht::parse_run_config(load_patched_config_json(config_path, overrides));
      fht::TrajectoryBatch batch = run_simulate(cfg, default_out(cfg, "trajectory.fhtraj"));
      for (std::int64_t s = 0; s < batch.K; ++s)
        run_estimate(cfg, batch, static_cast<int>(s),
                     default_out(cfg, "model_snap" + std::to_string(s) + ".fhtm"));
      return 0;
    }
    if (ver->parsed()) return cmd_verify(file_arg);
  } catch (const fht::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
