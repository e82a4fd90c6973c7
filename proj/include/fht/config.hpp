#pragma once

// JSON run configuration: one file per run, flags may override keys.
// Unknown keys are rejected so typos fail loudly.

#include <cstdint>
#include <fstream>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fht/basis.hpp"
#include "fht/dynamics.hpp"
#include "fht/sketching.hpp"
#include "fht/topology.hpp"

namespace fht {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct RunConfig {
  // potential
  PotentialKind kind = PotentialKind::GL1D;
  int m = 2;
  int delta = 1;
  double lambda = 1.0;
  // sde
  SdeConfig sde;
  // basis
  double B = 2.5;
  int q = 5;
  // sketch
  int rank = 4;
  int oversample = 8;
  SketchConfig sketch;
  // output
  std::string output_dir = ".";
  std::vector<std::string> formats = {"csv"};

  nlohmann::json echo;  // canonical config as parsed

  GridSpec grid() const { return GridSpec(delta, m); }
  GinzburgLandauPotential potential() const { return GinzburgLandauPotential(kind, grid(), lambda); }
  FourierBasis basis() const { return FourierBasis(B, q); }
  DimensionTree tree() const {
    return build_balanced_tree(static_cast<int>(grid().site_count()), rank, oversample);
  }
};

namespace detail {
inline void reject_unknown(const nlohmann::json& j, const std::set<std::string>& allowed,
                           const std::string& section) {
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!allowed.count(it.key())) throw ConfigError("unknown key '" + it.key() + "' in section " + section);
}
}  // namespace detail

inline RunConfig parse_run_config(const nlohmann::json& j) {
  try {
    detail::reject_unknown(j, {"potential", "sde", "basis", "sketch", "output"}, "(top level)");
    RunConfig cfg;
    cfg.echo = j;

    const auto& pj = j.at("potential");
    detail::reject_unknown(pj, {"kind", "m", "delta", "lambda"}, "potential");
    cfg.kind = potential_kind_from_string(pj.at("kind").get<std::string>());
    cfg.m = pj.at("m").get<int>();
    cfg.delta = pj.at("delta").get<int>();
    cfg.lambda = pj.at("lambda").get<double>();

    const auto& sj = j.at("sde");
    detail::reject_unknown(sj, {"beta", "T", "dt", "N", "seed", "snapshot_times", "initial"}, "sde");
    cfg.sde.beta = sj.at("beta").get<double>();
    cfg.sde.T = sj.at("T").get<double>();
    cfg.sde.dt = sj.at("dt").get<double>();
    cfg.sde.N = sj.at("N").get<std::int64_t>();
    cfg.sde.seed = sj.at("seed").get<std::uint64_t>();
    cfg.sde.snapshot_times = sj.at("snapshot_times").get<std::vector<double>>();
    if (sj.contains("initial")) {
      auto init = sj.at("initial").get<std::vector<double>>();
      cfg.sde.initial = Eigen::Map<Eigen::VectorXd>(init.data(), init.size());
    }
    cfg.sde.validate();

    const auto& bj = j.at("basis");
    detail::reject_unknown(bj, {"B", "q"}, "basis");
    cfg.B = bj.at("B").get<double>();
    cfg.q = bj.at("q").get<int>();

    const auto& kj = j.at("sketch");
    detail::reject_unknown(kj,
                           {"rank", "oversample", "tol_svd", "tol_pinv", "max_monomial_degree",
                            "coarse_grain_modes", "include_squares"},
                           "sketch");
    cfg.rank = kj.at("rank").get<int>();
    cfg.oversample = kj.value("oversample", 2 * cfg.rank);
    cfg.sketch.tol_svd = kj.value("tol_svd", 1e-8);
    cfg.sketch.tol_pinv = kj.value("tol_pinv", 1e-10);
    cfg.sketch.caps.max_monomial_degree = kj.value("max_monomial_degree", 3);
    cfg.sketch.caps.coarse_grain_modes = kj.value("coarse_grain_modes", std::vector<int>{1});
    cfg.sketch.caps.include_squares = kj.value("include_squares", true);

    if (j.contains("output")) {
      const auto& oj = j.at("output");
      detail::reject_unknown(oj, {"directory", "formats"}, "output");
      cfg.output_dir = oj.value("directory", std::string("."));
      cfg.formats = oj.value("formats", std::vector<std::string>{"csv"});
    }

    if (cfg.grid().site_count() != (std::int64_t(1) << int_log2(cfg.grid().site_count())))
      throw ConfigError("d = m^delta must be a power of two");
    return cfg;
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(std::string("config error: ") + e.what());
  }
}

inline RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw ConfigError(std::string("config parse error: ") + e.what());
  }
  return parse_run_config(j);
}

// FNV-1a over the canonical (sorted-key) dump; embedded in every output.
inline std::uint64_t config_hash(const nlohmann::json& j) {
  std::string s = j.dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline constexpr const char* kArtifactVersion = "fht-0.1.0";

}  // namespace fht
