// Acceptance gate: one line per criterion, nonzero exit on any failure.
// Criterion 7 (paper-scale) lives in the separate fht_acceptance_paper
// binary because it runs for minutes and is excluded from CI.

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>

#include "fht/applications.hpp"
#include "fht/config.hpp"
#include "test_helpers.hpp"

using namespace fht;
namespace fs = std::filesystem;

namespace {

int failures = 0;

void report(int criterion, const std::string& what, bool ok, const std::string& detail = "") {
  std::cout << (ok ? "[PASS]" : "[FAIL]") << " criterion " << criterion << ": " << what;
  if (!detail.empty()) std::cout << " (" << detail << ")";
  std::cout << std::endl;
  if (!ok) ++failures;
}

template <typename F>
void guarded(int criterion, const std::string& what, F&& f) {
  auto t0 = std::chrono::steady_clock::now();
  try {
    f();
  } catch (const std::exception& e) {
    report(criterion, what, false, std::string("exception: ") + e.what());
    return;
  }
  auto dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::ostringstream ss;
  ss.precision(3);
  ss << dt << "s";
  std::cout << "       criterion " << criterion << " took " << ss.str() << std::endl;
}

// --- 1: dense-oracle equivalence --------------------------------------------

void criterion1() {
  FourierBasis basis(2.5, 1);  // n = 3
  std::mt19937_64 rng(101);
  std::uniform_real_distribution<double> unif(-2.5, 2.5);
  double worst = 0.0;
  for (int d : {2, 4, 8}) {
    for (int rank : {2, 3}) {
      FhtModel A = fht_test::random_model(d, basis, rank, rng);
      FhtModel Bm = fht_test::random_model(d, basis, 2, rng);
      Eigen::VectorXd CA = contract_full(A);
      Eigen::VectorXd CB = contract_full(Bm);
      double scale = CA.cwiseAbs().maxCoeff();
      for (int t = 0; t < 20; ++t) {
        Eigen::VectorXd x(d);
        for (int j = 0; j < d; ++j) x(j) = unif(rng);
        worst = std::max(worst,
                         std::abs(evaluate(A, x) - fht_test::dense_evaluate(CA, basis, d, x)) / scale);
      }
      worst = std::max(worst, std::abs(inner_product(A, Bm) - CA.dot(CB)) /
                                  std::max(1.0, std::abs(CA.dot(CB))));
      double di = fht_test::dense_integrate(CA, basis, d);
      worst = std::max(worst, std::abs(integrate(A) - di) / std::max(1.0, std::abs(di)));
      std::vector<double> grid;
      for (int i = 0; i < 15; ++i) grid.push_back(-2.5 + 5.0 * i / 14);
      Eigen::MatrixXd m1 = marginal_grid(A, {2}, {grid});
      Eigen::MatrixXd o1 = fht_test::dense_marginal(CA, basis, d, {2}, {grid});
      worst = std::max(worst, (m1 - o1).cwiseAbs().maxCoeff() /
                                  std::max(1.0, o1.cwiseAbs().maxCoeff()));
      if (d >= 4) {
        Eigen::MatrixXd m2 = marginal_grid(A, {1, d}, {grid, grid});
        Eigen::MatrixXd o2 = fht_test::dense_marginal(CA, basis, d, {1, d}, {grid, grid});
        worst = std::max(worst, (m2 - o2).cwiseAbs().maxCoeff() /
                                    std::max(1.0, o2.cwiseAbs().maxCoeff()));
      }
    }
  }
  std::ostringstream ss;
  ss << "max rel err " << worst;
  report(1, "dense-oracle equivalence (evaluate/inner_product/integrate/marginal)", worst < 1e-10,
         ss.str());
}

// --- 2: moment-oracle exact recovery ----------------------------------------

void criterion2() {
  FourierBasis basis(2.5, 1);
  std::mt19937_64 rng(211);
  FhtModel truth = fht_test::random_model(8, basis, 2, rng);
  DimensionTree tree = build_balanced_tree(8, 2, 4);
  SketchSet set = build_default_sketches(tree, SketchCaps{});
  fht_test::ExactMoments exact(truth, set);
  FhtModel fitted = sketch_from_moments(exact, tree, basis, SketchConfig{});
  std::uniform_real_distribution<double> unif(-2.5, 2.5);
  double scale = 0.0, worst = 0.0;
  std::vector<Eigen::VectorXd> pts;
  for (int t = 0; t < 100; ++t) {
    Eigen::VectorXd x(8);
    for (int j = 0; j < 8; ++j) x(j) = unif(rng);
    pts.push_back(x);
    scale = std::max(scale, std::abs(evaluate(truth, x)));
  }
  for (const auto& x : pts) worst = std::max(worst, std::abs(evaluate(fitted, x) - evaluate(truth, x)));
  std::ostringstream ss;
  ss << "max rel err " << worst / scale << " at 100 points";
  report(2, "moment-oracle exact recovery (d=8, n=3, r=2, r~=4)", worst < 1e-8 * scale, ss.str());
}

// --- 3: product-density estimation ------------------------------------------

double mixture_pdf(double x, double mu, double sigma) {
  auto phi = [&](double m) {
    return std::exp(-(x - m) * (x - m) / (2.0 * sigma * sigma)) /
           (sigma * std::sqrt(2.0 * M_PI));
  };
  return 0.5 * (phi(mu) + phi(-mu));
}

Eigen::MatrixXd mixture_samples(std::int64_t N, int d, double mu, double sigma, double B,
                                std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nrm;
  std::bernoulli_distribution coin(0.5);
  Eigen::MatrixXd Y(N, d);
  for (std::int64_t i = 0; i < N; ++i)
    for (int j = 0; j < d; ++j) {
      double x;
      do {
        x = (coin(rng) ? mu : -mu) + sigma * nrm(rng);
      } while (std::abs(x) > B);
      Y(i, j) = x;
    }
  return Y;
}

double mixture_fit_error(std::int64_t N, std::uint64_t seed, const FourierBasis& basis,
                         const DimensionTree& tree, const SketchSet& set, double mu, double sigma) {
  Eigen::MatrixXd Y = mixture_samples(N, tree.d, mu, sigma, basis.B, seed);
  FhtModel model = normalize(sketch_density(Y, tree, basis, set, SketchConfig{}));
  double Z = fht_test::simpson([&](double x) { return mixture_pdf(x, mu, sigma); }, -basis.B,
                               basis.B, 4097);
  std::vector<double> grid;
  for (int i = 0; i < 201; ++i) grid.push_back(-basis.B + 2.0 * basis.B * i / 200);
  double sup = 0.0;
  for (int v = 1; v <= tree.d; ++v) {
    Eigen::MatrixXd marg = marginal_grid(model, {v}, {grid});
    for (int i = 0; i < 201; ++i)
      sup = std::max(sup, std::abs(marg(i, 0) - mixture_pdf(grid[i], mu, sigma) / Z));
  }
  return sup;
}

void criterion3() {
  FourierBasis basis(2.5, 8);
  DimensionTree tree = build_balanced_tree(8, 3, 6);
  SketchSet set = build_default_sketches(tree, SketchCaps{});
  double mu = 1.0, sigma = 0.4;
  std::vector<double> med;
  for (std::int64_t N : {std::int64_t(1000), std::int64_t(10000), std::int64_t(100000)}) {
    std::vector<double> errs;
    for (std::uint64_t seed : {11u, 22u, 33u})
      errs.push_back(mixture_fit_error(N, seed, basis, tree, set, mu, sigma));
    std::sort(errs.begin(), errs.end());
    med.push_back(errs[1]);
  }
  std::ostringstream ss;
  ss << "median sup-norm errors " << med[0] << " / " << med[1] << " / " << med[2]
     << " for N=1e3/1e4/1e5";
  report(3, "product mixture-of-Gaussians estimation (d=8)",
         med[2] < 0.02 && med[0] > med[1] && med[1] > med[2], ss.str());
}

// --- 4: gradient correctness ------------------------------------------------

void criterion4() {
  std::mt19937_64 rng(404);
  std::uniform_real_distribution<double> unif(-1.5, 1.5);
  struct Case {
    PotentialKind kind;
    int delta, m;
    double lambda;
  };
  double worst = 0.0;
  for (const Case& c : {Case{PotentialKind::GL1D, 1, 16, 0.1}, Case{PotentialKind::GL2D, 2, 4, 0.3},
                        Case{PotentialKind::GL3D, 3, 2, 0.7}}) {
    GridSpec grid(c.delta, c.m);
    GinzburgLandauPotential pot(c.kind, grid, c.lambda);
    int d = pot.dimension();
    for (int trial = 0; trial < 5; ++trial) {
      Eigen::VectorXd x(d);
      for (int j = 0; j < d; ++j) x(j) = unif(rng);
      Eigen::VectorXd g = pot.gradient(x);
      for (int j = 0; j < d; ++j) {
        double h = 1e-5;
        Eigen::VectorXd xp = x, xm = x;
        xp(j) += h;
        xm(j) -= h;
        double fd = (pot.value(xp) - pot.value(xm)) / (2.0 * h);
        worst = std::max(worst, std::abs(g(j) - fd) / std::max(1.0, std::abs(fd)));
      }
    }
  }
  std::ostringstream ss;
  ss << "max rel err " << worst;
  report(4, "analytic GL gradients vs central finite differences", worst < 1e-6, ss.str());
}

// --- 5: OU end-to-end -------------------------------------------------------

void criterion5() {
  DriftFn drift = [](const Eigen::VectorXd& x, Eigen::VectorXd& b) { b = -x; };
  SdeConfig sde;
  sde.beta = 1.0;
  sde.T = 1.0;
  sde.dt = 1.0 / 400.0;
  sde.N = 20000;
  sde.snapshot_times = {0.25, 0.5, 1.0};
  sde.seed = 505;
  DimensionTree tree = build_balanced_tree(4, 4, 8);
  FourierBasis basis(3.5, 8);
  FokkerPlanckSolution sol = solve_fokker_planck(drift, 4, sde, tree, basis, SketchConfig{});
  double worst = 0.0;
  for (std::size_t s = 0; s < sol.times.size(); ++s) {
    double var = 1.0 - std::exp(-2.0 * sol.times[s]);
    const FhtModel& m = sol.models[s];
    for (int u = 1; u <= 4; ++u) {
      double mu = estimate_observable(m, Observable::mean(u));
      double vu = estimate_observable(m, Observable::second(u)) - mu * mu;
      worst = std::max(worst, std::abs(vu - var) / var);
      for (int v = u + 1; v <= 4; ++v) {
        double mv = estimate_observable(m, Observable::mean(v));
        double cov = estimate_observable(m, Observable::cross(u, v)) - mu * mv;
        worst = std::max(worst, std::abs(cov) / var);  // analytic off-diagonal is 0
      }
    }
  }
  std::ostringstream ss;
  ss << "max covariance entry error " << 100.0 * worst << "%";
  report(5, "OU d=4 fitted covariance at t in {0.25, 0.5, 1.0}", worst < 0.05, ss.str());
}

// --- 6: desk-scale GL2D correlation -----------------------------------------

void criterion6() {
  GridSpec grid(2, 4);
  GinzburgLandauPotential pot(PotentialKind::GL2D, grid, 0.03);
  SdeConfig sde;
  sde.beta = 0.2;  // beta = 1/5
  sde.T = 1.0;
  sde.dt = 0.002;
  sde.N = 6000;
  sde.snapshot_times = {1.0};
  sde.seed = 606;
  TrajectoryBatch batch = simulate(pot, sde);
  Eigen::MatrixXd Y = batch.snapshot(0);

  FourierBasis basis(3.0, 8);
  DimensionTree tree = build_balanced_tree(16, 6, 12);
  SketchSet set = build_default_sketches(tree, SketchCaps{});
  FhtModel model = normalize(sketch_density(Y, tree, basis, set, SketchConfig{}));
  int anchor = interleave_index({2, 2}, grid);
  CorrelationMap map = two_point_correlation(model, anchor);

  // independent Monte-Carlo ground truth from fresh SDE samples
  SdeConfig mc = sde;
  mc.N = 60000;
  mc.seed = 707;
  Eigen::MatrixXd Z = simulate(pot, mc).snapshot(0);
  Eigen::VectorXd mean = Z.colwise().mean();
  Eigen::MatrixXd C = Z.rowwise() - mean.transpose();
  Eigen::VectorXd sd = (C.cwiseProduct(C).colwise().mean()).cwiseSqrt();
  double worst = 0.0;
  for (int v = 1; v <= 16; ++v) {
    double mc_corr = v == anchor ? 1.0
                                 : (C.col(anchor - 1).cwiseProduct(C.col(v - 1)).mean()) /
                                       (sd(anchor - 1) * sd(v - 1));
    worst = std::max(worst, std::abs(map.corr[v - 1] - mc_corr));
  }
  std::ostringstream ss;
  ss << "max abs error " << worst << " vs 60000-sample MC";
  report(6, "GL2D m=4 two-point correlation map (lambda=0.03, beta=1/5, N=6000)", worst < 0.07,
         ss.str());
}

// --- 8: normalization and sampling invariants --------------------------------

void criterion8() {
  FourierBasis basis(2.5, 8);
  DimensionTree tree = build_balanced_tree(8, 3, 6);
  SketchSet set = build_default_sketches(tree, SketchCaps{});
  Eigen::MatrixXd Y = mixture_samples(100000, 8, 1.0, 0.4, basis.B, 808);
  FhtModel model = normalize(sketch_density(Y, tree, basis, set, SketchConfig{}));
  double z_err = std::abs(integrate(model) - 1.0);

  std::int64_t N = 100000;
  SampleResult res = sample(model, N, 909, 384);
  double worst_se = 0.0;
  for (int u = 1; u <= 8; ++u) {
    double mu = estimate_observable(model, Observable::mean(u));
    double m2 = estimate_observable(model, Observable::second(u));
    double var = m2 - mu * mu;
    double sum = 0.0, sum2 = 0.0;
    for (std::int64_t i = 0; i < N; ++i) {
      double v = res.samples(i, u - 1);
      sum += v;
      sum2 += v * v;
    }
    worst_se = std::max(worst_se, std::abs(sum / N - mu) / std::sqrt(var / N));
    double se2 = std::sqrt(2.0 * var * var / N) + 2.0 * std::abs(mu) * std::sqrt(var / N);
    worst_se = std::max(worst_se, std::abs(sum2 / N - m2) / se2);
  }
  std::ostringstream ss;
  ss << "|integral-1| = " << z_err << ", worst moment deviation " << worst_se << " SE, clipped mass "
     << res.clipped_mass;
  report(8, "normalization exact to 1e-10; 1e5 samples reproduce moments within 4 SE",
         z_err < 1e-10 && worst_se < 4.0, ss.str());
}

// --- 9: determinism across runs and thread counts ----------------------------

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("missing file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void criterion9() {
  const char* cli = std::getenv("FHT_CLI");
  if (!cli) {
    report(9, "determinism across runs and thread counts", false, "FHT_CLI not set");
    return;
  }
  fs::remove_all("acc_tmp");
  fs::create_directories("acc_tmp");
  {
    std::ofstream out("acc_tmp/run.json");
    out << R"({"potential": {"kind": "gl1d", "m": 8, "delta": 1, "lambda": 0.2},
               "sde": {"beta": 1.0, "T": 0.2, "dt": 0.005, "N": 400, "seed": 99,
                       "snapshot_times": [0.2]},
               "basis": {"B": 2.5, "q": 6}, "sketch": {"rank": 4, "oversample": 8},
               "output": {"directory": "acc_tmp"}})";
  }
  auto pipeline = [&](const std::string& env_prefix, const std::string& tag) {
    std::string sim = env_prefix + std::string(cli) + " simulate --config acc_tmp/run.json --out acc_tmp/t" +
                      tag + ".fhtraj >> acc_tmp/log 2>&1";
    std::string est = env_prefix + std::string(cli) + " estimate --config acc_tmp/run.json --trajectory acc_tmp/t" +
                      tag + ".fhtraj --snapshot 0 --out acc_tmp/m" + tag + ".fhtm >> acc_tmp/log 2>&1";
    if (std::system(sim.c_str()) != 0 || std::system(est.c_str()) != 0)
      throw std::runtime_error("pipeline run failed (tag " + tag + ")");
  };
  pipeline("", "a");
  pipeline("", "b");
  pipeline("FHT_THREADS=1 ", "c");
  pipeline("FHT_THREADS=4 ", "d");
  bool rerun_ok = slurp("acc_tmp/ta.fhtraj") == slurp("acc_tmp/tb.fhtraj") &&
                  slurp("acc_tmp/ma.fhtm") == slurp("acc_tmp/mb.fhtm");
  bool thread_ok = slurp("acc_tmp/tc.fhtraj") == slurp("acc_tmp/td.fhtraj") &&
                   slurp("acc_tmp/mc.fhtm") == slurp("acc_tmp/md.fhtm") &&
                   slurp("acc_tmp/ta.fhtraj") == slurp("acc_tmp/tc.fhtraj");
  report(9, "bit-identical artifacts across reruns and thread counts", rerun_ok && thread_ok,
         rerun_ok ? (thread_ok ? "all byte-identical" : "thread-count mismatch") : "rerun mismatch");
}

}  // namespace

int main() {
  guarded(1, "dense-oracle equivalence", criterion1);
  guarded(2, "moment-oracle recovery", criterion2);
  guarded(3, "product-density estimation", criterion3);
  guarded(4, "gradient correctness", criterion4);
  guarded(5, "OU end-to-end", criterion5);
  guarded(6, "GL2D correlation", criterion6);
  std::cout << "[SKIP] criterion 7: paper-scale GL1D run (build target fht_acceptance_paper; "
               "see README)"
            << std::endl;
  guarded(8, "normalization and sampling", criterion8);
  guarded(9, "determinism", criterion9);
  std::cout << (failures == 0 ? "acceptance: all criteria passed" : "acceptance: FAILURES") << std::endl;
  return failures == 0 ? 0 : 1;
}
