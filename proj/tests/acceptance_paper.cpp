// Criterion 7: paper-scale GL1D run (m=256, lambda=0.01, beta=1/8, N=6000,
// dt=1/2000, q=15, r=6). Takes several minutes; excluded from the default
// ctest set (enable with -DFHT_PAPER_SCALE=ON or run this binary directly).

#include <chrono>
#include <cmath>
#include <iostream>
#include <sstream>
#include <vector>

#include "fht/applications.hpp"

using namespace fht;

int main() {
  auto t0 = std::chrono::steady_clock::now();
  GridSpec grid(1, 256);
  GinzburgLandauPotential pot(PotentialKind::GL1D, grid, 0.01);
  SdeConfig sde;
  sde.beta = 0.125;  // beta = 1/8
  sde.T = 1.0;
  sde.dt = 1.0 / 2000.0;
  sde.N = 6000;
  sde.snapshot_times = {1.0};
  sde.seed = 777;
  std::cout << "simulating 6000 trajectories of the d=256 GL1D chain..." << std::endl;
  TrajectoryBatch batch = simulate(pot, sde);
  Eigen::MatrixXd Y = batch.snapshot(0);

  double B = 2.0;
  std::int64_t wild = 0;
  for (Eigen::Index i = 0; i < Y.rows(); ++i)
    for (Eigen::Index j = 0; j < Y.cols(); ++j)
      if (std::abs(Y(i, j)) > 2.5) ++wild;
  double wild_frac = double(wild) / (double(Y.rows()) * Y.cols());
  std::cout << "fraction of coordinates outside [-2.5, 2.5]: " << wild_frac
            << ", max |x| = " << Y.cwiseAbs().maxCoeff() << std::endl;

  FourierBasis basis(B, 15);
  DimensionTree tree = build_balanced_tree(256, 6, 12);
  SketchSet set = build_default_sketches(tree, SketchCaps{});
  std::cout << "fitting the functional hierarchical tensor..." << std::endl;
  SketchConfig cfg;
  // With 6000 samples, singular directions below a few percent of sigma_1 are
  // sampling noise; cutting them keeps the dynamically chosen ranks small and
  // roughly halves the marginal error compared to the 1e-8 default.
  cfg.tol_svd = 3e-2;
  FhtModel model = normalize(sketch_density(Y, tree, basis, set, cfg));

  // faraway site pair for the 2-marginal (sites 64 and 192 of 256)
  int u = 64, v = 192;
  const int nb = 40, sub = 5;  // 5x5 quadrature points per bin for bin masses
  std::vector<double> fine(nb * sub);
  for (int i = 0; i < nb * sub; ++i) fine[i] = -B + 2.0 * B * (i + 0.5) / (nb * sub);
  Eigen::MatrixXd dens = marginal_grid(model, {u, v}, {fine, fine});
  Eigen::MatrixXd marg = Eigen::MatrixXd::Zero(nb, nb);  // mean density per bin
  for (int a = 0; a < nb * sub; ++a)
    for (int b = 0; b < nb * sub; ++b) marg(a / sub, b / sub) += dens(a, b) / (sub * sub);

  double bin_area = (2.0 * B / nb) * (2.0 * B / nb);
  Eigen::MatrixXd hist = Eigen::MatrixXd::Zero(nb, nb);
  for (Eigen::Index i = 0; i < Y.rows(); ++i) {
    auto bin = [&](double x) {
      int b = static_cast<int>((x + B) / (2.0 * B) * nb);
      return b < 0 ? 0 : (b >= nb ? nb - 1 : b);
    };
    hist(bin(Y(i, u - 1)), bin(Y(i, v - 1))) += 1.0;
  }
  hist /= double(Y.rows());

  double tv = 0.0, model_mass = 0.0;
  for (int a = 0; a < nb; ++a)
    for (int b = 0; b < nb; ++b) {
      double pm = std::max(0.0, marg(a, b)) * bin_area;
      model_mass += pm;
      tv += std::abs(pm - hist(a, b));
    }
  tv *= 0.5;

  // qualitative bimodality check along each axis of the 2-marginal
  Eigen::VectorXd prof = marg.rowwise().sum();
  int half = nb / 2;
  double left_peak = prof.head(half).maxCoeff(), right_peak = prof.tail(half).maxCoeff();
  double center = 0.5 * (prof(half - 1) + prof(half));
  bool bimodal = left_peak > 1.5 * center && right_peak > 1.5 * center;

  double mins = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() / 60.0;
  std::ostringstream ss;
  ss << "TV distance " << tv << " vs 40x40 histogram, model bin mass " << model_mass
     << ", bimodal=" << (bimodal ? "yes" : "no") << ", " << mins << " min";
  bool ok = tv < 0.15 && wild_frac < 1e-3 && bimodal;
  std::cout << (ok ? "[PASS]" : "[FAIL]")
            << " criterion 7: paper-scale GL1D marginal reproduction (" << ss.str() << ")"
            << std::endl;
  return ok ? 0 : 1;
}
