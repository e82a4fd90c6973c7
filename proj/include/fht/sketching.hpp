#pragma once

// Hierarchical sketching density estimator. Builds per-node sketch function
// sets, estimates moment matrices/tensors from samples, fixes gauges via
// SVD of the edge matrices, and solves the per-node linear systems for all
// tensor cores.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SVD>

#include "fht/basis.hpp"
#include "fht/model.hpp"
#include "fht/topology.hpp"

namespace fht {

// One sketch function on a variable block. Kinds:
//   constant        s(x) = 1
//   monomial        s(x) = psi_{basis_index}(x_var)
//   coarse_grain    s(x) = [ (1/|h|) sum_{j in h} psi_{mode index}(x_j) ]^power
// Clusters are stored as explicit 1-based variable lists.
struct SketchFunction {
  enum class Kind { Constant, Monomial, CoarseGrain };
  Kind kind = Kind::Constant;
  std::vector<int> support;  // 1-based variables the function may read
  int var = 0;               // monomial variable
  int basis_index = 0;       // monomial basis index (unsigned ordering)
  std::vector<int> cluster;  // coarse-grain cluster h
  int mode = 1;              // coarse-grain Fourier mode (sine of this degree)
  int power = 1;             // 1 or 2

  double eval(const Eigen::VectorXd& x_full, const FourierBasis& basis) const {
    switch (kind) {
      case Kind::Constant:
        return 1.0;
      case Kind::Monomial:
        return basis.eval_one(basis_index, clamp(x_full(var - 1), basis.B));
      case Kind::CoarseGrain: {
        double s = 0.0;
        int idx = FourierBasis::sine_index(mode);
        for (int j : cluster) s += basis.eval_one(idx, clamp(x_full(j - 1), basis.B));
        s /= static_cast<double>(cluster.size());
        return power == 2 ? s * s : s;
      }
    }
    return 0.0;
  }

  std::string describe() const {
    switch (kind) {
      case Kind::Constant:
        return "const";
      case Kind::Monomial:
        return "psi[" + std::to_string(basis_index) + "](x" + std::to_string(var) + ")";
      case Kind::CoarseGrain:
        return "g(h=" + std::to_string(cluster.size()) + ",i=" + std::to_string(mode) + ")^" +
               std::to_string(power);
    }
    return "?";
  }

  static double clamp(double x, double B) { return x < -B ? -B : (x > B ? B : x); }
};

struct SketchCaps {
  int max_monomial_degree = 3;
  std::vector<int> coarse_grain_modes = {1};
  bool include_squares = true;
};

// Per-node sketch lists: `own[id]` lives on the node's index set I,
// `comp[id]` on [d] - I. Root lists are empty.
struct SketchSet {
  std::vector<std::vector<SketchFunction>> own;
  std::vector<std::vector<SketchFunction>> comp;
  // shortfalls[id] > 0 when fewer than r~ sketches were constructible.
  std::vector<int> own_shortfall;
  std::vector<int> comp_shortfall;
};

namespace detail {

// Deterministic construction for one index set: constant, then low-degree
// single-variable monomials, then coarse-grained modes over the given
// cluster split, truncated to `target`.
inline std::vector<SketchFunction> build_sketch_list(const std::vector<int>& support,
                                                     const std::vector<int>& cluster,
                                                     const SketchCaps& caps, int target, int& shortfall) {
  std::vector<SketchFunction> list;
  SketchFunction c;
  c.kind = SketchFunction::Kind::Constant;
  c.support = support;
  list.push_back(c);
  for (int deg = 1; deg <= caps.max_monomial_degree; ++deg) {
    for (int j : support) {
      for (int idx : {FourierBasis::sine_index(deg), FourierBasis::cosine_index(deg)}) {
        SketchFunction f;
        f.kind = SketchFunction::Kind::Monomial;
        f.support = support;
        f.var = j;
        f.basis_index = idx;
        list.push_back(f);
      }
    }
  }
  if (!cluster.empty() && cluster.size() < support.size()) {
    std::vector<int> rest;
    for (int j : support)
      if (std::find(cluster.begin(), cluster.end(), j) == cluster.end()) rest.push_back(j);
    for (int mode : caps.coarse_grain_modes) {
      for (const std::vector<int>* h : {&cluster, static_cast<const std::vector<int>*>(&rest)}) {
        SketchFunction g;
        g.kind = SketchFunction::Kind::CoarseGrain;
        g.support = support;
        g.cluster = *h;
        g.mode = mode;
        g.power = 1;
        list.push_back(g);
        if (caps.include_squares) {
          g.power = 2;
          list.push_back(g);
        }
      }
    }
  }
  shortfall = target > static_cast<int>(list.size()) ? target - static_cast<int>(list.size()) : 0;
  if (static_cast<int>(list.size()) > target) list.resize(target);
  return list;
}

}  // namespace detail

// Builds sketch lists for every non-root node. The own-list cluster is the
// node's first child block (leaves have none); the complement-list cluster
// is the node's sibling block.
inline SketchSet build_default_sketches(const DimensionTree& tree, const SketchCaps& caps) {
  if (caps.max_monomial_degree < 0) throw std::invalid_argument("max_monomial_degree must be >= 0");
  SketchSet set;
  int nn = tree.node_count();
  set.own.resize(nn);
  set.comp.resize(nn);
  set.own_shortfall.assign(nn, 0);
  set.comp_shortfall.assign(nn, 0);
  for (int id = 1; id < nn; ++id) {
    const auto& node = tree.nodes[id];
    int target = node.oversample;
    std::vector<int> cluster;
    if (!tree.is_leaf(id)) cluster = tree.nodes[DimensionTree::left_child(id)].index_set;
    set.own[id] = detail::build_sketch_list(node.index_set, cluster, caps, target, set.own_shortfall[id]);

    std::vector<int> complement;
    complement.reserve(tree.d - node.index_set.size());
    for (int v = 1; v <= tree.d; ++v)
      if (v < node.index_set.front() || v > node.index_set.back()) complement.push_back(v);
    int sib = (id % 2 == 1) ? id + 1 : id - 1;  // sibling in heap order
    set.comp[id] =
        detail::build_sketch_list(complement, tree.nodes[sib].index_set, caps, target, set.comp_shortfall[id]);
  }
  return set;
}

// Evaluates a sketch list over all samples: N x r~ matrix. Coordinates
// outside [-B, B] are clamped inside SketchFunction::eval.
inline Eigen::MatrixXd eval_sketches(const Eigen::MatrixXd& samples,
                                     const std::vector<SketchFunction>& list, const FourierBasis& basis) {
  Eigen::MatrixXd S(samples.rows(), list.size());
  for (Eigen::Index i = 0; i < samples.rows(); ++i) {
    Eigen::VectorXd row = samples.row(i);
    for (std::size_t m = 0; m < list.size(); ++m) S(i, m) = list[m].eval(row, basis);
  }
  return S;
}

// Z(mu, psi) = (1/N) sum_i s_a(y_a, mu) s_comp(y_comp, psi).
inline Eigen::MatrixXd estimate_Z(const Eigen::MatrixXd& samples, const std::vector<SketchFunction>& s_a,
                                  const std::vector<SketchFunction>& s_comp, const FourierBasis& basis) {
  if (samples.rows() < 1) throw std::invalid_argument("estimate_Z: empty sample set");
  Eigen::MatrixXd Sa = eval_sketches(samples, s_a, basis);
  Eigen::MatrixXd Sc = eval_sketches(samples, s_comp, basis);
  return (Sa.transpose() * Sc) / static_cast<double>(samples.rows());
}

struct EdgeFactors {
  Eigen::MatrixXd left;   // r~_own x r_eff, orthonormal columns
  Eigen::MatrixXd right;  // r_eff x r~_comp, carries the singular values
  int r_eff = 0;
};

// SVD of the edge matrix Z with rank cut min(r, sigma_i >= tol * sigma_1).
// Left factor orthonormal; singular values absorbed into the right factor.
inline EdgeFactors factor_edge(const Eigen::MatrixXd& Z, int r, double tol) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(Z, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Eigen::VectorXd& sv = svd.singularValues();
  if (sv.size() == 0 || sv(0) <= 0.0) throw std::runtime_error("factor_edge: Z is zero (degenerate node)");
  int r_eff = 0;
  for (Eigen::Index i = 0; i < sv.size() && r_eff < r; ++i)
    if (sv(i) >= tol * sv(0)) ++r_eff;
  if (r_eff == 0) throw std::runtime_error("factor_edge: zero effective rank");
  EdgeFactors f;
  f.r_eff = r_eff;
  f.left = svd.matrixU().leftCols(r_eff);
  f.right = sv.head(r_eff).asDiagonal() * svd.matrixV().leftCols(r_eff).transpose();
  return f;
}

// Rank-r truncated factor of Z, spec'd as one side of factor_edge.
inline Eigen::MatrixXd truncated_factor(const Eigen::MatrixXd& Z, int r, bool left_side, double tol) {
  EdgeFactors f = factor_edge(Z, r, tol);
  return left_side ? f.left : f.right;
}

// Moore-Penrose pseudo-inverse with relative singular value cutoff.
inline Eigen::MatrixXd pseudo_inverse(const Eigen::MatrixXd& A, double tol) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(A, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Eigen::VectorXd& sv = svd.singularValues();
  if (sv.size() == 0 || sv(0) <= 0.0) throw std::runtime_error("pseudo_inverse: zero matrix");
  Eigen::VectorXd inv = Eigen::VectorXd::Zero(sv.size());
  for (Eigen::Index i = 0; i < sv.size(); ++i)
    if (sv(i) >= tol * sv(0)) inv(i) = 1.0 / sv(i);
  return svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();
}

// Per-node linear system solves: contract B with the pseudo-inverse of each
// present factor. A_f is absent at the root, A_a/A_b at the leaves.
inline Eigen::MatrixXd solve_core_root(const Eigen::MatrixXd& A_a, const Eigen::MatrixXd& A_b,
                                       const Eigen::MatrixXd& B, double tol) {
  return pseudo_inverse(A_a, tol) * B * pseudo_inverse(A_b, tol).transpose();
}

inline Eigen::MatrixXd solve_core_leaf(const Eigen::MatrixXd& A_f, const Eigen::MatrixXd& B, double tol) {
  return B * pseudo_inverse(A_f, tol);
}

// B matricized as (r~_a * r~_b) x r~_f with the a-index slow; returns the
// core matricized the same way, (r_a * r_b) x r_f.
inline Eigen::MatrixXd solve_core_internal(const Eigen::MatrixXd& A_a, const Eigen::MatrixXd& A_b,
                                           const Eigen::MatrixXd& A_f, const Eigen::MatrixXd& B,
                                           double tol) {
  Eigen::MatrixXd Pa = pseudo_inverse(A_a, tol);  // ra x r~a
  Eigen::MatrixXd Pb = pseudo_inverse(A_b, tol);  // rb x r~b
  Eigen::MatrixXd Pf = pseudo_inverse(A_f, tol);  // r~f x rf
  Eigen::Index rta = Pa.cols(), rtb = Pb.cols();
  Eigen::MatrixXd Bf = B * Pf;  // (r~a*r~b) x rf
  Eigen::MatrixXd G(Pa.rows() * Pb.rows(), Pf.cols());
  for (Eigen::Index t = 0; t < Pf.cols(); ++t) {
    Eigen::MatrixXd Bt(rta, rtb);
    for (Eigen::Index mu = 0; mu < rta; ++mu)
      for (Eigen::Index nu = 0; nu < rtb; ++nu) Bt(mu, nu) = Bf(mu * rtb + nu, t);
    Eigen::MatrixXd Gt = Pa * Bt * Pb.transpose();
    for (Eigen::Index a = 0; a < Gt.rows(); ++a)
      for (Eigen::Index b = 0; b < Gt.cols(); ++b) G(a * Gt.cols() + b, t) = Gt(a, b);
  }
  return G;
}

struct SketchConfig {
  SketchCaps caps;
  double tol_svd = 1e-8;    // dynamic-rank relative floor
  double tol_pinv = 1e-10;  // pseudo-inverse relative cutoff
};

// Abstract moment source: empirical in production, analytic in oracle tests.
// Node ids follow the tree heap order; lists come from one shared SketchSet.
class MomentSource {
 public:
  virtual ~MomentSource() = default;
  // Z_{I; [d]-I} for the edge above node id (id >= 1).
  virtual Eigen::MatrixXd edge_Z(int id) = 0;
  // Root: B(mu, nu) over (own[left], own[right]).
  virtual Eigen::MatrixXd root_B(int left_id, int right_id) = 0;
  // Leaf: B(j, zeta) over (physical basis at the leaf variable, comp[id]).
  virtual Eigen::MatrixXd leaf_B(int id, int var) = 0;
  // Internal: B(mu, nu, zeta) over (own[left], own[right], comp[id]),
  // returned matricized as (r~_a * r~_b) x r~_f with mu slow.
  virtual Eigen::MatrixXd internal_B(int id, int left_id, int right_id) = 0;
};

class EmpiricalMoments : public MomentSource {
 public:
  EmpiricalMoments(const Eigen::MatrixXd& samples, const SketchSet& sketches, const FourierBasis& basis)
      : samples_(samples), sketches_(sketches), basis_(basis) {
    if (samples.rows() < 1) throw std::invalid_argument("EmpiricalMoments: empty sample set");
    cache_own_.resize(sketches.own.size());
    cache_comp_.resize(sketches.comp.size());
  }

  Eigen::MatrixXd edge_Z(int id) override {
    return (own(id).transpose() * comp(id)) / num();
  }
  Eigen::MatrixXd root_B(int left_id, int right_id) override {
    return (own(left_id).transpose() * own(right_id)) / num();
  }
  Eigen::MatrixXd leaf_B(int id, int var) override {
    Eigen::MatrixXd Psi(samples_.rows(), basis_.size());
    for (Eigen::Index i = 0; i < samples_.rows(); ++i)
      Psi.row(i) = basis_.eval(SketchFunction::clamp(samples_(i, var - 1), basis_.B));
    return (Psi.transpose() * comp(id)) / num();
  }
  Eigen::MatrixXd internal_B(int id, int left_id, int right_id) override {
    const Eigen::MatrixXd& Sa = own(left_id);
    const Eigen::MatrixXd& Sb = own(right_id);
    const Eigen::MatrixXd& Sf = comp(id);
    Eigen::Index ra = Sa.cols(), rb = Sb.cols();
    Eigen::MatrixXd KR(samples_.rows(), ra * rb);  // row-wise Khatri-Rao, mu slow
    for (Eigen::Index mu = 0; mu < ra; ++mu)
      for (Eigen::Index nu = 0; nu < rb; ++nu)
        KR.col(mu * rb + nu) = Sa.col(mu).cwiseProduct(Sb.col(nu));
    return (KR.transpose() * Sf) / num();
  }

 private:
  double num() const { return static_cast<double>(samples_.rows()); }
  const Eigen::MatrixXd& own(int id) {
    if (cache_own_[id].size() == 0) cache_own_[id] = eval_sketches(samples_, sketches_.own[id], basis_);
    return cache_own_[id];
  }
  const Eigen::MatrixXd& comp(int id) {
    if (cache_comp_[id].size() == 0) cache_comp_[id] = eval_sketches(samples_, sketches_.comp[id], basis_);
    return cache_comp_[id];
  }

  const Eigen::MatrixXd& samples_;
  const SketchSet& sketches_;
  FourierBasis basis_;
  std::vector<Eigen::MatrixXd> cache_own_;
  std::vector<Eigen::MatrixXd> cache_comp_;
};

// Runs the per-node solves given a moment source. Each edge is factored
// once; the left factor feeds the parent solve and the right factor feeds
// the child's own solve, so the two systems sharing an edge agree on gauge.
inline FhtModel sketch_from_moments(MomentSource& moments, const DimensionTree& tree,
                                    const FourierBasis& basis, const SketchConfig& cfg) {
  FhtModel model;
  model.tree = tree;
  model.basis = basis;
  int nn = tree.node_count();
  std::vector<EdgeFactors> edge(nn);
  for (int id = 1; id < nn; ++id) {
    try {
      edge[id] = factor_edge(moments.edge_Z(id), tree.nodes[id].rank, cfg.tol_svd);
    } catch (const std::exception& e) {
      throw std::runtime_error("sketching failed at node " + std::to_string(id) + " (level " +
                               std::to_string(tree.nodes[id].level) + ", block " +
                               std::to_string(tree.nodes[id].block) + "): " + e.what());
    }
    model.tree.nodes[id].rank = edge[id].r_eff;  // dynamic rank
  }

  model.cores.resize(nn);
  for (int id = 0; id < nn; ++id) {
    TensorCore& core = model.cores[id];
    core.level = tree.nodes[id].level;
    core.block = tree.nodes[id].block;
    if (tree.is_root(id)) {
      int lc = DimensionTree::left_child(id), rc = DimensionTree::right_child(id);
      Eigen::MatrixXd G = solve_core_root(edge[lc].left, edge[rc].left, moments.root_B(lc, rc), cfg.tol_pinv);
      core.resize(G.rows(), G.cols(), 1);
      Eigen::Map<Eigen::MatrixXd>(core.v.data(), G.rows(), G.cols()) = G;
    } else if (tree.is_leaf(id)) {
      int var = tree.nodes[id].block;
      Eigen::MatrixXd G = solve_core_leaf(edge[id].right, moments.leaf_B(id, var), cfg.tol_pinv);
      core.resize(G.rows(), G.cols(), 1);
      Eigen::Map<Eigen::MatrixXd>(core.v.data(), G.rows(), G.cols()) = G;
    } else {
      int lc = DimensionTree::left_child(id), rc = DimensionTree::right_child(id);
      Eigen::MatrixXd G = solve_core_internal(edge[lc].left, edge[rc].left, edge[id].right,
                                              moments.internal_B(id, lc, rc), cfg.tol_pinv);
      int ra = edge[lc].r_eff, rb = edge[rc].r_eff, rf = edge[id].r_eff;
      core.resize(ra, rb, rf);
      for (int t = 0; t < rf; ++t)
        for (int a = 0; a < ra; ++a)
          for (int b = 0; b < rb; ++b) core.at(a, b, t) = G(a * rb + b, t);
    }
  }
  model.check_consistency();
  return model;
}

// Algorithm entry point: density estimation over one snapshot of samples.
inline FhtModel sketch_density(const Eigen::MatrixXd& samples, const DimensionTree& tree,
                               const FourierBasis& basis, const SketchSet& sketches,
                               const SketchConfig& cfg) {
  if (samples.cols() != tree.d) throw std::invalid_argument("sketch_density: sample dimension mismatch");
  EmpiricalMoments moments(samples, sketches, basis);
  FhtModel model = sketch_from_moments(moments, tree, basis, cfg);
  std::int64_t clamped = 0;
  for (Eigen::Index i = 0; i < samples.rows(); ++i)
    for (Eigen::Index j = 0; j < samples.cols(); ++j)
      if (std::abs(samples(i, j)) > basis.B) ++clamped;
  model.meta["sample_count"] = samples.rows();
  model.meta["clamped_coordinates"] = clamped;
  std::vector<int> ranks;
  for (int id = 1; id < model.tree.node_count(); ++id) ranks.push_back(model.tree.nodes[id].rank);
  model.meta["effective_ranks"] = ranks;
  return model;
}

}  // namespace fht
