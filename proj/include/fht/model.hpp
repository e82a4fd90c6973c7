#pragma once

// Functional hierarchical tensor: one core per tree node, physical indices
// at the leaves, evaluated by contracting leaf cores against basis vectors
// and sweeping children-before-parents up the tree.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "fht/basis.hpp"
#include "fht/topology.hpp"

namespace fht {

// Root: r_a x r_b (dims = {ra, rb, 1}); internal: r_a x r_b x r_f;
// leaf: n x r_f (dims = {n, rf, 1}). Storage index: i0 + d0*(i1 + d1*i2).
struct TensorCore {
  int level = 0;
  int block = 1;
  std::array<int, 3> dims = {1, 1, 1};
  std::vector<double> v;

  void resize(int d0, int d1, int d2) {
    dims = {d0, d1, d2};
    v.assign(static_cast<std::size_t>(d0) * d1 * d2, 0.0);
  }
  double& at(int i0, int i1, int i2 = 0) {
    return v[i0 + static_cast<std::size_t>(dims[0]) * (i1 + static_cast<std::size_t>(dims[1]) * i2)];
  }
  double at(int i0, int i1, int i2 = 0) const {
    return v[i0 + static_cast<std::size_t>(dims[0]) * (i1 + static_cast<std::size_t>(dims[1]) * i2)];
  }
  // Slice along the last mode as a dims[0] x dims[1] matrix view.
  Eigen::Map<const Eigen::MatrixXd> slice(int i2) const {
    return Eigen::Map<const Eigen::MatrixXd>(v.data() + static_cast<std::size_t>(dims[0]) * dims[1] * i2,
                                             dims[0], dims[1]);
  }
  Eigen::Map<Eigen::MatrixXd> slice(int i2) {
    return Eigen::Map<Eigen::MatrixXd>(v.data() + static_cast<std::size_t>(dims[0]) * dims[1] * i2,
                                       dims[0], dims[1]);
  }
  // Matrix view for 2-way cores (root, leaf).
  Eigen::Map<const Eigen::MatrixXd> matrix() const { return slice(0); }
  std::size_t size() const { return v.size(); }
};

struct FhtModel {
  DimensionTree tree;
  FourierBasis basis;
  std::vector<TensorCore> cores;  // heap node order
  nlohmann::json meta;

  int d() const { return tree.d; }
  int n() const { return basis.size(); }

  // Bond dimension on the edge between node id and its parent.
  int bond_dim(int id) const {
    const TensorCore& c = cores[id];
    return tree.is_leaf(id) ? c.dims[1] : c.dims[2];
  }

  std::size_t parameter_count() const {
    std::size_t total = 0;
    for (const auto& c : cores) total += c.size();
    return total;
  }

  void check_consistency() const {
    if (static_cast<int>(cores.size()) != tree.node_count())
      throw std::runtime_error("FhtModel: core count mismatch");
    for (int id = 0; id < tree.node_count(); ++id) {
      const TensorCore& c = cores[id];
      if (tree.is_leaf(id)) {
        if (c.dims[0] != n() || c.dims[2] != 1) throw std::runtime_error("FhtModel: bad leaf core shape");
      } else {
        int lc = DimensionTree::left_child(id), rc = DimensionTree::right_child(id);
        if (c.dims[0] != bond_dim(lc) || c.dims[1] != bond_dim(rc))
          throw std::runtime_error("FhtModel: child bond mismatch at node " + std::to_string(id));
        if (tree.is_root(id) && c.dims[2] != 1) throw std::runtime_error("FhtModel: root core must be 2-way");
      }
      for (double x : c.v)
        if (!std::isfinite(x)) throw std::runtime_error("FhtModel: non-finite core entry");
    }
  }
};

// Upward-sweep contraction of a model against one vector per leaf. Supports
// incremental leaf updates (only the ancestor chain is recomputed) and
// downward "influence" messages that expose the value as a linear function
// of a single leaf vector.
class TreeContraction {
 public:
  explicit TreeContraction(const FhtModel& model) : model_(&model) {
    up_.resize(model.tree.node_count());
    leaf_.assign(model.d(), Eigen::VectorXd());
  }

  // Set every leaf to the same vector and sweep.
  void set_all_leaves(const Eigen::VectorXd& w) {
    for (int k = 1; k <= model_->d(); ++k) leaf_[k - 1] = w;
    full_sweep();
  }

  void set_leaves(const std::vector<Eigen::VectorXd>& ws) {
    if (static_cast<int>(ws.size()) != model_->d()) throw std::invalid_argument("leaf vector count mismatch");
    for (int k = 1; k <= model_->d(); ++k) leaf_[k - 1] = ws[k - 1];
    full_sweep();
  }

  // Replace the vector at 1-based variable k and recompute its ancestors.
  void set_leaf(int var, const Eigen::VectorXd& w) {
    leaf_[var - 1] = w;
    int id = model_->tree.leaf_id(var);
    recompute(id);
    while (id != 0) {
      id = DimensionTree::parent_id(id);
      recompute(id);
    }
  }

  double value() const { return value_; }

  // n-vector w such that value() == w . leaf_vector(var), all else fixed.
  Eigen::VectorXd influence(int var) const {
    const DimensionTree& tree = model_->tree;
    int target = tree.leaf_id(var);
    // Path root -> target.
    std::vector<int> path;
    for (int id = target; id != 0; id = DimensionTree::parent_id(id)) path.push_back(id);
    path.push_back(0);
    std::reverse(path.begin(), path.end());

    Eigen::VectorXd msg;  // message over the bond between path[i] and path[i+1]
    for (std::size_t i = 0; i + 1 < path.size(); ++i) {
      int id = path[i];
      int next = path[i + 1];
      const TensorCore& G = model_->cores[id];
      bool next_is_left = (next == DimensionTree::left_child(id));
      int sib = next_is_left ? DimensionTree::right_child(id) : DimensionTree::left_child(id);
      const Eigen::VectorXd& vs = up_[sib];
      if (tree.is_root(id)) {
        msg = next_is_left ? Eigen::VectorXd(G.matrix() * vs) : Eigen::VectorXd(G.matrix().transpose() * vs);
      } else {
        Eigen::VectorXd out = Eigen::VectorXd::Zero(next_is_left ? G.dims[0] : G.dims[1]);
        for (int t = 0; t < G.dims[2]; ++t) {
          auto M = G.slice(t);
          out += msg(t) * (next_is_left ? Eigen::VectorXd(M * vs) : Eigen::VectorXd(M.transpose() * vs));
        }
        msg = std::move(out);
      }
    }
    return model_->cores[target].matrix() * msg;  // n-vector
  }

 private:
  void full_sweep() {
    for (int id = model_->tree.node_count() - 1; id >= 0; --id) recompute(id);
  }

  void recompute(int id) {
    const DimensionTree& tree = model_->tree;
    const TensorCore& G = model_->cores[id];
    if (tree.is_leaf(id)) {
      int var = tree.nodes[id].block;
      up_[id] = G.matrix().transpose() * leaf_[var - 1];
      return;
    }
    const Eigen::VectorXd& va = up_[DimensionTree::left_child(id)];
    const Eigen::VectorXd& vb = up_[DimensionTree::right_child(id)];
    if (tree.is_root(id)) {
      value_ = va.dot(G.matrix() * vb);
      up_[id] = Eigen::VectorXd::Constant(1, value_);
      return;
    }
    Eigen::VectorXd out(G.dims[2]);
    for (int t = 0; t < G.dims[2]; ++t) out(t) = va.dot(G.slice(t) * vb);
    up_[id] = std::move(out);
  }

  const FhtModel* model_;
  std::vector<Eigen::VectorXd> up_;
  std::vector<Eigen::VectorXd> leaf_;
  double value_ = 0.0;
};

inline double evaluate(const FhtModel& model, const Eigen::VectorXd& x) {
  if (x.size() != model.d()) throw std::invalid_argument("evaluate: dimension mismatch");
  TreeContraction sweep(model);
  std::vector<Eigen::VectorXd> ws(model.d());
  for (int j = 0; j < model.d(); ++j) ws[j] = model.basis.eval(x(j));
  sweep.set_leaves(ws);
  return sweep.value();
}

inline double integrate(const FhtModel& model) {
  TreeContraction sweep(model);
  sweep.set_all_leaves(model.basis.integral_vector());
  return sweep.value();
}

inline FhtModel normalize(const FhtModel& model) {
  double z = integrate(model);
  if (!std::isfinite(z) || z == 0.0)
    throw std::runtime_error("normalize: degenerate integral " + std::to_string(z));
  FhtModel out = model;
  for (double& v : out.cores[0].v) v /= z;
  return out;
}

// <p_A, p_B> in L^2, computed core-pairwise; never materializes n^d objects.
inline double inner_product(const FhtModel& A, const FhtModel& B) {
  if (A.d() != B.d() || !(A.basis == B.basis))
    throw std::invalid_argument("inner_product: dimension or basis mismatch");
  const DimensionTree& tree = A.tree;
  std::vector<Eigen::MatrixXd> M(tree.node_count());
  for (int id = tree.node_count() - 1; id >= 1; --id) {
    const TensorCore& GA = A.cores[id];
    const TensorCore& GB = B.cores[id];
    if (tree.is_leaf(id)) {
      M[id] = GA.matrix().transpose() * GB.matrix();  // orthonormal basis
      continue;
    }
    const Eigen::MatrixXd& Ma = M[DimensionTree::left_child(id)];
    const Eigen::MatrixXd& Mb = M[DimensionTree::right_child(id)];
    Eigen::MatrixXd out(GA.dims[2], GB.dims[2]);
    for (int t = 0; t < GA.dims[2]; ++t) {
      Eigen::MatrixXd X = Ma.transpose() * GA.slice(t) * Mb;  // ra' x rb'
      for (int u = 0; u < GB.dims[2]; ++u) out(t, u) = (X.array() * GB.slice(u).array()).sum();
    }
    M[id] = std::move(out);
  }
  const Eigen::MatrixXd& Ma = M[1];
  const Eigen::MatrixXd& Mb = M[2];
  Eigen::MatrixXd X = Ma.transpose() * A.cores[0].matrix() * Mb;
  return (X.array() * B.cores[0].matrix().array()).sum();
}

// Dense n^d coefficient tensor, flattened with variable 1 slowest. Testing
// oracle only; guarded at n^d <= 1e7.
inline Eigen::VectorXd contract_full(const FhtModel& model) {
  double sz = std::pow(static_cast<double>(model.n()), model.d());
  if (sz > 1e7) throw std::runtime_error("contract_full: n^d exceeds guard");
  const DimensionTree& tree = model.tree;
  // frame[id]: n^{|I|} x r matrix mapping bond index to the block's dense slice.
  std::vector<Eigen::MatrixXd> frame(tree.node_count());
  for (int id = tree.node_count() - 1; id >= 0; --id) {
    const TensorCore& G = model.cores[id];
    if (tree.is_leaf(id)) {
      frame[id] = G.matrix();
      continue;
    }
    const Eigen::MatrixXd& fa = frame[DimensionTree::left_child(id)];
    const Eigen::MatrixXd& fb = frame[DimensionTree::right_child(id)];
    Eigen::Index na = fa.rows(), nb = fb.rows();
    int nt = tree.is_root(id) ? 1 : G.dims[2];
    Eigen::MatrixXd out(na * nb, nt);
    for (int t = 0; t < nt; ++t) {
      Eigen::MatrixXd M = fa * G.slice(t) * fb.transpose();  // na x nb
      // flatten with the a-index slow
      for (Eigen::Index ia = 0; ia < na; ++ia)
        for (Eigen::Index ib = 0; ib < nb; ++ib) out(ia * nb + ib, t) = M(ia, ib);
    }
    frame[id] = std::move(out);
  }
  return frame[0].col(0);
}

// 1D or 2D marginal on a grid: all unselected leaves contracted with the
// basis integral vector. Truncation can make values slightly negative;
// they are reported as-is.
inline Eigen::MatrixXd marginal_grid(const FhtModel& model, const std::vector<int>& vars,
                                     const std::vector<std::vector<double>>& grids) {
  if (vars.empty() || vars.size() > 2 || vars.size() != grids.size())
    throw std::invalid_argument("marginal_grid: need 1 or 2 variables with matching grids");
  for (std::size_t i = 0; i < vars.size(); ++i) {
    if (vars[i] < 1 || vars[i] > model.d()) throw std::out_of_range("marginal_grid: variable out of range");
    for (std::size_t j = i + 1; j < vars.size(); ++j)
      if (vars[i] == vars[j]) throw std::invalid_argument("marginal_grid: variables must be distinct");
  }
  TreeContraction sweep(model);
  sweep.set_all_leaves(model.basis.integral_vector());
  if (vars.size() == 1) {
    Eigen::VectorXd w = sweep.influence(vars[0]);
    Eigen::MatrixXd out(grids[0].size(), 1);
    for (std::size_t g = 0; g < grids[0].size(); ++g) out(g, 0) = w.dot(model.basis.eval(grids[0][g]));
    return out;
  }
  Eigen::MatrixXd out(grids[0].size(), grids[1].size());
  for (std::size_t g0 = 0; g0 < grids[0].size(); ++g0) {
    sweep.set_leaf(vars[0], model.basis.eval(grids[0][g0]));
    Eigen::VectorXd w = sweep.influence(vars[1]);
    for (std::size_t g1 = 0; g1 < grids[1].size(); ++g1) out(g0, g1) = w.dot(model.basis.eval(grids[1][g1]));
  }
  return out;
}

// --- Model file format ------------------------------------------------------
// magic "FHTMODL1" | u64 header byte length | JSON header (tree, basis,
// core shape table, metadata) | float64 core payload in node order.

inline constexpr char kModelMagic[8] = {'F', 'H', 'T', 'M', 'O', 'D', 'L', '1'};

inline void save_model(const FhtModel& model, const std::string& path) {
  nlohmann::json header;
  header["tree"] = tree_to_json(model.tree);
  header["basis"] = {{"B", model.basis.B}, {"q", model.basis.q}};
  header["cores"] = nlohmann::json::array();
  for (const auto& c : model.cores)
    header["cores"].push_back({{"level", c.level}, {"block", c.block}, {"dims", c.dims}});
  header["meta"] = model.meta;
  std::string hs = header.dump();

  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw std::runtime_error("cannot open for writing: " + path);
  std::fwrite(kModelMagic, 1, 8, f);
  std::uint64_t hlen = hs.size();
  std::fwrite(&hlen, sizeof(std::uint64_t), 1, f);
  std::fwrite(hs.data(), 1, hs.size(), f);
  for (const auto& c : model.cores) std::fwrite(c.v.data(), sizeof(double), c.v.size(), f);
  if (std::fclose(f) != 0) throw std::runtime_error("write failed: " + path);
}

inline FhtModel load_model(const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "rb");
  if (!f) throw std::runtime_error("cannot open: " + path);
  char magic[8];
  std::uint64_t hlen = 0;
  if (std::fread(magic, 1, 8, f) != 8 || std::memcmp(magic, kModelMagic, 8) != 0 ||
      std::fread(&hlen, sizeof(std::uint64_t), 1, f) != 1) {
    std::fclose(f);
    throw std::runtime_error("not a model file: " + path);
  }
  std::string hs(hlen, '\0');
  if (std::fread(hs.data(), 1, hlen, f) != hlen) {
    std::fclose(f);
    throw std::runtime_error("truncated model header: " + path);
  }
  nlohmann::json header = nlohmann::json::parse(hs);
  FhtModel model;
  model.tree = tree_from_json(header.at("tree"));
  model.basis = FourierBasis(header.at("basis").at("B").get<double>(), header.at("basis").at("q").get<int>());
  model.meta = header.value("meta", nlohmann::json::object());
  for (const auto& cj : header.at("cores")) {
    TensorCore c;
    c.level = cj.at("level").get<int>();
    c.block = cj.at("block").get<int>();
    auto dims = cj.at("dims").get<std::array<int, 3>>();
    c.resize(dims[0], dims[1], dims[2]);
    if (std::fread(c.v.data(), sizeof(double), c.v.size(), f) != c.v.size()) {
      std::fclose(f);
      throw std::runtime_error("truncated model payload: " + path);
    }
    model.cores.push_back(std::move(c));
  }
  std::fclose(f);
  model.check_consistency();
  return model;
}

}  // namespace fht
