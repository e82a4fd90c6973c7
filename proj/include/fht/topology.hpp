#pragma once

// Binary hierarchical bipartition of the variable set [d] and the
// bit-interleaved mapping between Cartesian grid coordinates and linear
// variable indices.

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace fht {

inline bool is_power_of_two(std::int64_t v) { return v > 0 && (v & (v - 1)) == 0; }

inline int int_log2(std::int64_t v) {
  int l = 0;
  while ((std::int64_t(1) << l) < v) ++l;
  return l;
}

// Cartesian grid of m = 2^mu points per axis in Delta physical dimensions,
// lattice spacing h = 1/(m+1) (zero-Dirichlet ghosts sit at 0 and m+1).
struct GridSpec {
  int delta = 1;   // physical dimension, 1..3
  int m = 2;       // points per axis, must be 2^mu
  int mu = 1;      // bits per axis
  double h = 1.0 / 3.0;

  GridSpec() = default;
  GridSpec(int delta_, int m_) : delta(delta_), m(m_) {
    if (delta < 1 || delta > 3) throw std::invalid_argument("GridSpec: delta must be 1, 2, or 3");
    if (!is_power_of_two(m)) throw std::invalid_argument("GridSpec: m must be a power of two");
    mu = int_log2(m);
    h = 1.0 / (m + 1);
  }

  std::int64_t site_count() const {
    std::int64_t d = 1;
    for (int i = 0; i < delta; ++i) d *= m;
    return d;
  }
};

// Maps 1-based axis coordinates to the 1-based linear variable index whose
// zero-based binary expansion interleaves the per-axis bits MSB-first,
// cycling axes fastest within each bit position.
inline int interleave_index(const std::vector<int>& coords, const GridSpec& grid) {
  if (static_cast<int>(coords.size()) != grid.delta)
    throw std::invalid_argument("interleave_index: coordinate count != delta");
  for (int c : coords)
    if (c < 1 || c > grid.m) throw std::out_of_range("interleave_index: coordinate out of range");
  std::int64_t word = 0;
  for (int b = 0; b < grid.mu; ++b) {
    for (int axis = 0; axis < grid.delta; ++axis) {
      int bit = ((coords[axis] - 1) >> (grid.mu - 1 - b)) & 1;
      word = (word << 1) | bit;
    }
  }
  return static_cast<int>(word) + 1;
}

inline std::vector<int> deinterleave_index(int k, const GridSpec& grid) {
  if (k < 1 || k > grid.site_count()) throw std::out_of_range("deinterleave_index: index out of range");
  std::int64_t word = k - 1;
  std::vector<int> coords(grid.delta, 0);
  int total_bits = grid.mu * grid.delta;
  for (int pos = 0; pos < total_bits; ++pos) {
    int bit = static_cast<int>((word >> (total_bits - 1 - pos)) & 1);
    int b = pos / grid.delta;
    int axis = pos % grid.delta;
    coords[axis] |= bit << (grid.mu - 1 - b);
  }
  for (int& c : coords) c += 1;
  return coords;
}

// Balanced binary bipartition tree over [d], d = 2^L. Nodes stored in heap
// order: id(l,k) = 2^l - 1 + (k-1) with level l in 0..L and block k in
// 1..2^l. Node (l,k) carries index set {2^(L-l)(k-1)+1, ..., 2^(L-l)k}.
struct DimensionTree {
  struct Node {
    int level = 0;
    int block = 1;  // 1-based within level
    std::vector<int> index_set;  // 1-based variable indices, contiguous
    int rank = 0;        // bond rank budget toward the parent (0 at root)
    int oversample = 0;  // sketch oversampling r~ toward the parent
  };

  int d = 0;
  int L = 0;
  std::vector<Node> nodes;  // size 2^(L+1) - 1

  int node_count() const { return static_cast<int>(nodes.size()); }
  static int node_id(int level, int block) { return (1 << level) - 1 + (block - 1); }
  static int parent_id(int id) { return (id - 1) / 2; }
  static int left_child(int id) { return 2 * id + 1; }
  static int right_child(int id) { return 2 * id + 2; }
  bool is_root(int id) const { return id == 0; }
  bool is_leaf(int id) const { return nodes[id].level == L; }
  // Leaf node of a 1-based variable index.
  int leaf_id(int var) const { return node_id(L, var); }
};

inline DimensionTree build_balanced_tree(int d, int default_rank, int oversample) {
  if (!is_power_of_two(d) || d < 2)
    throw std::invalid_argument("build_balanced_tree: d must be a power of two, d >= 2");
  if (default_rank < 1) throw std::invalid_argument("build_balanced_tree: rank must be positive");
  if (oversample < default_rank)
    throw std::invalid_argument("build_balanced_tree: oversample must be >= rank");
  DimensionTree tree;
  tree.d = d;
  tree.L = int_log2(d);
  tree.nodes.resize(2 * d - 1);
  for (int l = 0; l <= tree.L; ++l) {
    int span = d >> l;
    for (int k = 1; k <= (1 << l); ++k) {
      DimensionTree::Node& nd = tree.nodes[DimensionTree::node_id(l, k)];
      nd.level = l;
      nd.block = k;
      nd.index_set.resize(span);
      for (int j = 0; j < span; ++j) nd.index_set[j] = span * (k - 1) + 1 + j;
      nd.rank = (l == 0) ? 0 : default_rank;
      nd.oversample = (l == 0) ? 0 : oversample;
    }
  }
  return tree;
}

inline nlohmann::json tree_to_json(const DimensionTree& tree) {
  nlohmann::json j;
  j["d"] = tree.d;
  j["L"] = tree.L;
  j["nodes"] = nlohmann::json::array();
  for (const auto& nd : tree.nodes) {
    j["nodes"].push_back({{"level", nd.level},
                          {"block", nd.block},
                          {"index_set", nd.index_set},
                          {"rank", nd.rank},
                          {"oversample", nd.oversample}});
  }
  return j;
}

inline DimensionTree tree_from_json(const nlohmann::json& j) {
  DimensionTree tree;
  tree.d = j.at("d").get<int>();
  tree.L = j.at("L").get<int>();
  for (const auto& nj : j.at("nodes")) {
    DimensionTree::Node nd;
    nd.level = nj.at("level").get<int>();
    nd.block = nj.at("block").get<int>();
    nd.index_set = nj.at("index_set").get<std::vector<int>>();
    nd.rank = nj.at("rank").get<int>();
    nd.oversample = nj.at("oversample").get<int>();
    tree.nodes.push_back(std::move(nd));
  }
  if (static_cast<int>(tree.nodes.size()) != 2 * tree.d - 1)
    throw std::runtime_error("tree_from_json: node count inconsistent with d");
  return tree;
}

}  // namespace fht
