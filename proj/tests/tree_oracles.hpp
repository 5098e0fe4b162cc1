#pragma once

// Brute-force references for octree properties.

#include "lcq/octree.hpp"

#include <cstdint>
#include <cstdlib>
#include <span>
#include <vector>

namespace oracle {

// Integer extent of a box at the finest level, for exact contact tests.
struct Extent {
  std::int64_t lo[3], hi[3];
};

inline Extent extent(const lcq::OctTree::Box& b) {
  Extent e;
  const std::int64_t w = std::int64_t(1) << (30 - b.level);
  for (int a = 0; a < 3; ++a) {
    e.lo[a] = b.ijk[a] * w;
    e.hi[a] = e.lo[a] + w;
  }
  return e;
}

inline bool touching(const Extent& a, const Extent& b) {
  for (int k = 0; k < 3; ++k)
    if (a.hi[k] < b.lo[k] || b.hi[k] < a.lo[k]) return false;
  return true;
}

// Leaf pairs that share a boundary point and differ by more than one level.
inline std::size_t balance_violations(const lcq::OctTree& tree) {
  std::vector<int> leaves;
  for (std::size_t i = 0; i < tree.boxes().size(); ++i)
    if (tree.box(static_cast<int>(i)).leaf()) leaves.push_back(static_cast<int>(i));
  std::size_t bad = 0;
  for (std::size_t a = 0; a < leaves.size(); ++a)
    for (std::size_t b = a + 1; b < leaves.size(); ++b) {
      const auto& A = tree.box(leaves[a]);
      const auto& B = tree.box(leaves[b]);
      if (std::abs(A.level - B.level) > 1 && touching(extent(A), extent(B))) ++bad;
    }
  return bad;
}

inline std::vector<std::vector<std::size_t>> brute_near(std::span<const lcq::Vec3> c,
                                                        std::span<const double> reach,
                                                        std::span<const lcq::Vec3> t,
                                                        std::span<const int> owner) {
  std::vector<std::vector<std::size_t>> out(c.size());
  for (std::size_t j = 0; j < c.size(); ++j)
    for (std::size_t i = 0; i < t.size(); ++i)
      if ((owner.empty() || owner[i] != int(j)) && (t[i] - c[j]).norm() < reach[j]) out[j].push_back(i);
  return out;
}

// Every target in exactly one leaf and inside it; every centroid held once,
// by the box holding_box reports.
inline bool partition_ok(const lcq::OctTree& tree) {
  std::vector<int> seen_t(tree.num_targets(), 0), seen_c(tree.num_centroids(), 0);
  for (std::size_t i = 0; i < tree.boxes().size(); ++i) {
    const auto& b = tree.box(static_cast<int>(i));
    if (!b.leaf() && !b.targets.empty()) return false;
    for (int t : b.targets) {
      ++seen_t[t];
      if ((tree.targets()[t] - b.center).cwiseAbs().maxCoeff() > b.half * (1 + 1e-12)) return false;
    }
    for (int c : b.centroids) {
      ++seen_c[c];
      if (tree.holding_box(c) != static_cast<int>(i)) return false;
    }
  }
  for (int n : seen_t)
    if (n != 1) return false;
  for (int n : seen_c)
    if (n != 1) return false;
  return true;
}

// Each tethered centroid's ball fits the 3x3x3 block around its box but not a child.
inline bool tethers_sound(const lcq::OctTree& tree, std::span<const lcq::Vec3> c, std::span<const double> reach) {
  for (const auto& tr : tree.tethers()) {
    const auto& b = tree.box(tr.box);
    if (tr.level != b.level || !(2 * reach[tr.patch] > b.half)) return false;
    if (tr.level == 0) continue;
    const lcq::Vec3 off = (c[tr.patch] - b.center).cwiseAbs();
    if (off.maxCoeff() + reach[tr.patch] > 3 * b.half) return false;
  }
  return true;
}

}  // namespace oracle
