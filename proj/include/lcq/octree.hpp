#pragma once

// Level-restricted adaptive oct-tree over patch centroids and target points,
// with large-patch tethering, and near-list construction on top of it.

#include "lcq/types.hpp"

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace lcq {

struct TetherRecord {
  int patch = 0;
  int level = 0;
  int box = 0;
};

struct TreeStats {
  int levels = 0;
  std::size_t boxes = 0;
  std::size_t leaves = 0;
  std::size_t max_leaf_occupancy = 0;  // untethered points in one leaf
  std::size_t tethered = 0;
  std::string json() const;
};

class OctTree {
 public:
  struct Box {
    int level = 0;
    int parent = -1;
    std::array<int, 8> children{-1, -1, -1, -1, -1, -1, -1, -1};
    std::array<std::uint32_t, 3> ijk{0, 0, 0};
    Vec3 center = Vec3::Zero();
    double half = 0.0;
    std::vector<int> centroids;  // patch ids held here
    std::vector<int> targets;    // only in leaves
    bool leaf() const { return children[0] < 0; }
  };

  // reach[j] is eta * R_j for the centroid of patch j. A box is split while
  // it holds more than leaf_size untethered points, up to max_depth.
  static OctTree build(std::span<const Vec3> centroids, std::span<const double> reach,
                       std::span<const Vec3> targets, int leaf_size, int max_depth = 30);

  // Split boxes until leaves sharing a boundary point differ by at most one
  // level. Only adds boxes. Returns the number of boxes added.
  std::size_t enforce_level_restriction();

  const std::vector<Box>& boxes() const { return boxes_; }
  const Box& box(int id) const { return boxes_[id]; }
  Vec3 root_center() const { return boxes_[0].center; }
  double root_half() const { return boxes_[0].half; }
  int leaf_size() const { return leaf_size_; }
  int max_depth() const { return max_depth_; }

  // Box id at (level, i, j, k), or -1.
  int find(int level, std::uint32_t i, std::uint32_t j, std::uint32_t k) const;
  // Existing same-level boxes adjacent to box id (excluding itself).
  std::vector<int> colleagues(int id) const;
  // Box holding patch j's centroid.
  int holding_box(int patch) const { return holder_[patch]; }
  std::vector<TetherRecord> tethers() const;

  std::size_t num_centroids() const { return centroids_.size(); }
  std::size_t num_targets() const { return targets_.size(); }
  std::span<const Vec3> centroids() const { return centroids_; }
  std::span<const double> reach() const { return reach_; }
  std::span<const Vec3> targets() const { return targets_; }

  TreeStats stats() const;
  const std::vector<Warning>& warnings() const { return warnings_; }

 private:
  struct Key {
    int level;
    std::uint32_t i, j, k;
    bool operator==(const Key&) const = default;
  };
  struct KeyHash {
    std::size_t operator()(const Key& key) const;
  };

  bool descends(int patch, const Box& b) const { return 2.0 * reach_[patch] <= b.half; }
  std::size_t untethered_count(const Box& b) const;
  void split(int id);
  void refine(int id);
  // Ensure the cell (level, i, j, k) exists, splitting leaves above it.
  void ensure(int level, std::uint32_t i, std::uint32_t j, std::uint32_t k);

  std::vector<Vec3> centroids_;
  std::vector<double> reach_;
  std::vector<Vec3> targets_;
  int leaf_size_ = 30;
  int max_depth_ = 30;
  std::vector<Box> boxes_;
  std::vector<int> holder_;
  std::unordered_map<Key, int, KeyHash> index_;
  std::vector<Warning> warnings_;
};

// Per patch, the ids of targets with |x - c_j| < eta R_j, excluding targets
// owned by the patch itself (owner[t] == j). Sorted ascending.
struct NearList {
  std::vector<std::vector<std::size_t>> targets;
  std::size_t total() const;
};

// owner may be empty (no target belongs to a patch); -1 marks off-surface points.
NearList build_near_lists(const OctTree& tree, std::span<const int> owner);

}  // namespace lcq
