#include "lcq/octree.hpp"

#include <json.hpp>

#include <algorithm>
#include <functional>

namespace lcq {

std::string TreeStats::json() const {
  nlohmann::json j = {{"levels", levels},
                      {"boxes", boxes},
                      {"leaves", leaves},
                      {"max_leaf_occupancy", max_leaf_occupancy},
                      {"tethered", tethered}};
  return j.dump();
}

std::size_t OctTree::KeyHash::operator()(const Key& key) const {
  std::uint64_t h = static_cast<std::uint64_t>(key.level);
  for (std::uint64_t x : {key.i, key.j, key.k}) h = (h ^ x) * 0x100000001b3ULL + (h >> 29);
  return static_cast<std::size_t>(h);
}

int OctTree::find(int level, std::uint32_t i, std::uint32_t j, std::uint32_t k) const {
  const auto it = index_.find(Key{level, i, j, k});
  return it == index_.end() ? -1 : it->second;
}

std::size_t OctTree::untethered_count(const Box& b) const {
  std::size_t n = b.targets.size();
  for (int c : b.centroids)
    if (descends(c, b)) ++n;
  return n;
}

void OctTree::split(int id) {
  const int level = boxes_[id].level + 1;
  const double h = boxes_[id].half / 2;
  std::array<int, 8> kids{};
  for (int c = 0; c < 8; ++c) {
    Box child;
    const Box& parent = boxes_[id];
    child.level = level;
    child.parent = id;
    child.half = h;
    for (int a = 0; a < 3; ++a) {
      const int bit = (c >> a) & 1;
      child.ijk[a] = 2 * parent.ijk[a] + bit;
      child.center[a] = parent.center[a] + (bit ? h : -h);
    }
    kids[c] = static_cast<int>(boxes_.size());
    index_.emplace(Key{level, child.ijk[0], child.ijk[1], child.ijk[2]}, kids[c]);
    boxes_.push_back(std::move(child));
  }
  Box& b = boxes_[id];
  b.children = kids;
  auto octant = [&b](const Vec3& x) {
    return int(x.x() >= b.center.x()) | int(x.y() >= b.center.y()) << 1 |
           int(x.z() >= b.center.z()) << 2;
  };
  for (int t : b.targets) boxes_[kids[octant(targets_[t])]].targets.push_back(t);
  b.targets.clear();
  std::vector<int> keep;
  for (int c : b.centroids) {
    if (descends(c, b)) {
      const int child = kids[octant(centroids_[c])];
      boxes_[child].centroids.push_back(c);
      holder_[c] = child;
    } else {
      keep.push_back(c);
    }
  }
  b.centroids = std::move(keep);
}

void OctTree::refine(int id) {
  if (untethered_count(boxes_[id]) <= static_cast<std::size_t>(leaf_size_)) return;
  if (boxes_[id].level >= max_depth_) {
    warnings_.push_back({"octree", "depth cap " + std::to_string(max_depth_) +
                                       " reached; forced leaf holds " +
                                       std::to_string(untethered_count(boxes_[id])) + " points"});
    return;
  }
  split(id);
  const auto kids = boxes_[id].children;
  for (int c : kids) refine(c);
}

OctTree OctTree::build(std::span<const Vec3> centroids, std::span<const double> reach,
                       std::span<const Vec3> targets, int leaf_size, int max_depth) {
  if (centroids.size() != reach.size())
    throw ArgumentError("build_tree: one reach value per centroid required");
  if (leaf_size < 1) throw ArgumentError("build_tree: leaf size must be >= 1");
  if (max_depth < 0 || max_depth > 30) throw ArgumentError("build_tree: depth cap must be in [0, 30]");
  OctTree t;
  t.centroids_.assign(centroids.begin(), centroids.end());
  t.reach_.assign(reach.begin(), reach.end());
  t.targets_.assign(targets.begin(), targets.end());
  t.leaf_size_ = leaf_size;
  t.max_depth_ = max_depth;

  Vec3 lo = Vec3::Constant(1e300), hi = Vec3::Constant(-1e300);
  for (const auto& x : t.centroids_) lo = lo.cwiseMin(x), hi = hi.cwiseMax(x);
  for (const auto& x : t.targets_) lo = lo.cwiseMin(x), hi = hi.cwiseMax(x);
  Box root;
  if (t.centroids_.empty() && t.targets_.empty()) {
    root.half = 1.0;
  } else {
    if (!lo.allFinite() || !hi.allFinite()) throw ArgumentError("build_tree: non-finite point");
    root.center = (lo + hi) / 2;
    root.half = 1.01 * (hi - lo).maxCoeff() / 2;
    if (root.half <= 0.0) root.half = std::max(1e-3, 1e-3 * root.center.norm());
  }
  for (std::size_t i = 0; i < t.targets_.size(); ++i) root.targets.push_back(static_cast<int>(i));
  for (std::size_t i = 0; i < t.centroids_.size(); ++i) root.centroids.push_back(static_cast<int>(i));
  t.holder_.assign(t.centroids_.size(), 0);
  t.boxes_.push_back(std::move(root));
  t.index_.emplace(Key{0, 0, 0, 0}, 0);
  t.refine(0);
  return t;
}

void OctTree::ensure(int level, std::uint32_t i, std::uint32_t j, std::uint32_t k) {
  if (find(level, i, j, k) >= 0) return;
  ensure(level - 1, i >> 1, j >> 1, k >> 1);
  const int parent = find(level - 1, i >> 1, j >> 1, k >> 1);
  if (!boxes_[parent].leaf()) throw InternalError("octree: internal box with missing child");
  split(parent);
}

std::size_t OctTree::enforce_level_restriction() {
  const std::size_t before = boxes_.size();
  int deepest = 0;
  for (const auto& b : boxes_) deepest = std::max(deepest, b.level);
  for (int level = deepest; level >= 2; --level) {
    std::vector<int> ids;
    for (std::size_t b = 0; b < boxes_.size(); ++b)
      if (boxes_[b].level == level) ids.push_back(static_cast<int>(b));
    const std::int64_t n = std::int64_t(1) << level;
    for (int id : ids) {
      const auto ijk = boxes_[id].ijk;
      for (int dx = -1; dx <= 1; ++dx)
        for (int dy = -1; dy <= 1; ++dy)
          for (int dz = -1; dz <= 1; ++dz) {
            const std::int64_t a = ijk[0] + dx, b = ijk[1] + dy, c = ijk[2] + dz;
            if (a < 0 || b < 0 || c < 0 || a >= n || b >= n || c >= n) continue;
            ensure(level - 1, static_cast<std::uint32_t>(a >> 1), static_cast<std::uint32_t>(b >> 1),
                   static_cast<std::uint32_t>(c >> 1));
          }
    }
  }
  return boxes_.size() - before;
}

std::vector<int> OctTree::colleagues(int id) const {
  std::vector<int> out;
  const Box& b = boxes_[id];
  const std::int64_t n = std::int64_t(1) << b.level;
  for (int dx = -1; dx <= 1; ++dx)
    for (int dy = -1; dy <= 1; ++dy)
      for (int dz = -1; dz <= 1; ++dz) {
        if (dx == 0 && dy == 0 && dz == 0) continue;
        const std::int64_t a = b.ijk[0] + dx, c = b.ijk[1] + dy, e = b.ijk[2] + dz;
        if (a < 0 || c < 0 || e < 0 || a >= n || c >= n || e >= n) continue;
        const int other = find(b.level, static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(c),
                               static_cast<std::uint32_t>(e));
        if (other >= 0) out.push_back(other);
      }
  return out;
}

std::vector<TetherRecord> OctTree::tethers() const {
  std::vector<TetherRecord> out;
  for (std::size_t j = 0; j < holder_.size(); ++j) {
    const Box& b = boxes_[holder_[j]];
    if (!b.leaf()) out.push_back({static_cast<int>(j), b.level, holder_[j]});
  }
  return out;
}

TreeStats OctTree::stats() const {
  TreeStats s;
  s.boxes = boxes_.size();
  for (const auto& b : boxes_) {
    s.levels = std::max(s.levels, b.level + 1);
    if (b.leaf()) {
      ++s.leaves;
      s.max_leaf_occupancy = std::max(s.max_leaf_occupancy, b.targets.size() + b.centroids.size());
    } else {
      s.tethered += b.centroids.size();
    }
  }
  return s;
}

std::size_t NearList::total() const {
  std::size_t n = 0;
  for (const auto& t : targets) n += t.size();
  return n;
}

NearList build_near_lists(const OctTree& tree, std::span<const int> owner) {
  if (!owner.empty() && owner.size() != tree.num_targets())
    throw ArgumentError("build_near_lists: owner list must match the target count");
  const auto centroids = tree.centroids();
  const auto reach = tree.reach();
  const auto pts = tree.targets();
  NearList out;
  out.targets.resize(tree.num_centroids());

  std::function<void(int, std::vector<int>&)> collect = [&](int id, std::vector<int>& acc) {
    const auto& b = tree.box(id);
    if (b.leaf()) {
      acc.insert(acc.end(), b.targets.begin(), b.targets.end());
      return;
    }
    for (int c : b.children) collect(c, acc);
  };

#pragma omp parallel for schedule(dynamic)
  for (std::size_t j = 0; j < tree.num_centroids(); ++j) {
    const auto& b = tree.box(tree.holding_box(static_cast<int>(j)));
    std::vector<int> cand;
    if (b.level == 0) {
      collect(0, cand);
    } else {
      std::vector<int> coarse;
      const std::int64_t n = std::int64_t(1) << b.level;
      for (int dx = -1; dx <= 1; ++dx)
        for (int dy = -1; dy <= 1; ++dy)
          for (int dz = -1; dz <= 1; ++dz) {
            std::int64_t a = b.ijk[0] + dx, c = b.ijk[1] + dy, e = b.ijk[2] + dz;
            if (a < 0 || c < 0 || e < 0 || a >= n || c >= n || e >= n) continue;
            // Deepest existing box covering this cell: the colleague itself,
            // or a coarser leaf.
            for (int level = b.level; level >= 0; --level, a >>= 1, c >>= 1, e >>= 1) {
              const int id = tree.find(level, static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(c),
                                       static_cast<std::uint32_t>(e));
              if (id < 0) continue;
              if (level == b.level) collect(id, cand);
              else coarse.push_back(id);
              break;
            }
          }
      std::sort(coarse.begin(), coarse.end());
      coarse.erase(std::unique(coarse.begin(), coarse.end()), coarse.end());
      for (int id : coarse) collect(id, cand);
    }
    auto& list = out.targets[j];
    for (int t : cand) {
      if (!owner.empty() && owner[t] == static_cast<int>(j)) continue;
      if ((pts[t] - centroids[j]).norm() < reach[j]) list.push_back(static_cast<std::size_t>(t));
    }
    std::sort(list.begin(), list.end());
  }
  return out;
}

}  // namespace lcq
