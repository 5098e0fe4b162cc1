#pragma once

// Locally corrected quadrature for one patch: far-field order selection,
// self interaction matrices and near-field correction matrices.
//
// Every matrix maps the n_p density values at a patch's interpolation nodes
// to potentials. Rows are a(x)^T = I(x)^T V, where I(x) holds the moments
// int_T0 K(x, X(u,v)) K_nm(u,v) J(u,v) du dv.

#include "lcq/geometry.hpp"
#include "lcq/kernels.hpp"

#include <cstdint>
#include <memory>
#include <span>
#include <unordered_map>
#include <vector>

namespace lcq {

// Near-field ball multiplier recommended for order p.
double default_eta(int p);

struct NearParams {
  double eps = 1e-6;
  double eta = 0.0;  // 0 selects default_eta(p)
  double eta1 = 1.25;
  int max_levels = 30;
  double adaptive_inflation = 5.0;

  double eta_for(int p) const { return eta > 0.0 ? eta : default_eta(p); }
  // Throws ArgumentError unless eps > 0 and eta >= eta1 >= 1.
  void validate(int p) const;
};

// min over the order-p nodes of sqrt(J w).
double patch_dscale(const Patch& patch);

// Target data shared by the near-field routines, indexed by global target id.
// normals may be empty, or hold a zero vector for targets without a normal.
struct TargetView {
  std::span<const Vec3> points;
  std::span<const Vec3> normals;
  Vec3 normal(std::size_t i) const {
    return normals.empty() ? Vec3::Zero() : normals[i];
  }
};

struct FarOrderReport {
  int q = 0;
  double d = 0.0;
  std::vector<Vec3> probes;
  bool capped = false;
  double tolerance = 0.0;
  double last_difference = 0.0;
};

// 15 spherical Fibonacci points on the sphere of radius r about c.
std::vector<Vec3> fibonacci_sphere(const Vec3& c, double r, int n = 15);

// Probe set: the 10 farthest near targets, or when fewer than 20 are present
// the floor(n/2) farthest plus 15 points on the sphere of radius eta R_j.
std::vector<Vec3> far_order_probes(const Patch& patch, std::span<const Vec3> near_targets,
                                   double eta);

FarOrderReport select_far_order(const Patch& patch, std::span<const Vec3> near_targets,
                                std::span<const KernelSpec> specs, const NearParams& params,
                                double normV);

// Moment vectors with a fixed order-q rule (no adaptivity), one row per target.
MatXc moments_fixed_order(const Patch& patch, int q, std::span<const Vec3> points,
                          std::span<const Vec3> normals, const KernelSpec& spec);

struct SelfMatrix {
  int patch = 0;
  std::vector<MatXc> S;  // per kernel, n_p x n_p
  int max_gauss = 0;     // largest 1-D Gauss size needed
};

SelfMatrix self_matrix(const Patch& patch, std::span<const KernelSpec> specs,
                       const NearParams& params, double normV);

// Moments of the self integral at one on-patch target (u0, v0), tensor Gauss
// size n per direction on each Duffy-mapped piece.
std::vector<VecXc> self_moments(const Patch& patch, const UVPoint& target,
                                std::span<const KernelSpec> specs, int n);

struct AdaptiveStats {
  std::uint64_t fresh_node_evals = 0;  // chart + basis evaluations performed
  std::uint64_t saved_node_evals = 0;  // evaluations served from the cache
  std::uint64_t triangles = 0;
  std::uint64_t adaptive_targets = 0;
  std::uint64_t oversampled_targets = 0;
  std::uint64_t depth_cap_hits = 0;
  int max_level = 0;
  double max_accept_ratio = 0.0;  // accepted test value / threshold

  AdaptiveStats& operator+=(const AdaptiveStats& o);
};

// Per-patch store of chart and basis data on adaptively generated triangles,
// keyed by the triangle's path from T0 (a sentinel bit followed by two bits
// per level).
class AdaptiveCache {
 public:
  explicit AdaptiveCache(bool enabled = true) : enabled_(enabled) {}

  struct TriData {
    MatX points;   // n x 3
    MatX normals;  // n x 3
    MatX wbasis;   // n x n_p: w * |T|/|T0| * J * K_nm
  };

  bool enabled() const { return enabled_; }
  // Cached data for a path, or nullptr.
  const TriData* find(std::uint64_t path) const;
  const TriData* insert(std::uint64_t path, TriData data);
  void clear() { store_.clear(); }
  std::size_t size() const { return store_.size(); }

 private:
  bool enabled_;
  std::unordered_map<std::uint64_t, std::unique_ptr<TriData>> store_;
};

struct NearMatrix {
  int patch = 0;
  std::vector<std::size_t> targets;
  std::vector<MatXc> A;  // per kernel, targets.size() x n_p
};

// Near corrections for the listed targets of one patch. far_q is the
// patch's far order, also used as the rule order on adaptive triangles.
NearMatrix near_matrix(const Patch& patch, int far_q, std::span<const std::size_t> target_ids,
                       const TargetView& targets, std::span<const KernelSpec> specs,
                       const NearParams& params, double normV, AdaptiveCache& cache,
                       AdaptiveStats& stats, std::vector<Warning>* warnings = nullptr);

// Adaptive moments at a single target, exposed for tests.
std::vector<VecXc> adaptive_moments(const Patch& patch, int q, const Vec3& x, const Vec3& nx,
                                    std::span<const KernelSpec> specs, const NearParams& params,
                                    double normV, AdaptiveCache& cache, AdaptiveStats& stats,
                                    std::vector<Warning>* warnings = nullptr);

}  // namespace lcq
