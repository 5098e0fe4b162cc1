#pragma once

// Layer-potential evaluation with locally corrected quadrature: precompute
// self and near corrections once, then apply to any density through a
// far-field accelerator using subtract-and-add.

#include "lcq/accel.hpp"
#include "lcq/geometry.hpp"
#include "lcq/octree.hpp"
#include "lcq/quadrature.hpp"

#include <map>
#include <string>
#include <vector>

namespace lcq {

struct EvalOptions {
  NearParams near;
  int tree_leaf_size = 40;   // near-list tree
  bool adaptive_cache = true;
};

struct CacheMetrics {
  std::size_t n = 0;           // discretization nodes
  std::size_t n_over = 0;      // sum of n_{q_j}
  std::size_t n_near = 0;      // sum of near-list sizes
  double alpha = 0.0;          // n_over / n
  double m = 0.0;              // n_p (sum N_near + n_p) / N, as printed
  double m_per_patch = 0.0;    // n_p sum (N_near + n_p) / N
  double t_init = 0.0;         // seconds
  double s_init = 0.0;         // N / t_init
  double a_max = 0.0;
  double a_avg = 0.0;
  int q_min = 0;
  int q_max = 0;
};

struct QuadCache {
  SurfaceMesh mesh;
  std::vector<KernelSpec> kernels;
  EvalOptions options;
  double eta = 0.0;

  // Targets: the mesh nodes first, then registered off-surface points.
  std::vector<Vec3> targets;
  std::vector<Vec3> target_normals;  // zero for off-surface points
  std::vector<int> owner;            // patch id, -1 off surface
  std::size_t surface_targets() const { return mesh.size(); }

  std::vector<int> far_order;
  std::vector<std::size_t> over_offset;  // per patch, into the oversampled arrays
  std::vector<Vec3> over_points;
  std::vector<Vec3> over_normals;
  std::vector<double> over_weights;
  std::map<int, MatX> interp;  // q -> n_q x n_p values-to-values map

  std::vector<SelfMatrix> self;
  std::vector<NearMatrix> near;  // per patch
  // Per target, (patch, row in near[patch]) pairs.
  std::vector<std::vector<std::pair<int, int>>> target_near;

  AdaptiveStats stats;
  CacheMetrics metrics;
  std::vector<Warning> warnings;
  double coincidence = 0.0;  // source/target pairs closer than this are skipped

  std::size_t num_targets() const { return targets.size(); }
  int kernel_index(const KernelSpec& spec) const;
};

// Builds every correction for the requested kernels in one pass. Extra
// targets are off-surface points (optionally with normals for the adjoint).
QuadCache precompute(const SurfaceMesh& mesh, const std::vector<KernelSpec>& kernels,
                     const EvalOptions& options, std::span<const Vec3> extra_targets = {},
                     std::span<const Vec3> extra_normals = {});

// Registers more off-surface targets and builds their near corrections.
// Returns the index of the first new target.
std::size_t extend_targets(QuadCache& cache, std::span<const Vec3> points,
                           std::span<const Vec3> normals = {});

struct Potential {
  VecXc values;               // one per cache target
  std::size_t surface = 0;    // the first `surface` entries are mesh nodes
  double t_lp = 0.0;          // seconds
  // Largest |spurious near contribution| / |result| seen while subtracting.
  double cancellation = 0.0;
};

// Density at the oversampled nodes times quadrature weights.
VecXc oversampled_strengths(const QuadCache& cache, const VecXc& sigma);

Potential apply(const QuadCache& cache, const VecXc& sigma, FarAccelerator& acc,
                int kernel = 0);
// Same result, with near pairs left out of the accelerator sum instead of
// subtracted afterwards. Needs an accelerator with an exclusion hook.
Potential apply_skip_near(const QuadCache& cache, const VecXc& sigma, FarAccelerator& acc,
                          int kernel = 0);

struct MetricsReport {
  CacheMetrics cache;
  double t_lp = 0.0;
  double s_lp = 0.0;
  std::string json() const;
};
MetricsReport metrics(const QuadCache& cache, double t_lp = 0.0);

// Binary dump of the corrections. Loading checks eps, eta, kernels and the
// mesh hash against the arguments and throws ValidationError on mismatch.
void save_cache(const std::string& path, const QuadCache& cache);
QuadCache load_cache(const std::string& path, const SurfaceMesh& mesh,
                     const std::vector<KernelSpec>& kernels, const EvalOptions& options);

// Potentials as CSV rows "x,y,z,Re,Im".
std::string format_potential_csv(const QuadCache& cache, const VecXc& values);

}  // namespace lcq
