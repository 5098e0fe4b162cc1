#pragma once

// GMRES, second-kind layer-potential solves (the exterior Dirichlet CFIE in
// particular) and the Green's identity check.

#include "lcq/eval.hpp"

#include <functional>
#include <string>
#include <vector>

namespace lcq {

struct LinearOperator {
  std::size_t dim = 0;
  std::function<VecXc(const VecXc&)> apply;
};

struct GmresResult {
  VecXc x;
  std::vector<double> residuals;  // relative residual after each iteration, [0] = 1
  int iterations = 0;
  bool converged = false;
};

// Unrestarted GMRES with modified Gram-Schmidt, starting from x = 0. Stops
// when the relative residual drops to tol or after maxit iterations.
GmresResult gmres(const LinearOperator& op, const VecXc& rhs, double tol, int maxit);

struct SolveOptions {
  EvalOptions eval;
  double tol = 0.0;  // 0 uses eval.near.eps
  int maxit = 200;
};

// Density of a second-kind equation (c I + K) sigma = f, with the cache it
// was solved on. Off-surface values use the same cache.
struct LayerSolution {
  VecXc sigma;
  GmresResult gmres;
  QuadCache cache;
  double t_precompute = 0.0;
  double t_solve = 0.0;
  double t_apply = 0.0;  // mean time of one operator application

  // K[sigma] at new points (registered on the cache on first use).
  VecXc evaluate(std::span<const Vec3> points, FarAccelerator& acc);
  std::string json() const;
};

LayerSolution solve_layer(const SurfaceMesh& mesh, const KernelSpec& kernel, cplx identity,
                          const VecXc& f, const SolveOptions& opt, FarAccelerator& acc);

// sigma/2 + D_k[sigma] - ik S_k[sigma] = f; u = D_k[sigma] - ik S_k[sigma] outside.
LayerSolution solve_dirichlet_cfie(const SurfaceMesh& mesh, cplx k, const VecXc& f,
                                   const SolveOptions& opt, FarAccelerator& acc);

// Point sources for manufactured solutions: n seeded random directions from
// the node centroid, at `scale` times the smallest node distance (interior)
// or the largest one (exterior).
struct PointSources {
  std::vector<Vec3> points;
  std::vector<cplx> strengths;
};
PointSources manufactured_sources(const SurfaceMesh& mesh, bool interior, int n = 6,
                                  unsigned seed = 1, double scale = 0.0);

// Field of the sources and its normal derivative.
cplx point_field(cplx k, const PointSources& src, const Vec3& x);
cplx point_field_normal(cplx k, const PointSources& src, const Vec3& x, const Vec3& n);

struct GreensIdentityResult {
  double eps_g = 0.0;
  std::size_t n = 0;
  double h = 0.0;  // largest patch radius
  CacheMetrics metrics;
};

// Relative L2 error (J w weights) of u/2 - S_k[du/dn] + D_k[u] on the nodes,
// for the field of exterior point sources.
GreensIdentityResult greens_identity_error(const SurfaceMesh& mesh, cplx k, const PointSources& src,
                                           const EvalOptions& opt, FarAccelerator& acc);

// Weighted L2 norm over the mesh nodes.
double surface_l2(const SurfaceMesh& mesh, const VecXc& v);

}  // namespace lcq
