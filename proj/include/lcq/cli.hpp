#pragma once

// Batch drivers behind the `lcq` executable.

#include "lcq/solver.hpp"

#include <iosfwd>
#include <string>
#include <vector>

namespace lcq {

struct MeshSource {
  std::string shape = "sphere";  // sphere | icosphere | stellarator | file
  int refine = 0;
  int order = 4;
  int nu = 3, nv = 9;    // stellarator patch grid
  double radius = 1.0;
  std::string file;      // KPATCH, or a flat triangle mesh with --shape file
};

SurfaceMesh load_mesh(const MeshSource& src, std::vector<std::string>* warnings = nullptr);

// A square n x n lattice in the plane {x[normal] = offset}, centred on the
// origin with half-width `extent`.
struct SliceSpec {
  int normal = 2;
  double offset = 0.0;
  int n = 21;
  double extent = 1.5;
};
// Parses "normal=z offset=0 n=101 extent=2" tokens. Throws ArgumentError.
SliceSpec parse_slice(const std::vector<std::string>& tokens);
std::vector<Vec3> slice_points(const SliceSpec& s);

// Rows "x y z" (commas or whitespace); '#' starts a comment.
std::vector<Vec3> load_points(const std::string& path);

KernelSpec parse_kernel(const std::string& name, cplx k, cplx beta_d = 1.0, cplx beta_s = 0.0);

struct ConvergenceRow {
  int p = 0;
  int refine = 0;
  std::size_t n = 0;
  double h = 0.0;
  double error = 0.0;
  double order = 0.0;  // against the previous row with the same p; NaN on the first
};

// Green's identity (eps_g) or CFIE exterior (eps_a) errors over a refinement
// sequence of the sphere.
std::vector<ConvergenceRow> convergence_study(const std::string& test, const std::vector<int>& orders,
                                              const std::vector<int>& refines, double eps, cplx k,
                                              unsigned seed, FarAccelerator& acc);
std::string format_convergence_csv(const std::vector<ConvergenceRow>& rows);
// Least-squares slope of log error against log h.
double fitted_order(const std::vector<ConvergenceRow>& rows);

// Entry point. Returns the process exit code: 0 on success, 2 for bad
// arguments, 1 for numerical failures (with a JSON report on `err`).
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace lcq
