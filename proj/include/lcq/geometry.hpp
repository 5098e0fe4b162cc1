#pragma once

#include "lcq/basis.hpp"
#include "lcq/types.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace lcq {

// How the patch centre c_j is formed from the chart.
//  parameter_mean:       c_j = (1/|T0|) * int_T0 X du dv   (default)
//  literal_unnormalized: c_j = int_T0 X du dv
enum class CentroidConvention { parameter_mean, literal_unnormalized };

struct Patch {
  int id = 0;
  int order = 0;
  MatX coeffs;  // n_p x 3 Koornwinder coefficients of the chart
  Vec3 centroid = Vec3::Zero();
  double radius = 0.0;
  int far_order = 0;  // set by the far-order selection, 0 until then
  double aspect = 1.0;
};

struct ChartJet {
  Vec3 X;
  Vec3 Xu;
  Vec3 Xv;
  Vec3 normal;
  double J = 0.0;
};

// Chart data at a list of parameter points (rows).
struct ChartSamples {
  MatX X;   // npts x 3
  MatX Xu;
  MatX Xv;
  MatX normal;
  VecX J;
};

struct SurfaceNode {
  Vec3 X;
  Vec3 Xu;
  Vec3 Xv;
  Vec3 normal;
  double J = 0.0;
  double weight = 0.0;  // J * w at the order-p node
};

struct SurfaceMesh {
  int order = 0;
  std::vector<Patch> patches;
  std::vector<SurfaceNode> nodes;  // patch-major, n_p per patch

  int nodes_per_patch() const { return basis_count(order); }
  std::size_t size() const { return nodes.size(); }
  int patch_of(std::size_t node) const {
    return static_cast<int>(node / nodes_per_patch());
  }
};

// Build a patch from chart samples at the order-p interpolation nodes.
Patch patch_from_samples(int p, std::span<const Vec3> pts,
                         CentroidConvention conv = CentroidConvention::parameter_mean);

ChartJet chart_eval(const Patch& patch, const UVPoint& pt);
// Batched evaluation using a precomputed order-p basis table.
ChartSamples chart_samples(const Patch& patch, const BasisTable& table);

struct CentroidRadius {
  Vec3 centroid;
  double radius = 0.0;
};
constexpr double kRadiusInflation = 0.05;
CentroidRadius centroid_radius(const Patch& patch,
                               CentroidConvention conv = CentroidConvention::parameter_mean);

double aspect_ratio(const Patch& patch);

// Assemble discretization nodes for a list of patches of common order.
SurfaceMesh assemble_mesh(std::vector<Patch> patches);

// (1/3) int X . n da; positive for outward-oriented closed surfaces.
double signed_volume(const SurfaceMesh& mesh);
double surface_area(const SurfaceMesh& mesh);

// Reparameterize (u,v) -> (v,u), reversing the normal.
Patch flip_patch(const Patch& patch);

enum class SphereBase { octahedron, icosahedron };
SurfaceMesh gen_sphere(int nrefine, int p, SphereBase base = SphereBase::octahedron,
                       double radius = 1.0);
SurfaceMesh gen_stellarator(int nu, int nv, int p);
Vec3 stellarator_point(double u, double v);

// Flat triangle mesh text ("NVERT NTRI", vertices, 1-based triangles).
struct FlatMeshImport {
  SurfaceMesh mesh;
  std::vector<std::string> warnings;
  bool closed = false;
  bool flipped = false;
};
FlatMeshImport import_flat_tri(const std::string& path, int p);
FlatMeshImport parse_flat_tri(const std::string& text, int p);

// KPATCH <Npat> <p>, then n_p lines "x y z" per patch (chart samples at the
// order-p interpolation nodes).
void save_kpatch(const std::string& path, const SurfaceMesh& mesh);
std::string format_kpatch(const SurfaceMesh& mesh);
SurfaceMesh load_kpatch(const std::string& path);
SurfaceMesh parse_kpatch(const std::string& text);

struct OversampledNode {
  Vec3 point;
  Vec3 normal;
  double weight = 0.0;  // J * w
};
std::vector<OversampledNode> oversample_patch(const Patch& patch, int q);

// Stable content hash of the chart coefficients (FNV-1a).
std::uint64_t mesh_hash(const SurfaceMesh& mesh);

}  // namespace lcq
