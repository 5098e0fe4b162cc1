#include "lcq/geometry.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>

namespace lcq {

namespace {

constexpr double kMinJacobian = 1e-14;

ChartJet jet_from(const Vec3& X, const Vec3& Xu, const Vec3& Xv) {
  ChartJet j;
  j.X = X;
  j.Xu = Xu;
  j.Xv = Xv;
  const Vec3 c = Xu.cross(Xv);
  j.J = c.norm();
  j.normal = j.J > 0.0 ? Vec3(c / j.J) : Vec3::Zero();
  return j;
}

// Sample lattice for the enclosing-radius estimate: the degree-8 barycentric
// lattice (45 points) plus a denser walk along the three edges.
std::vector<UVPoint> radius_samples() {
  std::vector<UVPoint> pts;
  const int d = 8;
  for (int i = 0; i <= d; ++i)
    for (int j = 0; i + j <= d; ++j) pts.push_back({double(i) / d, double(j) / d});
  const int e = 32;
  for (int k = 0; k < e; ++k) {
    const double t = (k + 0.5) / e;
    pts.push_back({t, 0.0});
    pts.push_back({0.0, t});
    pts.push_back({1.0 - t, t});
  }
  return pts;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ArgumentError("cannot open " + path);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw ArgumentError("cannot write " + path);
  out << text;
}

// Patch whose chart is f(u,v), sampled at the order-p nodes.
template <class F>
Patch patch_from_function(int p, F&& f) {
  const auto& nodes = RuleLibrary::instance().interp(p).nodes;
  std::vector<Vec3> pts;
  pts.reserve(nodes.size());
  for (const auto& n : nodes) pts.push_back(f(n.u, n.v));
  return patch_from_samples(p, pts);
}

}  // namespace

ChartJet chart_eval(const Patch& patch, const UVPoint& pt) {
  check_in_triangle(pt);
  const int np = basis_count(patch.order);
  std::array<double, 64 * 65 / 2> val{}, du{}, dv{};
  std::span<double> sv(val.data(), np), su(du.data(), np), sd(dv.data(), np);
  eval_koornwinder_into(patch.order, pt.u, pt.v, sv, su, sd);
  Vec3 X = Vec3::Zero(), Xu = Vec3::Zero(), Xv = Vec3::Zero();
  for (int k = 0; k < np; ++k) {
    const Vec3 c = patch.coeffs.row(k).transpose();
    X += val[k] * c;
    Xu += du[k] * c;
    Xv += dv[k] * c;
  }
  ChartJet j = jet_from(X, Xu, Xv);
  if (!(j.J >= kMinJacobian)) {
    std::ostringstream os;
    os << "degenerate chart on patch " << patch.id << " at (" << pt.u << ", "
       << pt.v << "): J = " << j.J;
    throw GeometryError(os.str());
  }
  return j;
}

ChartSamples chart_samples(const Patch& patch, const BasisTable& table) {
  ChartSamples s;
  s.X = table.values * patch.coeffs;
  s.Xu = table.du * patch.coeffs;
  s.Xv = table.dv * patch.coeffs;
  const Eigen::Index n = s.X.rows();
  s.normal.resize(n, 3);
  s.J.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Vec3 c = Vec3(s.Xu.row(i)).cross(Vec3(s.Xv.row(i)));
    s.J(i) = c.norm();
    s.normal.row(i) = (s.J(i) > 0.0 ? Vec3(c / s.J(i)) : Vec3::Zero()).transpose();
  }
  return s;
}

CentroidRadius centroid_radius(const Patch& patch, CentroidConvention conv) {
  // int_T0 K_nm = delta_{n0} delta_{m0} / sqrt(2), so the integral of the
  // chart reads off the constant coefficient exactly.
  const Vec3 integral = patch.coeffs.row(0).transpose() * koornwinder_moment(0, 0);
  CentroidRadius cr;
  cr.centroid = conv == CentroidConvention::parameter_mean ? Vec3(2.0 * integral)
                                                           : integral;
  static const std::vector<UVPoint> samples = radius_samples();
  const MatX X = tabulate(patch.order, samples, false).values * patch.coeffs;
  double rmax = 0.0;
  for (Eigen::Index i = 0; i < X.rows(); ++i)
    rmax = std::max(rmax, (Vec3(X.row(i)) - cr.centroid).norm());
  cr.radius = (1.0 + kRadiusInflation) * rmax;
  return cr;
}

double aspect_ratio(const Patch& patch) {
  const InterpNodeSet& ns = RuleLibrary::instance().interp(patch.order);
  const ChartSamples s = chart_samples(patch, RuleLibrary::instance().node_table(patch.order));
  double num = 0.0, den = 0.0;
  for (Eigen::Index i = 0; i < s.X.rows(); ++i) {
    const Vec3 xu = s.Xu.row(i), xv = s.Xv.row(i);
    const double E = xu.dot(xu), F = xu.dot(xv), G = xv.dot(xv);
    const double mid = 0.5 * (E + G);
    const double rad = std::hypot(0.5 * (E - G), F);
    const double s1 = mid + rad, s2 = mid - rad;
    if (!(s2 > 0.0)) {
      throw GeometryError("degenerate first fundamental form on patch " +
                          std::to_string(patch.id));
    }
    const double ratio = s1 / s2;
    const double da = ns.weights[i] * s.J(i);
    num += ratio * ratio * da;
    den += da;
  }
  return std::sqrt(num / den);
}

Patch patch_from_samples(int p, std::span<const Vec3> pts, CentroidConvention conv) {
  if (p < 1) throw ArgumentError("patch order must be >= 1");
  const int np = basis_count(p);
  if (static_cast<int>(pts.size()) != np) {
    throw ArgumentError("patch_from_samples: expected " + std::to_string(np) +
                        " samples, got " + std::to_string(pts.size()));
  }
  const InterpNodeSet& ns = RuleLibrary::instance().interp(p);
  MatX vals(np, 3);
  for (int i = 0; i < np; ++i) vals.row(i) = pts[i].transpose();
  Patch patch;
  patch.order = p;
  patch.coeffs = ns.matrixV * vals;

  const ChartSamples s = chart_samples(patch, RuleLibrary::instance().node_table(p));
  for (int i = 0; i < np; ++i) {
    if (!(s.J(i) > kMinJacobian)) {
      std::ostringstream os;
      os << "degenerate chart: J = " << s.J(i) << " at node " << i;
      throw GeometryError(os.str());
    }
  }
  const CentroidRadius cr = centroid_radius(patch, conv);
  patch.centroid = cr.centroid;
  patch.radius = cr.radius;
  patch.aspect = aspect_ratio(patch);
  return patch;
}

SurfaceMesh assemble_mesh(std::vector<Patch> patches) {
  SurfaceMesh mesh;
  if (patches.empty()) return mesh;
  mesh.order = patches.front().order;
  const InterpNodeSet& ns = RuleLibrary::instance().interp(mesh.order);
  const BasisTable& table = RuleLibrary::instance().node_table(mesh.order);
  const int np = basis_count(mesh.order);
  mesh.nodes.reserve(patches.size() * np);
  for (std::size_t j = 0; j < patches.size(); ++j) {
    Patch& patch = patches[j];
    if (patch.order != mesh.order)
      throw ValidationError("all patches in a mesh must share one order");
    patch.id = static_cast<int>(j);
    const ChartSamples s = chart_samples(patch, table);
    for (int i = 0; i < np; ++i) {
      SurfaceNode n;
      n.X = s.X.row(i);
      n.Xu = s.Xu.row(i);
      n.Xv = s.Xv.row(i);
      n.normal = s.normal.row(i);
      n.J = s.J(i);
      n.weight = n.J * ns.weights[i];
      mesh.nodes.push_back(n);
    }
  }
  mesh.patches = std::move(patches);
  return mesh;
}

double signed_volume(const SurfaceMesh& mesh) {
  double v = 0.0;
  for (const auto& n : mesh.nodes) v += n.X.dot(n.normal) * n.weight;
  return v / 3.0;
}

double surface_area(const SurfaceMesh& mesh) {
  double a = 0.0;
  for (const auto& n : mesh.nodes) a += n.weight;
  return a;
}

Patch flip_patch(const Patch& patch) {
  const auto& nodes = RuleLibrary::instance().interp(patch.order).nodes;
  std::vector<Vec3> pts;
  pts.reserve(nodes.size());
  const int np = basis_count(patch.order);
  std::vector<double> val(np);
  for (const auto& n : nodes) {
    eval_koornwinder_into(patch.order, n.v, n.u, val);
    pts.push_back(patch.coeffs.transpose() * Eigen::Map<const VecX>(val.data(), np));
  }
  Patch out = patch_from_samples(patch.order, pts);
  out.id = patch.id;
  out.far_order = patch.far_order;
  return out;
}

namespace {

struct FlatTri {
  Vec3 a, b, c;
};

std::vector<FlatTri> sphere_base(SphereBase base) {
  std::vector<Vec3> v;
  std::vector<std::array<int, 3>> faces;
  if (base == SphereBase::octahedron) {
    v = {Vec3(1, 0, 0), Vec3(-1, 0, 0), Vec3(0, 1, 0),
         Vec3(0, -1, 0), Vec3(0, 0, 1), Vec3(0, 0, -1)};
    for (int x : {0, 1})
      for (int y : {2, 3})
        for (int z : {4, 5}) faces.push_back({x, y, z});
  } else {
    const double phi = 0.5 * (1.0 + std::sqrt(5.0));
    for (double s1 : {-1.0, 1.0})
      for (double s2 : {-1.0, 1.0}) {
        v.push_back(Vec3(0, s1, s2 * phi));
        v.push_back(Vec3(s1, s2 * phi, 0));
        v.push_back(Vec3(s2 * phi, 0, s1));
      }
    // Faces are the triples of mutually adjacent vertices (edge length 2).
    const int n = static_cast<int>(v.size());
    auto adj = [&](int i, int j) { return std::abs((v[i] - v[j]).norm() - 2.0) < 1e-9; };
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j)
        for (int k = j + 1; k < n; ++k)
          if (adj(i, j) && adj(j, k) && adj(i, k)) faces.push_back({i, j, k});
  }
  std::vector<FlatTri> out;
  for (auto f : faces) {
    FlatTri t{v[f[0]], v[f[1]], v[f[2]]};
    if ((t.b - t.a).cross(t.c - t.a).dot(t.a + t.b + t.c) < 0.0) std::swap(t.b, t.c);
    out.push_back(t);
  }
  return out;
}

}  // namespace

SurfaceMesh gen_sphere(int nrefine, int p, SphereBase base, double radius) {
  if (nrefine < 0) throw ArgumentError("nrefine must be >= 0");
  if (!(radius > 0.0)) throw ArgumentError("sphere radius must be positive");
  const int n = 1 << nrefine;
  std::vector<Patch> patches;
  for (const FlatTri& f : sphere_base(base)) {
    auto P = [&](int i, int j) -> Vec3 {
      return (f.a + (double(i) / n) * (f.b - f.a) + (double(j) / n) * (f.c - f.a))
          .normalized();
    };
    auto add = [&](const Vec3& a, const Vec3& b, const Vec3& c) {
      patches.push_back(patch_from_function(p, [&](double u, double v) {
        return Vec3(radius * (a + u * (b - a) + v * (c - a)).normalized());
      }));
    };
    for (int i = 0; i < n; ++i)
      for (int j = 0; i + j < n; ++j) {
        add(P(i, j), P(i + 1, j), P(i, j + 1));
        if (i + j < n - 1) add(P(i + 1, j), P(i + 1, j + 1), P(i, j + 1));
      }
  }
  return assemble_mesh(std::move(patches));
}

Vec3 stellarator_point(double u, double v) {
  struct Term {
    int i, j;
    double d;
  };
  static constexpr Term terms[] = {{-1, -1, 0.17}, {-1, 0, 0.11}, {0, 0, 1.0},
                                   {1, 0, 4.5},    {2, 0, -0.25}, {0, 1, 0.07},
                                   {2, 1, -0.45}};
  Vec3 x = Vec3::Zero();
  for (const auto& t : terms) {
    const double phase = (1 - t.i) * u + t.j * v;
    x += t.d * Vec3(std::cos(v) * std::cos(phase), std::sin(v) * std::cos(phase),
                    std::sin(phase));
  }
  return x;
}

SurfaceMesh gen_stellarator(int nu, int nv, int p) {
  if (nu < 1 || nv < 1) throw ArgumentError("stellarator patch counts must be >= 1");
  const double hu = 2.0 * kPi / nu, hv = 2.0 * kPi / nv;
  auto build = [&](bool swap) {
    std::vector<Patch> patches;
    for (int a = 0; a < nu; ++a)
      for (int b = 0; b < nv; ++b) {
        using P2 = std::array<double, 2>;
        const P2 p00{a * hu, b * hv}, p10{(a + 1) * hu, b * hv},
            p11{(a + 1) * hu, (b + 1) * hv}, p01{a * hu, (b + 1) * hv};
        for (auto tri : {std::array<P2, 3>{p00, p10, p11}, std::array<P2, 3>{p00, p11, p01}}) {
          if (swap) std::swap(tri[1], tri[2]);
          patches.push_back(patch_from_function(p, [&](double s, double t) {
            const double U = tri[0][0] + s * (tri[1][0] - tri[0][0]) + t * (tri[2][0] - tri[0][0]);
            const double V = tri[0][1] + s * (tri[1][1] - tri[0][1]) + t * (tri[2][1] - tri[0][1]);
            return stellarator_point(U, V);
          }));
        }
      }
    return assemble_mesh(std::move(patches));
  };
  SurfaceMesh mesh = build(false);
  if (signed_volume(mesh) < 0.0) mesh = build(true);
  return mesh;
}

FlatMeshImport parse_flat_tri(const std::string& text, int p) {
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  auto next = [&]() -> std::istringstream {
    while (std::getline(in, line)) {
      ++lineno;
      const auto first = line.find_first_not_of(" \t\r");
      if (first == std::string::npos || line[first] == '#') continue;
      return std::istringstream(line);
    }
    throw ParseError("unexpected end of file", lineno + 1);
  };
  long nvert = 0, ntri = 0;
  {
    auto ls = next();
    if (!(ls >> nvert >> ntri) || nvert < 3 || ntri < 1)
      throw ParseError("expected 'NVERT NTRI'", lineno);
  }
  std::vector<Vec3> verts(nvert);
  for (long i = 0; i < nvert; ++i) {
    auto ls = next();
    if (!(ls >> verts[i].x() >> verts[i].y() >> verts[i].z()))
      throw ParseError("expected 'x y z'", lineno);
  }
  std::vector<std::array<long, 3>> tris(ntri);
  for (long t = 0; t < ntri; ++t) {
    auto ls = next();
    auto& tri = tris[t];
    if (!(ls >> tri[0] >> tri[1] >> tri[2])) throw ParseError("expected 'i j k'", lineno);
    for (auto& idx : tri) {
      if (idx < 1 || idx > nvert)
        throw ParseError("vertex index " + std::to_string(idx) + " out of range", lineno);
      --idx;
    }
  }

  FlatMeshImport out;
  std::vector<bool> used(nvert, false);
  std::map<std::pair<long, long>, int> edge_count;
  for (long t = 0; t < ntri; ++t) {
    const auto& tri = tris[t];
    const Vec3 &a = verts[tri[0]], &b = verts[tri[1]], &c = verts[tri[2]];
    const double scale =
        std::max({(b - a).squaredNorm(), (c - a).squaredNorm(), (c - b).squaredNorm()});
    if (!((b - a).cross(c - a).norm() > 1e-12 * scale) || scale == 0.0) {
      throw GeometryError("degenerate triangle " + std::to_string(t + 1));
    }
    for (int e = 0; e < 3; ++e) {
      used[tri[e]] = true;
      long i = tri[e], j = tri[(e + 1) % 3];
      edge_count[{std::min(i, j), std::max(i, j)}]++;
    }
  }
  long unused = std::count(used.begin(), used.end(), false);
  if (unused > 0)
    out.warnings.push_back(std::to_string(unused) + " unreferenced vertices ignored");
  out.closed = std::all_of(edge_count.begin(), edge_count.end(),
                           [](const auto& kv) { return kv.second == 2; });

  auto build = [&](bool swap) {
    std::vector<Patch> patches;
    for (const auto& tri : tris) {
      const Vec3 a = verts[tri[0]];
      const Vec3 b = verts[swap ? tri[2] : tri[1]];
      const Vec3 c = verts[swap ? tri[1] : tri[2]];
      patches.push_back(patch_from_function(
          p, [&](double u, double v) { return Vec3(a + u * (b - a) + v * (c - a)); }));
    }
    return assemble_mesh(std::move(patches));
  };
  out.mesh = build(false);
  if (out.closed && signed_volume(out.mesh) < 0.0) {
    out.mesh = build(true);
    out.flipped = true;
    out.warnings.push_back("triangle orientation reversed to make normals outward");
  }
  return out;
}

FlatMeshImport import_flat_tri(const std::string& path, int p) {
  return parse_flat_tri(read_file(path), p);
}

std::string format_kpatch(const SurfaceMesh& mesh) {
  std::ostringstream os;
  os << "KPATCH " << mesh.patches.size() << ' ' << mesh.order << '\n';
  os << std::setprecision(17);
  for (const auto& node : mesh.nodes) {
    const Vec3& x = node.X;
    os << x.x() << ' ' << x.y() << ' ' << x.z() << '\n';
  }
  return os.str();
}

void save_kpatch(const std::string& path, const SurfaceMesh& mesh) {
  write_file(path, format_kpatch(mesh));
}

SurfaceMesh parse_kpatch(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  auto next = [&]() -> std::istringstream {
    while (std::getline(in, line)) {
      ++lineno;
      const auto first = line.find_first_not_of(" \t\r");
      if (first == std::string::npos || line[first] == '#') continue;
      return std::istringstream(line);
    }
    throw ParseError("unexpected end of file", lineno + 1);
  };
  std::string tag;
  long npat = 0;
  int p = 0;
  {
    auto ls = next();
    if (!(ls >> tag >> npat >> p) || tag != "KPATCH" || npat < 0 || p < 1)
      throw ParseError("expected 'KPATCH <Npat> <p>'", lineno);
  }
  const int np = basis_count(p);
  std::vector<Patch> patches;
  std::vector<Vec3> pts(np);
  for (long j = 0; j < npat; ++j) {
    for (int i = 0; i < np; ++i) {
      auto ls = next();
      if (!(ls >> pts[i].x() >> pts[i].y() >> pts[i].z()))
        throw ParseError("expected 'x y z'", lineno);
    }
    patches.push_back(patch_from_samples(p, pts));
  }
  return assemble_mesh(std::move(patches));
}

SurfaceMesh load_kpatch(const std::string& path) { return parse_kpatch(read_file(path)); }

std::vector<OversampledNode> oversample_patch(const Patch& patch, int q) {
  auto& lib = RuleLibrary::instance();
  const QuadratureRule& rule = lib.rule(q);
  const ChartSamples s = chart_samples(patch, lib.table(q, patch.order));
  std::vector<OversampledNode> out(rule.nodes.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (!(s.J(i) > kMinJacobian))
      throw GeometryError("degenerate chart on patch " + std::to_string(patch.id));
    out[i].point = s.X.row(i);
    out[i].normal = s.normal.row(i);
    out[i].weight = rule.weights[i] * s.J(i);
  }
  return out;
}

std::uint64_t mesh_hash(const SurfaceMesh& mesh) {
  std::uint64_t h = 14695981039346656037ull;
  auto mix = [&](const void* data, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 1099511628211ull;
    }
  };
  const std::int64_t header[2] = {mesh.order, static_cast<std::int64_t>(mesh.patches.size())};
  mix(header, sizeof header);
  for (const auto& p : mesh.patches) mix(p.coeffs.data(), sizeof(double) * p.coeffs.size());
  return h;
}

}  // namespace lcq
