#include "lcq/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <fstream>
#include <iostream>
#include <limits>
#include <random>
#include <sstream>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace lcq {

namespace {

using nlohmann::json;

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ArgumentError("cannot open " + path);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write_text(const std::string& path, const std::string& text, std::ostream& fallback) {
  if (path.empty() || path == "-") {
    fallback << text;
    return;
  }
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ArgumentError("cannot write " + path);
  os << text;
}

std::string points_csv(std::span<const Vec3> pts, const VecXc& v) {
  std::ostringstream os;
  os.precision(17);
  os << "x,y,z,Re,Im\n";
  for (std::size_t i = 0; i < pts.size(); ++i)
    os << pts[i].x() << ',' << pts[i].y() << ',' << pts[i].z() << ',' << v(i).real() << ','
       << v(i).imag() << '\n';
  return os.str();
}

json warnings_json(const std::vector<Warning>& w) {
  json a = json::array();
  for (const auto& x : w) a.push_back({{"stage", x.stage}, {"message", x.message}});
  return a;
}

json cplx_json(cplx z) { return json::array({z.real(), z.imag()}); }

const char* error_kind(const std::exception& e) {
  if (dynamic_cast<const DomainError*>(&e)) return "DomainError";
  if (dynamic_cast<const GeometryError*>(&e)) return "GeometryError";
  if (dynamic_cast<const QuadratureError*>(&e)) return "QuadratureError";
  if (dynamic_cast<const ParseError*>(&e)) return "ParseError";
  if (dynamic_cast<const ValidationError*>(&e)) return "ValidationError";
  if (dynamic_cast<const ArgumentError*>(&e)) return "ArgumentError";
  if (dynamic_cast<const UnsupportedError*>(&e)) return "UnsupportedError";
  if (dynamic_cast<const InternalError*>(&e)) return "InternalError";
  return "Error";
}

// Everything any subcommand may read; each subcommand registers the flags it uses.
struct RunConfig {
  MeshSource mesh;
  double eps = 1e-6;
  double eta = 0.0;
  double eta1 = 1.25;
  std::string kernel = "single";
  double k = 0.0;
  double k_imag = 0.0;
  double beta_d = 1.0;
  std::string beta_s;  // "re,im"; default -ik for the combined field
  std::string targets_file;
  std::vector<std::string> slice;
  std::string accel = "direct";
  double fmm_eps = 0.0;
  std::string out, json_out, cache_in, cache_out, sigma_out;
  std::string density = "one";
  std::string density_file;
  int sources = 6;
  int maxit = 200;
  double tol = 0.0;
  std::vector<int> orders = {3, 4};
  std::vector<int> refines = {0, 1, 2};
  std::string test = "greens";
  int threads = 0;
  unsigned seed = 1;

  cplx wavenumber() const { return {k, k_imag}; }
  EvalOptions eval_options() const {
    EvalOptions o;
    o.near.eps = eps;
    o.near.eta = eta;
    o.near.eta1 = eta1;
    return o;
  }
  std::unique_ptr<FarAccelerator> accelerator() const {
    if (accel == "direct") return direct_accelerator();
    if (accel == "treecode") return treecode_accelerator(fmm_eps > 0 ? fmm_eps : eps);
    throw ArgumentError("unknown accelerator '" + accel + "' (direct | treecode)");
  }
  KernelSpec kernel_spec() const {
    cplx bs = cplx(0, -1) * wavenumber();
    if (!beta_s.empty()) {
      double re = 0, im = 0;
      char comma = 0;
      std::istringstream is(beta_s);
      is >> re;
      if (is >> comma) is >> im;
      bs = {re, im};
    }
    return parse_kernel(kernel, wavenumber(), beta_d, bs);
  }
  std::vector<Vec3> target_points() const {
    std::vector<Vec3> t;
    if (!targets_file.empty()) t = load_points(targets_file);
    if (!slice.empty()) {
      const auto s = slice_points(parse_slice(slice));
      t.insert(t.end(), s.begin(), s.end());
    }
    return t;
  }
};

void add_mesh_flags(CLI::App* c, RunConfig& cfg) {
  c->add_option("--shape", cfg.mesh.shape, "sphere | icosphere | stellarator | file")
      ->check(CLI::IsMember({"sphere", "icosphere", "stellarator", "file"}));
  c->add_option("--refine", cfg.mesh.refine, "sphere refinement level")->check(CLI::Range(0, 8));
  c->add_option("--order,-p", cfg.mesh.order, "patch order p")->check(CLI::Range(1, 20));
  c->add_option("--nu", cfg.mesh.nu, "stellarator patches in u")->check(CLI::PositiveNumber);
  c->add_option("--nv", cfg.mesh.nv, "stellarator patches in v")->check(CLI::PositiveNumber);
  c->add_option("--radius", cfg.mesh.radius, "sphere radius")->check(CLI::PositiveNumber);
  c->add_option("--mesh", cfg.mesh.file, "KPATCH file (any shape) or flat mesh (--shape file)");
}

void add_eval_flags(CLI::App* c, RunConfig& cfg) {
  c->add_option("--eps", cfg.eps, "quadrature tolerance")->check(CLI::PositiveNumber);
  c->add_option("--eta", cfg.eta, "near-field radius factor (default from p)");
  c->add_option("--eta1", cfg.eta1, "inner shell factor");
  c->add_option("--accel", cfg.accel, "far-field evaluator")->check(CLI::IsMember({"direct", "treecode"}));
  c->add_option("--fmm-eps", cfg.fmm_eps, "treecode tolerance (default eps)");
}

void add_kernel_flags(CLI::App* c, RunConfig& cfg) {
  c->add_option("--kernel", cfg.kernel, "single | double | adjoint | combined")
      ->check(CLI::IsMember({"single", "double", "adjoint", "combined"}));
  c->add_option("--k", cfg.k, "wavenumber (real part)");
  c->add_option("--k-imag", cfg.k_imag, "wavenumber (imaginary part)");
  c->add_option("--beta-d", cfg.beta_d, "combined field: double-layer weight");
  c->add_option("--beta-s", cfg.beta_s, "combined field: single-layer weight 're,im' (default -ik)");
}

void add_target_flags(CLI::App* c, RunConfig& cfg) {
  c->add_option("--targets", cfg.targets_file, "file of off-surface points");
  c->add_option("--slice", cfg.slice, "lattice: normal=z offset=0 n=21 extent=1.5")->expected(1, 4);
}

json mesh_summary(const SurfaceMesh& mesh) {
  double a_max = 0, a_sum = 0, h = 0;
  for (const auto& p : mesh.patches) {
    a_max = std::max(a_max, p.aspect);
    a_sum += p.aspect;
    h = std::max(h, p.radius);
  }
  std::ostringstream hash;
  hash << std::hex << mesh_hash(mesh);
  return {{"patches", mesh.patches.size()},
          {"nodes", mesh.size()},
          {"order", mesh.order},
          {"area", surface_area(mesh)},
          {"volume", signed_volume(mesh)},
          {"h", h},
          {"a_max", a_max},
          {"a_avg", mesh.patches.empty() ? 0.0 : a_sum / mesh.patches.size()},
          {"hash", hash.str()}};
}

VecXc make_density(const RunConfig& cfg, const SurfaceMesh& mesh) {
  VecXc s(mesh.size());
  if (!cfg.density_file.empty()) {
    std::istringstream is(read_file(cfg.density_file));
    std::string line;
    std::size_t i = 0;
    while (std::getline(is, line)) {
      if (line.empty() || line[0] == '#') continue;
      for (char& ch : line)
        if (ch == ',') ch = ' ';
      std::istringstream ls(line);
      double re = 0, im = 0;
      if (!(ls >> re)) throw ArgumentError("bad density value: " + line);
      ls >> im;
      if (i >= mesh.size()) throw ArgumentError("density file has more values than nodes");
      s(i++) = {re, im};
    }
    if (i != mesh.size()) throw ArgumentError("density file has fewer values than nodes");
    return s;
  }
  if (cfg.density == "one") return VecXc::Ones(mesh.size());
  if (cfg.density == "smooth") {
    for (std::size_t i = 0; i < mesh.size(); ++i) {
      const Vec3& x = mesh.nodes[i].X;
      s(i) = cplx(1.0 + x.x() * x.y(), 0.5 * x.z());
    }
    return s;
  }
  std::mt19937 rng(cfg.seed);
  std::uniform_real_distribution<double> U(-1, 1);
  for (auto& v : s) v = cplx(U(rng), U(rng));
  return s;
}

// Exterior probe points for the CFIE check, outside the bounding sphere.
std::vector<Vec3> exterior_probes(const SurfaceMesh& mesh) {
  Vec3 c = Vec3::Zero();
  for (const auto& n : mesh.nodes) c += n.X;
  c /= double(mesh.nodes.size());
  double r = 0;
  for (const auto& n : mesh.nodes) r = std::max(r, (n.X - c).norm());
  const std::vector<Vec3> dirs = {Vec3(1, 0, 0), Vec3(0, -1, 0), Vec3(0, 0, 1),
                                  Vec3(1, 1, 1).normalized(), Vec3(-1, 0.5, -0.3).normalized(),
                                  Vec3(0.2, -0.7, -1).normalized()};
  std::vector<Vec3> pts;
  for (std::size_t i = 0; i < dirs.size(); ++i) pts.push_back(c + r * (1.5 + 0.25 * double(i)) * dirs[i]);
  return pts;
}

struct CfieRun {
  LayerSolution sol;
  std::vector<Vec3> probes;
  VecXc u, exact;
  double eps_a = 0.0;
};

CfieRun run_cfie(const SurfaceMesh& mesh, cplx k, const PointSources& src, const SolveOptions& opt,
                 FarAccelerator& acc, std::vector<Vec3> probes) {
  VecXc f(mesh.size());
  for (std::size_t i = 0; i < mesh.size(); ++i) f(i) = point_field(k, src, mesh.nodes[i].X);
  CfieRun r{solve_dirichlet_cfie(mesh, k, f, opt, acc), std::move(probes), {}, {}, 0.0};
  r.u = r.sol.evaluate(r.probes, acc);
  r.exact.resize(r.probes.size());
  double num = 0, den = 0;
  for (std::size_t i = 0; i < r.probes.size(); ++i) {
    r.exact(i) = point_field(k, src, r.probes[i]);
    num = std::max(num, std::abs(r.u(i) - r.exact(i)));
    den = std::max(den, std::abs(r.exact(i)));
  }
  r.eps_a = num / den;
  return r;
}

void set_threads(int n) {
#ifdef _OPENMP
  if (n > 0) omp_set_num_threads(n);
#else
  (void)n;
#endif
}

int cmd_geom(const RunConfig& cfg, std::ostream& out) {
  std::vector<std::string> warnings;
  const SurfaceMesh mesh = load_mesh(cfg.mesh, &warnings);
  if (!cfg.out.empty()) save_kpatch(cfg.out, mesh);
  json j = mesh_summary(mesh);
  j["warnings"] = warnings;
  if (cfg.out.empty())
    out << format_kpatch(mesh);
  else
    out << j.dump(2) << '\n';
  if (!cfg.json_out.empty()) write_text(cfg.json_out, j.dump(2) + "\n", out);
  return 0;
}

json cache_json(const QuadCache& cache, double t_lp) {
  json j = json::parse(metrics(cache, t_lp).json());
  j["eta"] = cache.eta;
  j["eps"] = cache.options.near.eps;
  j["targets"] = cache.num_targets();
  j["adaptive"] = {{"fresh_node_evals", cache.stats.fresh_node_evals},
                   {"saved_node_evals", cache.stats.saved_node_evals},
                   {"triangles", cache.stats.triangles},
                   {"max_level", cache.stats.max_level},
                   {"depth_cap_hits", cache.stats.depth_cap_hits}};
  j["warnings"] = warnings_json(cache.warnings);
  return j;
}

QuadCache build_cache(const RunConfig& cfg, const SurfaceMesh& mesh, const std::vector<Vec3>& targets) {
  const std::vector<KernelSpec> ks = {cfg.kernel_spec()};
  if (!cfg.cache_in.empty()) {
    QuadCache c = load_cache(cfg.cache_in, mesh, ks, cfg.eval_options());
    if (!targets.empty()) extend_targets(c, targets);
    return c;
  }
  return precompute(mesh, ks, cfg.eval_options(), targets);
}

int cmd_precompute(const RunConfig& cfg, std::ostream& out) {
  const SurfaceMesh mesh = load_mesh(cfg.mesh);
  const QuadCache cache = build_cache(cfg, mesh, cfg.target_points());
  if (!cfg.cache_out.empty()) save_cache(cfg.cache_out, cache);
  write_text(cfg.json_out, cache_json(cache, 0.0).dump(2) + "\n", out);
  return 0;
}

int cmd_eval(const RunConfig& cfg, std::ostream& out) {
  const SurfaceMesh mesh = load_mesh(cfg.mesh);
  const auto targets = cfg.target_points();
  QuadCache cache = build_cache(cfg, mesh, targets);
  if (!cfg.cache_out.empty()) save_cache(cfg.cache_out, cache);
  auto acc = cfg.accelerator();
  const Potential pot = apply(cache, make_density(cfg, mesh), *acc, 0);
  std::string csv;
  if (targets.empty()) {
    std::vector<Vec3> nodes;
    for (const auto& n : mesh.nodes) nodes.push_back(n.X);
    csv = points_csv(nodes, pot.values.head(mesh.size()));
  } else {
    csv = points_csv(targets, pot.values.tail(targets.size()));
  }
  write_text(cfg.out, csv, out);
  json j = cache_json(cache, pot.t_lp);
  j["cancellation"] = pot.cancellation;
  j["accelerator"] = acc->name();
  for (const auto& w : warnings_json(acc->warnings())) j["warnings"].push_back(w);
  if (!cfg.json_out.empty()) write_text(cfg.json_out, j.dump(2) + "\n", out);
  return 0;
}

int cmd_solve(const RunConfig& cfg, std::ostream& out) {
  const SurfaceMesh mesh = load_mesh(cfg.mesh);
  auto acc = cfg.accelerator();
  SolveOptions opt;
  opt.eval = cfg.eval_options();
  opt.tol = cfg.tol;
  opt.maxit = cfg.maxit;
  const auto src = manufactured_sources(mesh, true, cfg.sources, cfg.seed);
  auto targets = cfg.target_points();
  const bool user_targets = !targets.empty();
  if (!user_targets) targets = exterior_probes(mesh);
  CfieRun r = run_cfie(mesh, cfg.wavenumber(), src, opt, *acc, targets);

  std::vector<Vec3> nodes;
  for (const auto& n : mesh.nodes) nodes.push_back(n.X);
  if (!cfg.sigma_out.empty()) write_text(cfg.sigma_out, points_csv(nodes, r.sol.sigma), out);
  if (!cfg.out.empty()) write_text(cfg.out, points_csv(r.probes, r.u), out);

  json j = json::parse(r.sol.json());
  j["k"] = cplx_json(cfg.wavenumber());
  j["eps_a"] = r.eps_a;
  j["probes"] = r.probes.size();
  j["sources"] = json::array();
  for (std::size_t i = 0; i < src.points.size(); ++i)
    j["sources"].push_back({{"point", {src.points[i].x(), src.points[i].y(), src.points[i].z()}},
                            {"strength", cplx_json(src.strengths[i])}});
  j["warnings"] = warnings_json(r.sol.cache.warnings);
  write_text(cfg.json_out, j.dump(2) + "\n", out);
  if (!r.sol.gmres.converged) throw QuadratureError("GMRES did not converge in " + std::to_string(cfg.maxit) + " iterations");
  return 0;
}

int cmd_converge(const RunConfig& cfg, std::ostream& out) {
  auto acc = cfg.accelerator();
  const auto rows = convergence_study(cfg.test, cfg.orders, cfg.refines, cfg.eps, cfg.wavenumber(), cfg.seed, *acc);
  write_text(cfg.out, format_convergence_csv(rows), out);
  if (!cfg.json_out.empty()) {
    json j = json::object();
    for (int p : cfg.orders) {
      std::vector<ConvergenceRow> sub;
      for (const auto& r : rows)
        if (r.p == p) sub.push_back(r);
      j[std::to_string(p)] = {{"fitted_order", fitted_order(sub)}};
    }
    write_text(cfg.json_out, j.dump(2) + "\n", out);
  }
  return 0;
}

}  // namespace

SurfaceMesh load_mesh(const MeshSource& src, std::vector<std::string>* warnings) {
  if (src.shape == "file") {
    if (src.file.empty()) throw ArgumentError("--shape file needs --mesh");
    const std::string text = read_file(src.file);
    if (text.rfind("KPATCH", 0) == 0) return parse_kpatch(text);
    FlatMeshImport imp = parse_flat_tri(text, src.order);
    if (warnings) *warnings = imp.warnings;
    return std::move(imp.mesh);
  }
  if (!src.file.empty()) return load_kpatch(src.file);
  if (src.shape == "sphere") return gen_sphere(src.refine, src.order, SphereBase::octahedron, src.radius);
  if (src.shape == "icosphere") return gen_sphere(src.refine, src.order, SphereBase::icosahedron, src.radius);
  if (src.shape == "stellarator") return gen_stellarator(src.nu, src.nv, src.order);
  throw ArgumentError("unknown shape '" + src.shape + "'");
}

SliceSpec parse_slice(const std::vector<std::string>& tokens) {
  SliceSpec s;
  for (const auto& tok : tokens) {
    const auto eq = tok.find('=');
    if (eq == std::string::npos) throw ArgumentError("slice token '" + tok + "' is not key=value");
    const std::string key = tok.substr(0, eq), val = tok.substr(eq + 1);
    try {
      if (key == "normal") {
        if (val.size() != 1 || val[0] < 'x' || val[0] > 'z') throw ArgumentError("slice normal must be x, y or z");
        s.normal = val[0] - 'x';
      } else if (key == "offset") {
        s.offset = std::stod(val);
      } else if (key == "n") {
        s.n = std::stoi(val);
      } else if (key == "extent") {
        s.extent = std::stod(val);
      } else {
        throw ArgumentError("unknown slice key '" + key + "'");
      }
    } catch (const std::logic_error&) {
      throw ArgumentError("bad slice value '" + tok + "'");
    }
  }
  if (s.n < 1 || s.n > 4001) throw ArgumentError("slice n must be in [1, 4001]");
  if (!(s.extent > 0)) throw ArgumentError("slice extent must be positive");
  return s;
}

std::vector<Vec3> slice_points(const SliceSpec& s) {
  std::vector<Vec3> pts;
  pts.reserve(std::size_t(s.n) * s.n);
  const int a = (s.normal + 1) % 3, b = (s.normal + 2) % 3;
  for (int j = 0; j < s.n; ++j)
    for (int i = 0; i < s.n; ++i) {
      Vec3 x = Vec3::Zero();
      x(s.normal) = s.offset;
      x(a) = s.n == 1 ? 0.0 : -s.extent + 2.0 * s.extent * i / (s.n - 1);
      x(b) = s.n == 1 ? 0.0 : -s.extent + 2.0 * s.extent * j / (s.n - 1);
      pts.push_back(x);
    }
  return pts;
}

std::vector<Vec3> load_points(const std::string& path) {
  std::istringstream is(read_file(path));
  std::vector<Vec3> pts;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (const auto h = line.find('#'); h != std::string::npos) line.resize(h);
    for (char& ch : line)
      if (ch == ',') ch = ' ';
    std::istringstream ls(line);
    double x, y, z;
    if (!(ls >> x)) continue;
    if (!(ls >> y >> z) || !std::isfinite(x) || !std::isfinite(y) || !std::isfinite(z))
      throw ParseError("expected three coordinates", lineno);
    pts.emplace_back(x, y, z);
  }
  return pts;
}

KernelSpec parse_kernel(const std::string& name, cplx k, cplx beta_d, cplx beta_s) {
  KernelSpec s;
  if (name == "single")
    s = KernelSpec::single(k);
  else if (name == "double")
    s = KernelSpec::dbl(k);
  else if (name == "adjoint")
    s = KernelSpec::adjoint(k);
  else if (name == "combined")
    s = KernelSpec::combined(k, beta_d, beta_s);
  else
    throw ArgumentError("unknown kernel '" + name + "'");
  s.validate();
  return s;
}

std::vector<ConvergenceRow> convergence_study(const std::string& test, const std::vector<int>& orders,
                                              const std::vector<int>& refines, double eps, cplx k,
                                              unsigned seed, FarAccelerator& acc) {
  if (test != "greens" && test != "cfie") throw ArgumentError("unknown study '" + test + "' (greens | cfie)");
  std::vector<ConvergenceRow> rows;
  for (int p : orders) {
    const ConvergenceRow* prev = nullptr;
    for (int r : refines) {
      const SurfaceMesh mesh = gen_sphere(r, p);
      ConvergenceRow row;
      row.p = p;
      row.refine = r;
      row.n = mesh.size();
      for (const auto& pa : mesh.patches) row.h = std::max(row.h, pa.radius);
      if (test == "greens") {
        EvalOptions o;
        o.near.eps = eps;
        row.error = greens_identity_error(mesh, k, manufactured_sources(mesh, false, 6, seed), o, acc).eps_g;
      } else {
        SolveOptions o;
        o.eval.near.eps = eps;
        row.error = run_cfie(mesh, k, manufactured_sources(mesh, true, 6, seed), o, acc, exterior_probes(mesh)).eps_a;
      }
      row.order = prev ? std::log(prev->error / row.error) / std::log(prev->h / row.h)
                       : std::numeric_limits<double>::quiet_NaN();
      rows.push_back(row);
      prev = &rows.back();
    }
  }
  return rows;
}

std::string format_convergence_csv(const std::vector<ConvergenceRow>& rows) {
  std::ostringstream os;
  os.precision(10);
  os << "p,refine,N,h,error,order\n";
  for (const auto& r : rows) {
    os << r.p << ',' << r.refine << ',' << r.n << ',' << r.h << ',' << r.error << ',';
    if (std::isfinite(r.order)) os << r.order;
    os << '\n';
  }
  return os.str();
}

double fitted_order(const std::vector<ConvergenceRow>& rows) {
  if (rows.size() < 2) return std::numeric_limits<double>::quiet_NaN();
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (const auto& r : rows) {
    const double x = std::log(r.h), y = std::log(r.error);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  const double n = double(rows.size());
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Layer potentials on high-order triangulated surfaces"};
  app.require_subcommand(1);
  RunConfig cfg;
  app.add_option("--threads", cfg.threads, "OpenMP threads (default: all cores)")->check(CLI::NonNegativeNumber);
  app.add_option("--seed", cfg.seed, "seed for random densities and sources");

  auto* geom = app.add_subcommand("geom", "generate or import a mesh and write KPATCH");
  add_mesh_flags(geom, cfg);
  geom->add_option("-o,--out", cfg.out, "KPATCH output (default stdout)");
  geom->add_option("--json", cfg.json_out, "mesh summary JSON");

  auto* pre = app.add_subcommand("precompute", "build the quadrature corrections and report metrics");
  add_mesh_flags(pre, cfg);
  add_eval_flags(pre, cfg);
  add_kernel_flags(pre, cfg);
  add_target_flags(pre, cfg);
  pre->add_option("--cache-out", cfg.cache_out, "binary cache dump");
  pre->add_option("--json", cfg.json_out, "metrics JSON (default stdout)");

  auto* ev = app.add_subcommand("eval", "evaluate a layer potential");
  add_mesh_flags(ev, cfg);
  add_eval_flags(ev, cfg);
  add_kernel_flags(ev, cfg);
  add_target_flags(ev, cfg);
  ev->add_option("--density", cfg.density, "one | smooth | random")
      ->check(CLI::IsMember({"one", "smooth", "random"}));
  ev->add_option("--density-file", cfg.density_file, "node values 'Re Im' per line");
  ev->add_option("--cache-in", cfg.cache_in, "reuse a cache dump");
  ev->add_option("--cache-out", cfg.cache_out, "binary cache dump");
  ev->add_option("-o,--out", cfg.out, "potentials CSV (default stdout)");
  ev->add_option("--json", cfg.json_out, "metrics JSON");

  auto* solve = app.add_subcommand("solve", "exterior Dirichlet CFIE with a manufactured solution");
  add_mesh_flags(solve, cfg);
  add_eval_flags(solve, cfg);
  add_target_flags(solve, cfg);
  solve->add_option("--k", cfg.k, "wavenumber (real part)");
  solve->add_option("--k-imag", cfg.k_imag, "wavenumber (imaginary part)");
  solve->add_option("--sources", cfg.sources, "interior point sources")->check(CLI::PositiveNumber);
  solve->add_option("--tol", cfg.tol, "GMRES tolerance (default eps)");
  solve->add_option("--maxit", cfg.maxit, "GMRES iteration cap")->check(CLI::PositiveNumber);
  solve->add_option("--sigma-out", cfg.sigma_out, "density CSV");
  solve->add_option("-o,--out", cfg.out, "exterior potentials CSV");
  solve->add_option("--json", cfg.json_out, "residuals and metrics JSON (default stdout)");

  auto* conv = app.add_subcommand("converge", "refinement study on the sphere");
  conv->add_option("--test", cfg.test, "greens | cfie")->check(CLI::IsMember({"greens", "cfie"}));
  conv->add_option("--orders", cfg.orders, "patch orders")->delimiter(',');
  conv->add_option("--refines", cfg.refines, "refinement levels")->delimiter(',');
  conv->add_option("--eps", cfg.eps, "quadrature tolerance")->check(CLI::PositiveNumber);
  conv->add_option("--k", cfg.k, "wavenumber (real part)");
  conv->add_option("--k-imag", cfg.k_imag, "wavenumber (imaginary part)");
  conv->add_option("--accel", cfg.accel, "far-field evaluator")->check(CLI::IsMember({"direct", "treecode"}));
  conv->add_option("--fmm-eps", cfg.fmm_eps, "treecode tolerance (default eps)");
  conv->add_option("-o,--out", cfg.out, "CSV table (default stdout)");
  conv->add_option("--json", cfg.json_out, "fitted orders JSON");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? 0 : 2;
  }

  set_threads(cfg.threads);
  try {
    if (*geom) return cmd_geom(cfg, out);
    if (*pre) return cmd_precompute(cfg, out);
    if (*ev) return cmd_eval(cfg, out);
    if (*solve) return cmd_solve(cfg, out);
    return cmd_converge(cfg, out);
  } catch (const Error& e) {
    const bool usage = dynamic_cast<const ArgumentError*>(&e) || dynamic_cast<const ParseError*>(&e) ||
                       dynamic_cast<const ValidationError*>(&e);
    err << json{{"error", {{"type", error_kind(e)}, {"message", e.what()}}}}.dump() << '\n';
    return usage ? 2 : 1;
  } catch (const std::exception& e) {
    err << json{{"error", {{"type", "InternalError"}, {"message", e.what()}}}}.dump() << '\n';
    return 1;
  }
}

}  // namespace lcq
