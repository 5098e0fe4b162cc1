#include "lcq/eval.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cstring>
#include <fstream>
#include <sstream>

namespace lcq {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

void check_kernels(const std::vector<KernelSpec>& kernels) {
  if (kernels.empty()) throw ArgumentError("at least one kernel is required");
  for (const auto& k : kernels) k.validate();
}

// Near lists for a set of targets against every patch of the mesh.
NearList near_lists_for(const SurfaceMesh& mesh, double eta, std::span<const Vec3> points,
                        std::span<const int> owner, int leaf, std::vector<Warning>& warnings) {
  std::vector<Vec3> c;
  std::vector<double> reach;
  for (const auto& p : mesh.patches) {
    c.push_back(p.centroid);
    reach.push_back(eta * p.radius);
  }
  OctTree tree = OctTree::build(c, reach, points, leaf);
  tree.enforce_level_restriction();
  warnings.insert(warnings.end(), tree.warnings().begin(), tree.warnings().end());
  return build_near_lists(tree, owner);
}

// Near matrices of every patch for the given per-patch target lists.
void build_near(QuadCache& cache, const NearList& lists, std::vector<NearMatrix>& out) {
  const int p = cache.mesh.order;
  const double normV = RuleLibrary::instance().interp(p).normV;
  const TargetView view{cache.targets, cache.target_normals};
  const std::int64_t npat = static_cast<std::int64_t>(cache.mesh.patches.size());
  out.assign(npat, NearMatrix{});
  std::string failure;
  AdaptiveStats total;
  std::vector<Warning> warnings;
#pragma omp parallel for schedule(dynamic)
  for (std::int64_t j = 0; j < npat; ++j) {
    try {
      const Patch& patch = cache.mesh.patches[j];
      AdaptiveCache ac(cache.options.adaptive_cache);
      AdaptiveStats st;
      std::vector<Warning> w;
      out[j] = near_matrix(patch, cache.far_order[j], lists.targets[j], view, cache.kernels,
                           cache.options.near, normV, ac, st, &w);
#pragma omp critical(lcq_near_merge)
      {
        total += st;
        warnings.insert(warnings.end(), w.begin(), w.end());
      }
    } catch (const Error& e) {
#pragma omp critical(lcq_near_merge)
      if (failure.empty()) failure = "patch " + std::to_string(j) + ": " + e.what();
    }
  }
  if (!failure.empty()) throw QuadratureError(failure);
  cache.stats += total;
  cache.warnings.insert(cache.warnings.end(), warnings.begin(), warnings.end());
}

void index_near(QuadCache& cache) {
  cache.target_near.assign(cache.targets.size(), {});
  for (std::size_t j = 0; j < cache.near.size(); ++j)
    for (std::size_t r = 0; r < cache.near[j].targets.size(); ++r)
      cache.target_near[cache.near[j].targets[r]].push_back({static_cast<int>(j), static_cast<int>(r)});
}

void build_oversampled(QuadCache& cache) {
  const int p = cache.mesh.order;
  auto& lib = RuleLibrary::instance();
  const MatX& V = lib.interp(p).matrixV;
  cache.over_offset.assign(1, 0);
  cache.over_points.clear();
  cache.over_normals.clear();
  cache.over_weights.clear();
  cache.interp.clear();
  for (std::size_t j = 0; j < cache.mesh.patches.size(); ++j) {
    const int q = cache.far_order[j];
    for (const auto& n : oversample_patch(cache.mesh.patches[j], q)) {
      cache.over_points.push_back(n.point);
      cache.over_normals.push_back(n.normal);
      cache.over_weights.push_back(n.weight);
    }
    cache.over_offset.push_back(cache.over_points.size());
    if (!cache.interp.count(q)) cache.interp[q] = lib.table(q, p).values * V;
  }
}

void fill_metrics(QuadCache& cache) {
  auto& m = cache.metrics;
  const std::size_t np = basis_count(cache.mesh.order);
  const std::size_t npat = cache.mesh.patches.size();
  m.n = cache.mesh.size();
  m.n_over = cache.over_points.size();
  m.n_near = 0;
  for (const auto& nm : cache.near) m.n_near += nm.targets.size();
  m.alpha = double(m.n_over) / double(m.n);
  m.m = double(np) * double(m.n_near + np) / double(m.n);
  m.m_per_patch = double(np) * double(m.n_near + npat * np) / double(m.n);
  m.s_init = m.t_init > 0.0 ? double(m.n) / m.t_init : 0.0;
  m.a_max = 0.0;
  double sum = 0.0;
  for (const auto& p : cache.mesh.patches) {
    m.a_max = std::max(m.a_max, p.aspect);
    sum += p.aspect;
  }
  m.a_avg = sum / double(npat);
  m.q_min = *std::min_element(cache.far_order.begin(), cache.far_order.end());
  m.q_max = *std::max_element(cache.far_order.begin(), cache.far_order.end());
}

double bounding_diameter(std::span<const Vec3> pts) {
  if (pts.empty()) return 1.0;
  Vec3 lo = pts[0], hi = pts[0];
  for (const auto& x : pts) lo = lo.cwiseMin(x), hi = hi.cwiseMax(x);
  return std::max((hi - lo).norm(), 1e-300);
}

}  // namespace

int QuadCache::kernel_index(const KernelSpec& spec) const {
  for (std::size_t i = 0; i < kernels.size(); ++i)
    if (kernels[i] == spec) return static_cast<int>(i);
  return -1;
}

QuadCache precompute(const SurfaceMesh& mesh, const std::vector<KernelSpec>& kernels,
                     const EvalOptions& options, std::span<const Vec3> extra_targets,
                     std::span<const Vec3> extra_normals) {
  const auto t0 = Clock::now();
  if (mesh.patches.empty()) throw ArgumentError("precompute: empty mesh");
  check_kernels(kernels);
  const int p = mesh.order;
  options.near.validate(p);
  if (!extra_normals.empty() && extra_normals.size() != extra_targets.size())
    throw ArgumentError("precompute: one normal per extra target required");

  QuadCache cache;
  cache.mesh = mesh;
  cache.kernels = kernels;
  cache.options = options;
  cache.eta = options.near.eta_for(p);
  for (std::size_t i = 0; i < mesh.size(); ++i) {
    cache.targets.push_back(mesh.nodes[i].X);
    cache.target_normals.push_back(mesh.nodes[i].normal);
    cache.owner.push_back(mesh.patch_of(i));
  }
  for (std::size_t i = 0; i < extra_targets.size(); ++i) {
    cache.targets.push_back(extra_targets[i]);
    cache.target_normals.push_back(extra_normals.empty() ? Vec3::Zero() : extra_normals[i]);
    cache.owner.push_back(-1);
  }
  cache.coincidence = 1e-12 * bounding_diameter(cache.targets);

  const NearList lists = near_lists_for(mesh, cache.eta, cache.targets, cache.owner,
                                        options.tree_leaf_size, cache.warnings);

  // Far orders and self matrices.
  const double normV = RuleLibrary::instance().interp(p).normV;
  const std::int64_t npat = static_cast<std::int64_t>(mesh.patches.size());
  cache.far_order.assign(npat, p);
  cache.self.assign(npat, SelfMatrix{});
  std::string failure;
  std::vector<Warning> warnings;
#pragma omp parallel for schedule(dynamic)
  for (std::int64_t j = 0; j < npat; ++j) {
    try {
      const Patch& patch = mesh.patches[j];
      std::vector<Vec3> near_pts;
      for (std::size_t t : lists.targets[j]) near_pts.push_back(cache.targets[t]);
      const FarOrderReport rep = select_far_order(patch, near_pts, kernels, options.near, normV);
      cache.far_order[j] = rep.q;
      if (rep.capped) {
#pragma omp critical(lcq_pre_merge)
        warnings.push_back({"quadrature", "far order capped at q = " + std::to_string(rep.q) +
                                              " on patch " + std::to_string(j)});
      }
      cache.self[j] = self_matrix(patch, kernels, options.near, normV);
    } catch (const Error& e) {
#pragma omp critical(lcq_pre_merge)
      if (failure.empty()) failure = "patch " + std::to_string(j) + ": " + e.what();
    }
  }
  if (!failure.empty()) throw QuadratureError(failure);
  cache.warnings.insert(cache.warnings.end(), warnings.begin(), warnings.end());
  for (std::int64_t j = 0; j < npat; ++j) cache.mesh.patches[j].far_order = cache.far_order[j];

  build_near(cache, lists, cache.near);
  index_near(cache);
  build_oversampled(cache);
  cache.metrics.t_init = seconds_since(t0);
  fill_metrics(cache);
  return cache;
}

std::size_t extend_targets(QuadCache& cache, std::span<const Vec3> points,
                           std::span<const Vec3> normals) {
  if (!normals.empty() && normals.size() != points.size())
    throw ArgumentError("extend_targets: one normal per point required");
  const auto t0 = Clock::now();
  const std::size_t first = cache.targets.size();
  for (std::size_t i = 0; i < points.size(); ++i) {
    cache.targets.push_back(points[i]);
    cache.target_normals.push_back(normals.empty() ? Vec3::Zero() : normals[i]);
    cache.owner.push_back(-1);
  }
  NearList lists = near_lists_for(cache.mesh, cache.eta, points, {}, cache.options.tree_leaf_size,
                                  cache.warnings);
  for (auto& l : lists.targets)
    for (auto& t : l) t += first;
  std::vector<NearMatrix> added;
  build_near(cache, lists, added);
  for (std::size_t j = 0; j < added.size(); ++j) {
    auto& nm = cache.near[j];
    const auto& ad = added[j];
    if (ad.targets.empty()) continue;
    const Eigen::Index old = static_cast<Eigen::Index>(nm.targets.size());
    const Eigen::Index extra = static_cast<Eigen::Index>(ad.targets.size());
    nm.targets.insert(nm.targets.end(), ad.targets.begin(), ad.targets.end());
    for (std::size_t k = 0; k < nm.A.size(); ++k) {
      nm.A[k].conservativeResize(old + extra, Eigen::NoChange);
      nm.A[k].bottomRows(extra) = ad.A[k];
    }
  }
  index_near(cache);
  cache.metrics.t_init += seconds_since(t0);
  fill_metrics(cache);
  return first;
}

VecXc oversampled_strengths(const QuadCache& cache, const VecXc& sigma) {
  const int np = cache.mesh.nodes_per_patch();
  if (static_cast<std::size_t>(sigma.size()) != cache.mesh.size())
    throw ArgumentError("density has " + std::to_string(sigma.size()) + " entries, mesh has " +
                        std::to_string(cache.mesh.size()) + " nodes");
  VecXc s(cache.over_points.size());
  for (std::size_t j = 0; j < cache.mesh.patches.size(); ++j) {
    const MatX& I = cache.interp.at(cache.far_order[j]);
    const std::size_t o = cache.over_offset[j];
    s.segment(o, I.rows()) = I.cast<cplx>() * sigma.segment(j * np, np);
  }
  for (Eigen::Index i = 0; i < s.size(); ++i) s(i) *= cache.over_weights[i];
  return s;
}

namespace {

int checked_kernel(const QuadCache& cache, int kernel) {
  if (kernel < 0 || kernel >= static_cast<int>(cache.kernels.size()))
    throw ArgumentError("kernel index " + std::to_string(kernel) + " out of range");
  return kernel;
}

// Oversampled point contributions of patch j at target t, as the accelerator
// computed them.
cplx patch_point_sum(const QuadCache& cache, const KernelSpec& spec, const VecXc& str, int j,
                     std::size_t t) {
  const Vec3& x = cache.targets[t];
  const Vec3& nx = cache.target_normals[t];
  const double md2 = cache.coincidence * cache.coincidence;
  cplx acc = 0.0;
  for (std::size_t i = cache.over_offset[j]; i < cache.over_offset[j + 1]; ++i) {
    if ((x - cache.over_points[i]).squaredNorm() <= md2) continue;
    acc += kernel_raw(spec, x, nx, cache.over_points[i], cache.over_normals[i]) * str(i);
  }
  return acc;
}

// Adds the corrected near and self interactions; subtracts the point
// contributions first when `subtract` is set.
double correct(const QuadCache& cache, int kernel, const VecXc& sigma, const VecXc& str,
               bool subtract, VecXc& u) {
  const KernelSpec& spec = cache.kernels[kernel];
  const int np = cache.mesh.nodes_per_patch();
  const std::int64_t nt = static_cast<std::int64_t>(cache.targets.size());
  const std::int64_t ns = static_cast<std::int64_t>(cache.surface_targets());
  double worst = 0.0;
#pragma omp parallel for schedule(dynamic, 64) reduction(max : worst)
  for (std::int64_t t = 0; t < nt; ++t) {
    cplx add = 0.0, spurious = 0.0;
    for (const auto& [j, r] : cache.target_near[t]) {
      if (subtract) spurious += patch_point_sum(cache, spec, str, j, t);
      add += (cache.near[j].A[kernel].row(r) * sigma.segment(std::size_t(j) * np, np)).value();
    }
    if (t < ns) {
      const int j = cache.owner[t];
      const int local = static_cast<int>(t - std::int64_t(j) * np);
      if (subtract) spurious += patch_point_sum(cache, spec, str, j, t);
      add += (cache.self[j].S[kernel].row(local) * sigma.segment(std::size_t(j) * np, np)).value();
    }
    u(t) += add - spurious;
    if (subtract && std::abs(u(t)) > 0.0) worst = std::max(worst, std::abs(spurious) / std::abs(u(t)));
  }
  return worst;
}

}  // namespace

Potential apply(const QuadCache& cache, const VecXc& sigma, FarAccelerator& acc, int kernel) {
  const auto t0 = Clock::now();
  checked_kernel(cache, kernel);
  const VecXc str = oversampled_strengths(cache, sigma);
  const SourceSet src{cache.over_points, cache.over_normals,
                      std::span<const cplx>(str.data(), str.size()), cache.over_offset};
  const TargetSet tgt{cache.targets, cache.target_normals};
  Potential out;
  out.values = acc.evaluate(cache.kernels[kernel], src, tgt, cache.coincidence);
  out.cancellation = correct(cache, kernel, sigma, str, true, out.values);
  out.surface = cache.surface_targets();
  out.t_lp = seconds_since(t0);
  return out;
}

Potential apply_skip_near(const QuadCache& cache, const VecXc& sigma, FarAccelerator& acc,
                          int kernel) {
  const auto t0 = Clock::now();
  checked_kernel(cache, kernel);
  if (!acc.supports_exclusion())
    throw UnsupportedError("apply_skip_near: the " + acc.name() +
                           " accelerator has no near-pair exclusion hook");
  const VecXc str = oversampled_strengths(cache, sigma);
  GroupExclusion excl(cache.targets.size());
  for (std::size_t t = 0; t < cache.targets.size(); ++t) {
    for (const auto& [j, r] : cache.target_near[t]) excl[t].push_back(j);
    if (cache.owner[t] >= 0) excl[t].push_back(cache.owner[t]);
    std::sort(excl[t].begin(), excl[t].end());
  }
  const SourceSet src{cache.over_points, cache.over_normals,
                      std::span<const cplx>(str.data(), str.size()), cache.over_offset};
  const TargetSet tgt{cache.targets, cache.target_normals};
  Potential out;
  out.values = acc.evaluate_excluding(cache.kernels[kernel], src, tgt, cache.coincidence, excl);
  correct(cache, kernel, sigma, str, false, out.values);
  out.surface = cache.surface_targets();
  out.t_lp = seconds_since(t0);
  return out;
}

std::string MetricsReport::json() const {
  nlohmann::json j = {{"N", cache.n},
                      {"N_over", cache.n_over},
                      {"N_near", cache.n_near},
                      {"alpha", cache.alpha},
                      {"m", cache.m},
                      {"m_per_patch", cache.m_per_patch},
                      {"t_init", cache.t_init},
                      {"s_init", cache.s_init},
                      {"t_lp", t_lp},
                      {"s_lp", s_lp},
                      {"a_max", cache.a_max},
                      {"a_avg", cache.a_avg},
                      {"q_min", cache.q_min},
                      {"q_max", cache.q_max}};
  return j.dump();
}

MetricsReport metrics(const QuadCache& cache, double t_lp) {
  MetricsReport r;
  r.cache = cache.metrics;
  r.t_lp = t_lp;
  r.s_lp = t_lp > 0.0 ? double(cache.metrics.n) / t_lp : 0.0;
  return r;
}

namespace {

constexpr char kMagic[8] = {'L', 'C', 'Q', 'C', 'A', 'C', 'H', 'E'};
constexpr std::uint32_t kVersion = 1;

class Writer {
 public:
  explicit Writer(std::ostream& os) : os_(os) {}
  template <class T>
  void pod(const T& v) {
    os_.write(reinterpret_cast<const char*>(&v), sizeof(T));
  }
  void matrix(const MatXc& m) {
    pod<std::uint64_t>(m.rows());
    pod<std::uint64_t>(m.cols());
    os_.write(reinterpret_cast<const char*>(m.data()), sizeof(cplx) * m.size());
  }

 private:
  std::ostream& os_;
};

class Reader {
 public:
  explicit Reader(std::istream& is) : is_(is) {}
  template <class T>
  T pod() {
    T v;
    is_.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is_) throw ValidationError("cache file truncated");
    return v;
  }
  MatXc matrix() {
    const auto r = pod<std::uint64_t>(), c = pod<std::uint64_t>();
    if (r > (1u << 30) || c > (1u << 20)) throw ValidationError("cache file corrupt");
    MatXc m(r, c);
    is_.read(reinterpret_cast<char*>(m.data()), sizeof(cplx) * m.size());
    if (!is_) throw ValidationError("cache file truncated");
    return m;
  }

 private:
  std::istream& is_;
};

void write_header(Writer& w, const SurfaceMesh& mesh, const std::vector<KernelSpec>& kernels,
                  const EvalOptions& options) {
  const int p = mesh.order;
  w.pod(kMagic);
  w.pod(kVersion);
  w.pod(options.near.eps);
  w.pod(options.near.eta_for(p));
  w.pod<std::uint32_t>(kernels.size());
  for (const auto& k : kernels) {
    w.pod<std::int32_t>(static_cast<std::int32_t>(k.family));
    for (cplx c : {k.k, k.beta_d, k.beta_s}) w.pod(c);
  }
  w.pod(mesh_hash(mesh));
}

}  // namespace

void save_cache(const std::string& path, const QuadCache& cache) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ArgumentError("cannot write " + path);
  Writer w(os);
  write_header(w, cache.mesh, cache.kernels, cache.options);
  w.pod<std::uint64_t>(cache.targets.size());
  for (std::size_t t = 0; t < cache.targets.size(); ++t) {
    w.pod(cache.targets[t]);
    w.pod(cache.target_normals[t]);
    w.pod<std::int32_t>(cache.owner[t]);
  }
  for (int q : cache.far_order) w.pod<std::int32_t>(q);
  for (const auto& s : cache.self) {
    w.pod<std::int32_t>(s.max_gauss);
    for (const auto& m : s.S) w.matrix(m);
  }
  for (const auto& nm : cache.near) {
    w.pod<std::uint64_t>(nm.targets.size());
    for (std::size_t t : nm.targets) w.pod<std::uint64_t>(t);
    for (const auto& m : nm.A) w.matrix(m);
  }
  if (!os) throw ArgumentError("failed writing " + path);
}

QuadCache load_cache(const std::string& path, const SurfaceMesh& mesh,
                     const std::vector<KernelSpec>& kernels, const EvalOptions& options) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ArgumentError("cannot read " + path);
  check_kernels(kernels);
  // Compare the stored header byte for byte with the expected one.
  std::ostringstream expect_buf;
  Writer ew(expect_buf);
  write_header(ew, mesh, kernels, options);
  const std::string expect = expect_buf.str();
  std::string got(expect.size(), '\0');
  is.read(got.data(), static_cast<std::streamsize>(got.size()));
  if (!is || std::memcmp(got.data(), kMagic, sizeof kMagic) != 0)
    throw ValidationError("not a cache file: " + path);
  if (got != expect)
    throw ValidationError("cache " + path + " was built with a different eps, eta, kernel or mesh");

  Reader r(is);
  QuadCache cache;
  cache.mesh = mesh;
  cache.kernels = kernels;
  cache.options = options;
  cache.eta = options.near.eta_for(mesh.order);
  const auto nt = r.pod<std::uint64_t>();
  if (nt < mesh.size()) throw ValidationError("cache file corrupt");
  for (std::uint64_t t = 0; t < nt; ++t) {
    cache.targets.push_back(r.pod<Vec3>());
    cache.target_normals.push_back(r.pod<Vec3>());
    cache.owner.push_back(r.pod<std::int32_t>());
  }
  const std::size_t npat = mesh.patches.size();
  for (std::size_t j = 0; j < npat; ++j) cache.far_order.push_back(r.pod<std::int32_t>());
  const int qmax = RuleLibrary::instance().limits().q_max;
  for (int q : cache.far_order)
    if (q < mesh.order || q > qmax) throw ValidationError("cache file corrupt");
  cache.self.resize(npat);
  for (std::size_t j = 0; j < npat; ++j) {
    cache.self[j].patch = static_cast<int>(j);
    cache.self[j].max_gauss = r.pod<std::int32_t>();
    for (std::size_t k = 0; k < kernels.size(); ++k) cache.self[j].S.push_back(r.matrix());
  }
  cache.near.resize(npat);
  for (std::size_t j = 0; j < npat; ++j) {
    auto& nm = cache.near[j];
    nm.patch = static_cast<int>(j);
    const auto n = r.pod<std::uint64_t>();
    for (std::uint64_t i = 0; i < n; ++i) {
      nm.targets.push_back(r.pod<std::uint64_t>());
      if (nm.targets.back() >= nt) throw ValidationError("cache file corrupt");
    }
    for (std::size_t k = 0; k < kernels.size(); ++k) nm.A.push_back(r.matrix());
  }
  cache.coincidence = 1e-12 * bounding_diameter(cache.targets);
  for (std::size_t j = 0; j < npat; ++j) cache.mesh.patches[j].far_order = cache.far_order[j];
  index_near(cache);
  build_oversampled(cache);
  fill_metrics(cache);
  return cache;
}

std::string format_potential_csv(const QuadCache& cache, const VecXc& values) {
  if (static_cast<std::size_t>(values.size()) != cache.targets.size())
    throw ArgumentError("potential size does not match the cache targets");
  std::ostringstream os;
  os.precision(17);
  os << "x,y,z,Re,Im\n";
  for (std::size_t t = 0; t < cache.targets.size(); ++t) {
    const Vec3& x = cache.targets[t];
    os << x.x() << ',' << x.y() << ',' << x.z() << ',' << values(t).real() << ','
       << values(t).imag() << '\n';
  }
  return os.str();
}

}  // namespace lcq
