#include "lcq/accel.hpp"

#include "lcq/octree.hpp"
#include "lcq/quadrature.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <map>
#include <random>

namespace lcq {

void check_accelerator_input(const KernelSpec& spec, const SourceSet& src, const TargetSet& tgt) {
  spec.validate();
  if (src.strengths.size() != src.points.size())
    throw ArgumentError("accelerator: one strength per source required");
  if (spec.needs_source_normal() && src.normals.size() != src.points.size())
    throw ArgumentError("accelerator: kernel needs source normals");
  if (spec.needs_target_normal() && tgt.normals.size() != tgt.points.size())
    throw ArgumentError("accelerator: kernel needs target normals");
  if (!src.group_offsets.empty() && src.group_offsets.back() != src.points.size())
    throw ArgumentError("accelerator: group offsets must end at the source count");
}

VecXc FarAccelerator::evaluate_excluding(const KernelSpec&, const SourceSet&, const TargetSet&,
                                         double, const GroupExclusion&) {
  throw UnsupportedError(name() + " accelerator has no near-pair exclusion hook");
}

namespace {

const Vec3 kZero = Vec3::Zero();

inline const Vec3& normal_or_zero(std::span<const Vec3> n, std::size_t i) {
  return n.empty() ? kZero : n[i];
}

cplx direct_range(const KernelSpec& spec, const Vec3& x, const Vec3& nx, const SourceSet& src,
                  std::size_t begin, std::size_t end, double min_dist) {
  cplx acc = 0.0;
  const double md2 = min_dist * min_dist;
  for (std::size_t i = begin; i < end; ++i) {
    if ((x - src.points[i]).squaredNorm() <= md2) continue;
    acc += kernel_raw(spec, x, nx, src.points[i], normal_or_zero(src.normals, i)) * src.strengths[i];
  }
  return acc;
}

class DirectAccelerator final : public FarAccelerator {
 public:
  std::string name() const override { return "direct"; }
  double accuracy() const override { return 0.0; }
  bool supports_exclusion() const override { return true; }

  VecXc evaluate(const KernelSpec& spec, const SourceSet& src, const TargetSet& tgt,
                 double min_dist) override {
    check_accelerator_input(spec, src, tgt);
    VecXc out(tgt.points.size());
    const std::int64_t n = static_cast<std::int64_t>(tgt.points.size());
#pragma omp parallel for schedule(static)
    for (std::int64_t t = 0; t < n; ++t)
      out(t) = direct_range(spec, tgt.points[t], normal_or_zero(tgt.normals, t), src, 0,
                            src.points.size(), min_dist);
    return out;
  }

  VecXc evaluate_excluding(const KernelSpec& spec, const SourceSet& src, const TargetSet& tgt,
                           double min_dist, const GroupExclusion& excl) override {
    check_accelerator_input(spec, src, tgt);
    if (src.group_offsets.empty()) throw ArgumentError("exclusion needs source groups");
    if (excl.size() != tgt.points.size())
      throw ArgumentError("exclusion list must have one entry per target");
    const std::size_t ngroups = src.group_offsets.size() - 1;
    VecXc out(tgt.points.size());
    const std::int64_t n = static_cast<std::int64_t>(tgt.points.size());
#pragma omp parallel for schedule(static)
    for (std::int64_t t = 0; t < n; ++t) {
      const auto& skip = excl[t];
      std::size_t s = 0;
      cplx acc = 0.0;
      for (std::size_t g = 0; g < ngroups; ++g) {
        while (s < skip.size() && skip[s] < static_cast<int>(g)) ++s;
        if (s < skip.size() && skip[s] == static_cast<int>(g)) continue;
        acc += direct_range(spec, tgt.points[t], normal_or_zero(tgt.normals, t), src,
                            src.group_offsets[g], src.group_offsets[g + 1], min_dist);
      }
      out(t) = acc;
    }
    return out;
  }
};

// Proxy and check spheres for boxes of one size, with the least-squares map
// from check values to equivalent charges.
struct LevelFit {
  int n_proxy = 0;
  std::vector<Vec3> proxy;  // offsets from the box centre
  std::vector<Vec3> check;
  MatXc fit;                // n_proxy x n_check
};

struct SourceTree {
  OctTree tree;
  std::vector<std::size_t> perm;  // tree order -> input index
  std::vector<std::size_t> begin, end;  // per box, range in tree order
};

class Treecode final : public FarAccelerator {
 public:
  explicit Treecode(const TreecodeOptions& opt) : opt_(opt) {
    if (!(opt.theta > 0.0 && opt.theta <= 1.0)) throw ArgumentError("treecode: theta must lie in (0, 1]");
    if (opt.n_proxy < 0) throw ArgumentError("treecode: n_proxy must be >= 1");
    if (!(opt.eps > 0.0)) throw ArgumentError("treecode: eps must be positive");
    n_proxy_ = opt.n_proxy > 0 ? opt.n_proxy : default_proxy_count(opt.eps, opt.theta);
    leaf_ = opt.leaf_size > 0 ? opt.leaf_size : std::max(32, n_proxy_ / 4);
  }

  std::string name() const override { return "treecode"; }
  double accuracy() const override { return opt_.eps; }

  VecXc evaluate(const KernelSpec& spec, const SourceSet& src, const TargetSet& tgt,
                 double min_dist) override {
    check_accelerator_input(spec, src, tgt);
    VecXc out = VecXc::Zero(tgt.points.size());
    if (src.points.empty()) return out;
    const SourceTree& st = source_tree(src.points);
    const double side = 2.0 * st.tree.root_half();
    if (std::abs(spec.k) * side > opt_.max_k_size) {
      warnings_.push_back({"treecode", "|k| * root size = " + std::to_string(std::abs(spec.k) * side) +
                                           " exceeds the low-frequency limit; using direct summation"});
      return direct_accelerator()->evaluate(spec, src, tgt, min_dist);
    }

    // Sources in tree order.
    const std::size_t ns = src.points.size();
    std::vector<Vec3> pts(ns), nrm(src.normals.empty() ? 0 : ns);
    std::vector<cplx> str(ns);
    for (std::size_t i = 0; i < ns; ++i) {
      pts[i] = src.points[st.perm[i]];
      str[i] = src.strengths[st.perm[i]];
      if (!nrm.empty()) nrm[i] = src.normals[st.perm[i]];
    }
    const SourceSet sorted{pts, nrm, str, {}};

    // Source kernel seen from the check sphere, and the kernel of the proxy
    // charges seen from a target.
    KernelSpec src_spec = spec;
    if (spec.family == KernelFamily::adjoint_double_layer) src_spec = KernelSpec::single(spec.k);
    const KernelSpec tgt_spec = spec.family == KernelFamily::adjoint_double_layer
                                    ? KernelSpec::adjoint(spec.k)
                                    : KernelSpec::single(spec.k);

    // Upward pass: equivalent charges for every box worth approximating.
    const auto& boxes = st.tree.boxes();
    std::vector<const LevelFit*> fits(boxes.size(), nullptr);
    std::vector<VecXc> charges(boxes.size());
    for (std::size_t b = 0; b < boxes.size(); ++b) {
      const LevelFit& lf = level_fit(spec.k, boxes[b].half);
      if (st.end[b] - st.begin[b] <= static_cast<std::size_t>(lf.n_proxy)) continue;
      fits[b] = &lf;
    }
    const std::int64_t nb = static_cast<std::int64_t>(boxes.size());
#pragma omp parallel for schedule(dynamic)
    for (std::int64_t b = 0; b < nb; ++b) {
      const LevelFit* lf = fits[b];
      if (!lf) continue;
      VecXc u(lf->check.size());
      for (std::size_t c = 0; c < lf->check.size(); ++c)
        u(c) = direct_range(src_spec, boxes[b].center + lf->check[c], kZero, sorted, st.begin[b],
                            st.end[b], 0.0);
      charges[b] = lf->fit * u;
    }

    const double theta = opt_.theta;
    const std::int64_t nt = static_cast<std::int64_t>(tgt.points.size());
#pragma omp parallel for schedule(dynamic, 16)
    for (std::int64_t t = 0; t < nt; ++t) {
      const Vec3& x = tgt.points[t];
      const Vec3& nx = normal_or_zero(tgt.normals, t);
      cplx acc = 0.0;
      std::vector<int> stack = {0};
      while (!stack.empty()) {
        const int b = stack.back();
        stack.pop_back();
        const auto& box = boxes[b];
        if (st.begin[b] == st.end[b]) continue;
        const double radius = std::sqrt(3.0) * box.half;
        const double dist = (x - box.center).norm();
        if (radius < theta * dist) {
          if (fits[b]) {
            const auto& lf = *fits[b];
            for (int p = 0; p < lf.n_proxy; ++p)
              acc += kernel_raw(tgt_spec, x, nx, box.center + lf.proxy[p], kZero) * charges[b](p);
          } else {
            acc += direct_range(spec, x, nx, sorted, st.begin[b], st.end[b], min_dist);
          }
        } else if (box.leaf()) {
          acc += direct_range(spec, x, nx, sorted, st.begin[b], st.end[b], min_dist);
        } else {
          for (int c : box.children) stack.push_back(c);
        }
      }
      out(t) = acc;
    }
    return out;
  }

 private:
  const SourceTree& source_tree(std::span<const Vec3> points) {
    std::uint64_t h = 14695981039346656037ull;
    const auto* bytes = reinterpret_cast<const unsigned char*>(points.data());
    for (std::size_t i = 0; i < points.size() * sizeof(Vec3); ++i) h = (h ^ bytes[i]) * 1099511628211ull;
    if (tree_ && tree_hash_ == h && tree_size_ == points.size()) return *tree_;
    auto st = std::make_unique<SourceTree>(SourceTree{OctTree::build({}, {}, points, leaf_), {}, {}, {}});
    const auto& boxes = st->tree.boxes();
    st->begin.assign(boxes.size(), 0);
    st->end.assign(boxes.size(), 0);
    // Depth-first numbering makes every subtree a contiguous range.
    std::vector<std::pair<int, bool>> stack = {{0, false}};
    while (!stack.empty()) {
      auto [b, done] = stack.back();
      stack.pop_back();
      if (done) {
        st->end[b] = st->perm.size();
        continue;
      }
      st->begin[b] = st->perm.size();
      stack.push_back({b, true});
      if (boxes[b].leaf()) {
        for (int i : boxes[b].targets) st->perm.push_back(static_cast<std::size_t>(i));
      } else {
        for (int c = 7; c >= 0; --c) stack.push_back({boxes[b].children[c], false});
      }
    }
    tree_ = std::move(st);
    tree_hash_ = h;
    tree_size_ = points.size();
    return *tree_;
  }

  LevelFit build_fit(cplx k, double half, int n_proxy) const {
    const double a = std::sqrt(3.0) * half;
    const double rc = std::max(a / opt_.theta, 1.25 * a);
    LevelFit lf;
    lf.n_proxy = n_proxy;
    lf.proxy = fibonacci_sphere(Vec3::Zero(), a, n_proxy);
    lf.check = fibonacci_sphere(Vec3::Zero(), rc, 2 * n_proxy);
    const KernelSpec g = KernelSpec::single(k);
    MatXc A(lf.check.size(), n_proxy);
    for (std::size_t c = 0; c < lf.check.size(); ++c)
      for (int p = 0; p < n_proxy; ++p) A(c, p) = kernel_raw(g, lf.check[c], kZero, lf.proxy[p], kZero);
    Eigen::BDCSVD<MatXc> svd(A, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const VecX& s = svd.singularValues();
    VecX sinv = VecX::Zero(s.size());
    for (int i = 0; i < s.size(); ++i)
      if (s(i) > 1e-15 * s(0)) sinv(i) = 1.0 / s(i);
    lf.fit = svd.matrixV() * sinv.asDiagonal() * svd.matrixU().adjoint();
    return lf;
  }

  // Largest relative error of the fitted field against random unit sources
  // in the box, on the smallest sphere where proxies are used.
  double fit_error(cplx k, double half, const LevelFit& lf) const {
    std::mt19937 rng(17);
    std::uniform_real_distribution<double> U(-half, half);
    const KernelSpec g = KernelSpec::single(k);
    std::vector<Vec3> src(24);
    for (auto& y : src) y = Vec3(U(rng), U(rng), U(rng));
    std::uniform_real_distribution<double> S(-1, 1);
    std::vector<cplx> q(src.size());
    for (auto& v : q) v = cplx(S(rng), S(rng));
    VecXc u(lf.check.size());
    for (std::size_t c = 0; c < lf.check.size(); ++c) {
      u(c) = 0.0;
      for (std::size_t i = 0; i < src.size(); ++i) u(c) += kernel_raw(g, lf.check[c], kZero, src[i], kZero) * q[i];
    }
    const VecXc ch = lf.fit * u;
    const double a = std::sqrt(3.0) * half;
    double err = 0.0, scale = 0.0;
    for (const auto& x : fibonacci_sphere(Vec3::Zero(), 1.0001 * std::max(a / opt_.theta, 1.25 * a), 40)) {
      cplx exact = 0.0, approx = 0.0;
      for (std::size_t i = 0; i < src.size(); ++i) exact += kernel_raw(g, x, kZero, src[i], kZero) * q[i];
      for (int p = 0; p < lf.n_proxy; ++p) approx += kernel_raw(g, x, kZero, lf.proxy[p], kZero) * ch(p);
      err = std::max(err, std::abs(exact - approx));
      scale = std::max(scale, std::abs(exact));
    }
    return err / scale;
  }

  const LevelFit& level_fit(cplx k, double half) {
    // Laplace fits are scale free: fit once on the unit box and rescale.
    const bool laplace = k == 0.0;
    const double key_half = laplace ? 1.0 : half;
    const auto key = std::make_tuple(k.real(), k.imag(), half);
    if (auto it = fits_.find(key); it != fits_.end()) return it->second;
    const auto base_key = std::make_tuple(k.real(), k.imag(), key_half);
    auto base = fits_.find(base_key);
    if (base == fits_.end()) {
      int n = n_proxy_;
      const int cap = std::max(2048, n_proxy_);
      for (;;) {
        LevelFit lf = build_fit(k, key_half, n);
        const double err = fit_error(k, key_half, lf);
        if (err <= opt_.eps) {
          base = fits_.emplace(base_key, std::move(lf)).first;
          break;
        }
        if (n >= cap)
          throw QuadratureError("treecode: proxy fit error " + std::to_string(err) + " with " +
                                std::to_string(n) + " proxies exceeds eps");
        n = std::min(cap, static_cast<int>(std::ceil(1.5 * n)));
      }
    }
    if (!laplace) return base->second;
    LevelFit scaled = base->second;
    for (auto& p : scaled.proxy) p *= half;
    for (auto& c : scaled.check) c *= half;
    scaled.fit *= half;
    return fits_.emplace(key, std::move(scaled)).first->second;
  }

  TreecodeOptions opt_;
  int n_proxy_ = 0;
  int leaf_ = 32;
  std::unique_ptr<SourceTree> tree_;
  std::uint64_t tree_hash_ = 0;
  std::size_t tree_size_ = 0;
  std::map<std::tuple<double, double, double>, LevelFit> fits_;
};

}  // namespace

int default_proxy_count(double eps, double theta) {
  if (!(eps > 0.0) || !(theta > 0.0)) throw ArgumentError("default_proxy_count: eps and theta must be positive");
  if (theta >= 0.95) return 1024;
  const double m = std::ceil(std::log(eps) / (1.3 * std::log(theta))) + 2.0;
  return std::clamp(static_cast<int>(m * m), 16, 1024);
}

std::unique_ptr<FarAccelerator> direct_accelerator() { return std::make_unique<DirectAccelerator>(); }

std::unique_ptr<FarAccelerator> treecode_accelerator(const TreecodeOptions& opt) {
  return std::make_unique<Treecode>(opt);
}

std::unique_ptr<FarAccelerator> treecode_accelerator(double eps, double theta, int n_proxy) {
  TreecodeOptions opt;
  opt.eps = eps;
  opt.theta = theta;
  opt.n_proxy = n_proxy;
  return treecode_accelerator(opt);
}

}  // namespace lcq
