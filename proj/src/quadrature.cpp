#include "lcq/quadrature.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <sstream>

namespace lcq {

double default_eta(int p) {
  if (p <= 4) return 2.75;
  if (p <= 8) return 2.0;
  return 1.25;
}

void NearParams::validate(int p) const {
  if (!(eps > 0.0)) throw ArgumentError("eps must be positive");
  const double e = eta_for(p);
  if (!(eta1 >= 1.0) || !(e >= eta1))
    throw ArgumentError("near parameters must satisfy eta >= eta1 >= 1");
  if (max_levels < 1 || max_levels > 30) throw ArgumentError("max_levels must be in [1, 30]");
  if (!(adaptive_inflation > 0.0)) throw ArgumentError("adaptive inflation must be positive");
}

double patch_dscale(const Patch& patch) {
  auto& lib = RuleLibrary::instance();
  const InterpNodeSet& ns = lib.interp(patch.order);
  const ChartSamples s = chart_samples(patch, lib.node_table(patch.order));
  double d = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < s.J.size(); ++i)
    d = std::min(d, std::sqrt(s.J(i) * std::abs(ns.weights[i])));
  return d;
}

AdaptiveStats& AdaptiveStats::operator+=(const AdaptiveStats& o) {
  fresh_node_evals += o.fresh_node_evals;
  saved_node_evals += o.saved_node_evals;
  triangles += o.triangles;
  adaptive_targets += o.adaptive_targets;
  oversampled_targets += o.oversampled_targets;
  depth_cap_hits += o.depth_cap_hits;
  max_level = std::max(max_level, o.max_level);
  max_accept_ratio = std::max(max_accept_ratio, o.max_accept_ratio);
  return *this;
}

namespace {

// Chart and weighted basis on the order-q rule mapped to the parameter
// triangle (P0, P1, P2).
AdaptiveCache::TriData tri_data(const Patch& patch, int q, const std::array<UVPoint, 3>& P) {
  const QuadratureRule& rule = RuleLibrary::instance().rule(q);
  const int np = basis_count(patch.order);
  const std::size_t n = rule.nodes.size();
  const double e1u = P[1].u - P[0].u, e1v = P[1].v - P[0].v;
  const double e2u = P[2].u - P[0].u, e2v = P[2].v - P[0].v;
  const double frac = std::abs(e1u * e2v - e1v * e2u);
  AdaptiveCache::TriData d;
  d.points.resize(n, 3);
  d.normals.resize(n, 3);
  d.wbasis.resize(n, np);
  std::array<double, 64 * 65 / 2> val, du, dv;
  for (std::size_t i = 0; i < n; ++i) {
    const double u = P[0].u + rule.nodes[i].u * e1u + rule.nodes[i].v * e2u;
    const double v = P[0].v + rule.nodes[i].u * e1v + rule.nodes[i].v * e2v;
    eval_koornwinder_into(patch.order, u, v, std::span(val.data(), np), std::span(du.data(), np),
                          std::span(dv.data(), np));
    Vec3 X = Vec3::Zero(), Xu = Vec3::Zero(), Xv = Vec3::Zero();
    for (int k = 0; k < np; ++k) {
      const Vec3 c = patch.coeffs.row(k).transpose();
      X += val[k] * c;
      Xu += du[k] * c;
      Xv += dv[k] * c;
    }
    const Vec3 cr = Xu.cross(Xv);
    const double J = cr.norm();
    d.points.row(i) = X.transpose();
    d.normals.row(i) = (cr / J).transpose();
    const double w = rule.weights[i] * frac * J;
    for (int k = 0; k < np; ++k) d.wbasis(i, k) = w * val[k];
  }
  return d;
}

void tri_moments(const AdaptiveCache::TriData& d, const Vec3& x, const Vec3& nx,
                 std::span<const KernelSpec> specs, std::vector<VecXc>& out) {
  const Eigen::Index n = d.points.rows();
  VecXc kv(n);
  out.resize(specs.size());
  for (std::size_t s = 0; s < specs.size(); ++s) {
    for (Eigen::Index i = 0; i < n; ++i)
      kv(i) = kernel_raw(specs[s], x, nx, Vec3(d.points.row(i)), Vec3(d.normals.row(i)));
    out[s] = d.wbasis.transpose().cast<cplx>() * kv;
  }
}

double max_diff(const std::vector<VecXc>& a, const std::vector<VecXc>& b) {
  double m = 0.0;
  for (std::size_t s = 0; s < a.size(); ++s) m = std::max(m, (a[s] - b[s]).norm());
  return m;
}

std::array<std::array<UVPoint, 3>, 4> children(const std::array<UVPoint, 3>& P) {
  auto mid = [](const UVPoint& a, const UVPoint& b) {
    return UVPoint{0.5 * (a.u + b.u), 0.5 * (a.v + b.v)};
  };
  const UVPoint m01 = mid(P[0], P[1]), m12 = mid(P[1], P[2]), m02 = mid(P[0], P[2]);
  return {{{P[0], m01, m02}, {m01, P[1], m12}, {m02, m12, P[2]}, {m12, m02, m01}}};
}

constexpr double kRoundoff = 1e-14;

struct AdaptiveRun {
  const Patch& patch;
  int q;
  const Vec3& x;
  const Vec3& nx;
  std::span<const KernelSpec> specs;
  const NearParams& params;
  double base_tol;  // eps * d / |V|
  AdaptiveCache& cache;
  AdaptiveStats& stats;
  bool hit_cap = false;

  const AdaptiveCache::TriData& get(std::uint64_t path, const std::array<UVPoint, 3>& P,
                                    AdaptiveCache::TriData& scratch) {
    const auto n = RuleLibrary::instance().rule(q).nodes.size();
    if (cache.enabled()) {
      if (const auto* hit = cache.find(path)) {
        stats.saved_node_evals += n;
        return *hit;
      }
      stats.fresh_node_evals += n;
      return *cache.insert(path, tri_data(patch, q, P));
    }
    stats.fresh_node_evals += n;
    scratch = tri_data(patch, q, P);
    return scratch;
  }

  // Integrate over triangle P (level, path) given its own estimate.
  std::vector<VecXc> run(const std::array<UVPoint, 3>& P, std::uint64_t path, int level,
                         const std::vector<VecXc>& estimate) {
    ++stats.triangles;
    stats.max_level = std::max(stats.max_level, level + 1);
    const auto kids = children(P);
    std::array<std::vector<VecXc>, 4> est;
    std::vector<VecXc> sum;
    AdaptiveCache::TriData scratch;
    double rmin2 = 1e300;
    for (int c = 0; c < 4; ++c) {
      const auto& d = get((path << 2) | std::uint64_t(c), kids[c], scratch);
      tri_moments(d, x, nx, specs, est[c]);
      rmin2 = std::min(rmin2, (d.points.rowwise() - x.transpose()).rowwise().squaredNorm().minCoeff());
      if (c == 0) {
        sum = est[c];
      } else {
        for (std::size_t s = 0; s < sum.size(); ++s) sum[s] += est[c][s];
      }
    }
    const double frac = std::ldexp(1.0, -2 * level);
    double scale = 0.0;
    for (const auto& v : sum) scale = std::max(scale, v.norm());
    // Deep levels can push the threshold below what rounding allows; kernel
    // values carry a relative error of about |x| / r machine epsilons.
    const double noise = kRoundoff * scale * (1.0 + x.cwiseAbs().maxCoeff() / std::sqrt(rmin2));
    const double thr = std::max(params.adaptive_inflation * base_tol * frac, noise);
    const double diff = max_diff(estimate, sum);
    if (diff < thr) {
      stats.max_accept_ratio = std::max(stats.max_accept_ratio, diff / thr);
      return sum;
    }
    if (level + 1 >= params.max_levels) {
      ++stats.depth_cap_hits;
      hit_cap = true;
      return sum;
    }
    std::vector<VecXc> total;
    for (int c = 0; c < 4; ++c) {
      auto part = run(kids[c], (path << 2) | std::uint64_t(c), level + 1, est[c]);
      if (c == 0) {
        total = std::move(part);
      } else {
        for (std::size_t s = 0; s < total.size(); ++s) total[s] += part[s];
      }
    }
    return total;
  }
};

const std::array<UVPoint, 3> kT0 = {UVPoint{0, 0}, UVPoint{1, 0}, UVPoint{0, 1}};

KernelSpec probe_kernel(const KernelSpec& s) {
  // n(x) is undefined at off-surface probes; the adjoint shares the double
  // layer's far order.
  if (s.family == KernelFamily::adjoint_double_layer) return KernelSpec::dbl(s.k);
  return s;
}

}  // namespace

const AdaptiveCache::TriData* AdaptiveCache::find(std::uint64_t path) const {
  auto it = store_.find(path);
  return it == store_.end() ? nullptr : it->second.get();
}

const AdaptiveCache::TriData* AdaptiveCache::insert(std::uint64_t path, TriData data) {
  auto& slot = store_[path];
  slot = std::make_unique<TriData>(std::move(data));
  return slot.get();
}

std::vector<VecXc> adaptive_moments(const Patch& patch, int q, const Vec3& x, const Vec3& nx,
                                    std::span<const KernelSpec> specs, const NearParams& params,
                                    double normV, AdaptiveCache& cache, AdaptiveStats& stats,
                                    std::vector<Warning>* warnings) {
  AdaptiveRun run{patch, q, x, nx, specs, params,
                  params.eps * patch_dscale(patch) / normV, cache, stats};
  AdaptiveCache::TriData scratch;
  const auto& root = run.get(1, kT0, scratch);
  std::vector<VecXc> est;
  tri_moments(root, x, nx, specs, est);
  ++stats.adaptive_targets;
  auto out = run.run(kT0, 1, 0, est);
  if (run.hit_cap && warnings) {
    std::ostringstream os;
    os << "adaptive depth cap reached on patch " << patch.id << " for target (" << x.x()
       << ", " << x.y() << ", " << x.z() << ")";
    warnings->push_back({"quadrature", os.str()});
  }
  return out;
}

MatXc moments_fixed_order(const Patch& patch, int q, std::span<const Vec3> points,
                          std::span<const Vec3> normals, const KernelSpec& spec) {
  auto& lib = RuleLibrary::instance();
  const QuadratureRule& rule = lib.rule(q);
  const ChartSamples s = chart_samples(patch, lib.table(q, patch.order));
  const BasisTable& t = lib.table(q, patch.order);
  const Eigen::Index n = static_cast<Eigen::Index>(rule.nodes.size());
  MatX wb = t.values;
  for (Eigen::Index i = 0; i < n; ++i) wb.row(i) *= rule.weights[i] * s.J(i);
  MatXc K(points.size(), n);
  for (std::size_t a = 0; a < points.size(); ++a) {
    const Vec3 nx = normals.empty() ? Vec3::Zero() : normals[a];
    for (Eigen::Index i = 0; i < n; ++i)
      K(a, i) = kernel_raw(spec, points[a], nx, Vec3(s.X.row(i)), Vec3(s.normal.row(i)));
  }
  return K * wb.cast<cplx>();
}

std::vector<Vec3> fibonacci_sphere(const Vec3& c, double r, int n) {
  std::vector<Vec3> pts;
  const double golden = kPi * (3.0 - std::sqrt(5.0));
  for (int i = 0; i < n; ++i) {
    const double z = 1.0 - (2.0 * i + 1.0) / n;
    const double rho = std::sqrt(std::max(0.0, 1.0 - z * z));
    const double phi = golden * i;
    pts.push_back(c + r * Vec3(rho * std::cos(phi), rho * std::sin(phi), z));
  }
  return pts;
}

std::vector<Vec3> far_order_probes(const Patch& patch, std::span<const Vec3> near_targets,
                                   double eta) {
  std::vector<std::size_t> order(near_targets.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return (near_targets[a] - patch.centroid).squaredNorm() >
           (near_targets[b] - patch.centroid).squaredNorm();
  });
  std::vector<Vec3> probes;
  const std::size_t n = near_targets.size();
  const std::size_t take = n >= 20 ? 10 : n / 2;
  for (std::size_t i = 0; i < take; ++i) probes.push_back(near_targets[order[i]]);
  if (n < 20) {
    for (const Vec3& p : fibonacci_sphere(patch.centroid, eta * patch.radius)) probes.push_back(p);
  }
  return probes;
}

FarOrderReport select_far_order(const Patch& patch, std::span<const Vec3> near_targets,
                                std::span<const KernelSpec> specs, const NearParams& params,
                                double normV) {
  FarOrderReport rep;
  rep.d = patch_dscale(patch);
  rep.tolerance = params.eps * rep.d / normV;
  rep.probes = far_order_probes(patch, near_targets, params.eta_for(patch.order));
  const int qmax = RuleLibrary::instance().limits().q_max;
  std::vector<KernelSpec> ks;
  for (const auto& s : specs) ks.push_back(probe_kernel(s));

  auto moments = [&](int q) {
    std::vector<MatXc> m;
    for (const auto& s : ks) m.push_back(moments_fixed_order(patch, q, rep.probes, {}, s));
    return m;
  };
  const int p = patch.order;
  std::vector<MatXc> cur = moments(p);
  for (int q = p; q < qmax; ++q) {
    std::vector<MatXc> next = moments(q + 1);
    double diff = 0.0;
    for (std::size_t s = 0; s < ks.size(); ++s)
      diff = std::max(diff, (cur[s] - next[s]).rowwise().norm().maxCoeff());
    rep.last_difference = diff;
    if (diff <= rep.tolerance) {
      rep.q = q;
      return rep;
    }
    cur = std::move(next);
  }
  rep.q = qmax;
  rep.capped = true;
  return rep;
}

std::vector<VecXc> self_moments(const Patch& patch, const UVPoint& target,
                                std::span<const KernelSpec> specs, int n) {
  const int p = patch.order;
  const int np = basis_count(p);
  const ChartJet x0 = chart_eval(patch, target);
  // Metric at the target; used to place the tau split at the foot of the
  // perpendicular measured on the surface.
  const double E = x0.Xu.dot(x0.Xu), F = x0.Xu.dot(x0.Xv), G = x0.Xv.dot(x0.Xv);
  auto inner = [&](double au, double av, double bu, double bv) {
    return E * au * bu + F * (au * bv + av * bu) + G * av * bv;
  };
  const GaussRule1D gl = gauss_legendre01(n);
  std::vector<VecXc> out(specs.size(), VecXc::Zero(np));
  std::array<double, 64 * 65 / 2> val, du, dv;
  std::vector<cplx> kv(specs.size());

  for (int e = 0; e < 3; ++e) {
    const UVPoint A = kT0[e], B = kT0[(e + 1) % 3];
    const double au = A.u - target.u, av = A.v - target.v;
    const double eu = B.u - A.u, ev = B.v - A.v;
    const double det = std::abs(au * ev - av * eu);
    if (det * 0.5 < 1e-14) continue;  // target on this edge
    double foot = -inner(au, av, eu, ev) / inner(eu, ev, eu, ev);
    std::vector<std::pair<double, double>> pieces;
    if (foot > 1e-8 && foot < 1.0 - 1e-8) {
      pieces = {{0.0, foot}, {foot, 1.0}};
    } else {
      pieces = {{0.0, 1.0}};
    }
    for (auto [t0, t1] : pieces) {
      for (int it = 0; it < n; ++it) {
        const double tau = t0 + (t1 - t0) * gl.nodes[it];
        const double wt = (t1 - t0) * gl.weights[it];
        const double du0 = au + tau * eu, dv0 = av + tau * ev;
        for (int is = 0; is < n; ++is) {
          const double s = gl.nodes[is];
          const double u = target.u + s * du0, v = target.v + s * dv0;
          eval_koornwinder_into(p, u, v, std::span(val.data(), np), std::span(du.data(), np),
                                std::span(dv.data(), np));
          Vec3 X = Vec3::Zero(), Xu = Vec3::Zero(), Xv = Vec3::Zero();
          for (int k = 0; k < np; ++k) {
            const Vec3 c = patch.coeffs.row(k).transpose();
            X += val[k] * c;
            Xu += du[k] * c;
            Xv += dv[k] * c;
          }
          const Vec3 cr = Xu.cross(Xv);
          const double J = cr.norm();
          const Vec3 ny = cr / J;
          const double w = wt * gl.weights[is] * s * det * J;
          for (std::size_t k = 0; k < specs.size(); ++k) {
            const cplx kval = kernel_raw(specs[k], x0.X, x0.normal, X, ny) * w;
            for (int m = 0; m < np; ++m) out[k](m) += kval * val[m];
          }
        }
      }
    }
  }
  return out;
}

SelfMatrix self_matrix(const Patch& patch, std::span<const KernelSpec> specs,
                       const NearParams& params, double normV) {
  const InterpNodeSet& ns = RuleLibrary::instance().interp(patch.order);
  const int np = basis_count(patch.order);
  const double tol = params.eps * patch_dscale(patch) / normV;
  SelfMatrix sm;
  sm.patch = patch.id;
  sm.S.assign(specs.size(), MatXc(np, np));
  const MatXc V = ns.matrixV.cast<cplx>();
  constexpr int kStart = 8, kCap = 256;
  for (int t = 0; t < np; ++t) {
    int n = kStart;
    auto prev = self_moments(patch, ns.nodes[t], specs, n);
    for (;;) {
      if (2 * n > kCap) {
        std::ostringstream os;
        os << "self quadrature did not converge on patch " << patch.id << ", node " << t;
        throw QuadratureError(os.str());
      }
      auto next = self_moments(patch, ns.nodes[t], specs, 2 * n);
      const double diff = max_diff(prev, next);
      prev = std::move(next);
      n *= 2;
      if (diff <= tol) break;
    }
    sm.max_gauss = std::max(sm.max_gauss, n);
    for (std::size_t k = 0; k < specs.size(); ++k)
      sm.S[k].row(t) = prev[k].transpose() * V;
  }
  return sm;
}

NearMatrix near_matrix(const Patch& patch, int far_q, std::span<const std::size_t> target_ids,
                       const TargetView& targets, std::span<const KernelSpec> specs,
                       const NearParams& params, double normV, AdaptiveCache& cache,
                       AdaptiveStats& stats, std::vector<Warning>* warnings) {
  const int p = patch.order;
  const int np = basis_count(p);
  const int qmax = RuleLibrary::instance().limits().q_max;
  const double tol = params.eps * patch_dscale(patch) / normV;
  const double r1 = params.eta1 * patch.radius;
  const MatXc V = RuleLibrary::instance().interp(p).matrixV.cast<cplx>();
  const int qa = std::max(far_q, p);
  cache.clear();

  NearMatrix nm;
  nm.patch = patch.id;
  nm.targets.assign(target_ids.begin(), target_ids.end());
  const std::size_t nt = nm.targets.size();
  nm.A.assign(specs.size(), MatXc(nt, np));
  for (const auto& s : specs) {
    if (s.needs_target_normal())
      for (std::size_t i : target_ids)
        if (targets.normal(i).squaredNorm() == 0.0)
          throw ArgumentError("adjoint double layer requested at a target without a normal");
  }

  std::vector<std::size_t> adaptive, single;
  for (std::size_t a = 0; a < nt; ++a) {
    const Vec3& x = targets.points[nm.targets[a]];
    ((x - patch.centroid).norm() <= r1 ? adaptive : single).push_back(a);
  }

  // Outer shell: one fixed rule per target, order raised until consecutive
  // orders agree.
  if (!single.empty()) {
    std::vector<Vec3> pts, nrm;
    for (std::size_t a : single) {
      pts.push_back(targets.points[nm.targets[a]]);
      nrm.push_back(targets.normal(nm.targets[a]));
    }
    std::vector<std::size_t> active(single.size());
    std::iota(active.begin(), active.end(), 0);
    auto block = [&](int q, const std::vector<std::size_t>& idx) {
      std::vector<Vec3> bp, bn;
      for (std::size_t i : idx) {
        bp.push_back(pts[i]);
        bn.push_back(nrm[i]);
      }
      std::vector<MatXc> m;
      for (const auto& s : specs) m.push_back(moments_fixed_order(patch, q, bp, bn, s));
      return m;
    };
    std::vector<MatXc> cur = block(p, active);
    for (int q = p; q < qmax && !active.empty(); ++q) {
      std::vector<MatXc> next = block(q + 1, active);
      std::vector<std::size_t> still;
      std::vector<Eigen::Index> keep;
      for (std::size_t r = 0; r < active.size(); ++r) {
        double diff = 0.0;
        for (std::size_t s = 0; s < specs.size(); ++s)
          diff = std::max(diff, (cur[s].row(r) - next[s].row(r)).norm());
        if (diff <= tol) {
          for (std::size_t s = 0; s < specs.size(); ++s)
            nm.A[s].row(single[active[r]]) = cur[s].row(r) * V;
          ++stats.oversampled_targets;
        } else {
          still.push_back(active[r]);
          keep.push_back(static_cast<Eigen::Index>(r));
        }
      }
      for (std::size_t s = 0; s < specs.size(); ++s) {
        MatXc kept(keep.size(), np);
        for (std::size_t r = 0; r < keep.size(); ++r) kept.row(r) = next[s].row(keep[r]);
        cur[s] = std::move(kept);
      }
      active = std::move(still);
    }
    // Orders exhausted: fall back to adaptive integration.
    for (std::size_t r : active) adaptive.push_back(single[r]);
  }

  for (std::size_t a : adaptive) {
    const std::size_t id = nm.targets[a];
    auto mom = adaptive_moments(patch, qa, targets.points[id], targets.normal(id), specs, params,
                                normV, cache, stats, warnings);
    for (std::size_t s = 0; s < specs.size(); ++s) nm.A[s].row(a) = mom[s].transpose() * V;
  }
  return nm;
}

}  // namespace lcq
