#include "lcq/solver.hpp"

#include <json.hpp>

#include <chrono>
#include <random>

namespace lcq {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

}  // namespace

GmresResult gmres(const LinearOperator& op, const VecXc& rhs, double tol, int maxit) {
  if (static_cast<std::size_t>(rhs.size()) != op.dim)
    throw ArgumentError("gmres: right-hand side length does not match the operator");
  if (maxit < 1) throw ArgumentError("gmres: maxit must be positive");
  GmresResult res;
  const Eigen::Index n = rhs.size();
  res.x = VecXc::Zero(n);
  res.residuals.push_back(1.0);
  const double beta = rhs.norm();
  if (beta == 0.0) {
    res.converged = true;
    return res;
  }

  std::vector<VecXc> Q = {rhs / beta};
  MatXc H = MatXc::Zero(maxit + 1, maxit);
  std::vector<double> cs(maxit);
  std::vector<cplx> sn(maxit);
  VecXc g = VecXc::Zero(maxit + 1);
  g(0) = beta;
  int k = 0;
  for (int j = 0; j < maxit; ++j) {
    VecXc w = op.apply(Q[j]);
    if (w.size() != n) throw ArgumentError("gmres: operator returned a vector of the wrong length");
    for (int i = 0; i <= j; ++i) {
      H(i, j) = Q[i].dot(w);
      w -= H(i, j) * Q[i];
    }
    const double hnext = w.norm();
    H(j + 1, j) = hnext;
    for (int i = 0; i < j; ++i) {
      const cplx a = H(i, j), b = H(i + 1, j);
      H(i, j) = cs[i] * a + sn[i] * b;
      H(i + 1, j) = -std::conj(sn[i]) * a + cs[i] * b;
    }
    const cplx a = H(j, j), b = H(j + 1, j);
    const double r = std::hypot(std::abs(a), std::abs(b));
    if (r == 0.0) {
      cs[j] = 1.0;
      sn[j] = 0.0;
    } else if (std::abs(a) == 0.0) {
      cs[j] = 0.0;
      sn[j] = 1.0;
    } else {
      cs[j] = std::abs(a) / r;
      sn[j] = (a / std::abs(a)) * std::conj(b) / r;
    }
    H(j, j) = cs[j] * a + sn[j] * b;
    H(j + 1, j) = 0.0;
    g(j + 1) = -std::conj(sn[j]) * g(j);
    g(j) = cs[j] * g(j);
    k = j + 1;
    const double rel = std::abs(g(j + 1)) / beta;
    res.residuals.push_back(rel);
    // A vanishing new direction means the Krylov space holds the solution.
    const bool breakdown = hnext <= 1e-14 * std::abs(H(j, j));
    if (rel <= tol || breakdown) {
      res.converged = true;
      break;
    }
    Q.push_back(w / hnext);
  }
  const VecXc y = H.topLeftCorner(k, k).triangularView<Eigen::Upper>().solve(g.head(k));
  for (int i = 0; i < k; ++i) res.x += y(i) * Q[i];
  res.iterations = k;
  return res;
}

VecXc LayerSolution::evaluate(std::span<const Vec3> points, FarAccelerator& acc) {
  const std::size_t first = extend_targets(cache, points);
  const Potential pot = apply(cache, sigma, acc, 0);
  return pot.values.segment(first, points.size());
}

std::string LayerSolution::json() const {
  nlohmann::json j = {{"iterations", gmres.iterations},
                      {"converged", gmres.converged},
                      {"residuals", gmres.residuals},
                      {"t_precompute", t_precompute},
                      {"t_solve", t_solve},
                      {"t_apply", t_apply},
                      {"metrics", nlohmann::json::parse(metrics(cache, t_apply).json())}};
  return j.dump();
}

LayerSolution solve_layer(const SurfaceMesh& mesh, const KernelSpec& kernel, cplx identity,
                          const VecXc& f, const SolveOptions& opt, FarAccelerator& acc) {
  if (static_cast<std::size_t>(f.size()) != mesh.size())
    throw ArgumentError("boundary data must have one value per node");
  LayerSolution sol;
  auto t0 = Clock::now();
  sol.cache = precompute(mesh, {kernel}, opt.eval);
  sol.t_precompute = seconds_since(t0);
  const std::size_t n = mesh.size();
  int applications = 0;
  double t_apply = 0.0;
  LinearOperator op{n, [&](const VecXc& x) {
                      const Potential p = apply(sol.cache, x, acc, 0);
                      ++applications;
                      t_apply += p.t_lp;
                      return VecXc(identity * x + p.values.head(n));
                    }};
  t0 = Clock::now();
  const double tol = opt.tol > 0.0 ? opt.tol : opt.eval.near.eps;
  sol.gmres = gmres(op, f, tol, opt.maxit);
  sol.t_solve = seconds_since(t0);
  sol.t_apply = applications > 0 ? t_apply / applications : 0.0;
  sol.sigma = sol.gmres.x;
  return sol;
}

LayerSolution solve_dirichlet_cfie(const SurfaceMesh& mesh, cplx k, const VecXc& f,
                                   const SolveOptions& opt, FarAccelerator& acc) {
  const cplx ik = cplx(0.0, 1.0) * k;
  return solve_layer(mesh, KernelSpec::combined(k, 1.0, -ik), 0.5, f, opt, acc);
}

PointSources manufactured_sources(const SurfaceMesh& mesh, bool interior, int n, unsigned seed,
                                  double scale) {
  if (mesh.nodes.empty()) throw ArgumentError("manufactured_sources: empty mesh");
  if (n < 1) throw ArgumentError("manufactured_sources: need at least one source");
  Vec3 c = Vec3::Zero();
  for (const auto& node : mesh.nodes) c += node.X;
  c /= double(mesh.nodes.size());
  double rmin = 1e300, rmax = 0.0;
  for (const auto& node : mesh.nodes) {
    const double r = (node.X - c).norm();
    rmin = std::min(rmin, r);
    rmax = std::max(rmax, r);
  }
  if (scale <= 0.0) scale = interior ? 0.5 : 1.5;
  const double radius = scale * (interior ? rmin : rmax);
  std::mt19937 rng(seed);
  std::normal_distribution<double> N;
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  PointSources src;
  for (int i = 0; i < n; ++i) {
    const Vec3 d = Vec3(N(rng), N(rng), N(rng)).normalized();
    src.points.push_back(c + radius * d);
    src.strengths.emplace_back(U(rng), U(rng));
  }
  return src;
}

cplx point_field(cplx k, const PointSources& src, const Vec3& x) {
  cplx u = 0.0;
  for (std::size_t i = 0; i < src.points.size(); ++i) u += greens(k, x, src.points[i]) * src.strengths[i];
  return u;
}

cplx point_field_normal(cplx k, const PointSources& src, const Vec3& x, const Vec3& n) {
  cplx u = 0.0;
  const KernelSpec grad = KernelSpec::adjoint(k);
  for (std::size_t i = 0; i < src.points.size(); ++i)
    u += kernel_value(grad, x, src.points[i], std::nullopt, n) * src.strengths[i];
  return u;
}

double surface_l2(const SurfaceMesh& mesh, const VecXc& v) {
  if (static_cast<std::size_t>(v.size()) < mesh.size())
    throw ArgumentError("surface_l2: vector shorter than the node count");
  double s = 0.0;
  for (std::size_t i = 0; i < mesh.size(); ++i) s += std::norm(v(i)) * mesh.nodes[i].weight;
  return std::sqrt(s);
}

GreensIdentityResult greens_identity_error(const SurfaceMesh& mesh, cplx k, const PointSources& src,
                                           const EvalOptions& opt, FarAccelerator& acc) {
  const std::size_t n = mesh.size();
  VecXc u(n), dudn(n);
  for (std::size_t i = 0; i < n; ++i) {
    u(i) = point_field(k, src, mesh.nodes[i].X);
    dudn(i) = point_field_normal(k, src, mesh.nodes[i].X, mesh.nodes[i].normal);
  }
  const QuadCache cache = precompute(mesh, {KernelSpec::single(k), KernelSpec::dbl(k)}, opt);
  const VecXc S = apply(cache, dudn, acc, 0).values.head(n);
  const VecXc D = apply(cache, u, acc, 1).values.head(n);
  GreensIdentityResult r;
  r.eps_g = surface_l2(mesh, VecXc(0.5 * u - S + D)) / surface_l2(mesh, u);
  r.n = n;
  for (const auto& p : mesh.patches) r.h = std::max(r.h, p.radius);
  r.metrics = cache.metrics;
  return r;
}

}  // namespace lcq
