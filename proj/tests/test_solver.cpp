#include <doctest.h>

#include "lcq/solver.hpp"
#include "oracles.hpp"

#include <cmath>
#include <random>

using namespace lcq;

namespace {

LinearOperator dense(const MatXc& A) {
  return {std::size_t(A.rows()), [A](const VecXc& x) { return VecXc(A * x); }};
}

SolveOptions solve_opts(double eps) {
  SolveOptions o;
  o.eval.near.eps = eps;
  return o;
}

double max_radius(const SurfaceMesh& mesh) {
  double h = 0;
  for (const auto& p : mesh.patches) h = std::max(h, p.radius);
  return h;
}

}  // namespace

TEST_CASE("gmres on small dense systems") {
  SUBCASE("identity converges in one step") {
    const VecXc b = VecXc::LinSpaced(7, 1.0, 7.0);
    const auto r = gmres(dense(MatXc::Identity(7, 7)), b, 1e-12, 20);
    CHECK(r.converged);
    CHECK(r.iterations == 1);
    CHECK((r.x - b).norm() < 1e-14);
  }
  SUBCASE("diagonal with ten distinct eigenvalues") {
    MatXc A = MatXc::Zero(10, 10);
    for (int i = 0; i < 10; ++i) A(i, i) = i + 1.0;
    const VecXc b = VecXc::Ones(10);
    const auto r = gmres(dense(A), b, 1e-13, 50);
    CHECK(r.converged);
    CHECK(r.iterations <= 10);
    CHECK((A * r.x - b).norm() < 1e-12);
  }
  SUBCASE("random complex matrix against LU") {
    std::mt19937 rng(11);
    std::normal_distribution<double> N;
    MatXc A(50, 50);
    for (auto& a : A.reshaped()) a = cplx(N(rng), N(rng)) / std::sqrt(50.0);
    A += 2.0 * MatXc::Identity(50, 50);
    VecXc b(50);
    for (auto& v : b) v = cplx(N(rng), N(rng));
    const auto r = gmres(dense(A), b, 1e-12, 100);
    const VecXc x = A.partialPivLu().solve(b);
    CHECK(r.converged);
    CHECK((r.x - x).norm() / x.norm() < 1e-10);
    // Residual estimates never increase and end at the true residual.
    for (std::size_t i = 1; i < r.residuals.size(); ++i) CHECK(r.residuals[i] <= r.residuals[i - 1] * (1 + 1e-12));
    CHECK((A * r.x - b).norm() / b.norm() == doctest::Approx(r.residuals.back()).epsilon(1e-2).scale(1e-13));
  }
  SUBCASE("maxit reached") {
    MatXc A = MatXc::Zero(30, 30);
    for (int i = 0; i < 30; ++i) A(i, i) = std::pow(1.5, i);
    const auto r = gmres(dense(A), VecXc::Ones(30), 1e-14, 5);
    CHECK_FALSE(r.converged);
    CHECK(r.iterations == 5);
    CHECK(r.residuals.size() == 6);
  }
  SUBCASE("zero right-hand side and bad input") {
    const auto r = gmres(dense(MatXc::Identity(3, 3)), VecXc::Zero(3), 1e-10, 5);
    CHECK(r.converged);
    CHECK(r.x.norm() == 0.0);
    CHECK_THROWS_AS(gmres(dense(MatXc::Identity(3, 3)), VecXc::Zero(4), 1e-10, 5), ArgumentError);
    CHECK_THROWS_AS(gmres(dense(MatXc::Identity(3, 3)), VecXc::Zero(3), 1e-10, 0), ArgumentError);
  }
}

TEST_CASE("exterior Dirichlet CFIE reproduces an interior point-source field") {
  const int p = 4;
  const auto mesh = gen_sphere(2, p);
  const cplx k = 1.0;
  const auto src = manufactured_sources(mesh, true, 4, 7);
  VecXc f(mesh.size());
  for (std::size_t i = 0; i < mesh.size(); ++i) f(i) = point_field(k, src, mesh.nodes[i].X);
  auto acc = direct_accelerator();
  auto sol = solve_dirichlet_cfie(mesh, k, f, solve_opts(1e-6), *acc);
  CHECK(sol.gmres.converged);
  MESSAGE("CFIE GMRES iterations " << sol.gmres.iterations);
  CHECK(sol.gmres.iterations < 30);

  const std::vector<Vec3> probes = {Vec3(2, 0, 0), Vec3(0, -1.5, 1), Vec3(1.2, 1.2, 1.2), Vec3(0, 0, 1.1)};
  const VecXc u = sol.evaluate(probes, *acc);
  double err = 0, ref = 0;
  for (std::size_t i = 0; i < probes.size(); ++i) {
    err = std::max(err, std::abs(u(i) - point_field(k, src, probes[i])));
    ref = std::max(ref, std::abs(point_field(k, src, probes[i])));
  }
  const double bound = std::pow(max_radius(mesh), p);
  MESSAGE("CFIE exterior error " << err / ref << ", bound " << bound);
  CHECK(err / ref < bound);
  CHECK(sol.json().find("\"iterations\"") != std::string::npos);
}

TEST_CASE("CFIE operator on sigma = 1 against the brute-force oracle") {
  const int p = 3;
  const cplx k = 1.0;
  const double eps = 1e-6;
  const auto mesh = gen_sphere(0, p);
  const KernelSpec cfie = KernelSpec::combined(k, 1.0, cplx(0, -1) * k);
  const auto cache = precompute(mesh, {cfie}, EvalOptions{{eps}});
  auto acc = direct_accelerator();
  const VecXc one = VecXc::Ones(mesh.size());
  const VecXc op = 0.5 * one + apply(cache, one, *acc).values;

  const auto nodes = build_interp_nodes(p);
  const std::size_t np = nodes.nodes.size();
  for (std::size_t t : {std::size_t(0), std::size_t(7), std::size_t(20), std::size_t(41)}) {
    const std::size_t own = t / np;
    const Vec3& x = mesh.nodes[t].X;
    cplx ref = 0.5;
    for (std::size_t j = 0; j < mesh.patches.size(); ++j) {
      const UVPoint* pre = j == own ? &nodes.nodes[t % np] : nullptr;
      ref += oracle::brute_row(mesh.patches[j], cfie, x, mesh.nodes[t].normal, pre).sum();
    }
    CAPTURE(t);
    CHECK(std::abs(op(t) - ref) <= 2 * eps);
  }
}

TEST_CASE("Laplace single layer: S0 sigma = 1 on the sphere gives sigma = 1") {
  const int p = 4;
  const auto mesh = gen_sphere(1, p);
  auto acc = direct_accelerator();
  // First kind, so GMRES runs on S0 alone with c = 0.
  auto sol = solve_layer(mesh, KernelSpec::single(), 0.0, VecXc::Ones(mesh.size()), solve_opts(1e-8), *acc);
  const double err = surface_l2(mesh, VecXc(sol.sigma.array() - 1.0)) / std::sqrt(surface_area(mesh));
  MESSAGE("sigma error " << err << " after " << sol.gmres.iterations << " iterations");
  CHECK(err < 10 * std::pow(max_radius(mesh), p));
}

TEST_CASE("Green's identity error") {
  const int p = 4;
  auto acc = direct_accelerator();
  EvalOptions o;
  o.near.eps = 1e-8;
  std::vector<double> eg, hs;
  for (int refine : {1, 2}) {
    const auto mesh = gen_sphere(refine, p);
    for (cplx k : {cplx(0.0), cplx(1.5)}) {
      const auto src = manufactured_sources(mesh, false, 5, 3);
      const auto r = greens_identity_error(mesh, k, src, o, *acc);
      MESSAGE("refine " << refine << ", k " << k.real() << ": eps_g " << r.eps_g << ", h " << r.h);
      CHECK(r.eps_g < std::pow(r.h, p));
      if (k == 0.0) {
        eg.push_back(r.eps_g);
        hs.push_back(r.h);
      }
    }
  }
  // The error is set by the chart approximation of the sphere, so it falls
  // at the geometric rate.
  const double rate = std::log(eg[0] / eg[1]) / std::log(hs[0] / hs[1]);
  MESSAGE("observed order " << rate);
  CHECK(rate > p - 1);
}

TEST_CASE("manufactured sources") {
  const auto mesh = gen_sphere(1, 3);
  const auto in = manufactured_sources(mesh, true, 6, 1);
  const auto out = manufactured_sources(mesh, false, 6, 1);
  CHECK(in.points.size() == 6);
  for (const auto& x : in.points) CHECK(x.norm() < 0.6);
  for (const auto& x : out.points) CHECK(x.norm() > 1.4);
  const auto again = manufactured_sources(mesh, true, 6, 1);
  CHECK(again.points[3] == in.points[3]);
  CHECK(again.strengths[5] == in.strengths[5]);
  CHECK_THROWS_AS(manufactured_sources(mesh, true, 0), ArgumentError);
  // Normal derivative against a centred difference.
  const Vec3 x(1.1, 0.3, -0.2), n = Vec3(1, 2, -1).normalized();
  const double h = 1e-5;
  const cplx fd = (point_field(0.8, in, x + h * n) - point_field(0.8, in, x - h * n)) / (2 * h);
  CHECK(std::abs(point_field_normal(0.8, in, x, n) - fd) < 1e-7);
}
