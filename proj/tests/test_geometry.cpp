#include <doctest.h>

#include "lcq/geometry.hpp"
#include "oracles.hpp"

#include <cmath>
#include <random>

using namespace lcq;

namespace {

template <class F>
Patch make_patch(int p, F f, CentroidConvention conv = CentroidConvention::parameter_mean) {
  std::vector<Vec3> pts;
  for (const auto& n : build_interp_nodes(p).nodes) pts.push_back(f(n.u, n.v));
  return patch_from_samples(p, pts, conv);
}

// Octant of the unit sphere, same construction as the generator.
Vec3 octant(double u, double v) {
  const Vec3 a(1, 0, 0), b(0, 1, 0), c(0, 0, 1);
  return (a + u * (b - a) + v * (c - a)).normalized();
}

}  // namespace

TEST_CASE("flat reference chart") {
  const Patch patch = make_patch(5, [](double u, double v) { return Vec3(u, v, 0); });
  std::mt19937 rng(1);
  for (int i = 0; i < 20; ++i) {
    const auto j = chart_eval(patch, oracle::random_point(rng, 0.0));
    CHECK(std::abs(j.J - 1.0) < 1e-12);
    CHECK((j.normal - Vec3(0, 0, 1)).norm() < 1e-12);
  }
}

TEST_CASE("affine chart has constant Jacobian twice the triangle area") {
  const Vec3 a(0, 0, 0), b(2, 0, 0), c(0, 3, 1);
  const Patch patch = make_patch(3, [&](double u, double v) { return Vec3(a + u * (b - a) + v * (c - a)); });
  const double area = 0.5 * (b - a).cross(c - a).norm();
  std::mt19937 rng(2);
  for (int i = 0; i < 20; ++i)
    CHECK(std::abs(chart_eval(patch, oracle::random_point(rng, 0.0)).J - 2 * area) < 1e-12);
}

TEST_CASE("curved chart reproduces the analytic surface") {
  // Interpolation error on a curved patch shrinks like h^p. A whole octant at
  // p = 6 is off by ~5e-3; the octant patch of a three-times refined sphere
  // (edge scaled by 1/8) reaches 1e-7.
  std::mt19937 rng(3);
  double prev = 0;
  for (int level = 0; level <= 3; ++level) {
    const double s = std::ldexp(1.0, -level);
    auto piece = [s](double u, double v) { return octant(s * u, s * v); };
    const Patch patch = make_patch(6, piece);
    double err = 0;
    for (int i = 0; i < 20; ++i) {
      const auto pt = oracle::random_point(rng, 0.0);
      err = std::max(err, (chart_eval(patch, pt).X - piece(pt.u, pt.v)).norm());
    }
    MESSAGE("p=6 octant piece at scale " << s << ": max error " << err);
    if (level > 0) CHECK(err < prev / 16);
    if (level == 3) CHECK(err < 1e-7);
    prev = err;
  }
}

TEST_CASE("chart derivatives agree with central differences") {
  const Patch patch = make_patch(6, octant);
  const double h = 1e-6;
  std::mt19937 rng(4);
  for (int i = 0; i < 20; ++i) {
    const auto pt = oracle::random_point(rng, 0.01);
    const auto j = chart_eval(patch, pt);
    const Vec3 fu = (chart_eval(patch, {pt.u + h, pt.v}).X - chart_eval(patch, {pt.u - h, pt.v}).X) / (2 * h);
    const Vec3 fv = (chart_eval(patch, {pt.u, pt.v + h}).X - chart_eval(patch, {pt.u, pt.v - h}).X) / (2 * h);
    CHECK((fu - j.Xu).norm() < 1e-6 * (1 + j.Xu.norm()));
    CHECK((fv - j.Xv).norm() < 1e-6 * (1 + j.Xv.norm()));
  }
}

TEST_CASE("chart reproduces its samples at the nodes") {
  const auto nodes = build_interp_nodes(7).nodes;
  const Patch patch = make_patch(7, octant);
  for (const auto& n : nodes)
    CHECK((chart_eval(patch, n).X - octant(n.u, n.v)).norm() < 1e-12);
}

TEST_CASE("degenerate charts are rejected") {
  CHECK_THROWS_AS(make_patch(3, [](double u, double) { return Vec3(u, 0, 0); }), GeometryError);
  std::vector<Vec3> too_few(5, Vec3::Zero());
  CHECK_THROWS_AS(patch_from_samples(3, too_few), ArgumentError);
}

TEST_CASE("centroid conventions and enclosing radius") {
  auto flat = [](double u, double v) { return Vec3(u, v, 0); };
  const Patch lit = make_patch(3, flat, CentroidConvention::literal_unnormalized);
  CHECK((lit.centroid - Vec3(1.0 / 6, 1.0 / 6, 0)).norm() < 1e-14);
  const Patch mean = make_patch(3, flat);
  CHECK((mean.centroid - Vec3(1.0 / 3, 1.0 / 3, 0)).norm() < 1e-14);
  for (const Patch* p : {&lit, &mean})
    for (const Vec3& v : {Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0)})
      CHECK(p->radius >= (v - p->centroid).norm());

  // Monte Carlo containment on curved patches.
  std::mt19937 rng(5);
  for (auto conv : {CentroidConvention::parameter_mean, CentroidConvention::literal_unnormalized}) {
    const Patch patch = make_patch(6, octant, conv);
    int outside = 0;
    for (int i = 0; i < 10000; ++i) {
      const auto pt = oracle::random_point(rng, 0.0);
      if ((chart_eval(patch, pt).X - patch.centroid).norm() > patch.radius) ++outside;
    }
    CHECK(outside == 0);
  }
  const auto st = gen_stellarator(3, 5, 4);
  for (const auto& patch : st.patches) {
    int outside = 0;
    for (int i = 0; i < 2000; ++i) {
      const auto pt = oracle::random_point(rng, 0.0);
      if ((chart_eval(patch, pt).X - patch.centroid).norm() > patch.radius) ++outside;
    }
    CHECK(outside == 0);
  }
}

TEST_CASE("aspect ratio") {
  CHECK(std::abs(make_patch(3, [](double u, double v) { return Vec3(u, v, 0); }).aspect - 1.0) < 1e-10);
  CHECK(std::abs(make_patch(3, [](double u, double v) { return Vec3(2 * u, v, 0); }).aspect - 4.0) < 1e-10);
  // The equilateral image of T0 is not isotropic in (u,v): eigenvalues 3/2, 1/2.
  const Vec3 b(1, 0, 0), c(0.5, std::sqrt(3.0) / 2, 0);
  CHECK(std::abs(make_patch(3, [&](double u, double v) { return Vec3(u * b + v * c); }).aspect - 3.0) < 1e-10);

  // Per-node eigenvalues from an independent symmetric eigen solve.
  const auto mesh = gen_stellarator(2, 6, 4);
  const auto& ns = build_interp_nodes(4);
  double amax = 0, asum = 0;
  for (const auto& patch : mesh.patches) {
    double num = 0, den = 0;
    for (std::size_t i = 0; i < ns.nodes.size(); ++i) {
      const auto j = chart_eval(patch, ns.nodes[i]);
      Eigen::Matrix2d g;
      g << j.Xu.dot(j.Xu), j.Xu.dot(j.Xv), j.Xu.dot(j.Xv), j.Xv.dot(j.Xv);
      Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(g);
      const double r = es.eigenvalues()(1) / es.eigenvalues()(0);
      num += r * r * j.J * ns.weights[i];
      den += j.J * ns.weights[i];
    }
    const double a = std::sqrt(num / den);
    CHECK(std::abs(a - patch.aspect) < 1e-9 * a);
    amax = std::max(amax, a);
    asum += a;
  }
  MESSAGE("stellarator 2x6 p=4: a_max " << amax << " a_avg " << asum / mesh.patches.size());
}

TEST_CASE("sphere generator") {
  const auto m0 = gen_sphere(0, 4);
  CHECK(m0.patches.size() == 8);
  CHECK(m0.size() == 80);
  CHECK(gen_sphere(1, 4).patches.size() == 32);
  CHECK(gen_sphere(0, 3, SphereBase::icosahedron).patches.size() == 20);
  for (const auto& m : {m0, gen_sphere(1, 3, SphereBase::icosahedron)}) {
    CHECK(signed_volume(m) > 0);
    for (const auto& n : m.nodes) {
      CHECK(n.J > 0);
      CHECK(n.normal.dot(n.X) > 0.9);
    }
  }

  // Area convergence to 4 pi. The observed order approaches p-1 from below
  // for odd p (p for even p), so it is read off the two finest levels.
  for (int p : {3, 4, 5}) {
    std::vector<double> err;
    for (int r = 0; r <= 4; ++r) err.push_back(std::abs(surface_area(gen_sphere(r, p)) - 4 * kPi));
    const double order = std::log2(err[3] / err[4]);
    MESSAGE("p=" << p << " area errors " << err[0] << " .. " << err[4] << ", order " << order);
    CHECK(order >= p - 1 - 0.05);
    for (int r = 1; r <= 4; ++r) CHECK(err[r] < err[r - 1]);
  }
  // Oversampled area sums converge as well.
  double prev = 1e300;
  for (int r = 0; r <= 4; r += 2) {
    double area = 0;
    for (const auto& patch : gen_sphere(r, 4).patches)
      for (const auto& n : oversample_patch(patch, 10)) area += n.weight;
    const double err = std::abs(area - 4 * kPi);
    CHECK(err < prev / 100);
    prev = err;
  }
  CHECK(prev < 1e-4);
}

TEST_CASE("stellarator") {
  const Vec3 x = stellarator_point(0, 0);
  CHECK((x - Vec3(5.15, 0, 0)).norm() < 1e-14);
  const auto mesh = gen_stellarator(4, 8, 4);
  CHECK(mesh.patches.size() == 64);
  CHECK(signed_volume(mesh) > 0);
  for (const auto& n : mesh.nodes) CHECK(n.J > 0);

  // J continuity across the cell diagonal shared by patches 2k and 2k+1.
  const auto fine = gen_stellarator(6, 12, 6);
  double maxjump = 0, maxJ = 0;
  for (std::size_t k = 0; k + 1 < fine.patches.size(); k += 2) {
    const Patch &a = fine.patches[k], &b = fine.patches[k + 1];
    // The diagonal p00-p11 is the u=0 edge of one triangle and the v=0 edge
    // of the other; which one depends on the orientation the generator chose.
    const bool a_on_u = (chart_eval(a, {0.0, 0.5}).X - chart_eval(b, {0.5, 0.0}).X).norm() < 1e-3;
    for (int i = 1; i < 10; ++i) {
      const double t = i / 10.0;
      const auto ja = a_on_u ? chart_eval(a, {0.0, t}) : chart_eval(a, {t, 0.0});
      const auto jb = a_on_u ? chart_eval(b, {t, 0.0}) : chart_eval(b, {0.0, t});
      CHECK((ja.X - jb.X).norm() < 1e-4);
      // Both charts are affine reparameterizations of equal area, so J
      // agrees up to discretization error.
      maxjump = std::max(maxjump, std::abs(ja.J - jb.J));
      maxJ = std::max(maxJ, ja.J);
    }
  }
  MESSAGE("stellarator J jump across diagonals " << maxjump << " (max J " << maxJ << ")");
  CHECK(maxjump < 1e-3 * maxJ);
}

TEST_CASE("flat triangle import") {
  const auto one = parse_flat_tri("3 1\n0 0 0\n1 0 0\n0 1 0\n1 2 3\n", 3);
  CHECK(one.mesh.patches.size() == 1);
  for (const auto& n : one.mesh.nodes) CHECK(std::abs(n.J - 1.0) < 1e-12);
  CHECK_FALSE(one.closed);

  // Octahedron listed with inward orientation.
  const std::string octa =
      "6 8\n1 0 0\n-1 0 0\n0 1 0\n0 -1 0\n0 0 1\n0 0 -1\n"
      "1 5 3\n3 5 2\n2 5 4\n4 5 1\n1 3 6\n3 2 6\n2 4 6\n4 1 6\n";
  const auto oct = parse_flat_tri(octa, 3);
  CHECK(oct.closed);
  CHECK(oct.flipped);
  CHECK(signed_volume(oct.mesh) > 0);
  CHECK(std::abs(signed_volume(oct.mesh) - 4.0 / 3.0) < 1e-12);

  const std::string cube =
      "9 12\n0 0 0\n1 0 0\n1 1 0\n0 1 0\n0 0 1\n1 0 1\n1 1 1\n0 1 1\n5 5 5\n"
      "1 3 2\n1 4 3\n5 6 7\n5 7 8\n1 2 6\n1 6 5\n2 3 7\n2 7 6\n3 4 8\n3 8 7\n4 1 5\n4 5 8\n";
  const auto cb = parse_flat_tri(cube, 2);
  CHECK(std::abs(surface_area(cb.mesh) - 6.0) < 1e-12);
  CHECK(cb.closed);
  CHECK_FALSE(cb.flipped);
  CHECK(cb.warnings.size() == 1);  // unreferenced vertex 9

  try {
    parse_flat_tri("3 2\n0 0 0\n1 0 0\n2 0 0\n1 2 3\n1 1 2\n", 2);
    FAIL("expected degenerate triangle error");
  } catch (const GeometryError& e) {
    CHECK(std::string(e.what()).find("triangle 1") != std::string::npos);
  }
  CHECK_THROWS_AS(parse_flat_tri("3 1\n0 0 0\n1 0 0\n0 1 x\n1 2 3\n", 2), ParseError);
}

TEST_CASE("oversampling") {
  const Vec3 a(0, 0, 0), b(3, 0, 0), c(0, 1, 2);
  const Patch flat = make_patch(3, [&](double u, double v) { return Vec3(a + u * (b - a) + v * (c - a)); });
  double sum = 0;
  for (const auto& n : oversample_patch(flat, 4)) sum += n.weight;
  CHECK(std::abs(sum - 0.5 * (b - a).cross(c - a).norm()) < 1e-13);

  const Patch sp = make_patch(5, octant);
  const auto same = oversample_patch(sp, 5);
  const auto& ns = build_interp_nodes(5);
  for (std::size_t i = 0; i < same.size(); ++i)
    CHECK((same[i].point - octant(ns.nodes[i].u, ns.nodes[i].v)).norm() < 1e-12);

  // Degree p-1 density interpolated from nodes to oversampled points.
  std::mt19937 rng(9);
  for (int p : {3, 6}) {
    const auto& nodes = build_interp_nodes(p);
    auto f = [](double u, double v, int deg) {
      double acc = 0;
      for (int i = 0; i <= deg; ++i) acc += std::pow(u, i) * std::pow(v, deg - i) * (i + 1);
      return acc + 1;
    };
    VecX vals(nodes.nodes.size());
    for (std::size_t i = 0; i < nodes.nodes.size(); ++i) vals(i) = f(nodes.nodes[i].u, nodes.nodes[i].v, p - 1);
    const VecX coef = nodes.matrixV * vals;
    for (int q = p; q <= 12; q += 3) {
      const auto& rule = RuleLibrary::instance().rule(q);
      const VecX interp = RuleLibrary::instance().table(q, p).values * coef;
      for (std::size_t i = 0; i < rule.nodes.size(); ++i)
        CHECK(std::abs(interp(i) - f(rule.nodes[i].u, rule.nodes[i].v, p - 1)) < 1e-11);
    }
  }
}

TEST_CASE("flip and file round trips") {
  const Patch p = make_patch(4, octant);
  const Patch f = flip_patch(p);
  const auto j1 = chart_eval(p, {0.2, 0.3});
  const auto j2 = chart_eval(f, {0.3, 0.2});
  CHECK((j1.X - j2.X).norm() < 1e-12);
  CHECK((j1.normal + j2.normal).norm() < 1e-12);

  const auto mesh = gen_sphere(1, 4);
  const auto back = parse_kpatch(format_kpatch(mesh));
  REQUIRE(back.patches.size() == mesh.patches.size());
  for (std::size_t i = 0; i < mesh.patches.size(); ++i)
    CHECK((back.patches[i].coeffs - mesh.patches[i].coeffs).cwiseAbs().maxCoeff() < 1e-14);
  CHECK(mesh_hash(mesh) == mesh_hash(gen_sphere(1, 4)));
  CHECK(mesh_hash(mesh) != mesh_hash(gen_sphere(1, 5)));
  CHECK_THROWS_AS(parse_kpatch("KPATCH 1 3\n0 0 0\n"), ParseError);
}
