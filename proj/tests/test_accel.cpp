#include <doctest.h>

#include "lcq/accel.hpp"

#include <random>

using namespace lcq;

namespace {

struct Cloud {
  std::vector<Vec3> pts, nrm;
  std::vector<cplx> str;
};

Cloud cloud(std::mt19937& rng, std::size_t n, double half) {
  std::uniform_real_distribution<double> U(-half, half), S(-1, 1);
  std::normal_distribution<double> N;
  Cloud c;
  for (std::size_t i = 0; i < n; ++i) {
    c.pts.emplace_back(U(rng), U(rng), U(rng));
    c.nrm.push_back(Vec3(N(rng), N(rng), N(rng)).normalized());
    c.str.emplace_back(S(rng), S(rng));
  }
  return c;
}

double rel_l2(const VecXc& a, const VecXc& b) { return (a - b).norm() / b.norm(); }

}  // namespace

TEST_CASE("direct sums") {
  const std::vector<Vec3> src = {Vec3(0, 0, 0), Vec3(1, 0, 0)};
  const std::vector<cplx> s = {2.0, cplx(0, 1)};
  const std::vector<Vec3> tgt = {Vec3(0, 2, 0)};
  const auto acc = direct_accelerator();
  const KernelSpec spec = KernelSpec::single(1.0);
  const VecXc u = acc->evaluate(spec, {src, {}, s, {}}, {tgt, {}}, 0.0);
  const cplx expect = greens(1.0, tgt[0], src[0]) * 2.0 + greens(1.0, tgt[0], src[1]) * cplx(0, 1);
  CHECK(std::abs(u(0) - expect) < 1e-16);

  // Pairs closer than min_dist are skipped.
  const std::vector<Vec3> on = {Vec3(0, 0, 0)};
  const VecXc v = acc->evaluate(spec, {src, {}, s, {}}, {on, {}}, 1e-12);
  CHECK(std::abs(v(0) - greens(1.0, on[0], src[1]) * cplx(0, 1)) < 1e-16);

  CHECK_THROWS_AS(acc->evaluate(KernelSpec::dbl(), {src, {}, s, {}}, {tgt, {}}, 0.0), ArgumentError);
  CHECK_THROWS_AS(acc->evaluate(KernelSpec::adjoint(), {src, {}, s, {}}, {tgt, {}}, 0.0), ArgumentError);
}

TEST_CASE("direct exclusion hook") {
  std::mt19937 rng(1);
  const auto c = cloud(rng, 30, 1.0);
  const std::vector<std::size_t> groups = {0, 10, 20, 30};
  const auto t = cloud(rng, 5, 2.0);
  const auto acc = direct_accelerator();
  REQUIRE(acc->supports_exclusion());
  const KernelSpec spec = KernelSpec::dbl(0.5);
  const SourceSet all{c.pts, c.nrm, c.str, groups};
  const GroupExclusion excl = {{}, {1}, {0, 2}, {0, 1, 2}, {2}};
  const VecXc full = acc->evaluate(spec, all, {t.pts, {}}, 0.0);
  const VecXc part = acc->evaluate_excluding(spec, all, {t.pts, {}}, 0.0, excl);
  for (int i = 0; i < 5; ++i) {
    cplx removed = 0;
    for (int g : excl[i])
      for (std::size_t s = groups[g]; s < groups[g + 1]; ++s)
        removed += kernel_value(spec, t.pts[i], c.pts[s], c.nrm[s]) * c.str[s];
    CHECK(std::abs(full(i) - removed - part(i)) < 1e-13);
  }
  CHECK(part(3) == 0.0);
  CHECK_THROWS_AS(treecode_accelerator(1e-6)->evaluate_excluding(spec, all, {t.pts, {}}, 0.0, excl),
                  UnsupportedError);
}

TEST_CASE("treecode matches direct summation") {
  std::mt19937 rng(2);
  const auto c = cloud(rng, 10000, 1.0);
  const auto t = cloud(rng, 1000, 1.2);
  const auto direct = direct_accelerator();
  for (double eps : {1e-4, 1e-7}) {
    auto tc = treecode_accelerator(eps);
    for (const KernelSpec& spec : {KernelSpec::single(), KernelSpec::single(cplx(0.4, 0.0))}) {
      const SourceSet src{c.pts, c.nrm, c.str, {}};
      const TargetSet tgt{t.pts, t.nrm};
      const double err = rel_l2(tc->evaluate(spec, src, tgt, 0.0), direct->evaluate(spec, src, tgt, 0.0));
      MESSAGE("eps " << eps << " " << spec.describe() << ": rel l2 " << err);
      CHECK(err <= 10 * eps);
    }
  }
}

TEST_CASE("treecode with dipoles, adjoint and combined kernels") {
  std::mt19937 rng(3);
  const auto c = cloud(rng, 3000, 1.0);
  const auto t = cloud(rng, 300, 1.0);
  const auto direct = direct_accelerator();
  auto tc = treecode_accelerator(1e-6);
  for (const KernelSpec& spec : {KernelSpec::dbl(), KernelSpec::adjoint(0.3),
                                 KernelSpec::combined(0.5, 1.0, cplx(0, -0.5))}) {
    const SourceSet src{c.pts, c.nrm, c.str, {}};
    const TargetSet tgt{t.pts, t.nrm};
    const double err = rel_l2(tc->evaluate(spec, src, tgt, 0.0), direct->evaluate(spec, src, tgt, 0.0));
    CAPTURE(spec.describe());
    CHECK(err <= 1e-5);
  }
}

TEST_CASE("treecode skips coincident pairs like direct summation") {
  std::mt19937 rng(4);
  const auto c = cloud(rng, 2000, 1.0);
  const std::vector<Vec3> tgt(c.pts.begin(), c.pts.begin() + 200);
  const SourceSet src{c.pts, c.nrm, c.str, {}};
  const VecXc a = treecode_accelerator(1e-8)->evaluate(KernelSpec::single(), src, {tgt, {}}, 1e-12);
  const VecXc b = direct_accelerator()->evaluate(KernelSpec::single(), src, {tgt, {}}, 1e-12);
  CHECK(a.allFinite());
  CHECK(rel_l2(a, b) <= 1e-7);
}

TEST_CASE("treecode falls back to direct at high frequency") {
  std::mt19937 rng(5);
  const auto c = cloud(rng, 500, 1.0);
  const auto t = cloud(rng, 20, 1.0);
  auto tc = treecode_accelerator(1e-6);
  const SourceSet src{c.pts, c.nrm, c.str, {}};
  const VecXc a = tc->evaluate(KernelSpec::single(20.0), src, {t.pts, {}}, 0.0);
  const VecXc b = direct_accelerator()->evaluate(KernelSpec::single(20.0), src, {t.pts, {}}, 0.0);
  CHECK(tc->warnings().size() == 1);
  CHECK(rel_l2(a, b) < 1e-14);
}

TEST_CASE("treecode parameters") {
  CHECK_THROWS_AS(treecode_accelerator(1e-6, 0.0), ArgumentError);
  CHECK_THROWS_AS(treecode_accelerator(1e-6, 1.5), ArgumentError);
  CHECK_THROWS_AS(treecode_accelerator(1e-6, 0.5, -1), ArgumentError);
  CHECK(default_proxy_count(1e-6, 0.5) > default_proxy_count(1e-3, 0.5));
  CHECK(default_proxy_count(1e-6, 0.3) < default_proxy_count(1e-6, 0.5));
}
