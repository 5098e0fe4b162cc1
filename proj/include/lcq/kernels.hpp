#pragma once

// Laplace and Helmholtz layer-potential kernels with G_k = e^{ikr} / (4 pi r).
// The double layer differentiates in the source point y, the adjoint in the
// target x. k = 0 selects Laplace.

#include "lcq/types.hpp"

#include <optional>
#include <span>
#include <string>

namespace lcq {

enum class KernelFamily { single_layer, double_layer, adjoint_double_layer, combined };

struct KernelSpec {
  KernelFamily family = KernelFamily::single_layer;
  cplx k = 0.0;
  // Used only by the combined family: beta_d * D + beta_s * S.
  cplx beta_d = 1.0;
  cplx beta_s = 0.0;

  static KernelSpec single(cplx k = 0.0) { return {KernelFamily::single_layer, k}; }
  static KernelSpec dbl(cplx k = 0.0) { return {KernelFamily::double_layer, k}; }
  static KernelSpec adjoint(cplx k = 0.0) { return {KernelFamily::adjoint_double_layer, k}; }
  static KernelSpec combined(cplx k, cplx beta_d, cplx beta_s) {
    return {KernelFamily::combined, k, beta_d, beta_s};
  }

  bool needs_source_normal() const {
    return family == KernelFamily::double_layer ||
           (family == KernelFamily::combined && beta_d != 0.0);
  }
  bool needs_target_normal() const { return family == KernelFamily::adjoint_double_layer; }
  // Throws ArgumentError when Im k < 0.
  void validate() const;
  std::string describe() const;
};

bool operator==(const KernelSpec& a, const KernelSpec& b);

cplx greens(cplx k, const Vec3& x, const Vec3& y);

cplx kernel_value(const KernelSpec& spec, const Vec3& x, const Vec3& y,
                  const std::optional<Vec3>& n_y = std::nullopt,
                  const std::optional<Vec3>& n_x = std::nullopt);

// Unchecked inner-loop form. Normals that the family does not use are ignored;
// r must be positive.
inline cplx kernel_raw(const KernelSpec& spec, const Vec3& x, const Vec3& nx,
                       const Vec3& y, const Vec3& ny) {
  const Vec3 d = x - y;
  const double r2 = d.squaredNorm();
  const double r = std::sqrt(r2);
  const double inv4pir = 1.0 / (4.0 * kPi * r);
  cplx g, radial;  // radial = (1 - ikr) e^{ikr} / (4 pi r^3)
  if (spec.k == 0.0) {
    g = inv4pir;
    radial = inv4pir / r2;
  } else {
    const cplx ikr = cplx(0.0, 1.0) * spec.k * r;
    const cplx e = std::exp(ikr);
    g = e * inv4pir;
    radial = (1.0 - ikr) * g / r2;
  }
  switch (spec.family) {
    case KernelFamily::single_layer:
      return g;
    case KernelFamily::double_layer:
      return ny.dot(d) * radial;
    case KernelFamily::adjoint_double_layer:
      return -nx.dot(d) * radial;
    case KernelFamily::combined:
      return spec.beta_d * (ny.dot(d) * radial) + spec.beta_s * g;
  }
  return 0.0;
}

}  // namespace lcq
