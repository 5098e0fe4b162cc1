#include "lcq/kernels.hpp"

#include <sstream>

namespace lcq {

void KernelSpec::validate() const {
  if (k.imag() < 0.0) throw ArgumentError("wavenumber must have Im(k) >= 0");
}

std::string KernelSpec::describe() const {
  std::ostringstream os;
  switch (family) {
    case KernelFamily::single_layer: os << "single"; break;
    case KernelFamily::double_layer: os << "double"; break;
    case KernelFamily::adjoint_double_layer: os << "adjoint"; break;
    case KernelFamily::combined: os << "combined"; break;
  }
  os.precision(17);
  os << " k=" << k.real() << ',' << k.imag();
  if (family == KernelFamily::combined)
    os << " bd=" << beta_d.real() << ',' << beta_d.imag() << " bs=" << beta_s.real()
       << ',' << beta_s.imag();
  return os.str();
}

bool operator==(const KernelSpec& a, const KernelSpec& b) {
  if (a.family != b.family || a.k != b.k) return false;
  return a.family != KernelFamily::combined || (a.beta_d == b.beta_d && a.beta_s == b.beta_s);
}

cplx greens(cplx k, const Vec3& x, const Vec3& y) {
  const double r = (x - y).norm();
  if (r < 1e-300) throw DomainError("Green's function evaluated at coincident points");
  if (k == 0.0) return 1.0 / (4.0 * kPi * r);
  return std::exp(cplx(0.0, 1.0) * k * r) / (4.0 * kPi * r);
}

cplx kernel_value(const KernelSpec& spec, const Vec3& x, const Vec3& y,
                  const std::optional<Vec3>& n_y, const std::optional<Vec3>& n_x) {
  spec.validate();
  if ((x - y).norm() < 1e-300)
    throw DomainError("kernel evaluated at coincident points");
  if (spec.needs_source_normal() && !n_y)
    throw ArgumentError("double-layer kernel requires the source normal n_y");
  if (spec.needs_target_normal() && !n_x)
    throw ArgumentError("adjoint double-layer kernel requires the target normal n_x");
  return kernel_raw(spec, x, n_x.value_or(Vec3::Zero()), y, n_y.value_or(Vec3::Zero()));
}

}  // namespace lcq
