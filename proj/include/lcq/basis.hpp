#pragma once

// Orthonormal polynomials on the reference triangle
//   T0 = { (u,v) : u >= 0, v >= 0, u + v <= 1 }
// together with interpolation node sets and quadrature rules built on them.
//
// Basis functions of order p are K_nm with m <= n < p, stored in (n,m)
// lexicographic order: index(n,m) = n(n+1)/2 + m. This ordering is used by
// every coefficient array and file format in the library.

#include "lcq/types.hpp"

#include <memory>
#include <mutex>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace lcq {

struct UVPoint {
  double u = 0.0;
  double v = 0.0;
};

inline constexpr int basis_count(int p) { return p * (p + 1) / 2; }
inline constexpr int basis_index(int n, int m) { return n * (n + 1) / 2 + m; }

// Normalization constant making K_nm unit-norm in L2(T0).
double koornwinder_norm(int n, int m);

// Throws DomainError when pt lies outside T0 by more than 1e-13.
void check_in_triangle(const UVPoint& pt, double tol = 1e-13);

std::vector<double> eval_koornwinder(int p, const UVPoint& pt);

struct KoornwinderDerivs {
  std::vector<double> values;
  std::vector<double> du;
  std::vector<double> dv;
};
KoornwinderDerivs eval_koornwinder_derivs(int p, const UVPoint& pt);

// Allocation-free variants for inner loops. Spans must hold basis_count(p)
// entries; du/dv may be empty to skip derivatives. No domain check.
void eval_koornwinder_into(int p, double u, double v, std::span<double> values,
                           std::span<double> du = {}, std::span<double> dv = {});

// Gauss-Legendre nodes/weights on [0,1].
struct GaussRule1D {
  std::vector<double> nodes;
  std::vector<double> weights;
};
GaussRule1D gauss_legendre01(int n);

struct QuadratureRule {
  int order = 0;
  std::vector<UVPoint> nodes;
  std::vector<double> weights;
  int exactness = 0;  // integrates every K_nm with n < exactness
  bool positive = true;
};

// Collapsed tensor Gauss rule on T0 exact for total degree <= 2n - 1.
// Independent of the moment-fitted rules; used as a reference.
QuadratureRule collapsed_gauss_rule(int n);

struct InterpNodeSet {
  int order = 0;
  std::vector<UVPoint> nodes;
  MatX matrixU;  // values = U * coefficients; U(j, nm) = K_nm(node_j)
  MatX matrixV;  // coefficients = V * values
  double normV = 0.0;
  double condU = 0.0;
  // Interpolatory weights at the nodes (exact for degree < order).
  std::vector<double> weights;
};

struct BasisLimits {
  int p_max = 12;
  int q_max = 20;
};

// Approximate Fekete nodes: greedy column-pivoted QR over a symmetric
// candidate lattice pulled slightly inside T0.
InterpNodeSet build_interp_nodes(int p);
InterpNodeSet build_interp_nodes(int p, const BasisLimits& limits);

// Rebuild U/V for a given node list (used for loaded node tables).
InterpNodeSet interp_from_nodes(int p, std::vector<UVPoint> nodes);

QuadratureRule build_quadrature(int q);
QuadratureRule build_quadrature(int q, const BasisLimits& limits);

// Largest |sum_i w_i K_nm(x_i) - exact_nm| over n < degree.
double moment_error(const QuadratureRule& rule, int degree);

// Analytic integral of K_nm over T0: 1/sqrt(2) for (0,0), zero otherwise.
double koornwinder_moment(int n, int m);

// Text tables.
//   TRIQUAD <order> <count> <exactness>   then <count> lines "u v w"
//   TRINODE <order> <count>               then <count> lines "u v"
struct LoadedTable {
  enum class Kind { quadrature, nodes } kind = Kind::quadrature;
  QuadratureRule rule;      // valid when kind == quadrature
  InterpNodeSet node_set;   // valid when kind == nodes
  bool negative_weight_warning = false;
};
LoadedTable load_quadrature_table(const std::string& path);
LoadedTable parse_quadrature_table(const std::string& text);
void save_quadrature_table(const std::string& path, const QuadratureRule& rule);
void save_node_table(const std::string& path, const InterpNodeSet& nodes);
std::string format_quadrature_table(const QuadratureRule& rule);

// Koornwinder values (and derivatives) of order p tabulated at a point list.
struct BasisTable {
  int p = 0;
  MatX values;  // npts x n_p
  MatX du;
  MatX dv;
};
BasisTable tabulate(int p, std::span<const UVPoint> points, bool derivs = true);

// Process-wide cache of node sets, rules and tables. Entries are immutable
// after construction; lookups are thread-safe.
class RuleLibrary {
 public:
  static RuleLibrary& instance();

  const InterpNodeSet& interp(int p);
  const QuadratureRule& rule(int q);
  // Order-p basis (with derivatives) at the nodes of the order-q rule.
  const BasisTable& table(int q, int p);
  // Order-p basis (with derivatives) at the order-p interpolation nodes.
  const BasisTable& node_table(int p);

  // Replace the generated rule for rule.order by an externally loaded one.
  void register_rule(QuadratureRule rule);
  void register_nodes(InterpNodeSet nodes);

  BasisLimits limits() const;
  void set_limits(const BasisLimits& limits);

 private:
  mutable std::mutex mutex_;
  BasisLimits limits_;
  std::map<int, std::unique_ptr<InterpNodeSet>> interp_;
  std::map<int, std::unique_ptr<QuadratureRule>> rules_;
  std::map<std::pair<int, int>, std::unique_ptr<BasisTable>> tables_;
  std::map<int, std::unique_ptr<BasisTable>> node_tables_;
};

}  // namespace lcq
