#include "lcq/basis.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

namespace lcq {

double koornwinder_norm(int n, int m) {
  return std::sqrt(2.0 * (2.0 * m + 1.0) * (n + 1.0));
}

double koornwinder_moment(int n, int m) {
  return (n == 0 && m == 0) ? 1.0 / std::sqrt(2.0) : 0.0;
}

void check_in_triangle(const UVPoint& pt, double tol) {
  if (!(pt.u >= -tol && pt.v >= -tol && pt.u + pt.v <= 1.0 + tol)) {
    std::ostringstream os;
    os << std::setprecision(17) << "point (" << pt.u << ", " << pt.v
       << ") lies outside the reference triangle";
    throw DomainError(os.str());
  }
}

void eval_koornwinder_into(int p, double u, double v, std::span<double> values,
                           std::span<double> du, std::span<double> dv) {
  const bool want = !du.empty();
  // Scaled Legendre Q_m(s,t) = t^m P_m(s/t), s = 2u+v-1, t = 1-v. The
  // recurrence (m+1) Q_{m+1} = (2m+1) s Q_m - m t^2 Q_{m-1} stays finite at
  // t = 0, so the v -> 1 corner needs no special case.
  const double s = 2.0 * u + v - 1.0;
  const double t = 1.0 - v;
  const double y = 1.0 - 2.0 * v;

  constexpr int kMaxOrder = 64;
  double q[kMaxOrder], qu[kMaxOrder], qv[kMaxOrder];
  double jac[kMaxOrder], djac[kMaxOrder];

  q[0] = 1.0;
  qu[0] = 0.0;
  qv[0] = 0.0;
  if (p > 1) {
    q[1] = s;
    qu[1] = 2.0;
    qv[1] = 1.0;
  }
  for (int m = 1; m + 1 < p; ++m) {
    const double a = 2.0 * m + 1.0;
    const double b = m * t * t;
    q[m + 1] = (a * s * q[m] - b * q[m - 1]) / (m + 1.0);
    qu[m + 1] = (a * (2.0 * q[m] + s * qu[m]) - b * qu[m - 1]) / (m + 1.0);
    qv[m + 1] = (a * (q[m] + s * qv[m]) -
                 m * (-2.0 * t * q[m - 1] + t * t * qv[m - 1])) /
                (m + 1.0);
  }

  for (int m = 0; m < p; ++m) {
    // Jacobi P_k^{(0, 2m+1)}(y) for k = 0 .. p-1-m.
    const double alpha = 0.0;
    const double beta = 2.0 * m + 1.0;
    const int kmax = p - 1 - m;
    jac[0] = 1.0;
    djac[0] = 0.0;
    if (kmax >= 1) {
      jac[1] = (alpha + 1.0) + (alpha + beta + 2.0) * (y - 1.0) / 2.0;
      djac[1] = (alpha + beta + 2.0) / 2.0;
    }
    for (int k = 1; k < kmax; ++k) {
      const double ab = alpha + beta;
      const double c1 = 2.0 * (k + 1) * (k + ab + 1) * (2 * k + ab);
      const double c2 = (2 * k + ab + 1) * (alpha * alpha - beta * beta);
      const double c3 = (2 * k + ab) * (2 * k + ab + 1) * (2 * k + ab + 2);
      const double c4 = 2.0 * (k + alpha) * (k + beta) * (2 * k + ab + 2);
      jac[k + 1] = ((c2 + c3 * y) * jac[k] - c4 * jac[k - 1]) / c1;
      djac[k + 1] =
          (c3 * jac[k] + (c2 + c3 * y) * djac[k] - c4 * djac[k - 1]) / c1;
    }
    for (int n = m; n < p; ++n) {
      const int k = n - m;
      const double c = koornwinder_norm(n, m);
      const int idx = basis_index(n, m);
      values[idx] = c * q[m] * jac[k];
      if (want) {
        du[idx] = c * qu[m] * jac[k];
        dv[idx] = c * (qv[m] * jac[k] - 2.0 * q[m] * djac[k]);
      }
    }
  }
}

std::vector<double> eval_koornwinder(int p, const UVPoint& pt) {
  if (p < 1) throw ArgumentError("Koornwinder order must be >= 1");
  check_in_triangle(pt);
  std::vector<double> out(basis_count(p));
  eval_koornwinder_into(p, pt.u, pt.v, out);
  return out;
}

KoornwinderDerivs eval_koornwinder_derivs(int p, const UVPoint& pt) {
  if (p < 1) throw ArgumentError("Koornwinder order must be >= 1");
  check_in_triangle(pt);
  KoornwinderDerivs d;
  d.values.resize(basis_count(p));
  d.du.resize(basis_count(p));
  d.dv.resize(basis_count(p));
  eval_koornwinder_into(p, pt.u, pt.v, d.values, d.du, d.dv);
  return d;
}

GaussRule1D gauss_legendre01(int n) {
  if (n < 1) throw ArgumentError("Gauss-Legendre size must be >= 1");
  GaussRule1D g;
  g.nodes.resize(n);
  g.weights.resize(n);
  for (int i = 0; i < (n + 1) / 2; ++i) {
    double x = std::cos(kPi * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = x;
      for (int k = 2; k <= n; ++k) {
        const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      if (n == 1) {
        p1 = x;
        p0 = 1.0;
      }
      dp = n * (x * p1 - p0) / (x * x - 1.0);
      const double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    // Recompute the derivative at the converged root.
    double p0 = 1.0, p1 = x;
    for (int k = 2; k <= n; ++k) {
      const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
      p0 = p1;
      p1 = p2;
    }
    dp = (n == 1) ? 1.0 : n * (x * p1 - p0) / (x * x - 1.0);
    const double w = 2.0 / ((1.0 - x * x) * dp * dp);
    g.nodes[i] = 0.5 * (1.0 - x);
    g.nodes[n - 1 - i] = 0.5 * (1.0 + x);
    g.weights[i] = 0.5 * w;
    g.weights[n - 1 - i] = 0.5 * w;
  }
  if (n == 1) {
    g.nodes[0] = 0.5;
    g.weights[0] = 1.0;
  }
  return g;
}

QuadratureRule collapsed_gauss_rule(int n) {
  const auto ga = gauss_legendre01(n);
  const auto gb = gauss_legendre01(n + 1);
  QuadratureRule r;
  r.order = 2 * n;
  r.exactness = 2 * n;
  for (int j = 0; j < n + 1; ++j) {
    for (int i = 0; i < n; ++i) {
      const double b = gb.nodes[j];
      r.nodes.push_back({ga.nodes[i] * (1.0 - b), b});
      r.weights.push_back(ga.weights[i] * gb.weights[j] * (1.0 - b));
    }
  }
  return r;
}

BasisTable tabulate(int p, std::span<const UVPoint> points, bool derivs) {
  const int np = basis_count(p);
  BasisTable t;
  t.p = p;
  t.values.resize(points.size(), np);
  if (derivs) {
    t.du.resize(points.size(), np);
    t.dv.resize(points.size(), np);
  }
  std::vector<double> val(np), du(np), dv(np);
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (derivs)
      eval_koornwinder_into(p, points[i].u, points[i].v, val, du, dv);
    else
      eval_koornwinder_into(p, points[i].u, points[i].v, val);
    for (int k = 0; k < np; ++k) {
      t.values(i, k) = val[k];
      if (derivs) {
        t.du(i, k) = du[k];
        t.dv(i, k) = dv[k];
      }
    }
  }
  return t;
}

namespace {

int max_generated_order(const BasisLimits& limits) {
  return std::max(limits.p_max, limits.q_max);
}

void finish_node_set(InterpNodeSet& s) {
  const int np = basis_count(s.order);
  const BasisTable t = tabulate(s.order, s.nodes, false);
  s.matrixU = t.values;
  Eigen::FullPivLU<MatX> lu(s.matrixU);
  if (!lu.isInvertible()) {
    throw InternalError("interpolation matrix is singular for order " +
                        std::to_string(s.order));
  }
  s.matrixV = lu.inverse();
  Eigen::JacobiSVD<MatX> svd(s.matrixU);
  const auto& sv = svd.singularValues();
  s.condU = sv(0) / sv(np - 1);
  s.normV = 1.0 / sv(np - 1);
  s.weights.resize(np);
  for (int j = 0; j < np; ++j)
    s.weights[j] = s.matrixV(0, j) * koornwinder_moment(0, 0);
}

}  // namespace

InterpNodeSet interp_from_nodes(int p, std::vector<UVPoint> nodes) {
  if (static_cast<int>(nodes.size()) != basis_count(p))
    throw ValidationError("node count does not match order " +
                          std::to_string(p));
  InterpNodeSet s;
  s.order = p;
  s.nodes = std::move(nodes);
  finish_node_set(s);
  return s;
}

InterpNodeSet build_interp_nodes(int p) { return build_interp_nodes(p, {}); }

InterpNodeSet build_interp_nodes(int p, const BasisLimits& limits) {
  if (p < 1 || p > max_generated_order(limits))
    throw ArgumentError("interpolation order " + std::to_string(p) +
                        " outside generated range; load a table instead");
  InterpNodeSet s;
  s.order = p;
  if (p == 1) {
    s.nodes = {{1.0 / 3.0, 1.0 / 3.0}};
    finish_node_set(s);
    return s;
  }

  // Candidate lattice with at least 40 p points, shrunk about the centroid
  // so that the outermost candidates sit at the first Gauss-Legendre
  // abscissa of a p-point rule. Keeps all nodes off the patch edges.
  int lattice = 1;
  while ((lattice + 1) * (lattice + 2) / 2 < 40 * p) ++lattice;
  const double margin = gauss_legendre01(p).nodes[0];
  const double shrink = 1.0 - 3.0 * margin;
  std::vector<UVPoint> cand;
  for (int j = 0; j <= lattice; ++j) {
    for (int i = 0; i + j <= lattice; ++i) {
      const double u = static_cast<double>(i) / lattice;
      const double v = static_cast<double>(j) / lattice;
      cand.push_back({1.0 / 3.0 + shrink * (u - 1.0 / 3.0),
                      1.0 / 3.0 + shrink * (v - 1.0 / 3.0)});
    }
  }
  const int np = basis_count(p);
  const MatX vand = tabulate(p, cand, false).values.transpose();
  Eigen::ColPivHouseholderQR<MatX> qr(vand);
  if (qr.rank() < np) {
    throw InternalError("pivoted factorization lost rank at order " +
                        std::to_string(p) + " with " +
                        std::to_string(cand.size()) + " candidates");
  }
  const auto& perm = qr.colsPermutation().indices();
  for (int k = 0; k < np; ++k) s.nodes.push_back(cand[perm(k)]);
  finish_node_set(s);
  return s;
}

QuadratureRule build_quadrature(int q) { return build_quadrature(q, {}); }

QuadratureRule build_quadrature(int q, const BasisLimits& limits) {
  if (q < 1 || q > limits.q_max)
    throw ArgumentError("quadrature order " + std::to_string(q) +
                        " exceeds q_max; load a table instead");
  const InterpNodeSet nodes = build_interp_nodes(q, limits);
  const int nq = basis_count(q);
  // Moment fitting: U^T w = moments.
  VecX rhs = VecX::Zero(nq);
  rhs(0) = koornwinder_moment(0, 0);
  const VecX w = nodes.matrixU.transpose().fullPivLu().solve(rhs);
  QuadratureRule r;
  r.order = q;
  r.exactness = q;
  r.nodes = nodes.nodes;
  r.weights.assign(w.data(), w.data() + nq);
  r.positive = std::all_of(r.weights.begin(), r.weights.end(),
                           [](double x) { return x > 0.0; });
  return r;
}

double moment_error(const QuadratureRule& rule, int degree) {
  if (degree < 1) return 0.0;
  const BasisTable t = tabulate(degree, rule.nodes, false);
  const Eigen::Map<const VecX> w(rule.weights.data(), rule.weights.size());
  const VecX integrals = t.values.transpose() * w;
  double err = 0.0;
  for (int n = 0; n < degree; ++n)
    for (int m = 0; m <= n; ++m)
      err = std::max(err, std::abs(integrals(basis_index(n, m)) -
                                   koornwinder_moment(n, m)));
  return err;
}

// ---------------------------------------------------------------------------
// Table I/O

namespace {

constexpr double kTableExactnessTol = 1e-12;

int verified_exactness(const QuadratureRule& r, int cap) {
  int d = 0;
  while (d < cap && moment_error(r, d + 1) < kTableExactnessTol) ++d;
  return d;
}

}  // namespace

LoadedTable parse_quadrature_table(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  auto next_line = [&](std::string& out) {
    while (std::getline(in, out)) {
      ++lineno;
      const auto pos = out.find_first_not_of(" \t\r");
      if (pos != std::string::npos && out[pos] != '#') return true;
    }
    return false;
  };
  if (!next_line(line)) throw ParseError("empty quadrature table", lineno);

  std::istringstream hdr(line);
  std::string tag;
  int order = 0, count = 0, exact = 0;
  hdr >> tag >> order >> count;
  if (!hdr || (tag != "TRIQUAD" && tag != "TRINODE"))
    throw ParseError("expected TRIQUAD or TRINODE header", lineno);
  const bool quad = tag == "TRIQUAD";
  if (quad && !(hdr >> exact)) throw ParseError("missing exactness field", lineno);
  if (order < 1 || count < 1) throw ParseError("non-positive order or count", lineno);

  std::vector<UVPoint> nodes;
  std::vector<double> weights;
  while (next_line(line)) {
    std::istringstream row(line);
    double u = 0, v = 0, w = 0;
    row >> u >> v;
    if (quad) row >> w;
    if (!row) throw ParseError("malformed table row", lineno);
    std::string extra;
    if (row >> extra) throw ParseError("trailing data in table row", lineno);
    nodes.push_back({u, v});
    if (quad) weights.push_back(w);
  }
  if (static_cast<int>(nodes.size()) != count)
    throw ValidationError("header declares " + std::to_string(count) +
                          " nodes but table holds " +
                          std::to_string(nodes.size()));
  for (const auto& n : nodes) check_in_triangle(n, 1e-12);

  LoadedTable out;
  if (quad) {
    out.kind = LoadedTable::Kind::quadrature;
    QuadratureRule r;
    r.order = order;
    r.nodes = std::move(nodes);
    r.weights = std::move(weights);
    const int verified = verified_exactness(r, std::max(exact, order) + 1);
    if (verified < exact || verified < order)
      throw ValidationError("table integrates only degree < " +
                            std::to_string(verified) + ", header claims " +
                            std::to_string(std::max(exact, order)));
    r.exactness = verified;
    r.positive = std::all_of(r.weights.begin(), r.weights.end(),
                             [](double x) { return x > 0.0; });
    out.negative_weight_warning = !r.positive;
    out.rule = std::move(r);
  } else {
    if (count != basis_count(order))
      throw ValidationError("node table of order " + std::to_string(order) +
                            " needs " + std::to_string(basis_count(order)) +
                            " nodes");
    out.kind = LoadedTable::Kind::nodes;
    try {
      out.node_set = interp_from_nodes(order, std::move(nodes));
    } catch (const InternalError& e) {
      throw ValidationError(e.what());
    }
  }
  return out;
}

LoadedTable load_quadrature_table(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ArgumentError("cannot open quadrature table " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_quadrature_table(ss.str());
}

std::string format_quadrature_table(const QuadratureRule& rule) {
  std::ostringstream os;
  os << "TRIQUAD " << rule.order << ' ' << rule.nodes.size() << ' '
     << rule.exactness << '\n';
  os << std::setprecision(17);
  for (std::size_t i = 0; i < rule.nodes.size(); ++i)
    os << rule.nodes[i].u << ' ' << rule.nodes[i].v << ' ' << rule.weights[i]
       << '\n';
  return os.str();
}

void save_quadrature_table(const std::string& path, const QuadratureRule& rule) {
  std::ofstream f(path);
  if (!f) throw ArgumentError("cannot write " + path);
  f << format_quadrature_table(rule);
}

void save_node_table(const std::string& path, const InterpNodeSet& nodes) {
  std::ofstream f(path);
  if (!f) throw ArgumentError("cannot write " + path);
  f << "TRINODE " << nodes.order << ' ' << nodes.nodes.size() << '\n'
    << std::setprecision(17);
  for (const auto& n : nodes.nodes) f << n.u << ' ' << n.v << '\n';
}

// ---------------------------------------------------------------------------

RuleLibrary& RuleLibrary::instance() {
  static RuleLibrary lib;
  return lib;
}

const InterpNodeSet& RuleLibrary::interp(int p) {
  std::lock_guard lock(mutex_);
  auto& slot = interp_[p];
  if (!slot) slot = std::make_unique<InterpNodeSet>(build_interp_nodes(p, limits_));
  return *slot;
}

const QuadratureRule& RuleLibrary::rule(int q) {
  {
    std::lock_guard lock(mutex_);
    auto it = rules_.find(q);
    if (it != rules_.end()) return *it->second;
    if (q < 1 || q > limits_.q_max)
      throw ArgumentError("quadrature order " + std::to_string(q) +
                          " exceeds q_max and no table is loaded");
  }
  const InterpNodeSet& nodes = interp(q);
  std::lock_guard lock(mutex_);
  auto& slot = rules_[q];
  if (!slot) {
    const int nq = basis_count(q);
    VecX rhs = VecX::Zero(nq);
    rhs(0) = koornwinder_moment(0, 0);
    const VecX w = nodes.matrixU.transpose().fullPivLu().solve(rhs);
    auto r = std::make_unique<QuadratureRule>();
    r->order = q;
    r->exactness = q;
    r->nodes = nodes.nodes;
    r->weights.assign(w.data(), w.data() + nq);
    r->positive = std::all_of(r->weights.begin(), r->weights.end(),
                              [](double x) { return x > 0.0; });
    slot = std::move(r);
  }
  return *slot;
}

const BasisTable& RuleLibrary::table(int q, int p) {
  const QuadratureRule& r = rule(q);
  std::lock_guard lock(mutex_);
  auto& slot = tables_[{q, p}];
  if (!slot) slot = std::make_unique<BasisTable>(tabulate(p, r.nodes, true));
  return *slot;
}

const BasisTable& RuleLibrary::node_table(int p) {
  const InterpNodeSet& s = interp(p);
  std::lock_guard lock(mutex_);
  auto& slot = node_tables_[p];
  if (!slot) slot = std::make_unique<BasisTable>(tabulate(p, s.nodes, true));
  return *slot;
}

void RuleLibrary::register_rule(QuadratureRule rule) {
  std::lock_guard lock(mutex_);
  const int q = rule.order;
  rules_[q] = std::make_unique<QuadratureRule>(std::move(rule));
  for (auto it = tables_.begin(); it != tables_.end();) {
    if (it->first.first == q)
      it = tables_.erase(it);
    else
      ++it;
  }
}

void RuleLibrary::register_nodes(InterpNodeSet nodes) {
  std::lock_guard lock(mutex_);
  const int p = nodes.order;
  interp_[p] = std::make_unique<InterpNodeSet>(std::move(nodes));
  node_tables_.erase(p);
}

BasisLimits RuleLibrary::limits() const {
  std::lock_guard lock(mutex_);
  return limits_;
}

void RuleLibrary::set_limits(const BasisLimits& limits) {
  std::lock_guard lock(mutex_);
  limits_ = limits;
}

}  // namespace lcq
