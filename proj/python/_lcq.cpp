#include "lcq/cli.hpp"
#include "lcq/solver.hpp"

#include <pybind11/complex.h>
#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>
#include <sstream>

namespace py = pybind11;
using namespace lcq;

namespace {

using Points = Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>;

std::vector<Vec3> to_points(const Points& m) {
  std::vector<Vec3> v(m.rows());
  for (Eigen::Index i = 0; i < m.rows(); ++i) v[i] = m.row(i).transpose();
  return v;
}

Points from_points(std::span<const Vec3> v) {
  Points m(v.size(), 3);
  for (std::size_t i = 0; i < v.size(); ++i) m.row(i) = v[i].transpose();
  return m;
}

std::unique_ptr<FarAccelerator> make_accel(const std::string& name, double eps) {
  if (name == "direct") return direct_accelerator();
  if (name == "treecode") return treecode_accelerator(eps);
  throw ArgumentError("unknown accelerator '" + name + "' (direct | treecode)");
}

}  // namespace

PYBIND11_MODULE(_lcq, m) {
  m.doc() = "Locally corrected quadrature for layer potentials on high-order surfaces";

  auto base = py::register_exception<Error>(m, "Error");
  py::register_exception<ArgumentError>(m, "ArgumentError", base.ptr());
  py::register_exception<ValidationError>(m, "ValidationError", base.ptr());
  py::register_exception<QuadratureError>(m, "QuadratureError", base.ptr());
  py::register_exception<GeometryError>(m, "GeometryError", base.ptr());
  py::register_exception<UnsupportedError>(m, "UnsupportedError", base.ptr());

  py::class_<SurfaceMesh>(m, "Mesh")
      .def_readonly("order", &SurfaceMesh::order)
      .def_property_readonly("num_patches", [](const SurfaceMesh& s) { return s.patches.size(); })
      .def("__len__", &SurfaceMesh::size)
      .def_property_readonly("points", [](const SurfaceMesh& s) {
        Points p(s.size(), 3);
        for (std::size_t i = 0; i < s.size(); ++i) p.row(i) = s.nodes[i].X.transpose();
        return p;
      })
      .def_property_readonly("normals", [](const SurfaceMesh& s) {
        Points p(s.size(), 3);
        for (std::size_t i = 0; i < s.size(); ++i) p.row(i) = s.nodes[i].normal.transpose();
        return p;
      })
      .def_property_readonly("weights", [](const SurfaceMesh& s) {
        VecX w(s.size());
        for (std::size_t i = 0; i < s.size(); ++i) w(i) = s.nodes[i].weight;
        return w;
      })
      .def_property_readonly("h", [](const SurfaceMesh& s) {
        double h = 0;
        for (const auto& p : s.patches) h = std::max(h, p.radius);
        return h;
      })
      .def("area", [](const SurfaceMesh& s) { return surface_area(s); })
      .def("to_kpatch", [](const SurfaceMesh& s) { return format_kpatch(s); });

  m.def("sphere", [](int refine, int p, bool icosahedron, double radius) {
        return gen_sphere(refine, p, icosahedron ? SphereBase::icosahedron : SphereBase::octahedron, radius);
      },
      py::arg("refine"), py::arg("p"), py::arg("icosahedron") = false, py::arg("radius") = 1.0);
  m.def("stellarator", &gen_stellarator, py::arg("nu"), py::arg("nv"), py::arg("p"));
  m.def("parse_kpatch", &parse_kpatch, py::arg("text"));
  m.def("load_kpatch", &load_kpatch, py::arg("path"));

  py::class_<KernelSpec>(m, "Kernel")
      .def_static("single", &KernelSpec::single, py::arg("k") = cplx(0.0))
      .def_static("double", &KernelSpec::dbl, py::arg("k") = cplx(0.0))
      .def_static("adjoint", &KernelSpec::adjoint, py::arg("k") = cplx(0.0))
      .def_static("combined", &KernelSpec::combined, py::arg("k"), py::arg("beta_d"), py::arg("beta_s"))
      .def_readonly("k", &KernelSpec::k)
      .def("__repr__", &KernelSpec::describe);

  py::class_<QuadCache>(m, "Cache")
      .def_property_readonly("num_targets", &QuadCache::num_targets)
      .def_property_readonly("targets", [](const QuadCache& c) { return from_points(c.targets); })
      .def_property_readonly("metrics", [](const QuadCache& c) { return metrics(c).json(); })
      .def_readonly("eta", &QuadCache::eta)
      .def("extend_targets", [](QuadCache& c, const Points& pts) { return extend_targets(c, to_points(pts)); },
           py::arg("points"))
      .def("save", [](const QuadCache& c, const std::string& path) { save_cache(path, c); });

  m.def("precompute",
        [](const SurfaceMesh& mesh, const std::vector<KernelSpec>& kernels, double eps, double eta,
           std::optional<Points> targets, std::optional<Points> normals) {
          EvalOptions o;
          o.near.eps = eps;
          o.near.eta = eta;
          const auto t = targets ? to_points(*targets) : std::vector<Vec3>{};
          const auto n = normals ? to_points(*normals) : std::vector<Vec3>{};
          py::gil_scoped_release release;
          return precompute(mesh, kernels, o, t, n);
        },
        py::arg("mesh"), py::arg("kernels"), py::arg("eps") = 1e-6, py::arg("eta") = 0.0,
        py::arg("targets") = py::none(), py::arg("normals") = py::none());

  m.def("apply",
        [](const QuadCache& c, const VecXc& sigma, int kernel, const std::string& accel, double fmm_eps) {
          auto acc = make_accel(accel, fmm_eps > 0 ? fmm_eps : c.options.near.eps);
          py::gil_scoped_release release;
          return apply(c, sigma, *acc, kernel).values;
        },
        py::arg("cache"), py::arg("sigma"), py::arg("kernel") = 0, py::arg("accel") = "direct",
        py::arg("fmm_eps") = 0.0);

  py::class_<LayerSolution>(m, "LayerSolution")
      .def_readonly("sigma", &LayerSolution::sigma)
      .def_property_readonly("residuals", [](const LayerSolution& s) { return s.gmres.residuals; })
      .def_property_readonly("iterations", [](const LayerSolution& s) { return s.gmres.iterations; })
      .def_property_readonly("converged", [](const LayerSolution& s) { return s.gmres.converged; })
      .def("evaluate",
           [](LayerSolution& s, const Points& pts, const std::string& accel) {
             auto acc = make_accel(accel, s.cache.options.near.eps);
             return s.evaluate(to_points(pts), *acc);
           },
           py::arg("points"), py::arg("accel") = "direct")
      .def("json", &LayerSolution::json);

  m.def("solve_cfie",
        [](const SurfaceMesh& mesh, cplx k, const VecXc& f, double eps, int maxit, const std::string& accel) {
          SolveOptions o;
          o.eval.near.eps = eps;
          o.maxit = maxit;
          auto acc = make_accel(accel, eps);
          py::gil_scoped_release release;
          return solve_dirichlet_cfie(mesh, k, f, o, *acc);
        },
        py::arg("mesh"), py::arg("k"), py::arg("f"), py::arg("eps") = 1e-6, py::arg("maxit") = 200,
        py::arg("accel") = "direct");

  m.def("point_field",
        [](cplx k, const Points& sources, const std::vector<cplx>& strengths, const Points& x) {
          const PointSources src{to_points(sources), strengths};
          if (src.points.size() != src.strengths.size()) throw ArgumentError("one strength per source");
          VecXc u(x.rows());
          for (Eigen::Index i = 0; i < x.rows(); ++i) u(i) = point_field(k, src, x.row(i).transpose());
          return u;
        },
        py::arg("k"), py::arg("sources"), py::arg("strengths"), py::arg("x"));

  m.def("greens_identity_error",
        [](const SurfaceMesh& mesh, cplx k, double eps, int n_sources, unsigned seed) {
          EvalOptions o;
          o.near.eps = eps;
          auto acc = direct_accelerator();
          py::gil_scoped_release release;
          return greens_identity_error(mesh, k, manufactured_sources(mesh, false, n_sources, seed), o, *acc).eps_g;
        },
        py::arg("mesh"), py::arg("k"), py::arg("eps") = 1e-6, py::arg("n_sources") = 6, py::arg("seed") = 1);

  m.def("run_cli",
        [](const std::vector<std::string>& args) {
          std::vector<const char*> argv = {"lcq"};
          for (const auto& a : args) argv.push_back(a.c_str());
          std::ostringstream out, err;
          const int code = run_cli(int(argv.size()), argv.data(), out, err);
          return py::make_tuple(code, out.str(), err.str());
        },
        py::arg("args"));
}
