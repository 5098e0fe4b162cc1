#include <doctest.h>

#include "lcq/cli.hpp"

#include <json.hpp>

#include <chrono>
#include <cstdio>
#include <fstream>
#include <sstream>

using namespace lcq;

namespace {

struct Run {
  int code;
  std::string out, err;
};

Run run(std::vector<std::string> args) {
  args.insert(args.begin(), "lcq");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run_cli(int(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

std::vector<double> csv_values(const std::string& csv) {
  std::vector<double> v;
  std::istringstream is(csv.substr(csv.find('\n') + 1));
  std::string cell;
  while (std::getline(is, cell, ',')) {
    std::istringstream line(cell);
    double x;
    while (line >> x) v.push_back(x);
  }
  return v;
}

int csv_rows(const std::string& csv) {
  int n = 0;
  for (char c : csv) n += c == '\n';
  return n - 1;
}

}  // namespace

TEST_CASE("geom writes a KPATCH mesh") {
  const auto r = run({"geom", "--shape", "sphere", "--refine", "1", "--order", "4"});
  REQUIRE(r.code == 0);
  CHECK(r.out.rfind("KPATCH 32 4\n", 0) == 0);
  const auto mesh = parse_kpatch(r.out);
  CHECK(mesh.patches.size() == 32);

  const auto s = run({"geom", "--shape", "stellarator", "--nu", "2", "--nv", "4", "--order", "3", "-o", "cli_st.kp"});
  REQUIRE(s.code == 0);
  const auto j = nlohmann::json::parse(s.out);
  CHECK(j["patches"] == 2 * 2 * 4);
  CHECK(load_kpatch("cli_st.kp").patches.size() == 16);
  // Reloading through --mesh refits the charts from the samples.
  const auto again = run({"geom", "--mesh", "cli_st.kp", "-o", "cli_st2.kp"});
  CHECK(nlohmann::json::parse(again.out)["area"].get<double>() == doctest::Approx(j["area"].get<double>()).epsilon(1e-13));
  std::remove("cli_st.kp");
  std::remove("cli_st2.kp");
}

TEST_CASE("slice lattice") {
  const auto s = parse_slice({"normal=x", "offset=0.5", "n=3", "extent=2"});
  CHECK(s.normal == 0);
  const auto pts = slice_points(s);
  REQUIRE(pts.size() == 9);
  for (const auto& p : pts) CHECK(p.x() == 0.5);
  CHECK(pts.front() == Vec3(0.5, -2, -2));
  CHECK(pts.back() == Vec3(0.5, 2, 2));
  CHECK_THROWS_AS(parse_slice({"normal=w"}), ArgumentError);
  CHECK_THROWS_AS(parse_slice({"n=abc"}), ArgumentError);
  CHECK_THROWS_AS(parse_slice({"extent"}), ArgumentError);
  CHECK_THROWS_AS(parse_slice({"extent=-1"}), ArgumentError);
}

TEST_CASE("every subcommand on the 8-patch sphere") {
  const auto t0 = std::chrono::steady_clock::now();
  const std::vector<std::string> mesh = {"--shape", "sphere", "--refine", "0", "--order", "4"};
  auto with = [&](std::vector<std::string> head, std::vector<std::string> tail) {
    head.insert(head.end(), mesh.begin(), mesh.end());
    head.insert(head.end(), tail.begin(), tail.end());
    return run(head);
  };

  const auto pre = with({"precompute"}, {"--eps", "1e-6", "--cache-out", "cli_cache.bin"});
  REQUIRE(pre.code == 0);
  const auto pj = nlohmann::json::parse(pre.out);
  CHECK(pj["alpha"].get<double>() >= 1.0);
  CHECK(pj.contains("s_init"));

  const auto ev = with({"eval"}, {"--eps", "1e-6", "--slice", "normal=z", "n=4", "extent=2", "--json", "cli_m.json"});
  REQUIRE(ev.code == 0);
  CHECK(csv_rows(ev.out) == 16);
  CHECK(nlohmann::json::parse(slurp("cli_m.json")).contains("s_lp"));
  // The cache dump serves the same evaluation, with the slice added incrementally.
  const auto ev2 = with({"eval"}, {"--eps", "1e-6", "--slice", "normal=z", "n=4", "extent=2", "--cache-in", "cli_cache.bin"});
  const auto v1 = csv_values(ev.out), v2 = csv_values(ev2.out);
  REQUIRE(v1.size() == v2.size());
  for (std::size_t i = 0; i < v1.size(); ++i) CHECK(v2[i] == doctest::Approx(v1[i]).epsilon(1e-12).scale(1e-14));
  const auto bad = with({"eval"}, {"--eps", "1e-5", "--cache-in", "cli_cache.bin"});
  CHECK(bad.code == 2);
  CHECK(nlohmann::json::parse(bad.err)["error"]["type"] == "ValidationError");

  const auto so = with({"solve"}, {"--k", "1", "--eps", "1e-6", "--sigma-out", "cli_sigma.csv"});
  REQUIRE(so.code == 0);
  const auto sj = nlohmann::json::parse(so.out);
  CHECK(sj["converged"] == true);
  CHECK(sj["residuals"].back().get<double>() <= 1e-6);
  CHECK(csv_rows(slurp("cli_sigma.csv")) == 8 * 10);

  const auto cv = run({"converge", "--orders", "3", "--refines", "0,1", "--eps", "1e-6"});
  REQUIRE(cv.code == 0);
  CHECK(cv.out.rfind("p,refine,N,h,error,order\n", 0) == 0);
  CHECK(csv_rows(cv.out) == 2);

  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  MESSAGE("all subcommands: " << secs << " s");
  CHECK(secs < 60.0);
  for (const char* f : {"cli_cache.bin", "cli_m.json", "cli_sigma.csv"}) std::remove(f);
}

TEST_CASE("same seed gives byte-identical output") {
  const std::vector<std::string> args = {"--seed", "9", "eval", "--shape", "sphere", "--order", "3",
                                         "--density", "random", "--slice", "n=3", "extent=1.7"};
  const auto a = run(args), b = run(args);
  REQUIRE(a.code == 0);
  CHECK(a.out == b.out);
  auto other = args;
  other[1] = "10";
  CHECK(run(other).out != a.out);
  const std::vector<std::string> conv = {"--seed", "4", "converge", "--orders", "3", "--refines", "0,1", "--test", "cfie"};
  CHECK(run(conv).out == run(conv).out);
}

TEST_CASE("usage and numerical errors") {
  CHECK(run({}).code == 2);
  CHECK(run({"eval", "--kernel", "bogus"}).code == 2);
  CHECK(run({"geom", "--refine", "-1"}).code == 2);
  const auto missing = run({"eval", "--mesh", "no_such_file.kp"});
  CHECK(missing.code == 2);
  CHECK(nlohmann::json::parse(missing.err)["error"]["type"] == "ArgumentError");
  CHECK(run({"eval", "--shape", "sphere", "--order", "3", "--k-imag", "-1"}).code == 2);
  // GMRES capped at one iteration cannot reach the tolerance.
  const auto r = run({"solve", "--shape", "sphere", "--order", "3", "--k", "1", "--maxit", "1"});
  CHECK(r.code == 1);
  CHECK(nlohmann::json::parse(r.err)["error"]["type"] == "QuadratureError");
  CHECK(run({"--help"}).code == 0);
}

TEST_CASE("fitted order of a synthetic table") {
  std::vector<ConvergenceRow> rows;
  for (double h : {0.5, 0.25, 0.125}) rows.push_back({3, 0, 0, h, 7.0 * std::pow(h, 2.5), 0.0});
  CHECK(fitted_order(rows) == doctest::Approx(2.5));
  const auto csv = format_convergence_csv(rows);
  CHECK(csv_rows(csv) == 3);
}
