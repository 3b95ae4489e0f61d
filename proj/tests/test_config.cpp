#include <doctest.h>

#include <cmath>
#include <sstream>

#include "otcrf/config.hpp"
#include "otcrf/error.hpp"
#include "otcrf/plot.hpp"

using namespace otcrf;

namespace {

template <class F>
ErrorCode code_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::IoError;
}

RunConfig parse(const std::string& text) {
  std::istringstream in(text);
  return parse_run_config(in, "test.run", "/base");
}

std::vector<ObservableRecord> leaf_records() {
  std::vector<ObservableRecord> recs;
  for (int k = 0; k <= 24; ++k) {
    ObservableRecord r;
    r.t = 0.5 * k;
    r.leaf_scale = std::exp(-0.25 * k);
    r.sup_phi = 0.2 * std::exp(-0.5 * k);
    r.r_min = -2.0;
    recs.push_back(r);
  }
  return recs;
}

}  // namespace

TEST_CASE("run files parse into flow and verify settings") {
  const RunConfig rc = parse(R"(# comment
[run]
name = demo
field = fields/x.field

[grid]
N = 32

[time]
t_end = 6
stride = 0.25
scheme = rk2
cfl = 0.1

[initial]
rho = [[0.05, [1, 0]], [0.01, [0, 2]]]

[reference]
kind = perturbed
alpha_amp = 0.2

[verify]
delta = 0.05
pairs = 8

[plot.leaf_scale]
slopes = [-0.5]
)");
  CHECK(rc.name == "demo");
  CHECK(rc.field_path == "/base/fields/x.field");
  CHECK(rc.flow.N == 32);
  CHECK(rc.flow.t_end == 6.0);
  CHECK(rc.flow.stride == 0.25);
  CHECK(rc.flow.scheme == Scheme::RK2);
  CHECK(rc.flow.cfl == 0.1);
  REQUIRE(rc.flow.rho.size() == 2);
  CHECK(rc.flow.rho[1].amp == 0.01);
  CHECK(rc.flow.rho[1].k == std::vector<int>{0, 2});
  CHECK(rc.flow.reference.kind == "perturbed");
  CHECK(rc.flow.reference.alpha_amp == 0.2);
  CHECK(rc.verify.delta == 0.05);
  CHECK(rc.verify.pairs == 8);
  CHECK(rc.verify.fiber_bound == 30);
  REQUIRE(rc.plots.size() == 1);
  CHECK(rc.plots[0].series == "leaf_scale");
  CHECK(rc.plots[0].slopes == std::vector<double>{-0.5});
}

TEST_CASE("run file defaults and errors") {
  const RunConfig rc = parse("[run]\nfield = /abs/f.field\n");
  CHECK(rc.field_path == "/abs/f.field");
  CHECK(rc.name == "test");
  CHECK(rc.flow.N == 64);
  CHECK(rc.plots.size() == default_plots().size());

  CHECK(code_of([] { parse("[grid]\nN = 16\n"); }) == ErrorCode::ParseError);
  CHECK(code_of([] { parse("[run]\nfield = a\n[weird]\n"); }) == ErrorCode::ParseError);
  CHECK(code_of([] { parse("[run]\nfield = a\nname = b\nN = 3\n"); }) == ErrorCode::ParseError);
  CHECK(code_of([] { parse("N = 3\n"); }) == ErrorCode::ParseError);
  CHECK(code_of([] { parse("[run]\nfield = a\n[time]\nscheme = rk4\n"); }) == ErrorCode::ConfigError);
  CHECK(code_of([] { parse("[run]\nfield = a\n[grid]\nN = x\n"); }) == ErrorCode::ParseError);
  CHECK(code_of([] { parse("[run]\nfield = a\n[grid]\nN = 2\n"); }) == ErrorCode::ConfigError);
  CHECK(code_of([] { parse("[run]\nfield = a\n[initial]\nrho = [0.1]\n"); }) == ErrorCode::ParseError);
  CHECK(code_of([] { parse("[run]\nfield = a\n[verify]\ndelta = 0\n"); }) == ErrorCode::ConfigError);
  CHECK(code_of([] { parse("[run]\nfield = a\n[plot.nope]\n"); }) == ErrorCode::UnknownSeries);
  CHECK(code_of([] { parse("[run]\nfield = a\n[run]\n"); }) == ErrorCode::ParseError);
  CHECK(code_of([] { load_run_config("/nonexistent/x.run"); }) == ErrorCode::MissingInput);
}

TEST_CASE("svg plots and captions") {
  const auto recs = leaf_records();
  const PlotSpec leaf{"leaf_scale", true, {-0.5}};
  const std::string cap = plot_caption(recs, leaf, 4.0);
  CHECK(cap.find("fitted rate 0.500000") != std::string::npos);
  CHECK(cap.find("gap to slope -0.5: 0") != std::string::npos);

  std::ostringstream svg;
  write_svg(svg, recs, leaf, 4.0);
  const std::string s = svg.str();
  CHECK(s.rfind("<?xml", 0) == 0);
  CHECK(s.find("<svg xmlns=\"http://www.w3.org/2000/svg\"") != std::string::npos);
  CHECK(s.find("stroke-dasharray") != std::string::npos);
  CHECK(s.find("slope -0.5") != std::string::npos);
  CHECK(s.find("</svg>") != std::string::npos);

  std::ostringstream lin;
  write_svg(lin, recs, {"r_min", false, {}}, 4.0);
  CHECK(lin.str().find("stroke-dasharray") == std::string::npos);

  std::ostringstream a, b;
  write_svg(a, recs, {"sup_phi", true, {-1.0}}, 4.0);
  write_svg(b, recs, {"sup_phi", true, {-1.0}}, 4.0);
  CHECK(a.str() == b.str());

  std::ostringstream bad;
  CHECK(code_of([&] { write_svg(bad, recs, {"nope", true, {}}, 4.0); }) == ErrorCode::UnknownSeries);
  CHECK(code_of([&] { write_svg(bad, {}, leaf, 4.0); }) == ErrorCode::MissingInput);
  CHECK(bad.str().empty());
  CHECK(series_column(recs, "t").back() == 12.0);
}
