#include "doctest.h"

#include "stlgrad/io.hpp"
#include "stlgrad/semantics.hpp"

#include <cmath>
#include <filesystem>
#include <sstream>

using namespace stlgrad;

TEST_SUITE("io") {

TEST_CASE("single element CSV") {
  const SignalFile f = parse_signal_csv("t,s\n0,1\n1,1\n2,1\n3,2\n4,3\n5,1\n");
  CHECK(f.names == std::vector<std::string>{"s"});
  CHECK(f.signal.batch() == 1);
  CHECK(f.signal.time() == 6);
  CHECK(f.signal.dt() == 1.0);
  CHECK(f.signal.at(0, 4, 0) == 3.0);
}

TEST_CASE("batched CSV with ragged elements") {
  const SignalFile f =
      parse_signal_csv("batch,t,x0,x1\na,0.5,1,2\na,0.6,3,4\nb,0.5,5,6\r\n\n# comment\n");
  CHECK(f.signal.batch() == 2);
  CHECK(f.signal.dim() == 2);
  CHECK(f.signal.t0() == 0.5);
  CHECK(f.signal.dt() == doctest::Approx(0.1));
  CHECK(f.signal.lengths() == std::vector<std::size_t>{2, 1});
  CHECK(f.signal.at(1, 0, 1) == 6.0);
}

TEST_CASE("CSV errors") {
  CHECK_THROWS_AS(parse_signal_csv(""), IoError);
  CHECK_THROWS_AS(parse_signal_csv("x,y\n1,2\n"), IoError);
  CHECK_THROWS_AS(parse_signal_csv("t\n0\n"), IoError);
  CHECK_THROWS_AS(parse_signal_csv("t,x\n0,1\n1,2\n3,4\n"), IoError);
  CHECK_THROWS_AS(parse_signal_csv("t,x\n0,1\n1\n"), IoError);
  CHECK_THROWS_AS(parse_signal_csv("t,x\n0,abc\n"), IoError);
  CHECK_THROWS_AS(parse_signal_csv("t,x\n1,0\n0,1\n"), IoError);
}

TEST_CASE("JSON signals") {
  const SignalFile f =
      parse_signal_json(R"({"dt": 0.1, "t0": 2, "signals": [[1, 2, 3], [4]]})");
  CHECK(f.signal.batch() == 2);
  CHECK(f.signal.lengths() == std::vector<std::size_t>{3, 1});
  CHECK(f.names == std::vector<std::string>{"x0"});
  const SignalFile g = parse_signal_json(
      R"({"names": ["px", "py"], "signals": [[[0, 1], [2, 3]]]})");
  CHECK(g.signal.dim() == 2);
  CHECK(g.signal.at(0, 1, 0) == 2.0);
  CHECK_THROWS_AS(parse_signal_json("{"), IoError);
  CHECK_THROWS_AS(parse_signal_json(R"({"signals": []})"), IoError);
  CHECK_THROWS_AS(parse_signal_json(R"({"signals": [[[1, 2], [3]]]})"), IoError);
}

TEST_CASE("signal CSV round-trip") {
  const Signal s = Signal::batch_of({Signal::from_states({{0.1, 2}, {0.3, 4}}, 0.25, 1.0),
                                     Signal::from_states({{7, 8}}, 0.25, 1.0)});
  std::ostringstream os;
  write_signal_csv(os, s, {"a", "b"});
  const SignalFile back = parse_signal_csv(os.str());
  CHECK(back.names == std::vector<std::string>{"a", "b"});
  CHECK(back.signal.lengths() == s.lengths());
  for (std::size_t b = 0; b < s.batch(); ++b)
    for (std::size_t i = 0; i < s.length(b); ++i)
      for (std::size_t k = 0; k < s.dim(); ++k)
        CHECK(back.signal.at(b, i, k) == s.at(b, i, k));
}

TEST_CASE("trace export") {
  const Signal s = Signal::scalar({1, 1, 1, 2, 3, 1});
  const Formula f = Formula::eventually(
      Formula::predicate({mu::Coordinate{0}, Comparison::Greater, {0.0, {}}}), {1, 3});
  const RobustnessTrace tr = robustness_trace(s, f);
  std::ostringstream os;
  write_trace_csv(os, tr);
  CHECK(os.str() == "t,rho\n0,2\n1,3\n2,3\n3,3\n4,1\n5,1\n");
  CHECK(trace_json(tr).find("\"traces\"") != std::string::npos);
}

TEST_CASE("config JSON") {
  const EvalConfig cfg =
      parse_eval_config(R"({"mode": "soft", "w": 5, "padding": "const:-2", "rho_max": 100})");
  CHECK(cfg.mode == Approximation::SoftMax);
  CHECK(cfg.w == 5.0);
  CHECK(cfg.padding == Padding::constant(-2));
  CHECK(cfg.rho_max == 100.0);
  const EvalConfig back = parse_eval_config(eval_config_json(cfg));
  CHECK(back.mode == cfg.mode);
  CHECK(back.padding == cfg.padding);
  CHECK_THROWS_AS(parse_eval_config(R"({"mode": "fuzzy"})"), IoError);
  CHECK_THROWS_AS(parse_eval_config(R"({"wq": 1})"), IoError);
  CHECK_THROWS_AS(parse_eval_config(R"({"mode": "logsumexp", "w": 0})"), IoError);
  CHECK_THROWS_AS(parse_eval_config(R"({"w": -1})"), IoError);
}

TEST_CASE("number formatting") {
  CHECK(format_real(2.0) == "2");
  CHECK(format_real(1.0 / 3.0) == "0.333333333");
  CHECK(format_real(0.1, 0) == "0.1");
}

TEST_CASE("plan problem file") {
  const PlanSpec spec = parse_plan_spec(R"({
    "start": [-1, -0.5], "goal": [1, 1], "steps": 40, "dt": 0.05, "u_max": 2,
    "regions": {"B": {"box": {"lo": [0, 0], "hi": [0.5, 0.5]}},
                "C": {"ball": {"center": [0, 0], "radius": 0.3}}},
    "formula": "eventually inside B and always not inside C",
    "gamma1": 1, "margin": 0.1,
    "optimizer": {"step": 0.02, "iters": 10, "mode": "exact", "tol": 0}})");
  CHECK(spec.problem.start == Point2{-1.0, -0.5});
  CHECK(spec.problem.steps == 40);
  CHECK(spec.problem.dt == 0.05);
  CHECK(spec.problem.gamma1 == 1.0);
  CHECK(spec.problem.gamma2 == 0.3);
  CHECK(spec.options.step == 0.02);
  CHECK(spec.options.max_iters == 10);
  CHECK(spec.options.cfg.mode == Approximation::Exact);
  const Signal s = Signal::from_states({{0.25, 0.25}, {1, 1}});
  CHECK(robustness(s, spec.problem.phi)[0] == doctest::Approx(-0.3 + std::hypot(0.25, 0.25)));

  CHECK_THROWS_AS(parse_plan_spec(R"({"stpes": 3})"), IoError);
  CHECK_THROWS_AS(parse_plan_spec(R"({"formula": "inside D"})"), IoError);
  CHECK_THROWS_AS(parse_plan_spec(R"({"steps": 0})"), IoError);
  CHECK_THROWS_AS(parse_plan_spec(R"({"start": [1]})"), IoError);
  CHECK_THROWS_AS(parse_plan_spec(R"({"regions": {"B": {"box": {"lo": [1], "hi": [0]}}}})"), IoError);
  CHECK_THROWS_AS(parse_plan_spec("{"), IoError);
}

TEST_CASE("region JSON") {
  const Region b = parse_region(R"({"box": {"lo": [0, 1], "hi": [2, 3], "axes": [1, 0]}})");
  CHECK(b.kind == Region::Kind::Box);
  CHECK(b.indices == std::vector<std::size_t>{1, 0});
  const Region c = parse_region(R"({"ball": {"center": [1, 2, 3], "radius": 0.5}})");
  CHECK(c.kind == Region::Kind::Ball);
  CHECK(c.radius == 0.5);
  CHECK_THROWS_AS(parse_region(R"({"ball": {"center": [0], "radius": -1}})"), IoError);
  CHECK_THROWS_AS(parse_region(R"({"box": {"lo": [0], "hi": [1]}, "ball": {}})"), IoError);
}

TEST_CASE("fit problem file") {
  const PstlSpec gen = parse_pstl_spec(R"({
    "template": "always x0 < eps", "signals": {"generate": {"count": 4, "samples": 20,
    "dt": 0.5, "seed": 2}}, "parameters": {"eps": 1.5}, "monotone": {"eps": "increasing"},
    "step": 0.001, "iters": 50, "bisect_tol": 1e-6})");
  CHECK(gen.problem.data.batch() == 4);
  CHECK(gen.problem.data.time() == 20);
  CHECK(gen.problem.monotone.at("eps") == Monotonicity::Increasing);
  CHECK(parameter_initial_values(gen.problem.templ).at("eps") == 1.5);
  CHECK(gen.options.max_iters == 50);
  CHECK(gen.bisect.tol == 1e-6);

  const auto dir = std::filesystem::temp_directory_path() / "stlgrad_io_test";
  std::filesystem::create_directories(dir);
  write_file((dir / "sig.csv").string(), "t,speed\n0,1\n1,2\n");
  const PstlSpec file = parse_pstl_spec(
      R"({"template": "always speed < v", "signals": "sig.csv"})", dir.string());
  CHECK(file.problem.data.time() == 2);
  CHECK(file.problem.templ.parameters() == std::vector<std::string>{"v"});

  CHECK_THROWS_AS(parse_pstl_spec(R"({"template": "always x0 < e"})"), IoError);
  CHECK_THROWS_AS(parse_pstl_spec(R"({"template": "always x0 < e", "signals": "nope.csv"})",
                                  dir.string()),
                  IoError);
  CHECK_THROWS_AS(
      parse_pstl_spec(R"({"template": "x0 < e", "signals": {"generate": {}}, "monotone": {"e": "up"}})"),
      IoError);
}

TEST_CASE("reports") {
  PstlFit fit;
  fit.params["eps"] = {1.0, 2.0};
  fit.robustness = {0.0, 0.5};
  fit.iterations = 7;
  const std::string j = fit_report_json(fit, "gradient");
  CHECK(j.find("\"method\": \"gradient\"") != std::string::npos);
  CHECK(j.find("\"eps\"") != std::string::npos);

  PlanProblem p;
  p.steps = 2;
  const PlanResult r = straight_line(p);
  std::ostringstream os;
  write_trajectory_csv(os, r, p.dt);
  CHECK(os.str() == "k,t,x,y,ux,uy\n0,0,-1,-1,10,10\n1,0.1,0,0,10,10\n2,0.2,1,1,,\n");
  CHECK(plan_report_json(r).find("\"satisfied\": false") != std::string::npos);
}

} // TEST_SUITE
