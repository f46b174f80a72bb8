#include <catch_amalgamated.hpp>

#include <cmath>
#include <set>

#include "delaypmp/delaypmp.hpp"

using namespace delaypmp;
using Catch::Matchers::WithinAbs;
using Route = FundamentalMatrix::Route;

namespace {

std::string source(const std::string& rel) { return std::string(DELAYPMP_SOURCE_DIR) + "/" + rel; }

std::string expect_config_error(const std::string& text) {
  try {
    config_from_string(text);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

const char* kMinimal = R"({
  "version": 1, "name": "m", "n": 1, "d": 1, "horizon": 1.0, "delay": 0.5, "step": 0.01,
  "dynamics": {"atoms": [{"delay": 0.5, "coeffs": [[[-1.0]]]}], "control_matrix": {"coeffs": [[[1.0]]]}},
  "history": {"polynomial": [[1.0]]},
  "controls": {"box": {"lower": [-1.0], "upper": [1.0], "grid": 5}},
  "terminal": {"n_ineq": 0, "n_eq": 0, "functions": [{"linear": [1.0]}]},
  "reference_control": [{"from": 0.0, "value": [1.0]}]
})";

}  // namespace

TEST_CASE("catalog entries", "[problems]") {
  std::vector<CatalogEntry> cat = catalog();
  REQUIRE(cat.size() >= 5);
  std::set<std::string> names;
  for (const CatalogEntry& e : cat) {
    names.insert(e.name);
    ControlledProblem p = load_problem(e.name);
    REQUIRE(p.name == e.name);
    REQUIRE_FALSE(p.ground_truth.empty());
    REQUIRE(p.terminal.size() == static_cast<std::size_t>(1 + p.n_ineq + p.n_eq));
    REQUIRE_NOTHROW(solve(p));
  }
  REQUIRE(names.size() == cat.size());
}

TEST_CASE("JSON round trip is bit-equal", "[problems]") {
  for (const CatalogEntry& e : catalog()) {
    if (!e.config) continue;
    std::string once = config_to_json(*e.config).dump();
    ProblemConfig back = config_from_string(once);
    REQUIRE(config_to_json(back).dump() == once);
    // The rebuilt problem integrates to the same bits.
    Trajectory a = solve(build(*e.config));
    Trajectory b = solve(build(back));
    REQUIRE((a.terminal().array() == b.terminal().array()).all());
  }
  ProblemConfig odd = scalar_delay_feedback_config();
  odd.atoms[0].pieces[0].second.coeffs[0](0, 0) = 0.1 + 0.2;
  odd.step = 1.0 / 3000.0;
  odd.horizon = 2.0;
  odd.delay = 1.0;
  ProblemConfig back = config_from_string(config_to_json(odd).dump());
  REQUIRE(back.atoms[0].pieces[0].second.coeffs[0](0, 0) == 0.1 + 0.2);
  REQUIRE(back.step == 1.0 / 3000.0);
}

TEST_CASE("minimal config loads", "[problems]") {
  ProblemConfig c = config_from_string(kMinimal);
  ControlledProblem p = build(c);
  REQUIRE(p.controls.values.size() == 5);
  Trajectory tr = solve(p);
  // x' = -x(t - 1/2) + 1 with unit history: x = 1 on [0, 1/2], then x' = 0.
  REQUIRE_THAT(tr.terminal()(0), WithinAbs(1.0, 1e-12));
}

TEST_CASE("config errors name the field", "[problems]") {
  nlohmann::json base = nlohmann::json::parse(kMinimal);
  auto with = [&](const std::function<void(nlohmann::json&)>& edit) {
    nlohmann::json j = base;
    edit(j);
    return expect_config_error(j.dump());
  };
  REQUIRE(expect_config_error("{not json").find("malformed JSON") != std::string::npos);
  REQUIRE(with([](auto& j) { j.erase("horizon"); }).find("horizon") != std::string::npos);
  REQUIRE(with([](auto& j) { j["version"] = 2; }).find("version") != std::string::npos);
  REQUIRE(with([](auto& j) { j["n"] = 0; }).find("n") != std::string::npos);
  REQUIRE(with([](auto& j) { j["step"] = -1.0; }).find("step") != std::string::npos);
  REQUIRE(with([](auto& j) { j["dynamics"]["atoms"][0]["delay"] = 0.7; }).find("dynamics.atoms[0].delay") != std::string::npos);
  REQUIRE(with([](auto& j) { j["dynamics"]["atoms"][0]["coeffs"] = {{{1.0, 2.0}}}; }).find("dynamics.atoms[0].coeffs") !=
          std::string::npos);
  REQUIRE(with([](auto& j) { j["history"] = nlohmann::json::object(); }).find("history") != std::string::npos);
  REQUIRE(with([](auto& j) { j["controls"]["box"]["lower"] = {2.0}; }).find("controls.box") != std::string::npos);
  REQUIRE(with([](auto& j) { j["terminal"]["n_eq"] = 1; }).find("terminal.functions") != std::string::npos);
  REQUIRE(with([](auto& j) { j["terminal"]["functions"][0]["linear"] = "x"; }).find("terminal.functions[0].linear") !=
          std::string::npos);
  REQUIRE(with([](auto& j) {
            j["history"] = {{"samples", {{"theta", {-0.2, 0.0}}, {"values", {{0.0}, {1.0}}}}}};
          }).find("history.samples.theta") != std::string::npos);
  REQUIRE_THROWS_AS(config_from_file(source("demo/does_not_exist.json")), ConfigError);
}

TEST_CASE("delay must be a multiple of the step", "[problems]") {
  nlohmann::json j = nlohmann::json::parse(kMinimal);
  j["delay"] = 0.3;
  j["step"] = 0.04;
  j["dynamics"]["atoms"][0]["delay"] = 0.3;
  try {
    config_from_string(j.dump());
    FAIL("expected an alignment error");
  } catch (const AlignmentError& e) {
    REQUIRE(std::string(e.what()).find("r/h not integer") != std::string::npos);
  }
}

TEST_CASE("catalog ground truths", "[problems]") {
  SECTION("pure integrator") {
    ControlledProblem p = load_problem("pure_integrator");
    REQUIRE(solve(p).terminal()(0) == 1.0);
  }
  SECTION("delay-free decay benchmark") {
    ControlledProblem p = load_problem("scalar_delay_free_decay");
    Trajectory tr = solve(p);
    REQUIRE_THAT(tr.at(1000)(0), WithinAbs(0.0, 1e-6));
    REQUIRE_THAT(tr.terminal()(0), WithinAbs(-0.5, 1e-5));
  }
  SECTION("delay feedback") {
    ControlledProblem p = load_problem("scalar_delay_feedback");
    Trajectory tr = solve(p);
    // x = t on [0, 1]; x' = (t - 1) + 1 on [1, 2]; x(2) = 1 + 1/2 + 1.
    REQUIRE_THAT(tr.at(1000)(0), WithinAbs(1.0, 1e-12));
    REQUIRE_THAT(tr.terminal()(0), WithinAbs(2.5, 1e-9));
  }
  SECTION("constrained terminal") {
    ControlledProblem p = load_problem("constrained_terminal");
    Trajectory tr = solve(p);
    REQUIRE_THAT(tr.terminal()(0), WithinAbs(0.0, 1e-12));
    REQUIRE_THAT(tr.terminal()(1), WithinAbs(0.125, 1e-9));
    Vec g = terminal_values(p, tr.terminal());
    REQUIRE(std::abs(g(1)) <= 1e-8);
    REQUIRE(std::abs(g(2)) <= 1e-8);
    QcResult qc = check_qc(g, terminal_gradients(p, tr.terminal()), 1, 1);
    REQUIRE(qc.holds);
  }
  SECTION("rotation with delay") {
    ControlledProblem p = load_problem("two_dim_rotation_with_delay");
    PiecewiseFn u = reference_control(p, p.mesh());
    Trajectory tr = solve(p, u);
    DelayKernel K = linearize(p, tr.x, u);
    FundamentalMatrix::Request req;
    req.rows = {p.mesh().steps()};
    FundamentalMatrix X = fundamental(K, Route::Direct, req);
    for (Index j = 0; j < p.mesh().steps(); j += 25) REQUIRE(X.terminal(j)(0, 1) > 0.0);
  }
  SECTION("nonlinear oscillator") {
    ControlledProblem p = load_problem("nonlinear_delay_oscillator");
    REQUIRE(std::isfinite(solve(p).terminal()(0)));
  }
}

TEST_CASE("demo files load", "[problems]") {
  for (const char* f : {"demo/scalar_delay_feedback.json", "demo/distributed_delay.json"}) {
    ControlledProblem p = load_problem(source(f));
    Trajectory tr = solve(p);
    REQUIRE(tr.terminal().allFinite());
  }
  // The demo file carries the catalog dynamics under its own name.
  ProblemConfig a = config_from_file(source("demo/scalar_delay_feedback.json"));
  ProblemConfig b = scalar_delay_feedback_config();
  a.name = b.name;
  a.ground_truth = b.ground_truth;
  REQUIRE(config_to_json(a).dump() == config_to_json(b).dump());
}
