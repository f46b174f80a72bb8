#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "delaypmp/delaypmp.hpp"

namespace fs = std::filesystem;
using namespace delaypmp;

namespace {

enum Exit { kPass = 0, kConfig = 2, kNumeric = 3, kInfeasible = 4, kConditionFailed = 5, kConvergence = 6 };

struct Options {
  std::string problem;
  std::optional<double> h;
  std::string control = "reference";
  std::string lambda;
  std::string out = ".";
  bool dump_x = false;
  std::optional<Index> mp_grid;
  Index stride = 10;
  std::vector<std::string> needles;
  std::string eps;
};

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

class Csv {
 public:
  void row(const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) text_ += (i ? "," : "") + cells[i];
    text_ += '\n';
  }
  void write(const fs::path& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot write " + path.string());
    out << text_;
  }

 private:
  std::string text_;
};

std::vector<double> parse_list(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ConfigError("cannot parse number '" + item + "'");
    }
  }
  return out;
}

Vec to_vec(const std::vector<double>& v) { return Eigen::Map<const Vec>(v.data(), static_cast<Index>(v.size())); }

nlohmann::json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

/// reference | constant:<v1,v2,...> | path to {"control": [{"from": t, "value": [...]}]}
PiecewiseFn load_control(const ControlledProblem& prob, const Mesh& mesh, const std::string& src) {
  if (src == "reference") return reference_control(prob, mesh);
  if (src.rfind("constant:", 0) == 0) {
    Vec v = to_vec(parse_list(src.substr(9)));
    if (v.size() != prob.d) throw ConfigError("constant control has dimension " + std::to_string(v.size()));
    return constant_control(mesh, v);
  }
  nlohmann::json j = read_json(src);
  const nlohmann::json& tab = j.is_object() && j.contains("control") ? j.at("control") : j;
  if (!tab.is_array()) throw ConfigError(src + ": expected a control table");
  ControlTable table;
  try {
    for (const auto& e : tab) table.emplace_back(e.at("from").get<double>(), to_vec(e.at("value").get<std::vector<double>>()));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(src + ": " + e.what());
  }
  return control_from_table(mesh, prob.d, table);
}

struct Setup {
  ControlledProblem prob;
  Mesh mesh;
  PiecewiseFn u;
};

Setup setup(const Options& o) {
  ControlledProblem prob = load_problem(o.problem);
  if (o.h) prob = prob.with_step(*o.h);
  Mesh mesh = prob.mesh();
  PiecewiseFn u = load_control(prob, mesh, o.control);
  return {std::move(prob), std::move(mesh), std::move(u)};
}

class Report {
 public:
  explicit Report(std::string command) : start_(std::chrono::steady_clock::now()) { line("command: " + command); }
  void line(const std::string& s) { text_ += s + "\n"; }
  void mesh(const ControlledProblem& p, const Mesh& m) {
    line("problem: " + p.name);
    line("mesh: T=" + num(m.horizon()) + " r=" + num(m.delay()) + " h=" + num(m.step()) + " steps=" + std::to_string(m.steps()));
  }
  void output(const fs::path& p) { outputs_.push_back(p.string()); }
  void finish(const fs::path& dir) {
    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    line("timing: " + num(secs) + " s");
    for (const auto& o : outputs_) line("output: " + o);
    line("output: " + (dir / "report.txt").string());
    std::ofstream(dir / "report.txt", std::ios::binary) << text_;
    std::cout << text_;
  }

 private:
  std::chrono::steady_clock::time_point start_;
  std::string text_;
  std::vector<std::string> outputs_;
};

std::string echo(int argc, char** argv) {
  std::string s;
  for (int i = 0; i < argc; ++i) s += (i ? " " : "") + std::string(argv[i]);
  return s;
}

fs::path out_dir(const Options& o) {
  fs::path d(o.out);
  std::error_code ec;
  fs::create_directories(d, ec);
  if (ec) throw ConfigError("cannot create output directory " + o.out);
  return d;
}

void write_x_row(const FundamentalMatrix& X, const Mesh& mesh, const fs::path& path) {
  Csv csv;
  Index n = X.dim();
  std::vector<std::string> head{"t"};
  for (Index a = 0; a < n; ++a) {
    for (Index b = 0; b < n; ++b) head.push_back("X" + std::to_string(a + 1) + std::to_string(b + 1));
  }
  csv.row(head);
  for (Index j = 0; j <= mesh.steps(); ++j) {
    Mat Xr = X.terminal(j);
    std::vector<std::string> r{num(mesh.time(j))};
    for (Index a = 0; a < n; ++a) {
      for (Index b = 0; b < n; ++b) r.push_back(num(Xr(a, b)));
    }
    csv.row(r);
  }
  csv.write(path);
}

void write_x_dense(const FundamentalMatrix& X, const Mesh& mesh, const fs::path& path) {
  Csv csv;
  Index n = X.dim();
  std::vector<std::string> head{"t", "s"};
  for (Index a = 0; a < n; ++a) {
    for (Index b = 0; b < n; ++b) head.push_back("X" + std::to_string(a + 1) + std::to_string(b + 1));
  }
  csv.row(head);
  for (Index i = 0; i <= mesh.steps(); ++i) {
    for (Index j = 0; j <= i; ++j) {
      Mat Xv = X.at(i, j);
      std::vector<std::string> r{num(mesh.time(i)), num(mesh.time(j))};
      for (Index a = 0; a < n; ++a) {
        for (Index b = 0; b < n; ++b) r.push_back(num(Xv(a, b)));
      }
      csv.row(r);
    }
  }
  csv.write(path);
}

int cmd_solve(const Options& o, const std::string& command) {
  Setup s = setup(o);
  Trajectory tr = solve(s.prob, s.u);
  fs::path dir = out_dir(o);
  Report rep(command);
  rep.mesh(s.prob, s.mesh);
  Csv csv;
  std::vector<std::string> head{"t"};
  for (Index i = 0; i < s.prob.n; ++i) head.push_back("x" + std::to_string(i + 1));
  for (Index i = 0; i < s.prob.d; ++i) head.push_back("u" + std::to_string(i + 1));
  csv.row(head);
  for (Index j = 0; j <= s.mesh.steps(); ++j) {
    std::vector<std::string> r{num(s.mesh.time(j))};
    Vec x = tr.x.right(j);
    Vec u = s.u.right(j);
    for (Index i = 0; i < x.size(); ++i) r.push_back(num(x(i)));
    for (Index i = 0; i < u.size(); ++i) r.push_back(num(u(i)));
    csv.row(r);
  }
  csv.write(dir / "trajectory.csv");
  rep.output(dir / "trajectory.csv");
  Vec xT = tr.terminal();
  std::string xs;
  for (Index i = 0; i < xT.size(); ++i) xs += (i ? " " : "") + num(xT(i));
  rep.line("x(T): " + xs);
  rep.finish(dir);
  return kPass;
}

int cmd_fundamental(const Options& o, const std::string& command) {
  Setup s = setup(o);
  Trajectory tr = solve(s.prob, s.u);
  DelayKernel K = linearize(s.prob, tr.x, s.u);
  FundamentalMatrix::Request req;
  req.dense = o.dump_x;
  FundamentalMatrix Xd = fundamental(K, FundamentalMatrix::Route::Direct, req);
  FundamentalMatrix Xv = fundamental(K, FundamentalMatrix::Route::Volterra, req);
  double dist = max_distance(Xd, Xv);
  fs::path dir = out_dir(o);
  Report rep(command);
  rep.mesh(s.prob, s.mesh);
  write_x_row(Xd, s.mesh, dir / "x_terminal_row.csv");
  rep.output(dir / "x_terminal_row.csv");
  if (o.dump_x) {
    write_x_dense(Xd, s.mesh, dir / "x_dense.csv");
    rep.output(dir / "x_dense.csv");
  }
  rep.line("route distance: " + num(dist));
  rep.finish(dir);
  return dist <= 1e-4 ? kPass : kNumeric;
}

MultiplierResult search(const ControlledProblem& prob, const Mesh& mesh, const Trajectory& tr, const PiecewiseFn& u,
                        const FundamentalMatrix& X, const Options& o) {
  MultiplierProgram prog = make_program(prob, tr.terminal());
  prog = enrich_samples(prog, sample_batch(mesh, o.stride, prob.controls.samples(o.mp_grid)), prob, tr, u, X);
  return solve_multipliers(prog);
}

void write_multipliers(const ControlledProblem& prob, const Vec& g, const Vec& lambda, const fs::path& path) {
  Csv csv;
  csv.row({"j", "kind", "g", "lambda"});
  for (Index j = 0; j < lambda.size(); ++j) {
    std::string kind = j == 0 ? "objective" : (j <= prob.n_ineq ? "inequality" : "equality");
    csv.row({std::to_string(j), kind, num(g(j)), num(lambda(j))});
  }
  csv.write(path);
}

int cmd_check_pmp(const Options& o, const std::string& command) {
  Setup s = setup(o);
  Trajectory tr = solve(s.prob, s.u);
  DelayKernel K = linearize(s.prob, tr.x, s.u);
  FundamentalMatrix X = fundamental(K, FundamentalMatrix::Route::Direct);
  FundamentalMatrix Xv = fundamental(K, FundamentalMatrix::Route::Volterra);
  double dist = max_distance(X, Xv);
  fs::path dir = out_dir(o);
  Report rep(command);
  rep.mesh(s.prob, s.mesh);
  rep.line("route distance: " + num(dist));

  Vec lambda;
  std::string source = o.lambda;
  if (source.empty()) source = s.prob.default_lambda ? "default" : "search";
  if (source == "default") {
    lambda = *s.prob.default_lambda;
  } else if (source == "search") {
    MultiplierResult res = search(s.prob, s.mesh, tr, s.u, X, o);
    if (!res.feasible) {
      rep.line("multipliers: " + res.message);
      rep.finish(dir);
      return kInfeasible;
    }
    lambda = res.lambda;
  } else {
    nlohmann::json j = read_json(source);
    const nlohmann::json& arr = j.is_object() && j.contains("lambda") ? j.at("lambda") : j;
    try {
      lambda = to_vec(arr.get<std::vector<double>>());
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(source + ": " + e.what());
    }
  }
  Vec g = terminal_values(s.prob, tr.terminal());
  Mat G = terminal_gradients(s.prob, tr.terminal());
  PiecewiseFn p = build_p(lambda, G, X);
  PmpOptions opt;
  opt.mp_grid = o.mp_grid;
  PmpCertificate cert = check_conditions(s.prob, tr, K, lambda, p, opt);

  Csv csv;
  std::vector<std::string> head{"problem", "h"};
  std::vector<std::string> vals{s.prob.name, num(s.mesh.step())};
  for (Index j = 0; j < lambda.size(); ++j) {
    head.push_back("lambda" + std::to_string(j));
    vals.push_back(num(lambda(j)));
  }
  for (Index j = 0; j < g.size(); ++j) {
    head.push_back("g" + std::to_string(j));
    vals.push_back(num(g(j)));
  }
  for (const ConditionResult& c : cert.conditions) {
    head.push_back(c.name + "_residual");
    head.push_back(c.name + "_verdict");
    vals.push_back(num(c.residual));
    vals.push_back(verdict_name(c.verdict));
  }
  head.push_back("route_distance");
  vals.push_back(num(dist));
  csv.row(head);
  csv.row(vals);
  csv.write(dir / "certificate.csv");
  rep.output(dir / "certificate.csv");
  write_multipliers(s.prob, g, lambda, dir / "multipliers.csv");
  rep.output(dir / "multipliers.csv");
  if (o.dump_x) {
    write_x_row(X, s.mesh, dir / "x_terminal_row.csv");
    rep.output(dir / "x_terminal_row.csv");
  }

  std::string ls;
  for (Index j = 0; j < lambda.size(); ++j) ls += (j ? " " : "") + num(lambda(j));
  rep.line("lambda (" + source + "): " + ls);
  for (const ConditionResult& c : cert.conditions) {
    rep.line(c.name + ": residual=" + num(c.residual) + " tol=" + num(c.tolerance) + " " + verdict_name(c.verdict));
  }
  rep.line("AE without eta(.,0) normalization: " + num(cert.ae_literal));
  bool ok = cert.all_pass();
  rep.line(std::string("verdict: ") + (ok ? "pass" : "fail"));
  rep.finish(dir);
  return ok ? kPass : kConditionFailed;
}

/// t:v1,v2,... (value list may be empty when d = 0)
Needle parse_needle(const std::string& s, Index d) {
  auto colon = s.find(':');
  if (colon == std::string::npos) throw ConfigError("needle '" + s + "' must look like t:v");
  Needle nd;
  std::vector<double> t = parse_list(s.substr(0, colon));
  if (t.size() != 1) throw ConfigError("needle '" + s + "' has no time");
  nd.t = t[0];
  std::string rest = s.substr(colon + 1);
  nd.v = rest.empty() ? Vec(0) : to_vec(parse_list(rest));
  if (nd.v.size() != d) throw ConfigError("needle value in '" + s + "' has dimension " + std::to_string(nd.v.size()));
  return nd;
}

int cmd_needle(const Options& o, const std::string& command) {
  Setup s = setup(o);
  if (o.needles.empty()) throw ConfigError("at least one --needle t:v is required");
  double h = s.mesh.step();
  NeedleSpec spec;
  for (const std::string& n : o.needles) {
    spec.needles.push_back(parse_needle(n, s.prob.d));
    spec.widths.push_back(h);
  }
  std::vector<double> ladder;
  if (o.eps.empty()) {
    for (int k = 0; k <= 5; ++k) ladder.push_back(std::ldexp(h, k));
  } else {
    ladder = parse_list(o.eps);
  }
  check_control(s.prob, s.mesh, s.u);
  Trajectory tr = solve(s.prob, s.u);
  DelayKernel K = linearize(s.prob, tr.x, s.u);
  FundamentalMatrix::Request req;
  for (const Needle& nd : spec.needles) req.cols.push_back(s.mesh.index_of(nd.t, "needle time"));
  FundamentalMatrix X = fundamental(K, FundamentalMatrix::Route::Direct, req);
  FdTable tab = finite_difference_check(s.prob, tr, s.u, spec, ladder, X);

  fs::path dir = out_dir(o);
  Report rep(command);
  rep.mesh(s.prob, s.mesh);
  Csv csv;
  std::vector<std::string> head{"eps"};
  for (std::size_t i = 0; i < spec.needles.size(); ++i) head.push_back("error" + std::to_string(i + 1));
  for (std::size_t i = 0; i < spec.needles.size(); ++i) head.push_back("slope" + std::to_string(i + 1));
  csv.row(head);
  for (std::size_t e = 0; e < ladder.size(); ++e) {
    std::vector<std::string> r{num(ladder[e])};
    for (double err : tab.errors[e]) r.push_back(num(err));
    for (std::size_t i = 0; i < spec.needles.size(); ++i) r.push_back(tab.exact[i] ? "exact" : num(tab.slopes[i]));
    csv.row(r);
  }
  csv.write(dir / "needle_convergence.csv");
  rep.output(dir / "needle_convergence.csv");
  bool ok = true;
  for (std::size_t i = 0; i < spec.needles.size(); ++i) {
    std::string verdict;
    if (tab.exact[i]) {
      verdict = "exact";
    } else if (std::isnan(tab.slopes[i]) || tab.slopes[i] < 0.9) {
      verdict = "fail";
      ok = false;
    } else {
      verdict = "pass";
    }
    rep.line("needle " + o.needles[i] + ": slope=" + (tab.exact[i] ? std::string("exact") : num(tab.slopes[i])) + " " + verdict);
  }
  rep.line(std::string("verdict: ") + (ok ? "pass" : "fail"));
  rep.finish(dir);
  return ok ? kPass : kConvergence;
}

int cmd_search(const Options& o, const std::string& command) {
  Setup s = setup(o);
  Trajectory tr = solve(s.prob, s.u);
  DelayKernel K = linearize(s.prob, tr.x, s.u);
  FundamentalMatrix X = fundamental(K, FundamentalMatrix::Route::Direct);
  MultiplierResult res = search(s.prob, s.mesh, tr, s.u, X, o);
  fs::path dir = out_dir(o);
  Report rep(command);
  rep.mesh(s.prob, s.mesh);
  rep.line("multipliers: " + res.message);
  if (!res.feasible) {
    rep.finish(dir);
    return kInfeasible;
  }
  Vec g = terminal_values(s.prob, tr.terminal());
  write_multipliers(s.prob, g, res.lambda, dir / "multipliers.csv");
  rep.output(dir / "multipliers.csv");
  std::string ls;
  for (Index j = 0; j < res.lambda.size(); ++j) ls += (j ? " " : "") + num(res.lambda(j));
  rep.line("lambda: " + ls);
  rep.line("residuals: norm=" + num(res.residuals.norm) + " sign=" + num(res.residuals.sign) +
           " slack=" + num(res.residuals.slack) + " samples=" + num(res.residuals.samples));
  rep.finish(dir);
  return kPass;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Pontryagin checks for delay optimal control problems"};
  app.require_subcommand(1);
  // "--h" is the step size, so help is long-form only.
  app.set_help_flag("--help", "print this help and exit");
  Options o;
  auto common = [&](CLI::App* sub) {
    sub->add_option("--problem", o.problem, "catalog name or JSON config path")->required();
    sub->add_option("--h", o.h, "step size override");
    sub->add_option("--control", o.control, "reference | constant:<v,...> | path to a control table");
    sub->add_option("--out", o.out, "output directory");
  };
  CLI::App* solve_cmd = app.add_subcommand("solve", "integrate the state equation");
  common(solve_cmd);
  CLI::App* fund_cmd = app.add_subcommand("fundamental", "fundamental matrix on both routes");
  common(fund_cmd);
  fund_cmd->add_flag("--dump-x", o.dump_x, "write the full lower-triangular X");
  CLI::App* pmp_cmd = app.add_subcommand("check-pmp", "verify the maximum principle for a candidate");
  common(pmp_cmd);
  pmp_cmd->add_option("--lambda", o.lambda, "path to a multiplier file, or 'search'");
  pmp_cmd->add_option("--mp-grid", o.mp_grid, "grid count for the maximum-condition scan of a box U");
  pmp_cmd->add_option("--stride", o.stride, "node stride of the multiplier sample family");
  pmp_cmd->add_flag("--dump-x", o.dump_x, "write X(T, t)");
  CLI::App* needle_cmd = app.add_subcommand("needle", "finite-difference check of needle sensitivities");
  common(needle_cmd);
  needle_cmd->add_option("--needle", o.needles, "needle t:v (repeatable)");
  needle_cmd->add_option("--eps", o.eps, "comma-separated widths (default h,2h,...,32h)");
  CLI::App* mult_cmd = app.add_subcommand("search-multipliers", "multiplier search on a sampled needle family");
  common(mult_cmd);
  mult_cmd->add_option("--mp-grid", o.mp_grid, "grid count for sampling a box U");
  mult_cmd->add_option("--stride", o.stride, "node stride of the sample family");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kConfig;
  }
  std::string command = echo(argc, argv);
  try {
    if (*solve_cmd) return cmd_solve(o, command);
    if (*fund_cmd) return cmd_fundamental(o, command);
    if (*pmp_cmd) return cmd_check_pmp(o, command);
    if (*needle_cmd) return cmd_needle(o, command);
    if (*mult_cmd) return cmd_search(o, command);
  } catch (const ConvergenceError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kConvergence;
  } catch (const NumericError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kNumeric;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kConfig;
  }
  return kConfig;
}
