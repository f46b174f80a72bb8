#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "delaypmp/errors.hpp"
#include "delaypmp/problem.hpp"

namespace delaypmp {

/// Matrix polynomial sum_p coeffs[p] t^p.
struct MatPoly {
  std::vector<Mat> coeffs;

  Mat eval(double t, Index rows, Index cols) const {
    Mat out = Mat::Zero(rows, cols);
    double tp = 1.0;
    for (const Mat& c : coeffs) {
      out += tp * c;
      tp *= t;
    }
    return out;
  }
};

/// One atom A_k(t) psi(-r_k); coefficients are piecewise polynomial in t,
/// each piece active from its start time on.
struct AtomConfig {
  double delay = 0.0;
  std::vector<std::pair<double, MatPoly>> pieces;

  const MatPoly& active(double t, double h) const {
    std::size_t k = 0;
    for (std::size_t q = 1; q < pieces.size(); ++q) {
      if (t >= pieces[q].first - 1e-8 * h) k = q;
    }
    return pieces[k].second;
  }
};

/// History phi(theta): polynomial coefficients, or samples with linear interpolation.
struct HistoryConfig {
  std::vector<Vec> polynomial;
  std::vector<double> theta;
  std::vector<Vec> values;

  bool sampled() const { return !theta.empty(); }
};

struct ControlConfig {
  std::vector<Vec> finite;
  bool is_box = false;
  Vec lower;
  Vec upper;
  Index grid = 0;
};

/// g(x) = constant + linear . x + 1/2 x^T quadratic x.
struct TerminalConfig {
  double constant = 0.0;
  Vec linear;
  Mat quadratic;
};

/// Linear-in-state problem description that round-trips through JSON.
///
///   x'(t) = sum_k A_k(t) x(t - r_k) + int_{-r}^0 C(t, theta) x(t + theta) dtheta + B(t) u + b(t)
struct ProblemConfig {
  int version = 1;
  std::string name;
  Index n = 1;
  Index d = 0;
  double horizon = 1.0;
  double delay = 0.0;
  double step = 1e-3;
  std::vector<AtomConfig> atoms;
  std::vector<std::vector<Mat>> density;  // C = sum_{p,q} density[p][q] t^p theta^q
  MatPoly control_matrix;
  std::vector<Vec> drift;
  HistoryConfig history;
  ControlConfig controls;
  std::vector<TerminalConfig> terminal;
  Index n_ineq = 0;
  Index n_eq = 0;
  ControlTable reference;
  std::vector<double> breakpoints;
  std::optional<Vec> lambda;
  std::string ground_truth;
};

namespace detail {

using nlohmann::json;

inline ConfigError field_error(const std::string& path, const std::string& what) {
  return ConfigError("config field '" + path + "': " + what);
}

inline const json& need(const json& j, const std::string& key, const std::string& path) {
  if (!j.is_object() || !j.contains(key)) throw field_error(path + key, "missing");
  return j.at(key);
}

inline double num(const json& j, const std::string& path) {
  if (!j.is_number()) throw field_error(path, "expected a number");
  double v = j.get<double>();
  if (!std::isfinite(v)) throw field_error(path, "not finite");
  return v;
}

inline Index count(const json& j, const std::string& path) {
  if (!j.is_number_integer() || j.get<long long>() < 0) throw field_error(path, "expected a non-negative integer");
  return static_cast<Index>(j.get<long long>());
}

inline Vec vec(const json& j, Index size, const std::string& path) {
  if (!j.is_array()) throw field_error(path, "expected an array");
  if (static_cast<Index>(j.size()) != size) {
    throw field_error(path, "expected " + std::to_string(size) + " entries, got " + std::to_string(j.size()));
  }
  Vec v(size);
  for (Index i = 0; i < size; ++i) v(i) = num(j[static_cast<std::size_t>(i)], path + "[" + std::to_string(i) + "]");
  return v;
}

inline Mat mat(const json& j, Index rows, Index cols, const std::string& path) {
  if (!j.is_array() || static_cast<Index>(j.size()) != rows) {
    throw field_error(path, "expected " + std::to_string(rows) + " rows");
  }
  Mat A(rows, cols);
  for (Index i = 0; i < rows; ++i) A.row(i) = vec(j[static_cast<std::size_t>(i)], cols, path + "[" + std::to_string(i) + "]").transpose();
  return A;
}

inline MatPoly poly(const json& j, Index rows, Index cols, const std::string& path) {
  if (!j.is_array()) throw field_error(path, "expected a list of coefficient matrices");
  MatPoly p;
  for (std::size_t k = 0; k < j.size(); ++k) p.coeffs.push_back(mat(j[k], rows, cols, path + "[" + std::to_string(k) + "]"));
  return p;
}

inline json to_json(const Vec& v) {
  json a = json::array();
  for (Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

inline json to_json(const Mat& A) {
  json a = json::array();
  for (Index i = 0; i < A.rows(); ++i) a.push_back(to_json(Vec(A.row(i).transpose())));
  return a;
}

inline json to_json(const MatPoly& p) {
  json a = json::array();
  for (const Mat& c : p.coeffs) a.push_back(to_json(c));
  return a;
}

}  // namespace detail

/// Parses a version-1 problem document. Errors name the offending field.
inline ProblemConfig config_from_json(const nlohmann::json& j) {
  using namespace detail;
  if (!j.is_object()) throw ConfigError("problem config must be a JSON object");
  ProblemConfig c;
  c.version = static_cast<int>(count(need(j, "version", ""), "version"));
  if (c.version != 1) throw field_error("version", "unsupported version " + std::to_string(c.version));
  if (j.contains("name")) c.name = j.at("name").get<std::string>();
  c.n = count(need(j, "n", ""), "n");
  if (c.n < 1) throw field_error("n", "must be at least 1");
  c.d = count(need(j, "d", ""), "d");
  c.horizon = num(need(j, "horizon", ""), "horizon");
  c.delay = num(need(j, "delay", ""), "delay");
  c.step = num(need(j, "step", ""), "step");
  if (c.horizon <= 0) throw field_error("horizon", "must be positive");
  if (c.delay < 0) throw field_error("delay", "must be non-negative");
  if (c.step <= 0) throw field_error("step", "must be positive");

  const json& dyn = need(j, "dynamics", "");
  if (dyn.contains("atoms")) {
    const json& atoms = dyn.at("atoms");
    if (!atoms.is_array()) throw field_error("dynamics.atoms", "expected an array");
    for (std::size_t k = 0; k < atoms.size(); ++k) {
      std::string path = "dynamics.atoms[" + std::to_string(k) + "]";
      AtomConfig a;
      a.delay = num(need(atoms[k], "delay", path + "."), path + ".delay");
      if (a.delay < 0 || a.delay > c.delay + 1e-12) throw field_error(path + ".delay", "must lie in [0, r]");
      if (atoms[k].contains("pieces")) {
        const json& ps = atoms[k].at("pieces");
        if (!ps.is_array() || ps.empty()) throw field_error(path + ".pieces", "expected a non-empty array");
        for (std::size_t q = 0; q < ps.size(); ++q) {
          std::string pp = path + ".pieces[" + std::to_string(q) + "]";
          double from = num(need(ps[q], "from", pp + "."), pp + ".from");
          if (q == 0 && from != 0.0) throw field_error(pp + ".from", "first piece must start at 0");
          if (q > 0 && from <= a.pieces.back().first) throw field_error(pp + ".from", "piece starts must increase");
          a.pieces.emplace_back(from, poly(need(ps[q], "coeffs", pp + "."), c.n, c.n, pp + ".coeffs"));
        }
      } else {
        a.pieces.emplace_back(0.0, poly(need(atoms[k], "coeffs", path + "."), c.n, c.n, path + ".coeffs"));
      }
      c.atoms.push_back(std::move(a));
    }
  }
  if (dyn.contains("density")) {
    const json& dc = need(dyn.at("density"), "coeffs", "dynamics.density.");
    if (!dc.is_array()) throw field_error("dynamics.density.coeffs", "expected an array");
    for (std::size_t p = 0; p < dc.size(); ++p) {
      std::vector<Mat> row;
      if (!dc[p].is_array()) throw field_error("dynamics.density.coeffs[" + std::to_string(p) + "]", "expected an array");
      for (std::size_t q = 0; q < dc[p].size(); ++q) {
        row.push_back(mat(dc[p][q], c.n, c.n, "dynamics.density.coeffs[" + std::to_string(p) + "][" + std::to_string(q) + "]"));
      }
      c.density.push_back(std::move(row));
    }
  }
  if (dyn.contains("control_matrix")) {
    c.control_matrix = poly(need(dyn.at("control_matrix"), "coeffs", "dynamics.control_matrix."), c.n, c.d, "dynamics.control_matrix.coeffs");
  }
  if (dyn.contains("drift")) {
    const json& dr = need(dyn.at("drift"), "coeffs", "dynamics.drift.");
    if (!dr.is_array()) throw field_error("dynamics.drift.coeffs", "expected an array");
    for (std::size_t p = 0; p < dr.size(); ++p) c.drift.push_back(vec(dr[p], c.n, "dynamics.drift.coeffs[" + std::to_string(p) + "]"));
  }

  const json& hist = need(j, "history", "");
  if (hist.contains("polynomial")) {
    const json& hp = hist.at("polynomial");
    if (!hp.is_array() || hp.empty()) throw field_error("history.polynomial", "expected a non-empty array");
    for (std::size_t p = 0; p < hp.size(); ++p) c.history.polynomial.push_back(vec(hp[p], c.n, "history.polynomial[" + std::to_string(p) + "]"));
  } else if (hist.contains("samples")) {
    const json& hs = hist.at("samples");
    const json& th = need(hs, "theta", "history.samples.");
    const json& vs = need(hs, "values", "history.samples.");
    if (!th.is_array() || !vs.is_array() || th.size() != vs.size() || th.size() < 2) {
      throw field_error("history.samples", "theta and values must be arrays of equal length >= 2");
    }
    for (std::size_t i = 0; i < th.size(); ++i) {
      double t = num(th[i], "history.samples.theta[" + std::to_string(i) + "]");
      if (i > 0 && t <= c.history.theta.back()) throw field_error("history.samples.theta", "must increase");
      c.history.theta.push_back(t);
      c.history.values.push_back(vec(vs[i], c.n, "history.samples.values[" + std::to_string(i) + "]"));
    }
    if (c.history.theta.front() > -c.delay + 1e-12 || c.history.theta.back() < -1e-12) {
      throw field_error("history.samples.theta", "must cover [-r, 0]");
    }
  } else {
    throw field_error("history", "expected 'polynomial' or 'samples'");
  }

  const json& ctl = need(j, "controls", "");
  if (ctl.contains("finite")) {
    const json& fv = ctl.at("finite");
    if (!fv.is_array() || fv.empty()) throw field_error("controls.finite", "expected a non-empty array");
    for (std::size_t i = 0; i < fv.size(); ++i) c.controls.finite.push_back(vec(fv[i], c.d, "controls.finite[" + std::to_string(i) + "]"));
  } else if (ctl.contains("box")) {
    const json& bx = ctl.at("box");
    c.controls.is_box = true;
    c.controls.lower = vec(need(bx, "lower", "controls.box."), c.d, "controls.box.lower");
    c.controls.upper = vec(need(bx, "upper", "controls.box."), c.d, "controls.box.upper");
    c.controls.grid = count(need(bx, "grid", "controls.box."), "controls.box.grid");
    if (c.controls.grid < 1) throw field_error("controls.box.grid", "must be at least 1");
    if ((c.controls.upper - c.controls.lower).minCoeff() < 0) throw field_error("controls.box", "lower exceeds upper");
  } else {
    throw field_error("controls", "expected 'finite' or 'box'");
  }

  const json& term = need(j, "terminal", "");
  c.n_ineq = count(need(term, "n_ineq", "terminal."), "terminal.n_ineq");
  c.n_eq = count(need(term, "n_eq", "terminal."), "terminal.n_eq");
  const json& fns = need(term, "functions", "terminal.");
  if (!fns.is_array() || static_cast<Index>(fns.size()) != 1 + c.n_ineq + c.n_eq) {
    throw field_error("terminal.functions", "expected 1 + n_ineq + n_eq entries");
  }
  for (std::size_t k = 0; k < fns.size(); ++k) {
    std::string path = "terminal.functions[" + std::to_string(k) + "]";
    TerminalConfig t;
    if (fns[k].contains("constant")) t.constant = num(fns[k].at("constant"), path + ".constant");
    t.linear = fns[k].contains("linear") ? vec(fns[k].at("linear"), c.n, path + ".linear") : Vec::Zero(c.n);
    t.quadratic = fns[k].contains("quadratic") ? mat(fns[k].at("quadratic"), c.n, c.n, path + ".quadratic") : Mat::Zero(c.n, c.n);
    c.terminal.push_back(std::move(t));
  }

  if (j.contains("reference_control")) {
    const json& rc = j.at("reference_control");
    if (!rc.is_array() || rc.empty()) throw field_error("reference_control", "expected a non-empty array");
    for (std::size_t i = 0; i < rc.size(); ++i) {
      std::string path = "reference_control[" + std::to_string(i) + "]";
      c.reference.emplace_back(num(need(rc[i], "from", path + "."), path + ".from"), vec(need(rc[i], "value", path + "."), c.d, path + ".value"));
    }
  }
  if (j.contains("breakpoints")) {
    const json& bp = j.at("breakpoints");
    if (!bp.is_array()) throw field_error("breakpoints", "expected an array");
    for (std::size_t i = 0; i < bp.size(); ++i) c.breakpoints.push_back(num(bp[i], "breakpoints[" + std::to_string(i) + "]"));
  }
  if (j.contains("lambda")) c.lambda = vec(j.at("lambda"), 1 + c.n_ineq + c.n_eq, "lambda");
  if (j.contains("ground_truth")) c.ground_truth = j.at("ground_truth").get<std::string>();
  // Fails early on r/h or breakpoint misalignment.
  Mesh::uniform(c.horizon, c.delay, c.step);
  return c;
}

inline nlohmann::json config_to_json(const ProblemConfig& c) {
  using detail::json;
  using detail::to_json;
  json j;
  j["version"] = c.version;
  j["name"] = c.name;
  j["n"] = c.n;
  j["d"] = c.d;
  j["horizon"] = c.horizon;
  j["delay"] = c.delay;
  j["step"] = c.step;
  json dyn = json::object();
  json atoms = json::array();
  for (const AtomConfig& a : c.atoms) {
    json ja;
    ja["delay"] = a.delay;
    if (a.pieces.size() == 1) {
      ja["coeffs"] = to_json(a.pieces[0].second);
    } else {
      json ps = json::array();
      for (const auto& [from, p] : a.pieces) ps.push_back({{"from", from}, {"coeffs", to_json(p)}});
      ja["pieces"] = ps;
    }
    atoms.push_back(ja);
  }
  dyn["atoms"] = atoms;
  if (!c.density.empty()) {
    json dc = json::array();
    for (const auto& row : c.density) {
      json r = json::array();
      for (const Mat& m : row) r.push_back(to_json(m));
      dc.push_back(r);
    }
    dyn["density"] = {{"coeffs", dc}};
  }
  dyn["control_matrix"] = {{"coeffs", to_json(c.control_matrix)}};
  if (!c.drift.empty()) {
    json dr = json::array();
    for (const Vec& v : c.drift) dr.push_back(to_json(v));
    dyn["drift"] = {{"coeffs", dr}};
  }
  j["dynamics"] = dyn;
  json hist;
  if (c.history.sampled()) {
    json vs = json::array();
    for (const Vec& v : c.history.values) vs.push_back(to_json(v));
    hist["samples"] = {{"theta", c.history.theta}, {"values", vs}};
  } else {
    json hp = json::array();
    for (const Vec& v : c.history.polynomial) hp.push_back(to_json(v));
    hist["polynomial"] = hp;
  }
  j["history"] = hist;
  if (c.controls.is_box) {
    j["controls"] = {{"box", {{"lower", to_json(c.controls.lower)}, {"upper", to_json(c.controls.upper)}, {"grid", c.controls.grid}}}};
  } else {
    json fv = json::array();
    for (const Vec& v : c.controls.finite) fv.push_back(to_json(v));
    j["controls"] = {{"finite", fv}};
  }
  json fns = json::array();
  for (const TerminalConfig& t : c.terminal) {
    fns.push_back({{"constant", t.constant}, {"linear", to_json(t.linear)}, {"quadratic", to_json(t.quadratic)}});
  }
  j["terminal"] = {{"n_ineq", c.n_ineq}, {"n_eq", c.n_eq}, {"functions", fns}};
  json rc = json::array();
  for (const auto& [from, v] : c.reference) rc.push_back({{"from", from}, {"value", to_json(v)}});
  j["reference_control"] = rc;
  j["breakpoints"] = c.breakpoints;
  if (c.lambda) j["lambda"] = to_json(*c.lambda);
  if (!c.ground_truth.empty()) j["ground_truth"] = c.ground_truth;
  return j;
}

inline ProblemConfig config_from_string(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("malformed JSON: ") + e.what());
  }
  try {
    return config_from_json(j);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad config value: ") + e.what());
  }
}

inline ProblemConfig config_from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open problem file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return config_from_string(ss.str());
}

/// Turns a config into a problem with closed-form f and D2f.
inline ControlledProblem build(const ProblemConfig& c) {
  ControlledProblem p;
  p.name = c.name;
  p.n = c.n;
  p.d = c.d;
  p.horizon = c.horizon;
  p.delay = c.delay;
  p.step = c.step;
  p.n_ineq = c.n_ineq;
  p.n_eq = c.n_eq;
  p.reference = c.reference;
  p.default_lambda = c.lambda;
  p.ground_truth = c.ground_truth;
  p.breakpoints = c.breakpoints;
  for (const AtomConfig& a : c.atoms) {
    for (std::size_t q = 1; q < a.pieces.size(); ++q) p.breakpoints.push_back(a.pieces[q].first);
  }
  std::sort(p.breakpoints.begin(), p.breakpoints.end());
  p.breakpoints.erase(std::unique(p.breakpoints.begin(), p.breakpoints.end()), p.breakpoints.end());

  Index n = c.n;
  Index d = c.d;
  auto atoms = c.atoms;
  auto density = c.density;
  auto B = c.control_matrix;
  auto drift = c.drift;
  auto C = [density, n](double t, double theta) {
    Mat out = Mat::Zero(n, n);
    double tp = 1.0;
    for (const auto& row : density) {
      double tq = 1.0;
      for (const Mat& m : row) {
        out += tp * tq * m;
        tq *= theta;
      }
      tp *= t;
    }
    return out;
  };
  bool has_density = !density.empty();

  p.d2f = [atoms, C, has_density, n](double t, const SegmentView& seg, const Vec&) {
    LinearPart lp;
    double h = seg.step();
    for (const AtomConfig& a : atoms) lp.atoms.emplace_back(a.delay, a.active(t, h).eval(t, n, n));
    if (has_density) lp.density = [C, t](double theta) { return C(t, theta); };
    return lp;
  };
  p.f = [atoms, C, has_density, B, drift, n, d](double t, const SegmentView& seg, const Vec& u) {
    Vec out = Vec::Zero(n);
    double h = seg.step();
    for (const AtomConfig& a : atoms) out += a.active(t, h).eval(t, n, n) * seg.at(-a.delay);
    if (has_density) {
      Index R = seg.delay_steps();
      for (Index m = 0; m <= R; ++m) {
        double w = (m == 0 || m == R) ? 0.5 * h : h;
        if (R == 0) w = 0.0;
        out += w * C(t, -static_cast<double>(m) * h) * seg.lag(m);
      }
    }
    if (d > 0 && !B.coeffs.empty()) out += B.eval(t, n, d) * u;
    double tp = 1.0;
    for (const Vec& b : drift) {
      out += tp * b;
      tp *= t;
    }
    return out;
  };

  if (c.history.sampled()) {
    auto th = c.history.theta;
    auto vs = c.history.values;
    auto locate = [th](double s) {
      std::size_t k = 0;
      while (k + 2 < th.size() && s >= th[k + 1]) ++k;
      return k;
    };
    p.phi.value = [th, vs, locate](double s) {
      std::size_t k = locate(s);
      double w = (s - th[k]) / (th[k + 1] - th[k]);
      return Vec((1.0 - w) * vs[k] + w * vs[k + 1]);
    };
    p.phi.derivative = [th, vs, locate](double s) {
      std::size_t k = locate(s);
      return Vec((vs[k + 1] - vs[k]) / (th[k + 1] - th[k]));
    };
  } else {
    auto hp = c.history.polynomial;
    p.phi.value = [hp](double s) {
      Vec out = Vec::Zero(hp[0].size());
      double sp = 1.0;
      for (const Vec& v : hp) {
        out += sp * v;
        sp *= s;
      }
      return out;
    };
    p.phi.derivative = [hp](double s) {
      Vec out = Vec::Zero(hp[0].size());
      double sp = 1.0;
      for (std::size_t k = 1; k < hp.size(); ++k) {
        out += static_cast<double>(k) * sp * hp[k];
        sp *= s;
      }
      return out;
    };
  }

  p.controls = c.controls.is_box ? ControlSet::box(c.controls.lower, c.controls.upper, c.controls.grid) : ControlSet::finite(c.controls.finite);
  for (const TerminalConfig& t : c.terminal) {
    TerminalFunction g;
    g.value = [t](const Vec& x) { return t.constant + t.linear.dot(x) + 0.5 * x.dot(t.quadratic * x); };
    g.gradient = [t](const Vec& x) { return Vec(t.linear + 0.5 * (t.quadratic + t.quadratic.transpose()) * x); };
    p.terminal.push_back(std::move(g));
  }
  p.mesh();
  return p;
}

namespace catalog_detail {

inline Mat m1(double a) { return Mat::Constant(1, 1, a); }

inline Mat m2(double a, double b, double c, double d) {
  Mat A(2, 2);
  A << a, b, c, d;
  return A;
}

inline Vec v1(double a) { return Vec::Constant(1, a); }

inline Vec v2(double a, double b) {
  Vec v(2);
  v << a, b;
  return v;
}

inline AtomConfig atom(double delay, Mat A) {
  AtomConfig a;
  a.delay = delay;
  a.pieces.emplace_back(0.0, MatPoly{{std::move(A)}});
  return a;
}

inline TerminalConfig linear(Vec l, double c = 0.0) {
  TerminalConfig t;
  t.constant = c;
  t.quadratic = Mat::Zero(l.size(), l.size());
  t.linear = std::move(l);
  return t;
}

inline ControlConfig box1(Index grid) {
  ControlConfig u;
  u.is_box = true;
  u.lower = v1(-1.0);
  u.upper = v1(1.0);
  u.grid = grid;
  return u;
}

}  // namespace catalog_detail

inline ProblemConfig pure_integrator_config() {
  using namespace catalog_detail;
  ProblemConfig c;
  c.name = "pure_integrator";
  c.n = 1;
  c.d = 1;
  c.horizon = 1.0;
  c.delay = 0.5;
  c.step = 1.0 / 1024.0;
  c.control_matrix.coeffs = {m1(1.0)};
  c.history.polynomial = {v1(0.0)};
  c.controls.finite = {v1(-1.0), v1(1.0)};
  c.terminal = {linear(v1(1.0))};
  c.reference = {{0.0, v1(1.0)}};
  c.lambda = v1(1.0);
  c.ground_truth = "x(T) = 1 under u = 1; X(t,s) = 1; p = 1";
  return c;
}

inline ProblemConfig scalar_delay_free_decay_config() {
  using namespace catalog_detail;
  ProblemConfig c;
  c.name = "scalar_delay_free_decay";
  c.n = 1;
  c.d = 0;
  c.horizon = 2.0;
  c.delay = 1.0;
  c.step = 1e-3;
  c.atoms = {atom(1.0, m1(-1.0))};
  c.history.polynomial = {v1(1.0)};
  c.controls.finite = {Vec(0)};
  c.terminal = {linear(v1(1.0))};
  c.reference = {{0.0, Vec(0)}};
  c.lambda = v1(1.0);
  c.ground_truth = "x(t) = 1 - t on [0,1], x(2) = -1/2";
  return c;
}

inline ProblemConfig scalar_delay_feedback_config() {
  using namespace catalog_detail;
  ProblemConfig c;
  c.name = "scalar_delay_feedback";
  c.n = 1;
  c.d = 1;
  c.horizon = 2.0;
  c.delay = 1.0;
  c.step = 1e-3;
  c.atoms = {atom(1.0, m1(1.0))};
  c.control_matrix.coeffs = {m1(1.0)};
  c.history.polynomial = {v1(0.0)};
  c.controls = box1(21);
  c.terminal = {linear(v1(1.0))};
  c.reference = {{0.0, v1(1.0)}};
  c.lambda = v1(1.0);
  c.ground_truth = "x(t) = t on [0,1], x(2) = 2.5; u = 1 is optimal since X(T,t) > 0";
  return c;
}

inline ProblemConfig two_dim_rotation_with_delay_config() {
  using namespace catalog_detail;
  ProblemConfig c;
  c.name = "two_dim_rotation_with_delay";
  c.n = 2;
  c.d = 1;
  c.horizon = 1.5;
  c.delay = 0.5;
  c.step = 1e-3;
  c.atoms = {atom(0.0, m2(0, 1, -1, 0)), atom(0.5, m2(-0.5, 0, 0, -0.5))};
  Mat B(2, 1);
  B << 0, 1;
  c.control_matrix.coeffs = {B};
  c.history.polynomial = {v2(1.0, 0.0), v2(0.0, 1.0)};
  c.controls = box1(11);
  c.terminal = {linear(v2(1.0, 0.0))};
  c.reference = {{0.0, v1(1.0)}};
  c.lambda = v1(1.0);
  c.ground_truth = "p_2 > 0 on [0,T), so u = 1 satisfies the maximum condition";
  return c;
}

inline ProblemConfig constrained_terminal_config() {
  using namespace catalog_detail;
  ProblemConfig c;
  c.name = "constrained_terminal";
  c.n = 2;
  c.d = 1;
  c.horizon = 1.0;
  c.delay = 0.5;
  c.step = 1e-3;
  c.atoms = {atom(0.5, m2(0, 0, 1, 0))};
  Mat B(2, 1);
  B << 1, 0;
  c.control_matrix.coeffs = {B};
  c.history.polynomial = {v2(0.0, 0.0)};
  c.controls = box1(21);
  c.terminal = {linear(v2(0.0, 1.0)), linear(v2(-1.0, 0.0)), linear(v2(1.0, 1.0), -0.125)};
  c.n_ineq = 1;
  c.n_eq = 1;
  c.reference = {{0.0, v1(1.0)}, {0.5, v1(-1.0)}};
  c.ground_truth = "x(T) = (0, 1/8); X(T,t) = [[1,0],[(1/2-t)+,1]]; multipliers (0, 1/2, 1/2)";
  return c;
}

/// Compiled-only entry: x' = -sin x(t-r) + u (1 + cos(x(t))/2).
inline ControlledProblem nonlinear_delay_oscillator() {
  ControlledProblem p;
  p.name = "nonlinear_delay_oscillator";
  p.n = 1;
  p.d = 1;
  p.horizon = 2.0;
  p.delay = 0.5;
  p.step = 1e-3;
  double r = p.delay;
  p.f = [r](double, const SegmentView& seg, const Vec& u) {
    double x0 = seg.lag(0)(0);
    double xr = seg.at(-r)(0);
    return Vec::Constant(1, -std::sin(xr) + u(0) * (1.0 + 0.5 * std::cos(x0)));
  };
  p.d2f = [r](double, const SegmentView& seg, const Vec& u) {
    double x0 = seg.lag(0)(0);
    double xr = seg.at(-r)(0);
    LinearPart lp;
    lp.atoms.emplace_back(0.0, Mat::Constant(1, 1, -0.5 * u(0) * std::sin(x0)));
    lp.atoms.emplace_back(r, Mat::Constant(1, 1, -std::cos(xr)));
    return lp;
  };
  p.phi.value = [](double) { return Vec::Constant(1, 0.5); };
  p.phi.derivative = [](double) { return Vec::Zero(1); };
  p.controls = ControlSet::box(Vec::Constant(1, -1.0), Vec::Constant(1, 1.0), 21);
  TerminalFunction g;
  g.value = [](const Vec& x) { return x(0); };
  g.gradient = [](const Vec&) { return Vec::Ones(1); };
  p.terminal = {g};
  p.reference = {{0.0, Vec::Ones(1)}};
  p.default_lambda = Vec::Ones(1);
  p.ground_truth = "no closed form; used for nonlinear needle and resolvent checks";
  return p;
}

struct CatalogEntry {
  std::string name;
  std::optional<ProblemConfig> config;  // empty for compiled-only entries
};

inline std::vector<CatalogEntry> catalog() {
  return {{"pure_integrator", pure_integrator_config()},
          {"scalar_delay_free_decay", scalar_delay_free_decay_config()},
          {"scalar_delay_feedback", scalar_delay_feedback_config()},
          {"two_dim_rotation_with_delay", two_dim_rotation_with_delay_config()},
          {"constrained_terminal", constrained_terminal_config()},
          {"nonlinear_delay_oscillator", std::nullopt}};
}

/// Looks up a catalog name, or loads a JSON file when the argument is not one.
inline ControlledProblem load_problem(const std::string& name_or_path) {
  for (const CatalogEntry& e : catalog()) {
    if (e.name != name_or_path) continue;
    if (e.config) return build(*e.config);
    return nonlinear_delay_oscillator();
  }
  return build(config_from_file(name_or_path));
}

}  // namespace delaypmp
