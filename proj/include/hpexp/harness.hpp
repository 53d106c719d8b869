// Experiment orchestration: exponential slope fits, ratio reports, CSV/JSON
// persistence and JSON-configured sweeps across the solver and projection modules.
#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numbers>
#include <optional>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hpexp/bounds.hpp"
#include "hpexp/dgfem.hpp"
#include "hpexp/expansion.hpp"
#include "hpexp/fem.hpp"
#include "hpexp/indexsets.hpp"
#include "hpexp/projections.hpp"
#include "hpexp/records.hpp"

namespace hpexp {

inline constexpr const char* kToolVersion = "1.0.0";

enum class Abscissa { p, dof_root };

inline std::string to_string(Abscissa a) { return a == Abscissa::p ? "p" : "dof_root"; }

inline Abscissa abscissa_from_string(const std::string& s) {
  if (s == "p") return Abscissa::p;
  if (s == "dof_root" || s == "dof") return Abscissa::dof_root;
  throw std::invalid_argument("unknown abscissa '" + s + "' (expected p or dof_root)");
}

/// log(error) ~ intercept - slope * x, x = p or Dof^{1/d}.
struct SlopeFit {
  double slope = 0.0;        // average of the last `window` segment slopes
  double intercept = 0.0;    // least-squares intercept
  double ls_slope = 0.0;     // least-squares slope over the whole usable window
  double r2 = 0.0;           // of the least-squares fit
  Abscissa abscissa = Abscissa::dof_root;
  int dim = 2;
  int window = 2;
  std::vector<int> used_p;   // p values that entered the fit
};

struct RatioReport {
  double ratio = 0.0;
  double ideal = 0.0;
  double gap = 0.0;  // ratio - ideal
};

namespace harness {

inline constexpr double kErrorFloor = 1e-12;
inline constexpr double kTieTolerance = 1e-9;
inline constexpr double kStallCeiling = 1e-8;
inline constexpr double kStallFactor = 2.0;

inline double abscissa_value(const ConvergenceRecord& r, Abscissa a, int dim) {
  return a == Abscissa::p ? static_cast<double>(r.p) : std::pow(static_cast<double>(r.dof), 1.0 / dim);
}

inline std::vector<const ConvergenceRecord*> sorted_successes(const ConvergenceRecords& records,
                                                              const std::string& key) {
  std::vector<const ConvergenceRecord*> sorted;
  for (const auto& r : records) {
    if (!r.ok()) continue;
    const auto it = r.errors.find(key);
    if (it == r.errors.end()) throw std::invalid_argument("fit_slope: record lacks error '" + key + "'");
    if (!(it->second > 0.0) || !std::isfinite(it->second))
      throw std::invalid_argument("fit_slope: non-positive error at p=" + std::to_string(r.p));
    sorted.push_back(&r);
  }
  std::sort(sorted.begin(), sorted.end(), [](auto* a, auto* b) { return a->p < b->p; });
  return sorted;
}

/// Round-off level of a sweep that stagnates: ten times its smallest error once some
/// step below kStallCeiling rises or gains less than a factor kStallFactor. Exact ties
/// are not stagnation. Returns 0 for sweeps that keep converging.
inline double stagnation_floor(const std::vector<const ConvergenceRecord*>& sorted, const std::string& key) {
  double smallest = std::numeric_limits<double>::infinity();
  bool stalled = false;
  for (std::size_t k = 0; k < sorted.size(); ++k) {
    const double e = sorted[k]->errors.at(key);
    smallest = std::min(smallest, e);
    if (k == 0) continue;
    const double q = e / sorted[k - 1]->errors.at(key);
    const bool tie = std::abs(q - 1.0) <= kTieTolerance;
    if (!tie && q > 1.0 / kStallFactor && e < kStallCeiling) stalled = true;
  }
  return stalled ? 10.0 * smallest : 0.0;
}

/// Records usable for a fit: successful, error above both the fixed floor and the
/// stagnation floor, and the leading run over which the error does not rise. Exact
/// ties are kept: odd or even functions leave every other degree without new energy.
inline std::vector<const ConvergenceRecord*> usable_records(const ConvergenceRecords& records,
                                                           const std::string& key, double floor) {
  const auto sorted = sorted_successes(records, key);
  const double level = std::max(floor, stagnation_floor(sorted, key));
  std::vector<const ConvergenceRecord*> out;
  for (const auto* r : sorted) {
    const double e = r->errors.at(key);
    if (e <= level) break;
    if (!out.empty() && e > out.back()->errors.at(key) * (1.0 + kTieTolerance)) break;
    out.push_back(r);
  }
  return out;
}

inline SlopeFit fit_slope(const ConvergenceRecords& records, const std::string& key, Abscissa abscissa, int dim,
                          int window = 2, double floor = kErrorFloor) {
  if (window < 1) throw std::invalid_argument("fit_slope: window must be >= 1");
  if (dim < 1 || dim > 3) throw std::invalid_argument("fit_slope: dim must be 1, 2 or 3");
  const auto use = usable_records(records, key, floor);
  if (static_cast<int>(use.size()) < window + 1)
    throw std::invalid_argument("fit_slope: need at least " + std::to_string(window + 1) +
                                " usable records, have " + std::to_string(use.size()));
  SlopeFit fit;
  fit.abscissa = abscissa;
  fit.dim = dim;
  fit.window = window;
  std::vector<double> x, y;
  for (const auto* r : use) {
    x.push_back(abscissa_value(*r, abscissa, dim));
    y.push_back(std::log(r->errors.at(key)));
    fit.used_p.push_back(r->p);
  }
  const std::size_t n = x.size();
  double seg = 0.0;
  for (std::size_t k = n - window; k < n; ++k) seg += -(y[k] - y[k - 1]) / (x[k] - x[k - 1]);
  fit.slope = seg / window;
  double mx = 0.0, my = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    mx += x[k];
    my += y[k];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    sxx += (x[k] - mx) * (x[k] - mx);
    sxy += (x[k] - mx) * (y[k] - my);
    syy += (y[k] - my) * (y[k] - my);
  }
  const double b = sxy / sxx;
  fit.ls_slope = -b;
  fit.intercept = my - b * mx;
  fit.r2 = syy > 0.0 ? std::clamp(sxy * sxy / (sxx * syy), 0.0, 1.0) : 1.0;
  return fit;
}

inline double factorial(int d) {
  double f = 1.0;
  for (int k = 2; k <= d; ++k) f *= k;
  return f;
}

/// ratio = b_a / b_b; ideal d-th root of d! for Dof^{1/d} comparisons, 1 vs p.
inline RatioReport ratio_report(const SlopeFit& a, const SlopeFit& b) {
  if (a.abscissa != b.abscissa) throw std::invalid_argument("ratio_report: mismatched abscissa");
  if (a.dim != b.dim) throw std::invalid_argument("ratio_report: mismatched dimension");
  if (b.slope == 0.0) throw std::domain_error("ratio_report: reference slope is zero");
  RatioReport r;
  r.ratio = a.slope / b.slope;
  r.ideal = a.abscissa == Abscissa::dof_root ? std::pow(factorial(a.dim), 1.0 / a.dim) : 1.0;
  r.gap = r.ratio - r.ideal;
  return r;
}

/// log(e_prev / e_p) / log(p / p_prev) against the previous record; NaN for the first.
inline std::vector<double> p_rates(const ConvergenceRecords& records, const std::string& key) {
  std::vector<double> out(records.size(), std::numeric_limits<double>::quiet_NaN());
  for (std::size_t k = 1; k < records.size(); ++k) {
    const auto& a = records[k - 1];
    const auto& b = records[k];
    if (!a.ok() || !b.ok() || a.p <= 0 || b.p <= a.p) continue;
    const double ea = a.error(key), eb = b.error(key);
    if (ea > 0.0 && eb > 0.0) out[k] = std::log(ea / eb) / std::log(static_cast<double>(b.p) / a.p);
  }
  return out;
}

// ---------------------------------------------------------------------------
// CSV

inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.14e", v);
  return buf;
}

inline std::vector<std::string> error_keys(const ConvergenceRecords& records) {
  std::set<std::string> keys;
  for (const auto& r : records)
    for (const auto& [k, v] : r.errors) keys.insert(k);
  return {keys.begin(), keys.end()};
}

/// Header `method,p,dof,<error columns...>[,p_rate]`; failed rows carry `nan` errors.
/// Columns default to the sorted error keys.
inline std::string to_csv(const ConvergenceRecords& records, const std::string& rate_key = "",
                          std::vector<std::string> columns = {}) {
  const auto keys = columns.empty() ? error_keys(records) : std::move(columns);
  std::ostringstream os;
  os << "method,p,dof";
  for (const auto& k : keys) os << ',' << k;
  if (!rate_key.empty()) os << ",p_rate";
  os << '\n';
  const auto rates = rate_key.empty() ? std::vector<double>{} : p_rates(records, rate_key);
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    os << r.method << ',' << r.p << ',' << r.dof;
    for (const auto& k : keys) {
      const auto it = r.errors.find(k);
      os << ',' << (it == r.errors.end() || !r.ok() ? "nan" : format_double(it->second));
    }
    if (!rate_key.empty()) os << ',' << format_double(rates[i]);
    os << '\n';
  }
  return os.str();
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

inline ConvergenceRecords from_csv(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  if (!std::getline(is, line)) throw std::invalid_argument("csv: empty input");
  const auto header = split_csv_line(line);
  if (header.size() < 3 || header[0] != "method" || header[1] != "p" || header[2] != "dof")
    throw std::invalid_argument("csv: header must start with method,p,dof");
  ConvergenceRecords out;
  int lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != header.size())
      throw std::invalid_argument("csv: line " + std::to_string(lineno) + " has " + std::to_string(cells.size()) +
                                  " fields, expected " + std::to_string(header.size()));
    ConvergenceRecord r;
    r.method = cells[0];
    r.p = std::stoi(cells[1]);
    r.dof = std::stoll(cells[2]);
    for (std::size_t c = 3; c < header.size(); ++c) {
      if (header[c] == "p_rate") continue;
      if (cells[c] == "nan") {
        r.failure = "failed";
        continue;
      }
      r.errors[header[c]] = std::stod(cells[c]);
    }
    out.push_back(std::move(r));
  }
  return out;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << text;
}

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

// ---------------------------------------------------------------------------
// Sweeps

inline PointFunction sine_on_reference(int dim) {
  return [dim](const Point& x) {
    double v = 1.0;
    for (int k = 0; k < dim; ++k) v *= std::sin(std::numbers::pi * x[k]);
    return v;
  };
}

/// Projection errors of u = prod sin(pi x_k) on the reference element for each kind and p.
inline ConvergenceRecords project_sweep(int dim, const std::vector<ProjectionKind>& kinds, const std::vector<int>& p_list) {
  if (p_list.empty()) return {};
  const int pmax = *std::max_element(p_list.begin(), p_list.end());
  const auto ref = expansion::reference_expansion(sine_on_reference(dim), dim, pmax);
  ConvergenceRecords out;
  for (const auto kind : kinds)
    for (int p : p_list) {
      ConvergenceRecord rec;
      rec.method = to_string(kind);
      rec.p = p;
      try {
        rec.dof = projections::projection_dof(kind, dim, p);
        const auto proj = projections::project(ref.coeffs, kind, p);
        const auto err = projections::projection_errors(ref.coeffs, proj);
        rec.errors["l2"] = err.l2;
        rec.errors["h1_semi"] = err.h1_semi;
        rec.diagnostics["trusted"] = err.trusted ? 1.0 : 0.0;
        rec.diagnostics["tail_fraction"] = ref.tail_fraction;
      } catch (const std::exception& ex) {
        rec.failure = ex.what();
      }
      out.push_back(std::move(rec));
    }
  return out;
}

inline std::vector<int> p_range(int lo, int hi) {
  std::vector<int> v;
  for (int p = lo; p <= hi; ++p) v.push_back(p);
  return v;
}

inline const std::vector<int>& table1_rows() {
  static const std::vector<int> rows{1, 2, 3, 4, 5, 10, 15, 20, 25};
  return rows;
}

/// L-shape benchmark rows together with each row's predecessor.
inline std::vector<int> table1_sweep() {
  std::set<int> s;
  for (int p : table1_rows()) {
    s.insert(p);
    if (p > 1) s.insert(p - 1);
  }
  return {s.begin(), s.end()};
}

// ---------------------------------------------------------------------------
// Config runner

using json = nlohmann::json;

struct SweepOutput {
  std::string name;
  std::string csv;
  json meta;
  bool numerical_failure = false;
};

struct ResultBundle {
  std::vector<SweepOutput> outputs;
  [[nodiscard]] bool any_failure() const {
    return std::any_of(outputs.begin(), outputs.end(), [](const auto& o) { return o.numerical_failure; });
  }
};

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

namespace detail {

inline void require(bool ok, const std::string& path, const std::string& msg) {
  if (!ok) throw ConfigError(path + ": " + msg);
}

inline int get_int(const json& j, const std::string& key, const std::string& path, std::optional<int> fallback = {}) {
  if (!j.contains(key)) {
    require(fallback.has_value(), path + "." + key, "required integer is missing");
    return *fallback;
  }
  require(j.at(key).is_number_integer(), path + "." + key, "must be an integer");
  return j.at(key).get<int>();
}

inline double get_double(const json& j, const std::string& key, const std::string& path, double fallback) {
  if (!j.contains(key)) return fallback;
  require(j.at(key).is_number(), path + "." + key, "must be a number");
  return j.at(key).get<double>();
}

inline std::string get_string(const json& j, const std::string& key, const std::string& path,
                              std::optional<std::string> fallback = {}) {
  if (!j.contains(key)) {
    require(fallback.has_value(), path + "." + key, "required string is missing");
    return *fallback;
  }
  require(j.at(key).is_string(), path + "." + key, "must be a string");
  return j.at(key).get<std::string>();
}

inline std::vector<int> get_p_list(const json& j, const std::string& path, int default_min) {
  if (j.contains("p_list")) {
    require(j.at("p_list").is_array() && !j.at("p_list").empty(), path + ".p_list", "must be a non-empty array");
    std::vector<int> v;
    for (std::size_t i = 0; i < j.at("p_list").size(); ++i) {
      const auto& e = j.at("p_list")[i];
      require(e.is_number_integer() && e.get<int>() >= 1, path + ".p_list[" + std::to_string(i) + "]",
              "must be a positive integer");
      v.push_back(e.get<int>());
    }
    return v;
  }
  const int pmin = get_int(j, "p_min", path, default_min);
  const int pmax = get_int(j, "p_max", path);
  require(pmin >= 1 && pmax >= pmin, path, "needs 1 <= p_min <= p_max");
  return p_range(pmin, pmax);
}

inline Family get_family(const json& j, const std::string& path, const std::set<Family>& allowed) {
  const std::string s = get_string(j, "family", path);
  Family f{};
  try {
    f = family_from_string(s);
  } catch (const std::exception&) {
    require(false, path + ".family", "unknown family '" + s + "'");
  }
  require(allowed.count(f) > 0, path + ".family", "family '" + s + "' not allowed here");
  return f;
}

inline void check_keys(const json& j, const std::string& path, const std::set<std::string>& allowed) {
  for (const auto& [k, v] : j.items()) {
    (void)v;
    require(allowed.count(k) > 0, path + "." + k, "unknown field");
  }
}

}  // namespace detail

/// One validated sweep, ready to run.
struct SweepJob {
  std::string name;
  std::string op;
  json params;
};

inline const std::set<std::string>& known_ops() {
  static const std::set<std::string> ops{"fem-lshape", "fem-sine", "dg-sine", "project-sweep"};
  return ops;
}

inline void validate_sweep(const json& s, const std::string& path) {
  using namespace detail;
  require(s.is_object(), path, "must be an object");
  const std::string op = get_string(s, "op", path);
  require(known_ops().count(op) > 0, path + ".op", "unknown operation '" + op + "'");
  const std::string name = get_string(s, "name", path);
  require(!name.empty() && name.find_first_of("/\\") == std::string::npos, path + ".name",
          "must be a non-empty file stem");
  if (op == "fem-lshape") {
    check_keys(s, path, {"op", "name", "family", "p_list", "p_min", "p_max", "graded_layers", "graded_ratio"});
    get_family(s, path, {Family::Q, Family::S});
    get_p_list(s, path, 1);
    const double ratio = get_double(s, "graded_ratio", path, 0.15);
    require(ratio > 0.0 && ratio < 1.0, path + ".graded_ratio", "must lie in (0,1)");
    require(get_int(s, "graded_layers", path, 0) >= 0, path + ".graded_layers", "must be >= 0");
  } else if (op == "fem-sine") {
    check_keys(s, path, {"op", "name", "family", "dim", "n", "p_list", "p_min", "p_max"});
    get_family(s, path, {Family::Q, Family::S});
    const int d = get_int(s, "dim", path, 2);
    require(d == 2 || d == 3, path + ".dim", "must be 2 or 3");
    require(get_int(s, "n", path, d == 2 ? 8 : 4) >= 1, path + ".n", "must be >= 1");
    get_p_list(s, path, 1);
  } else if (op == "dg-sine") {
    check_keys(s, path, {"op", "name", "family", "n", "p_list", "p_min", "p_max", "gamma"});
    get_family(s, path, {Family::P, Family::Q});
    require(get_int(s, "n", path, 8) >= 1, path + ".n", "must be >= 1");
    require(get_double(s, "gamma", path, 10.0) > 0.0, path + ".gamma", "must be positive");
    get_p_list(s, path, 1);
  } else if (op == "project-sweep") {
    check_keys(s, path, {"op", "name", "dim", "kinds", "p_list", "p_min", "p_max"});
    const int d = get_int(s, "dim", path, 2);
    require(d == 2 || d == 3, path + ".dim", "must be 2 or 3");
    require(s.contains("kinds") && s.at("kinds").is_array() && !s.at("kinds").empty(), path + ".kinds",
            "must be a non-empty array");
    for (std::size_t i = 0; i < s.at("kinds").size(); ++i) {
      const auto& k = s.at("kinds")[i];
      const std::string kp = path + ".kinds[" + std::to_string(i) + "]";
      require(k.is_string(), kp, "must be a string");
      try {
        projection_kind_from_string(k.get<std::string>());
      } catch (const std::exception&) {
        require(false, kp, "unknown projection kind '" + k.get<std::string>() + "'");
      }
    }
    get_p_list(s, path, 2);
  }
}

inline std::vector<SweepJob> table1_jobs() {
  std::vector<SweepJob> jobs;
  for (const char* fam : {"s", "q"}) {
    json s{{"op", "fem-lshape"}, {"name", std::string("table1_fem_") + fam}, {"family", fam},
           {"p_list", table1_sweep()}};
    jobs.push_back({s["name"], "fem-lshape", s});
  }
  return jobs;
}

/// Validates the whole config; throws ConfigError naming the offending field path.
inline std::vector<SweepJob> parse_config(const json& cfg) {
  using namespace detail;
  require(cfg.is_object(), "$", "config must be a JSON object");
  check_keys(cfg, "$", {"sweeps", "preset", "output_dir"});
  if (cfg.contains("output_dir")) get_string(cfg, "output_dir", "$");
  std::vector<SweepJob> jobs;
  if (cfg.contains("preset")) {
    const std::string preset = get_string(cfg, "preset", "$");
    require(preset == "table1", "$.preset", "unknown preset '" + preset + "'");
    jobs = table1_jobs();
  }
  if (cfg.contains("sweeps")) {
    require(cfg.at("sweeps").is_array(), "$.sweeps", "must be an array");
    for (std::size_t i = 0; i < cfg.at("sweeps").size(); ++i) {
      const auto& s = cfg.at("sweeps")[i];
      const std::string path = "$.sweeps[" + std::to_string(i) + "]";
      validate_sweep(s, path);
      jobs.push_back({s.at("name").get<std::string>(), s.at("op").get<std::string>(), s});
    }
  }
  std::set<std::string> names;
  for (const auto& j : jobs) require(names.insert(j.name).second, "$.sweeps", "duplicate sweep name '" + j.name + "'");
  return jobs;
}

inline json records_meta(const ConvergenceRecords& recs) {
  json rows = json::array();
  for (const auto& r : recs) {
    json row{{"method", r.method}, {"p", r.p}, {"dof", r.dof}};
    if (!r.ok()) row["failure"] = r.failure;
    for (const auto& [k, v] : r.diagnostics) row[k] = v;
    rows.push_back(row);
  }
  return rows;
}

inline SweepOutput run_job(const SweepJob& job) {
  using namespace detail;
  const json& s = job.params;
  const std::string path = "$." + job.name;
  SweepOutput out;
  out.name = job.name;
  out.meta = {{"tool", "hpexp"}, {"version", kToolVersion}, {"operation", job.op}, {"parameters", s}};
  ConvergenceRecords recs;
  std::string rate_key;
  std::vector<std::string> columns;
  const auto t0 = std::chrono::steady_clock::now();
  if (job.op == "fem-lshape") {
    const Family fam = get_family(s, path, {Family::Q, Family::S});
    fem::SweepOptions opt;
    opt.quadrature.graded_ratio = get_double(s, "graded_ratio", path, 0.15);
    opt.quadrature.graded_layers = get_int(s, "graded_layers", path, 0);
    recs = fem::run_p_sweep(fem::lshape_problem(), fam, get_p_list(s, path, 1), opt);
    rate_key = "h1_semi";
    columns = {"h1_semi", "l2"};
    out.meta["quadrature"] = {{"graded_ratio", opt.quadrature.graded_ratio},
                              {"graded_layers", opt.quadrature.graded_layers > 0 ? json(opt.quadrature.graded_layers)
                                                                                 : json("max(p,20)")},
                              {"graded_cell_points", "2p+10"},
                              {"plain_points", "2p+2"},
                              {"stiffness_points", "p+1"},
                              {"load_points", "p+10"}};
  } else if (job.op == "fem-sine") {
    const Family fam = get_family(s, path, {Family::Q, Family::S});
    const int d = get_int(s, "dim", path, 2);
    recs = fem::run_p_sweep(fem::sine_problem(d, get_int(s, "n", path, d == 2 ? 8 : 4)), fam, get_p_list(s, path, 1));
    rate_key = "h1_semi";
    columns = {"h1_semi", "l2"};
    out.meta["quadrature"] = {{"plain_points", "2p+2"}, {"stiffness_points", "p+1"}, {"load_points", "p+10"}};
  } else if (job.op == "dg-sine") {
    const Family fam = get_family(s, path, {Family::P, Family::Q});
    const double gamma = get_double(s, "gamma", path, 10.0);
    recs = dg::run_p_sweep(get_int(s, "n", path, 8), fam, get_p_list(s, path, 1), gamma);
    columns = {"l2", "broken_h1", "dg_norm"};
    out.meta["dg_norm"] = "sqrt(broken_h1^2 + sum_F sigma_F ||[u-u_h]||_F^2), sigma_F = gamma p^2 / h_F";
    out.meta["quadrature"] = {{"facet_points", "p+2"}, {"error_points", "p+6"}, {"load_points", "p+10"}};
  } else if (job.op == "project-sweep") {
    std::vector<ProjectionKind> kinds;
    for (const auto& k : s.at("kinds")) kinds.push_back(projection_kind_from_string(k.get<std::string>()));
    recs = project_sweep(get_int(s, "dim", path, 2), kinds, get_p_list(s, path, 2));
    columns = {"l2", "h1_semi"};
    out.meta["reference_margin"] = expansion::kReferenceMargin;
  }
  out.meta["seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  out.meta["records"] = records_meta(recs);
  out.numerical_failure = std::any_of(recs.begin(), recs.end(), [](const auto& r) { return !r.ok(); });
  out.csv = to_csv(recs, rate_key, columns);
  return out;
}

inline ResultBundle run_config(const json& cfg) {
  const auto jobs = parse_config(cfg);
  ResultBundle bundle;
  for (const auto& job : jobs) bundle.outputs.push_back(run_job(job));
  return bundle;
}

inline void write_bundle(const ResultBundle& bundle, const std::filesystem::path& dir) {
  for (const auto& o : bundle.outputs) {
    write_text(dir / (o.name + ".csv"), o.csv);
    write_text(dir / (o.name + ".meta.json"), o.meta.dump(2) + "\n");
  }
}

}  // namespace harness
}  // namespace hpexp
