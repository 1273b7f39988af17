#pragma once

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "cran/bd_core.hpp"
#include "cran/model.hpp"
#include "cran/oracle.hpp"
#include "cran/parallel.hpp"
#include "cran/sparse_solver.hpp"

namespace cran::experiment {

inline constexpr int kCsvVersion = 1;

struct ExperimentConfig {
  SystemConfig system;
  SolverParams solver;
  std::vector<double> etas = {0.0, 0.1, 0.5};  // converge, powers
  std::vector<double> eta_grid = {0.0, 0.05, 0.1, 0.2, 0.3, 0.5, 0.75, 1.0, 1.5, 2.0};  // tradeoff
  std::vector<double> converge_steps = {0.5, 0.1, 0.05};
  int n_layouts = 30;
  int n_fading = 20;
  std::string out_dir = "out";
  bool oracle = false;
  std::vector<int> bench_raps = {8, 16, 32, 64};
  int bench_seeds = 3;
  unsigned threads = 0;

  int num_instances() const { return n_layouts * n_fading; }

  void validate() const {
    system.validate();
    solver.validate(system.num_raps);
    require(!etas.empty(), "eta: list must be nonempty");
    require(!eta_grid.empty(), "eta_grid: list must be nonempty");
    for (double e : etas) require(e >= 0.0 && std::isfinite(e), "eta: values must be >= 0");
    for (double e : eta_grid) require(e >= 0.0 && std::isfinite(e), "eta_grid: values must be >= 0");
    require(!converge_steps.empty(), "converge_steps: list must be nonempty");
    for (double s : converge_steps) require(s > 0.0 && std::isfinite(s), "converge_steps: values must be > 0");
    require(n_layouts >= 1, "n_layouts: must be >= 1");
    require(n_fading >= 1, "n_fading: must be >= 1");
    require(!out_dir.empty(), "out_dir: must be nonempty");
    require(!bench_raps.empty(), "bench_L: list must be nonempty");
    for (int l : bench_raps) require(l >= 1, "bench_L: values must be >= 1");
    require(bench_seeds >= 1, "bench_seeds: must be >= 1");
  }
};

inline const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = {
      "L",          "Nc",         "K",           "N",         "p_max_dbm_hz",      "sigma2_dbm_hz",
      "radius_km",  "seed",       "eta",         "eta_grid",  "epsilon_w",         "step",
      "step_rule",  "tol",        "max_iter",    "active_thresh_rel", "lambda0", "converge_steps",
      "n_layouts",  "n_fading",   "out_dir",     "oracle",    "bench_L",           "bench_seeds",
      "threads"};
  return keys;
}

namespace detail {

using nlohmann::json;

[[noreturn]] inline void field_error(const std::string& key, const std::string& what) {
  throw std::invalid_argument(key + ": " + what);
}

inline double get_number(const json& v, const std::string& key) {
  if (!v.is_number()) field_error(key, "expected a number");
  return v.get<double>();
}

inline long long get_integer(const json& v, const std::string& key) {
  if (v.is_number_integer()) return v.get<long long>();
  if (v.is_number_float()) {
    const double d = v.get<double>();
    if (std::floor(d) == d && std::abs(d) < 9e15) return static_cast<long long>(d);
  }
  field_error(key, "expected an integer");
}

inline int get_int(const json& v, const std::string& key) {
  const long long x = get_integer(v, key);
  if (x < std::numeric_limits<int>::min() || x > std::numeric_limits<int>::max()) field_error(key, "out of range");
  return static_cast<int>(x);
}

/// A number or an array of numbers.
inline std::vector<double> get_number_list(const json& v, const std::string& key) {
  if (v.is_number()) return {v.get<double>()};
  if (!v.is_array()) field_error(key, "expected a number or a list of numbers");
  std::vector<double> out;
  for (const auto& x : v) out.push_back(get_number(x, key));
  return out;
}

inline std::vector<int> get_int_list(const json& v, const std::string& key) {
  if (v.is_number()) return {get_int(v, key)};
  if (!v.is_array()) field_error(key, "expected an integer or a list of integers");
  std::vector<int> out;
  for (const auto& x : v) out.push_back(get_int(x, key));
  return out;
}

inline bool get_bool(const json& v, const std::string& key) {
  if (v.is_boolean()) return v.get<bool>();
  if (v.is_string()) {
    const auto s = v.get<std::string>();
    if (s == "on") return true;
    if (s == "off") return false;
  }
  field_error(key, "expected true/false or \"on\"/\"off\"");
}

inline std::string join(const std::vector<std::string>& v, const char* sep) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? sep : "") + v[i];
  return out;
}

}  // namespace detail

inline StepRule parse_step_rule(const std::string& s) {
  if (s == "constant") return StepRule::kConstant;
  if (s == "diminishing") return StepRule::kDiminishing;
  throw std::invalid_argument("step_rule: expected \"constant\" or \"diminishing\", got \"" + s + "\"");
}

inline const char* step_rule_name(StepRule r) { return r == StepRule::kConstant ? "constant" : "diminishing"; }

/// Applies the keys of a flat JSON object on top of `base`.
inline ExperimentConfig apply_json(ExperimentConfig cfg, const nlohmann::json& j) {
  using namespace detail;
  if (!j.is_object()) throw std::invalid_argument("config: top level must be a JSON object");
  const auto& keys = config_keys();
  for (const auto& [key, v] : j.items()) {
    if (std::find(keys.begin(), keys.end(), key) == keys.end())
      throw std::invalid_argument("config: unknown key \"" + key + "\"; valid keys: " + join(keys, ", "));
    if (key == "L") cfg.system.num_raps = get_int(v, key);
    else if (key == "Nc") cfg.system.antennas_per_rap = get_int(v, key);
    else if (key == "K") cfg.system.num_users = get_int(v, key);
    else if (key == "N") cfg.system.antennas_per_user = get_int(v, key);
    else if (key == "p_max_dbm_hz") cfg.system.p_max_dbm_hz = get_number_list(v, key);
    else if (key == "sigma2_dbm_hz") cfg.system.sigma2_dbm_hz = get_number(v, key);
    else if (key == "radius_km") cfg.system.radius_km = get_number(v, key);
    else if (key == "seed") {
      if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0))
        field_error(key, "expected an unsigned integer");
      cfg.system.seed = v.get<std::uint64_t>();
    } else if (key == "eta") cfg.etas = get_number_list(v, key);
    else if (key == "eta_grid") cfg.eta_grid = get_number_list(v, key);
    else if (key == "epsilon_w") cfg.solver.epsilon_w = get_number(v, key);
    else if (key == "step") cfg.solver.step0 = get_number(v, key);
    else if (key == "step_rule") {
      if (!v.is_string()) field_error(key, "expected a string");
      cfg.solver.step_rule = parse_step_rule(v.get<std::string>());
    } else if (key == "tol") cfg.solver.tol = get_number(v, key);
    else if (key == "max_iter") cfg.solver.max_iter = get_int(v, key);
    else if (key == "active_thresh_rel") cfg.solver.active_thresh_rel = get_number(v, key);
    else if (key == "lambda0") cfg.solver.lambda0 = get_number_list(v, key);
    else if (key == "converge_steps") cfg.converge_steps = get_number_list(v, key);
    else if (key == "n_layouts") cfg.n_layouts = get_int(v, key);
    else if (key == "n_fading") cfg.n_fading = get_int(v, key);
    else if (key == "out_dir") {
      if (!v.is_string()) field_error(key, "expected a string");
      cfg.out_dir = v.get<std::string>();
    } else if (key == "oracle") cfg.oracle = get_bool(v, key);
    else if (key == "bench_L") cfg.bench_raps = get_int_list(v, key);
    else if (key == "bench_seeds") cfg.bench_seeds = get_int(v, key);
    else if (key == "threads") {
      const int t = get_int(v, key);
      if (t < 0) field_error(key, "must be >= 0");
      cfg.threads = static_cast<unsigned>(t);
    }
  }
  // A single P_max entry applies to every RAP.
  if (cfg.system.p_max_dbm_hz.size() == 1 && cfg.system.num_raps != 1)
    cfg.system.p_max_dbm_hz.assign(static_cast<std::size_t>(cfg.system.num_raps), cfg.system.p_max_dbm_hz[0]);
  return cfg;
}

inline ExperimentConfig parse_config(const std::string& text) {
  ExperimentConfig cfg;
  if (std::all_of(text.begin(), text.end(), [](unsigned char c) { return std::isspace(c); })) return cfg;
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw std::invalid_argument(std::string("config: parse error: ") + e.what());
  }
  return apply_json(cfg, j);
}

/// Reads and validates a flat JSON config. An empty file gives the defaults.
inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  ExperimentConfig cfg = parse_config(ss.str());
  cfg.validate();
  return cfg;
}

inline nlohmann::json config_to_json(const ExperimentConfig& c) {
  nlohmann::json j;
  j["L"] = c.system.num_raps;
  j["Nc"] = c.system.antennas_per_rap;
  j["K"] = c.system.num_users;
  j["N"] = c.system.antennas_per_user;
  const auto& pm = c.system.p_max_dbm_hz;
  if (pm.empty()) j["p_max_dbm_hz"] = kDefaultPmaxDbmHz;
  else if (std::adjacent_find(pm.begin(), pm.end(), std::not_equal_to<>()) == pm.end()) j["p_max_dbm_hz"] = pm.front();
  else j["p_max_dbm_hz"] = pm;
  j["sigma2_dbm_hz"] = c.system.sigma2_dbm_hz;
  j["radius_km"] = c.system.radius_km;
  j["seed"] = c.system.seed;
  j["eta"] = c.etas;
  j["eta_grid"] = c.eta_grid;
  j["epsilon_w"] = c.solver.epsilon_w;
  j["step"] = c.solver.step0;
  j["step_rule"] = step_rule_name(c.solver.step_rule);
  j["tol"] = c.solver.tol;
  j["max_iter"] = c.solver.max_iter;
  j["active_thresh_rel"] = c.solver.active_thresh_rel;
  if (!c.solver.lambda0.empty()) j["lambda0"] = c.solver.lambda0;
  j["converge_steps"] = c.converge_steps;
  j["n_layouts"] = c.n_layouts;
  j["n_fading"] = c.n_fading;
  j["out_dir"] = c.out_dir;
  j["oracle"] = c.oracle;
  j["bench_L"] = c.bench_raps;
  j["bench_seeds"] = c.bench_seeds;
  j["threads"] = c.threads;
  return j;
}

// ---------------------------------------------------------------- CSV

inline std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

/// 1-based RAP indices separated by spaces.
inline std::string subset_string(const std::vector<int>& s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) out += (i ? " " : "") + std::to_string(s[i] + 1);
  return out;
}

class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, const std::string& kind, std::vector<std::string> columns)
      : path_(path), out_(path), width_(columns.size()) {
    if (!out_) throw std::runtime_error("cannot open " + path.string() + " for writing");
    out_ << "# cran-sim " << kind << " v" << kCsvVersion << '\n';
    write(columns);
  }

  void row(const std::vector<std::string>& cells) {
    require(cells.size() == width_, "CsvWriter: row width mismatch in " + path_.string());
    write(cells);
  }

  void close() {
    out_.close();
    if (out_.fail()) throw std::runtime_error("write failed: " + path_.string());
  }

 private:
  void write(const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) out_ << ',';
      const bool quote = cells[i].find_first_of(",\" ") != std::string::npos;
      if (quote) {
        out_ << '"';
        for (char c : cells[i]) out_ << (c == '"' ? "\"\"" : std::string(1, c));
        out_ << '"';
      } else {
        out_ << cells[i];
      }
    }
    out_ << '\n';
    if (!out_) throw std::runtime_error("write failed: " + path_.string());
  }

  std::filesystem::path path_;
  std::ofstream out_;
  std::size_t width_;
};

inline std::string tag(const char* name, double v) { return std::string(name) + num(v); }

inline std::filesystem::path ensure_dir(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create output directory " + dir + ": " + ec.message());
  return dir;
}

inline std::vector<std::string> trace_columns(int num_raps) {
  std::vector<std::string> cols = {"iter", "residual", "active_count", "sum_rate"};
  for (int l = 1; l <= num_raps; ++l) cols.push_back("lambda_" + std::to_string(l));
  for (int l = 1; l <= num_raps; ++l) cols.push_back("omega_" + std::to_string(l));
  return cols;
}

inline void write_trace(const std::filesystem::path& path, const DualState& st) {
  const int L = st.lambda.size();
  CsvWriter w(path, "trace", trace_columns(L));
  for (std::size_t t = 0; t < st.residual_history.size(); ++t) {
    std::vector<std::string> cells = {std::to_string(t + 1), num(st.residual_history[t]),
                                      std::to_string(st.active_count_history[t]), num(st.rate_history[t])};
    for (int l = 0; l < L; ++l) cells.push_back(num(st.lambda_history[t](l)));
    for (int l = 0; l < L; ++l) cells.push_back(num(st.omega_history[t](l)));
    w.row(cells);
  }
  w.close();
}

// ---------------------------------------------------------------- runners

struct Instance {
  int layout = 0;
  int fading = 0;
};

inline std::vector<Instance> instances(const ExperimentConfig& cfg) {
  std::vector<Instance> out;
  for (int i = 0; i < cfg.n_layouts; ++i)
    for (int j = 0; j < cfg.n_fading; ++j) out.push_back({i, j});
  return out;
}

inline ChannelRealization realize(const ExperimentConfig& cfg, const Instance& in) {
  return cran::realize(cfg.system, static_cast<std::uint64_t>(in.layout), static_cast<std::uint64_t>(in.fading));
}

struct RunSummary {
  Instance instance;
  double eta = 0.0;
  double step = 0.0;
  int iterations = 0;
  bool converged = false;
  double final_residual = 0.0;
  int active_count = 0;
  double sum_rate = 0.0;
};

inline RunSummary summarize(const Instance& in, const SolverParams& p, const SolveResult& r) {
  RunSummary s;
  s.instance = in;
  s.eta = p.eta;
  s.step = p.step0;
  s.iterations = r.state.iter;
  s.converged = r.state.converged;
  s.final_residual = r.state.residual_history.empty()
                         ? 0.0
                         : r.state.residual_history[static_cast<std::size_t>(r.state.best_iter - 1)];
  s.active_count = static_cast<int>(r.solution.active_set.size());
  s.sum_rate = r.solution.sum_rate;
  return s;
}

/// Iteration traces on the first realization for every (eta, step), plus a
/// convergence summary over all realizations.
inline std::vector<RunSummary> run_converge(const ExperimentConfig& cfg, bool write = true) {
  const auto inst = instances(cfg);
  std::vector<std::pair<double, double>> combos;
  for (double e : cfg.etas)
    for (double d : cfg.converge_steps) combos.emplace_back(e, d);

  std::vector<RunSummary> rows(inst.size() * combos.size());
  std::vector<SolveResult> first(combos.size());
  parallel_for(
      inst.size(),
      [&](std::size_t i) {
        const ChannelRealization ch = realize(cfg, inst[i]);
        const NullBasis basis = compute_null_basis(ch);
        for (std::size_t c = 0; c < combos.size(); ++c) {
          SolverParams p = cfg.solver;
          p.eta = combos[c].first;
          p.step0 = combos[c].second;
          SolveResult r = solve(ch, p, basis);
          rows[i * combos.size() + c] = summarize(inst[i], p, r);
          if (i == 0) first[c] = std::move(r);
        }
      },
      cfg.threads);

  if (write) {
    const auto dir = ensure_dir(cfg.out_dir);
    for (std::size_t c = 0; c < combos.size(); ++c)
      write_trace(dir / ("trace_" + tag("eta", combos[c].first) + "_" + tag("step", combos[c].second) + ".csv"),
                  first[c].state);
    CsvWriter w(dir / "converge_summary.csv", "converge_summary",
                {"layout", "fading", "eta", "step", "iterations", "converged", "final_residual", "active_count",
                 "sum_rate"});
    for (const RunSummary& s : rows)
      w.row({std::to_string(s.instance.layout), std::to_string(s.instance.fading), num(s.eta), num(s.step),
             std::to_string(s.iterations), s.converged ? "1" : "0", num(s.final_residual),
             std::to_string(s.active_count), num(s.sum_rate)});
    w.close();
  }
  return rows;
}

struct TradeoffPoint {
  double eta = 0.0;
  double mean_active = 0.0;
  double mean_rate = 0.0;
  double std_rate = 0.0;
  int n_samples = 0;
  int n_nonconverged = 0;
};

struct CardinalityMean {
  int cardinality = 0;
  double mean_rate = 0.0;
  int n_samples = 0;
};

struct TradeoffSample {
  Instance instance;
  double eta = 0.0;
  bool converged = false;
  int iterations = 0;
  int active_count = 0;
  double sum_rate = 0.0;
  double oracle_rate = std::numeric_limits<double>::quiet_NaN();  // best subset of the same size
};

struct TradeoffReport {
  std::vector<TradeoffPoint> points;
  std::vector<TradeoffSample> samples;
  std::vector<CardinalityMean> fixed;   // first-a-RAPs deployment, full cooperation
  std::vector<CardinalityMean> oracle;  // exhaustive frontier means
  std::vector<std::vector<oracle::SubsetResult>> frontiers;  // per instance, when enabled
};

/// Sample mean and standard deviation (n - 1 denominator).
inline std::pair<double, double> mean_std(const std::vector<double>& v) {
  if (v.empty()) return {std::numeric_limits<double>::quiet_NaN(), 0.0};
  const double m = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  if (v.size() < 2) return {m, 0.0};
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return {m, std::sqrt(ss / static_cast<double>(v.size() - 1))};
}

/// Rate of deploying only the first `a` RAPs of a realization with full
/// cooperation. RAP positions are iid, so this is a uniform a-RAP layout.
inline double fixed_deployment_rate(const ChannelRealization& ch, int a) {
  std::vector<int> subset(static_cast<std::size_t>(a));
  std::iota(subset.begin(), subset.end(), 0);
  return oracle::solve_fixed_subset(ch, subset);
}

inline TradeoffReport run_tradeoff(const ExperimentConfig& cfg, bool write = true) {
  const auto inst = instances(cfg);
  const Dimensions d = cfg.system.dims();
  const int L = d.num_raps;
  const int a_min = d.min_active();
  if (cfg.oracle && L > oracle::kMaxExhaustiveRaps)
    throw std::invalid_argument("tradeoff: oracle comparison needs L <= " +
                                std::to_string(oracle::kMaxExhaustiveRaps) + ", got L = " + std::to_string(L));
  const std::size_t ne = cfg.eta_grid.size();

  TradeoffReport rep;
  rep.samples.resize(inst.size() * ne);
  std::vector<std::vector<double>> fixed_rates(inst.size(), std::vector<double>(static_cast<std::size_t>(L + 1), 0.0));
  if (cfg.oracle) rep.frontiers.resize(inst.size());

  parallel_for(
      inst.size(),
      [&](std::size_t i) {
        const ChannelRealization ch = realize(cfg, inst[i]);
        const NullBasis basis = compute_null_basis(ch);
        if (cfg.oracle) rep.frontiers[i] = oracle::exhaustive_search(ch);
        for (int a = std::max(a_min, 1); a <= L; ++a)
          fixed_rates[i][static_cast<std::size_t>(a)] = fixed_deployment_rate(ch, a);
        for (std::size_t e = 0; e < ne; ++e) {
          SolverParams p = cfg.solver;
          p.eta = cfg.eta_grid[e];
          const SolveResult r = solve(ch, p, basis);
          TradeoffSample& s = rep.samples[i * ne + e];
          s.instance = inst[i];
          s.eta = p.eta;
          s.converged = r.state.converged;
          s.iterations = r.state.iter;
          s.active_count = static_cast<int>(r.solution.active_set.size());
          s.sum_rate = r.solution.sum_rate;
          if (cfg.oracle && rep.frontiers[i][static_cast<std::size_t>(s.active_count)].feasible)
            s.oracle_rate = rep.frontiers[i][static_cast<std::size_t>(s.active_count)].rate;
        }
      },
      cfg.threads);

  for (std::size_t e = 0; e < ne; ++e) {
    TradeoffPoint pt;
    pt.eta = cfg.eta_grid[e];
    std::vector<double> rates;
    double active = 0.0;
    for (std::size_t i = 0; i < inst.size(); ++i) {
      const TradeoffSample& s = rep.samples[i * ne + e];
      if (!s.converged) {
        ++pt.n_nonconverged;
        continue;
      }
      rates.push_back(s.sum_rate);
      active += s.active_count;
    }
    pt.n_samples = static_cast<int>(rates.size());
    std::tie(pt.mean_rate, pt.std_rate) = mean_std(rates);
    pt.mean_active = rates.empty() ? std::numeric_limits<double>::quiet_NaN() : active / static_cast<double>(rates.size());
    rep.points.push_back(pt);
  }

  for (int a = std::max(a_min, 1); a <= L; ++a) {
    std::vector<double> v;
    for (const auto& f : fixed_rates) v.push_back(f[static_cast<std::size_t>(a)]);
    rep.fixed.push_back({a, mean_std(v).first, static_cast<int>(v.size())});
    if (cfg.oracle) {
      std::vector<double> o;
      for (const auto& fr : rep.frontiers) o.push_back(fr[static_cast<std::size_t>(a)].rate);
      rep.oracle.push_back({a, mean_std(o).first, static_cast<int>(o.size())});
    }
  }

  if (write) {
    const auto dir = ensure_dir(cfg.out_dir);
    CsvWriter t(dir / "tradeoff.csv", "tradeoff",
                {"eta", "mean_active", "mean_rate", "std_rate", "n_samples", "n_nonconverged"});
    for (const auto& p : rep.points)
      t.row({num(p.eta), num(p.mean_active), num(p.mean_rate), num(p.std_rate), std::to_string(p.n_samples),
             std::to_string(p.n_nonconverged)});
    t.close();

    CsvWriter s(dir / "tradeoff_samples.csv", "tradeoff_samples",
                {"layout", "fading", "eta", "converged", "iterations", "active_count", "sum_rate", "oracle_rate"});
    for (const auto& x : rep.samples)
      s.row({std::to_string(x.instance.layout), std::to_string(x.instance.fading), num(x.eta),
             x.converged ? "1" : "0", std::to_string(x.iterations), std::to_string(x.active_count),
             num(x.sum_rate), std::isnan(x.oracle_rate) ? "" : num(x.oracle_rate)});
    s.close();

    CsvWriter f(dir / "fixed.csv", "fixed", {"cardinality", "mean_rate", "n_samples"});
    for (const auto& c : rep.fixed) f.row({std::to_string(c.cardinality), num(c.mean_rate), std::to_string(c.n_samples)});
    f.close();

    if (cfg.oracle) {
      CsvWriter o(dir / "frontier_mean.csv", "frontier_mean", {"cardinality", "mean_rate", "n_samples"});
      for (const auto& c : rep.oracle)
        o.row({std::to_string(c.cardinality), num(c.mean_rate), std::to_string(c.n_samples)});
      o.close();
      const auto fdir = ensure_dir((dir / "frontier").string());
      for (std::size_t i = 0; i < inst.size(); ++i) {
        CsvWriter w(fdir / ("frontier_l" + std::to_string(inst[i].layout) + "_f" + std::to_string(inst[i].fading) + ".csv"),
                    "frontier", {"cardinality", "best_subset", "rate"});
        for (std::size_t a = 1; a < rep.frontiers[i].size(); ++a) {
          const auto& r = rep.frontiers[i][a];
          if (r.feasible) w.row({std::to_string(a), subset_string(r.subset), num(r.rate)});
        }
        w.close();
      }
    }
  }
  return rep;
}

struct PowerTrace {
  double eta = 0.0;
  SolveResult result;
};

/// Per-RAP power at every iteration on the first realization, one file per eta.
inline std::vector<PowerTrace> run_powers(const ExperimentConfig& cfg, bool write = true) {
  const ChannelRealization ch = realize(cfg, Instance{});
  const NullBasis basis = compute_null_basis(ch);
  std::vector<PowerTrace> out;
  for (double e : cfg.etas) {
    SolverParams p = cfg.solver;
    p.eta = e;
    out.push_back({e, solve(ch, p, basis)});
  }
  if (write) {
    const auto dir = ensure_dir(cfg.out_dir);
    const int L = ch.dims.num_raps;
    for (const PowerTrace& pt : out) {
      std::vector<std::string> cols = {"iter", "active_count"};
      for (int l = 1; l <= L; ++l) cols.push_back("omega_" + std::to_string(l));
      CsvWriter w(dir / ("powers_" + tag("eta", pt.eta) + ".csv"), "powers", cols);
      const DualState& st = pt.result.state;
      for (std::size_t t = 0; t < st.omega_history.size(); ++t) {
        std::vector<std::string> cells = {std::to_string(t + 1), std::to_string(st.active_count_history[t])};
        for (int l = 0; l < L; ++l) cells.push_back(num(st.omega_history[t](l)));
        w.row(cells);
      }
      w.close();
    }
    CsvWriter f(dir / "powers_final.csv", "powers_final", {"eta", "rap", "power", "budget", "active"});
    for (const PowerTrace& pt : out) {
      const auto& sol = pt.result.solution;
      for (int l = 0; l < L; ++l) {
        const bool active = std::find(sol.active_set.begin(), sol.active_set.end(), l) != sol.active_set.end();
        f.row({num(pt.eta), std::to_string(l + 1), num(sol.per_rap_power(l)), num(ch.budgets(l)), active ? "1" : "0"});
      }
    }
    f.close();
  }
  return out;
}

struct BenchRow {
  int num_raps = 0;
  int total_antennas = 0;
  double median_step_seconds = 0.0;
  double t_avg = 0.0;  // mean iteration count over seeds
  int n_seeds = 0;
};

struct BenchReport {
  std::vector<BenchRow> rows;
  double slope = 0.0;  // least-squares slope of log(time) vs log(L)
};

inline double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  require(x.size() == y.size() && x.size() >= 2, "loglog_slope: need at least two points");
  const double n = static_cast<double>(x.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double lx = std::log(x[i]), ly = std::log(y[i]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

/// Median wall time of one solver iteration for each L. Runs sequentially
/// so timings are not perturbed by other work.
inline BenchReport run_bench(const ExperimentConfig& cfg, bool write = true, int max_timed_steps = 1000) {
  using clock = std::chrono::steady_clock;
  BenchReport rep;
  for (int L : cfg.bench_raps) {
    SystemConfig sys = cfg.system;
    sys.num_raps = L;
    if (!sys.p_max_dbm_hz.empty()) sys.p_max_dbm_hz.assign(static_cast<std::size_t>(L), sys.p_max_dbm_hz.front());
    SolverParams p = cfg.solver;
    p.lambda0.clear();
    p.eta = cfg.etas.back();
    std::vector<double> times;
    double iters = 0.0;
    for (int s = 0; s < cfg.bench_seeds; ++s) {
      const ChannelRealization ch = cran::realize(sys, static_cast<std::uint64_t>(s));
      ReweightedSolver solver(ch, p);
      for (int t = 0; t < max_timed_steps && !solver.done(); ++t) {
        const auto t0 = clock::now();
        solver.step();
        times.push_back(std::chrono::duration<double>(clock::now() - t0).count());
      }
      iters += solver.state().iter;
    }
    std::sort(times.begin(), times.end());
    const std::size_t n = times.size();
    const double median = n % 2 ? times[n / 2] : 0.5 * (times[n / 2 - 1] + times[n / 2]);
    rep.rows.push_back({L, L * sys.antennas_per_rap, median, iters / cfg.bench_seeds, cfg.bench_seeds});
  }
  if (rep.rows.size() >= 2) {
    std::vector<double> x, y;
    for (const auto& r : rep.rows) {
      x.push_back(r.num_raps);
      y.push_back(r.median_step_seconds);
    }
    rep.slope = loglog_slope(x, y);
  }
  if (write) {
    const auto dir = ensure_dir(cfg.out_dir);
    CsvWriter w(dir / "bench.csv", "bench", {"L", "M", "median_step_seconds", "t_avg", "n_seeds"});
    for (const auto& r : rep.rows)
      w.row({std::to_string(r.num_raps), std::to_string(r.total_antennas), num(r.median_step_seconds), num(r.t_avg),
             std::to_string(r.n_seeds)});
    w.close();
  }
  return rep;
}

}  // namespace cran::experiment
