#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <regex>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "cran/channel_io.hpp"
#include "cran/experiment.hpp"
#include "cran/parallel.hpp"

using namespace cran;
using namespace cran::experiment;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string error_of(const std::string& text) {
  try {
    ExperimentConfig c = parse_config(text);
    c.validate();
  } catch (const std::exception& e) {
    return e.what();
  }
  return "";
}

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("cran_test_" + name);
  fs::remove_all(p);
  return p;
}

ExperimentConfig tiny_config(const fs::path& out) {
  ExperimentConfig c = parse_config(R"({"L": 6, "N": 2, "n_layouts": 2, "n_fading": 2, "eta": [0, 0.4],
                                        "eta_grid": [0, 0.4], "converge_steps": [0.1], "max_iter": 150})");
  c.out_dir = out.string();
  c.threads = 2;
  return c;
}

}  // namespace

TEST(Config, EmptyFileGivesScenarioDefaults) {
  const ExperimentConfig c = load_config(std::string(CRAN_TEST_DATA) + "/empty.json");
  EXPECT_EQ(c.system.num_raps, 10);
  EXPECT_EQ(c.system.antennas_per_rap, 2);
  EXPECT_EQ(c.system.num_users, 2);
  EXPECT_EQ(c.system.antennas_per_user, 3);
  EXPECT_EQ(c.system.rap_budget_dbm(0), -40.0);
  EXPECT_EQ(c.system.sigma2_dbm_hz, -162.0);
  EXPECT_EQ(c.system.radius_km, 1.0);
  EXPECT_EQ(c.solver.tol, 1e-4);
  EXPECT_EQ(c.solver.step0, 0.1);
  EXPECT_EQ(c.solver.active_thresh_rel, 1e-5);
  EXPECT_EQ(c.n_layouts, 30);
  EXPECT_EQ(c.n_fading, 20);
}

TEST(Config, NegativeEtaNamesField) {
  const std::string e = error_of(R"({"eta": -1})");
  EXPECT_EQ(e.rfind("eta:", 0), 0u) << e;
}

TEST(Config, UnknownKeyListsValidKeys) {
  const std::string e = error_of(R"({"L": 6, "num_rap": 4})");
  EXPECT_NE(e.find("num_rap"), std::string::npos);
  for (const auto& k : config_keys()) EXPECT_NE(e.find(k), std::string::npos) << k;
}

TEST(Config, ValidationErrorsNameTheirField) {
  const std::vector<std::pair<std::string, std::string>> cases = {
      {R"({"L": 0})", "L:"},
      {R"({"L": 2.5})", "L:"},
      {R"({"Nc": "two"})", "Nc:"},
      {R"({"L": 2})", "N:"},
      {R"({"radius_km": -1})", "radius_km:"},
      {R"({"p_max_dbm_hz": [-40, -41]})", "p_max_dbm_hz:"},
      {R"({"tol": 0})", "tol:"},
      {R"({"step": -0.1})", "step:"},
      {R"({"step_rule": "fast"})", "step_rule:"},
      {R"({"epsilon_w": 0})", "epsilon_w:"},
      {R"({"max_iter": 0})", "max_iter:"},
      {R"({"active_thresh_rel": 2})", "active_thresh_rel:"},
      {R"({"lambda0": [1, 2]})", "lambda0:"},
      {R"({"n_layouts": 0})", "n_layouts:"},
      {R"({"n_fading": 0})", "n_fading:"},
      {R"({"eta_grid": []})", "eta_grid:"},
      {R"({"converge_steps": [0]})", "converge_steps:"},
      {R"({"oracle": "maybe"})", "oracle:"},
      {R"({"seed": -3})", "seed:"},
      {R"({"bench_L": [8, 0]})", "bench_L:"},
      {R"({"threads": -1})", "threads:"},
  };
  for (const auto& [text, field] : cases) {
    const std::string e = error_of(text);
    EXPECT_EQ(e.rfind(field, 0), 0u) << text << " -> " << e;
  }
}

TEST(Config, MalformedJsonIsReported) {
  EXPECT_NE(error_of("{\"L\": ").find("parse error"), std::string::npos);
  EXPECT_NE(error_of("[1, 2]").find("object"), std::string::npos);
}

TEST(Config, ValuesApplied) {
  const ExperimentConfig c = parse_config(
      R"({"L": 8, "N": 2, "p_max_dbm_hz": -43, "seed": 77, "eta": 0.25, "step_rule": "diminishing",
          "oracle": "on", "bench_L": [4, 8]})");
  EXPECT_EQ(c.system.num_raps, 8);
  EXPECT_EQ(c.system.p_max_dbm_hz, std::vector<double>(8, -43.0));
  EXPECT_EQ(c.system.seed, 77u);
  EXPECT_EQ(c.etas, std::vector<double>{0.25});
  EXPECT_EQ(c.solver.step_rule, StepRule::kDiminishing);
  EXPECT_TRUE(c.oracle);
  EXPECT_EQ(c.bench_raps, (std::vector<int>{4, 8}));
}

TEST(Config, RoundTripThroughJson) {
  const ExperimentConfig a = parse_config(R"({"L": 8, "N": 2, "eta": [0, 1], "tol": 1e-6})");
  const ExperimentConfig b = apply_json(ExperimentConfig{}, config_to_json(a));
  EXPECT_EQ(config_to_json(a), config_to_json(b));
}

TEST(Config, ShippedDeskConfigLoads) {
  const ExperimentConfig c = load_config(std::string(CRAN_TEST_DATA) + "/../../configs/desk_tradeoff.json");
  EXPECT_EQ(c.system.num_raps, 8);
  EXPECT_EQ(c.n_layouts, 10);
  EXPECT_EQ(c.n_fading, 5);
  EXPECT_TRUE(c.oracle);
}

TEST(Csv, TwelveSignificantDigits) {
  EXPECT_EQ(num(1.0 / 3.0), "0.333333333333");
  EXPECT_EQ(num(123456789.123456789), "123456789.123");
  EXPECT_EQ(num(2.0), "2");
  EXPECT_EQ(num(1.5e-13), "1.5e-13");
}

TEST(Csv, SubsetStringIsOneBased) { EXPECT_EQ(subset_string({0, 3, 9}), "1 4 10"); }

TEST(Csv, TraceFileLayout) {
  const fs::path dir = scratch_dir("trace");
  fs::create_directories(dir);
  SystemConfig sys;
  sys.num_raps = 4;
  sys.antennas_per_user = 2;
  const auto ch = cran::realize(sys, 0);
  SolverParams p;
  p.eta = 0.3;
  const SolveResult r = solve(ch, p);
  write_trace(dir / "t.csv", r.state);
  std::ifstream in(dir / "t.csv");
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "# cran-sim trace v1");
  std::getline(in, line);
  EXPECT_EQ(line, "iter,residual,active_count,sum_rate,lambda_1,lambda_2,lambda_3,lambda_4,omega_1,omega_2,omega_3,omega_4");
  int rows = 0;
  while (std::getline(in, line)) {
    ++rows;
    EXPECT_EQ(std::count(line.begin(), line.end(), ','), 11);
  }
  EXPECT_EQ(rows, r.state.iter);
}

TEST(ChannelIo, RoundTripIsExact) {
  SystemConfig sys;
  sys.seed = 31;
  const auto ch = cran::realize(sys, 2, 1);
  const auto back = io::channel_from_json(nlohmann::json::parse(io::channel_to_json(ch).dump()));
  EXPECT_EQ(back.dims, ch.dims);
  EXPECT_EQ(back.seed, ch.seed);
  EXPECT_EQ(back.stream, ch.stream);
  EXPECT_EQ(back.layout, ch.layout);
  EXPECT_EQ(back.gamma2, ch.gamma2);
  EXPECT_EQ(back.budgets, ch.budgets);
  EXPECT_EQ(back.norm_scale, ch.norm_scale);
  for (std::size_t i = 0; i < ch.blocks.size(); ++i) EXPECT_EQ(back.blocks[i], ch.blocks[i]);
  for (int k = 0; k < ch.dims.num_users; ++k) EXPECT_EQ(back.user(k), ch.user(k));
}

TEST(ChannelIo, RowMajorPairs) {
  CMatrix b(2, 2);
  b << Complex(1, 2), Complex(3, 4), Complex(5, 6), Complex(7, 8);
  const auto ch = assemble_channel({1, 2, 1, 2}, {b}, RVector::Ones(1));
  const auto j = io::channel_to_json(ch);
  EXPECT_EQ(j["blocks"][0]["data"], nlohmann::json({1, 2, 3, 4, 5, 6, 7, 8}));
  EXPECT_EQ(j["format"], "cran-channel");
}

TEST(ChannelIo, FileRoundTripAndErrors) {
  const fs::path dir = scratch_dir("chan");
  fs::create_directories(dir);
  const auto ch = cran::realize(SystemConfig{}, 0);
  io::save_channel(ch, (dir / "c.json").string());
  const auto back = io::load_channel((dir / "c.json").string());
  EXPECT_EQ(back.user(1), ch.user(1));
  EXPECT_THROW(io::load_channel((dir / "missing.json").string()), std::runtime_error);
  auto j = io::channel_to_json(ch);
  j["format"] = "other";
  EXPECT_THROW(io::channel_from_json(j), std::invalid_argument);
  j = io::channel_to_json(ch);
  j["blocks"][0]["data"].erase(0);
  EXPECT_THROW(io::channel_from_json(j), std::invalid_argument);
}

TEST(Parallel, SameResultAnyThreadCount) {
  std::vector<double> a(200), b(200);
  parallel_for(a.size(), [&](std::size_t i) { a[i] = std::sqrt(static_cast<double>(i)); }, 1);
  parallel_for(b.size(), [&](std::size_t i) { b[i] = std::sqrt(static_cast<double>(i)); }, 4);
  EXPECT_EQ(a, b);
}

TEST(Parallel, RethrowsAfterJoin) {
  std::atomic<int> done{0};
  EXPECT_THROW(parallel_for(
                   50,
                   [&](std::size_t i) {
                     if (i == 7) throw std::runtime_error("boom");
                     ++done;
                   },
                   3),
               std::runtime_error);
  EXPECT_EQ(done.load(), 49);
}

TEST(Runners, ConvergeOutputIsByteIdentical) {
  const fs::path d1 = scratch_dir("det1"), d2 = scratch_dir("det2");
  ExperimentConfig c = tiny_config(d1);
  run_converge(c);
  c.out_dir = d2.string();
  c.threads = 1;
  run_converge(c);
  for (const auto& entry : fs::directory_iterator(d1)) {
    const fs::path other = d2 / entry.path().filename();
    ASSERT_TRUE(fs::exists(other)) << other;
    EXPECT_EQ(slurp(entry.path()), slurp(other)) << entry.path().filename();
  }
  EXPECT_TRUE(fs::exists(d1 / "trace_eta0.4_step0.1.csv"));
  EXPECT_TRUE(fs::exists(d1 / "converge_summary.csv"));
}

TEST(Runners, TradeoffSingleZeroEta) {
  ExperimentConfig c = tiny_config(scratch_dir("t0"));
  c.eta_grid = {0.0};
  const TradeoffReport r = run_tradeoff(c);
  ASSERT_EQ(r.points.size(), 1u);
  ASSERT_GT(r.points[0].n_samples, 0);
  EXPECT_EQ(r.points[0].mean_active, 6.0);
  EXPECT_EQ(r.points[0].n_samples + r.points[0].n_nonconverged, 4);
  EXPECT_GE(r.points[0].std_rate, 0.0);
}

TEST(Runners, TradeoffWithOracleWritesFrontiers) {
  const fs::path out = scratch_dir("t1");
  ExperimentConfig c = tiny_config(out);
  c.oracle = true;
  const TradeoffReport r = run_tradeoff(c);
  EXPECT_EQ(r.frontiers.size(), 4u);
  for (const auto& s : r.samples) {
    if (!s.converged || std::isnan(s.oracle_rate)) continue;
    EXPECT_GE(s.oracle_rate, s.sum_rate - 1e-7);
  }
  const std::string f = slurp(out / "frontier" / "frontier_l0_f0.csv");
  EXPECT_EQ(f.rfind("# cran-sim frontier v1\ncardinality,best_subset,rate\n", 0), 0u);
  EXPECT_NE(f.find("\n6,\"1 2 3 4 5 6\","), std::string::npos);
  EXPECT_TRUE(fs::exists(out / "tradeoff.csv"));
  EXPECT_TRUE(fs::exists(out / "fixed.csv"));
  EXPECT_TRUE(fs::exists(out / "frontier_mean.csv"));
}

TEST(Runners, TradeoffRefusesOracleAboveCap) {
  ExperimentConfig c = tiny_config(scratch_dir("t2"));
  c.system.num_raps = 15;
  c.oracle = true;
  EXPECT_THROW(run_tradeoff(c, false), std::invalid_argument);
}

TEST(Runners, PowersConsistentWithActiveSet) {
  const fs::path out = scratch_dir("pw");
  ExperimentConfig c = tiny_config(out);
  c.etas = {0.0, 0.5};
  const auto traces = run_powers(c);
  for (const auto& t : traces) {
    const auto& sol = t.result.solution;
    int above = 0;
    for (int l = 0; l < 6; ++l)
      if (sol.per_rap_power(l) >= c.solver.active_thresh_rel * 1.0) ++above;
    EXPECT_EQ(above, static_cast<int>(sol.active_set.size()));
    EXPECT_LE(sol.per_rap_power.sum(), 6.0 * (1.0 + 1e-4));
  }
  EXPECT_TRUE(fs::exists(out / "powers_eta0.5.csv"));
  EXPECT_TRUE(fs::exists(out / "powers_final.csv"));
}

TEST(Runners, BenchReportsIterationBookkeeping) {
  ExperimentConfig c = tiny_config(scratch_dir("bench"));
  c.bench_raps = {4, 8};
  c.bench_seeds = 2;
  c.etas = {0.3};
  const BenchReport r = run_bench(c);
  ASSERT_EQ(r.rows.size(), 2u);
  for (const auto& row : r.rows) {
    double iters = 0.0;
    for (int s = 0; s < 2; ++s) {
      SystemConfig sys = c.system;
      sys.num_raps = row.num_raps;
      SolverParams p = c.solver;
      p.eta = 0.3;
      iters += solve(cran::realize(sys, static_cast<std::uint64_t>(s)), p).state.iter;
    }
    EXPECT_DOUBLE_EQ(row.t_avg, iters / 2);
    EXPECT_GT(row.median_step_seconds, 0.0);
  }
}

TEST(Bench, SlopeOfPowerLaw) {
  const std::vector<double> x = {8, 16, 32, 64};
  std::vector<double> y;
  for (double v : x) y.push_back(3e-6 * std::pow(v, 3.2));
  EXPECT_NEAR(loglog_slope(x, y), 3.2, 1e-12);
}

TEST(Stats, MeanStd) {
  const auto [m, s] = mean_std({1.0, 2.0, 3.0, 4.0});
  EXPECT_DOUBLE_EQ(m, 2.5);
  EXPECT_NEAR(s, std::sqrt(5.0 / 3.0), 1e-15);
}
