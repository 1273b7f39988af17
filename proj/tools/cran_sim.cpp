// Command-line driver for the sparse BD precoding experiments.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/core.h>

#include "cran/channel_io.hpp"
#include "cran/experiment.hpp"

namespace {

using namespace cran;
using namespace cran::experiment;

std::vector<double> parse_list(const std::string& text, const std::string& flag) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || item.find_first_not_of(" \t", used) != std::string::npos)
      throw std::invalid_argument(flag + ": cannot parse \"" + item + "\" as a number");
    out.push_back(v);
  }
  if (out.empty()) throw std::invalid_argument(flag + ": empty list");
  return out;
}

struct Overrides {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::string> eta;
  std::optional<double> step;
  std::optional<std::string> oracle;
  std::optional<unsigned> threads;
};

ExperimentConfig resolve(const Overrides& o) {
  ExperimentConfig cfg = o.config_path.empty() ? ExperimentConfig{} : load_config(o.config_path);
  if (o.seed) cfg.system.seed = *o.seed;
  if (o.out) cfg.out_dir = *o.out;
  if (o.eta) cfg.etas = cfg.eta_grid = parse_list(*o.eta, "--eta");
  if (o.step) {
    cfg.solver.step0 = *o.step;
    cfg.converge_steps = {*o.step};
  }
  if (o.oracle) cfg.oracle = *o.oracle == "on";
  if (o.threads) cfg.threads = *o.threads;
  cfg.validate();
  return cfg;
}

void save_config(const ExperimentConfig& cfg) {
  const auto dir = ensure_dir(cfg.out_dir);
  std::ofstream out(dir / "config.json");
  out << config_to_json(cfg).dump(2) << '\n';
  if (!out) throw std::runtime_error("write failed: " + (dir / "config.json").string());
}

int cmd_converge(const ExperimentConfig& cfg) {
  const auto rows = run_converge(cfg);
  fmt::print("{:>8} {:>8} {:>6} {:>10} {:>10} {:>8}\n", "eta", "step", "runs", "converged", "med iters", "<=50");
  for (double e : cfg.etas)
    for (double d : cfg.converge_steps) {
      std::vector<int> iters;
      int conv = 0, fast = 0, n = 0;
      for (const auto& r : rows) {
        if (r.eta != e || r.step != d) continue;
        ++n;
        if (!r.converged) continue;
        ++conv;
        iters.push_back(r.iterations);
        if (r.iterations <= 50) ++fast;
      }
      std::sort(iters.begin(), iters.end());
      const std::string med = iters.empty() ? "-" : std::to_string(iters[iters.size() / 2]);
      fmt::print("{:>8.3g} {:>8.3g} {:>6} {:>10} {:>10} {:>8}\n", e, d, n, conv, med, fast);
    }
  fmt::print("traces and converge_summary.csv written to {}\n", cfg.out_dir);
  return 0;
}

int cmd_tradeoff(const ExperimentConfig& cfg) {
  const TradeoffReport rep = run_tradeoff(cfg);
  fmt::print("{:>8} {:>12} {:>12} {:>10} {:>6} {:>8}\n", "eta", "mean |A|", "mean rate", "std", "n", "nonconv");
  for (const auto& p : rep.points)
    fmt::print("{:>8.3g} {:>12.4f} {:>12.4f} {:>10.4f} {:>6} {:>8}\n", p.eta, p.mean_active, p.mean_rate, p.std_rate,
               p.n_samples, p.n_nonconverged);
  fmt::print("\n{:>6} {:>14}{}\n", "|A|", "fixed deploy", cfg.oracle ? fmt::format(" {:>14}", "exhaustive") : "");
  for (std::size_t i = 0; i < rep.fixed.size(); ++i)
    fmt::print("{:>6} {:>14.4f}{}\n", rep.fixed[i].cardinality, rep.fixed[i].mean_rate,
               cfg.oracle ? fmt::format(" {:>14.4f}", rep.oracle[i].mean_rate) : "");
  if (cfg.oracle) {
    double s = 0.0, o = 0.0;
    for (const auto& x : rep.samples)
      if (x.converged && !std::isnan(x.oracle_rate)) {
        s += x.sum_rate;
        o += x.oracle_rate;
      }
    if (o > 0.0) fmt::print("\nproposed / exhaustive at matched |A|: {:.4f}\n", s / o);
  }
  fmt::print("tradeoff CSVs written to {}\n", cfg.out_dir);
  return 0;
}

int cmd_powers(const ExperimentConfig& cfg) {
  const auto traces = run_powers(cfg);
  for (const auto& t : traces) {
    const auto& sol = t.result.solution;
    fmt::print("eta {:g}: {} iterations{}, |A| = {}, rate {:.4f}, active RAPs:", t.eta, t.result.state.iter,
               t.result.state.converged ? "" : " (not converged)", sol.active_set.size(), sol.sum_rate);
    for (int l : sol.active_set) fmt::print(" {}", l + 1);
    fmt::print("\n");
  }
  fmt::print("power traces written to {}\n", cfg.out_dir);
  return 0;
}

int cmd_bench(const ExperimentConfig& cfg) {
  const BenchReport rep = run_bench(cfg);
  fmt::print("{:>6} {:>6} {:>16} {:>8}\n", "L", "M", "median step [s]", "t_avg");
  for (const auto& r : rep.rows)
    fmt::print("{:>6} {:>6} {:>16.6g} {:>8.2f}\n", r.num_raps, r.total_antennas, r.median_step_seconds, r.t_avg);
  if (rep.rows.size() >= 2) fmt::print("fitted log-log slope: {:.3f}\n", rep.slope);
  return 0;
}

int cmd_channel(const ExperimentConfig& cfg, int layout, int fading) {
  const auto dir = ensure_dir(cfg.out_dir);
  const ChannelRealization ch = experiment::realize(cfg, Instance{layout, fading});
  const auto path = dir / ("channel_l" + std::to_string(layout) + "_f" + std::to_string(fading) + ".json");
  io::save_channel(ch, path.string());
  fmt::print("wrote {}\n", path.string());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Joint RAP selection and block-diagonalization precoding experiments"};
  app.require_subcommand(1);
  app.fallthrough();

  Overrides o;
  app.add_option("--config", o.config_path, "flat JSON config file")->check(CLI::ExistingFile);
  app.add_option("--seed", o.seed, "RNG seed");
  app.add_option("--out", o.out, "output directory");
  app.add_option("--eta", o.eta, "comma-separated eta values");
  app.add_option("--step", o.step, "subgradient step size");
  app.add_option("--oracle", o.oracle, "exhaustive-search comparison in tradeoff")->check(CLI::IsMember({"on", "off"}));
  app.add_option("--threads", o.threads, "worker threads (0: all cores)");

  auto* converge = app.add_subcommand("converge", "iteration traces and convergence statistics");
  auto* tradeoff = app.add_subcommand("tradeoff", "rate vs active RAPs over an eta grid");
  auto* powers = app.add_subcommand("powers", "per-RAP transmit power by iteration");
  auto* bench = app.add_subcommand("bench", "per-iteration time vs L");
  auto* channel = app.add_subcommand("channel", "export one channel realization as JSON");
  int layout = 0, fading = 0;
  channel->add_option("--layout", layout, "layout index")->check(CLI::NonNegativeNumber);
  channel->add_option("--fading", fading, "fading index")->check(CLI::NonNegativeNumber);

  CLI11_PARSE(app, argc, argv);

  try {
    const ExperimentConfig cfg = resolve(o);
    save_config(cfg);
    if (*bench) return cmd_bench(cfg);
    if (*converge) return cmd_converge(cfg);
    if (*tradeoff) return cmd_tradeoff(cfg);
    if (*powers) return cmd_powers(cfg);
    if (*channel) return cmd_channel(cfg, layout, fading);
  } catch (const std::exception& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return 1;
  }
  return 0;
}
