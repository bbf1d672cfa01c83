#include <charconv>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "bdfl/config.hpp"
#include "bdfl/experiments.hpp"
#include "bdfl/metrics_io.hpp"

namespace fs = std::filesystem;
using namespace bdfl;

namespace {

constexpr int kOk = 0;
constexpr int kInfeasible = 1;
constexpr int kConfigError = 2;
constexpr int kRuntimeError = 3;

SimConfig config_from(const std::string& path) { return path.empty() ? SimConfig{} : load_config(path); }

fs::path prepare_dir(const std::string& out) {
  fs::path dir(out);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw ConfigError("cannot create output directory " + out + ": " + ec.message());
  return dir;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path.string());
  f << text;
}

// "1..10", "3", or "1,4,9"
std::vector<std::uint64_t> parse_seeds(const std::string& spec) {
  std::vector<std::uint64_t> seeds;
  auto num = [&](const std::string& s) {
    std::uint64_t v{};
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) throw ConfigError("bad seed '" + s + "'");
    return v;
  };
  if (const auto dots = spec.find(".."); dots != std::string::npos) {
    const auto lo = num(spec.substr(0, dots)), hi = num(spec.substr(dots + 2));
    if (lo > hi) throw ConfigError("empty seed range " + spec);
    for (auto s = lo; s <= hi; ++s) seeds.push_back(s);
    return seeds;
  }
  std::istringstream ss(spec);
  for (std::string tok; std::getline(ss, tok, ',');) seeds.push_back(num(tok));
  if (seeds.empty()) throw ConfigError("no seeds given");
  return seeds;
}

std::vector<double> parse_values(const std::string& spec) {
  std::vector<double> values;
  std::istringstream ss(spec);
  for (std::string tok; std::getline(ss, tok, ',');) {
    double v{};
    const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (res.ec != std::errc{} || res.ptr != tok.data() + tok.size() || v < 0)
      throw ConfigError("bad V value '" + tok + "'");
    values.push_back(v);
  }
  if (values.empty()) throw ConfigError("no V values given");
  return values;
}

std::string g(double x) {
  std::ostringstream os;
  os << std::setprecision(10) << x;
  return os.str();
}

std::string g6(double x) {
  std::ostringstream os;
  os << std::setprecision(6) << x;
  return os.str();
}

int cmd_run(const std::string& config, std::optional<std::uint64_t> seed, const std::string& out) {
  auto cfg = config_from(config);
  if (seed) cfg.seed = *seed;
  const auto dir = prepare_dir(out);
  const auto res = run_simulation(cfg);
  emit_metrics(res.metrics, cfg.clients, (dir / "metrics.csv").string());
  {
    std::ofstream ledger(dir / "ledger.txt", std::ios::binary);
    res.ledger.write(ledger);
  }
  write_text(dir / "config.json", to_json(cfg).dump(2) + "\n");
  const double total = cumulative_delay(res.metrics);
  std::cout << "scheduler=" << to_string(cfg.scheduler) << " seed=" << cfg.seed << " rounds=" << res.metrics.size()
            << " cumulative_delay_s=" << g(total);
  if (!res.metrics.empty())
    std::cout << " final_loss=" << g(res.metrics.back().loss) << " final_accuracy=" << g(res.metrics.back().accuracy);
  std::cout << "\n";
  return kOk;
}

int cmd_sweep(const std::string& config, const std::string& values, const std::string& out) {
  const auto cfg = config_from(config);
  const auto vs = parse_values(values);
  const auto dir = prepare_dir(out);
  const auto traces = sweep_v(cfg, vs);
  std::ofstream backlog(dir / "backlog.csv", std::ios::binary);
  backlog << "round";
  for (const auto& tr : traces) backlog << ",mean_z_v" << g(tr.v);
  backlog << "\n";
  for (std::size_t t = 0; t < cfg.rounds; ++t) {
    backlog << t + 1;
    for (const auto& tr : traces) backlog << ',' << detail::fmt_double(tr.mean_backlog[t]);
    backlog << "\n";
  }
  for (const auto& tr : traces) {
    emit_metrics(tr.run.metrics, cfg.clients, (dir / ("metrics_v" + g(tr.v) + ".csv")).string());
    std::cout << "V=" << g(tr.v) << " time_avg_backlog=" << g(tr.time_average())
              << " cumulative_delay_s=" << g(cumulative_delay(tr.run.metrics)) << "\n";
  }
  return kOk;
}

int cmd_compare(const std::string& config, const std::string& seeds, const std::string& out) {
  const auto cfg = config_from(config);
  const auto dir = prepare_dir(out);
  const auto cmp = compare_baselines(cfg, parse_seeds(seeds));

  std::ofstream per_seed(dir / "per_seed.csv", std::ios::binary);
  per_seed << "scheduler,seed,cumulative_delay_s,final_loss,final_accuracy,mean_client_energy_j\n";
  for (const auto& o : cmp.outcomes) {
    per_seed << to_string(o.scheduler) << ',' << o.seed << ',' << detail::fmt_double(o.cumulative_delay) << ','
             << detail::fmt_double(o.final_loss) << ',' << detail::fmt_double(o.final_accuracy) << ','
             << detail::fmt_double(o.mean_client_energy) << "\n";
    emit_metrics(o.metrics, cfg.clients,
                 (dir / ("metrics_" + to_string(o.scheduler) + "_seed" + std::to_string(o.seed) + ".csv")).string());
  }

  std::ofstream table(dir / "comparison.csv", std::ios::binary);
  table << "scheduler,delay_mean_s,delay_std_s,accuracy_mean,accuracy_std,loss_mean,energy_mean_j\n";
  std::cout << std::left << std::setw(14) << "scheduler" << std::setw(24) << "cum. delay (s)" << std::setw(24)
            << "accuracy" << "loss\n";
  for (const auto& s : cmp.summary) {
    table << to_string(s.scheduler) << ',' << detail::fmt_double(s.delay_mean) << ','
          << detail::fmt_double(s.delay_std) << ',' << detail::fmt_double(s.accuracy_mean) << ','
          << detail::fmt_double(s.accuracy_std) << ',' << detail::fmt_double(s.loss_mean) << ','
          << detail::fmt_double(s.energy_mean) << "\n";
    std::cout << std::setw(14) << to_string(s.scheduler) << std::setw(24)
              << (g6(s.delay_mean) + " +- " + g6(s.delay_std)) << std::setw(24)
              << (g6(s.accuracy_mean) + " +- " + g6(s.accuracy_std)) << g6(s.loss_mean) << "\n";
  }
  std::cout << "delay reduction vs " << to_string(cmp.best_baseline) << ": " << g(cmp.delay_reduction_pct) << "%\n";
  return kOk;
}

int cmd_bound(const std::string& config) {
  const auto cfg = config_from(config);
  const auto res = run_simulation(cfg);
  const auto r = bound_report(cfg, res);
  std::cout << "L=" << g(r.inputs.smoothness) << " G=" << g(r.inputs.grad_bound)
            << " initial_gap=" << g(r.inputs.initial_gap) << "\n"
            << "terms: optimisation=" << g(r.terms.optimisation) << " participation=" << g(r.terms.participation)
            << " local_drift=" << g(r.terms.local_drift) << " absentee=" << g(r.terms.absentee) << "\n"
            << "bound=" << g(r.bound) << "\n"
            << "measured_mean_grad_sq=" << g(r.measured) << "\n"
            << (r.measured <= r.bound ? "holds" : "violated") << "\n";
  return kOk;
}

constexpr const char* kPlotScript = R"py(#!/usr/bin/env python3
"""Plots CSVs written by bdfl_sim into the directory given as argv[1]."""
import glob
import os
import sys

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import pandas as pd

root = sys.argv[1] if len(sys.argv) > 1 else "."

backlog = os.path.join(root, "backlog.csv")
if os.path.exists(backlog):
    df = pd.read_csv(backlog)
    for col in df.columns[1:]:
        plt.plot(df["round"], df[col], label=col.replace("mean_z_", ""))
    plt.xlabel("round")
    plt.ylabel("mean backlog")
    plt.legend()
    plt.savefig(os.path.join(root, "backlog.png"), dpi=120)
    plt.close()

for path in sorted(glob.glob(os.path.join(root, "metrics*.csv"))):
    df = pd.read_csv(path)
    energy = [c for c in df.columns if c.startswith("e_total_")]
    fig, ax = plt.subplots(1, 2, figsize=(10, 4))
    ax[0].plot(df["round"], df["cum_avg_delay_s"])
    ax[0].set_xlabel("round")
    ax[0].set_ylabel("cumulative average delay (s)")
    for c in energy:
        ax[1].plot(df["round"], df[c], label=c)
    ax[1].set_xlabel("round")
    ax[1].set_ylabel("energy (J)")
    fig.tight_layout()
    fig.savefig(path[:-4] + ".png", dpi=120)
    plt.close(fig)

per_seed = os.path.join(root, "per_seed.csv")
if os.path.exists(per_seed):
    df = pd.read_csv(per_seed)
    df.boxplot(column="cumulative_delay_s", by="scheduler")
    plt.suptitle("")
    plt.ylabel("cumulative delay (s)")
    plt.savefig(os.path.join(root, "delay_by_scheduler.png"), dpi=120)
    plt.close()
)py";

int cmd_plot_script(const std::string& out) {
  const auto dir = prepare_dir(out);
  const auto path = dir / "plot.py";
  write_text(path, kPlotScript);
  fs::permissions(path, fs::perms::owner_exec | fs::perms::group_exec | fs::perms::others_exec,
                  fs::perm_options::add);
  std::cout << path.string() << "\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Blockchain-aided decentralized FL simulator"};
  app.require_subcommand(1);

  std::string config, out = "out", values = "10,50,100", seeds = "1..10";
  std::optional<std::uint64_t> seed;

  auto* run = app.add_subcommand("run", "Run one simulation and write per-round metrics");
  run->add_option("--config", config, "JSON config file (defaults if omitted)");
  run->add_option("--seed", seed, "Override the config seed");
  run->add_option("--out", out, "Output directory");

  auto* sweep = app.add_subcommand("sweep-v", "Run DRC-BDFL for several values of V");
  sweep->add_option("--config", config, "JSON config file");
  sweep->add_option("--values", values, "Comma-separated V values");
  sweep->add_option("--out", out, "Output directory");

  auto* compare = app.add_subcommand("compare", "Compare DRC-BDFL with the baselines over seeds");
  compare->add_option("--config", config, "JSON config file");
  compare->add_option("--seeds", seeds, "Seed range a..b or comma list");
  compare->add_option("--out", out, "Output directory");

  auto* bound = app.add_subcommand("bound", "Print the convergence bound and the measured gradient average");
  bound->add_option("--config", config, "JSON config file");

  auto* plot = app.add_subcommand("plot-script", "Write a matplotlib script for the CSV outputs");
  plot->add_option("--out", out, "Output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kConfigError;
  }

  try {
    if (*run) return cmd_run(config, seed, out);
    if (*sweep) return cmd_sweep(config, values, out);
    if (*compare) return cmd_compare(config, seeds, out);
    if (*bound) return cmd_bound(config);
    if (*plot) return cmd_plot_script(out);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const DomainError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const RoundInfeasible& e) {
    std::cerr << "infeasible: " << e.what() << "\n";
    return kInfeasible;
  } catch (const UnschedulableClient& e) {
    std::cerr << "infeasible: " << e.what() << "\n";
    return kInfeasible;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntimeError;
  }
  return kOk;
}
