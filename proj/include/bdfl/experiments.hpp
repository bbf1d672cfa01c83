#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <future>
#include <numeric>
#include <string>
#include <thread>
#include <vector>

#include "bdfl/fl_engine.hpp"
#include "bdfl/simulation.hpp"

namespace bdfl {

/// Runs `jobs` on up to hardware_concurrency workers, results in job order.
template <typename R, typename Job>
std::vector<R> parallel_map(const std::vector<Job>& jobs) {
  const std::size_t width = std::max(1u, std::thread::hardware_concurrency());
  std::vector<R> out;
  out.reserve(jobs.size());
  for (std::size_t start = 0; start < jobs.size(); start += width) {
    std::vector<std::future<R>> batch;
    for (std::size_t k = start; k < std::min(jobs.size(), start + width); ++k)
      batch.push_back(std::async(std::launch::async, jobs[k]));
    for (auto& f : batch) out.push_back(f.get());
  }
  return out;
}

// ---------------------------------------------------------------------------
// V sweep
// ---------------------------------------------------------------------------

struct VTrace {
  double v = 0.0;
  std::vector<double> mean_backlog;  // mean over clients of Z_i, per round
  SimulationResult run;

  double time_average() const {
    return mean_backlog.empty() ? 0.0
                                : std::accumulate(mean_backlog.begin(), mean_backlog.end(), 0.0) /
                                      static_cast<double>(mean_backlog.size());
  }
};

inline std::vector<VTrace> sweep_v(const SimConfig& cfg, const std::vector<double>& v_values) {
  if (v_values.empty()) throw DomainError("sweep needs at least one V value");
  std::vector<std::function<VTrace()>> jobs;
  for (double v : v_values) {
    jobs.push_back([cfg, v] {
      SimConfig c = cfg;
      c.tradeoff_v = v;
      c.scheduler = SchedulerKind::drc_bdfl;
      VTrace tr;
      tr.v = v;
      tr.run = run_simulation(c);
      for (const auto& m : tr.run.metrics)
        tr.mean_backlog.push_back(std::accumulate(m.queue.begin(), m.queue.end(), 0.0) /
                                  static_cast<double>(m.queue.size()));
      return tr;
    });
  }
  return parallel_map<VTrace>(jobs);
}

// ---------------------------------------------------------------------------
// Baseline comparison
// ---------------------------------------------------------------------------

inline double cumulative_delay(const std::vector<RoundMetrics>& metrics) {
  double s = 0.0;
  for (const auto& m : metrics) s += m.round_delay;
  return s;
}

struct SeedOutcome {
  std::uint64_t seed = 0;
  SchedulerKind scheduler = SchedulerKind::drc_bdfl;
  double cumulative_delay = 0.0;
  double final_loss = 0.0;
  double final_accuracy = 0.0;
  double mean_client_energy = 0.0;  // per-round energy averaged over clients and rounds
  std::vector<RoundMetrics> metrics;
};

struct SchedulerSummary {
  SchedulerKind scheduler = SchedulerKind::drc_bdfl;
  double delay_mean = 0.0, delay_std = 0.0;
  double accuracy_mean = 0.0, accuracy_std = 0.0;
  double loss_mean = 0.0;
  double energy_mean = 0.0;
};

struct Comparison {
  std::vector<SeedOutcome> outcomes;  // sorted by (scheduler, seed)
  std::vector<SchedulerSummary> summary;
  SchedulerKind best_baseline = SchedulerKind::channel_best;
  double delay_reduction_pct = 0.0;  // DRC-BDFL vs the best baseline's mean

  const SchedulerSummary& of(SchedulerKind k) const {
    for (const auto& s : summary)
      if (s.scheduler == k) return s;
    throw DomainError("no summary for scheduler " + to_string(k));
  }
  const SeedOutcome& outcome(SchedulerKind k, std::uint64_t seed) const {
    for (const auto& o : outcomes)
      if (o.scheduler == k && o.seed == seed) return o;
    throw DomainError("no outcome for scheduler " + to_string(k));
  }
};

inline SeedOutcome summarize_run(std::uint64_t seed, SchedulerKind kind, std::vector<RoundMetrics> metrics) {
  SeedOutcome o;
  o.seed = seed;
  o.scheduler = kind;
  o.cumulative_delay = cumulative_delay(metrics);
  if (!metrics.empty()) {
    o.final_loss = metrics.back().loss;
    o.final_accuracy = metrics.back().accuracy;
    double e = 0.0;
    std::size_t count = 0;
    for (const auto& m : metrics)
      for (std::size_t i = 0; i < m.e_up.size(); ++i, ++count) e += m.energy(i);
    o.mean_client_energy = count ? e / static_cast<double>(count) : 0.0;
  }
  o.metrics = std::move(metrics);
  return o;
}

/// DRC-BDFL first, then each baseline replaying its per-round group sizes.
inline std::vector<SeedOutcome> compare_one_seed(SimConfig cfg) {
  cfg.scheduler = SchedulerKind::drc_bdfl;
  std::vector<SeedOutcome> out;
  auto drc = run_simulation(cfg);
  std::vector<std::size_t> sizes;
  for (const auto& m : drc.metrics) sizes.push_back(m.selected.size());
  out.push_back(summarize_run(cfg.seed, cfg.scheduler, std::move(drc.metrics)));
  for (auto kind : {SchedulerKind::random, SchedulerKind::round_robin, SchedulerKind::channel_best}) {
    SimConfig c = cfg;
    c.scheduler = kind;
    out.push_back(summarize_run(cfg.seed, kind, run_simulation(c, sizes).metrics));
  }
  return out;
}

inline Comparison compare_baselines(const SimConfig& cfg, const std::vector<std::uint64_t>& seeds) {
  if (seeds.empty()) throw DomainError("comparison needs at least one seed");
  std::vector<std::function<std::vector<SeedOutcome>()>> jobs;
  for (auto s : seeds) {
    jobs.push_back([cfg, s] {
      SimConfig c = cfg;
      c.seed = s;
      return compare_one_seed(c);
    });
  }
  Comparison cmp;
  for (auto& per_seed : parallel_map<std::vector<SeedOutcome>>(jobs))
    for (auto& o : per_seed) cmp.outcomes.push_back(std::move(o));
  std::stable_sort(cmp.outcomes.begin(), cmp.outcomes.end(), [](const auto& a, const auto& b) {
    if (a.scheduler != b.scheduler) return a.scheduler < b.scheduler;
    return a.seed < b.seed;
  });

  auto mean_std = [](const std::vector<double>& x) {
    const double n = static_cast<double>(x.size());
    const double mean = std::accumulate(x.begin(), x.end(), 0.0) / n;
    double var = 0.0;
    for (double v : x) var += (v - mean) * (v - mean);
    return std::pair{mean, x.size() > 1 ? std::sqrt(var / (n - 1.0)) : 0.0};
  };
  for (auto kind : {SchedulerKind::drc_bdfl, SchedulerKind::random, SchedulerKind::round_robin,
                    SchedulerKind::channel_best}) {
    std::vector<double> delay, acc, loss, energy;
    for (const auto& o : cmp.outcomes) {
      if (o.scheduler != kind) continue;
      delay.push_back(o.cumulative_delay);
      acc.push_back(o.final_accuracy);
      loss.push_back(o.final_loss);
      energy.push_back(o.mean_client_energy);
    }
    SchedulerSummary s;
    s.scheduler = kind;
    std::tie(s.delay_mean, s.delay_std) = mean_std(delay);
    std::tie(s.accuracy_mean, s.accuracy_std) = mean_std(acc);
    s.loss_mean = mean_std(loss).first;
    s.energy_mean = mean_std(energy).first;
    cmp.summary.push_back(s);
  }
  double best = INFINITY;
  for (const auto& s : cmp.summary) {
    if (s.scheduler == SchedulerKind::drc_bdfl) continue;
    if (s.delay_mean < best) best = s.delay_mean, cmp.best_baseline = s.scheduler;
  }
  cmp.delay_reduction_pct = 100.0 * (best - cmp.of(SchedulerKind::drc_bdfl).delay_mean) / best;
  return cmp;
}

// ---------------------------------------------------------------------------
// Energy trajectories
// ---------------------------------------------------------------------------

/// Cumulative averages, over the rounds each client trained in, of its
/// energy components; then averaged over clients that have trained so far.
struct EnergyTrajectory {
  std::vector<double> upload, compute, mining, total;       // mean over clients, per round
  std::vector<std::vector<double>> per_client_total;        // [round][client]
};

inline EnergyTrajectory energy_trajectory(const std::vector<RoundMetrics>& metrics) {
  EnergyTrajectory tr;
  if (metrics.empty()) return tr;
  const std::size_t n = metrics.front().e_up.size();
  std::vector<double> up(n, 0.0), cp(n, 0.0), bl(n, 0.0);
  std::vector<std::size_t> count(n, 0);
  for (const auto& m : metrics) {
    const auto mask = selection_mask(m.selected, n);
    for (std::size_t i = 0; i < n; ++i) {
      if (!mask[i]) continue;
      up[i] += m.e_up[i];
      cp[i] += m.e_cp[i];
      bl[i] += m.e_bloc[i];
      ++count[i];
    }
    double su = 0, sc = 0, sb = 0;
    std::size_t active = 0;
    std::vector<double> per(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      if (!count[i]) continue;
      const double c = static_cast<double>(count[i]);
      su += up[i] / c;
      sc += cp[i] / c;
      sb += bl[i] / c;
      per[i] = (up[i] + cp[i] + bl[i]) / c;
      ++active;
    }
    const double a = active ? static_cast<double>(active) : 1.0;
    tr.upload.push_back(su / a);
    tr.compute.push_back(sc / a);
    tr.mining.push_back(sb / a);
    tr.total.push_back((su + sc + sb) / a);
    tr.per_client_total.push_back(std::move(per));
  }
  return tr;
}

// ---------------------------------------------------------------------------
// Convergence bound against a finished run
// ---------------------------------------------------------------------------

struct BoundReport {
  BoundInputs inputs;
  BoundTerms terms;
  double bound = 0.0;
  double measured = 0.0;  // (1/T) Σ ‖∇F(w(t+1))‖²
};

inline BoundReport bound_report(const SimConfig& cfg, const SimulationResult& run) {
  BoundReport r;
  auto& b = r.inputs;
  b.eta = cfg.learning_rate;
  b.local_iters = cfg.local_iters;
  b.rounds = static_cast<double>(run.metrics.size());
  b.smoothness = run.trace.smoothness;
  b.grad_bound = 1.1 * run.trace.max_grad_norm;
  b.initial_gap = run.trace.initial_loss - run.trace.min_loss;
  b.betas = run.beta;
  b.dataset_sizes = run.dataset_sizes;
  r.terms = lemma1_terms(b, std::accumulate(b.dataset_sizes.begin(), b.dataset_sizes.end(), 0.0));
  r.bound = r.terms.total();
  r.measured = run.trace.mean_grad_sq;
  return r;
}

}  // namespace bdfl
