#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "bdfl/errors.hpp"
#include "bdfl/phys_models.hpp"
#include "bdfl/random.hpp"
#include "bdfl/topology.hpp"

namespace bdfl {

// ---------------------------------------------------------------------------
// Virtual queues and the per-round drift-plus-penalty objective
// ---------------------------------------------------------------------------

struct QueueState {
  std::vector<double> backlog;

  explicit QueueState(std::size_t num_clients = 0) : backlog(num_clients, 0.0) {}

  double mean() const {
    return backlog.empty() ? 0.0
                           : std::accumulate(backlog.begin(), backlog.end(), 0.0) /
                                 static_cast<double>(backlog.size());
  }
  double max() const { return backlog.empty() ? 0.0 : *std::max_element(backlog.begin(), backlog.end()); }
};

inline std::vector<bool> selection_mask(std::span<const std::size_t> selected, std::size_t num_clients) {
  std::vector<bool> mask(num_clients, false);
  for (auto i : selected) mask.at(i) = true;
  return mask;
}

/// Z_i ← max(Z_i + β_i − Γ_i, 0).
inline QueueState queue_update(const QueueState& q, std::span<const double> beta,
                               std::span<const std::size_t> selected) {
  const auto mask = selection_mask(selected, q.backlog.size());
  QueueState next(q.backlog.size());
  for (std::size_t i = 0; i < q.backlog.size(); ++i)
    next.backlog[i] = std::max(q.backlog[i] + beta[i] - (mask[i] ? 1.0 : 0.0), 0.0);
  return next;
}

inline double drift_plus_penalty(const QueueState& q, std::span<const double> beta,
                                 const std::vector<bool>& selected, double round_delay, double v) {
  if (round_delay < 0.0) throw DomainError("round delay must be non-negative");
  double drift = 0.0;
  for (std::size_t i = 0; i < q.backlog.size(); ++i)
    drift += q.backlog[i] * (beta[i] - (selected[i] ? 1.0 : 0.0));
  return drift + v * round_delay;
}

inline double drift_plus_penalty(const QueueState& q, std::span<const double> beta,
                                 std::span<const std::size_t> selected, double round_delay, double v) {
  return drift_plus_penalty(q, beta, selection_mask(selected, q.backlog.size()), round_delay, v);
}

// ---------------------------------------------------------------------------
// Closed-form frequency solvers
// ---------------------------------------------------------------------------

struct FreqBounds {
  double min = 0.1e9;
  double max = 5e9;

  double clamp(double f) const { return std::clamp(f, min, max); }
};

/// Frequency that spends exactly the energy left after upload and mining.
/// Empty when nothing is left.
inline std::optional<double> tight_cpu_freq(const ClientProfile& p, unsigned local_iters,
                                            double residual_energy) {
  if (!(residual_energy > 0.0)) return std::nullopt;
  return std::sqrt(2.0 * residual_energy /
                   (p.switched_capacitance * p.training_cycles(local_iters)));
}

inline double cpu_residual_energy(const ClientProfile& p, double uplink_rate, double f_bloc,
                                  double d_bloc) {
  return p.energy_budget - upload_energy(p, uplink_rate) - mining_energy(p, d_bloc, f_bloc);
}

/// Delay-minimising CPU frequency under the per-round energy budget, clamped
/// to `bounds`. Empty when the client cannot train within its budget, either
/// because no energy is left or because even `bounds.min` would overspend it.
inline std::optional<double> solve_cpu_freq(const ClientProfile& p, double uplink_rate, double f_bloc,
                                            double d_bloc, unsigned local_iters,
                                            const FreqBounds& bounds = {}) {
  if (local_iters == 0) throw DomainError("local iterations must be at least 1");
  if (!(uplink_rate > 0.0)) return std::nullopt;
  const auto f = tight_cpu_freq(p, local_iters, cpu_residual_energy(p, uplink_rate, f_bloc, d_bloc));
  if (!f || *f < bounds.min) return std::nullopt;
  return std::min(*f, bounds.max);
}

/// Positive root of f³ − M·f − M·N = 0 for M > 0, N ≥ 0.
///
/// Cardano in the scaled variable x = f/√M, where the equation reads
/// x³ − x − q = 0 with q = N/√M and the discriminant (q/2)² − 1/27 is the
/// usual (MN/2)² − (M/3)³ divided by M³. A negative discriminant takes the
/// largest trigonometric root. Two Newton steps polish the result.
inline double depressed_cubic_root(double m, double n) {
  if (!(m > 0.0)) throw DomainError("cubic coefficient M must be positive");
  if (!(n >= 0.0)) throw DomainError("cubic coefficient N must be non-negative");
  const double scale = std::sqrt(m);
  if (n == 0.0) return scale;
  const double q = n / scale;
  const double half_q = q / 2.0;
  const double disc = half_q * half_q - 1.0 / 27.0;
  double x;
  if (disc >= 0.0) {
    const double s = std::sqrt(disc);
    x = std::cbrt(half_q + s) + std::cbrt(half_q - s);
  } else {
    const double c = std::clamp(half_q * std::sqrt(27.0), -1.0, 1.0);
    x = 2.0 / std::sqrt(3.0) * std::cos(std::acos(c) / 3.0);
  }
  for (int k = 0; k < 2; ++k) {
    const double g = x * x * x - x - q;
    const double dg = 3.0 * x * x - 1.0;
    if (dg > 0.0) x -= g / dg;
  }
  if (!(x > 0.0)) throw std::logic_error("depressed cubic produced no positive root");
  return scale * x;
}

/// M = 2·residual / (χ_i·(−α·ln(1 − p_0))).
inline double mining_cubic_coeff(const ClientProfile& p, const MiningParams& mp, double residual_energy) {
  return 2.0 * residual_energy / (p.switched_capacitance * mp.quantile_cycles());
}

/// Mining frequency that spends exactly `residual_energy` on mining while the
/// other clients contribute `others_sum` Hz, before clamping.
inline std::optional<double> tight_mining_freq(const ClientProfile& p, const MiningParams& mp,
                                               double residual_energy, double others_sum) {
  if (!(residual_energy > 0.0)) return std::nullopt;
  if (others_sum < 0.0) throw DomainError("other clients' mining frequency sum must be non-negative");
  return depressed_cubic_root(mining_cubic_coeff(p, mp, residual_energy), others_sum);
}

inline double mining_residual_energy(const ClientProfile& p, double uplink_rate, double f_cpu,
                                     unsigned local_iters) {
  return p.energy_budget - upload_energy(p, uplink_rate) - compute_energy(p, local_iters, f_cpu);
}

inline std::optional<double> solve_mining_freq(const ClientProfile& p, double uplink_rate, double f_cpu,
                                               double others_sum, const MiningParams& mp,
                                               unsigned local_iters, const FreqBounds& bounds = {}) {
  if (!(uplink_rate > 0.0)) return std::nullopt;
  const auto f = tight_mining_freq(p, mp, mining_residual_energy(p, uplink_rate, f_cpu, local_iters), others_sum);
  if (!f) return std::nullopt;
  return bounds.clamp(*f);
}

// ---------------------------------------------------------------------------
// Client selection over delay-sorted prefixes
// ---------------------------------------------------------------------------

struct Candidate {
  std::size_t client = 0;
  double delay = 0.0;  // d_up + d_cp
};

struct Selection {
  std::vector<std::size_t> clients;  // ascending ids
  double objective = 0.0;
};

/// Sorts candidates by delay (ties: larger backlog, then lower id) and keeps
/// the prefix of size m..|candidates| with the smallest drift-plus-penalty.
/// Equal objectives resolve to the smaller prefix.
inline Selection select_clients(std::span<const Candidate> candidates, const QueueState& q,
                                std::span<const double> beta, double v, double d_bloc,
                                std::size_t min_clients, std::size_t max_clients) {
  if (candidates.size() < min_clients || candidates.empty())
    throw RoundInfeasible(0, "only " + std::to_string(candidates.size()) + " feasible clients, need " +
                                 std::to_string(min_clients));
  std::vector<Candidate> order(candidates.begin(), candidates.end());
  std::sort(order.begin(), order.end(), [&](const Candidate& a, const Candidate& b) {
    if (a.delay != b.delay) return a.delay < b.delay;
    const double za = q.backlog[a.client], zb = q.backlog[b.client];
    if (za != zb) return za > zb;
    return a.client < b.client;
  });

  const std::size_t n = q.backlog.size();
  const std::size_t largest = std::min(order.size(), max_clients);
  // Queue term with nobody selected; each member then subtracts its backlog.
  double base_drift = 0.0;
  for (std::size_t i = 0; i < n; ++i) base_drift += q.backlog[i] * beta[i];

  std::size_t best_size = 0;
  double best = 0.0;
  double drift = base_drift;
  double worst_delay = 0.0;
  for (std::size_t k = 1; k <= largest; ++k) {
    drift -= q.backlog[order[k - 1].client];
    worst_delay = std::max(worst_delay, order[k - 1].delay);
    if (k < std::max<std::size_t>(min_clients, 1)) continue;
    const double value = drift + v * (worst_delay + d_bloc);
    if (best_size == 0 || value < best) {
      best = value;
      best_size = k;
    }
  }
  Selection s;
  s.objective = best;
  for (std::size_t k = 0; k < best_size; ++k) s.clients.push_back(order[k].client);
  std::sort(s.clients.begin(), s.clients.end());
  return s;
}

// ---------------------------------------------------------------------------
// Round decisions
// ---------------------------------------------------------------------------

struct SchedulerConfig {
  double tradeoff_v = 10.0;
  std::size_t min_clients = 3;
  std::size_t max_clients = 8;
  FreqBounds freq_bounds{};
  std::size_t inner_max_iters = 50;
  double inner_tolerance = 1e-6;
  unsigned local_iters = 20;

  void validate(std::size_t num_clients) const {
    if (min_clients == 0 || min_clients > max_clients || max_clients > num_clients)
      throw DomainError("need 0 < min_clients <= max_clients <= number of clients");
    if (!(freq_bounds.min > 0.0 && freq_bounds.min <= freq_bounds.max))
      throw DomainError("frequency bounds must satisfy 0 < f_min <= f_max");
    if (tradeoff_v < 0.0) throw DomainError("V must be non-negative");
    if (inner_max_iters == 0) throw DomainError("inner loop needs at least one iteration");
    if (local_iters == 0) throw DomainError("local iterations must be at least 1");
  }
};

struct RoundDecision {
  std::vector<std::size_t> selected;  // ascending ids
  std::vector<double> cpu_freq;
  std::vector<double> mining_freq;
  double objective_value = 0.0;
  std::size_t inner_iterations = 0;
  bool converged = true;
};

/// Everything one round of the scheduler reads. Spans must outlive the call.
struct RoundInputs {
  std::span<const ClientProfile> profiles;
  const ChannelRealization* channel = nullptr;
  const QueueState* queues = nullptr;
  std::span<const double> beta;
  MiningParams mining{};
  SchedulerConfig config{};
  std::vector<double> cpu_freq;     // carried from the previous round
  std::vector<double> mining_freq;  // carried from the previous round
};

struct ClientEnergy {
  double upload = 0.0;
  double compute = 0.0;
  double mining = 0.0;

  double total() const { return round_energy(upload, compute, mining); }
};

/// Per-client delays and energies implied by a decision (deterministic block time).
struct RoundCost {
  double d_bloc = 0.0;
  std::vector<ClientDelay> delays;   // zero for unselected clients
  std::vector<ClientEnergy> energy;  // unselected clients pay mining only

  double train_delay(std::span<const std::size_t> selected) const {
    std::vector<ClientDelay> sel;
    for (auto i : selected) sel.push_back(delays[i]);
    return bdfl::round_delay(sel, 0.0);
  }
  double round_delay(std::span<const std::size_t> selected) const { return train_delay(selected) + d_bloc; }
};

inline RoundCost evaluate_round(std::span<const ClientProfile> profiles, const ChannelRealization& ch,
                                unsigned local_iters,
                                std::span<const std::size_t> selected, std::span<const double> cpu_freq,
                                std::span<const double> mining_freq, double d_bloc) {
  const std::size_t n = profiles.size();
  RoundCost cost;
  cost.d_bloc = d_bloc;
  cost.delays.resize(n);
  cost.energy.resize(n);
  const auto mask = selection_mask(selected, n);
  for (std::size_t i = 0; i < n; ++i) {
    cost.delays[i].client = i;
    cost.energy[i].mining = mining_energy(profiles[i], d_bloc, mining_freq[i]);
    if (!mask[i]) continue;
    cost.delays[i].upload = upload_delay(profiles[i], ch.uplink_rate[i]);
    cost.delays[i].compute = compute_delay(profiles[i], local_iters, cpu_freq[i]);
    cost.energy[i].upload = upload_energy(profiles[i], ch.uplink_rate[i]);
    cost.energy[i].compute = compute_energy(profiles[i], local_iters, cpu_freq[i]);
  }
  return cost;
}

struct ConstraintReport {
  double algebraic_connectivity = 0.0;
  bool connected = false;
  bool size_ok = false;
  std::vector<std::size_t> over_budget;  // clients with E_i > E_max + tolerance

  bool ok() const { return connected && size_ok && over_budget.empty(); }
};

/// Checks connectivity, group size and per-client energy budgets of a decision.
inline ConstraintReport verify_decision(std::span<const ClientProfile> profiles, const RoundCost& cost,
                                        std::span<const std::size_t> selected, std::size_t min_clients,
                                        std::size_t max_clients, double energy_tolerance = 1e-9) {
  ConstraintReport r;
  const auto g = induced_topology(std::vector<std::size_t>(selected.begin(), selected.end()), profiles.size());
  r.algebraic_connectivity = algebraic_connectivity(g);
  r.connected = profiles.size() == 1 || r.algebraic_connectivity > kConnectivityTolerance;
  r.size_ok = selected.size() >= min_clients && selected.size() <= max_clients;
  for (std::size_t i = 0; i < profiles.size(); ++i)
    if (cost.energy[i].total() > profiles[i].energy_budget + energy_tolerance) r.over_budget.push_back(i);
  return r;
}

namespace detail {

inline double max_relative_change(std::span<const double> a, std::span<const double> b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double denom = std::max(std::abs(a[i]), std::abs(b[i]));
    if (denom > 0.0) worst = std::max(worst, std::abs(a[i] - b[i]) / denom);
  }
  return worst;
}

struct FreqState {
  std::vector<double> cpu;
  std::vector<double> mining;
  std::vector<bool> trainable;
};

// One P4 pass: CPU frequency for every client given current mining state.
// Returns the mining energy each client was charged, which P5 reuses as its
// budget when the CPU frequency ended up tight.
inline std::vector<double> solve_all_cpu(const RoundInputs& in, FreqState& s, std::vector<bool>& tight) {
  const auto& cfg = in.config;
  const std::size_t n = in.profiles.size();
  const double d_bloc = mining_delay(in.mining, s.mining);
  std::vector<double> charged(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& p = in.profiles[i];
    tight[i] = false;
    s.trainable[i] = false;
    charged[i] = mining_energy(p, d_bloc, s.mining[i]);
    const double rate = in.channel->uplink_rate[i];
    if (!(rate > 0.0)) continue;
    const auto raw = tight_cpu_freq(p, cfg.local_iters, cpu_residual_energy(p, rate, s.mining[i], d_bloc));
    if (!raw || *raw < cfg.freq_bounds.min) continue;
    s.trainable[i] = true;
    tight[i] = *raw <= cfg.freq_bounds.max;
    s.cpu[i] = std::min(*raw, cfg.freq_bounds.max);
  }
  return charged;
}

// One P5 pass, Gauss-Seidel over clients.
inline void solve_all_mining(const RoundInputs& in, FreqState& s, const std::vector<bool>& tight,
                             const std::vector<double>& charged) {
  const auto& cfg = in.config;
  const std::size_t n = in.profiles.size();
  double total = std::accumulate(s.mining.begin(), s.mining.end(), 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& p = in.profiles[i];
    double residual;
    if (!s.trainable[i]) {
      residual = p.energy_budget;  // mines without training this round
    } else if (tight[i]) {
      // E_max − E_up − E_cp equals the mining charge exactly here; taking it
      // directly avoids cancelling two nearly equal energies.
      residual = charged[i];
    } else {
      residual = mining_residual_energy(p, in.channel->uplink_rate[i], s.cpu[i], cfg.local_iters);
    }
    const double others = std::max(total - s.mining[i], 0.0);
    const auto f = tight_mining_freq(p, in.mining, residual, others);
    if (!f) continue;
    const double next = cfg.freq_bounds.clamp(*f);
    total += next - s.mining[i];
    s.mining[i] = next;
  }
}

inline std::vector<Candidate> trainable_candidates(const RoundInputs& in, const FreqState& s) {
  std::vector<Candidate> c;
  for (std::size_t i = 0; i < in.profiles.size(); ++i) {
    if (!s.trainable[i]) continue;
    const auto& p = in.profiles[i];
    c.push_back({i, upload_delay(p, in.channel->uplink_rate[i]) +
                        compute_delay(p, in.config.local_iters, s.cpu[i])});
  }
  return c;
}

}  // namespace detail

/// One round of the alternating CPU / mining / selection optimisation.
/// Starts from every client selected and the carried frequencies, repeats
/// until the selected set and all frequencies stop moving or the iteration
/// cap is hit, then re-solves CPU frequencies once more against the final
/// mining frequencies so every energy budget holds exactly.
inline RoundDecision drc_bdfl_round(const RoundInputs& in) {
  const std::size_t n = in.profiles.size();
  const auto& cfg = in.config;
  cfg.validate(n);
  if (in.channel == nullptr || in.queues == nullptr) throw DomainError("round inputs need channel and queues");
  if (in.cpu_freq.size() != n || in.mining_freq.size() != n || in.beta.size() != n)
    throw DomainError("per-client vectors must match the client count");

  detail::FreqState s{in.cpu_freq, in.mining_freq, std::vector<bool>(n, false)};
  std::vector<bool> tight(n, false);
  std::vector<std::size_t> current(n);
  std::iota(current.begin(), current.end(), std::size_t{0});

  RoundDecision d;
  d.converged = false;
  Selection sel;
  for (std::size_t it = 1; it <= cfg.inner_max_iters; ++it) {
    const auto prev_cpu = s.cpu;
    const auto prev_mining = s.mining;
    const auto charged = detail::solve_all_cpu(in, s, tight);
    detail::solve_all_mining(in, s, tight, charged);
    const auto cands = detail::trainable_candidates(in, s);
    sel = select_clients(cands, *in.queues, in.beta, cfg.tradeoff_v, mining_delay(in.mining, s.mining),
                         cfg.min_clients, cfg.max_clients);
    d.inner_iterations = it;
    const double moved = std::max(detail::max_relative_change(prev_cpu, s.cpu),
                                  detail::max_relative_change(prev_mining, s.mining));
    const bool same_set = sel.clients == current;
    current = sel.clients;
    if (same_set && moved < cfg.inner_tolerance) {
      d.converged = true;
      break;
    }
  }

  // Final CPU pass against the settled mining frequencies.
  detail::solve_all_cpu(in, s, tight);
  const auto cands = detail::trainable_candidates(in, s);
  const double d_bloc = mining_delay(in.mining, s.mining);
  sel = select_clients(cands, *in.queues, in.beta, cfg.tradeoff_v, d_bloc, cfg.min_clients, cfg.max_clients);
  if (sel.clients != current) d.converged = false;

  d.selected = sel.clients;
  d.objective_value = sel.objective;
  d.cpu_freq = std::move(s.cpu);
  d.mining_freq = std::move(s.mining);
  return d;
}

// ---------------------------------------------------------------------------
// Baselines
// ---------------------------------------------------------------------------

inline void check_group_size(std::size_t k, std::size_t num_clients) {
  if (k == 0 || k > num_clients) throw DomainError("baseline group size must lie in [1, U]");
}

inline std::vector<std::size_t> baseline_random(Rng& rng, std::size_t k, std::size_t num_clients) {
  check_group_size(k, num_clients);
  std::vector<std::size_t> all(num_clients), out;
  std::iota(all.begin(), all.end(), std::size_t{0});
  std::sample(all.begin(), all.end(), std::back_inserter(out), static_cast<std::ptrdiff_t>(k), rng);
  return out;
}

inline std::vector<std::size_t> baseline_round_robin(std::size_t round, std::size_t k, std::size_t num_clients) {
  check_group_size(k, num_clients);
  std::vector<std::size_t> out;
  for (std::size_t j = 0; j < k; ++j) out.push_back((round * k + j) % num_clients);
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

/// The k clients with the largest channel gain, in descending-gain order.
inline std::vector<std::size_t> baseline_channel_best(const ChannelRealization& ch, std::size_t k) {
  const std::size_t n = ch.channel_gain.size();
  check_group_size(k, n);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return ch.channel_gain[a] > ch.channel_gain[b]; });
  order.resize(k);
  return order;
}

enum class SchedulerKind { drc_bdfl, random, round_robin, channel_best };

inline std::string to_string(SchedulerKind k) {
  switch (k) {
    case SchedulerKind::drc_bdfl: return "drc_bdfl";
    case SchedulerKind::random: return "random";
    case SchedulerKind::round_robin: return "round_robin";
    case SchedulerKind::channel_best: return "channel_best";
  }
  return "unknown";
}

inline std::optional<SchedulerKind> parse_scheduler(const std::string& s) {
  for (auto k : {SchedulerKind::drc_bdfl, SchedulerKind::random, SchedulerKind::round_robin,
                 SchedulerKind::channel_best})
    if (to_string(k) == s) return k;
  return std::nullopt;
}

/// Baseline decision at fixed frequencies: pick k clients by the baseline
/// rule, then drop any that cannot upload or would exceed their budget.
inline RoundDecision baseline_round(SchedulerKind kind, std::size_t round, std::size_t k,
                                    std::span<const ClientProfile> profiles, const ChannelRealization& ch,
                                    const MiningParams& mp, unsigned local_iters, double f_cpu,
                                    double f_bloc, Rng& rng) {
  const std::size_t n = profiles.size();
  std::vector<std::size_t> pick;
  switch (kind) {
    case SchedulerKind::random: pick = baseline_random(rng, k, n); break;
    case SchedulerKind::round_robin: pick = baseline_round_robin(round, k, n); break;
    case SchedulerKind::channel_best: pick = baseline_channel_best(ch, k); break;
    case SchedulerKind::drc_bdfl: throw DomainError("drc_bdfl is not a baseline");
  }
  RoundDecision d;
  d.cpu_freq.assign(n, f_cpu);
  d.mining_freq.assign(n, f_bloc);
  d.inner_iterations = 0;
  const double d_bloc = mining_delay(mp, d.mining_freq);
  for (auto i : pick) {
    const auto& p = profiles[i];
    if (!ch.usable(i)) continue;
    const double e = upload_energy(p, ch.uplink_rate[i]) + compute_energy(p, local_iters, f_cpu) +
                     mining_energy(p, d_bloc, f_bloc);
    if (e <= p.energy_budget) d.selected.push_back(i);
  }
  std::sort(d.selected.begin(), d.selected.end());
  return d;
}

}  // namespace bdfl
