#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <random>
#include <span>
#include <vector>

#include "bdfl/errors.hpp"
#include "bdfl/random.hpp"

namespace bdfl {

/// Static per-client parameters of the computation, uplink and energy models.
struct ClientProfile {
  std::size_t id = 0;
  double dataset_size = 3e3;           // |D_i|, samples
  double cycles_per_sample = 5e3;      // CPU cycles per sample per iteration
  double switched_capacitance = 1e-28; // χ_i
  double model_bits = 1e6;
  double distance = 200.0;             // metres to the AP
  double tx_power = 0.1;               // W
  double energy_budget = 0.4;          // J per round
  double participation_rate = 1.0;     // β_i

  void validate() const {
    if (dataset_size < 1 || cycles_per_sample <= 0 || switched_capacitance <= 0 ||
        model_bits < 0 || distance <= 0 || tx_power < 0 || energy_budget <= 0)
      throw DomainError("client profile has a non-positive physical coefficient");
    if (!(participation_rate > 0.0 && participation_rate <= 1.0))
      throw DomainError("participation rate must lie in (0, 1]");
  }

  /// φ_i·H·|D_i|: CPU cycles of one round of local training.
  double training_cycles(unsigned local_iters) const {
    return cycles_per_sample * static_cast<double>(local_iters) * dataset_size;
  }
};

struct ChannelParams {
  double bandwidth = 180e3;         // Hz
  double noise_psd = 1e-16;         // W/Hz
  double path_loss_const = 1e-3;    // h_0
  double ref_distance = 1.0;        // d_0, m
  double path_loss_exponent = 2.0;  // v
  bool fading = true;               // unit-mean exponential power gain; off means ρ = 1
};

struct ChannelRealization {
  std::vector<double> small_scale_gain;
  std::vector<double> channel_gain;
  std::vector<double> uplink_rate;

  bool usable(std::size_t i) const { return uplink_rate[i] > 0.0; }
};

struct MiningParams {
  double difficulty = 3e7;      // α, cycles
  double quantile_prob = 1e-10; // p_0

  /// −α·ln(1 − p_0); positive for p_0 in (0, 1).
  double quantile_cycles() const { return -difficulty * std::log1p(-quantile_prob); }
};

namespace detail {
inline void check_training_args(unsigned local_iters, double cpu_freq) {
  if (local_iters == 0) throw DomainError("local iterations must be at least 1");
  if (!(cpu_freq > 0.0)) throw DomainError("CPU frequency must be positive");
}
}  // namespace detail

inline double compute_delay(const ClientProfile& p, unsigned local_iters, double cpu_freq) {
  detail::check_training_args(local_iters, cpu_freq);
  return p.training_cycles(local_iters) / cpu_freq;
}

inline double compute_energy(const ClientProfile& p, unsigned local_iters, double cpu_freq) {
  detail::check_training_args(local_iters, cpu_freq);
  return p.switched_capacitance * p.training_cycles(local_iters) * cpu_freq * cpu_freq / 2.0;
}

/// Large-scale gain h_0·ρ·(d_0/d)^v.
inline double channel_gain(const ChannelParams& c, double small_scale, double distance) {
  return c.path_loss_const * small_scale * std::pow(c.ref_distance / distance, c.path_loss_exponent);
}

/// Shannon uplink rate B·log2(1 + P·h/(B·N_0)).
inline double uplink_rate(const ChannelParams& c, double tx_power, double gain) {
  return c.bandwidth * std::log2(1.0 + tx_power * gain / (c.bandwidth * c.noise_psd));
}

/// Realization from explicit small-scale gains (tests, replay).
inline ChannelRealization make_channel(const ChannelParams& params,
                                       std::span<const ClientProfile> profiles,
                                       std::vector<double> small_scale) {
  ChannelRealization ch;
  ch.small_scale_gain = std::move(small_scale);
  ch.channel_gain.resize(profiles.size());
  ch.uplink_rate.resize(profiles.size());
  for (std::size_t i = 0; i < profiles.size(); ++i) {
    ch.channel_gain[i] = channel_gain(params, ch.small_scale_gain[i], profiles[i].distance);
    ch.uplink_rate[i] = uplink_rate(params, profiles[i].tx_power, ch.channel_gain[i]);
  }
  return ch;
}

inline ChannelRealization draw_channel(const ChannelParams& params,
                                       std::span<const ClientProfile> profiles, Rng& rng) {
  std::vector<double> rho(profiles.size(), 1.0);
  if (params.fading) {
    std::exponential_distribution<double> exp1(1.0);
    for (auto& r : rho) r = exp1(rng);
  }
  return make_channel(params, profiles, std::move(rho));
}

inline double upload_delay(const ClientProfile& p, double rate) {
  if (!(rate > 0.0)) throw UnschedulableClient("client " + std::to_string(p.id) + " has zero uplink rate");
  return p.model_bits / rate;
}

inline double upload_energy(const ClientProfile& p, double rate) {
  return p.tx_power * upload_delay(p, rate);
}

/// Mining time at quantile p_0 of the exponential block-time law.
inline double mining_delay(const MiningParams& mp, std::span<const double> mining_freqs) {
  double total = 0.0;
  for (double f : mining_freqs) total += f;
  if (!(total > 0.0)) throw DomainError("aggregate mining frequency must be positive");
  return mp.quantile_cycles() / total;
}

/// Mean block time θ = α / Σf.
inline double mean_block_time(const MiningParams& mp, std::span<const double> mining_freqs) {
  double total = 0.0;
  for (double f : mining_freqs) total += f;
  if (!(total > 0.0)) throw DomainError("aggregate mining frequency must be positive");
  return mp.difficulty / total;
}

inline double sample_mining_delay(const MiningParams& mp, std::span<const double> mining_freqs,
                                  Rng& rng) {
  std::exponential_distribution<double> dist(1.0 / mean_block_time(mp, mining_freqs));
  return dist(rng);
}

inline double mining_energy(const ClientProfile& p, double d_bloc, double f_bloc) {
  if (f_bloc < 0.0 || d_bloc < 0.0) throw DomainError("mining delay and frequency must be non-negative");
  return p.switched_capacitance * d_bloc * f_bloc * f_bloc * f_bloc / 2.0;
}

struct ClientDelay {
  std::size_t client = 0;
  double upload = 0.0;
  double compute = 0.0;

  double total() const { return upload + compute; }
};

/// max over the selected clients of (d_up + d_cp), plus the block time.
inline double round_delay(std::span<const ClientDelay> selected, double d_bloc) {
  if (selected.empty()) throw DomainError("round delay needs at least one selected client");
  double worst = 0.0;
  for (const auto& c : selected) worst = std::max(worst, c.total());
  return worst + d_bloc;
}

inline double round_energy(double e_up, double e_cp, double e_bloc) {
  if (e_up < 0.0 || e_cp < 0.0 || e_bloc < 0.0) throw DomainError("energy components must be non-negative");
  return e_up + e_cp + e_bloc;
}

}  // namespace bdfl
