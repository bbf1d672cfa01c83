#pragma once

#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>

#include <json.hpp>

#include "bdfl/errors.hpp"
#include "bdfl/scheduler.hpp"

namespace bdfl {

enum class MiningMode { deterministic, stochastic };

/// Simulation parameters. Defaults:
/// 8 clients, 100 rounds, H = 20, f = 1 GHz and f_bloc = 1.5 GHz initially.
struct SimConfig {
  std::size_t clients = 8;
  std::size_t rounds = 100;
  std::size_t min_clients = 3;
  double tradeoff_v = 10.0;
  double energy_budget = 0.4;

  // channel
  double bandwidth = 180e3;
  double noise_psd = 1e-16;
  double path_loss_const = 1e-3;
  double ref_distance = 1.0;
  double path_loss_exponent = 2.0;
  double distance = 200.0;
  double tx_power = 0.1;
  bool fading = true;

  // computation and learning
  double cycles_per_sample = 5e3;
  double switched_capacitance = 1e-28;
  std::size_t samples_per_client = 3000;
  double model_bits = 1e6;
  unsigned local_iters = 20;
  double learning_rate = 0.01;
  std::size_t batch_size = 32;
  double l2 = 1e-3;

  // synthetic data
  std::size_t num_classes = 4;
  std::size_t feature_dim = 16;
  double mean_spread = 0.5;
  double dirichlet_alpha = 0.5;
  double beta_min = 0.3;
  double beta_max = 0.9;
  bool beta_inverted = false;

  // mining
  double difficulty = 3e7;
  double quantile_prob = 1e-10;
  MiningMode mining_mode = MiningMode::deterministic;

  // frequencies
  double f_init = 1e9;
  double f_bloc_init = 1.5e9;
  double f_min = 0.1e9;
  double f_max = 5e9;
  std::size_t inner_max_iters = 50;
  double inner_tolerance = 1e-6;

  SchedulerKind scheduler = SchedulerKind::drc_bdfl;
  // Group size for a stand-alone baseline run; 0 means min_clients.
  std::size_t baseline_clients = 0;
  std::uint64_t seed = 1;

  ChannelParams channel_params() const {
    return {bandwidth, noise_psd, path_loss_const, ref_distance, path_loss_exponent, fading};
  }
  MiningParams mining_params() const { return {difficulty, quantile_prob}; }

  SchedulerConfig scheduler_config() const {
    SchedulerConfig s;
    s.tradeoff_v = tradeoff_v;
    s.min_clients = min_clients;
    s.max_clients = clients;
    s.freq_bounds = {f_min, f_max};
    s.inner_max_iters = inner_max_iters;
    s.inner_tolerance = inner_tolerance;
    s.local_iters = local_iters;
    return s;
  }

  void validate() const {
    auto require = [](bool ok, const char* what) {
      if (!ok) throw ConfigError(std::string("invalid config: ") + what);
    };
    require(clients >= 1, "clients must be >= 1");
    require(min_clients >= 1 && min_clients <= clients, "min_clients must lie in [1, clients]");
    require(tradeoff_v >= 0, "tradeoff_v must be >= 0");
    require(energy_budget > 0, "energy_budget must be > 0");
    require(bandwidth > 0 && noise_psd > 0 && path_loss_const > 0 && ref_distance > 0 &&
                path_loss_exponent > 0 && distance > 0,
            "channel parameters must be > 0");
    require(tx_power >= 0, "tx_power must be >= 0");
    require(cycles_per_sample > 0 && switched_capacitance > 0 && model_bits >= 0, "compute parameters must be > 0");
    require(samples_per_client >= 1, "samples_per_client must be >= 1");
    require(local_iters >= 1, "local_iters must be >= 1");
    require(learning_rate > 0, "learning_rate must be > 0");
    require(l2 >= 0, "l2 must be >= 0");
    require(num_classes >= 1 && feature_dim >= 1, "num_classes and feature_dim must be >= 1");
    require(mean_spread >= 0, "mean_spread must be >= 0");
    require(dirichlet_alpha > 0, "dirichlet_alpha must be > 0");
    require(beta_min > 0 && beta_min <= beta_max && beta_max <= 1, "need 0 < beta_min <= beta_max <= 1");
    require(difficulty > 0, "difficulty must be > 0");
    require(quantile_prob > 0 && quantile_prob < 1, "quantile_prob must lie in (0, 1)");
    require(f_min > 0 && f_min <= f_max, "need 0 < f_min <= f_max");
    require(f_init > 0 && f_bloc_init > 0, "initial frequencies must be > 0");
    require(inner_max_iters >= 1, "inner_max_iters must be >= 1");
    require(inner_tolerance > 0, "inner_tolerance must be > 0");
    require(baseline_clients <= clients, "baseline_clients must be <= clients");
  }
};

inline std::string to_string(MiningMode m) { return m == MiningMode::deterministic ? "deterministic" : "stochastic"; }

namespace detail {

using Setter = std::function<void(SimConfig&, const nlohmann::json&)>;

template <typename T>
Setter field(T SimConfig::*member) {
  return [member](SimConfig& c, const nlohmann::json& v) { c.*member = v.get<T>(); };
}

inline const std::map<std::string, Setter>& config_fields() {
  static const std::map<std::string, Setter> fields = {
      {"clients", field(&SimConfig::clients)},
      {"rounds", field(&SimConfig::rounds)},
      {"min_clients", field(&SimConfig::min_clients)},
      {"tradeoff_v", field(&SimConfig::tradeoff_v)},
      {"energy_budget", field(&SimConfig::energy_budget)},
      {"bandwidth", field(&SimConfig::bandwidth)},
      {"noise_psd", field(&SimConfig::noise_psd)},
      {"path_loss_const", field(&SimConfig::path_loss_const)},
      {"ref_distance", field(&SimConfig::ref_distance)},
      {"path_loss_exponent", field(&SimConfig::path_loss_exponent)},
      {"distance", field(&SimConfig::distance)},
      {"tx_power", field(&SimConfig::tx_power)},
      {"fading", field(&SimConfig::fading)},
      {"cycles_per_sample", field(&SimConfig::cycles_per_sample)},
      {"switched_capacitance", field(&SimConfig::switched_capacitance)},
      {"samples_per_client", field(&SimConfig::samples_per_client)},
      {"model_bits", field(&SimConfig::model_bits)},
      {"local_iters", field(&SimConfig::local_iters)},
      {"learning_rate", field(&SimConfig::learning_rate)},
      {"batch_size", field(&SimConfig::batch_size)},
      {"l2", field(&SimConfig::l2)},
      {"num_classes", field(&SimConfig::num_classes)},
      {"feature_dim", field(&SimConfig::feature_dim)},
      {"mean_spread", field(&SimConfig::mean_spread)},
      {"dirichlet_alpha", field(&SimConfig::dirichlet_alpha)},
      {"beta_min", field(&SimConfig::beta_min)},
      {"beta_max", field(&SimConfig::beta_max)},
      {"beta_inverted", field(&SimConfig::beta_inverted)},
      {"difficulty", field(&SimConfig::difficulty)},
      {"quantile_prob", field(&SimConfig::quantile_prob)},
      {"f_init", field(&SimConfig::f_init)},
      {"f_bloc_init", field(&SimConfig::f_bloc_init)},
      {"f_min", field(&SimConfig::f_min)},
      {"f_max", field(&SimConfig::f_max)},
      {"inner_max_iters", field(&SimConfig::inner_max_iters)},
      {"inner_tolerance", field(&SimConfig::inner_tolerance)},
      {"baseline_clients", field(&SimConfig::baseline_clients)},
      {"seed", field(&SimConfig::seed)},
      {"scheduler",
       [](SimConfig& c, const nlohmann::json& v) {
         const auto name = v.get<std::string>();
         const auto k = parse_scheduler(name);
         if (!k) throw ConfigError("unknown scheduler '" + name + "'");
         c.scheduler = *k;
       }},
      {"mining_mode",
       [](SimConfig& c, const nlohmann::json& v) {
         const auto name = v.get<std::string>();
         if (name == "deterministic") c.mining_mode = MiningMode::deterministic;
         else if (name == "stochastic") c.mining_mode = MiningMode::stochastic;
         else throw ConfigError("unknown mining_mode '" + name + "'");
       }},
  };
  return fields;
}

}  // namespace detail

/// Overlays a JSON object on the defaults. Unknown keys and type mismatches
/// are errors.
inline SimConfig parse_config(const nlohmann::json& doc, SimConfig base = {}) {
  if (!doc.is_object()) throw ConfigError("config must be a JSON object");
  const auto& fields = detail::config_fields();
  for (const auto& [key, value] : doc.items()) {
    const auto it = fields.find(key);
    if (it == fields.end()) throw ConfigError("unknown config key '" + key + "'");
    try {
      it->second(base, value);
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("config key '" + key + "': " + e.what());
    }
  }
  base.validate();
  return base;
}

inline SimConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  try {
    return parse_config(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("cannot parse " + path + ": " + e.what());
  }
}

inline nlohmann::json to_json(const SimConfig& c) {
  return {
      {"clients", c.clients},
      {"rounds", c.rounds},
      {"min_clients", c.min_clients},
      {"tradeoff_v", c.tradeoff_v},
      {"energy_budget", c.energy_budget},
      {"bandwidth", c.bandwidth},
      {"noise_psd", c.noise_psd},
      {"path_loss_const", c.path_loss_const},
      {"ref_distance", c.ref_distance},
      {"path_loss_exponent", c.path_loss_exponent},
      {"distance", c.distance},
      {"tx_power", c.tx_power},
      {"fading", c.fading},
      {"cycles_per_sample", c.cycles_per_sample},
      {"switched_capacitance", c.switched_capacitance},
      {"samples_per_client", c.samples_per_client},
      {"model_bits", c.model_bits},
      {"local_iters", c.local_iters},
      {"learning_rate", c.learning_rate},
      {"batch_size", c.batch_size},
      {"l2", c.l2},
      {"num_classes", c.num_classes},
      {"feature_dim", c.feature_dim},
      {"mean_spread", c.mean_spread},
      {"dirichlet_alpha", c.dirichlet_alpha},
      {"beta_min", c.beta_min},
      {"beta_max", c.beta_max},
      {"beta_inverted", c.beta_inverted},
      {"difficulty", c.difficulty},
      {"quantile_prob", c.quantile_prob},
      {"mining_mode", to_string(c.mining_mode)},
      {"f_init", c.f_init},
      {"f_bloc_init", c.f_bloc_init},
      {"f_min", c.f_min},
      {"f_max", c.f_max},
      {"inner_max_iters", c.inner_max_iters},
      {"inner_tolerance", c.inner_tolerance},
      {"scheduler", to_string(c.scheduler)},
      {"baseline_clients", c.baseline_clients},
      {"seed", c.seed},
  };
}

}  // namespace bdfl
