#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <iostream>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "bdfl/config.hpp"
#include "bdfl/data_model.hpp"
#include "bdfl/errors.hpp"
#include "bdfl/fl_engine.hpp"
#include "bdfl/phys_models.hpp"
#include "bdfl/random.hpp"
#include "bdfl/scheduler.hpp"
#include "bdfl/topology.hpp"

namespace bdfl {

/// Everything recorded about one communication round.
struct RoundMetrics {
  std::size_t round = 0;  // 1-based
  SchedulerKind scheduler = SchedulerKind::drc_bdfl;
  std::uint64_t seed = 0;
  double v = 0.0;
  std::vector<std::size_t> selected;

  // per client
  std::vector<double> d_cp, d_up, e_cp, e_up, e_bloc;
  std::vector<double> queue;  // backlog after this round's update
  std::vector<double> cpu_freq, mining_freq;
  std::vector<double> cum_avg_energy;  // mean E_i over the rounds client i trained

  double train_delay = 0.0;  // max over selected of d_up + d_cp
  double d_bloc = 0.0;
  double round_delay = 0.0;
  double cum_avg_delay = 0.0;
  double loss = 0.0;
  double accuracy = 0.0;
  double grad_sq_norm = 0.0;  // ‖∇F(w(t+1))‖² on the union of client data
  std::size_t inner_iters = 0;
  bool converged = true;
  std::size_t miner = 0;

  double energy(std::size_t i) const { return e_up[i] + e_cp[i] + e_bloc[i]; }
};

/// Clients, their data and participation rates, built from a config.
struct Population {
  std::vector<ClientProfile> profiles;
  std::vector<LabeledDataset> data;
  LabeledDataset train_union;
  LabeledDataset test;
  std::vector<double> beta;
  std::vector<std::string> warnings;

  std::vector<double> dataset_sizes() const {
    std::vector<double> s;
    for (const auto& p : profiles) s.push_back(p.dataset_size);
    return s;
  }
};

inline Population build_population(const SimConfig& cfg) {
  Population pop;
  Rng data_rng = make_stream(cfg.seed, "data");
  const auto mixture = GaussianMixture::random(cfg.num_classes, cfg.feature_dim, cfg.mean_spread, data_rng);
  const std::size_t total = cfg.clients * cfg.samples_per_client;
  // Every class pool can cover the whole demand, so no client is ever topped
  // up with replacement.
  const std::vector<std::size_t> per_class(cfg.num_classes, total);
  const LabeledDataset pool = mixture.sample(per_class, data_rng);
  pop.test = mixture.sample_balanced(std::max<std::size_t>(total / 4, 1), data_rng);

  PartitionSpec spec{cfg.num_classes, cfg.dirichlet_alpha, std::vector<std::size_t>(cfg.clients, cfg.samples_per_client)};
  Rng part_rng = make_stream(cfg.seed, "partition");
  auto partition = partition_dirichlet(pool, spec, part_rng);
  pop.warnings = std::move(partition.warnings);
  pop.data = std::move(partition.clients);

  pop.train_union.dim = cfg.feature_dim;
  pop.train_union.num_classes = cfg.num_classes;
  for (const auto& d : pop.data)
    for (std::size_t k = 0; k < d.size(); ++k) pop.train_union.push_back(d.row(k), d.labels[k], d.source_index[k]);

  pop.beta = derive_participation_rates(pop.data, label_counts(pop.train_union),
                                        {cfg.beta_min, cfg.beta_max, cfg.beta_inverted});
  for (std::size_t i = 0; i < cfg.clients; ++i) {
    ClientProfile p;
    p.id = i;
    p.dataset_size = static_cast<double>(pop.data[i].size());
    p.cycles_per_sample = cfg.cycles_per_sample;
    p.switched_capacitance = cfg.switched_capacitance;
    p.model_bits = cfg.model_bits;
    p.distance = cfg.distance;
    p.tx_power = cfg.tx_power;
    p.energy_budget = cfg.energy_budget;
    p.participation_rate = pop.beta[i];
    p.validate();
    pop.profiles.push_back(p);
  }
  return pop;
}

/// Quantities the convergence-bound check needs from a finished run.
struct TrainingTrace {
  double smoothness = 0.0;
  double initial_loss = 0.0;      // F(w(1))
  double min_loss = 0.0;          // smallest F seen
  double max_grad_norm = 0.0;     // over local steps and global gradients
  double mean_grad_sq = 0.0;      // (1/T) Σ ‖∇F(w(t+1))‖²
};

/// One simulation run. Owns the scheduler state, model and ledger.
class Simulation {
 public:
  explicit Simulation(SimConfig cfg)
      : cfg_(std::move(cfg)),
        pop_(build_population(validated(cfg_))),
        learner_(cfg_.feature_dim, cfg_.num_classes, cfg_.l2),
        model_(learner_.zeros()),
        queues_(cfg_.clients),
        cpu_freq_(cfg_.clients, cfg_.f_init),
        mining_freq_(cfg_.clients, cfg_.f_bloc_init) {
    rows_ = all_rows(pop_.train_union);
    trace_.smoothness = learner_.smoothness(pop_.train_union);
    trace_.initial_loss = learner_.loss(model_, pop_.train_union, rows_);
    trace_.min_loss = trace_.initial_loss;
  }

  const SimConfig& config() const noexcept { return cfg_; }
  const Population& population() const noexcept { return pop_; }
  const Ledger& ledger() const noexcept { return ledger_; }
  const QueueState& queues() const noexcept { return queues_; }
  const ModelVector& model() const noexcept { return model_; }
  const SoftmaxRegression& learner() const noexcept { return learner_; }
  std::size_t rounds_done() const noexcept { return round_; }

  TrainingTrace trace() const {
    TrainingTrace t = trace_;
    t.mean_grad_sq = round_ ? grad_sq_sum_ / static_cast<double>(round_) : 0.0;
    return t;
  }

  /// Per-round group sizes for baselines, e.g. replayed from a DRC-BDFL run.
  void set_group_sizes(std::vector<std::size_t> sizes) { group_sizes_ = std::move(sizes); }

  RoundMetrics step() {
    const std::size_t t = ++round_;
    const std::size_t n = cfg_.clients;
    Rng channel_rng = make_stream(cfg_.seed, "channel", {t});
    const auto channel = draw_channel(cfg_.channel_params(), pop_.profiles, channel_rng);

    RoundDecision decision;
    try {
      decision = decide(t, channel);
    } catch (const RoundInfeasible& e) {
      throw RoundInfeasible(t, e.cause());
    }
    if (decision.selected.empty()) throw RoundInfeasible(t, "no client can train within its energy budget");

    const auto topo = induced_topology(decision.selected, n);
    if (n > 1 && !(algebraic_connectivity(topo) > kConnectivityTolerance))
      throw RoundInfeasible(t, "round topology is disconnected");

    double d_bloc = mining_delay(cfg_.mining_params(), decision.mining_freq);
    if (cfg_.mining_mode == MiningMode::stochastic) {
      Rng mining_rng = make_stream(cfg_.seed, "mining", {t});
      d_bloc = sample_mining_delay(cfg_.mining_params(), decision.mining_freq, mining_rng);
    }
    const auto cost = evaluate_round(pop_.profiles, channel, cfg_.local_iters, decision.selected,
                                     decision.cpu_freq, decision.mining_freq, d_bloc);

    // Local training on the selected clients, then aggregation.
    std::vector<ModelVector> local(n);
    for (auto i : decision.selected) {
      Rng train_rng = make_stream(cfg_.seed, "train", {t, i});
      auto res = local_train(learner_, model_, pop_.data[i], cfg_.learning_rate, cfg_.local_iters,
                             cfg_.batch_size, train_rng);
      for (double g : res.grad_norms) trace_.max_grad_norm = std::max(trace_.max_grad_norm, g);
      local[i] = std::move(res.model);
    }
    const auto sizes = pop_.dataset_sizes();
    ModelVector next = aggregate(local, sizes, decision.selected);

    RoundRecord record{t, decision.selected, model_digest(next), cost.train_delay(decision.selected), d_bloc};
    Rng race_rng = make_stream(cfg_.seed, "race", {t});
    const auto& block = mine_and_append(ledger_, record, decision.mining_freq, race_rng, next);
    model_ = std::move(next);

    queues_ = queue_update(queues_, pop_.beta, decision.selected);
    cpu_freq_ = decision.cpu_freq;
    mining_freq_ = decision.mining_freq;

    RoundMetrics m;
    m.round = t;
    m.scheduler = cfg_.scheduler;
    m.seed = cfg_.seed;
    m.v = cfg_.tradeoff_v;
    m.selected = decision.selected;
    m.cpu_freq = decision.cpu_freq;
    m.mining_freq = decision.mining_freq;
    m.queue = queues_.backlog;
    m.d_bloc = d_bloc;
    m.inner_iters = decision.inner_iterations;
    m.converged = decision.converged;
    m.miner = block.miner;
    for (std::size_t i = 0; i < n; ++i) {
      m.d_up.push_back(cost.delays[i].upload);
      m.d_cp.push_back(cost.delays[i].compute);
      m.e_up.push_back(cost.energy[i].upload);
      m.e_cp.push_back(cost.energy[i].compute);
      m.e_bloc.push_back(cost.energy[i].mining);
    }
    const auto mask = selection_mask(decision.selected, n);
    for (std::size_t i = 0; i < n; ++i) {
      if (mask[i]) {
        energy_sum_[i] += m.energy(i);
        ++trained_[i];
      }
      m.cum_avg_energy.push_back(trained_[i] ? energy_sum_[i] / static_cast<double>(trained_[i]) : 0.0);
    }
    m.train_delay = record.train_delay;
    m.round_delay = m.train_delay + d_bloc;
    delay_sum_ += m.round_delay;
    m.cum_avg_delay = delay_sum_ / static_cast<double>(t);

    m.loss = learner_.loss(model_, pop_.train_union, rows_);
    const auto g = learner_.gradient(model_, pop_.train_union, rows_);
    m.grad_sq_norm = squared_norm(g);
    m.accuracy = learner_.accuracy(model_, pop_.test);
    trace_.min_loss = std::min(trace_.min_loss, m.loss);
    trace_.max_grad_norm = std::max(trace_.max_grad_norm, std::sqrt(m.grad_sq_norm));
    grad_sq_sum_ += m.grad_sq_norm;
    return m;
  }

  std::vector<RoundMetrics> run() {
    std::vector<RoundMetrics> out;
    out.reserve(cfg_.rounds);
    while (round_ < cfg_.rounds) out.push_back(step());
    return out;
  }

 private:
  static const SimConfig& validated(const SimConfig& c) {
    c.validate();
    return c;
  }

  RoundDecision decide(std::size_t t, const ChannelRealization& channel) {
    if (cfg_.scheduler == SchedulerKind::drc_bdfl) {
      RoundInputs in;
      in.profiles = pop_.profiles;
      in.channel = &channel;
      in.queues = &queues_;
      in.beta = pop_.beta;
      in.mining = cfg_.mining_params();
      in.config = cfg_.scheduler_config();
      in.cpu_freq = cpu_freq_;
      in.mining_freq = mining_freq_;
      auto d = drc_bdfl_round(in);
      if (!d.converged)
        std::clog << "warning: round " << t << " inner loop stopped at " << d.inner_iterations
                  << " iterations without converging\n";
      return d;
    }
    std::size_t k = cfg_.baseline_clients ? cfg_.baseline_clients : cfg_.min_clients;
    if (!group_sizes_.empty()) k = group_sizes_.at(t - 1);
    Rng sched_rng = make_stream(cfg_.seed, "scheduler", {t});
    return baseline_round(cfg_.scheduler, t - 1, k, pop_.profiles, channel, cfg_.mining_params(), cfg_.local_iters,
                          cfg_.f_init, cfg_.f_bloc_init, sched_rng);
  }

  SimConfig cfg_;
  Population pop_;
  SoftmaxRegression learner_;
  ModelVector model_;
  QueueState queues_;
  std::vector<double> cpu_freq_;
  std::vector<double> mining_freq_;
  Ledger ledger_;
  std::vector<std::size_t> rows_;
  std::vector<std::size_t> group_sizes_;
  std::size_t round_ = 0;
  double delay_sum_ = 0.0;
  double grad_sq_sum_ = 0.0;
  std::vector<double> energy_sum_ = std::vector<double>(cfg_.clients, 0.0);
  std::vector<std::size_t> trained_ = std::vector<std::size_t>(cfg_.clients, 0);
  TrainingTrace trace_;
};

struct SimulationResult {
  std::vector<RoundMetrics> metrics;
  TrainingTrace trace;
  Ledger ledger;
  std::vector<double> beta;
  std::vector<double> dataset_sizes;
};

inline SimulationResult run_simulation(const SimConfig& cfg, std::vector<std::size_t> group_sizes = {}) {
  Simulation sim(cfg);
  sim.set_group_sizes(std::move(group_sizes));
  SimulationResult r;
  r.metrics = sim.run();
  r.trace = sim.trace();
  r.ledger = sim.ledger();
  r.beta = sim.population().beta;
  r.dataset_sizes = sim.population().dataset_sizes();
  return r;
}

}  // namespace bdfl
