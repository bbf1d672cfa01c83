#include <gtest/gtest.h>

#include <sstream>

#include "bdfl/config.hpp"
#include "bdfl/experiments.hpp"
#include "bdfl/metrics_io.hpp"

using namespace bdfl;

namespace {

SimConfig small_config() {
  SimConfig c;
  c.clients = 4;
  c.rounds = 6;
  c.min_clients = 2;
  c.samples_per_client = 120;
  c.local_iters = 5;
  return c;
}

std::string csv_of(const SimulationResult& r, std::size_t u) {
  std::ostringstream os;
  write_metrics_csv(os, r.metrics, u);
  return os.str();
}

}  // namespace

TEST(Config, DefaultsValidate) { EXPECT_NO_THROW(SimConfig{}.validate()); }

TEST(Config, OverlaysKnownKeys) {
  const auto c = parse_config(nlohmann::json{{"clients", 6}, {"tradeoff_v", 50.0}, {"scheduler", "random"},
                                             {"mining_mode", "stochastic"}});
  EXPECT_EQ(c.clients, 6u);
  EXPECT_EQ(c.tradeoff_v, 50.0);
  EXPECT_EQ(c.scheduler, SchedulerKind::random);
  EXPECT_EQ(c.mining_mode, MiningMode::stochastic);
}

TEST(Config, RejectsUnknownKeysTypesAndValues) {
  EXPECT_THROW(parse_config(nlohmann::json{{"clinets", 6}}), ConfigError);
  EXPECT_THROW(parse_config(nlohmann::json{{"clients", "six"}}), ConfigError);
  EXPECT_THROW(parse_config(nlohmann::json{{"scheduler", "greedy"}}), ConfigError);
  EXPECT_THROW(parse_config(nlohmann::json{{"min_clients", 9}}), ConfigError);
  EXPECT_THROW(parse_config(nlohmann::json::array()), ConfigError);
  EXPECT_THROW(load_config("/nonexistent/config.json"), ConfigError);
}

TEST(Config, JsonRoundTrip) {
  auto c = small_config();
  c.scheduler = SchedulerKind::channel_best;
  c.seed = 17;
  const auto back = parse_config(to_json(c));
  EXPECT_EQ(to_json(back), to_json(c));
}

TEST(Metrics, HeaderWidth) {
  for (std::size_t u : {1u, 4u, 8u}) EXPECT_EQ(metrics_header(u).size(), 13 + 4 * u);
}

TEST(Metrics, EmptyRunIsHeaderOnly) {
  auto c = small_config();
  c.rounds = 0;
  const auto r = run_simulation(c);
  EXPECT_TRUE(r.metrics.empty());
  const auto text = csv_of(r, c.clients);
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 1);
}

TEST(Metrics, CsvRoundTripsLosslessly) {
  const auto c = small_config();
  const auto r = run_simulation(c);
  std::istringstream in(csv_of(r, c.clients));
  const auto rows = read_metrics_csv(in);
  ASSERT_EQ(rows.size(), r.metrics.size());
  for (std::size_t t = 0; t < rows.size(); ++t) EXPECT_EQ(rows[t], to_row(r.metrics[t]));
}

TEST(Metrics, ReaderRejectsForeignHeader) {
  std::istringstream in("round,foo\n1,2\n");
  EXPECT_THROW(read_metrics_csv(in), std::runtime_error);
}

TEST(Simulation, IdenticalSeedsGiveIdenticalBytes) {
  for (auto kind : {SchedulerKind::drc_bdfl, SchedulerKind::random}) {
    auto c = small_config();
    c.scheduler = kind;
    const auto a = run_simulation(c), b = run_simulation(c);
    EXPECT_EQ(csv_of(a, c.clients), csv_of(b, c.clients));
    std::ostringstream la, lb;
    a.ledger.write(la);
    b.ledger.write(lb);
    EXPECT_EQ(la.str(), lb.str());
  }
}

TEST(Simulation, DifferentSeedsDiffer) {
  auto c = small_config();
  const auto a = csv_of(run_simulation(c), c.clients);
  c.seed = 2;
  EXPECT_NE(a, csv_of(run_simulation(c), c.clients));
}

TEST(Simulation, RoundsRespectConstraintsAndLedgerGrows) {
  const auto c = small_config();
  const auto r = run_simulation(c);
  ASSERT_EQ(r.metrics.size(), c.rounds);
  EXPECT_EQ(r.ledger.height(), c.rounds);
  EXPECT_TRUE(r.ledger.verify_chain());
  for (const auto& m : r.metrics) {
    EXPECT_GE(m.selected.size(), c.min_clients);
    EXPECT_NEAR(m.round_delay, m.train_delay + m.d_bloc, 0.0);
    for (std::size_t i = 0; i < c.clients; ++i) {
      EXPECT_GE(m.queue[i], 0.0);
      EXPECT_LE(m.energy(i), c.energy_budget + 1e-9);
    }
  }
}

TEST(Simulation, StochasticMiningRuns) {
  auto c = small_config();
  c.mining_mode = MiningMode::stochastic;
  const auto r = run_simulation(c);
  EXPECT_EQ(r.metrics.size(), c.rounds);
  for (const auto& m : r.metrics) EXPECT_GT(m.d_bloc, 0.0);
}

TEST(Simulation, ImpossibleBudgetIsInfeasible) {
  auto c = small_config();
  c.energy_budget = 0.01;
  EXPECT_THROW(run_simulation(c), RoundInfeasible);
}

TEST(Experiments, SingleValueSweepMatchesPlainRun) {
  const auto c = small_config();
  const auto traces = sweep_v(c, {c.tradeoff_v});
  ASSERT_EQ(traces.size(), 1u);
  EXPECT_EQ(csv_of(traces[0].run, c.clients), csv_of(run_simulation(c), c.clients));
  EXPECT_EQ(traces[0].mean_backlog.size(), c.rounds);
}

TEST(Experiments, BaselinesReplayGroupSizes) {
  const auto c = small_config();
  const auto cmp = compare_baselines(c, {1, 2});
  EXPECT_EQ(cmp.outcomes.size(), 8u);
  for (std::uint64_t s : {1u, 2u}) {
    const auto& drc = cmp.outcome(SchedulerKind::drc_bdfl, s);
    for (auto kind : {SchedulerKind::random, SchedulerKind::round_robin, SchedulerKind::channel_best}) {
      const auto& o = cmp.outcome(kind, s);
      for (std::size_t t = 0; t < c.rounds; ++t) EXPECT_LE(o.metrics[t].selected.size(), drc.metrics[t].selected.size());
    }
  }
  EXPECT_NE(cmp.best_baseline, SchedulerKind::drc_bdfl);
}

TEST(Experiments, EnergyTrajectoryAveragesTrainedRoundsOnly) {
  RoundMetrics a, b;
  a.selected = {0};
  a.e_up = {1.0, 5.0};
  a.e_cp = {0.0, 0.0};
  a.e_bloc = {0.0, 0.0};
  b = a;
  b.selected = {0, 1};
  b.e_up = {3.0, 2.0};
  const auto tr = energy_trajectory({a, b});
  EXPECT_DOUBLE_EQ(tr.per_client_total[0][0], 1.0);
  EXPECT_DOUBLE_EQ(tr.per_client_total[1][0], 2.0);
  EXPECT_DOUBLE_EQ(tr.per_client_total[1][1], 2.0);
  EXPECT_DOUBLE_EQ(tr.total[1], 2.0);
}

TEST(Experiments, BoundReportUsesRunQuantities) {
  const auto c = small_config();
  const auto r = run_simulation(c);
  const auto rep = bound_report(c, r);
  EXPECT_GT(rep.inputs.smoothness, 0.0);
  EXPECT_GT(rep.inputs.grad_bound, 0.0);
  EXPECT_GE(rep.inputs.initial_gap, 0.0);
  EXPECT_NEAR(rep.bound, rep.terms.total(), 0.0);
  EXPECT_GT(rep.measured, 0.0);
}
