#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "bdfl/random.hpp"
#include "bdfl/scheduler.hpp"

using namespace bdfl;

namespace {

std::vector<ClientProfile> profiles(std::size_t n, double budget = 0.4) {
  std::vector<ClientProfile> ps(n);
  for (std::size_t i = 0; i < n; ++i) {
    ps[i].id = i;
    ps[i].energy_budget = budget;
  }
  return ps;
}

ChannelRealization channel(const std::vector<ClientProfile>& ps, std::vector<double> rho) {
  ChannelParams c;
  c.fading = false;
  return make_channel(c, ps, std::move(rho));
}

double bisect(auto&& g, double lo, double hi) {
  for (int k = 0; k < 200; ++k) {
    const double mid = 0.5 * (lo + hi);
    (g(mid) > 0.0 ? hi : lo) = mid;
  }
  return 0.5 * (lo + hi);
}

struct Scenario {
  std::vector<ClientProfile> ps;
  ChannelRealization ch;
  QueueState q;
  std::vector<double> beta;

  RoundInputs inputs(double v, std::size_t m = 3) const {
    RoundInputs in;
    in.profiles = ps;
    in.channel = &ch;
    in.queues = &q;
    in.beta = beta;
    in.config.tradeoff_v = v;
    in.config.min_clients = m;
    in.config.max_clients = ps.size();
    in.cpu_freq.assign(ps.size(), 1e9);
    in.mining_freq.assign(ps.size(), 1.5e9);
    return in;
  }
};

Scenario varied_setup(std::size_t n, std::uint64_t seed) {
  Scenario s;
  s.ps = profiles(n);
  auto rng = make_stream(seed, "setup");
  std::exponential_distribution<double> fade(1.0);
  std::vector<double> rho(n);
  for (auto& r : rho) r = 0.2 + fade(rng);
  s.ch = channel(s.ps, rho);
  s.q = QueueState(n);
  std::uniform_real_distribution<double> z(0.0, 3.0), b(0.3, 0.9);
  for (auto& v : s.q.backlog) v = z(rng);
  for (std::size_t i = 0; i < n; ++i) s.beta.push_back(b(rng));
  return s;
}

}  // namespace

TEST(QueueUpdate, SpecExamples) {
  QueueState q(3);
  q.backlog = {2.0, 0.0, 0.5};
  const std::vector<double> beta{0.3, 0.3, 0.4};
  const std::vector<std::size_t> sel{0, 1};
  const auto next = queue_update(q, beta, sel);
  EXPECT_NEAR(next.backlog[0], 1.3, 1e-15);
  EXPECT_EQ(next.backlog[1], 0.0);
  EXPECT_NEAR(next.backlog[2], 0.9, 1e-15);
}

TEST(DriftPlusPenalty, SpecExamples) {
  QueueState q(2);
  q.backlog = {1.0, 2.0};
  const std::vector<double> beta{0.5, 0.5};
  const std::vector<std::size_t> sel{0};
  EXPECT_NEAR(drift_plus_penalty(q, beta, sel, 0.3, 10.0), 3.5, 1e-14);
  EXPECT_NEAR(drift_plus_penalty(q, beta, sel, 0.3, 0.0), 0.5, 1e-14);
  QueueState zero(2);
  EXPECT_NEAR(drift_plus_penalty(zero, beta, sel, 0.3, 1.0), 0.3, 1e-15);
}

TEST(CpuFrequency, TableExample) {
  const auto p = profiles(1).front();
  const double rate = 1.283e6;
  const double f_bloc = 1.5e9, d_bloc = 2.5e-13;
  const auto f = tight_cpu_freq(p, 20, cpu_residual_energy(p, rate, f_bloc, d_bloc));
  ASSERT_TRUE(f.has_value());
  EXPECT_NEAR(*f / 4.63e9, 1.0, 1e-3);
  const auto clamped = solve_cpu_freq(p, rate, f_bloc, d_bloc, 20);
  ASSERT_TRUE(clamped.has_value());
  EXPECT_NEAR(*clamped, *f, 1e-6 * *f);
}

TEST(CpuFrequency, NoResidualEnergyIsInfeasible) {
  EXPECT_FALSE(tight_cpu_freq(profiles(1).front(), 20, 0.0).has_value());
  auto p = profiles(1, 0.05).front();  // upload alone costs ~0.078 J
  EXPECT_FALSE(solve_cpu_freq(p, 1.283e6, 1.5e9, 2.5e-13, 20).has_value());
  EXPECT_FALSE(solve_cpu_freq(p, 0.0, 1.5e9, 2.5e-13, 20).has_value());
}

TEST(CpuFrequency, MatchesBisectionAndIsTight) {
  auto rng = make_stream(5, "cpu");
  std::uniform_real_distribution<double> budget(0.1, 1.0), rate(5e5, 3e6);
  for (int k = 0; k < 200; ++k) {
    auto p = profiles(1, budget(rng)).front();
    const double r = rate(rng), f_bloc = 1.5e9, d_bloc = 2.5e-13;
    const auto f = solve_cpu_freq(p, r, f_bloc, d_bloc, 20, {1e6, 1e12});
    if (!f) continue;
    const double e_fixed = upload_energy(p, r) + mining_energy(p, d_bloc, f_bloc);
    const double oracle =
        bisect([&](double x) { return e_fixed + compute_energy(p, 20, x) - p.energy_budget; }, 1e6, 1e12);
    EXPECT_NEAR(*f / oracle, 1.0, 1e-9);
    EXPECT_NEAR(e_fixed + compute_energy(p, 20, *f), p.energy_budget, 1e-9 * p.energy_budget);
  }
}

TEST(DepressedCubic, SpecExamples) {
  EXPECT_DOUBLE_EQ(depressed_cubic_root(4.0, 0.0), 2.0);
  const double oracle = bisect([](double f) { return f * f * f - 8.0 * f - 8.0; }, 0.0, 10.0);
  EXPECT_NEAR(depressed_cubic_root(8.0, 1.0), oracle, 1e-9);
  EXPECT_NEAR(oracle, 1.0 + std::sqrt(5.0), 1e-9);  // (f + 2)(f² − 2f − 4)
}

TEST(DepressedCubic, BothDiscriminantBranches) {
  // q = N/√M above and below the switch point 2/√27.
  for (double n : {1e-6, 0.1, 0.3849, 0.39, 1.0, 10.0, 1e6}) {
    const double m = 1.0;
    const double f = depressed_cubic_root(m, n);
    EXPECT_LT(std::abs(f * f * f - m * f - m * n), 1e-9 * std::max(1.0, m * n)) << n;
  }
  EXPECT_THROW(depressed_cubic_root(0.0, 1.0), DomainError);
  EXPECT_THROW(depressed_cubic_root(1.0, -1.0), DomainError);
}

TEST(MiningFrequency, MatchesBisectionAndIsTight) {
  auto rng = make_stream(6, "mining");
  const MiningParams mp;
  std::uniform_real_distribution<double> residual(1e-14, 1e-12), others(1e8, 4e10);
  for (int k = 0; k < 200; ++k) {
    const auto p = profiles(1).front();
    const double e = residual(rng), n = others(rng);
    const auto f = tight_mining_freq(p, mp, e, n);
    ASSERT_TRUE(f.has_value());
    const double oracle = bisect(
        [&](double x) { return mining_energy(p, mp.quantile_cycles() / (x + n), x) - e; }, 0.0, 1e13);
    EXPECT_NEAR(*f / oracle, 1.0, 1e-9);
    EXPECT_NEAR(mining_energy(p, mp.quantile_cycles() / (*f + n), *f), e, 1e-9 * e);
  }
}

TEST(MiningFrequency, ClampsToBounds) {
  const auto p = profiles(1).front();
  const double rate = 1.283e6;
  const auto f = solve_mining_freq(p, rate, 1e9, 1.05e10, MiningParams{}, 20);
  ASSERT_TRUE(f.has_value());
  EXPECT_LE(*f, 5e9);
  EXPECT_GE(*f, 0.1e9);
}

TEST(SelectClients, ForcedFullGroup) {
  const std::vector<Candidate> c{{0, 0.3}, {1, 0.1}, {2, 0.2}};
  QueueState q(3);
  const std::vector<double> beta(3, 0.5);
  const auto s = select_clients(c, q, beta, 1.0, 0.0, 3, 3);
  EXPECT_EQ(s.clients, (std::vector<std::size_t>{0, 1, 2}));
}

TEST(SelectClients, PrefixExample) {
  const std::vector<Candidate> c{{0, 0.1}, {1, 0.2}, {2, 0.3}, {3, 4.0}};
  QueueState q(4);
  const std::vector<double> beta(4, 0.5);
  const auto s = select_clients(c, q, beta, 1.0, 0.0, 2, 4);
  EXPECT_EQ(s.clients, (std::vector<std::size_t>{0, 1}));
  EXPECT_NEAR(s.objective, 0.2, 1e-15);
}

TEST(SelectClients, TooFewCandidatesIsInfeasible) {
  const std::vector<Candidate> c{{0, 0.1}};
  QueueState q(2);
  const std::vector<double> beta(2, 0.5);
  EXPECT_THROW(select_clients(c, q, beta, 1.0, 0.0, 2, 2), RoundInfeasible);
}

// Zero backlogs: the prefix rule reaches the global minimum over all subsets.
TEST(SelectClients, MatchesBruteForceWithZeroBacklog) {
  auto rng = make_stream(8, "brute");
  std::uniform_real_distribution<double> delay(0.1, 5.0);
  for (int inst = 0; inst < 100; ++inst) {
    const std::size_t u = 2 + static_cast<std::size_t>(inst % 5);
    const std::size_t m = 1 + static_cast<std::size_t>(inst % u);
    std::vector<Candidate> c;
    for (std::size_t i = 0; i < u; ++i) c.push_back({i, delay(rng)});
    QueueState q(u);
    const std::vector<double> beta(u, 0.5);
    const double v = 10.0, d_bloc = 1e-3;
    const auto s = select_clients(c, q, beta, v, d_bloc, m, u);
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t mask = 1; mask < (std::size_t{1} << u); ++mask) {
      std::vector<std::size_t> sub;
      double worst = 0.0;
      for (std::size_t i = 0; i < u; ++i)
        if (mask >> i & 1) sub.push_back(i), worst = std::max(worst, c[i].delay);
      if (sub.size() < m) continue;
      best = std::min(best, drift_plus_penalty(q, beta, sub, worst + d_bloc, v));
    }
    EXPECT_NEAR(s.objective, best, 1e-12);
  }
}

TEST(SelectClients, DelayTieGoesToLargerBacklogThenLowerId) {
  const std::vector<Candidate> c{{0, 1.0}, {1, 1.0}, {2, 1.0}};
  QueueState q(3);
  q.backlog = {0.0, 0.0, 0.0};
  const std::vector<double> beta(3, 0.5);
  // Zero backlog: equal objectives resolve to the smaller group and lower ids.
  EXPECT_EQ(select_clients(c, q, beta, 1.0, 0.0, 1, 3).clients, (std::vector<std::size_t>{0}));
  q.backlog = {0.0, 0.0, 1e-6};
  // Client 2 leads the sort; adding it also lowers the queue term.
  EXPECT_EQ(select_clients(c, q, beta, 1.0, 0.0, 1, 3).clients, (std::vector<std::size_t>{2}));
}

TEST(DrcRound, DecisionRespectsConstraints) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto s = varied_setup(8, seed);
    const auto in = s.inputs(10.0);
    const auto d = drc_bdfl_round(in);
    const auto cost = evaluate_round(s.ps, s.ch, 20, d.selected, d.cpu_freq, d.mining_freq,
                                     mining_delay(in.mining, d.mining_freq));
    const auto rep = verify_decision(s.ps, cost, d.selected, 3, 8);
    EXPECT_TRUE(rep.ok()) << "seed " << seed;
    for (auto i : d.selected) {
      EXPECT_GE(d.cpu_freq[i], 0.1e9);
      EXPECT_LE(d.cpu_freq[i], 5e9);
    }
  }
}

TEST(DrcRound, ZeroVSelectsWholeFeasibleSet) {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    auto s = varied_setup(6, seed);
    for (auto& z : s.q.backlog) z += 0.1;
    const auto d = drc_bdfl_round(s.inputs(0.0));
    EXPECT_EQ(d.selected.size(), 6u);
  }
}

TEST(DrcRound, SymmetricClientsGetIdenticalFrequencies) {
  Scenario s;
  s.ps = profiles(6);
  s.ch = channel(s.ps, std::vector<double>(6, 1.0));
  s.q = QueueState(6);
  for (auto& z : s.q.backlog) z = 0.5;
  s.beta.assign(6, 0.6);
  const auto d = drc_bdfl_round(s.inputs(10.0));
  ASSERT_FALSE(d.selected.empty());
  const auto first = d.selected.front();
  for (auto i : d.selected) {
    EXPECT_NEAR(d.cpu_freq[i], d.cpu_freq[first], 1e-9 * d.cpu_freq[first]);
    EXPECT_NEAR(d.mining_freq[i], d.mining_freq[first], 1e-6 * d.mining_freq[first]);
  }
}

TEST(DrcRound, ReturnedPointIsAFixedPoint) {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto s = varied_setup(8, seed);
    auto in = s.inputs(10.0);
    const auto d = drc_bdfl_round(in);
    ASSERT_TRUE(d.converged) << "seed " << seed;
    in.cpu_freq = d.cpu_freq;
    in.mining_freq = d.mining_freq;
    const auto again = drc_bdfl_round(in);
    EXPECT_EQ(again.selected, d.selected);
    for (auto i : d.selected) EXPECT_NEAR(again.cpu_freq[i], d.cpu_freq[i], 1e-6 * d.cpu_freq[i]);
    EXPECT_NEAR(again.objective_value, d.objective_value, 1e-6 * std::max(1.0, std::abs(d.objective_value)));
  }
}

TEST(DrcRound, RejectsMismatchedInputs) {
  const auto s = varied_setup(4, 1);
  auto in = s.inputs(10.0);
  in.cpu_freq.pop_back();
  EXPECT_THROW(drc_bdfl_round(in), DomainError);
  in = s.inputs(10.0, 5);
  EXPECT_THROW(drc_bdfl_round(in), DomainError);
}

TEST(DrcRound, TooFewFeasibleClientsIsInfeasible) {
  Scenario s;
  s.ps = profiles(4, 0.05);
  s.ch = channel(s.ps, std::vector<double>(4, 1.0));
  s.q = QueueState(4);
  s.beta.assign(4, 0.5);
  EXPECT_THROW(drc_bdfl_round(s.inputs(10.0)), RoundInfeasible);
}

TEST(Baselines, RoundRobinCycles) {
  EXPECT_EQ(baseline_round_robin(0, 2, 4), (std::vector<std::size_t>{0, 1}));
  EXPECT_EQ(baseline_round_robin(1, 2, 4), (std::vector<std::size_t>{2, 3}));
  EXPECT_EQ(baseline_round_robin(1, 3, 4), (std::vector<std::size_t>{0, 1, 3}));
  EXPECT_THROW(baseline_round_robin(0, 5, 4), DomainError);
}

TEST(Baselines, ChannelBestTopK) {
  ChannelRealization ch;
  ch.channel_gain = {5, 1, 9, 3};
  EXPECT_EQ(baseline_channel_best(ch, 2), (std::vector<std::size_t>{2, 0}));
  ch.channel_gain = {2, 7, 7, 1};
  EXPECT_EQ(baseline_channel_best(ch, 2), (std::vector<std::size_t>{1, 2}));
}

TEST(Baselines, RandomIsReproducibleAndUniformInSize) {
  auto a = make_stream(9, "random");
  auto b = make_stream(9, "random");
  for (int k = 0; k < 50; ++k) {
    const auto x = baseline_random(a, 3, 8);
    EXPECT_EQ(x, baseline_random(b, 3, 8));
    EXPECT_EQ(x.size(), 3u);
  }
  EXPECT_THROW(baseline_random(a, 0, 8), DomainError);
}

TEST(Baselines, DropsClientsOverBudget) {
  auto ps = profiles(4);
  ps[1].energy_budget = 0.05;
  const auto ch = channel(ps, {1.0, 1.0, 1.0, 0.0});
  auto rng = make_stream(1, "b");
  const auto d = baseline_round(SchedulerKind::round_robin, 0, 4, ps, ch, MiningParams{}, 20, 1e9, 1.5e9, rng);
  EXPECT_EQ(d.selected, (std::vector<std::size_t>{0, 2}));
  EXPECT_THROW(baseline_round(SchedulerKind::drc_bdfl, 0, 2, ps, ch, MiningParams{}, 20, 1e9, 1.5e9, rng),
               DomainError);
}

TEST(SchedulerKind, NamesRoundTrip) {
  for (auto k : {SchedulerKind::drc_bdfl, SchedulerKind::random, SchedulerKind::round_robin,
                 SchedulerKind::channel_best})
    EXPECT_EQ(parse_scheduler(to_string(k)), k);
  EXPECT_FALSE(parse_scheduler("greedy").has_value());
}
