#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <ostream>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "bdfl/errors.hpp"
#include "bdfl/random.hpp"

namespace bdfl {

/// Row-major feature block plus integer labels. `source_index` keeps the
/// position of each row in the dataset it was drawn from.
struct LabeledDataset {
  std::size_t owner = 0;
  std::size_t dim = 0;
  std::size_t num_classes = 0;
  std::vector<double> features;
  std::vector<int> labels;
  std::vector<std::size_t> source_index;

  std::size_t size() const noexcept { return labels.size(); }
  std::span<const double> row(std::size_t k) const { return {features.data() + k * dim, dim}; }

  void push_back(std::span<const double> x, int label, std::size_t src) {
    features.insert(features.end(), x.begin(), x.end());
    labels.push_back(label);
    source_index.push_back(src);
  }
};

inline std::vector<std::size_t> label_counts(const LabeledDataset& ds) {
  std::vector<std::size_t> counts(ds.num_classes, 0);
  for (int y : ds.labels) ++counts.at(static_cast<std::size_t>(y));
  return counts;
}

/// Isotropic Gaussian mixture, one unit-variance component per class.
struct GaussianMixture {
  std::size_t num_classes = 4;
  std::size_t dim = 16;
  std::vector<std::vector<double>> means;

  static GaussianMixture random(std::size_t num_classes, std::size_t dim, double mean_spread, Rng& rng) {
    if (num_classes == 0 || dim == 0) throw DomainError("mixture needs at least one class and dimension");
    GaussianMixture g{num_classes, dim, {}};
    std::normal_distribution<double> n(0.0, mean_spread);
    g.means.assign(num_classes, std::vector<double>(dim));
    for (auto& m : g.means)
      for (auto& v : m) v = n(rng);
    return g;
  }

  /// `per_class[c]` samples of class c, classes laid out in order.
  LabeledDataset sample(std::span<const std::size_t> per_class, Rng& rng) const {
    LabeledDataset ds;
    ds.dim = dim;
    ds.num_classes = num_classes;
    std::normal_distribution<double> n(0.0, 1.0);
    std::vector<double> x(dim);
    std::size_t idx = 0;
    for (std::size_t c = 0; c < num_classes; ++c) {
      for (std::size_t k = 0; k < per_class[c]; ++k) {
        for (std::size_t j = 0; j < dim; ++j) x[j] = means[c][j] + n(rng);
        ds.push_back(x, static_cast<int>(c), idx++);
      }
    }
    return ds;
  }

  LabeledDataset sample_balanced(std::size_t total, Rng& rng) const {
    std::vector<std::size_t> per_class(num_classes, total / num_classes);
    for (std::size_t c = 0; c < total % num_classes; ++c) ++per_class[c];
    return sample(per_class, rng);
  }
};

struct PartitionSpec {
  std::size_t num_classes = 4;
  double dirichlet_alpha = 0.5;
  std::vector<std::size_t> samples_per_client;
};

struct Partition {
  std::vector<LabeledDataset> clients;
  // One entry per class pool that ran dry and was topped up with replacement.
  std::vector<std::string> warnings;

  bool rebalanced() const noexcept { return !warnings.empty(); }
};

inline std::vector<double> sample_dirichlet(std::size_t dim, double alpha, Rng& rng) {
  std::gamma_distribution<double> gamma(alpha, 1.0);
  std::vector<double> p(dim);
  double sum = 0.0;
  for (auto& v : p) sum += (v = gamma(rng));
  if (!(sum > 0.0)) {
    // Every gamma underflowed (tiny alpha): the limit law is a random vertex.
    std::fill(p.begin(), p.end(), 0.0);
    p[std::uniform_int_distribution<std::size_t>(0, dim - 1)(rng)] = 1.0;
    return p;
  }
  for (auto& v : p) v /= sum;
  return p;
}

/// Largest-remainder rounding of `total * proportions`.
inline std::vector<std::size_t> apportion(std::size_t total, std::span<const double> proportions) {
  const std::size_t c = proportions.size();
  std::vector<std::size_t> counts(c);
  std::vector<std::pair<double, std::size_t>> frac(c);
  std::size_t assigned = 0;
  for (std::size_t k = 0; k < c; ++k) {
    const double exact = static_cast<double>(total) * proportions[k];
    counts[k] = static_cast<std::size_t>(std::floor(exact));
    assigned += counts[k];
    frac[k] = {exact - std::floor(exact), k};
  }
  std::stable_sort(frac.begin(), frac.end(), [](auto a, auto b) { return a.first > b.first; });
  for (std::size_t k = 0; assigned < total; ++k, ++assigned) ++counts[frac[k % c].second];
  return counts;
}

inline Partition partition_dirichlet(const LabeledDataset& global, const PartitionSpec& spec, Rng& rng) {
  if (!(spec.dirichlet_alpha > 0.0)) throw DomainError("Dirichlet concentration must be positive");
  if (spec.num_classes == 0 || spec.num_classes != global.num_classes)
    throw DomainError("partition class count does not match the dataset");
  const std::size_t wanted =
      std::accumulate(spec.samples_per_client.begin(), spec.samples_per_client.end(), std::size_t{0});
  if (wanted > global.size()) throw DomainError("global dataset smaller than the requested partition");

  std::vector<std::vector<std::size_t>> pools(spec.num_classes);
  for (std::size_t k = 0; k < global.size(); ++k)
    pools[static_cast<std::size_t>(global.labels[k])].push_back(k);
  for (auto& p : pools) std::shuffle(p.begin(), p.end(), rng);
  std::vector<std::size_t> cursor(spec.num_classes, 0);

  Partition out;
  out.clients.reserve(spec.samples_per_client.size());
  for (std::size_t i = 0; i < spec.samples_per_client.size(); ++i) {
    const auto props = sample_dirichlet(spec.num_classes, spec.dirichlet_alpha, rng);
    const auto counts = apportion(spec.samples_per_client[i], props);
    LabeledDataset ds;
    ds.owner = i;
    ds.dim = global.dim;
    ds.num_classes = global.num_classes;
    for (std::size_t c = 0; c < spec.num_classes; ++c) {
      std::size_t need = counts[c];
      if (need == 0) continue;
      // A class absent from the global set cannot be served; move its demand
      // to the largest remaining pool.
      std::size_t cls = c;
      if (pools[cls].empty()) {
        cls = static_cast<std::size_t>(std::distance(
            pools.begin(), std::max_element(pools.begin(), pools.end(), [&](const auto& a, const auto& b) {
              return a.size() < b.size();
            })));
      }
      const auto& pool = pools[cls];
      const std::size_t fresh = std::min(need, pool.size() - cursor[cls]);
      for (std::size_t k = 0; k < fresh; ++k) {
        const std::size_t src = pool[cursor[cls]++];
        ds.push_back(global.row(src), global.labels[src], src);
      }
      if (fresh < need) {
        out.warnings.push_back("client " + std::to_string(i) + ": class " + std::to_string(cls) +
                               " exhausted, drew " + std::to_string(need - fresh) + " samples with replacement");
        std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
        for (std::size_t k = fresh; k < need; ++k) {
          const std::size_t src = pool[pick(rng)];
          ds.push_back(global.row(src), global.labels[src], src);
        }
      }
    }
    out.clients.push_back(std::move(ds));
  }
  return out;
}

struct ParticipationBounds {
  double beta_min = 0.3;
  double beta_max = 0.9;
  // Off: clients far from the global label mix participate less.
  bool inverted = false;
};

/// L1 distance between a client's label proportions and the global ones.
inline double label_divergence(std::span<const std::size_t> client_counts,
                               std::span<const std::size_t> global_counts) {
  const double n_i = std::accumulate(client_counts.begin(), client_counts.end(), 0.0);
  const double n = std::accumulate(global_counts.begin(), global_counts.end(), 0.0);
  if (!(n_i > 0.0) || !(n > 0.0)) throw DomainError("label counts must be non-empty");
  double score = 0.0;
  for (std::size_t c = 0; c < client_counts.size(); ++c)
    score += std::abs(static_cast<double>(client_counts[c]) / n_i - static_cast<double>(global_counts[c]) / n);
  return score;
}

/// Maps divergence scores to participation rates in [β_min, β_max].
inline std::vector<double> participation_from_scores(std::span<const double> scores,
                                                     const ParticipationBounds& b) {
  if (!(b.beta_min > 0.0 && b.beta_min <= b.beta_max && b.beta_max <= 1.0))
    throw DomainError("participation bounds must satisfy 0 < beta_min <= beta_max <= 1");
  const std::size_t n = scores.size();
  std::vector<double> beta(n, b.beta_max);
  if (n == 0) return beta;
  const double max_score = *std::max_element(scores.begin(), scores.end());
  std::vector<double> raw(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double ratio = max_score > 0.0 ? scores[i] / max_score : 0.0;
    raw[i] = b.inverted ? ratio : 1.0 - ratio;
  }
  const auto [lo, hi] = std::minmax_element(raw.begin(), raw.end());
  if (!(*hi > *lo)) return beta;
  for (std::size_t i = 0; i < n; ++i)
    beta[i] = b.beta_min + (b.beta_max - b.beta_min) * (raw[i] - *lo) / (*hi - *lo);
  return beta;
}

inline std::vector<double> derive_participation_rates(std::span<const LabeledDataset> clients,
                                                      std::span<const std::size_t> global_label_counts,
                                                      const ParticipationBounds& b) {
  std::vector<double> scores;
  scores.reserve(clients.size());
  for (const auto& c : clients) {
    const auto counts = label_counts(c);
    if (counts.size() != global_label_counts.size())
      throw DomainError("client and global label counts disagree on the class count");
    scores.push_back(label_divergence(counts, global_label_counts));
  }
  return participation_from_scores(scores, b);
}

/// client_id,sample_index,label
inline void write_partition_csv(std::ostream& os, std::span<const LabeledDataset> clients) {
  os << "client_id,sample_index,label\n";
  for (const auto& c : clients)
    for (std::size_t k = 0; k < c.size(); ++k) os << c.owner << ',' << c.source_index[k] << ',' << c.labels[k] << '\n';
}

}  // namespace bdfl
