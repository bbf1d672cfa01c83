#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iomanip>
#include <istream>
#include <numeric>
#include <ostream>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <openssl/evp.h>

#include "bdfl/data_model.hpp"
#include "bdfl/errors.hpp"
#include "bdfl/random.hpp"
#include "bdfl/topology.hpp"

namespace bdfl {

using ModelVector = std::vector<double>;

inline double squared_norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return s;
}

// ---------------------------------------------------------------------------
// Learner
// ---------------------------------------------------------------------------

/// Objective interface used by local training: loss and gradient on a subset
/// of rows of a dataset.
template <typename T>
concept Objective = requires(const T& obj, const ModelVector& w, const LabeledDataset& ds,
                             std::span<const std::size_t> rows) {
  { obj.loss(w, ds, rows) } -> std::convertible_to<double>;
  { obj.gradient(w, ds, rows) } -> std::convertible_to<ModelVector>;
};

/// Multinomial logistic regression with an L2 penalty on every weight.
/// Weights are laid out class-major: C rows of (dim + 1), bias last.
class SoftmaxRegression {
 public:
  SoftmaxRegression(std::size_t dim, std::size_t num_classes, double l2 = 1e-3)
      : dim_(dim), classes_(num_classes), l2_(l2) {}

  std::size_t dim() const noexcept { return dim_; }
  std::size_t num_classes() const noexcept { return classes_; }
  std::size_t num_params() const noexcept { return classes_ * (dim_ + 1); }
  double l2() const noexcept { return l2_; }

  ModelVector zeros() const { return ModelVector(num_params(), 0.0); }

  double loss(const ModelVector& w, const LabeledDataset& ds, std::span<const std::size_t> rows) const {
    std::vector<double> p(classes_);
    double total = 0.0;
    for (auto r : rows) {
      const double lse = log_softmax(w, ds.row(r), p);
      total += lse - logit(w, ds.row(r), static_cast<std::size_t>(ds.labels[r]));
    }
    return total / static_cast<double>(rows.size()) + 0.5 * l2_ * squared_norm(w);
  }

  ModelVector gradient(const ModelVector& w, const LabeledDataset& ds, std::span<const std::size_t> rows) const {
    ModelVector g(num_params(), 0.0);
    std::vector<double> p(classes_);
    const double inv = 1.0 / static_cast<double>(rows.size());
    for (auto r : rows) {
      const auto x = ds.row(r);
      const double lse = log_softmax(w, x, p);
      for (std::size_t c = 0; c < classes_; ++c) {
        const double coef = (std::exp(p[c] - lse) - (ds.labels[r] == static_cast<int>(c) ? 1.0 : 0.0)) * inv;
        double* gc = g.data() + c * (dim_ + 1);
        for (std::size_t j = 0; j < dim_; ++j) gc[j] += coef * x[j];
        gc[dim_] += coef;
      }
    }
    for (std::size_t k = 0; k < g.size(); ++k) g[k] += l2_ * w[k];
    return g;
  }

  std::size_t predict(const ModelVector& w, std::span<const double> x) const {
    std::size_t best = 0;
    double best_logit = logit(w, x, 0);
    for (std::size_t c = 1; c < classes_; ++c) {
      const double z = logit(w, x, c);
      if (z > best_logit) best_logit = z, best = c;
    }
    return best;
  }

  double accuracy(const ModelVector& w, const LabeledDataset& ds) const {
    if (ds.size() == 0) return 0.0;
    std::size_t hit = 0;
    for (std::size_t r = 0; r < ds.size(); ++r)
      hit += predict(w, ds.row(r)) == static_cast<std::size_t>(ds.labels[r]);
    return static_cast<double>(hit) / static_cast<double>(ds.size());
  }

  /// Smoothness constant ½·λ_max(E[x̃x̃ᵀ]) + λ, from the curvature bound
  /// diag(p) − ppᵀ ⪯ ½I of the softmax Hessian.
  double smoothness(const LabeledDataset& ds) const {
    const std::size_t n = dim_ + 1;
    SquareMatrix second(n);
    for (std::size_t r = 0; r < ds.size(); ++r) {
      const auto x = ds.row(r);
      for (std::size_t a = 0; a < n; ++a) {
        const double xa = a < dim_ ? x[a] : 1.0;
        for (std::size_t b = a; b < n; ++b) second(a, b) += xa * (b < dim_ ? x[b] : 1.0);
      }
    }
    const double inv = 1.0 / static_cast<double>(ds.size());
    for (std::size_t a = 0; a < n; ++a)
      for (std::size_t b = a; b < n; ++b) second(b, a) = second(a, b) = second(a, b) * inv;
    return 0.5 * symmetric_eigenvalues(second).back() + l2_;
  }

 private:
  double logit(const ModelVector& w, std::span<const double> x, std::size_t c) const {
    const double* wc = w.data() + c * (dim_ + 1);
    double z = wc[dim_];
    for (std::size_t j = 0; j < dim_; ++j) z += wc[j] * x[j];
    return z;
  }

  // Fills `z` with logits, returns log Σ exp(z).
  double log_softmax(const ModelVector& w, std::span<const double> x, std::vector<double>& z) const {
    double top = -INFINITY;
    for (std::size_t c = 0; c < classes_; ++c) top = std::max(top, z[c] = logit(w, x, c));
    double s = 0.0;
    for (std::size_t c = 0; c < classes_; ++c) s += std::exp(z[c] - top);
    return top + std::log(s);
  }

  std::size_t dim_;
  std::size_t classes_;
  double l2_;
};

static_assert(Objective<SoftmaxRegression>);

inline std::vector<std::size_t> all_rows(const LabeledDataset& ds) {
  std::vector<std::size_t> rows(ds.size());
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  return rows;
}

struct LocalTrainResult {
  ModelVector model;
  std::vector<double> grad_norms;  // one per step
};

/// H steps of mini-batch SGD. A batch size of zero or ≥ |D_i| uses the full
/// local dataset every step.
template <Objective Obj>
LocalTrainResult local_train(const Obj& objective, ModelVector model, const LabeledDataset& data, double eta,
                             unsigned local_iters, std::size_t batch_size, Rng& rng) {
  if (local_iters == 0) throw DomainError("local iterations must be at least 1");
  if (eta < 0.0) throw DomainError("learning rate must be non-negative");
  if (data.size() == 0) throw DomainError("cannot train on an empty dataset");
  const bool full = batch_size == 0 || batch_size >= data.size();
  std::vector<std::size_t> rows = all_rows(data);
  std::span<const std::size_t> batch(rows);
  LocalTrainResult out;
  out.grad_norms.reserve(local_iters);
  for (unsigned h = 0; h < local_iters; ++h) {
    if (!full) {
      // Partial Fisher-Yates: the first batch_size rows become the batch.
      for (std::size_t k = 0; k < batch_size; ++k) {
        std::uniform_int_distribution<std::size_t> pick(k, rows.size() - 1);
        std::swap(rows[k], rows[pick(rng)]);
      }
      batch = std::span<const std::size_t>(rows.data(), batch_size);
    }
    const ModelVector g = objective.gradient(model, data, batch);
    const double norm = std::sqrt(squared_norm(g));
    if (!std::isfinite(norm)) {
      std::ostringstream os;
      os << "non-finite gradient at local step " << h << " on client " << data.owner;
      throw DivergedTraining(os.str());
    }
    out.grad_norms.push_back(norm);
    for (std::size_t k = 0; k < model.size(); ++k) model[k] -= eta * g[k];
  }
  out.model = std::move(model);
  return out;
}

/// Dataset-size weighted average of the selected clients' models.
inline ModelVector aggregate(std::span<const ModelVector> models, std::span<const double> dataset_sizes,
                             std::span<const std::size_t> selected) {
  if (selected.empty()) throw DomainError("aggregation needs at least one selected client");
  const std::size_t dim = models[selected.front()].size();
  double total = 0.0;
  for (auto i : selected) {
    if (models[i].size() != dim) throw DomainError("model dimension mismatch in aggregation");
    total += dataset_sizes[i];
  }
  ModelVector out(dim, 0.0);
  for (auto i : selected) {
    const double weight = dataset_sizes[i] / total;
    for (std::size_t k = 0; k < dim; ++k) out[k] += weight * models[i][k];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Ledger stub
// ---------------------------------------------------------------------------

inline std::string sha256_hex(std::string_view data) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1)
    throw LedgerError("SHA-256 digest failed");
  static constexpr char hex[] = "0123456789abcdef";
  std::string out(2 * len, '0');
  for (unsigned int k = 0; k < len; ++k) {
    out[2 * k] = hex[md[k] >> 4];
    out[2 * k + 1] = hex[md[k] & 0xF];
  }
  return out;
}

/// Hash of the weights printed to 12 significant digits.
inline std::string model_digest(std::span<const double> w) {
  std::string buf;
  buf.reserve(w.size() * 20);
  char tmp[32];
  for (double x : w) {
    if (x == 0.0) x = 0.0;  // fold -0
    std::snprintf(tmp, sizeof tmp, "%.11e;", x);
    buf += tmp;
  }
  return sha256_hex(buf);
}

struct LedgerBlock {
  std::size_t round = 0;
  std::size_t miner = 0;
  std::string global_model_digest;
  std::vector<std::size_t> selected;
  double train_delay = 0.0;  // max over selected of d_up + d_cp
  double d_bloc = 0.0;
  std::string prev_digest;
  std::string digest;

  std::string header() const {
    std::ostringstream os;
    os << std::setprecision(17) << round << '|' << miner << '|' << global_model_digest << '|';
    for (std::size_t k = 0; k < selected.size(); ++k) os << (k ? "," : "") << selected[k];
    os << '|' << train_delay << '|' << d_bloc << '|' << prev_digest;
    return os.str();
  }
  std::string compute_digest() const { return sha256_hex(header()); }
};

class Ledger {
 public:
  Ledger() {
    LedgerBlock genesis;
    genesis.global_model_digest = std::string(64, '0');
    genesis.prev_digest = std::string(64, '0');
    genesis.digest = genesis.compute_digest();
    blocks_.push_back(std::move(genesis));
  }

  const std::vector<LedgerBlock>& blocks() const noexcept { return blocks_; }
  const LedgerBlock& head() const { return blocks_.back(); }
  std::size_t height() const noexcept { return blocks_.size() - 1; }

  void append(LedgerBlock b) {
    if (b.prev_digest != head().digest) throw LedgerError("block does not extend the chain head");
    if (b.digest != b.compute_digest()) throw LedgerError("block digest does not match its contents");
    blocks_.push_back(std::move(b));
  }

  /// Recomputes every digest from genesis.
  bool verify_chain() const {
    for (std::size_t k = 0; k < blocks_.size(); ++k) {
      if (blocks_[k].digest != blocks_[k].compute_digest()) return false;
      if (k > 0 && blocks_[k].prev_digest != blocks_[k - 1].digest) return false;
    }
    return true;
  }

  /// One block per line:
  /// round miner model_digest prev_digest digest selected(csv) train_delay d_bloc
  void write(std::ostream& os) const {
    os << std::setprecision(17);
    for (const auto& b : blocks_) {
      os << b.round << ' ' << b.miner << ' ' << b.global_model_digest << ' ' << b.prev_digest << ' ' << b.digest
         << ' ';
      if (b.selected.empty()) os << '-';
      for (std::size_t k = 0; k < b.selected.size(); ++k) os << (k ? "," : "") << b.selected[k];
      os << ' ' << b.train_delay << ' ' << b.d_bloc << '\n';
    }
  }

  /// Rebuilds a ledger from `write` output, re-verifying every link.
  static Ledger read(std::istream& is) {
    std::vector<LedgerBlock> blocks;
    std::string line;
    while (std::getline(is, line)) {
      if (line.empty()) continue;
      std::istringstream ls(line);
      LedgerBlock b;
      std::string sel;
      if (!(ls >> b.round >> b.miner >> b.global_model_digest >> b.prev_digest >> b.digest >> sel >>
            b.train_delay >> b.d_bloc))
        throw LedgerError("malformed ledger line: " + line);
      if (sel != "-") {
        std::istringstream ss(sel);
        std::string tok;
        while (std::getline(ss, tok, ',')) b.selected.push_back(std::stoul(tok));
      }
      blocks.push_back(std::move(b));
    }
    if (blocks.empty()) throw LedgerError("ledger file has no genesis block");
    Ledger l;
    if (blocks.front().digest != l.head().digest) throw LedgerError("genesis block mismatch");
    for (std::size_t k = 1; k < blocks.size(); ++k) l.append(std::move(blocks[k]));
    return l;
  }

 private:
  std::vector<LedgerBlock> blocks_;
};

struct RoundRecord {
  std::size_t round = 0;
  std::vector<std::size_t> selected;
  std::string model_digest;  // digest of the aggregate the winner put in its block
  double train_delay = 0.0;
  double d_bloc = 0.0;
};

/// Races the miners (winner drawn with probability f_i/Σf), builds the
/// winner's block and appends it once the verifiers' own aggregate digest
/// matches the block's. A mismatch rejects the block.
inline const LedgerBlock& mine_and_append(Ledger& ledger, const RoundRecord& record,
                                          std::span<const double> mining_freqs, Rng& rng,
                                          const ModelVector& local_aggregate) {
  std::discrete_distribution<std::size_t> race(mining_freqs.begin(), mining_freqs.end());
  LedgerBlock b;
  b.round = record.round;
  b.miner = race(rng);
  b.global_model_digest = record.model_digest;
  b.selected = record.selected;
  b.train_delay = record.train_delay;
  b.d_bloc = record.d_bloc;
  b.prev_digest = ledger.head().digest;
  b.digest = b.compute_digest();
  if (model_digest(local_aggregate) != b.global_model_digest)
    throw LedgerError("round " + std::to_string(record.round) + ": block rejected, model digest mismatch");
  ledger.append(std::move(b));
  return ledger.head();
}

// ---------------------------------------------------------------------------
// Convergence bound
// ---------------------------------------------------------------------------

struct BoundInputs {
  double eta = 0.01;
  double local_iters = 20;
  double rounds = 100;
  double smoothness = 1.0;     // L
  double grad_bound = 1.0;     // G
  double initial_gap = 1.0;    // F(w(1)) − F(w*)
  std::vector<double> betas;
  std::vector<double> dataset_sizes;
};

struct BoundTerms {
  double optimisation = 0.0;    // 2ΔF/(ηHT)
  double participation = 0.0;   // 2ηLHG²·Σβ|D_i|/|D|·Σ(1−β)|D_i|/|D|
  double local_drift = 0.0;     // ηULHG²(ηH+1)·Σβ²|D_i|²/|D|²
  double absentee = 0.0;        // UG²·Σ(1−β)²|D_i|²/|D|²

  double total() const { return optimisation + participation + local_drift + absentee; }
};

inline BoundTerms lemma1_terms(const BoundInputs& b, double total_size) {
  if (b.betas.size() != b.dataset_sizes.size() || b.betas.empty())
    throw DomainError("bound needs one beta and dataset size per client");
  if (!(b.eta > 0 && b.local_iters > 0 && b.rounds > 0 && total_size > 0))
    throw DomainError("bound inputs must be positive");
  const double u = static_cast<double>(b.betas.size());
  const double g2 = b.grad_bound * b.grad_bound;
  double s_beta = 0, s_rest = 0, s_beta2 = 0, s_rest2 = 0;
  for (std::size_t i = 0; i < b.betas.size(); ++i) {
    const double share = b.dataset_sizes[i] / total_size;
    s_beta += b.betas[i] * share;
    s_rest += (1.0 - b.betas[i]) * share;
    s_beta2 += b.betas[i] * b.betas[i] * share * share;
    s_rest2 += (1.0 - b.betas[i]) * (1.0 - b.betas[i]) * share * share;
  }
  BoundTerms t;
  t.optimisation = 2.0 * b.initial_gap / (b.eta * b.local_iters * b.rounds);
  t.participation = 2.0 * b.eta * b.smoothness * b.local_iters * g2 * s_beta * s_rest;
  t.local_drift = b.eta * u * b.smoothness * b.local_iters * g2 * (b.eta * b.local_iters + 1.0) * s_beta2;
  t.absentee = u * g2 * s_rest2;
  return t;
}

inline double lemma1_bound(const BoundInputs& b, double total_size) { return lemma1_terms(b, total_size).total(); }

inline double lemma1_bound(const BoundInputs& b) {
  return lemma1_bound(b, std::accumulate(b.dataset_sizes.begin(), b.dataset_sizes.end(), 0.0));
}

}  // namespace bdfl
