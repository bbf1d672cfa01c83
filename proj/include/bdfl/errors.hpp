#pragma once

#include <stdexcept>
#include <string>

namespace bdfl {

// Precondition violated on a numeric argument (non-positive frequency, H = 0, ...).
class DomainError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A client whose uplink rate is zero cannot upload this round.
class UnschedulableClient : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Fewer than `min_clients` candidates survived the feasibility filter.
class RoundInfeasible : public std::runtime_error {
 public:
  RoundInfeasible(std::size_t round, const std::string& cause)
      : std::runtime_error("round " + std::to_string(round) + " infeasible: " + cause),
        round_(round),
        cause_(cause) {}
  std::size_t round() const noexcept { return round_; }
  const std::string& cause() const noexcept { return cause_; }

 private:
  std::size_t round_;
  std::string cause_;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class EigenNonConvergence : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DivergedTraining : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class LedgerError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace bdfl
