#pragma once

#include <charconv>
#include <cstdint>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <system_error>
#include <vector>

#include "bdfl/errors.hpp"
#include "bdfl/simulation.hpp"

namespace bdfl {

/// The persisted projection of a RoundMetrics row.
struct MetricsRow {
  std::size_t round = 0;
  std::string scheduler;
  std::uint64_t seed = 0;
  double v = 0.0;
  std::size_t selected_count = 0;
  double round_delay = 0.0;
  double cum_avg_delay = 0.0;
  double d_bloc = 0.0;
  std::vector<double> z, f, f_bloc, e_total;
  double loss = 0.0;
  double accuracy = 0.0;
  std::size_t inner_iters = 0;
  std::vector<std::size_t> selected;
  double train_delay = 0.0;

  friend bool operator==(const MetricsRow&, const MetricsRow&) = default;
};

inline MetricsRow to_row(const RoundMetrics& m) {
  MetricsRow r;
  r.round = m.round;
  r.scheduler = to_string(m.scheduler);
  r.seed = m.seed;
  r.v = m.v;
  r.selected_count = m.selected.size();
  r.round_delay = m.round_delay;
  r.cum_avg_delay = m.cum_avg_delay;
  r.d_bloc = m.d_bloc;
  r.z = m.queue;
  r.f = m.cpu_freq;
  r.f_bloc = m.mining_freq;
  for (std::size_t i = 0; i < m.queue.size(); ++i) r.e_total.push_back(m.energy(i));
  r.loss = m.loss;
  r.accuracy = m.accuracy;
  r.inner_iters = m.inner_iters;
  r.selected = m.selected;
  r.train_delay = m.train_delay;
  return r;
}

inline std::vector<std::string> metrics_header(std::size_t num_clients) {
  std::vector<std::string> h{"round", "scheduler", "seed", "v", "selected_count", "round_delay_s", "cum_avg_delay_s",
                             "d_bloc_s"};
  for (std::size_t i = 0; i < num_clients; ++i) {
    const auto s = std::to_string(i);
    h.insert(h.end(), {"z_" + s, "f_" + s + "_hz", "f_bloc_" + s + "_hz", "e_total_" + s + "_j"});
  }
  h.insert(h.end(), {"loss", "accuracy", "inner_iters", "selected", "train_delay_s"});
  return h;
}

namespace detail {

inline std::string fmt_double(double x) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

template <typename T>
T parse_number(const std::string& s, const std::string& column) {
  T value{};
  const auto res = std::from_chars(s.data(), s.data() + s.size(), value);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
    throw std::runtime_error("metrics CSV: bad value '" + s + "' in column " + column);
  return value;
}

}  // namespace detail

/// CSV with a fixed header; floats in shortest round-trip form.
inline void write_metrics_csv(std::ostream& os, const std::vector<MetricsRow>& rows, std::size_t num_clients) {
  const auto header = metrics_header(num_clients);
  for (std::size_t k = 0; k < header.size(); ++k) os << (k ? "," : "") << header[k];
  os << '\n';
  using detail::fmt_double;
  for (const auto& r : rows) {
    os << r.round << ',' << r.scheduler << ',' << r.seed << ',' << fmt_double(r.v) << ',' << r.selected_count << ','
       << fmt_double(r.round_delay) << ',' << fmt_double(r.cum_avg_delay) << ',' << fmt_double(r.d_bloc);
    for (std::size_t i = 0; i < num_clients; ++i)
      os << ',' << fmt_double(r.z[i]) << ',' << fmt_double(r.f[i]) << ',' << fmt_double(r.f_bloc[i]) << ','
         << fmt_double(r.e_total[i]);
    os << ',' << fmt_double(r.loss) << ',' << fmt_double(r.accuracy) << ',' << r.inner_iters << ',';
    for (std::size_t k = 0; k < r.selected.size(); ++k) os << (k ? ";" : "") << r.selected[k];
    os << ',' << fmt_double(r.train_delay) << '\n';
  }
}

inline void write_metrics_csv(std::ostream& os, const std::vector<RoundMetrics>& metrics, std::size_t num_clients) {
  std::vector<MetricsRow> rows;
  rows.reserve(metrics.size());
  for (const auto& m : metrics) rows.push_back(to_row(m));
  write_metrics_csv(os, rows, num_clients);
}

inline void emit_metrics(const std::vector<RoundMetrics>& metrics, std::size_t num_clients, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  write_metrics_csv(out, metrics, num_clients);
  out.flush();
  if (!out) throw std::runtime_error("write failed for " + path);
}

inline std::vector<MetricsRow> read_metrics_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw std::runtime_error("metrics CSV: missing header");
  std::vector<std::string> header;
  {
    std::istringstream hs(line);
    std::string cell;
    while (std::getline(hs, cell, ',')) header.push_back(cell);
  }
  if (header.size() < 13 || (header.size() - 13) % 4 != 0) throw std::runtime_error("metrics CSV: bad header width");
  const std::size_t u = (header.size() - 13) / 4;
  if (header != metrics_header(u)) throw std::runtime_error("metrics CSV: unexpected header");

  using detail::parse_number;
  std::vector<MetricsRow> rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::size_t start = 0;
    for (;;) {
      const auto comma = line.find(',', start);
      cells.push_back(line.substr(start, comma - start));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    if (cells.size() != header.size()) throw std::runtime_error("metrics CSV: row width mismatch");
    MetricsRow r;
    std::size_t c = 0;
    auto next = [&] { return cells[c++]; };
    r.round = parse_number<std::size_t>(next(), "round");
    r.scheduler = next();
    r.seed = parse_number<std::uint64_t>(next(), "seed");
    r.v = parse_number<double>(next(), "v");
    r.selected_count = parse_number<std::size_t>(next(), "selected_count");
    r.round_delay = parse_number<double>(next(), "round_delay_s");
    r.cum_avg_delay = parse_number<double>(next(), "cum_avg_delay_s");
    r.d_bloc = parse_number<double>(next(), "d_bloc_s");
    for (std::size_t i = 0; i < u; ++i) {
      r.z.push_back(parse_number<double>(next(), "z"));
      r.f.push_back(parse_number<double>(next(), "f"));
      r.f_bloc.push_back(parse_number<double>(next(), "f_bloc"));
      r.e_total.push_back(parse_number<double>(next(), "e_total"));
    }
    r.loss = parse_number<double>(next(), "loss");
    r.accuracy = parse_number<double>(next(), "accuracy");
    r.inner_iters = parse_number<std::size_t>(next(), "inner_iters");
    {
      std::istringstream ss(next());
      std::string tok;
      while (std::getline(ss, tok, ';')) r.selected.push_back(parse_number<std::size_t>(tok, "selected"));
    }
    r.train_delay = parse_number<double>(next(), "train_delay_s");
    rows.push_back(std::move(r));
  }
  return rows;
}

}  // namespace bdfl
