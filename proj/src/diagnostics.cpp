#include "nhmc/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>

namespace nhmc {

EssResult effective_sample_size(std::span<const double> series) {
  const std::size_t n = series.size();
  if (n < 10) throw std::invalid_argument("ESS needs at least 10 values");
  const double mean = std::accumulate(series.begin(), series.end(), 0.0) / static_cast<double>(n);
  auto autocov = [&](std::size_t lag) {
    double s = 0.0;
    for (std::size_t t = 0; t + lag < n; ++t) s += (series[t] - mean) * (series[t + lag] - mean);
    return s / static_cast<double>(n);
  };
  EssResult out;
  const double gamma0 = autocov(0);
  if (!(gamma0 > 0.0) || gamma0 <= 1e-300) {
    out.ess = 1.0;
    out.degenerate = true;
    return out;
  }
  // Paired sums Γ_m = γ_{2m} + γ_{2m+1}, kept while positive, forced non-increasing.
  double sum = 0.0;
  double previous = std::numeric_limits<double>::infinity();
  std::size_t pairs = 0;
  for (std::size_t m = 0; 2 * m + 1 < n; ++m) {
    const double gamma_even = m == 0 ? gamma0 : autocov(2 * m);
    double pair = gamma_even + autocov(2 * m + 1);
    if (!(pair > 0.0)) break;
    pair = std::min(pair, previous);
    previous = pair;
    sum += pair;
    ++pairs;
  }
  out.truncation_lag = 2 * pairs;
  const double variance_factor = -gamma0 + 2.0 * sum;  // σ²_asym
  const double ess = static_cast<double>(n) * gamma0 / variance_factor;
  out.ess = std::clamp(ess, std::numeric_limits<double>::min(), static_cast<double>(n));
  return out;
}

std::vector<double> marginal(const ChainTrace& trace, std::size_t coordinate, std::size_t skip) {
  std::vector<double> out;
  for (std::size_t i = skip; i < trace.states.size(); ++i) {
    out.push_back(trace.states[i][static_cast<Eigen::Index>(coordinate)]);
  }
  return out;
}

std::vector<std::vector<double>> accepted_move_lengths(const ChainTrace& trace) {
  const std::size_t d = trace.states.empty() ? 0 : static_cast<std::size_t>(trace.states.front().size());
  std::vector<std::vector<double>> out(d);
  for (std::size_t i = 0; i < trace.iterations(); ++i) {
    if (!trace.accepted[i]) continue;
    const Vector delta = trace.states[i + 1] - trace.states[i];
    for (std::size_t j = 0; j < d; ++j) out[j].push_back(std::abs(delta[static_cast<Eigen::Index>(j)]));
  }
  return out;
}

double posterior_mean_mse(std::span<const Vector> chain_means, const Vector& truth) {
  if (chain_means.empty()) throw std::invalid_argument("MSE needs at least one chain");
  double total = 0.0;
  for (const auto& m : chain_means) total += (m - truth).squaredNorm();
  return total / static_cast<double>(chain_means.size());
}

Vector chain_mean(const ChainTrace& trace) {
  if (trace.states.size() < 2) throw std::invalid_argument("chain mean needs at least one iteration");
  Vector sum = Vector::Zero(trace.states.front().size());
  for (std::size_t i = 1; i < trace.states.size(); ++i) sum += trace.states[i];
  return sum / static_cast<double>(trace.states.size() - 1);
}

double quantile(std::vector<double> values, double q) {
  if (values.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

double acceptance_rate(const ChainTrace& trace) {
  if (trace.iterations() == 0) return 0.0;
  const auto accepted = std::count(trace.accepted.begin(), trace.accepted.end(), std::uint8_t{1});
  return static_cast<double>(accepted) / static_cast<double>(trace.iterations());
}

double acceptance_rate(const ChainTrace& trace, std::size_t begin, std::size_t end) {
  end = std::min(end, trace.iterations());
  if (begin >= end) return 0.0;
  const auto accepted = std::count(trace.accepted.begin() + static_cast<std::ptrdiff_t>(begin),
                                   trace.accepted.begin() + static_cast<std::ptrdiff_t>(end), std::uint8_t{1});
  return static_cast<double>(accepted) / static_cast<double>(end - begin);
}

namespace {

std::vector<double> average_ranks(std::span<const double> v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double rank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t t = i; t <= j; ++t) ranks[order[t]] = rank;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

double spearman_correlation(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("rank correlation needs two equal series");
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  const double n = static_cast<double>(x.size());
  const double mean = (n + 1.0) / 2.0;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mean) * (ry[i] - mean);
    sxx += (rx[i] - mean) * (rx[i] - mean);
    syy += (ry[i] - mean) * (ry[i] - mean);
  }
  if (sxx == 0.0 || syy == 0.0) return std::numeric_limits<double>::quiet_NaN();
  return sxy / std::sqrt(sxx * syy);
}

ChainSummary summarize(const ChainTrace& trace, const std::string& algorithm,
                       std::size_t draws_per_step, std::size_t chain, std::optional<double> epsilon,
                       std::optional<std::size_t> steps, const GroundTruth& truth) {
  ChainSummary s;
  s.algorithm = algorithm;
  s.draws_per_step = draws_per_step;
  s.chain = chain;
  s.iterations = trace.iterations();
  s.acceptance = acceptance_rate(trace);
  s.epsilon = epsilon;
  s.steps = steps;
  s.forward_draws = trace.draws;
  s.wall_seconds = std::accumulate(trace.dt_seconds.begin(), trace.dt_seconds.end(), 0.0);
  s.mean = chain_mean(trace);
  const auto d = static_cast<std::size_t>(s.mean.size());
  const auto moves = accepted_move_lengths(trace);
  for (std::size_t j = 0; j < d; ++j) {
    const auto series = marginal(trace, j, 1);
    const double ess = series.size() >= 10 ? effective_sample_size(series).ess
                                           : std::numeric_limits<double>::quiet_NaN();
    s.ess.push_back(ess);
    s.ess_per_second.push_back(s.wall_seconds > 0 ? ess / s.wall_seconds
                                                  : std::numeric_limits<double>::quiet_NaN());
    s.move_quartiles.push_back({quantile(moves[j], 0.25), quantile(moves[j], 0.5), quantile(moves[j], 0.75)});
  }
  if (truth.posterior_mean) s.squared_error = (s.mean - *truth.posterior_mean).squaredNorm();
  if (truth.grid) {
    std::vector<ParamVector> samples(trace.states.begin() + 1, trace.states.end());
    s.kl = kl_divergence_binned(samples, *truth.grid, truth.kl_bin_size).value;
  }
  return s;
}

namespace {

std::string fmt(double v) {
  if (std::isnan(v)) return "";
  std::ostringstream out;
  out.precision(std::numeric_limits<double>::max_digits10);
  out << v;
  return out.str();
}

std::ofstream open_for_write(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

void write_row(std::ostream& out, const std::vector<std::string>& cells) {
  for (std::size_t i = 0; i < cells.size(); ++i) out << (i ? "," : "") << cells[i];
  out << '\n';
}

std::vector<double> numeric_fields(const ChainSummary& s) {
  std::vector<double> v{s.acceptance,
                        s.epsilon ? *s.epsilon : std::nan(""),
                        s.steps ? static_cast<double>(*s.steps) : std::nan(""),
                        static_cast<double>(s.forward_draws)};
  for (double e : s.ess) v.push_back(e);
  for (Eigen::Index j = 0; j < s.mean.size(); ++j) v.push_back(s.mean[j]);
  v.push_back(s.squared_error ? *s.squared_error : std::nan(""));
  v.push_back(s.kl ? *s.kl : std::nan(""));
  for (const auto& q : s.move_quartiles) v.insert(v.end(), q.begin(), q.end());
  return v;
}

}  // namespace

void write_summary_csv(const std::filesystem::path& path, std::span<const ChainSummary> rows,
                       std::size_t dimension) {
  auto out = open_for_write(path);
  std::vector<std::string> header{"algorithm", "N", "chain", "iterations", "acceptance", "epsilon", "L",
                                  "forward_draws"};
  for (std::size_t j = 1; j <= dimension; ++j) header.push_back("ess_" + std::to_string(j));
  for (std::size_t j = 1; j <= dimension; ++j) header.push_back("mean_" + std::to_string(j));
  header.push_back("sq_error");
  header.push_back("kl");
  for (std::size_t j = 1; j <= dimension; ++j) {
    for (const char* q : {"q25", "q50", "q75"}) header.push_back(std::string("move_") + q + "_" + std::to_string(j));
  }
  write_row(out, header);

  // Groups keep first-appearance order so output does not depend on sorting labels.
  std::vector<std::pair<std::string, std::size_t>> groups;
  for (const auto& s : rows) {
    const std::pair key{s.algorithm, s.draws_per_step};
    if (std::find(groups.begin(), groups.end(), key) == groups.end()) groups.push_back(key);
  }
  for (const auto& [algorithm, n] : groups) {
    std::vector<std::vector<double>> fields;
    std::size_t iterations = 0;
    for (const auto& s : rows) {
      if (s.algorithm != algorithm || s.draws_per_step != n) continue;
      fields.push_back(numeric_fields(s));
      iterations = s.iterations;
      std::vector<std::string> cells{s.algorithm, std::to_string(n), std::to_string(s.chain),
                                     std::to_string(s.iterations)};
      for (double v : fields.back()) cells.push_back(fmt(v));
      write_row(out, cells);
    }
    const std::size_t width = fields.front().size();
    std::vector<std::string> mean_cells{algorithm, std::to_string(n), "mean", std::to_string(iterations)};
    std::vector<std::string> sd_cells{algorithm, std::to_string(n), "sd", std::to_string(iterations)};
    for (std::size_t c = 0; c < width; ++c) {
      double sum = 0.0, count = 0.0;
      for (const auto& f : fields) if (!std::isnan(f[c])) { sum += f[c]; count += 1.0; }
      const double mean = count > 0 ? sum / count : std::nan("");
      double ss = 0.0;
      for (const auto& f : fields) if (!std::isnan(f[c])) ss += (f[c] - mean) * (f[c] - mean);
      const double sd = count > 1 ? std::sqrt(ss / (count - 1.0)) : std::nan("");
      mean_cells.push_back(fmt(mean));
      sd_cells.push_back(fmt(sd));
    }
    write_row(out, mean_cells);
    write_row(out, sd_cells);
  }
}

void write_timing_csv(const std::filesystem::path& path, std::span<const ChainSummary> rows) {
  auto out = open_for_write(path);
  const std::size_t d = rows.empty() ? 0 : rows.front().ess.size();
  std::vector<std::string> header{"algorithm", "N", "chain", "wall_seconds"};
  for (std::size_t j = 1; j <= d; ++j) header.push_back("ess_per_sec_" + std::to_string(j));
  write_row(out, header);
  for (const auto& s : rows) {
    std::vector<std::string> cells{s.algorithm, std::to_string(s.draws_per_step), std::to_string(s.chain),
                                   fmt(s.wall_seconds)};
    for (double e : s.ess_per_second) cells.push_back(fmt(e));
    write_row(out, cells);
  }
}

void write_trace_csv(const std::filesystem::path& path, const ChainTrace& trace) {
  auto out = open_for_write(path);
  const auto d = trace.states.empty() ? 0 : trace.states.front().size();
  std::vector<std::string> header{"iter"};
  for (Eigen::Index j = 1; j <= d; ++j) header.push_back("theta_" + std::to_string(j));
  header.push_back("accepted");
  header.push_back("log_accept");
  write_row(out, header);
  for (std::size_t i = 0; i < trace.states.size(); ++i) {
    std::vector<std::string> cells{std::to_string(i)};
    for (Eigen::Index j = 0; j < d; ++j) cells.push_back(fmt(trace.states[i][j]));
    cells.push_back(i == 0 ? "" : std::to_string(trace.accepted[i - 1]));
    cells.push_back(i == 0 ? "" : fmt(trace.log_accept[i - 1]));
    write_row(out, cells);
  }
}

void write_trace_timing_csv(const std::filesystem::path& path, const ChainTrace& trace) {
  auto out = open_for_write(path);
  out << "iter,dt_seconds\n";
  for (std::size_t i = 0; i < trace.dt_seconds.size(); ++i) out << i + 1 << ',' << fmt(trace.dt_seconds[i]) << '\n';
}

CsvTable read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  auto split = [](const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ss(line);
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    return cells;
  };
  CsvTable table;
  std::string line;
  if (std::getline(in, line)) table.header = split(line);
  while (std::getline(in, line)) table.rows.push_back(split(line));
  return table;
}

}  // namespace nhmc
