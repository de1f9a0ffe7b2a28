#pragma once

// Experiment runner and reports: per-episode rows, aggregate metrics, CSV
// and JSON emission, and comparison tables across methods.

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cstdio>
#include <cstdint>
#include <fstream>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"
#include "voxpack/buffered.hpp"
#include "voxpack/packenv.hpp"
#include "voxpack/policies.hpp"

namespace voxpack {

/// (u* - u) / u*.
inline double gap(double u_star, double u) {
  if (!(u_star > 0.0)) throw std::invalid_argument("gap: reference utility must be positive");
  return (u_star - u) / u_star;
}

inline double mean_of(const std::vector<double>& xs) {
  if (xs.empty()) return 0.0;
  double s = 0.0;
  for (double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

/// Population variance (divisor n).
inline double variance_of(const std::vector<double>& xs) {
  if (xs.empty()) return 0.0;
  const double m = mean_of(xs);
  double s = 0.0;
  for (double x : xs) s += (x - m) * (x - m);
  return s / static_cast<double>(xs.size());
}

struct EpisodeRow {
  std::uint64_t seed = 0;
  double utility = 0.0;
  int count = 0;  // placed objects
  double product_utility = 0.0;
  int decisions = 0;
  double decision_seconds = 0.0;
};

struct RunReport {
  std::string method;
  std::string dataset;
  ContainerDims container;
  int buffer = 1;
  std::vector<EpisodeRow> rows;  // in seed order
  std::optional<double> reference_utility;

  std::vector<double> utilities() const {
    std::vector<double> u;
    for (const auto& r : rows) u.push_back(r.utility);
    return u;
  }
  double mean_utility() const { return mean_of(utilities()); }
  double variance() const { return variance_of(utilities()); }
  double mean_count() const {
    std::vector<double> c;
    for (const auto& r : rows) c.push_back(r.count);
    return mean_of(c);
  }
  double mean_product_utility() const {
    std::vector<double> c;
    for (const auto& r : rows) c.push_back(r.product_utility);
    return mean_of(c);
  }
  /// Mean seconds per placement decision.
  double mean_decision_seconds() const {
    double s = 0.0;
    long long n = 0;
    for (const auto& r : rows) {
      s += r.decision_seconds;
      n += r.decisions;
    }
    return n ? s / static_cast<double>(n) : 0.0;
  }
  std::optional<double> gap_to_reference() const {
    if (!reference_utility) return std::nullopt;
    return gap(*reference_utility, mean_utility());
  }
};

struct ExperimentConfig {
  std::string method;
  std::string dataset_name = "polycubes";
  std::vector<std::uint64_t> seeds;
  int buffer = 1;
  std::string ordering = "lfss";  // buffered runs only
  int threads = 1;
};

inline std::vector<std::uint64_t> seed_range(std::uint64_t first, std::uint64_t n) {
  std::vector<std::uint64_t> s;
  for (std::uint64_t i = 0; i < n; ++i) s.push_back(first + i);
  return s;
}

using PolicyFactory = std::function<std::unique_ptr<PlacementPolicy>()>;
using OrderingFactory = std::function<std::unique_ptr<ObjectOrdering>()>;

/// Emits each seed's problem and rolls the policy to termination. Episodes
/// may run on several threads; rows always come back in seed order.
inline RunReport run_experiment(const PolicyFactory& make_policy, const Dataset& dataset,
                                const ContainerSpec& spec, const ExperimentConfig& cfg,
                                const OrderingFactory& make_ordering_fn = {}) {
  spec.validate();
  if (cfg.buffer < 1) throw std::invalid_argument("run_experiment: buffer must be >= 1");
  RunReport rep;
  rep.method = cfg.method;
  rep.dataset = cfg.dataset_name;
  rep.container = spec.dims();
  rep.buffer = cfg.buffer;
  rep.rows.resize(cfg.seeds.size());

  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mu;
  auto worker = [&] {
    try {
      auto policy = make_policy();
      std::unique_ptr<ObjectOrdering> ordering;
      if (cfg.buffer > 1) {
        ordering = make_ordering_fn ? make_ordering_fn() : make_ordering(cfg.ordering);
      }
      for (std::size_t i; (i = next++) < cfg.seeds.size();) {
        const std::uint64_t seed = cfg.seeds[i];
        const ProblemSequence p = emit_problem(dataset, spec.dims(), seed);
        EpisodeResult r;
        if (cfg.buffer > 1) {
          r = run_buffered_episode(*ordering, *policy, dataset, spec, p, seed, cfg.buffer);
        } else {
          r = run_episode(*policy, dataset, spec, p, seed);
        }
        rep.rows[i] = {seed, r.utility, r.placed, r.product_utility, r.decisions,
                       r.decision_seconds};
      }
    } catch (...) {
      std::lock_guard<std::mutex> lock(error_mu);
      if (!error) error = std::current_exception();
      next = cfg.seeds.size();
    }
  };
  const int n_threads = std::max(1, cfg.threads);
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::thread> ts;
    for (int t = 0; t < n_threads; ++t) ts.emplace_back(worker);
    for (auto& t : ts) t.join();
  }
  if (error) std::rethrow_exception(error);
  return rep;
}

// ---------------------------------------------------------------------------
// Emission

/// Shortest text that parses back to the same double.
inline std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

/// Per-episode rows. Timing is machine-dependent and only written on request,
/// so default output is byte-stable across runs.
inline void write_csv(std::ostream& os, const RunReport& rep, bool with_timing = false) {
  os << "seed,utility,count,product_utility";
  if (with_timing) os << ",decisions,decision_seconds";
  os << '\n';
  for (const auto& r : rep.rows) {
    os << r.seed << ',' << format_double(r.utility) << ',' << r.count << ','
       << format_double(r.product_utility);
    if (with_timing) os << ',' << r.decisions << ',' << format_double(r.decision_seconds);
    os << '\n';
  }
}

inline nlohmann::json report_to_json(const RunReport& rep) {
  nlohmann::json rows = nlohmann::json::array();
  std::vector<std::uint64_t> seeds;
  for (const auto& r : rep.rows) {
    rows.push_back({{"seed", r.seed},
                    {"utility", r.utility},
                    {"count", r.count},
                    {"product_utility", r.product_utility}});
    seeds.push_back(r.seed);
  }
  nlohmann::json j = {
      {"method", rep.method},
      {"dataset", rep.dataset},
      {"container", {rep.container.sx, rep.container.sy, rep.container.sz}},
      {"buffer", rep.buffer},
      {"seeds", seeds},
      {"aggregates",
       {{"episodes", rep.rows.size()},
        {"mean_utility", rep.mean_utility()},
        {"variance", rep.variance()},
        {"mean_count", rep.mean_count()},
        {"mean_product_utility", rep.mean_product_utility()},
        {"mean_decision_seconds", rep.mean_decision_seconds()}}},
      {"rows", std::move(rows)}};
  if (rep.reference_utility) {
    j["reference_utility"] = *rep.reference_utility;
    j["gap"] = *rep.gap_to_reference();
  }
  return j;
}

inline RunReport report_from_json(const nlohmann::json& j) {
  RunReport rep;
  rep.method = j.at("method").get<std::string>();
  rep.dataset = j.value("dataset", "");
  const auto& c = j.at("container");
  rep.container = {c.at(0).get<int>(), c.at(1).get<int>(), c.at(2).get<int>()};
  rep.buffer = j.value("buffer", 1);
  for (const auto& r : j.at("rows")) {
    EpisodeRow row;
    row.seed = r.at("seed").get<std::uint64_t>();
    row.utility = r.at("utility").get<double>();
    row.count = r.at("count").get<int>();
    row.product_utility = r.at("product_utility").get<double>();
    rep.rows.push_back(row);
  }
  // Timing is not stored per row; carry the aggregate through one pseudo row.
  const double t = j.at("aggregates").value("mean_decision_seconds", 0.0);
  if (!rep.rows.empty()) {
    rep.rows.front().decisions = 1;
    rep.rows.front().decision_seconds = t;
  }
  if (j.contains("reference_utility")) rep.reference_utility = j["reference_utility"].get<double>();
  return rep;
}

inline void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write '" + path + "'");
  f << text;
  if (!f) throw std::runtime_error("write failed for '" + path + "'");
}

struct ComparisonRow {
  std::string method;
  double mean_utility = 0.0;
  double gap = 0.0;
  double variance = 0.0;
  double mean_count = 0.0;
  double mean_decision_seconds = 0.0;
  bool reference = false;
};

/// Gap of every method against the best mean utility; the first method
/// reaching the best mean is the reference.
inline std::vector<ComparisonRow> compare_reports(const std::vector<RunReport>& reps) {
  if (reps.empty()) return {};
  std::size_t best = 0;
  for (std::size_t i = 1; i < reps.size(); ++i)
    if (reps[i].mean_utility() > reps[best].mean_utility()) best = i;
  const double u_star = reps[best].mean_utility();
  std::vector<ComparisonRow> out;
  for (std::size_t i = 0; i < reps.size(); ++i) {
    const auto& r = reps[i];
    out.push_back({r.method, r.mean_utility(), i == best ? 0.0 : gap(u_star, r.mean_utility()),
                   r.variance(), r.mean_count(), r.mean_decision_seconds(), i == best});
  }
  return out;
}

/// Markdown table: method, utility, gap, variance, count, time per decision.
inline void write_comparison(std::ostream& os, const std::vector<ComparisonRow>& rows) {
  os << "| method | utility | gap | variance | count | ms/decision |\n";
  os << "|---|---|---|---|---|---|\n";
  char buf[256];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "| %s%s | %.2f%% | %.1f%% | %.4f | %.1f | %.3f |\n",
                  r.method.c_str(), r.reference ? " (ref)" : "", 100.0 * r.mean_utility,
                  100.0 * r.gap, r.variance, r.mean_count, 1000.0 * r.mean_decision_seconds);
    os << buf;
  }
}

}  // namespace voxpack
