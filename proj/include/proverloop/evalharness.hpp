// SPDX-License-Identifier: Apache-2.0
#pragma once

// Evaluation harness: the unbiased pass@k estimator, training-record
// metrics (solve-all ratio, verifier use rate, per-iteration success), and
// benchmark report emission as JSON, aligned text, or CSV.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "proverloop/errors.hpp"
#include "proverloop/jsonl.hpp"
#include "proverloop/orchestrator.hpp"

namespace proverloop {

// P(at least one of k samples passes | n attempts, c successes)
//   = 1 - C(n-c, k) / C(n, k)
// Exact integer combinatorics while they fit in a double-safe range, else
// stable log-space evaluation.
inline Expected<double> pass_at_k(long long n, long long c, long long k) {
  if (n < 0 || c < 0 || c > n || k < 1 || k > n)
    return Error{Errc::BadArguments, "need 0 <= c <= n and 1 <= k <= n"};
  if (c == 0) return 0.0;
  if (n - c < k) return 1.0;

  if (n <= 62) {
    // C(62, 31) still fits comfortably in 64 bits.
    auto choose = [](long long nn, long long kk) -> unsigned long long {
      if (kk < 0 || kk > nn) return 0;
      kk = std::min(kk, nn - kk);
      unsigned long long r = 1;
      for (long long i = 1; i <= kk; ++i) {
        r = r * static_cast<unsigned long long>(nn - kk + i) /
            static_cast<unsigned long long>(i);
      }
      return r;
    };
    const double miss = static_cast<double>(choose(n - c, k)) /
                        static_cast<double>(choose(n, k));
    return 1.0 - miss;
  }

  double log_miss = 0.0;
  for (long long i = 0; i < k; ++i) {
    log_miss += std::log(static_cast<double>(n - c - i)) -
                std::log(static_cast<double>(n - i));
  }
  return 1.0 - std::exp(log_miss);
}

struct StatementStats {
  std::string statement_id;
  int attempts = 0;   // terminal rollouts
  int successes = 0;
  // cumulative successes among rollouts that ended at iteration depth <= d
  std::vector<int> successes_by_depth;
  bool verifier_used = false;
  int verifier_calls = 0;
  long long response_bytes = 0;
};

inline StatementStats stats_of(const EpisodeResult& ep) {
  StatementStats s;
  s.statement_id = ep.statement_id;
  s.verifier_used = ep.used_verifier_feedback;
  s.verifier_calls = ep.verifier_calls;
  int max_depth = 0;
  for (const auto& leaf : ep.transcripts) max_depth = std::max(max_depth, leaf.iteration_depth);
  s.successes_by_depth.assign(static_cast<std::size_t>(max_depth) + 1, 0);
  for (const auto& leaf : ep.transcripts) {
    ++s.attempts;
    s.response_bytes += static_cast<long long>(leaf.transcript.raw.size());
    if (leaf.passed) {
      ++s.successes;
      for (std::size_t d = static_cast<std::size_t>(leaf.iteration_depth);
           d < s.successes_by_depth.size(); ++d)
        ++s.successes_by_depth[d];
    }
  }
  return s;
}

struct BenchmarkReport {
  std::size_t statements = 0;
  std::vector<int> ks;
  std::vector<double> pass_at_k_values;  // aligned with ks
  double solve_all_ratio = 0.0;
  double verifier_use_rate = 0.0;
  double mean_response_length = 0.0;
  // solved_at_iteration[d] = fraction of statements with a success at depth <= d
  std::vector<double> solved_at_iteration;
  long long total_attempts = 0;
  long long total_verifier_calls = 0;
};

// Streams once over the episode results. pass@k per statement uses that
// statement's own attempt count (k is clamped to it) and is averaged across
// statements.
inline Expected<BenchmarkReport> aggregate(const std::vector<EpisodeResult>& episodes,
                                           std::vector<int> ks) {
  if (episodes.empty()) return Error{Errc::BadArguments, "no episodes to aggregate"};
  std::sort(ks.begin(), ks.end());
  ks.erase(std::unique(ks.begin(), ks.end()), ks.end());

  BenchmarkReport report;
  report.statements = episodes.size();
  report.ks = ks;
  report.pass_at_k_values.assign(ks.size(), 0.0);

  std::size_t solve_all = 0;
  std::size_t used_verifier = 0;
  long long total_bytes = 0;
  std::size_t max_depth = 0;
  std::vector<StatementStats> stats;
  stats.reserve(episodes.size());
  for (const auto& ep : episodes) {
    stats.push_back(stats_of(ep));
    const auto& s = stats.back();
    max_depth = std::max(max_depth, s.successes_by_depth.size());
    report.total_attempts += s.attempts;
    report.total_verifier_calls += s.verifier_calls;
    total_bytes += s.response_bytes;
    if (s.attempts > 0 && s.successes == s.attempts) ++solve_all;
    if (s.verifier_used) ++used_verifier;
    for (std::size_t i = 0; i < ks.size(); ++i) {
      if (s.attempts == 0) continue;
      const long long k = std::min<long long>(ks[i], s.attempts);
      auto p = pass_at_k(s.attempts, s.successes, k);
      if (!p.ok()) return p.error();
      report.pass_at_k_values[i] += p.value();
    }
  }
  const double n_stmts = static_cast<double>(episodes.size());
  for (auto& v : report.pass_at_k_values) v /= n_stmts;
  report.solve_all_ratio = static_cast<double>(solve_all) / n_stmts;
  report.verifier_use_rate = static_cast<double>(used_verifier) / n_stmts;
  report.mean_response_length =
      report.total_attempts == 0
          ? 0.0
          : static_cast<double>(total_bytes) / static_cast<double>(report.total_attempts);

  report.solved_at_iteration.assign(max_depth, 0.0);
  for (const auto& s : stats) {
    for (std::size_t d = 0; d < max_depth; ++d) {
      const std::size_t use = std::min(d, s.successes_by_depth.empty()
                                              ? 0
                                              : s.successes_by_depth.size() - 1);
      if (!s.successes_by_depth.empty() && s.successes_by_depth[use] > 0)
        report.solved_at_iteration[d] += 1.0;
    }
  }
  for (auto& v : report.solved_at_iteration) v /= n_stmts;
  return report;
}

inline json report_to_json(const BenchmarkReport& r) {
  json pk = json::object();
  for (std::size_t i = 0; i < r.ks.size(); ++i)
    pk["pass@" + std::to_string(r.ks[i])] = r.pass_at_k_values[i];
  return json{{"statements", r.statements},
              {"pass_at_k", std::move(pk)},
              {"solve_all_ratio", r.solve_all_ratio},
              {"verifier_use_rate", r.verifier_use_rate},
              {"mean_response_length", r.mean_response_length},
              {"solved_at_iteration", r.solved_at_iteration},
              {"total_attempts", r.total_attempts},
              {"total_verifier_calls", r.total_verifier_calls}};
}

namespace detail {

inline std::string fixed3(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

}  // namespace detail

inline std::string render_report_table(const BenchmarkReport& r) {
  std::vector<std::pair<std::string, std::string>> rows;
  rows.emplace_back("statements", std::to_string(r.statements));
  rows.emplace_back("attempts", std::to_string(r.total_attempts));
  rows.emplace_back("verifier_calls", std::to_string(r.total_verifier_calls));
  rows.emplace_back("solve_all_ratio", detail::fixed3(r.solve_all_ratio));
  rows.emplace_back("verifier_use_rate", detail::fixed3(r.verifier_use_rate));
  rows.emplace_back("mean_response_length", detail::fixed3(r.mean_response_length));
  for (std::size_t i = 0; i < r.ks.size(); ++i)
    rows.emplace_back("pass@" + std::to_string(r.ks[i]),
                      detail::fixed3(r.pass_at_k_values[i]));
  for (std::size_t d = 0; d < r.solved_at_iteration.size(); ++d)
    rows.emplace_back("solved<=iter" + std::to_string(d),
                      detail::fixed3(r.solved_at_iteration[d]));

  std::size_t width = 0;
  for (const auto& [k, v] : rows) width = std::max(width, k.size());
  std::string out;
  for (const auto& [k, v] : rows) {
    out += k;
    out.append(width - k.size() + 2, ' ');
    out += v;
    out += '\n';
  }
  return out;
}

inline std::string report_to_csv(const BenchmarkReport& r) {
  std::string header = "statements,attempts,verifier_calls,solve_all_ratio,verifier_use_rate,"
                       "mean_response_length";
  std::string row = std::to_string(r.statements) + "," + std::to_string(r.total_attempts) +
                    "," + std::to_string(r.total_verifier_calls) + "," +
                    detail::fixed3(r.solve_all_ratio) + "," +
                    detail::fixed3(r.verifier_use_rate) + "," +
                    detail::fixed3(r.mean_response_length);
  for (std::size_t i = 0; i < r.ks.size(); ++i) {
    header += ",pass@" + std::to_string(r.ks[i]);
    row += "," + detail::fixed3(r.pass_at_k_values[i]);
  }
  for (std::size_t d = 0; d < r.solved_at_iteration.size(); ++d) {
    header += ",solved_le_iter" + std::to_string(d);
    row += "," + detail::fixed3(r.solved_at_iteration[d]);
  }
  return header + "\n" + row + "\n";
}

// --- benchmark statements -----------------------------------------------------
// JSONL: {id, informal, formal_statement, header}. Loaders are format-only;
// the datasets themselves are not vendored.

struct StatementRecord {
  std::string id;
  std::string informal;
  std::string formal_statement;
  std::string header;
};

inline Expected<StatementRecord> statement_from_json(const json& j) try {
  if (!j.is_object() || !j.contains("id"))
    return Error{Errc::MalformedResponse, "statement record missing id"};
  StatementRecord r;
  r.id = j["id"].get<std::string>();
  r.informal = j.value("informal", std::string{});
  r.formal_statement = j.value("formal_statement", std::string{});
  r.header = j.value("header", std::string{});
  if (j.contains("statement") && r.formal_statement.empty())
    r.formal_statement = j["statement"].get<std::string>();
  return r;
} catch (const json::exception& e) {
  return Error{Errc::MalformedResponse, std::string("malformed statement record: ") + e.what()};
}

inline Expected<std::vector<StatementRecord>> load_statements_jsonl(const std::string& path) {
  auto records = read_jsonl(path);
  if (!records.ok()) return records.error();
  std::vector<StatementRecord> out;
  for (const auto& j : records.value()) {
    auto r = statement_from_json(j);
    if (!r.ok()) return r.error();
    out.push_back(std::move(r).value());
  }
  return out;
}

// Problem text plus the fenced formal statement, in the layout the proving
// prompt expects.
inline std::string compose_statement(const StatementRecord& r) {
  std::string out;
  if (!r.informal.empty()) {
    out += "# Problem: ";
    out += r.informal;
    out += '\n';
  }
  out += "# Formal statement:\n```lean4\n";
  if (!r.header.empty()) {
    out += r.header;
    if (out.back() != '\n') out += '\n';
    out += '\n';
  }
  out += r.formal_statement;
  if (out.back() != '\n') out += '\n';
  out += "```";
  return out;
}

}  // namespace proverloop
