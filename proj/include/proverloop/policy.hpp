// SPDX-License-Identifier: Apache-2.0
#pragma once

// Policy objective arithmetic: group-normalized advantages, the group
// validity filter, asymmetric ratio clipping, and the token-level (DAPO)
// and sample-level (GRPO) aggregations. This module computes objective
// values and per-token terms only; gradients belong to the training stack.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "proverloop/errors.hpp"
#include "proverloop/jsonl.hpp"

namespace proverloop {

// Per-token log-probabilities under the old and current policy, plus mask
// flags for verifier-injected tokens. All arrays share one length.
struct TokenBatch {
  std::vector<double> logprob_old;
  std::vector<double> logprob_new;
  std::vector<std::uint8_t> masked;

  std::size_t size() const { return logprob_old.size(); }

  bool consistent() const {
    return logprob_new.size() == logprob_old.size() && masked.size() == logprob_old.size();
  }
};

struct RolloutGroup {
  std::string statement_id;
  std::vector<TokenBatch> sequences;
  std::vector<double> rewards;
  std::vector<std::uint8_t> valid_flags;

  std::size_t size() const { return sequences.size(); }
};

struct ClipConfig {
  double eps_low = 0.2;
  double eps_high = 0.28;

  Status validate() const {
    if (!(0.0 < eps_low && eps_low <= eps_high && eps_high < 1.0))
      return Error{Errc::ConfigError, "need 0 < eps_low <= eps_high < 1"};
    return Ok{};
  }
};

inline constexpr double kAdvantageStdFloor = 1e-8;

// (R_i - mean) / std with the population standard deviation. Groups whose
// rewards do not vary should have been filtered out upstream, so a
// vanishing std is an error rather than a silent zero.
inline Expected<std::vector<double>> group_advantages(const std::vector<double>& rewards) {
  if (rewards.size() < 2)
    return Error{Errc::BadArguments, "advantage normalization needs at least 2 rewards"};
  double mean = 0.0;
  for (double r : rewards) mean += r;
  mean /= static_cast<double>(rewards.size());
  double var = 0.0;
  for (double r : rewards) var += (r - mean) * (r - mean);
  var /= static_cast<double>(rewards.size());
  const double std_dev = std::sqrt(var);
  if (std_dev < kAdvantageStdFloor)
    return Error{Errc::DegenerateGroup, "group reward std below " +
                                            std::to_string(kAdvantageStdFloor)};
  std::vector<double> out;
  out.reserve(rewards.size());
  for (double r : rewards) out.push_back((r - mean) / std_dev);
  return out;
}

enum class GroupFilter { Keep, DropSolvedNone, DropSolvedAll };

inline const char* group_filter_reason(GroupFilter f) {
  switch (f) {
    case GroupFilter::Keep: return "keep";
    case GroupFilter::DropSolvedNone: return "solved-none";
    case GroupFilter::DropSolvedAll: return "solved-all";
  }
  return "?";
}

// A group trains only when the valid count is strictly between 0 and G.
inline GroupFilter filter_group(const RolloutGroup& g) {
  std::size_t valid = 0;
  for (auto f : g.valid_flags)
    if (f) ++valid;
  if (valid == 0) return GroupFilter::DropSolvedNone;
  if (valid == g.valid_flags.size()) return GroupFilter::DropSolvedAll;
  return GroupFilter::Keep;
}

// One clipped importance-weighted term:
//   min(r * A, clip(r, 1 - eps_low, 1 + eps_high) * A)
inline double clipped_term(double ratio, double advantage, const ClipConfig& clip) {
  const double clipped =
      std::min(std::max(ratio, 1.0 - clip.eps_low), 1.0 + clip.eps_high);
  return std::min(ratio * advantage, clipped * advantage);
}

struct ObjectiveResult {
  double value = 0.0;
  // Per sequence, per token; masked positions hold 0.
  std::vector<std::vector<double>> per_token_terms;
};

namespace detail {

struct GroupTerms {
  std::vector<std::vector<double>> terms;
  std::vector<std::size_t> unmasked_counts;
};

inline Expected<GroupTerms> per_token_terms(const RolloutGroup& g, const ClipConfig& clip) {
  if (g.sequences.size() != g.rewards.size() || g.sequences.size() < 2)
    return Error{Errc::BadArguments, "group needs G >= 2 sequences with matching rewards"};
  auto advantages = group_advantages(g.rewards);
  if (!advantages.ok()) return advantages.error();

  GroupTerms out;
  out.terms.reserve(g.sequences.size());
  out.unmasked_counts.reserve(g.sequences.size());
  for (std::size_t i = 0; i < g.sequences.size(); ++i) {
    const TokenBatch& seq = g.sequences[i];
    if (!seq.consistent())
      return Error{Errc::BadArguments, "token batch arrays have mismatched lengths"};
    std::vector<double> terms(seq.size(), 0.0);
    std::size_t unmasked = 0;
    for (std::size_t t = 0; t < seq.size(); ++t) {
      if (seq.masked[t]) continue;
      const double ratio = std::exp(seq.logprob_new[t] - seq.logprob_old[t]);
      terms[t] = clipped_term(ratio, advantages.value()[i], clip);
      ++unmasked;
    }
    out.terms.push_back(std::move(terms));
    out.unmasked_counts.push_back(unmasked);
  }
  return out;
}

}  // namespace detail

// Token-level aggregation: every unmasked token across the group carries
// equal weight. Masked tokens contribute to neither the numerator nor the
// token count.
inline Expected<ObjectiveResult> dapo_objective(const RolloutGroup& g, const ClipConfig& clip) {
  auto computed = detail::per_token_terms(g, clip);
  if (!computed.ok()) return computed.error();
  auto& gt = computed.value();

  double numer = 0.0;
  std::size_t denom = 0;
  for (std::size_t i = 0; i < gt.terms.size(); ++i) {
    for (double term : gt.terms[i]) numer += term;
    denom += gt.unmasked_counts[i];
  }
  if (denom == 0) return Error{Errc::EmptyAfterMask, "every token in the group is masked"};

  ObjectiveResult out;
  out.value = numer / static_cast<double>(denom);
  out.per_token_terms = std::move(gt.terms);
  return out;
}

// Sample-level aggregation: tokens are averaged within each sequence first,
// then sequences are averaged. Long sequences therefore contribute less per
// token than under the token-level objective.
inline Expected<double> grpo_objective(const RolloutGroup& g, const ClipConfig& clip) {
  auto computed = detail::per_token_terms(g, clip);
  if (!computed.ok()) return computed.error();
  const auto& gt = computed.value();

  double sum = 0.0;
  for (std::size_t i = 0; i < gt.terms.size(); ++i) {
    if (gt.unmasked_counts[i] == 0)
      return Error{Errc::EmptyAfterMask,
                   "sequence " + std::to_string(i) + " is fully masked"};
    double seq_sum = 0.0;
    for (double term : gt.terms[i]) seq_sum += term;
    sum += seq_sum / static_cast<double>(gt.unmasked_counts[i]);
  }
  return sum / static_cast<double>(gt.terms.size());
}

// --- group records (JSONL) ----------------------------------------------------
// One record per group:
//   {statement_id, G, rewards, token_counts, masked_counts,
//    objective_dapo, objective_grpo}
// Records may carry explicit per-token data under "sequences"
// ([{logprob_old, logprob_new, masked}, ...]); otherwise token and mask
// counts reconstruct a ratio-one batch, which is value-equivalent for both
// objectives.

inline json group_record_to_json(const RolloutGroup& g) {
  json token_counts = json::array();
  json masked_counts = json::array();
  for (const auto& seq : g.sequences) {
    std::size_t masked = 0;
    for (auto m : seq.masked)
      if (m) ++masked;
    token_counts.push_back(seq.size());
    masked_counts.push_back(masked);
  }
  json valid = json::array();
  for (auto f : g.valid_flags) valid.push_back(static_cast<bool>(f));
  return json{{"statement_id", g.statement_id},
              {"G", g.size()},
              {"rewards", g.rewards},
              {"token_counts", std::move(token_counts)},
              {"masked_counts", std::move(masked_counts)},
              {"valid_flags", std::move(valid)}};
}

inline Expected<RolloutGroup> group_from_record(const json& j) try {
  if (!j.is_object() || !j.contains("rewards") || !j["rewards"].is_array())
    return Error{Errc::MalformedResponse, "group record missing rewards array"};
  RolloutGroup g;
  g.statement_id = j.value("statement_id", std::string{});
  g.rewards = j["rewards"].get<std::vector<double>>();
  if (j.contains("G") && j["G"].get<std::size_t>() != g.rewards.size())
    return Error{Errc::MalformedResponse, "group record G inconsistent with rewards"};

  if (j.contains("sequences")) {
    if (!j["sequences"].is_array() || j["sequences"].size() != g.rewards.size())
      return Error{Errc::MalformedResponse, "sequences inconsistent with rewards"};
    for (const auto& sj : j["sequences"]) {
      TokenBatch seq;
      if (!sj.contains("logprob_old") || !sj.contains("logprob_new"))
        return Error{Errc::MalformedResponse, "sequence missing logprob arrays"};
      seq.logprob_old = sj["logprob_old"].get<std::vector<double>>();
      seq.logprob_new = sj["logprob_new"].get<std::vector<double>>();
      if (sj.contains("masked")) {
        for (const auto& m : sj["masked"]) seq.masked.push_back(m.get<bool>() ? 1 : 0);
      } else {
        seq.masked.assign(seq.logprob_old.size(), 0);
      }
      if (!seq.consistent())
        return Error{Errc::MalformedResponse, "sequence arrays have mismatched lengths"};
      g.sequences.push_back(std::move(seq));
    }
  } else {
    if (!j.contains("token_counts") || !j["token_counts"].is_array() ||
        j["token_counts"].size() != g.rewards.size())
      return Error{Errc::MalformedResponse, "group record missing token_counts"};
    std::vector<std::size_t> masked_counts(g.rewards.size(), 0);
    if (j.contains("masked_counts")) {
      masked_counts = j["masked_counts"].get<std::vector<std::size_t>>();
      if (masked_counts.size() != g.rewards.size())
        return Error{Errc::MalformedResponse, "masked_counts inconsistent with rewards"};
    }
    for (std::size_t i = 0; i < g.rewards.size(); ++i) {
      const auto& count = j["token_counts"][i];
      if (!count.is_number_integer() || count.get<long long>() < 0)
        return Error{Errc::MalformedResponse, "token_counts must be nonnegative integers"};
      const auto n = count.get<std::size_t>();
      if (masked_counts[i] > n)
        return Error{Errc::MalformedResponse, "masked_counts exceeds token_counts"};
      TokenBatch seq;
      seq.logprob_old.assign(n, 0.0);
      seq.logprob_new.assign(n, 0.0);
      seq.masked.assign(n, 0);
      for (std::size_t t = 0; t < masked_counts[i]; ++t) seq.masked[t] = 1;
      g.sequences.push_back(std::move(seq));
    }
  }

  if (j.contains("valid_flags")) {
    for (const auto& f : j["valid_flags"]) g.valid_flags.push_back(f.get<bool>() ? 1 : 0);
    if (g.valid_flags.size() != g.rewards.size())
      return Error{Errc::MalformedResponse, "valid_flags inconsistent with rewards"};
  }
  return g;
} catch (const json::exception& e) {
  return Error{Errc::MalformedResponse, std::string("malformed group record: ") + e.what()};
}

}  // namespace proverloop
