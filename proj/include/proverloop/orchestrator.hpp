// SPDX-License-Identifier: Apache-2.0
#pragma once

// Rollout orchestrator: drives the verifier-integrated multi-turn loop —
// generate, verify, inject feedback, regenerate — over configurable
// first-round rollout counts, per-iteration branch widths, and iteration
// budgets, producing scored transcripts and RL-ready groups.

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "proverloop/errors.hpp"
#include "proverloop/jsonl.hpp"
#include "proverloop/model.hpp"
#include "proverloop/policy.hpp"
#include "proverloop/pool.hpp"
#include "proverloop/reward.hpp"
#include "proverloop/transcript.hpp"
#include "proverloop/verifier.hpp"

namespace proverloop {

struct GenerationParams {
  double temperature = 0.6;
  int max_tokens = 16384;
  // Stopping right after a code block lets the loop verify immediately.
  std::vector<std::string> stop{"</code>"};
};

struct EpisodeConfig {
  int first_round_rollouts = 32;
  int branch_per_iteration = 1;  // the "#" in a "32-#" budget
  int max_iterations = 1;        // 0 = vanilla single shot
  double verify_timeout_s = 60.0;
  GenerationParams gen;
  std::uint64_t seed = 0;
  bool early_stop_on_success = false;  // off keeps pass@k counting unbiased
  std::string prompt_template = "{statement}";

  Status validate() const {
    if (first_round_rollouts < 1)
      return Error{Errc::ConfigError, "first_round_rollouts must be >= 1"};
    if (max_iterations < 0 || max_iterations > 8)
      return Error{Errc::ConfigError, "max_iterations must be in [0, 8]"};
    if (max_iterations >= 1 && branch_per_iteration < 1)
      return Error{Errc::ConfigError,
                   "branch_per_iteration must be >= 1 when iterating"};
    if (prompt_template.find("{statement}") == std::string::npos)
      return Error{Errc::ConfigError, "prompt_template must contain {statement}"};
    return Ok{};
  }
};

// Deterministic seed derivation: a statement-keyed base stream, rollout i
// of round zero, then a distinct stream per child branch. Tests rely on
// reproducing these.
inline std::uint64_t rollout_seed(std::uint64_t base, int rollout_index) {
  return base + static_cast<std::uint64_t>(rollout_index);
}
inline std::uint64_t child_seed(std::uint64_t parent, int child_index) {
  return parent * 8191 + static_cast<std::uint64_t>(child_index) + 1;
}
inline std::uint64_t statement_seed(std::uint64_t base, const std::string& statement_id) {
  const auto digest = sha256(statement_id);
  std::uint64_t h = 0;
  for (int i = 0; i < 8; ++i) h = (h << 8) | digest[static_cast<std::size_t>(i)];
  return base ^ h;
}

inline std::string apply_prompt_template(const std::string& tmpl, const std::string& statement) {
  const auto at = tmpl.find("{statement}");
  if (at == std::string::npos) return tmpl + statement;
  std::string out = tmpl;
  out.replace(at, std::string("{statement}").size(), statement);
  return out;
}

// One terminal rollout: the transcript as it stood when the branch ended,
// its reward, and how deep in the iteration cycle it finished.
struct ScoredTranscript {
  Transcript transcript;
  RewardBreakdown reward;
  int iteration_depth = 0;
  bool passed = false;
  std::string error;  // gateway failure note; empty on clean rollouts
};

struct EpisodeResult {
  std::string statement_id;
  std::vector<ScoredTranscript> transcripts;
  bool solved = false;
  int verifier_calls = 0;
  bool used_verifier_feedback = false;
};

class RolloutOrchestrator {
 public:
  RolloutOrchestrator(ModelGateway& model, VerifierGateway& verifier, RewardConfig rewards)
      : model_(model), verifier_(verifier), rewards_(std::move(rewards)) {}

  Expected<EpisodeResult> run_episode(const std::string& statement_id,
                                      const std::string& statement, const EpisodeConfig& cfg,
                                      std::size_t jobs = 1) {
    if (auto st = cfg.validate(); !st.ok()) return st.error();
    const std::string prompt0 = apply_prompt_template(cfg.prompt_template, statement);

    EpisodeResult episode;
    episode.statement_id = statement_id;

    auto run_rollout = [&](std::size_t i) {
      return run_branch(statement, prompt0, std::string{}, 0, rollout_seed(cfg.seed, (int)i),
                        cfg);
    };

    std::vector<BranchOutcome> outcomes;
    if (cfg.early_stop_on_success) {
      for (int i = 0; i < cfg.first_round_rollouts; ++i) {
        outcomes.push_back(run_rollout(static_cast<std::size_t>(i)));
        if (outcomes.back().solved) break;
      }
    } else {
      outcomes = parallel_map(static_cast<std::size_t>(cfg.first_round_rollouts), jobs,
                              run_rollout);
    }

    for (auto& o : outcomes) {
      for (auto& leaf : o.leaves) episode.transcripts.push_back(std::move(leaf));
      episode.verifier_calls += o.verifier_calls;
      episode.used_verifier_feedback = episode.used_verifier_feedback || o.used_feedback;
      episode.solved = episode.solved || o.solved;
    }
    return episode;
  }

  // Episodes run concurrently across statements; the per-episode budget is
  // spread over whatever worker share remains.
  Expected<std::vector<EpisodeResult>> run_statements(
      const std::vector<std::pair<std::string, std::string>>& items, const EpisodeConfig& cfg,
      std::size_t jobs = 1) {
    if (auto st = cfg.validate(); !st.ok()) return st.error();
    const std::size_t outer = std::min<std::size_t>(std::max<std::size_t>(jobs, 1), items.size());
    const std::size_t inner = std::max<std::size_t>(1, jobs / std::max<std::size_t>(outer, 1));
    auto results = parallel_map(items.size(), outer, [&](std::size_t i) {
      EpisodeConfig per_statement = cfg;
      per_statement.seed = statement_seed(cfg.seed, items[i].first);
      return run_episode(items[i].first, items[i].second, per_statement, inner);
    });
    std::vector<EpisodeResult> out;
    out.reserve(results.size());
    for (auto& r : results) {
      if (!r.ok()) return r.error();
      out.push_back(std::move(r).value());
    }
    return out;
  }

  struct DroppedGroup {
    std::string statement_id;
    std::string reason;
  };
  struct BatchBuild {
    std::vector<RolloutGroup> groups;
    std::vector<DroppedGroup> dropped;
  };

  // Per statement: take G scored transcripts, attach rewards and mask flags,
  // and apply the validity filter. Dropped groups are reported with the
  // reason rather than silently discarded.
  static Expected<BatchBuild> build_rl_batch(const std::vector<EpisodeResult>& episodes,
                                             std::size_t group_size) {
    if (group_size < 2)
      return Error{Errc::BadArguments, "group size must be >= 2"};
    BatchBuild out;
    for (const auto& ep : episodes) {
      if (ep.transcripts.size() < group_size)
        return Error{Errc::InsufficientRollouts,
                     ep.statement_id + " has " + std::to_string(ep.transcripts.size()) +
                         " rollouts, need " + std::to_string(group_size)};
      RolloutGroup g;
      g.statement_id = ep.statement_id;
      for (std::size_t i = 0; i < group_size; ++i) {
        const auto& leaf = ep.transcripts[i];
        g.rewards.push_back(leaf.reward.final);
        g.valid_flags.push_back(leaf.passed ? 1 : 0);
        g.sequences.push_back(token_batch_for(leaf.transcript));
      }
      const GroupFilter filter = filter_group(g);
      if (filter == GroupFilter::Keep) {
        out.groups.push_back(std::move(g));
      } else {
        out.dropped.push_back({ep.statement_id, group_filter_reason(filter)});
      }
    }
    return out;
  }

  // Byte-per-token batch over the transcript text. Log-probabilities are
  // zero placeholders for the training stack; the mask flags are real.
  static TokenBatch token_batch_for(const Transcript& t) {
    const MaskSpanSet masks = compute_mask_spans(t);
    TokenBatch batch;
    const std::size_t n = t.raw.size();
    batch.logprob_old.assign(n, 0.0);
    batch.logprob_new.assign(n, 0.0);
    batch.masked.assign(n, 0);
    for (const auto& span : masks.spans()) {
      for (std::size_t i = span.start; i < span.end && i < n; ++i) batch.masked[i] = 1;
    }
    return batch;
  }

 private:
  struct BranchOutcome {
    std::vector<ScoredTranscript> leaves;
    int verifier_calls = 0;
    bool used_feedback = false;
    bool solved = false;
  };

  static VerificationResult failed_result() {
    VerificationResult v;
    v.passed = false;
    return v;
  }

  ScoredTranscript malformed_leaf(const std::string& statement, std::string raw, int depth,
                                  std::string error_note) {
    ScoredTranscript leaf;
    leaf.transcript.statement = statement;
    leaf.transcript.raw = std::move(raw);
    leaf.reward = combine(rewards_, /*format_ok=*/false, failed_result());
    leaf.iteration_depth = depth;
    leaf.error = std::move(error_note);
    return leaf;
  }

  BranchOutcome run_branch(const std::string& statement, const std::string& prompt0,
                           const std::string& raw_so_far, int depth, std::uint64_t seed,
                           const EpisodeConfig& cfg) {
    BranchOutcome out;

    GenerationRequest req;
    req.prompt = prompt0 + raw_so_far;
    req.temperature = cfg.gen.temperature;
    req.max_tokens = cfg.gen.max_tokens;
    req.stop = cfg.gen.stop;
    req.seed = seed;

    auto gen = model_.generate(req);
    if (!gen.ok()) {
      out.leaves.push_back(malformed_leaf(statement, raw_so_far, depth,
                                          "model gateway: " + gen.error().to_string()));
      return out;
    }
    const GenerationResult& g = gen.value();

    std::string raw = raw_so_far + g.text;
    auto parsed = parse_transcript(raw, statement);
    if (!parsed.ok() && parsed.error().code == Errc::UnclosedDelimiter &&
        g.finish_reason == FinishReason::Stop &&
        parsed.error().message.find(kCodeClose) != std::string::npos) {
      // The serving stack swallowed the stop sequence; restore the close tag.
      for (const auto& s : cfg.gen.stop) {
        if (s == kCodeClose) {
          raw += kCodeClose;
          parsed = parse_transcript(raw, statement);
          break;
        }
      }
    }
    if (!parsed.ok()) {
      out.leaves.push_back(
          malformed_leaf(statement, std::move(raw), depth, parsed.error().to_string()));
      return out;
    }
    Transcript transcript = std::move(parsed).value();

    const auto code = extract_latest_code(transcript);
    if (!code || code->empty()) {
      ScoredTranscript leaf;
      leaf.transcript = std::move(transcript);
      leaf.reward = combine(rewards_, /*format_ok=*/false, failed_result());
      leaf.iteration_depth = depth;
      leaf.error = "no code block in rollout";
      out.leaves.push_back(std::move(leaf));
      return out;
    }

    auto verified = verifier_.verify_sync(VerificationRequest{*code, cfg.verify_timeout_s});
    ++out.verifier_calls;
    if (!verified.ok()) {
      ScoredTranscript leaf;
      leaf.transcript = std::move(transcript);
      leaf.reward = combine(rewards_, /*format_ok=*/true, failed_result());
      leaf.iteration_depth = depth;
      leaf.error = "verifier gateway: " + verified.error().to_string();
      out.leaves.push_back(std::move(leaf));
      return out;
    }
    const VerificationResult& v = verified.value();

    if (v.passed || depth >= cfg.max_iterations) {
      ScoredTranscript leaf;
      leaf.transcript = std::move(transcript);
      leaf.reward = combine(rewards_, /*format_ok=*/true, v, *code);
      leaf.iteration_depth = depth;
      leaf.passed = v.passed;
      out.leaves.push_back(std::move(leaf));
      out.solved = v.passed;
      return out;
    }

    // Failed with budget remaining: inject feedback and branch.
    auto with_feedback = append_feedback(std::move(transcript), v);
    if (!with_feedback.ok()) {  // unreachable given the code block above
      out.leaves.push_back(
          malformed_leaf(statement, raw, depth, with_feedback.error().to_string()));
      return out;
    }
    out.used_feedback = true;
    const std::string& raw_next = with_feedback.value().raw;

    for (int b = 0; b < cfg.branch_per_iteration; ++b) {
      BranchOutcome child =
          run_branch(statement, prompt0, raw_next, depth + 1, child_seed(seed, b), cfg);
      for (auto& leaf : child.leaves) out.leaves.push_back(std::move(leaf));
      out.verifier_calls += child.verifier_calls;
      out.used_feedback = out.used_feedback || child.used_feedback;
      out.solved = out.solved || child.solved;
      if (out.solved && cfg.early_stop_on_success) break;
    }
    return out;
  }

  ModelGateway& model_;
  VerifierGateway& verifier_;
  RewardConfig rewards_;
};

// --- persistence -------------------------------------------------------------

inline json episode_to_json(const EpisodeResult& ep) {
  json transcripts = json::array();
  for (const auto& leaf : ep.transcripts) {
    json masks = json::array();
    const MaskSpanSet mask_set = compute_mask_spans(leaf.transcript);
    for (const auto& m : mask_set.spans())
      masks.push_back(json::array({m.start, m.end}));
    transcripts.push_back({{"iteration_depth", leaf.iteration_depth},
                           {"passed", leaf.passed},
                           {"error", leaf.error},
                           {"raw", leaf.transcript.raw},
                           {"mask_spans", std::move(masks)},
                           {"reward", reward_breakdown_to_json(leaf.reward)}});
  }
  return json{{"statement_id", ep.statement_id},
              {"solved", ep.solved},
              {"verifier_calls", ep.verifier_calls},
              {"used_verifier_feedback", ep.used_verifier_feedback},
              {"transcripts", std::move(transcripts)}};
}

inline Expected<EpisodeResult> episode_from_json(const json& j) try {
  if (!j.is_object() || !j.contains("statement_id") || !j.contains("transcripts"))
    return Error{Errc::MalformedResponse, "episode record missing statement_id/transcripts"};
  EpisodeResult ep;
  ep.statement_id = j["statement_id"].get<std::string>();
  ep.solved = j.value("solved", false);
  ep.verifier_calls = j.value("verifier_calls", 0);
  ep.used_verifier_feedback = j.value("used_verifier_feedback", false);
  for (const auto& tj : j["transcripts"]) {
    ScoredTranscript leaf;
    leaf.iteration_depth = tj.value("iteration_depth", 0);
    leaf.passed = tj.value("passed", false);
    leaf.error = tj.value("error", std::string{});
    auto parsed = parse_transcript(tj.value("raw", std::string{}));
    if (parsed.ok()) {
      leaf.transcript = std::move(parsed).value();
    } else {
      leaf.transcript.raw = tj.value("raw", std::string{});
    }
    if (tj.contains("reward")) {
      const auto& rj = tj["reward"];
      leaf.reward.format_ok = rj.value("format_ok", false);
      leaf.reward.passed = rj.value("passed", false);
      leaf.reward.r_tactic_count = rj.value("r_tactic_count", 0.0);
      leaf.reward.r_automation = rj.value("r_automation", 0.0);
      leaf.reward.r_state_change = rj.value("r_state_change", 0.0);
      leaf.reward.final = rj.value("final", 0.0);
      leaf.reward.ast_fallback = rj.value("ast_fallback", false);
      leaf.reward.unknown_tactics = rj.value("unknown_tactics", 0);
    }
    ep.transcripts.push_back(std::move(leaf));
  }
  return ep;
} catch (const json::exception& e) {
  return Error{Errc::MalformedResponse, std::string("malformed episode record: ") + e.what()};
}

}  // namespace proverloop
