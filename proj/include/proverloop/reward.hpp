// SPDX-License-Identifier: Apache-2.0
#pragma once

// Reward engine: format reward, compilation-status reward, and the
// structured AST rewards (tactic count, automation level, state-change
// efficiency), combined into one scalar.

#include <cctype>
#include <cstddef>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "proverloop/errors.hpp"
#include "proverloop/jsonl.hpp"
#include "proverloop/verifier.hpp"

namespace proverloop {

struct RewardConfig {
  double r_format = 0.2;
  double r_success = 1.0;
  double r_failed = 0.0;
  // Structured terms are off by default; nonzero lambdas opt in.
  double lambda_tc = 0.0;
  double lambda_at = 0.0;
  double lambda_sc = 0.0;
  std::map<std::string, double> tactic_power;
  double unknown_tactic_power = 0.5;
  bool count_nested_tactics = true;

  Status validate() const {
    if (!(r_format < r_success))
      return Error{Errc::ConfigError, "r_format must be smaller than r_success"};
    for (const auto& [name, v] : tactic_power) {
      if (v < 0.0 || v > 1.0)
        return Error{Errc::ConfigError, "tactic power out of [0,1]: " + name};
    }
    if (unknown_tactic_power < 0.0 || unknown_tactic_power > 1.0)
      return Error{Errc::ConfigError, "unknown_tactic_power out of [0,1]"};
    return Ok{};
  }
};

inline Expected<RewardConfig> reward_config_from_json(const json& j) try {
  if (!j.is_object()) return Error{Errc::ConfigError, "reward config must be a json object"};
  RewardConfig cfg;
  cfg.r_format = j.value("r_format", cfg.r_format);
  cfg.r_success = j.value("r_success", cfg.r_success);
  cfg.r_failed = j.value("r_failed", cfg.r_failed);
  cfg.lambda_tc = j.value("lambda_tc", cfg.lambda_tc);
  cfg.lambda_at = j.value("lambda_at", cfg.lambda_at);
  cfg.lambda_sc = j.value("lambda_sc", cfg.lambda_sc);
  cfg.unknown_tactic_power = j.value("unknown_tactic_power", cfg.unknown_tactic_power);
  cfg.count_nested_tactics = j.value("count_nested_tactics", cfg.count_nested_tactics);
  if (j.contains("tactic_power")) {
    if (!j["tactic_power"].is_object())
      return Error{Errc::ConfigError, "tactic_power must be an object"};
    for (auto it = j["tactic_power"].begin(); it != j["tactic_power"].end(); ++it) {
      if (!it.value().is_number())
        return Error{Errc::ConfigError, "tactic power must be numeric: " + it.key()};
      cfg.tactic_power[it.key()] = it.value().get<double>();
    }
  }
  if (auto st = cfg.validate(); !st.ok()) return st.error();
  return cfg;
} catch (const json::exception& e) {
  return Error{Errc::ConfigError, std::string("malformed reward config: ") + e.what()};
}

inline Expected<RewardConfig> load_reward_config(const std::string& path) {
  auto text = read_file(path);
  if (!text.ok()) return text.error();
  auto j = parse_json(text.value(), "reward config");
  if (!j.ok()) return Error{Errc::ConfigError, "reward config is not valid json: " + path};
  return reward_config_from_json(j.value());
}

struct RewardBreakdown {
  bool format_ok = false;
  bool passed = false;
  double r_tactic_count = 0.0;
  double r_automation = 0.0;
  double r_state_change = 0.0;
  double final = 0.0;
  // Structured terms were requested (nonzero lambda) but could not be
  // computed from the available result.
  bool ast_fallback = false;
  int unknown_tactics = 0;
};

inline json reward_breakdown_to_json(const RewardBreakdown& b) {
  return json{{"format_ok", b.format_ok},
              {"passed", b.passed},
              {"r_tactic_count", b.r_tactic_count},
              {"r_automation", b.r_automation},
              {"r_state_change", b.r_state_change},
              {"final", b.final},
              {"ast_fallback", b.ast_fallback},
              {"unknown_tactics", b.unknown_tactics}};
}

namespace detail {

inline bool strictly_contains(const TacticTrace& outer, const TacticTrace& inner) {
  return inner.pos >= outer.pos && inner.end_pos <= outer.end_pos &&
         (inner.pos > outer.pos || inner.end_pos < outer.end_pos);
}

// The tactics that participate in structured rewards: all of them, or only
// outermost spans when nested entries are deduplicated.
inline std::vector<const TacticTrace*> counted_tactics(const TacticAst& ast,
                                                       bool count_nested) {
  std::vector<const TacticTrace*> out;
  out.reserve(ast.tactics.size());
  for (std::size_t i = 0; i < ast.tactics.size(); ++i) {
    if (!count_nested) {
      bool nested = false;
      for (std::size_t jx = 0; jx < ast.tactics.size(); ++jx) {
        if (jx != i && strictly_contains(ast.tactics[jx], ast.tactics[i])) {
          nested = true;
          break;
        }
      }
      if (nested) continue;
    }
    out.push_back(&ast.tactics[i]);
  }
  return out;
}

inline bool is_ident_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '_';
}

// Leading identifier of the tactic text at [pos, end_pos), with an optional
// trailing '!' or '?' (simp!, norm_num?, ...).
inline std::string leading_keyword(std::string_view code, std::size_t pos, std::size_t end_pos) {
  std::size_t i = pos;
  while (i < end_pos && (code[i] == ' ' || code[i] == '\t')) ++i;
  std::size_t j = i;
  while (j < end_pos && is_ident_char(code[j])) ++j;
  if (j < end_pos && (code[j] == '!' || code[j] == '?')) ++j;
  return std::string(code.substr(i, j - i));
}

}  // namespace detail

// Number of counted proof steps in the tactic array.
inline Expected<double> tactic_count_reward(const std::optional<TacticAst>& ast,
                                            bool count_nested = true) {
  if (!ast) return Error{Errc::MissingAst, "no tactic AST in verification result"};
  return static_cast<double>(detail::counted_tactics(*ast, count_nested).size());
}

// Mean power of the tactic keywords used, looked up in the configured
// dictionary. Unknown keywords fall back to the neutral default and are
// tallied via unknown_out.
inline Expected<double> automation_reward(const std::optional<TacticAst>& ast,
                                          std::string_view code,
                                          const std::map<std::string, double>& power,
                                          bool count_nested = true,
                                          double unknown_power = 0.5,
                                          int* unknown_out = nullptr) {
  if (!ast) return Error{Errc::MissingAst, "no tactic AST in verification result"};
  const auto counted = detail::counted_tactics(*ast, count_nested);
  if (counted.empty()) return 0.0;
  double sum = 0.0;
  for (const auto* t : counted) {
    if (t->end_pos > code.size())
      return Error{Errc::SpanOutOfRange,
                   "tactic span [" + std::to_string(t->pos) + "," + std::to_string(t->end_pos) +
                       ") exceeds code length " + std::to_string(code.size())};
    const std::string keyword = detail::leading_keyword(code, t->pos, t->end_pos);
    const auto it = power.find(keyword);
    if (it != power.end()) {
      sum += it->second;
    } else {
      sum += unknown_power;
      if (unknown_out) ++*unknown_out;
    }
  }
  return sum / static_cast<double>(counted.size());
}

// Mean per-tactic goal-reduction efficiency max(0, 1 - g_after/g_before).
// Tactics whose before-state has no goals contribute nothing and are
// excluded from the denominator.
inline Expected<double> state_change_reward(const std::optional<TacticAst>& ast,
                                            bool count_nested = true) {
  if (!ast) return Error{Errc::MissingAst, "no tactic AST in verification result"};
  const auto counted = detail::counted_tactics(*ast, count_nested);
  double sum = 0.0;
  int included = 0;
  for (const auto* t : counted) {
    auto before = goal_count(t->state_before);
    if (!before.ok()) return before.error();
    auto after = goal_count(t->state_after);
    if (!after.ok()) return after.error();
    if (before.value() == 0) continue;
    const double ratio =
        static_cast<double>(after.value()) / static_cast<double>(before.value());
    sum += std::max(0.0, 1.0 - ratio);
    ++included;
  }
  if (included == 0) return 0.0;
  return sum / static_cast<double>(included);
}

// Combines everything into the final scalar. Total: structured terms that
// cannot be computed (missing AST, missing code for keyword extraction, bad
// spans) contribute zero and raise the ast_fallback flag instead of failing.
inline RewardBreakdown combine(const RewardConfig& cfg, bool format_ok,
                               const VerificationResult& v, std::string_view code = {}) {
  RewardBreakdown b;
  b.format_ok = format_ok;
  b.passed = v.passed;

  const bool wants_structured =
      cfg.lambda_tc != 0.0 || cfg.lambda_at != 0.0 || cfg.lambda_sc != 0.0;
  if (v.passed && wants_structured) {
    if (cfg.lambda_tc != 0.0) {
      auto tc = tactic_count_reward(v.ast, cfg.count_nested_tactics);
      if (tc.ok()) b.r_tactic_count = tc.value(); else b.ast_fallback = true;
    }
    if (cfg.lambda_at != 0.0) {
      auto at = automation_reward(v.ast, code, cfg.tactic_power, cfg.count_nested_tactics,
                                  cfg.unknown_tactic_power, &b.unknown_tactics);
      if (at.ok()) b.r_automation = at.value(); else b.ast_fallback = true;
    }
    if (cfg.lambda_sc != 0.0) {
      auto sc = state_change_reward(v.ast, cfg.count_nested_tactics);
      if (sc.ok()) b.r_state_change = sc.value(); else b.ast_fallback = true;
    }
  }

  b.final = v.passed ? cfg.r_success : cfg.r_failed;
  if (format_ok) b.final += cfg.r_format;
  if (v.passed) {
    b.final += cfg.lambda_tc * b.r_tactic_count + cfg.lambda_at * b.r_automation +
               cfg.lambda_sc * b.r_state_change;
  }
  return b;
}

}  // namespace proverloop
