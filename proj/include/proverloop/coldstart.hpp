// SPDX-License-Identifier: Apache-2.0
#pragma once

// Cold-start forge: turns (statement, CoT, proof, feedback, rewrite)
// correction tuples into the four SFT scenarios, with verifier feedback
// masked wherever it lands, and curates RL prompts by pass-rate filtering.

#include <optional>
#include <string>
#include <vector>

#include "proverloop/errors.hpp"
#include "proverloop/jsonl.hpp"
#include "proverloop/spans.hpp"
#include "proverloop/transcript.hpp"

namespace proverloop {

// One verified correction pair. A failed proof must carry the feedback that
// failed it; a rewrite must carry its re-verification verdict.
struct CorrectionTuple {
  std::string statement;
  std::string cot;
  std::string proof;
  std::optional<std::string> feedback;
  std::optional<std::string> rewrite_analysis;
  std::optional<std::string> rewrite;
  bool proof_passed = false;
  std::optional<bool> rewrite_passed;

  Status validate() const {
    if (!proof_passed && !feedback)
      return Error{Errc::InvalidTuple, "failed proof without verifier feedback"};
    if (rewrite && !rewrite_passed)
      return Error{Errc::InvalidTuple, "rewrite present without re-verification verdict"};
    return Ok{};
  }
};

enum class Scenario { S1, S2, S3, S4 };

inline const char* scenario_name(Scenario s) {
  switch (s) {
    case Scenario::S1: return "S1";
    case Scenario::S2: return "S2";
    case Scenario::S3: return "S3";
    case Scenario::S4: return "S4";
  }
  return "?";
}

inline Expected<Scenario> scenario_from(std::string_view s) {
  if (s == "S1") return Scenario::S1;
  if (s == "S2") return Scenario::S2;
  if (s == "S3") return Scenario::S3;
  if (s == "S4") return Scenario::S4;
  return Error{Errc::ConfigError, "unknown scenario tag"};
}

// One SFT record. Mask spans are character offsets into the concatenation
// input_text + output_text.
struct ScenarioSample {
  Scenario scenario;
  std::string input_text;
  std::string output_text;
  MaskSpanSet mask_spans;
};

namespace detail {

inline std::string wrap_code_block(const std::string& source) {
  std::string out;
  out += kCodeOpen;
  out += "\n```lean4\n";
  out += source;
  out += "\n```\n";
  out += kCodeClose;
  return out;
}

inline std::string wrap_feedback_block(const std::string& feedback) {
  std::string out;
  out += kFeedbackOpen;
  out += feedback;
  out += kFeedbackClose;
  return out;
}

inline void join_part(std::string& acc, const std::string& part) {
  if (part.empty()) return;
  if (!acc.empty()) acc += '\n';
  acc += part;
}

}  // namespace detail

// Builds every scenario the tuple qualifies for:
//   S1: statement -> cot + proof + feedback + analysis + rewrite
//   S2: statement + cot + proof + feedback -> analysis + rewrite
//   S3: statement -> cot + proof
//   S4: statement + cot -> proof
// S1/S2 need a failed proof whose rewrite re-verified; S3/S4 need a passing
// proof. A failed tuple whose rewrite did not re-verify yields nothing.
// Every emitted sample is reparsed to guarantee the transcript round-trips,
// and mask spans are derived from that parse.
inline Expected<std::vector<ScenarioSample>> build_scenarios(const CorrectionTuple& t) {
  if (auto st = t.validate(); !st.ok()) return st.error();

  std::vector<ScenarioSample> out;

  auto finish = [&](Scenario sc, std::string input,
                    std::string output) -> std::optional<Error> {
    auto parsed = parse_transcript(input + output);
    if (!parsed.ok())
      return Error{Errc::InvalidTuple, std::string(scenario_name(sc)) +
                                           " does not reparse: " + parsed.error().to_string()};
    ScenarioSample sample;
    sample.scenario = sc;
    sample.input_text = std::move(input);
    sample.output_text = std::move(output);
    sample.mask_spans = compute_mask_spans(parsed.value());
    out.push_back(std::move(sample));
    return std::nullopt;
  };

  if (!t.proof_passed && t.rewrite && t.rewrite_passed.value_or(false)) {
    const std::string proof_block = detail::wrap_code_block(t.proof);
    const std::string feedback_block = detail::wrap_feedback_block(*t.feedback);
    const std::string rewrite_block = detail::wrap_code_block(*t.rewrite);

    std::string s1_output;
    detail::join_part(s1_output, t.cot);
    detail::join_part(s1_output, proof_block);
    detail::join_part(s1_output, feedback_block);
    if (t.rewrite_analysis) detail::join_part(s1_output, *t.rewrite_analysis);
    detail::join_part(s1_output, rewrite_block);
    if (auto err = finish(Scenario::S1, t.statement, std::move(s1_output))) return *err;

    std::string s2_input;
    detail::join_part(s2_input, t.statement);
    detail::join_part(s2_input, t.cot);
    detail::join_part(s2_input, proof_block);
    detail::join_part(s2_input, feedback_block);
    s2_input += '\n';
    std::string s2_output;
    if (t.rewrite_analysis) detail::join_part(s2_output, *t.rewrite_analysis);
    detail::join_part(s2_output, rewrite_block);
    if (auto err = finish(Scenario::S2, std::move(s2_input), std::move(s2_output))) return *err;
  }

  if (t.proof_passed) {
    const std::string proof_block = detail::wrap_code_block(t.proof);

    std::string s3_output;
    detail::join_part(s3_output, t.cot);
    detail::join_part(s3_output, proof_block);
    if (auto err = finish(Scenario::S3, t.statement, std::move(s3_output))) return *err;

    std::string s4_input;
    detail::join_part(s4_input, t.statement);
    detail::join_part(s4_input, t.cot);
    s4_input += '\n';
    if (auto err = finish(Scenario::S4, std::move(s4_input), proof_block)) return *err;
  }

  return out;
}

// --- pass-rate filtering ------------------------------------------------------

struct Rational {
  long long num = 0;
  long long den = 1;
};

// Keep iff lo <= successes/attempts <= hi, compared exactly in integers.
// The defaults keep the statements worth training on: solvable sometimes,
// solved rarely enough to still teach.
inline Expected<bool> pass_rate_filter(const std::vector<bool>& outcomes,
                                       Rational lo = {1, 8}, Rational hi = {1, 2}) {
  if (outcomes.empty()) return Error{Errc::EmptyOutcomes, "no pass@N outcomes to filter on"};
  if (lo.den <= 0 || hi.den <= 0)
    return Error{Errc::BadArguments, "rational bounds need positive denominators"};
  long long successes = 0;
  for (bool b : outcomes)
    if (b) ++successes;
  const long long n = static_cast<long long>(outcomes.size());
  const bool at_least_lo = successes * lo.den >= n * lo.num;
  const bool at_most_hi = successes * hi.den <= n * hi.num;
  return at_least_lo && at_most_hi;
}

// --- persistence -------------------------------------------------------------

inline Expected<CorrectionTuple> tuple_from_json(const json& j) try {
  if (!j.is_object() || !j.contains("statement") || !j.contains("proof"))
    return Error{Errc::MalformedResponse, "tuple record missing statement/proof"};
  CorrectionTuple t;
  t.statement = j["statement"].get<std::string>();
  t.cot = j.value("cot", std::string{});
  t.proof = j["proof"].get<std::string>();
  if (j.contains("feedback") && !j["feedback"].is_null())
    t.feedback = j["feedback"].get<std::string>();
  if (j.contains("rewrite_analysis") && !j["rewrite_analysis"].is_null())
    t.rewrite_analysis = j["rewrite_analysis"].get<std::string>();
  if (j.contains("rewrite") && !j["rewrite"].is_null())
    t.rewrite = j["rewrite"].get<std::string>();
  t.proof_passed = j.value("proof_passed", false);
  if (j.contains("rewrite_passed") && !j["rewrite_passed"].is_null())
    t.rewrite_passed = j["rewrite_passed"].get<bool>();
  return t;
} catch (const json::exception& e) {
  return Error{Errc::MalformedResponse, std::string("malformed tuple record: ") + e.what()};
}

inline json sample_to_json(const ScenarioSample& s) {
  json masks = json::array();
  for (const auto& m : s.mask_spans.spans()) masks.push_back(json::array({m.start, m.end}));
  return json{{"scenario", scenario_name(s.scenario)},
              {"input_text", s.input_text},
              {"output_text", s.output_text},
              {"mask_spans", std::move(masks)}};
}

}  // namespace proverloop
