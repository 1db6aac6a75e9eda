// SPDX-License-Identifier: Apache-2.0
#pragma once

// Multi-turn transcript protocol: the delimited format the model and the
// framework exchange. A transcript interleaves free-form thought text,
// <code>...</code> blocks holding Lean 4 source, and verifier feedback
// injected between <interpreter>...</interpreter> delimiters. The legacy
// <compiler_results>...</compiler_results> tags are accepted as a synonym
// for interpreter feedback.

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "proverloop/errors.hpp"
#include "proverloop/jsonl.hpp"
#include "proverloop/spans.hpp"

namespace proverloop {

enum class SegmentKind { Thought, CodeBlock, VerifierFeedback };

inline const char* segment_kind_name(SegmentKind k) {
  switch (k) {
    case SegmentKind::Thought: return "thought";
    case SegmentKind::CodeBlock: return "code";
    case SegmentKind::VerifierFeedback: return "feedback";
  }
  return "?";
}

inline constexpr std::string_view kCodeOpen = "<code>";
inline constexpr std::string_view kCodeClose = "</code>";
inline constexpr std::string_view kFeedbackOpen = "<interpreter>";
inline constexpr std::string_view kFeedbackClose = "</interpreter>";
inline constexpr std::string_view kLegacyFeedbackOpen = "<compiler_results>";
inline constexpr std::string_view kLegacyFeedbackClose = "</compiler_results>";

// One typed region of a transcript.
//
// `text` is the segment content without delimiters. For Thought and
// CodeBlock segments `span` covers exactly the bytes of `text`; for
// VerifierFeedback it covers the whole delimited region including both
// tags, since none of those bytes are model-generated.
struct Segment {
  SegmentKind kind;
  std::string text;
  CharSpan span;
  bool legacy_tags = false;  // feedback delimited by <compiler_results>

  friend bool operator==(const Segment&, const Segment&) = default;
};

struct Transcript {
  std::string statement;
  std::string raw;
  std::vector<Segment> segments;

  bool has_code_block() const {
    for (const auto& s : segments)
      if (s.kind == SegmentKind::CodeBlock) return true;
    return false;
  }

  friend bool operator==(const Transcript&, const Transcript&) = default;
};

namespace detail {

struct DelimiterHit {
  std::size_t offset;
  SegmentKind kind;
  std::string_view open;
  std::string_view close;
  bool legacy;
};

inline std::optional<DelimiterHit> find_next_open(std::string_view raw, std::size_t from) {
  std::optional<DelimiterHit> best;
  auto consider = [&](std::string_view open, std::string_view close, SegmentKind kind,
                      bool legacy) {
    const auto at = raw.find(open, from);
    if (at == std::string_view::npos) return;
    if (!best || at < best->offset) best = DelimiterHit{at, kind, open, close, legacy};
  };
  consider(kCodeOpen, kCodeClose, SegmentKind::CodeBlock, false);
  consider(kFeedbackOpen, kFeedbackClose, SegmentKind::VerifierFeedback, false);
  consider(kLegacyFeedbackOpen, kLegacyFeedbackClose, SegmentKind::VerifierFeedback, true);
  return best;
}

inline bool all_whitespace(std::string_view s) {
  return s.find_first_not_of(" \t\r\n") == std::string_view::npos;
}

}  // namespace detail

// Splits raw model output into ordered Thought / CodeBlock /
// VerifierFeedback segments. Total over its input: every outcome is either
// a Transcript or a structured error. Whitespace-only runs between
// delimited regions are kept as inter-segment gaps rather than empty
// Thought segments.
inline Expected<Transcript> parse_transcript(std::string raw, std::string statement = "") {
  Transcript t;
  t.statement = std::move(statement);
  t.raw = std::move(raw);
  const std::string_view view = t.raw;

  std::size_t pos = 0;
  while (pos < view.size()) {
    const auto open = detail::find_next_open(view, pos);
    const std::size_t thought_end = open ? open->offset : view.size();
    if (thought_end > pos) {
      std::string_view gap = view.substr(pos, thought_end - pos);
      if (!detail::all_whitespace(gap)) {
        t.segments.push_back(Segment{SegmentKind::Thought, std::string(gap),
                                     CharSpan{pos, thought_end}});
      }
    }
    if (!open) break;

    const std::size_t content_start = open->offset + open->open.size();
    const std::size_t close_at = view.find(open->close, content_start);
    if (close_at == std::string_view::npos) {
      return Error{Errc::UnclosedDelimiter,
                   std::string("missing ") + std::string(open->close), open->offset};
    }
    const auto inner_open = detail::find_next_open(view, content_start);
    if (inner_open && inner_open->offset < close_at) {
      return Error{Errc::NestedDelimiter,
                   std::string(inner_open->open) + " inside " + std::string(open->open),
                   inner_open->offset};
    }

    Segment seg;
    seg.kind = open->kind;
    seg.text = std::string(view.substr(content_start, close_at - content_start));
    seg.legacy_tags = open->legacy;
    if (open->kind == SegmentKind::VerifierFeedback) {
      seg.span = CharSpan{open->offset, close_at + open->close.size()};
    } else {
      seg.span = CharSpan{content_start, close_at};
    }
    t.segments.push_back(std::move(seg));
    pos = close_at + open->close.size();
  }
  return t;
}

// Rebuilds the raw text from segment texts plus the inter-segment gaps.
// Equals t.raw whenever the segments are consistent with it, which the
// round-trip property test relies on.
inline std::string render(const Transcript& t) {
  std::string out;
  out.reserve(t.raw.size());
  std::size_t pos = 0;
  for (const auto& seg : t.segments) {
    if (seg.span.start > pos) out.append(t.raw, pos, seg.span.start - pos);
    switch (seg.kind) {
      case SegmentKind::Thought:
      case SegmentKind::CodeBlock:
        out += seg.text;
        break;
      case SegmentKind::VerifierFeedback:
        out += seg.legacy_tags ? kLegacyFeedbackOpen : kFeedbackOpen;
        out += seg.text;
        out += seg.legacy_tags ? kLegacyFeedbackClose : kFeedbackClose;
        break;
    }
    pos = seg.span.end;
  }
  if (pos < t.raw.size()) out.append(t.raw, pos, t.raw.size() - pos);
  return out;
}

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r' ||
                        s.front() == '\n'))
    s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r' ||
                        s.back() == '\n'))
    s.remove_suffix(1);
  return s;
}

}  // namespace detail

// Strips an optional ```lean4 / ``` fence from a code block body, leaving
// bare Lean source. Bodies without a fence come back trimmed but otherwise
// untouched.
inline std::string strip_code_fence(std::string_view body) {
  std::string_view s = detail::trim(body);
  if (s.substr(0, 3) == "```") {
    const auto eol = s.find('\n');
    s = (eol == std::string_view::npos) ? std::string_view{} : s.substr(eol + 1);
    // closing fence on its own line
    const auto fence = s.rfind("```");
    if (fence != std::string_view::npos &&
        detail::all_whitespace(s.substr(fence + 3))) {
      s = s.substr(0, fence);
    }
    s = detail::trim(s);
  }
  return std::string(s);
}

// The candidate proof is the LAST code block: a revision appends a new
// block, so later blocks supersede earlier ones.
inline std::optional<std::string> extract_latest_code(const Transcript& t) {
  for (auto it = t.segments.rbegin(); it != t.segments.rend(); ++it) {
    if (it->kind == SegmentKind::CodeBlock) return strip_code_fence(it->text);
  }
  return std::nullopt;
}

// Appends one VerifierFeedback segment holding `feedback_text` (the
// rendered diagnostic). Each call appends; idempotence is not promised.
inline Expected<Transcript> append_feedback_text(Transcript t, std::string feedback_text) {
  if (!t.has_code_block())
    return Error{Errc::NoCodeBlock, "transcript has no code block to attach feedback to"};
  Segment seg;
  seg.kind = SegmentKind::VerifierFeedback;
  seg.text = std::move(feedback_text);
  const std::size_t start = t.raw.size();
  t.raw += kFeedbackOpen;
  t.raw += seg.text;
  t.raw += kFeedbackClose;
  seg.span = CharSpan{start, t.raw.size()};
  t.segments.push_back(std::move(seg));
  return t;
}

// Mask spans are exactly the VerifierFeedback segment spans, delimiters
// included: neither the delimiters nor the feedback are model-generated.
inline MaskSpanSet compute_mask_spans(const Transcript& t) {
  MaskSpanSet m;
  for (const auto& seg : t.segments) {
    if (seg.kind == SegmentKind::VerifierFeedback) m.add(seg.span);
  }
  return m;
}

// --- persistence -----------------------------------------------------------
// One transcript per JSONL record:
//   {id, statement, raw, segments:[{kind,start,end}], mask_spans:[[s,e],...]}

inline json transcript_to_json(const Transcript& t, const std::string& id) {
  json segs = json::array();
  for (const auto& s : t.segments) {
    segs.push_back({{"kind", segment_kind_name(s.kind)},
                    {"start", s.span.start},
                    {"end", s.span.end}});
  }
  json masks = json::array();
  const MaskSpanSet mask_set = compute_mask_spans(t);
  for (const auto& m : mask_set.spans()) {
    masks.push_back(json::array({m.start, m.end}));
  }
  return json{{"id", id},
              {"statement", t.statement},
              {"raw", t.raw},
              {"segments", std::move(segs)},
              {"mask_spans", std::move(masks)}};
}

inline Expected<Transcript> transcript_from_json(const json& j) try {
  if (!j.is_object() || !j.contains("raw"))
    return Error{Errc::MalformedResponse, "transcript record missing raw"};
  // Re-parsing the raw text reconstructs segment texts and tag styles;
  // the stored spans are only checked against the reparse.
  auto parsed = parse_transcript(j["raw"].get<std::string>(),
                                 j.value("statement", std::string{}));
  if (!parsed.ok()) return parsed.error();
  Transcript t = std::move(parsed).value();
  if (j.contains("segments") && j["segments"].is_array() &&
      j["segments"].size() != t.segments.size()) {
    return Error{Errc::MalformedResponse, "segment list inconsistent with raw"};
  }
  return t;
} catch (const json::exception& e) {
  return Error{Errc::MalformedResponse, std::string("malformed transcript record: ") + e.what()};
}

}  // namespace proverloop
