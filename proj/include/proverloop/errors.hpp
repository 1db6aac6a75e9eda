// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <variant>

namespace proverloop {

enum class Errc {
  // transcript protocol
  UnclosedDelimiter,
  NestedDelimiter,
  NoCodeBlock,
  // verifier gateway
  BackendUnavailable,
  ProtocolError,
  UnrecognizedState,
  // reward engine
  MissingAst,
  SpanOutOfRange,
  // policy objective
  DegenerateGroup,
  EmptyAfterMask,
  // model gateway
  RateLimited,
  MalformedResponse,
  // cold-start forge
  InvalidTuple,
  EmptyOutcomes,
  // eval harness
  BadArguments,
  // orchestrator
  InsufficientRollouts,
  // shared plumbing
  ConfigError,
  IoError,
};

inline const char* errc_name(Errc c) {
  switch (c) {
    case Errc::UnclosedDelimiter: return "UnclosedDelimiter";
    case Errc::NestedDelimiter: return "NestedDelimiter";
    case Errc::NoCodeBlock: return "NoCodeBlock";
    case Errc::BackendUnavailable: return "BackendUnavailable";
    case Errc::ProtocolError: return "ProtocolError";
    case Errc::UnrecognizedState: return "UnrecognizedState";
    case Errc::MissingAst: return "MissingAst";
    case Errc::SpanOutOfRange: return "SpanOutOfRange";
    case Errc::DegenerateGroup: return "DegenerateGroup";
    case Errc::EmptyAfterMask: return "EmptyAfterMask";
    case Errc::RateLimited: return "RateLimited";
    case Errc::MalformedResponse: return "MalformedResponse";
    case Errc::InvalidTuple: return "InvalidTuple";
    case Errc::EmptyOutcomes: return "EmptyOutcomes";
    case Errc::BadArguments: return "BadArguments";
    case Errc::InsufficientRollouts: return "InsufficientRollouts";
    case Errc::ConfigError: return "ConfigError";
    case Errc::IoError: return "IoError";
  }
  return "UnknownError";
}

// A failure value. `offset` carries a character offset for parser errors,
// npos otherwise.
struct Error {
  static constexpr std::size_t npos = static_cast<std::size_t>(-1);

  Errc code;
  std::string message;
  std::size_t offset = npos;

  std::string to_string() const {
    std::string s = errc_name(code);
    if (!message.empty()) {
      s += ": ";
      s += message;
    }
    if (offset != npos) {
      s += " (offset ";
      s += std::to_string(offset);
      s += ")";
    }
    return s;
  }
};

// Value-or-error result. Accessing the wrong side throws std::logic_error,
// which marks a caller bug rather than a runtime condition.
template <typename T>
class Expected {
 public:
  Expected(T value) : v_(std::move(value)) {}
  Expected(Error err) : v_(std::move(err)) {}

  bool ok() const { return std::holds_alternative<T>(v_); }
  explicit operator bool() const { return ok(); }

  const T& value() const& {
    require(ok(), "Expected::value() on error");
    return std::get<T>(v_);
  }
  T& value() & {
    require(ok(), "Expected::value() on error");
    return std::get<T>(v_);
  }
  T&& value() && {
    require(ok(), "Expected::value() on error");
    return std::get<T>(std::move(v_));
  }

  const Error& error() const {
    require(!ok(), "Expected::error() on value");
    return std::get<Error>(v_);
  }

  T value_or(T fallback) const {
    return ok() ? std::get<T>(v_) : std::move(fallback);
  }

 private:
  static void require(bool cond, const char* what) {
    if (!cond) throw std::logic_error(what);
  }

  std::variant<T, Error> v_;
};

// Result of operations that only succeed or fail.
struct Ok {};
using Status = Expected<Ok>;

}  // namespace proverloop
