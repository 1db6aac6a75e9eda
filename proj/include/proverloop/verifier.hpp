// SPDX-License-Identifier: Apache-2.0
#pragma once

// Verifier gateway: submits Lean 4 source to a backend, normalizes the
// verdict / diagnostics / tactic AST, and renders feedback text for
// transcript injection. Two backends share one interface: an external
// command or HTTP service speaking a small JSON protocol, and an
// in-process scripted mock keyed by code content for deterministic tests.

#include <algorithm>
#include <chrono>
#include <cstddef>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "proverloop/errors.hpp"
#include "proverloop/http_util.hpp"
#include "proverloop/jsonl.hpp"
#include "proverloop/pool.hpp"
#include "proverloop/sha256.hpp"
#include "proverloop/transcript.hpp"

#include <sys/select.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <csignal>
#include <unistd.h>

#include <httplib.h>

namespace proverloop {

enum class Severity { Error, Warning };

struct Diagnostic {
  int line = 1;  // 1-based
  std::string message;
  Severity severity = Severity::Error;

  friend bool operator==(const Diagnostic&, const Diagnostic&) = default;
};

// One tactic invocation from the verifier's AST feedback, with the goal
// state before and after and the byte span of the tactic in the source.
struct TacticTrace {
  std::string state_before;
  std::string state_after;
  std::size_t pos = 0;
  std::size_t end_pos = 0;

  friend bool operator==(const TacticTrace&, const TacticTrace&) = default;
};

struct TacticAst {
  std::vector<TacticTrace> tactics;
  std::vector<long long> premises;
  std::vector<long long> declarations;

  friend bool operator==(const TacticAst&, const TacticAst&) = default;
};

struct VerificationRequest {
  std::string code;            // full compilable source including imports
  double timeout_s = 60.0;
};

struct VerificationResult {
  bool passed = false;
  std::vector<Diagnostic> diagnostics;
  std::optional<TacticAst> ast;
  double elapsed_s = 0.0;

  bool has_error_diagnostic() const {
    for (const auto& d : diagnostics)
      if (d.severity == Severity::Error) return true;
    return false;
  }
};

// --- goal counting ----------------------------------------------------------

inline constexpr std::string_view kGoalMarker = "⊢";

// Counts goals in a printed proof state. "no goals" is zero; otherwise each
// goal contributes one turnstile marker. Empty or marker-less text is not a
// recognizable state.
inline Expected<int> goal_count(std::string_view state) {
  const std::string_view s = detail::trim(state);
  if (s.empty()) return Error{Errc::UnrecognizedState, "empty goal state"};
  if (s == "no goals") return 0;
  int count = 0;
  std::size_t at = 0;
  while ((at = s.find(kGoalMarker, at)) != std::string_view::npos) {
    ++count;
    at += kGoalMarker.size();
  }
  if (count == 0) return Error{Errc::UnrecognizedState, "no goal marker in state"};
  return count;
}

// --- feedback rendering -----------------------------------------------------

inline constexpr std::string_view kFeedbackSuccess = "Compilation Success!";
inline constexpr std::string_view kFeedbackFailure = "Compilation failed.";
inline constexpr std::string_view kTruncationMarker = "…[truncated]";

struct FeedbackRenderOptions {
  std::size_t byte_budget = 2048;  // values below 64 are clamped up
};

namespace detail {

inline std::size_t utf8_boundary_at_or_before(std::string_view s, std::size_t at) {
  while (at > 0 && (static_cast<unsigned char>(s[at]) & 0xc0) == 0x80) --at;
  return at;
}

}  // namespace detail

// Renders a verdict for the <interpreter> block. Success and failure each
// begin with a fixed sentinel line; failure is followed by one entry per
// diagnostic in file order. Output never exceeds the byte budget.
inline std::string render_feedback(const VerificationResult& v,
                                   FeedbackRenderOptions opt = {}) {
  const std::size_t budget = std::max<std::size_t>(opt.byte_budget, 64);
  if (v.passed) return std::string(kFeedbackSuccess);

  std::vector<const Diagnostic*> order;
  order.reserve(v.diagnostics.size());
  for (const auto& d : v.diagnostics) order.push_back(&d);
  std::stable_sort(order.begin(), order.end(),
                   [](const Diagnostic* a, const Diagnostic* b) { return a->line < b->line; });

  std::string out(kFeedbackFailure);
  for (const auto* d : order) {
    out += d->severity == Severity::Error ? "\nFind an error at line " : "\nFind a warning at line ";
    out += std::to_string(d->line);
    out += '\n';
    out += d->message;
    if (out.size() > budget) break;  // already over; truncate below
  }
  if (out.size() > budget) {
    std::size_t keep = detail::utf8_boundary_at_or_before(out, budget - kTruncationMarker.size());
    out.resize(keep);
    out += kTruncationMarker;
  }
  return out;
}

// Verifier-aware overload of the transcript append: renders the verdict and
// attaches it as a VerifierFeedback segment.
inline Expected<Transcript> append_feedback(Transcript t, const VerificationResult& v,
                                            FeedbackRenderOptions opt = {}) {
  return append_feedback_text(std::move(t), render_feedback(v, opt));
}

// --- wire protocol ----------------------------------------------------------
// Request:  {"cmd": <source>, "timeout": <seconds>}
// Response: {"pass": bool,
//            "errors": [{"line": int, "pos": int, "message": str, "severity": str}],
//            "ast": {"tactics": [{"stateBefore","stateAfter","pos","endPos"}],
//                    "premises": [int], "declarations": [int]},
//            "elapsed": seconds}

inline json verification_request_to_wire(const VerificationRequest& req) {
  return json{{"cmd", req.code}, {"timeout", req.timeout_s}};
}

inline json verification_result_to_wire(const VerificationResult& v) {
  json errors = json::array();
  for (const auto& d : v.diagnostics) {
    errors.push_back({{"line", d.line},
                      {"message", d.message},
                      {"severity", d.severity == Severity::Error ? "error" : "warning"}});
  }
  json out{{"pass", v.passed}, {"errors", std::move(errors)}};
  if (v.ast) {
    json tactics = json::array();
    for (const auto& t : v.ast->tactics) {
      tactics.push_back({{"stateBefore", t.state_before},
                         {"stateAfter", t.state_after},
                         {"pos", t.pos},
                         {"endPos", t.end_pos}});
    }
    out["ast"] = json{{"tactics", std::move(tactics)},
                      {"premises", v.ast->premises},
                      {"declarations", v.ast->declarations}};
  }
  if (v.elapsed_s > 0) out["elapsed"] = v.elapsed_s;
  return out;
}

inline Expected<VerificationResult> verification_result_from_wire(const json& j) try {
  if (!j.is_object() || !j.contains("pass") || !j["pass"].is_boolean())
    return Error{Errc::ProtocolError, "response missing boolean 'pass'"};
  VerificationResult v;
  v.passed = j["pass"].get<bool>();
  if (j.contains("errors")) {
    if (!j["errors"].is_array()) return Error{Errc::ProtocolError, "'errors' not an array"};
    for (const auto& e : j["errors"]) {
      Diagnostic d;
      if (!e.is_object() || !e.contains("line") || !e["line"].is_number_integer())
        return Error{Errc::ProtocolError, "diagnostic missing integer 'line'"};
      d.line = e["line"].get<int>();
      if (d.line < 1) return Error{Errc::ProtocolError, "diagnostic line < 1"};
      d.message = e.value("message", std::string{});
      d.severity = e.value("severity", std::string{"error"}) == "warning" ? Severity::Warning
                                                                          : Severity::Error;
      v.diagnostics.push_back(std::move(d));
    }
  }
  if (j.contains("ast") && !j["ast"].is_null()) {
    const auto& a = j["ast"];
    if (!a.is_object()) return Error{Errc::ProtocolError, "'ast' not an object"};
    TacticAst ast;
    if (a.contains("tactics")) {
      if (!a["tactics"].is_array()) return Error{Errc::ProtocolError, "'tactics' not an array"};
      for (const auto& t : a["tactics"]) {
        TacticTrace trace;
        if (!t.is_object() || !t.contains("pos") || !t.contains("endPos") ||
            !t["pos"].is_number_integer() || !t["endPos"].is_number_integer() ||
            t["pos"].get<long long>() < 0 || t["endPos"].get<long long>() < 0)
          return Error{Errc::ProtocolError, "tactic trace needs nonnegative pos/endPos"};
        trace.state_before = t.value("stateBefore", std::string{});
        trace.state_after = t.value("stateAfter", std::string{});
        trace.pos = t["pos"].get<std::size_t>();
        trace.end_pos = t["endPos"].get<std::size_t>();
        if (trace.pos >= trace.end_pos)
          return Error{Errc::ProtocolError, "tactic trace with pos >= endPos"};
        ast.tactics.push_back(std::move(trace));
      }
    }
    if (a.contains("premises") && a["premises"].is_array())
      ast.premises = a["premises"].get<std::vector<long long>>();
    if (a.contains("declarations") && a["declarations"].is_array())
      ast.declarations = a["declarations"].get<std::vector<long long>>();
    v.ast = std::move(ast);
  }
  v.elapsed_s = j.value("elapsed", 0.0);
  return v;
} catch (const json::exception& e) {
  return Error{Errc::ProtocolError, std::string("malformed verification result: ") + e.what()};
}

// --- backends ----------------------------------------------------------------

class VerifierBackend {
 public:
  virtual ~VerifierBackend() = default;
  // Must be safe to call from multiple gateway workers at once.
  virtual Expected<VerificationResult> run(const VerificationRequest& req) = 0;
};

// Scripted verdicts keyed by sha256 of the submitted code. Unscripted code
// gets the fallback verdict (a deterministic failure unless overridden), so
// orchestrated runs stay total.
class MockVerifierBackend : public VerifierBackend {
 public:
  MockVerifierBackend() = default;

  // Script file: a JSON object mapping sha256 hex of the code (or "*" for
  // the fallback) to a wire-format verification result.
  static Expected<MockVerifierBackend> from_file(const std::string& path) {
    auto text = read_file(path);
    if (!text.ok()) return text.error();
    auto j = parse_json(text.value(), "verifier script");
    if (!j.ok()) return Error{Errc::ConfigError, "verifier script is not valid json: " + path};
    if (!j.value().is_object())
      return Error{Errc::ConfigError, "verifier script must be a json object"};
    MockVerifierBackend mock;
    for (auto it = j.value().begin(); it != j.value().end(); ++it) {
      auto result = verification_result_from_wire(it.value());
      if (!result.ok())
        return Error{Errc::ConfigError, "bad scripted result for key " + it.key() + ": " +
                                            result.error().to_string()};
      if (it.key() == "*") {
        mock.fallback_ = std::move(result).value();
      } else {
        mock.by_hash_[it.key()] = std::move(result).value();
      }
    }
    return mock;
  }

  void script(std::string_view code, VerificationResult result) {
    by_hash_[sha256_hex(code)] = std::move(result);
  }
  void set_fallback(VerificationResult result) { fallback_ = std::move(result); }

  Expected<VerificationResult> run(const VerificationRequest& req) override {
    const std::string key = sha256_hex(req.code);
    if (auto it = by_hash_.find(key); it != by_hash_.end()) return it->second;
    if (fallback_) return *fallback_;
    VerificationResult v;
    v.passed = false;
    v.diagnostics.push_back({1, "no scripted verdict for code hash " + key, Severity::Error});
    return v;
  }

 private:
  std::map<std::string, VerificationResult> by_hash_;
  std::optional<VerificationResult> fallback_;
};

inline VerificationResult timeout_result(double timeout_s) {
  VerificationResult v;
  v.passed = false;
  v.diagnostics.push_back(
      {1, "Timeout: no verdict within " + std::to_string(timeout_s) + "s", Severity::Error});
  v.elapsed_s = timeout_s;
  return v;
}

// Spawns a command per request, writes one request JSON line to its stdin
// and reads the response JSON from its stdout. A deadline slightly past the
// verification timeout bounds the wait; overruns come back as a failure
// verdict with a Timeout diagnostic rather than an exception.
class CommandVerifierBackend : public VerifierBackend {
 public:
  explicit CommandVerifierBackend(std::string command, double grace_s = 5.0)
      : command_(std::move(command)), grace_s_(grace_s) {}

  Expected<VerificationResult> run(const VerificationRequest& req) override {
    static std::once_flag sigpipe_once;
    std::call_once(sigpipe_once, [] { ::signal(SIGPIPE, SIG_IGN); });

    int to_child[2] = {-1, -1};
    int from_child[2] = {-1, -1};
    if (::pipe(to_child) != 0)
      return Error{Errc::BackendUnavailable, "pipe() failed"};
    if (::pipe(from_child) != 0) {
      ::close(to_child[0]); ::close(to_child[1]);
      return Error{Errc::BackendUnavailable, "pipe() failed"};
    }

    const auto started = std::chrono::steady_clock::now();
    const pid_t pid = ::fork();
    if (pid < 0) {
      for (int fd : {to_child[0], to_child[1], from_child[0], from_child[1]}) ::close(fd);
      return Error{Errc::BackendUnavailable, "fork() failed"};
    }
    if (pid == 0) {
      ::setpgid(0, 0);  // own group, so a timeout can reap the whole tree
      ::dup2(to_child[0], STDIN_FILENO);
      ::dup2(from_child[1], STDOUT_FILENO);
      for (int fd : {to_child[0], to_child[1], from_child[0], from_child[1]}) ::close(fd);
      ::execl("/bin/sh", "sh", "-c", command_.c_str(), static_cast<char*>(nullptr));
      ::_exit(127);
    }
    ::close(to_child[0]);
    ::close(from_child[1]);

    const std::string payload = verification_request_to_wire(req).dump() + "\n";
    std::size_t written = 0;
    while (written < payload.size()) {
      const ssize_t n = ::write(to_child[1], payload.data() + written, payload.size() - written);
      if (n <= 0) break;  // child may exit without draining stdin
      written += static_cast<std::size_t>(n);
    }
    ::close(to_child[1]);

    const double deadline_s = req.timeout_s + grace_s_;
    std::string output;
    bool timed_out = false;
    char buf[4096];
    for (;;) {
      const double waited =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
      if (waited >= deadline_s) {
        timed_out = true;
        break;
      }
      fd_set rd;
      FD_ZERO(&rd);
      FD_SET(from_child[0], &rd);
      struct timeval tv;
      const double remain = deadline_s - waited;
      tv.tv_sec = static_cast<long>(remain);
      tv.tv_usec = static_cast<long>((remain - static_cast<double>(tv.tv_sec)) * 1e6);
      const int rc = ::select(from_child[0] + 1, &rd, nullptr, nullptr, &tv);
      if (rc < 0) break;
      if (rc == 0) {
        timed_out = true;
        break;
      }
      const ssize_t n = ::read(from_child[0], buf, sizeof buf);
      if (n <= 0) break;  // EOF
      output.append(buf, static_cast<std::size_t>(n));
    }
    ::close(from_child[0]);
    if (timed_out) {
      ::kill(-pid, SIGKILL);  // group first, in case the command spawned helpers
      ::kill(pid, SIGKILL);
    }
    int wstatus = 0;
    ::waitpid(pid, &wstatus, 0);

    if (timed_out) return timeout_result(req.timeout_s);
    if (output.empty()) {
      if (WIFEXITED(wstatus) && WEXITSTATUS(wstatus) == 127)
        return Error{Errc::BackendUnavailable, "command not found: " + command_};
      return Error{Errc::ProtocolError, "verifier command produced no output"};
    }
    auto parsed = parse_json(output, "verifier response");
    if (!parsed.ok()) return Error{Errc::ProtocolError, "unparseable verifier output"};
    auto result = verification_result_from_wire(parsed.value());
    if (!result.ok()) return result.error();
    VerificationResult v = std::move(result).value();
    if (v.elapsed_s == 0.0)
      v.elapsed_s =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    return v;
  }

 private:
  std::string command_;
  double grace_s_;
};

// POSTs the wire request to an HTTP verification service.
class HttpVerifierBackend : public VerifierBackend {
 public:
  explicit HttpVerifierBackend(std::string url, double grace_s = 5.0)
      : url_(std::move(url)), grace_s_(grace_s) {}

  Expected<VerificationResult> run(const VerificationRequest& req) override {
    auto parsed_url = detail::parse_http_url(url_);
    if (!parsed_url.ok()) return parsed_url.error();
    const auto& u = parsed_url.value();

    httplib::Client client(u.host, u.port);
    const auto grace = std::chrono::duration<double>(req.timeout_s + grace_s_);
    client.set_read_timeout(std::chrono::duration_cast<std::chrono::milliseconds>(grace));
    client.set_connection_timeout(std::chrono::seconds(5));

    const auto started = std::chrono::steady_clock::now();
    auto res = client.Post(u.path, verification_request_to_wire(req).dump(), "application/json");
    if (!res) {
      if (res.error() == httplib::Error::Read) return timeout_result(req.timeout_s);
      return Error{Errc::BackendUnavailable, "verifier endpoint unreachable: " + url_};
    }
    if (res->status != 200)
      return Error{Errc::ProtocolError, "verifier endpoint returned status " +
                                            std::to_string(res->status)};
    auto body = parse_json(res->body, "verifier response");
    if (!body.ok()) return Error{Errc::ProtocolError, "unparseable verifier response body"};
    auto result = verification_result_from_wire(body.value());
    if (!result.ok()) return result.error();
    VerificationResult v = std::move(result).value();
    if (v.elapsed_s == 0.0)
      v.elapsed_s =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    return v;
  }

 private:
  std::string url_;
  double grace_s_;
};

// --- the verify operation -----------------------------------------------------

// Submits one request and normalizes the verdict: diagnostics in file order,
// and error-severity entries demoted to warnings when the backend reports a
// pass (the passed flag wins). Verifier-side failures are values, never
// exceptions.
inline Expected<VerificationResult> verify(const VerificationRequest& req,
                                           VerifierBackend& backend) {
  if (req.code.empty()) return Error{Errc::BadArguments, "verification request with empty code"};
  auto result = backend.run(req);
  if (!result.ok()) return result;
  VerificationResult v = std::move(result).value();
  std::stable_sort(v.diagnostics.begin(), v.diagnostics.end(),
                   [](const Diagnostic& a, const Diagnostic& b) { return a.line < b.line; });
  if (v.passed) {
    for (auto& d : v.diagnostics)
      if (d.severity == Severity::Error) d.severity = Severity::Warning;
  }
  return v;
}

// Multiplexes independent requests over a bounded worker pool.
class VerifierGateway {
 public:
  explicit VerifierGateway(VerifierBackend& backend, std::size_t workers = 8)
      : backend_(backend), pool_(workers) {}

  std::future<Expected<VerificationResult>> submit(VerificationRequest req) {
    return pool_.submit(
        [this, req = std::move(req)]() mutable { return verify(req, backend_); });
  }

  Expected<VerificationResult> verify_sync(const VerificationRequest& req) {
    return verify(req, backend_);
  }

 private:
  VerifierBackend& backend_;
  ThreadPool pool_;
};

}  // namespace proverloop
