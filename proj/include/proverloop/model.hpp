// SPDX-License-Identifier: Apache-2.0
#pragma once

// Model gateway: pluggable client for the text-generation service that
// produces long-CoT continuations. The gateway moves strings; transcript
// semantics live in the orchestrator. A scripted mock keyed by
// (prompt hash, turn index) makes every pipeline test deterministic.

#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <map>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "proverloop/errors.hpp"
#include "proverloop/http_util.hpp"
#include "proverloop/jsonl.hpp"
#include "proverloop/sha256.hpp"
#include "proverloop/transcript.hpp"

#include <httplib.h>

namespace proverloop {

enum class FinishReason { Stop, Length, Error };

inline const char* finish_reason_name(FinishReason r) {
  switch (r) {
    case FinishReason::Stop: return "stop";
    case FinishReason::Length: return "length";
    case FinishReason::Error: return "error";
  }
  return "?";
}

inline FinishReason finish_reason_from(std::string_view s) {
  if (s == "stop") return FinishReason::Stop;
  if (s == "length") return FinishReason::Length;
  return FinishReason::Error;
}

struct GenerationRequest {
  std::string prompt;
  double temperature = 0.6;
  int max_tokens = 16384;
  std::vector<std::string> stop;
  std::optional<std::uint64_t> seed;
};

struct GenerationResult {
  std::string text;
  FinishReason finish_reason = FinishReason::Error;
  std::optional<std::vector<double>> logprobs;
};

class ModelBackend {
 public:
  virtual ~ModelBackend() = default;
  virtual Expected<GenerationResult> generate(const GenerationRequest& req) = 0;
};

// The turn index of a prompt is the number of feedback blocks already
// injected into it: turn 0 is the fresh statement prompt, turn 1 follows
// the first verifier reply, and so on.
inline int prompt_turn_index(std::string_view prompt) {
  int turns = 0;
  for (std::string_view open : {kFeedbackOpen, kLegacyFeedbackOpen}) {
    std::size_t at = 0;
    while ((at = prompt.find(open, at)) != std::string_view::npos) {
      ++turns;
      at += open.size();
    }
  }
  return turns;
}

// Scripted continuations keyed by (prompt sha256, turn index). "*" matches
// any prompt at that turn. Several entries under one key form a ring the
// request seed indexes into, which gives per-rollout variety while staying
// reproducible. Missing entries yield an Error finish reason, not a failure.
class MockModelBackend : public ModelBackend {
 public:
  MockModelBackend() = default;

  // Script file: JSONL of {prompt_sha256, turn, text, finish_reason}.
  static Expected<MockModelBackend> from_file(const std::string& path) try {
    auto records = read_jsonl(path);
    if (!records.ok()) return records.error();
    MockModelBackend mock;
    for (const auto& r : records.value()) {
      if (!r.is_object() || !r.contains("prompt_sha256") || !r.contains("turn") ||
          !r.contains("text"))
        return Error{Errc::ConfigError, "model script record needs prompt_sha256/turn/text"};
      mock.script_hash(r["prompt_sha256"].get<std::string>(), r["turn"].get<int>(),
                       r["text"].get<std::string>(),
                       finish_reason_from(r.value("finish_reason", std::string{"stop"})));
    }
    return mock;
  } catch (const json::exception& e) {
    return Error{Errc::ConfigError, std::string("malformed model script: ") + e.what()};
  }

  void script(std::string_view prompt, int turn, std::string text,
              FinishReason fr = FinishReason::Stop) {
    script_hash(sha256_hex(prompt), turn, std::move(text), fr);
  }
  void script_any(int turn, std::string text, FinishReason fr = FinishReason::Stop) {
    script_hash("*", turn, std::move(text), fr);
  }
  void script_hash(std::string prompt_sha256, int turn, std::string text, FinishReason fr) {
    entries_[{std::move(prompt_sha256), turn}].push_back({std::move(text), fr});
  }

  Expected<GenerationResult> generate(const GenerationRequest& req) override {
    const int turn = prompt_turn_index(req.prompt);
    const auto* bucket = find_bucket(sha256_hex(req.prompt), turn);
    if (!bucket) bucket = find_bucket("*", turn);
    if (!bucket) return GenerationResult{std::string{}, FinishReason::Error, std::nullopt};
    const std::uint64_t seed = req.seed.value_or(0);
    const auto& entry = (*bucket)[seed % bucket->size()];
    return GenerationResult{entry.text, entry.finish_reason, std::nullopt};
  }

 private:
  struct Entry {
    std::string text;
    FinishReason finish_reason;
  };

  const std::vector<Entry>* find_bucket(const std::string& hash, int turn) const {
    const auto it = entries_.find({hash, turn});
    return it == entries_.end() ? nullptr : &it->second;
  }

  std::map<std::pair<std::string, int>, std::vector<Entry>> entries_;
};

// Completions-style JSON over HTTP:
//   POST {model, prompt, temperature, max_tokens, stop, seed}
//     -> {text, finish_reason}
class HttpModelBackend : public ModelBackend {
 public:
  // Endpoint/auth default to the PROVERLOOP_MODEL_URL and
  // PROVERLOOP_MODEL_TOKEN environment variables.
  explicit HttpModelBackend(std::string url, std::string auth_token = {},
                            std::string model_name = "default")
      : url_(std::move(url)), token_(std::move(auth_token)), model_(std::move(model_name)) {}

  static constexpr const char* kUrlEnvVar = "PROVERLOOP_MODEL_URL";
  static constexpr const char* kTokenEnvVar = "PROVERLOOP_MODEL_TOKEN";

  static Expected<HttpModelBackend> from_env() {
    const char* url = std::getenv(kUrlEnvVar);
    if (!url || !*url)
      return Error{Errc::ConfigError,
                   std::string(kUrlEnvVar) + " is not set; cannot reach a model endpoint"};
    const char* token = std::getenv(kTokenEnvVar);
    return HttpModelBackend(url, token ? token : "");
  }

  Expected<GenerationResult> generate(const GenerationRequest& req) override {
    auto parsed_url = detail::parse_http_url(url_);
    if (!parsed_url.ok()) return parsed_url.error();
    const auto& u = parsed_url.value();

    httplib::Client client(u.host, u.port);
    client.set_read_timeout(std::chrono::seconds(600));
    client.set_connection_timeout(std::chrono::seconds(10));

    json body{{"model", model_},
              {"prompt", req.prompt},
              {"temperature", req.temperature},
              {"max_tokens", req.max_tokens}};
    if (!req.stop.empty()) body["stop"] = req.stop;
    if (req.seed) body["seed"] = *req.seed;

    httplib::Headers headers;
    if (!token_.empty()) headers.emplace("Authorization", "Bearer " + token_);

    auto res = client.Post(u.path, headers, body.dump(), "application/json");
    if (!res) return Error{Errc::BackendUnavailable, "model endpoint unreachable: " + url_};
    if (res->status == 429) return Error{Errc::RateLimited, "model endpoint rate limited"};
    if (res->status != 200)
      return Error{Errc::BackendUnavailable,
                   "model endpoint returned status " + std::to_string(res->status)};

    auto parsed = parse_json(res->body, "model response");
    if (!parsed.ok()) return Error{Errc::MalformedResponse, "model response is not json"};
    const json& j = parsed.value();
    if (!j.is_object() || !j.contains("text") || !j["text"].is_string())
      return Error{Errc::MalformedResponse, "model response missing 'text'"};
    GenerationResult out;
    out.text = j["text"].get<std::string>();
    out.finish_reason = finish_reason_from(j.value("finish_reason", std::string{"stop"}));
    if (j.contains("logprobs") && j["logprobs"].is_array())
      out.logprobs = j["logprobs"].get<std::vector<double>>();
    return out;
  }

 private:
  std::string url_;
  std::string token_;
  std::string model_;
};

struct ModelGatewayOptions {
  int max_inflight = 16;
  int max_retries = 3;
  std::chrono::milliseconds backoff_base{250};
};

// Bounds in-flight requests and retries transient failures (backend
// unavailable, rate limited) with exponential backoff.
class ModelGateway {
 public:
  explicit ModelGateway(ModelBackend& backend, ModelGatewayOptions opt = {})
      : backend_(backend), opt_(opt) {
    if (opt_.max_inflight < 1) opt_.max_inflight = 1;
  }

  Expected<GenerationResult> generate(const GenerationRequest& req) {
    InflightGuard guard(*this);
    Error last{Errc::BackendUnavailable, "no attempt made"};
    for (int attempt = 0; attempt <= opt_.max_retries; ++attempt) {
      if (attempt > 0) {
        std::this_thread::sleep_for(opt_.backoff_base * (1 << (attempt - 1)));
      }
      auto result = backend_.generate(req);
      if (result.ok()) return result;
      last = result.error();
      const bool retryable =
          last.code == Errc::BackendUnavailable || last.code == Errc::RateLimited;
      if (!retryable) return last;
    }
    return last;
  }

 private:
  struct InflightGuard {
    explicit InflightGuard(ModelGateway& g) : gateway(g) {
      std::unique_lock<std::mutex> lock(g.mu_);
      g.cv_.wait(lock, [&] { return g.inflight_ < g.opt_.max_inflight; });
      ++g.inflight_;
    }
    ~InflightGuard() {
      {
        std::lock_guard<std::mutex> lock(gateway.mu_);
        --gateway.inflight_;
      }
      gateway.cv_.notify_one();
    }
    ModelGateway& gateway;
  };

  ModelBackend& backend_;
  ModelGatewayOptions opt_;
  std::mutex mu_;
  std::condition_variable cv_;
  int inflight_ = 0;
};

}  // namespace proverloop
