// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <atomic>
#include <filesystem>
#include <random>
#include <stdexcept>
#include <string>
#include <unistd.h>

#include "proverloop/jsonl.hpp"
#include "proverloop/transcript.hpp"

namespace testutil {

inline std::string fixture_path(const std::string& name) {
  return std::string(PROVERLOOP_FIXTURES_DIR) + "/" + name;
}

inline std::string data_path(const std::string& name) {
  return std::string(PROVERLOOP_DATA_DIR) + "/" + name;
}

inline std::string read_fixture(const std::string& name) {
  auto text = proverloop::read_file(fixture_path(name));
  if (!text.ok()) throw std::runtime_error("missing fixture: " + name);
  return std::move(text).value();
}

inline std::string rstrip(std::string s) {
  while (!s.empty() && (s.back() == '\n' || s.back() == '\r' || s.back() == ' ')) s.pop_back();
  return s;
}

// Fixture .lean files end with a newline; the protocol extracts trimmed
// source, so mock verifier scripts must key on the trimmed form.
inline std::string read_code_fixture(const std::string& name) {
  return rstrip(read_fixture(name));
}

inline std::filesystem::path make_temp_dir(const std::string& tag) {
  static std::atomic<int> counter{0};
  auto dir = std::filesystem::temp_directory_path() /
             ("proverloop_" + tag + "_" + std::to_string(::getpid()) + "_" +
              std::to_string(counter++));
  std::filesystem::create_directories(dir);
  return dir;
}

// --- random transcript generation -------------------------------------------

inline std::string random_text(std::mt19937_64& rng, std::size_t max_len) {
  static const std::string alphabet =
      "abcdefghijklmnopqrstuvwxyz ABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789.,:;()[]{}+-*/=\n";
  std::uniform_int_distribution<std::size_t> len_dist(1, max_len);
  std::uniform_int_distribution<std::size_t> ch_dist(0, alphabet.size() - 1);
  std::string out;
  const std::size_t len = len_dist(rng);
  out.reserve(len);
  for (std::size_t i = 0; i < len; ++i) out.push_back(alphabet[ch_dist(rng)]);
  return out;
}

// A well-formed raw transcript with a random mix of thought, code, and
// feedback regions. ensure_feedback forces at least one interpreter block.
inline std::string random_transcript_raw(std::mt19937_64& rng, bool ensure_feedback = false) {
  std::uniform_int_distribution<int> n_dist(1, 6);
  std::uniform_int_distribution<int> kind_dist(0, 2);
  std::uniform_int_distribution<int> legacy_dist(0, 4);
  std::string raw;
  bool has_feedback = false;
  const int n = n_dist(rng);
  for (int i = 0; i < n; ++i) {
    const int kind = kind_dist(rng);
    if (kind == 0) {
      raw += random_text(rng, 40);
    } else if (kind == 1) {
      raw += "<code>\n```lean4\n";
      raw += random_text(rng, 60);
      raw += "\n```\n</code>";
    } else {
      const bool legacy = legacy_dist(rng) == 0;
      raw += legacy ? "<compiler_results>" : "<interpreter>";
      raw += random_text(rng, 40);
      raw += legacy ? "</compiler_results>" : "</interpreter>";
      has_feedback = true;
    }
  }
  if (ensure_feedback && !has_feedback) {
    raw += "<interpreter>";
    raw += random_text(rng, 40);
    raw += "</interpreter>";
  }
  return raw;
}

}  // namespace testutil
