// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "proverloop/errors.hpp"

namespace proverloop {

using json = nlohmann::json;

inline Expected<std::string> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return Error{Errc::IoError, "cannot open " + path};
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline Status write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) return Error{Errc::IoError, "cannot write " + path};
  out << content;
  if (!out) return Error{Errc::IoError, "write failed for " + path};
  return Ok{};
}

inline Expected<json> parse_json(const std::string& text, const std::string& what = "json") {
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded()) return Error{Errc::MalformedResponse, "unparseable " + what};
  return j;
}

// One JSON value per line; blank lines are skipped.
inline Expected<std::vector<json>> read_jsonl(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return Error{Errc::IoError, "cannot open " + path};
  std::vector<json> records;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded())
      return Error{Errc::IoError, path + ":" + std::to_string(lineno) + ": bad json"};
    records.push_back(std::move(j));
  }
  return records;
}

class JsonlWriter {
 public:
  explicit JsonlWriter(const std::string& path)
      : out_(path, std::ios::binary | std::ios::trunc), path_(path) {}

  bool ok() const { return static_cast<bool>(out_); }
  const std::string& path() const { return path_; }

  Status write(const json& record) {
    if (!out_) return Error{Errc::IoError, "cannot write " + path_};
    out_ << record.dump() << '\n';
    return Ok{};
  }

 private:
  std::ofstream out_;
  std::string path_;
};

}  // namespace proverloop
