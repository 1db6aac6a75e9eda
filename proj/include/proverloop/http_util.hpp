// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>

#include "proverloop/errors.hpp"

namespace proverloop::detail {

struct ParsedUrl {
  std::string host;
  int port = 80;
  std::string path = "/";
};

inline Expected<ParsedUrl> parse_http_url(const std::string& url) {
  const std::string prefix = "http://";
  if (url.rfind(prefix, 0) != 0)
    return Error{Errc::ConfigError, "only http:// endpoints are supported: " + url};
  ParsedUrl out;
  std::string rest = url.substr(prefix.size());
  const auto slash = rest.find('/');
  std::string hostport = rest.substr(0, slash);
  if (slash != std::string::npos) out.path = rest.substr(slash);
  const auto colon = hostport.find(':');
  if (colon == std::string::npos) {
    out.host = hostport;
  } else {
    out.host = hostport.substr(0, colon);
    try {
      out.port = std::stoi(hostport.substr(colon + 1));
    } catch (...) {
      return Error{Errc::ConfigError, "bad port in url: " + url};
    }
  }
  if (out.host.empty()) return Error{Errc::ConfigError, "empty host in url: " + url};
  return out;
}

}  // namespace proverloop::detail
