#pragma once

#include <chrono>
#include <string>
#include <string_view>

#include <httplib.h>

#include "qagkit/error.hpp"

namespace qagkit::detail {

/// "http://host:port/prefix" split into the client base and a path prefix
/// (no trailing slash).
struct Endpoint {
  std::string base;
  std::string prefix;

  std::string path(std::string_view route) const { return prefix + std::string(route); }
};

inline Endpoint parse_endpoint(std::string_view url) {
  constexpr std::string_view scheme = "http://";
  if (url.substr(0, scheme.size()) != scheme) {
    throw Error(Errc::InvalidArgument,
                "endpoint must be an http:// URL: " + std::string(url));
  }
  const std::size_t slash = url.find('/', scheme.size());
  Endpoint ep;
  if (slash == std::string_view::npos) {
    ep.base = std::string(url);
  } else {
    ep.base = std::string(url.substr(0, slash));
    ep.prefix = std::string(url.substr(slash));
    while (!ep.prefix.empty() && ep.prefix.back() == '/') ep.prefix.pop_back();
  }
  if (ep.base.size() == scheme.size()) {
    throw Error(Errc::InvalidArgument, "endpoint has no host: " + std::string(url));
  }
  return ep;
}

inline void set_timeouts(httplib::Client& client, std::chrono::milliseconds timeout) {
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(timeout);
  const auto usecs =
      std::chrono::duration_cast<std::chrono::microseconds>(timeout - secs);
  client.set_connection_timeout(secs.count(), usecs.count());
  client.set_read_timeout(secs.count(), usecs.count());
  client.set_write_timeout(secs.count(), usecs.count());
}

inline bool is_timeout(httplib::Error err) {
  return err == httplib::Error::Read || err == httplib::Error::ConnectionTimeout;
}

}  // namespace qagkit::detail
