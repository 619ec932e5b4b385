#include "httplib.h"

#include "sigma/core/errors.hpp"
#include "sigma/core/http.hpp"

namespace sigma::http {

Endpoint parse_endpoint(const std::string& url) {
  const auto sep = url.find("://");
  if (sep == std::string::npos) throw ConfigInvalid("endpoint lacks a scheme: " + url);
  Endpoint ep;
  ep.scheme = url.substr(0, sep);
  if (ep.scheme != "http" && ep.scheme != "https")
    throw ConfigInvalid("unsupported endpoint scheme: " + ep.scheme);
  std::string rest = url.substr(sep + 3);
  const auto slash = rest.find('/');
  ep.path = slash == std::string::npos ? "/" : rest.substr(slash);
  std::string authority = rest.substr(0, slash);
  ep.port = ep.scheme == "https" ? 443 : 80;
  if (const auto colon = authority.rfind(':'); colon != std::string::npos) {
    try {
      ep.port = std::stoi(authority.substr(colon + 1));
    } catch (const std::exception&) {
      throw ConfigInvalid("bad endpoint port: " + url);
    }
    authority.resize(colon);
  }
  if (authority.empty()) throw ConfigInvalid("endpoint lacks a host: " + url);
  ep.host = authority;
  return ep;
}

nlohmann::json post_json(const Endpoint& endpoint, const nlohmann::json& body,
                         const Options& options) {
  const std::string base = endpoint.scheme + "://" + endpoint.host + ":" + std::to_string(endpoint.port);
  httplib::Client client(base);
  client.set_connection_timeout(options.timeout_seconds, 0);
  client.set_read_timeout(options.timeout_seconds, 0);
  client.set_write_timeout(options.timeout_seconds, 0);
  httplib::Headers headers;
  if (!options.bearer_token.empty())
    headers.emplace("Authorization", "Bearer " + options.bearer_token);
  auto res = client.Post(endpoint.path, headers, body.dump(), "application/json");
  if (!res)
    throw ProviderUnavailable(base + endpoint.path + ": " + httplib::to_string(res.error()));
  if (res->status < 200 || res->status >= 300)
    throw ProviderUnavailable(base + endpoint.path + ": HTTP " + std::to_string(res->status));
  try {
    return nlohmann::json::parse(res->body);
  } catch (const nlohmann::json::parse_error& e) {
    throw DecodeFailure(base + endpoint.path + ": " + e.what());
  }
}

}  // namespace sigma::http
