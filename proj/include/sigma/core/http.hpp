#pragma once

#include <string>

#include "json.hpp"

namespace sigma::http {

struct Endpoint {
  std::string scheme;  // http or https
  std::string host;
  int port = 0;
  std::string path;  // always starts with '/'
};

// Accepts scheme://host[:port][/path]; throws ConfigInvalid.
Endpoint parse_endpoint(const std::string& url);

struct Options {
  int timeout_seconds = 60;
  std::string bearer_token;  // sent as Authorization when non-empty
};

// POSTs a JSON body and parses a JSON reply. Connection failures and
// non-2xx statuses raise ProviderUnavailable; unparsable replies raise
// DecodeFailure.
nlohmann::json post_json(const Endpoint& endpoint, const nlohmann::json& body,
                         const Options& options = {});

}  // namespace sigma::http
