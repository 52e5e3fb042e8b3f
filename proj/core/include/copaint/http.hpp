#pragma once

// Minimal blocking HTTP client used by the external providers.

#include <string>
#include <vector>

namespace copaint {

struct Url {
  std::string host;
  int port = 80;
  std::string path = "/";
};

/// Accepts http://host[:port][/path]. Throws FormatError otherwise.
Url parse_url(const std::string& text);
bool is_valid_url(const std::string& text);

struct HttpPart {
  std::string name;
  std::string content;
  std::string filename;
  std::string content_type;
};

struct HttpResponse {
  int status = 0;
  std::string body;
  std::string content_type;
};

/// Transport failures and non-2xx statuses throw ProviderError naming the
/// endpoint.
HttpResponse http_post(const std::string& url, const std::string& body, const std::string& content_type,
                       double timeout_s);
HttpResponse http_post_multipart(const std::string& url, const std::vector<HttpPart>& parts, double timeout_s);

}  // namespace copaint
