#include "copaint/http.hpp"

#include <cmath>
#include <regex>

#include "copaint/errors.hpp"
#include "httplib.h"

namespace copaint {

Url parse_url(const std::string& text) {
  static const std::regex re(R"(^http://([A-Za-z0-9.\-]+|\[[0-9A-Fa-f:]+\])(?::([0-9]{1,5}))?(/[^\s]*)?$)");
  std::smatch m;
  if (!std::regex_match(text, m, re)) throw FormatError("not an http URL: '" + text + "'");
  Url u;
  u.host = m[1].str();
  if (m[2].matched) {
    u.port = std::stoi(m[2].str());
    if (u.port < 1 || u.port > 65535) throw FormatError("port out of range in URL: '" + text + "'");
  }
  if (m[3].matched) u.path = m[3].str();
  return u;
}

bool is_valid_url(const std::string& text) {
  try {
    parse_url(text);
    return true;
  } catch (const FormatError&) {
    return false;
  }
}

namespace {

httplib::Client make_client(const Url& u, double timeout_s) {
  httplib::Client cli(u.host, u.port);
  const auto sec = static_cast<time_t>(timeout_s);
  const auto usec = static_cast<time_t>(std::round((timeout_s - static_cast<double>(sec)) * 1e6));
  cli.set_connection_timeout(sec, usec);
  cli.set_read_timeout(sec, usec);
  cli.set_write_timeout(sec, usec);
  return cli;
}

HttpResponse finish(const std::string& url, const httplib::Result& res) {
  if (!res) throw ProviderError("request to " + url + " failed: " + httplib::to_string(res.error()));
  if (res->status < 200 || res->status >= 300) {
    std::string snippet = res->body.substr(0, 200);
    throw ProviderError("request to " + url + " returned HTTP " + std::to_string(res->status) +
                        (snippet.empty() ? "" : ": " + snippet));
  }
  return {res->status, res->body, res->get_header_value("Content-Type")};
}

}  // namespace

HttpResponse http_post(const std::string& url, const std::string& body, const std::string& content_type,
                       double timeout_s) {
  const Url u = parse_url(url);
  auto cli = make_client(u, timeout_s);
  return finish(url, cli.Post(u.path, body, content_type));
}

HttpResponse http_post_multipart(const std::string& url, const std::vector<HttpPart>& parts, double timeout_s) {
  const Url u = parse_url(url);
  auto cli = make_client(u, timeout_s);
  httplib::MultipartFormDataItems items;
  for (const auto& p : parts) items.push_back({p.name, p.content, p.filename, p.content_type});
  return finish(url, cli.Post(u.path, items));
}

}  // namespace copaint
