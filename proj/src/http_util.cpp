#include "http_util.hpp"

#include <algorithm>
#include <cctype>
#include <stdexcept>

namespace toolreg::detail {

std::string Url::origin() const {
  bool default_port = (scheme == "http" && port == 80) || (scheme == "https" && port == 443);
  std::string h = host.find(':') != std::string::npos ? "[" + host + "]" : host;
  return scheme + "://" + h + (default_port ? "" : ":" + std::to_string(port));
}

std::string Url::path() const { return target.substr(0, target.find('?')); }

Url parse_url(std::string_view text) {
  Url url;
  auto sep = text.find("://");
  if (sep == std::string_view::npos) throw std::invalid_argument("not an absolute URL: " + std::string(text));
  url.scheme = std::string(text.substr(0, sep));
  std::transform(url.scheme.begin(), url.scheme.end(), url.scheme.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (url.scheme != "http" && url.scheme != "https") {
    throw std::invalid_argument("unsupported URL scheme \"" + url.scheme + "\"");
  }
  std::string_view rest = text.substr(sep + 3);
  auto slash = rest.find_first_of("/?");
  std::string_view authority = rest.substr(0, slash);
  if (slash != std::string_view::npos) {
    url.target = std::string(rest.substr(slash));
    if (url.target[0] == '?') url.target = "/" + url.target;
  }
  if (auto at = authority.rfind('@'); at != std::string_view::npos) authority = authority.substr(at + 1);
  std::string_view port_text;
  if (!authority.empty() && authority[0] == '[') {
    auto close = authority.find(']');
    if (close == std::string_view::npos) throw std::invalid_argument("bad IPv6 host in URL: " + std::string(text));
    url.host = std::string(authority.substr(1, close - 1));
    if (close + 1 < authority.size() && authority[close + 1] == ':') port_text = authority.substr(close + 2);
  } else {
    auto colon = authority.rfind(':');
    url.host = std::string(authority.substr(0, colon));
    if (colon != std::string_view::npos) port_text = authority.substr(colon + 1);
  }
  if (url.host.empty()) throw std::invalid_argument("URL has no host: " + std::string(text));
  if (port_text.empty()) {
    url.port = url.scheme == "https" ? 443 : 80;
  } else {
    int port = 0;
    for (char c : port_text) {
      if (!std::isdigit(static_cast<unsigned char>(c))) throw std::invalid_argument("bad port in URL: " + std::string(text));
      port = port * 10 + (c - '0');
      if (port > 65535) throw std::invalid_argument("bad port in URL: " + std::string(text));
    }
    url.port = port;
  }
  if (auto hash = url.target.find('#'); hash != std::string::npos) url.target.erase(hash);
  return url;
}

Url resolve_url(const Url& base, std::string_view ref) {
  if (ref.find("://") != std::string_view::npos) return parse_url(ref);
  Url out = base;
  if (!ref.empty() && ref[0] == '/') {
    out.target = std::string(ref);
  } else {
    std::string dir = base.path();
    dir.erase(dir.rfind('/') + 1);
    out.target = dir + std::string(ref);
  }
  return out;
}

// ---------------------------------------------------------------- ClientPool

ClientPool::ClientPool(std::string origin, ClientOptions options)
    : origin_(std::move(origin)), options_(std::move(options)) {}

ClientPool::~ClientPool() = default;

std::unique_ptr<httplib::Client> ClientPool::make_client() const {
  auto client = std::make_unique<httplib::Client>(origin_);
  auto secs = [](std::chrono::milliseconds ms) { return std::make_pair(ms.count() / 1000, (ms.count() % 1000) * 1000); };
  auto [cs, cus] = secs(options_.connect_timeout);
  auto [rs, rus] = secs(options_.read_timeout);
  client->set_connection_timeout(cs, cus);
  client->set_read_timeout(rs, rus);
  client->set_write_timeout(rs, rus);
  client->set_keep_alive(true);
  client->set_tcp_nodelay(true);
  client->set_default_headers(options_.headers);
  return client;
}

ClientPool::Lease ClientPool::acquire() {
  {
    std::lock_guard lock(mutex_);
    if (!idle_.empty()) {
      auto client = std::move(idle_.back());
      idle_.pop_back();
      return Lease(this, std::move(client));
    }
  }
  return Lease(this, make_client());
}

ClientPool::Lease::~Lease() {
  if (!client_ || !pool_) return;
  std::lock_guard lock(pool_->mutex_);
  pool_->idle_.push_back(std::move(client_));
}

// ----------------------------------------------------------------- SSE

void SseParser::feed(std::string_view chunk, const Handler& on_event) {
  buffer_.append(chunk);
  std::size_t start = 0;
  while (true) {
    auto nl = buffer_.find('\n', start);
    if (nl == std::string::npos) break;
    std::string_view line(buffer_.data() + start, nl - start);
    start = nl + 1;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) {
      if (has_data_) on_event(event_.empty() ? "message" : event_, data_);
      event_.clear();
      data_.clear();
      has_data_ = false;
      continue;
    }
    if (line[0] == ':') continue;
    auto colon = line.find(':');
    std::string_view field = line.substr(0, colon);
    std::string_view value = colon == std::string_view::npos ? std::string_view() : line.substr(colon + 1);
    if (!value.empty() && value[0] == ' ') value.remove_prefix(1);
    if (field == "event") {
      event_ = std::string(value);
    } else if (field == "data") {
      if (has_data_) data_ += '\n';
      data_ += value;
      has_data_ = true;
    }
  }
  buffer_.erase(0, start);
}

std::string format_sse(std::string_view event, std::string_view data) {
  std::string out = "event: " + std::string(event) + "\n";
  std::size_t start = 0;
  while (true) {
    auto nl = data.find('\n', start);
    out += "data: " + std::string(data.substr(start, nl - start)) + "\n";
    if (nl == std::string_view::npos) break;
    start = nl + 1;
  }
  return out + "\n";
}

std::string describe(httplib::Error error) { return httplib::to_string(error); }

std::string excerpt(const std::string& body, std::size_t limit) {
  if (body.size() <= limit) return body;
  return body.substr(0, limit) + "...";
}

bool is_json_content_type(std::string_view content_type) {
  auto semi = content_type.find(';');
  std::string mime(content_type.substr(0, semi));
  std::transform(mime.begin(), mime.end(), mime.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  while (!mime.empty() && mime.back() == ' ') mime.pop_back();
  return mime == "application/json" || (mime.size() > 5 && mime.compare(mime.size() - 5, 5, "+json") == 0);
}

}  // namespace toolreg::detail
