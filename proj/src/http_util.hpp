#pragma once

#include <chrono>
#include <functional>
#include <memory>
#include <mutex>
#include <string>
#include <string_view>
#include <vector>

#include <httplib.h>

namespace toolreg::detail {

struct Url {
  std::string scheme;  // "http" or "https"
  std::string host;
  int port = 0;
  std::string target = "/";  // path plus query

  std::string origin() const;
  /// Path part of target, without the query.
  std::string path() const;
};

/// Throws std::invalid_argument for anything but an absolute http(s) URL.
Url parse_url(std::string_view text);

/// Resolves `ref` (absolute URL, absolute path or relative path) against
/// `base`.
Url resolve_url(const Url& base, std::string_view ref);

struct ClientOptions {
  std::chrono::milliseconds connect_timeout{10'000};
  std::chrono::milliseconds read_timeout{10'000};
  httplib::Headers headers;
};

/// httplib::Client sends one request at a time, so concurrent callers each
/// borrow their own keep-alive client from this pool.
class ClientPool {
 public:
  ClientPool(std::string origin, ClientOptions options);
  ~ClientPool();

  class Lease {
   public:
    Lease(ClientPool* pool, std::unique_ptr<httplib::Client> client) : pool_(pool), client_(std::move(client)) {}
    Lease(Lease&&) = default;
    ~Lease();
    httplib::Client* operator->() const { return client_.get(); }
    httplib::Client& operator*() const { return *client_; }
    /// Drops the client instead of returning it to the pool.
    void discard() { client_.reset(); }

   private:
    ClientPool* pool_;
    std::unique_ptr<httplib::Client> client_;
  };

  Lease acquire();
  const std::string& origin() const { return origin_; }

 private:
  std::unique_ptr<httplib::Client> make_client() const;

  std::string origin_;
  ClientOptions options_;
  std::mutex mutex_;
  std::vector<std::unique_ptr<httplib::Client>> idle_;
};

/// Incremental text/event-stream parser.
class SseParser {
 public:
  using Handler = std::function<void(const std::string& event, const std::string& data)>;
  void feed(std::string_view chunk, const Handler& on_event);

 private:
  std::string buffer_;
  std::string event_;
  std::string data_;
  bool has_data_ = false;
};

std::string format_sse(std::string_view event, std::string_view data);

/// Error text for a failed httplib request.
std::string describe(httplib::Error error);

/// At most `limit` bytes of `body`, marked when cut.
std::string excerpt(const std::string& body, std::size_t limit = 200);

bool is_json_content_type(std::string_view content_type);

}  // namespace toolreg::detail
