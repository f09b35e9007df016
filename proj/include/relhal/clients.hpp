#pragma once

#include <chrono>
#include <string>
#include <string_view>

#include "relhal/metrics.hpp"

namespace relhal {

// http://host[:port][/path]
struct HttpEndpoint {
  std::string origin;  // scheme://host:port
  std::string path;

  static HttpEndpoint parse(std::string_view url);
};

/// POSTs {"premise", "hypothesis"} and expects {"class_index": 0|1|2}.
/// Safe to share across threads; each call opens its own connection.
class HttpEntailmentClient : public EntailmentClient {
 public:
  explicit HttpEntailmentClient(std::string_view url, std::chrono::seconds timeout = std::chrono::seconds(30));

  int classify(const std::string& premise, const std::string& hypothesis) override;

 private:
  HttpEndpoint endpoint_;
  std::chrono::seconds timeout_;
};

class CompletionClient {
 public:
  virtual ~CompletionClient() = default;
  // Throws TransportError when no reply text can be obtained.
  virtual std::string complete(const std::string& prompt) = 0;
};

/// Chat-completions style endpoint: POSTs {"model", "temperature": 0,
/// "messages": [{"role": "user", "content": prompt}]} and reads
/// choices[0].message.content.
class HttpCompletionClient : public CompletionClient {
 public:
  HttpCompletionClient(std::string_view url, std::string model,
                       std::chrono::seconds timeout = std::chrono::seconds(60));

  std::string complete(const std::string& prompt) override;

 private:
  HttpEndpoint endpoint_;
  std::string model_;
  std::chrono::seconds timeout_;
};

}  // namespace relhal
