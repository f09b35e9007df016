#include "relhal/clients.hpp"

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "relhal/error.hpp"

namespace relhal {

using nlohmann::json;

HttpEndpoint HttpEndpoint::parse(std::string_view url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string_view::npos) throw ValidationError("endpoint URL needs a scheme: " + std::string(url));
  if (url.substr(0, scheme_end) != "http") {
    throw ValidationError("only http:// endpoints are supported: " + std::string(url));
  }
  const auto path_start = url.find('/', scheme_end + 3);
  HttpEndpoint e;
  e.origin = std::string(url.substr(0, path_start));
  e.path = path_start == std::string_view::npos ? "/" : std::string(url.substr(path_start));
  if (e.origin.size() <= scheme_end + 3) throw ValidationError("endpoint URL has no host: " + std::string(url));
  return e;
}

namespace {

json post_json(const HttpEndpoint& endpoint, const json& body, std::chrono::seconds timeout) {
  httplib::Client client(endpoint.origin);
  client.set_connection_timeout(timeout);
  client.set_read_timeout(timeout);
  auto res = client.Post(endpoint.path, body.dump(), "application/json");
  if (!res) {
    throw TransportError("request to " + endpoint.origin + endpoint.path + " failed: " + httplib::to_string(res.error()));
  }
  if (res->status != 200) {
    throw TransportError(endpoint.origin + endpoint.path + " answered HTTP " + std::to_string(res->status));
  }
  try {
    return json::parse(res->body);
  } catch (const json::parse_error&) {
    throw TransportError(endpoint.origin + endpoint.path + " returned a non-JSON body");
  }
}

}  // namespace

HttpEntailmentClient::HttpEntailmentClient(std::string_view url, std::chrono::seconds timeout)
    : endpoint_(HttpEndpoint::parse(url)), timeout_(timeout) {}

int HttpEntailmentClient::classify(const std::string& premise, const std::string& hypothesis) {
  const json reply = post_json(endpoint_, {{"premise", premise}, {"hypothesis", hypothesis}}, timeout_);
  auto it = reply.find("class_index");
  if (it == reply.end() || !it->is_number_integer()) throw TransportError("entailment reply lacks class_index");
  const int cls = it->get<int>();
  if (cls < 0 || cls > 2) throw TransportError("entailment class_index out of range: " + std::to_string(cls));
  return cls;
}

HttpCompletionClient::HttpCompletionClient(std::string_view url, std::string model, std::chrono::seconds timeout)
    : endpoint_(HttpEndpoint::parse(url)), model_(std::move(model)), timeout_(timeout) {}

std::string HttpCompletionClient::complete(const std::string& prompt) {
  const json body = {{"model", model_},
                     {"temperature", 0},
                     {"messages", json::array({{{"role", "user"}, {"content", prompt}}})}};
  const json reply = post_json(endpoint_, body, timeout_);
  try {
    return reply.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const json::exception&) {
    throw TransportError("completion reply lacks choices[0].message.content");
  }
}

}  // namespace relhal
