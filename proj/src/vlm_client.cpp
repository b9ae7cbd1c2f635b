#include <cmath>
#include <regex>
#include <thread>

#include "json_util.hpp"

// After Eigen: <resolv.h> defines a _res macro that clashes with it.
#include <httplib.h>

#include "vlagen/errors.hpp"
#include "vlagen/vlm.hpp"

namespace vlagen {

using jsonu::json;

HttpVlmClient::HttpVlmClient(std::string endpoint, RetryPolicy policy) : policy_(policy) {
  static const std::regex kEndpoint(R"(^http://([^/:]+)(?::(\d+))?(/.*)?$)");
  std::smatch m;
  if (!std::regex_match(endpoint, m, kEndpoint)) {
    throw ConfigError("VLM endpoint must look like http://host:port, got '" + endpoint + "'");
  }
  host_ = m[1].str();
  if (m[2].matched) port_ = std::stoi(m[2].str());
  prefix_ = m[3].matched ? m[3].str() : "";
  while (!prefix_.empty() && prefix_.back() == '/') prefix_.pop_back();
}

std::string HttpVlmClient::post(const std::string& path, const std::string& body) {
  auto backoff = policy_.initial_backoff;
  std::string last_failure = "no attempt made";
  for (int attempt = 0; attempt <= policy_.max_retries; ++attempt) {
    if (attempt > 0) {
      std::this_thread::sleep_for(backoff);
      backoff = std::chrono::milliseconds(
          static_cast<std::int64_t>(static_cast<double>(backoff.count()) * policy_.multiplier));
    }
    ++attempts_;
    httplib::Client cli(host_, port_);
    cli.set_connection_timeout(policy_.connect_timeout);
    cli.set_read_timeout(policy_.read_timeout);
    auto res = cli.Post(prefix_ + path, body, "application/json");
    if (!res) {
      last_failure = httplib::to_string(res.error());
      continue;
    }
    if (res->status >= 500) {
      last_failure = "HTTP " + std::to_string(res->status);
      continue;
    }
    if (res->status != 200) {
      throw MalformedResponse("VLM server answered HTTP " + std::to_string(res->status));
    }
    return res->body;
  }
  throw VlmUnavailable("VLM server at " + host_ + ":" + std::to_string(port_) +
                       " unreachable after " + std::to_string(policy_.max_retries + 1) +
                       " attempts (" + last_failure + ")");
}

namespace {

json parse_reply(const std::string& body) {
  json j = json::parse(body, nullptr, false);
  if (j.is_discarded() || !j.is_object()) {
    throw MalformedResponse("VLM reply is not a JSON object");
  }
  return j;
}

}  // namespace

std::map<std::string, double> HttpVlmClient::attributes(
    const std::vector<std::string>& frames, const std::string& query,
    const std::vector<std::string>& candidates) {
  const json req{{"frames", frames}, {"query", query}, {"candidates", candidates}};
  const json reply = parse_reply(post("/v1/attributes", req.dump()));
  const bool logprobs = reply.contains("logprobs");
  const auto it = reply.find(logprobs ? "logprobs" : "probabilities");
  if (it == reply.end() || !it->is_object()) {
    throw MalformedResponse("attribute reply has neither probabilities nor logprobs");
  }
  std::map<std::string, double> out;
  for (auto& [token, value] : it->items()) {
    if (!value.is_number()) throw MalformedResponse("non-numeric score for '" + token + "'");
    const double v = value.get<double>();
    out[token] = logprobs ? std::exp(v) : v;
  }
  return out;
}

std::string HttpVlmClient::caption(const std::vector<std::string>& frames,
                                   const std::string& prompt) {
  const json req{{"frames", frames}, {"prompt", prompt}};
  const json reply = parse_reply(post("/v1/caption", req.dump()));
  const auto it = reply.find("text");
  if (it == reply.end() || !it->is_string()) {
    throw MalformedResponse("caption reply has no text");
  }
  return it->get<std::string>();
}

}  // namespace vlagen
