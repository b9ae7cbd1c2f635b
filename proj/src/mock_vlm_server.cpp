#include <cmath>
#include <mutex>

#include "json_util.hpp"

// After Eigen: <resolv.h> defines a _res macro that clashes with it.
#include <httplib.h>

#include "vlagen/errors.hpp"
#include "vlagen/vlm.hpp"

namespace vlagen {

using jsonu::json;

MockVlmScript MockVlmScript::from_json_text(const std::string& text) {
  const json j = json::parse(text, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw ConfigError("mock fixture is not a JSON object");
  MockVlmScript s;
  try {
    if (j.contains("attributes")) {
      for (auto& [query, entry] : j.at("attributes").items()) {
        const bool logp = entry.contains("logprobs");
        const auto& scores = entry.at(logp ? "logprobs" : "probabilities");
        for (auto& [token, v] : scores.items()) s.probabilities[query][token] = v.get<double>();
        s.as_logprobs[query] = logp;
      }
    }
    s.caption = j.value("caption", std::string{});
    s.echo = j.value("echo", false);
    s.fail_first = j.value("fail_first", 0);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad mock fixture: ") + e.what());
  }
  return s;
}

MockVlmScript MockVlmScript::from_file(const std::filesystem::path& path) {
  try {
    return from_json_text(jsonu::read_file(path));
  } catch (const IoError& e) {
    throw ConfigError(e.what());
  }
}

namespace {

std::uint64_t fnv1a(const std::string& s, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Deterministic distribution over the candidates keyed by the request.
json hashed_probabilities(const json& req) {
  std::uint64_t h = fnv1a(req.value("query", std::string{}));
  for (const auto& f : req.value("frames", std::vector<std::string>{})) h = fnv1a(f, h);
  const auto cands = req.value("candidates", std::vector<std::string>{});
  std::vector<double> w;
  double total = 0.0;
  for (std::size_t i = 0; i < cands.size(); ++i) {
    h = splitmix64(h);
    w.push_back(1.0 + static_cast<double>(h % 1000));
    total += w.back();
  }
  json out = json::object();
  for (std::size_t i = 0; i < cands.size(); ++i) out[cands[i]] = w[i] / total;
  return out;
}

}  // namespace

struct MockVlmServer::Impl {
  httplib::Server server;
  MockVlmScript script;
};

MockVlmServer::MockVlmServer(MockVlmScript script) : impl_(std::make_unique<Impl>()) {
  impl_->script = std::move(script);
  auto& svr = impl_->server;

  auto guard = [this](httplib::Response& res) {
    const int n = ++requests_;
    if (n <= impl_->script.fail_first) {
      res.status = 503;
      res.set_content(R"({"error":"scripted failure"})", "application/json");
      return false;
    }
    return true;
  };

  svr.Post("/v1/attributes", [this, guard](const httplib::Request& req, httplib::Response& res) {
    if (!guard(res)) return;
    const json body = json::parse(req.body, nullptr, false);
    if (body.is_discarded() || !body.is_object()) {
      res.status = 400;
      return;
    }
    const std::string query = body.value("query", std::string{});
    json reply;
    const auto& script = impl_->script;
    if (auto it = script.probabilities.find(query); it != script.probabilities.end()) {
      const bool logp = script.as_logprobs.count(query) && script.as_logprobs.at(query);
      json scores = json::object();
      for (const auto& [token, p] : it->second) scores[token] = p;
      reply[logp ? "logprobs" : "probabilities"] = scores;
    } else {
      reply["probabilities"] = hashed_probabilities(body);
    }
    res.set_content(reply.dump(), "application/json");
  });

  svr.Post("/v1/caption", [this, guard](const httplib::Request& req, httplib::Response& res) {
    if (!guard(res)) return;
    const json body = json::parse(req.body, nullptr, false);
    if (body.is_discarded() || !body.is_object()) {
      res.status = 400;
      return;
    }
    const auto& script = impl_->script;
    std::string text;
    if (script.echo) {
      text = body.value("prompt", std::string{});
    } else if (!script.caption.empty()) {
      text = script.caption;
    } else {
      text = "No additional hazards are visible.";
    }
    res.set_content(json{{"text", text}}.dump(), "application/json");
  });
}

MockVlmServer::~MockVlmServer() { stop(); }

void MockVlmServer::start(int port) {
  auto& svr = impl_->server;
  if (port == 0) {
    port_ = svr.bind_to_any_port("127.0.0.1");
  } else if (svr.bind_to_port("127.0.0.1", port)) {
    port_ = port;
  } else {
    port_ = -1;
  }
  if (port_ <= 0) throw ConfigError("mock VLM server could not bind a port");
  thread_ = std::thread([&svr] { svr.listen_after_bind(); });
  svr.wait_until_ready();
}

void MockVlmServer::serve_forever(const std::string& host, int port) {
  port_ = port;
  if (!impl_->server.listen(host, port)) {
    throw ConfigError("mock VLM server could not listen on " + host + ":" +
                      std::to_string(port));
  }
}

void MockVlmServer::stop() {
  if (!impl_) return;
  impl_->server.stop();
  if (thread_.joinable()) thread_.join();
}

std::string MockVlmServer::endpoint() const {
  return "http://127.0.0.1:" + std::to_string(port_);
}

}  // namespace vlagen
