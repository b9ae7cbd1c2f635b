#pragma once

// Wire protocol to a remote video-language model, plus an in-repo mock.
//
//   POST /v1/attributes {"frames": [...], "query": str, "candidates": [str]}
//     -> {"probabilities": {candidate: float}}
//   POST /v1/caption    {"frames": [...], "prompt": str} -> {"text": str}

#include <atomic>
#include <chrono>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace vlagen {

class VlmClient {
 public:
  virtual ~VlmClient() = default;

  /// Raw probability per candidate, as returned by the server.
  virtual std::map<std::string, double> attributes(const std::vector<std::string>& frames,
                                                   const std::string& query,
                                                   const std::vector<std::string>& candidates) = 0;
  virtual std::string caption(const std::vector<std::string>& frames,
                              const std::string& prompt) = 0;
};

struct RetryPolicy {
  int max_retries = 3;
  std::chrono::milliseconds initial_backoff{200};
  double multiplier = 2.0;
  std::chrono::milliseconds connect_timeout{2000};
  std::chrono::milliseconds read_timeout{60000};
};

/// Client for the HTTP protocol. Connection failures and 5xx responses are
/// retried with exponential backoff and end in VlmUnavailable; anything else
/// unexpected raises MalformedResponse.
class HttpVlmClient : public VlmClient {
 public:
  /// `endpoint` is `http://host:port`, optionally with a path prefix.
  explicit HttpVlmClient(std::string endpoint, RetryPolicy policy = {});

  std::map<std::string, double> attributes(const std::vector<std::string>& frames,
                                           const std::string& query,
                                           const std::vector<std::string>& candidates) override;
  std::string caption(const std::vector<std::string>& frames,
                      const std::string& prompt) override;

  int attempts() const { return attempts_.load(); }

 private:
  std::string post(const std::string& path, const std::string& body);

  std::string host_;
  int port_ = 80;
  std::string prefix_;
  RetryPolicy policy_;
  std::atomic<int> attempts_{0};
};

/// Scripted or echoing stand-in for a real model server.
///
/// Fixture file (JSON):
///   {"attributes": {"<query>": {"probabilities": {...}} | {"logprobs": {...}}},
///    "caption": "fixed reply text",
///    "echo": false,
///    "fail_first": 0}
/// Queries missing from the fixture get a deterministic answer derived from a
/// hash of the request. With "echo" the caption endpoint returns the prompt.
/// "fail_first" answers the first N requests with 503.
struct MockVlmScript {
  std::map<std::string, std::map<std::string, double>> probabilities;
  /// Queries whose fixture was given as log-probabilities; answered that way.
  std::map<std::string, bool> as_logprobs;
  std::string caption;
  bool echo = false;
  int fail_first = 0;

  static MockVlmScript from_file(const std::filesystem::path& path);
  static MockVlmScript from_json_text(const std::string& text);
};

class MockVlmServer {
 public:
  explicit MockVlmServer(MockVlmScript script = {});
  ~MockVlmServer();
  MockVlmServer(const MockVlmServer&) = delete;
  MockVlmServer& operator=(const MockVlmServer&) = delete;

  /// Binds 127.0.0.1 (port 0 picks a free port) and serves on a thread.
  void start(int port = 0);
  /// Blocks serving on host:port until stop() is called from elsewhere.
  void serve_forever(const std::string& host, int port);
  void stop();

  int port() const { return port_; }
  std::string endpoint() const;
  int requests() const { return requests_.load(); }

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  std::thread thread_;
  int port_ = 0;
  std::atomic<int> requests_{0};
};

}  // namespace vlagen
