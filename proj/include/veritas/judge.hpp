#pragma once

#include <chrono>
#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "veritas/core.hpp"
#include "veritas/eval.hpp"

namespace veritas::judge {

/// A failed request that may succeed when retried.
class TransportError : public Error {
 public:
  using Error::Error;
};

class Transport {
 public:
  virtual ~Transport() = default;
  /// Raw judge output for one prompt. Throws TransportError on failure.
  virtual std::string send(const std::string& prompt) = 0;
};

/// Offline judge: canned verdict objects chosen by a stable hash of
/// (judge id, prompt).
class MockTransport : public Transport {
 public:
  explicit MockTransport(std::string judge_id) : judge_id_(std::move(judge_id)) {}
  std::string send(const std::string& prompt) override;

 private:
  std::string judge_id_;
};

struct HttpConfig {
  std::string endpoint;  // e.g. https://host/v1/judge
  std::string api_key;   // sent as a bearer token when non-empty
  std::string model;     // forwarded in the request body
  std::chrono::milliseconds timeout{60000};
};

/// POSTs {"model", "prompt"} as JSON. A JSON reply with a string "text" field
/// yields that field; any other 2xx body is returned verbatim.
class HttpTransport : public Transport {
 public:
  explicit HttpTransport(HttpConfig config);
  std::string send(const std::string& prompt) override;

 private:
  HttpConfig config_;
  std::string scheme_host_port_;
  std::string path_;
};

struct RetryPolicy {
  int max_attempts = 4;
  std::chrono::milliseconds initial_backoff{500};
  double backoff_multiplier = 2.0;
};

class Client {
 public:
  using SleepFn = std::function<void(std::chrono::milliseconds)>;

  Client(std::string judge_id, std::unique_ptr<Transport> transport, RetryPolicy retry = {},
         SleepFn sleep = {});

  const std::string& judge_id() const noexcept { return judge_id_; }

  /// Sends with bounded exponential backoff; rethrows the last TransportError
  /// once `max_attempts` is exhausted.
  std::string submit(const std::string& prompt);

 private:
  std::string judge_id_;
  std::unique_ptr<Transport> transport_;
  RetryPolicy retry_;
  SleepFn sleep_;
};

/// Mock client, or an HTTP client configured from VERITAS_JUDGE_ENDPOINT and
/// VERITAS_JUDGE_API_KEY. Throws ConfigError when the endpoint is unset.
Client make_client(const std::string& judge_id, bool mock, RetryPolicy retry = {});

struct ComparisonPair {
  std::string id;
  std::string output_a;
  std::string output_b;
};

std::vector<ComparisonPair> load_pairs(const std::filesystem::path& path);

struct JudgeRun {
  std::vector<PairwiseJudgment> judgments;
  std::vector<std::string> failures;  // "<id>/<dimension>/<judge>: reason"
};

/// Every (pair, dimension, judge) combination, at most `jobs` requests in
/// flight. Results are ordered by (pair, dimension, judge) regardless of
/// completion order. Unparseable replies are reported, not counted.
JudgeRun run_pairwise(const std::vector<ComparisonPair>& pairs,
                      const std::vector<Dimension>& dimensions, std::vector<Client>& clients,
                      int jobs = 1);

}  // namespace veritas::judge
