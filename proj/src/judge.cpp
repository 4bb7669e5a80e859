#define CPPHTTPLIB_OPENSSL_SUPPORT
#include "httplib.h"

#include "veritas/judge.hpp"

#include <atomic>
#include <cstdlib>
#include <fstream>
#include <mutex>
#include <thread>

#include "json_util.hpp"

namespace veritas::judge {

using detail::json;

namespace {

std::uint64_t fnv1a(std::string_view s, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

std::string MockTransport::send(const std::string& prompt) {
  const std::uint64_t h = fnv1a(prompt, fnv1a(judge_id_));
  static constexpr const char* kDecisions[] = {"[[A]]", "[[B]]", "[[C]]"};
  const char* decision = kDecisions[h % 3];
  json reply = {{"analysis", "mock judgment " + std::to_string(h % 1000003)},
                {"judgment", decision}};
  return reply.dump();
}

HttpTransport::HttpTransport(HttpConfig config) : config_(std::move(config)) {
  const auto scheme_end = config_.endpoint.find("://");
  if (scheme_end == std::string::npos)
    throw ConfigError("judge endpoint must include a scheme: " + config_.endpoint);
  const auto path_start = config_.endpoint.find('/', scheme_end + 3);
  scheme_host_port_ = config_.endpoint.substr(0, path_start);
  path_ = path_start == std::string::npos ? "/" : config_.endpoint.substr(path_start);
}

std::string HttpTransport::send(const std::string& prompt) {
  httplib::Client cli(scheme_host_port_);
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(config_.timeout);
  const auto usecs =
      std::chrono::duration_cast<std::chrono::microseconds>(config_.timeout - secs);
  cli.set_connection_timeout(secs.count(), usecs.count());
  cli.set_read_timeout(secs.count(), usecs.count());
  cli.set_write_timeout(secs.count(), usecs.count());
  httplib::Headers headers;
  if (!config_.api_key.empty()) headers.emplace("Authorization", "Bearer " + config_.api_key);

  const json body = {{"model", config_.model}, {"prompt", prompt}};
  auto res = cli.Post(path_, headers, body.dump(), "application/json");
  if (!res) throw TransportError("judge request failed: " + httplib::to_string(res.error()));
  if (res->status < 200 || res->status >= 300)
    throw TransportError("judge returned HTTP " + std::to_string(res->status));
  json j = json::parse(res->body, nullptr, false);
  if (!j.is_discarded() && j.is_object() && j.contains("text") && j["text"].is_string())
    return j["text"].get<std::string>();
  return res->body;
}

Client::Client(std::string judge_id, std::unique_ptr<Transport> transport, RetryPolicy retry,
               SleepFn sleep)
    : judge_id_(std::move(judge_id)),
      transport_(std::move(transport)),
      retry_(retry),
      sleep_(std::move(sleep)) {
  if (!transport_) throw ConfigError("judge client needs a transport");
  if (retry_.max_attempts < 1) throw ConfigError("max_attempts must be >= 1");
  if (!sleep_) sleep_ = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
}

std::string Client::submit(const std::string& prompt) {
  auto backoff = retry_.initial_backoff;
  for (int attempt = 1;; ++attempt) {
    try {
      return transport_->send(prompt);
    } catch (const TransportError&) {
      if (attempt >= retry_.max_attempts) throw;
    }
    sleep_(backoff);
    backoff = std::chrono::milliseconds(
        static_cast<std::int64_t>(static_cast<double>(backoff.count()) * retry_.backoff_multiplier));
  }
}

Client make_client(const std::string& judge_id, bool mock, RetryPolicy retry) {
  if (mock) return Client(judge_id, std::make_unique<MockTransport>(judge_id), retry);
  const char* endpoint = std::getenv("VERITAS_JUDGE_ENDPOINT");
  if (endpoint == nullptr || *endpoint == '\0')
    throw ConfigError("VERITAS_JUDGE_ENDPOINT is not set (use --mock for offline runs)");
  const char* key = std::getenv("VERITAS_JUDGE_API_KEY");
  HttpConfig cfg{endpoint, key ? key : "", judge_id};
  return Client(judge_id, std::make_unique<HttpTransport>(std::move(cfg)), retry);
}

std::vector<ComparisonPair> load_pairs(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open pairs " + path.string());
  std::vector<ComparisonPair> out;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j = json::parse(text, nullptr, false);
    if (j.is_discarded() || !j.is_object()) throw ParseError("not a JSON object", line);
    for (const char* k : {"id", "output_a", "output_b"}) {
      if (!j.contains(k) || !j[k].is_string())
        throw ParseError(std::string("missing string '") + k + "'", line);
    }
    out.push_back({j["id"].get<std::string>(), j["output_a"].get<std::string>(),
                   j["output_b"].get<std::string>()});
  }
  return out;
}

JudgeRun run_pairwise(const std::vector<ComparisonPair>& pairs,
                      const std::vector<Dimension>& dimensions, std::vector<Client>& clients,
                      int jobs) {
  struct Task {
    std::size_t pair;
    Dimension dimension;
    std::size_t client;
  };
  std::vector<Task> tasks;
  for (std::size_t p = 0; p < pairs.size(); ++p) {
    for (auto d : dimensions) {
      for (std::size_t c = 0; c < clients.size(); ++c) tasks.push_back({p, d, c});
    }
  }

  std::vector<std::optional<PairwiseJudgment>> results(tasks.size());
  std::vector<std::string> errors(tasks.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < tasks.size(); i = next++) {
      const auto& t = tasks[i];
      const auto& pair = pairs[t.pair];
      auto& client = clients[t.client];
      try {
        const auto raw = client.submit(build_judge_prompt(t.dimension, pair.output_a, pair.output_b));
        const auto parsed = parse_judgment(raw);
        if (const auto* v = std::get_if<JudgeVerdict>(&parsed)) {
          results[i] = PairwiseJudgment{pair.id, t.dimension, client.judge_id(), v->decision};
        } else {
          errors[i] = std::get<ParseFailure>(parsed).reason;
        }
      } catch (const std::exception& e) {
        errors[i] = e.what();
      }
    }
  };

  const int n = std::max(1, std::min<int>(jobs, static_cast<int>(tasks.size())));
  if (n == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (int k = 0; k < n; ++k) pool.emplace_back(worker);
  }

  JudgeRun run;
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    if (results[i]) {
      run.judgments.push_back(std::move(*results[i]));
    } else {
      const auto& t = tasks[i];
      run.failures.push_back(pairs[t.pair].id + "/" + std::string(to_string(t.dimension)) + "/" +
                             clients[t.client].judge_id() + ": " + errors[i]);
    }
  }
  return run;
}

}  // namespace veritas::judge
