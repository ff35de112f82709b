#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <map>
#include <mutex>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <httplib.h>

#include "ordikit/error.hpp"
#include "ordikit/hash.hpp"
#include "ordikit/io.hpp"

namespace ordikit {

/// Per-model fault injection for the mock endpoint.
struct MockBehavior {
  int delay_ms = 0;
  int fail_first_n = 0;     // the first n requests answer `fail_status`
  bool always_fail = false;
  int fail_status = 500;
  bool malformed = false;   // answer 200 with a body that is not JSON
  std::string require_token;  // non-empty: demand "Authorization: Bearer <token>"
};

/// Canned top-k candidates keyed by (model, SHA-256 of the prompt).
///
/// File form is JSONL with two record shapes:
///   {"model":str,"prompt_sha256":str,"top_logprobs":{token:float,...},"question_id":str?}
///   {"model":str,"behavior":{"delay_ms":int,"fail_first_n":int,"always_fail":bool,
///                            "fail_status":int,"malformed":bool,"require_token":str}}
class MockFixture {
 public:
  struct Entry {
    std::string question_id;
    std::map<std::string, double> top_logprobs;
  };

  void add(const std::string& model, const std::string& prompt, std::map<std::string, double> top_logprobs,
           std::string question_id = {}) {
    add_hashed(model, sha256_hex(prompt), std::move(top_logprobs), std::move(question_id));
  }

  void add_hashed(const std::string& model, const std::string& prompt_sha256,
                  std::map<std::string, double> top_logprobs, std::string question_id = {}) {
    entries_[{model, prompt_sha256}] = Entry{std::move(question_id), std::move(top_logprobs)};
  }

  void set_behavior(const std::string& model, MockBehavior behavior) { behaviors_[model] = std::move(behavior); }

  const Entry* find(const std::string& model, const std::string& prompt_sha256) const {
    auto it = entries_.find({model, prompt_sha256});
    return it == entries_.end() ? nullptr : &it->second;
  }

  MockBehavior behavior(const std::string& model) const {
    auto it = behaviors_.find(model);
    return it == behaviors_.end() ? MockBehavior{} : it->second;
  }

  std::size_t size() const { return entries_.size(); }

  /// Models with at least one canned answer, sorted.
  std::vector<std::string> models() const {
    std::vector<std::string> out;
    for (const auto& [key, entry] : entries_) {
      if (out.empty() || out.back() != key.first) out.push_back(key.first);
    }
    return out;
  }

  static MockFixture parse(const std::string& text, const std::string& source = "<memory>") {
    MockFixture fx;
    const auto lines = split_lines(text);
    for (std::size_t i = 0; i < lines.size(); ++i) {
      if (is_blank(lines[i])) continue;
      const json rec = parse_json_line(lines[i], i + 1, source);
      try {
        const auto model = rec.at("model").get<std::string>();
        if (rec.contains("behavior")) {
          const json& b = rec["behavior"];
          MockBehavior mb;
          mb.delay_ms = b.value("delay_ms", 0);
          mb.fail_first_n = b.value("fail_first_n", 0);
          mb.always_fail = b.value("always_fail", false);
          mb.fail_status = b.value("fail_status", 500);
          mb.malformed = b.value("malformed", false);
          mb.require_token = b.value("require_token", std::string{});
          fx.set_behavior(model, mb);
        } else {
          std::map<std::string, double> lps;
          for (const auto& [token, lp] : rec.at("top_logprobs").items()) lps[token] = lp.get<double>();
          fx.add_hashed(model, rec.at("prompt_sha256").get<std::string>(), std::move(lps),
                        rec.value("question_id", std::string{}));
        }
      } catch (const json::exception& e) {
        fail("parse_error", source + ":" + std::to_string(i + 1) + ": " + e.what());
      }
    }
    return fx;
  }

  std::string serialize() const {
    std::string out;
    for (const auto& [model, b] : behaviors_) {
      ordered_json rec;
      rec["model"] = model;
      rec["behavior"] = {{"delay_ms", b.delay_ms},       {"fail_first_n", b.fail_first_n},
                         {"always_fail", b.always_fail}, {"fail_status", b.fail_status},
                         {"malformed", b.malformed},     {"require_token", b.require_token}};
      out += rec.dump() + "\n";
    }
    for (const auto& [key, entry] : entries_) {
      ordered_json rec;
      rec["model"] = key.first;
      rec["prompt_sha256"] = key.second;
      if (!entry.question_id.empty()) rec["question_id"] = entry.question_id;
      ordered_json lps = ordered_json::object();
      for (const auto& [token, lp] : entry.top_logprobs) lps[token] = lp;
      rec["top_logprobs"] = std::move(lps);
      out += rec.dump() + "\n";
    }
    return out;
  }

 private:
  std::map<std::pair<std::string, std::string>, Entry> entries_;
  std::map<std::string, MockBehavior> behaviors_;
};

/// In-process completion endpoint serving a MockFixture on 127.0.0.1.
///
/// Serves POST /v1/completions in the `completions` payload flavor and
/// records, per model, the request count and the peak number of requests
/// in flight at once.
class MockServer {
 public:
  explicit MockServer(MockFixture fixture) : fixture_(std::move(fixture)) {
    server_.new_task_queue = [] { return new httplib::ThreadPool(64); };
    server_.Post("/v1/completions",
                 [this](const httplib::Request& req, httplib::Response& res) { handle(req, res); });
  }

  MockServer(const MockServer&) = delete;
  MockServer& operator=(const MockServer&) = delete;

  ~MockServer() { stop(); }

  /// Binds an ephemeral port (or `port` when non-zero) and starts serving.
  void start(int port = 0) {
    if (thread_.joinable()) return;
    port_ = port == 0 ? server_.bind_to_any_port("127.0.0.1") : (server_.bind_to_port("127.0.0.1", port) ? port : -1);
    if (port_ <= 0) throw Error(ErrorKind::network, "bind_failed", "mock server could not bind a port");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }

  void stop() {
    if (!thread_.joinable()) return;
    server_.stop();
    thread_.join();
  }

  int port() const { return port_; }
  std::string base_url() const { return "http://127.0.0.1:" + std::to_string(port_) + "/v1"; }

  std::size_t requests(const std::string& model) const {
    std::lock_guard lock(mutex_);
    auto it = stats_.find(model);
    return it == stats_.end() ? 0 : it->second.requests;
  }

  std::size_t total_requests() const {
    std::lock_guard lock(mutex_);
    std::size_t total = 0;
    for (const auto& [model, s] : stats_) total += s.requests;
    return total;
  }

  int max_in_flight(const std::string& model) const {
    std::lock_guard lock(mutex_);
    auto it = stats_.find(model);
    return it == stats_.end() ? 0 : it->second.peak_in_flight;
  }

  void reset_counters() {
    std::lock_guard lock(mutex_);
    stats_.clear();
  }

 private:
  struct Stats {
    std::size_t requests = 0;
    int in_flight = 0;
    int peak_in_flight = 0;
  };

  void handle(const httplib::Request& req, httplib::Response& res) {
    json body;
    try {
      body = json::parse(req.body);
    } catch (const json::parse_error&) {
      res.status = 400;
      res.set_content(R"({"error":"request is not JSON"})", "application/json");
      return;
    }
    const std::string model = body.value("model", std::string{});
    const std::string prompt = body.value("prompt", std::string{});
    const int k = std::max(1, body.value("logprobs", 5));
    const MockBehavior behavior = fixture_.behavior(model);

    std::size_t request_no = 0;
    {
      std::lock_guard lock(mutex_);
      auto& s = stats_[model];
      request_no = ++s.requests;
      s.peak_in_flight = std::max(s.peak_in_flight, ++s.in_flight);
    }
    struct Leave {
      MockServer* self;
      std::string model;
      ~Leave() {
        std::lock_guard lock(self->mutex_);
        --self->stats_[model].in_flight;
      }
    } leave{this, model};

    if (behavior.delay_ms > 0) std::this_thread::sleep_for(std::chrono::milliseconds(behavior.delay_ms));

    if (!behavior.require_token.empty() &&
        req.get_header_value("Authorization") != "Bearer " + behavior.require_token) {
      res.status = 401;
      res.set_content(R"({"error":"unauthorized"})", "application/json");
      return;
    }
    if (behavior.always_fail || static_cast<int>(request_no) <= behavior.fail_first_n) {
      res.status = behavior.fail_status;
      res.set_content(R"({"error":"injected failure"})", "application/json");
      return;
    }
    if (behavior.malformed) {
      res.status = 200;
      res.set_content("{\"choices\": [", "application/json");
      return;
    }
    const auto* entry = fixture_.find(model, sha256_hex(prompt));
    if (entry == nullptr) {
      res.status = 404;
      res.set_content(R"({"error":"no fixture for this prompt"})", "application/json");
      return;
    }

    std::vector<std::pair<std::string, double>> ranked(entry->top_logprobs.begin(), entry->top_logprobs.end());
    std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
    if (ranked.size() > static_cast<std::size_t>(k)) ranked.resize(static_cast<std::size_t>(k));

    ordered_json top = ordered_json::object();
    for (const auto& [token, lp] : ranked) top[token] = lp;
    ordered_json choice;
    choice["index"] = 0;
    choice["text"] = ranked.empty() ? std::string{} : ranked.front().first;
    choice["finish_reason"] = "length";
    choice["logprobs"] = {{"tokens", ordered_json::array({choice["text"]})},
                          {"token_logprobs", ordered_json::array({ranked.empty() ? 0.0 : ranked.front().second})},
                          {"top_logprobs", ordered_json::array({top})}};
    ordered_json payload;
    payload["object"] = "text_completion";
    payload["model"] = model;
    payload["choices"] = ordered_json::array({choice});
    res.status = 200;
    res.set_content(payload.dump(), "application/json");
  }

  MockFixture fixture_;
  httplib::Server server_;
  std::thread thread_;
  int port_ = -1;
  mutable std::mutex mutex_;
  std::map<std::string, Stats> stats_;
};

}  // namespace ordikit
