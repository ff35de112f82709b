#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include <httplib.h>

#include "ordikit/corpus.hpp"
#include "ordikit/difficulty.hpp"
#include "ordikit/error.hpp"
#include "ordikit/hash.hpp"
#include "ordikit/io.hpp"
#include "ordikit/prompting.hpp"

namespace ordikit {

/// Where the top-k candidates live in a completion response.
///
///  - completions: `choices[0].logprobs.top_logprobs[0]` is an object
///    mapping token -> logprob (legacy completion servers, vLLM, llama.cpp).
///  - token_list: `choices[0].logprobs.content[0].top_logprobs` is an array
///    of `{"token":str,"logprob":float}`.
enum class PayloadFlavor { completions, token_list };

inline PayloadFlavor parse_payload_flavor(const std::string& text) {
  if (text == "completions") return PayloadFlavor::completions;
  if (text == "token_list") return PayloadFlavor::token_list;
  fail("bad_config", "unknown payload flavor '" + text + "'");
}

struct EndpointConfig {
  std::string name;            // ensemble member name; keys results and cache
  std::string base_url;        // e.g. http://127.0.0.1:8000/v1
  std::string model;           // sent as "model"; defaults to name
  std::string auth_token_env;  // environment variable holding a bearer token; empty = none
  int max_concurrency = 4;
  std::chrono::milliseconds timeout{30'000};
  int max_retries = 3;
  std::chrono::milliseconds backoff_initial{200};
  int top_logprobs = 5;
  PayloadFlavor flavor = PayloadFlavor::completions;

  const std::string& model_id() const { return model.empty() ? name : model; }

  void validate() const {
    if (name.empty()) fail("bad_config", "endpoint name must not be empty");
    if (base_url.empty()) fail("bad_config", "endpoint '" + name + "' has no base_url", {name});
    if (max_concurrency < 1) fail("bad_config", "endpoint '" + name + "': max_concurrency must be >= 1", {name});
    if (timeout.count() <= 0) fail("bad_config", "endpoint '" + name + "': timeout must be positive", {name});
    if (max_retries < 0) fail("bad_config", "endpoint '" + name + "': max_retries must be >= 0", {name});
    if (top_logprobs < 1) fail("bad_config", "endpoint '" + name + "': top_logprobs must be >= 1", {name});
  }

  static EndpointConfig from_json(const json& j) {
    EndpointConfig c;
    c.name = j.at("name").get<std::string>();
    c.base_url = j.value("base_url", std::string{});
    c.model = j.value("model", std::string{});
    c.auth_token_env = j.value("auth_token_env", std::string{});
    c.max_concurrency = j.value("max_concurrency", c.max_concurrency);
    c.timeout = std::chrono::milliseconds(j.value("timeout_ms", static_cast<long long>(c.timeout.count())));
    c.max_retries = j.value("max_retries", c.max_retries);
    c.backoff_initial =
        std::chrono::milliseconds(j.value("backoff_initial_ms", static_cast<long long>(c.backoff_initial.count())));
    c.top_logprobs = j.value("top_logprobs", c.top_logprobs);
    if (j.contains("flavor")) c.flavor = parse_payload_flavor(j["flavor"].get<std::string>());
    c.validate();
    return c;
  }
};

struct LogprobResponse {
  std::string question_id;
  std::string model_name;
  std::map<char, double> option_logprobs;
  std::string raw;
};

/// Gateway failure. Carries the attempt count and, for malformed payloads,
/// the raw body for audit.
class GatewayError : public Error {
 public:
  GatewayError(ErrorKind kind, std::string code, const std::string& message, int attempts, std::string raw = {})
      : Error(kind, std::move(code), message), attempts_(attempts), raw_(std::move(raw)) {}

  int attempts() const { return attempts_; }
  const std::string& raw() const { return raw_; }

 private:
  int attempts_;
  std::string raw_;
};

namespace detail {

struct ParsedUrl {
  std::string scheme_host_port;
  std::string path_prefix;
};

inline ParsedUrl parse_base_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) fail("bad_config", "base_url '" + url + "' lacks a scheme");
  const auto path_start = url.find('/', scheme_end + 3);
  ParsedUrl out;
  out.scheme_host_port = url.substr(0, path_start);
  if (path_start != std::string::npos) out.path_prefix = url.substr(path_start);
  while (!out.path_prefix.empty() && out.path_prefix.back() == '/') out.path_prefix.pop_back();
  return out;
}

/// " B", "B", "(B)" and "B." all map to B; anything else is not an option.
inline std::optional<char> token_to_letter(const std::string& token, std::span<const char> letters) {
  static constexpr std::string_view kSentencePieceSpace = "\xe2\x96\x81";
  std::size_t b = 0;
  std::size_t e = token.size();
  auto strip = [](char c) {
    return std::isspace(static_cast<unsigned char>(c)) != 0 || c == '(' || c == ')' || c == '[' || c == ']' ||
           c == '.' || c == ':';
  };
  if (std::string_view(token).starts_with(kSentencePieceSpace)) b = kSentencePieceSpace.size();
  while (b < e && strip(token[b])) ++b;
  while (e > b && strip(token[e - 1])) --e;
  if (e - b != 1) return std::nullopt;
  const char c = token[b];
  if (std::find(letters.begin(), letters.end(), c) == letters.end()) return std::nullopt;
  return c;
}

inline double log_add(double a, double b) {
  const double hi = std::max(a, b);
  const double lo = std::min(a, b);
  if (std::isinf(lo) && lo < 0) return hi;
  return hi + std::log1p(std::exp(lo - hi));
}

}  // namespace detail

/// Extracts option-letter logprobs from a response body. Tokens that decode to
/// the same letter (" B" and "B") are merged by log-sum-exp.
inline std::map<char, double> parse_logprob_payload(const std::string& body, PayloadFlavor flavor,
                                                    std::span<const char> letters) {
  auto malformed = [&](const std::string& why) -> GatewayError {
    return GatewayError(ErrorKind::malformed_payload, "malformed_payload", "malformed payload: " + why, 1, body);
  };
  json doc;
  try {
    doc = json::parse(body);
  } catch (const json::parse_error&) {
    throw malformed("not JSON");
  }
  std::vector<std::pair<std::string, double>> candidates;
  try {
    const json& logprobs = doc.at("choices").at(0).at("logprobs");
    if (flavor == PayloadFlavor::completions) {
      for (const auto& [token, lp] : logprobs.at("top_logprobs").at(0).items()) {
        candidates.emplace_back(token, lp.get<double>());
      }
    } else {
      for (const auto& entry : logprobs.at("content").at(0).at("top_logprobs")) {
        candidates.emplace_back(entry.at("token").get<std::string>(), entry.at("logprob").get<double>());
      }
    }
  } catch (const json::exception& e) {
    throw malformed(std::string("missing top-k candidates (") + e.what() + ")");
  }
  std::map<char, double> out;
  for (const auto& [token, lp] : candidates) {
    if (!std::isfinite(lp) && !(std::isinf(lp) && lp < 0)) throw malformed("non-finite logprob");
    if (lp > 1e-9) throw malformed("positive logprob for token '" + token + "'");
    auto letter = detail::token_to_letter(token, letters);
    if (!letter) continue;
    const double v = std::min(lp, 0.0);
    auto [it, inserted] = out.emplace(*letter, v);
    if (!inserted) it->second = std::min(0.0, detail::log_add(it->second, v));
  }
  if (out.empty()) throw malformed("no option letter among the top candidates");
  return out;
}

/// Sends one completion request, retrying transport failures, 429 and 5xx
/// with exponential backoff. Auth and payload errors are not retried.
inline LogprobResponse score_question(const Question& q, const std::string& prompt, const EndpointConfig& endpoint) {
  endpoint.validate();
  const auto url = detail::parse_base_url(endpoint.base_url);
  const auto letters = q.option_letters();

  httplib::Headers headers;
  if (!endpoint.auth_token_env.empty()) {
    const char* token = std::getenv(endpoint.auth_token_env.c_str());
    if (token == nullptr || *token == '\0') {
      throw GatewayError(ErrorKind::auth, "missing_token",
                         "environment variable " + endpoint.auth_token_env + " is not set for endpoint '" +
                             endpoint.name + "'",
                         0);
    }
    headers.emplace("Authorization", std::string("Bearer ") + token);
  }

  json request = {{"model", endpoint.model_id()},
                  {"prompt", prompt},
                  {"max_tokens", 1},
                  {"logprobs", endpoint.top_logprobs}};
  const std::string body = request.dump();
  const std::string path = url.path_prefix + "/completions";

  std::string last_error;
  const int total_attempts = endpoint.max_retries + 1;
  for (int attempt = 1; attempt <= total_attempts; ++attempt) {
    httplib::Client client(url.scheme_host_port);
    const auto seconds = std::chrono::duration_cast<std::chrono::seconds>(endpoint.timeout);
    const auto micros = std::chrono::duration_cast<std::chrono::microseconds>(endpoint.timeout - seconds);
    client.set_connection_timeout(seconds.count(), micros.count());
    client.set_read_timeout(seconds.count(), micros.count());
    client.set_write_timeout(seconds.count(), micros.count());

    auto res = client.Post(path, headers, body, "application/json");
    if (!res) {
      last_error = "transport error: " + httplib::to_string(res.error());
    } else if (res->status == 401 || res->status == 403) {
      throw GatewayError(ErrorKind::auth, "auth_rejected",
                         "endpoint '" + endpoint.name + "' rejected credentials (HTTP " +
                             std::to_string(res->status) + ")",
                         attempt, res->body);
    } else if (res->status == 429 || res->status >= 500) {
      last_error = "HTTP " + std::to_string(res->status);
    } else if (res->status != 200) {
      throw GatewayError(ErrorKind::network, "http_status",
                         "endpoint '" + endpoint.name + "' answered HTTP " + std::to_string(res->status), attempt,
                         res->body);
    } else {
      LogprobResponse out;
      out.question_id = q.id;
      out.model_name = endpoint.name;
      out.raw = res->body;
      try {
        out.option_logprobs = parse_logprob_payload(res->body, endpoint.flavor, letters);
      } catch (const GatewayError& e) {
        throw GatewayError(e.kind(), e.code(), "endpoint '" + endpoint.name + "': " + e.what(), attempt, e.raw());
      }
      return out;
    }
    if (attempt < total_attempts) {
      std::this_thread::sleep_for(endpoint.backoff_initial * (1LL << std::min(attempt - 1, 20)));
    }
  }
  throw GatewayError(ErrorKind::network, "network_error",
                     "endpoint '" + endpoint.name + "' failed after " + std::to_string(total_attempts) +
                         " attempts: " + last_error,
                     total_attempts);
}

struct CacheKey {
  std::string endpoint;
  std::string model;
  std::string prompt_sha256;

  auto operator<=>(const CacheKey&) const = default;
};

struct CacheEntry {
  CacheKey key;
  std::string question_id;
  std::map<char, double> option_logprobs;
  std::string raw;
};

/// Append-only JSONL ledger of fetched answers keyed by
/// (endpoint, model, SHA-256 of the rendered prompt). Later lines win.
/// Writes are serialized; an empty path keeps the cache in memory.
class AnswerCache {
 public:
  AnswerCache() = default;

  explicit AnswerCache(std::filesystem::path ledger) : path_(std::move(ledger)) {
    if (path_.empty() || !std::filesystem::exists(path_)) return;
    const auto lines = split_lines(read_file(path_));
    for (std::size_t i = 0; i < lines.size(); ++i) {
      if (is_blank(lines[i])) continue;
      const json rec = parse_json_line(lines[i], i + 1, path_.string());
      try {
        CacheEntry e;
        e.key = {rec.at("endpoint").get<std::string>(), rec.at("model").get<std::string>(),
                 rec.at("prompt_sha256").get<std::string>()};
        e.question_id = rec.value("question_id", std::string{});
        for (const auto& [letter, lp] : rec.at("logprobs").items()) {
          if (letter.size() != 1) fail("parse_error", path_.string() + ":" + std::to_string(i + 1) + ": bad letter");
          e.option_logprobs[letter[0]] = lp.get<double>();
        }
        e.raw = rec.value("raw", std::string{});
        entries_[e.key] = std::move(e);
      } catch (const json::exception& ex) {
        fail("parse_error", path_.string() + ":" + std::to_string(i + 1) + ": " + ex.what());
      }
    }
  }

  AnswerCache(const AnswerCache&) = delete;
  AnswerCache& operator=(const AnswerCache&) = delete;

  std::optional<CacheEntry> find(const CacheKey& key) const {
    std::lock_guard lock(mutex_);
    auto it = entries_.find(key);
    if (it == entries_.end()) return std::nullopt;
    return it->second;
  }

  void append(std::span<const CacheEntry> batch) {
    std::lock_guard lock(mutex_);
    std::string text;
    for (const auto& e : batch) {
      ordered_json rec;
      rec["endpoint"] = e.key.endpoint;
      rec["model"] = e.key.model;
      rec["prompt_sha256"] = e.key.prompt_sha256;
      rec["question_id"] = e.question_id;
      ordered_json lps = ordered_json::object();
      for (const auto& [letter, lp] : e.option_logprobs) lps[std::string(1, letter)] = lp;
      rec["logprobs"] = std::move(lps);
      rec["raw"] = e.raw;
      text += rec.dump();
      text += '\n';
      entries_[e.key] = e;
    }
    if (path_.empty() || text.empty()) return;
    if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
    std::ofstream out(path_, std::ios::binary | std::ios::app);
    out << text;
    out.flush();
    if (!out) fail("io_error", "cannot append to cache " + path_.string());
  }

  std::size_t size() const {
    std::lock_guard lock(mutex_);
    return entries_.size();
  }

 private:
  std::filesystem::path path_;
  mutable std::mutex mutex_;
  std::map<CacheKey, CacheEntry> entries_;
};

struct ScoreFailure {
  std::string question_id;
  std::string endpoint;
  ErrorKind kind = ErrorKind::network;
  std::string code;
  std::string message;
};

struct ScoreReport {
  /// question id -> endpoint name -> distribution over that question's options.
  std::map<std::string, std::map<std::string, AnswerDistribution>> distributions;
  std::vector<ScoreFailure> failures;
  std::size_t fetched = 0;
  std::size_t cache_hits = 0;
};

/// Scores every (question, endpoint) pair, serving repeats from `cache`.
///
/// Requests to one endpoint never exceed its max_concurrency; endpoints run
/// side by side. Fresh answers are appended to the cache after the batch in
/// (question, endpoint) order, so the ledger is identical across runs.
/// Individual failures are collected, not thrown; if no pair succeeds at
/// all, an `empty_result` error is thrown.
inline ScoreReport score_dataset(const Dataset& dataset, std::span<const EndpointConfig> endpoints,
                                 AnswerCache& cache, const PromptTemplate& tmpl = {}) {
  if (endpoints.empty()) fail("empty_ensemble", "no endpoints configured");
  {
    std::set<std::string> names;
    for (const auto& ep : endpoints) {
      ep.validate();
      if (!names.insert(ep.name).second) fail("bad_config", "duplicate endpoint name '" + ep.name + "'", {ep.name});
    }
  }

  const auto& questions = dataset.questions();
  std::vector<std::string> prompts;
  std::vector<std::string> prompt_hashes;
  prompts.reserve(questions.size());
  for (const auto& q : questions) {
    prompts.push_back(render_prompt(q, tmpl));
    prompt_hashes.push_back(sha256_hex(prompts.back()));
  }

  struct Slot {
    std::optional<std::map<char, double>> logprobs;
    std::string raw;
    bool from_cache = false;
    std::optional<ScoreFailure> failure;
  };
  const std::size_t n_q = questions.size();
  const std::size_t n_e = endpoints.size();
  std::vector<Slot> slots(n_q * n_e);
  std::vector<std::vector<std::size_t>> pending(n_e);

  ScoreReport report;
  for (std::size_t qi = 0; qi < n_q; ++qi) {
    for (std::size_t ei = 0; ei < n_e; ++ei) {
      const CacheKey key{endpoints[ei].name, endpoints[ei].model_id(), prompt_hashes[qi]};
      if (auto hit = cache.find(key)) {
        slots[qi * n_e + ei].logprobs = hit->option_logprobs;
        slots[qi * n_e + ei].from_cache = true;
        ++report.cache_hits;
      } else {
        pending[ei].push_back(qi);
      }
    }
  }

  {
    std::vector<std::unique_ptr<std::atomic<std::size_t>>> cursors;
    for (std::size_t ei = 0; ei < n_e; ++ei) cursors.push_back(std::make_unique<std::atomic<std::size_t>>(0));
    std::vector<std::jthread> workers;
    for (std::size_t ei = 0; ei < n_e; ++ei) {
      report.fetched += pending[ei].size();
      const std::size_t n_workers =
          std::min<std::size_t>(static_cast<std::size_t>(endpoints[ei].max_concurrency), pending[ei].size());
      for (std::size_t w = 0; w < n_workers; ++w) {
        workers.emplace_back([&, ei] {
          auto& cursor = *cursors[ei];
          for (std::size_t i = cursor.fetch_add(1); i < pending[ei].size(); i = cursor.fetch_add(1)) {
            const std::size_t qi = pending[ei][i];
            Slot& slot = slots[qi * n_e + ei];
            try {
              auto response = score_question(questions[qi], prompts[qi], endpoints[ei]);
              slot.logprobs = std::move(response.option_logprobs);
              slot.raw = std::move(response.raw);
            } catch (const Error& e) {
              slot.failure = ScoreFailure{questions[qi].id, endpoints[ei].name, e.kind(), e.code(), e.what()};
            } catch (const std::exception& e) {
              slot.failure =
                  ScoreFailure{questions[qi].id, endpoints[ei].name, ErrorKind::internal, "internal", e.what()};
            }
          }
        });
      }
    }
  }

  std::vector<CacheEntry> fresh;
  for (std::size_t qi = 0; qi < n_q; ++qi) {
    const auto letters = questions[qi].option_letters();
    for (std::size_t ei = 0; ei < n_e; ++ei) {
      Slot& slot = slots[qi * n_e + ei];
      if (slot.failure) {
        report.failures.push_back(std::move(*slot.failure));
        continue;
      }
      try {
        report.distributions[questions[qi].id][endpoints[ei].name] =
            AnswerDistribution::from_logprobs(*slot.logprobs, letters);
      } catch (const Error& e) {
        report.failures.push_back(
            ScoreFailure{questions[qi].id, endpoints[ei].name, ErrorKind::malformed_payload, e.code(), e.what()});
        continue;
      }
      if (!slot.from_cache) {
        fresh.push_back(CacheEntry{{endpoints[ei].name, endpoints[ei].model_id(), prompt_hashes[qi]},
                                   questions[qi].id,
                                   *slot.logprobs,
                                   std::move(slot.raw)});
      }
    }
  }
  cache.append(fresh);

  if (report.distributions.empty() && n_q > 0) {
    std::vector<std::string> subjects;
    for (const auto& f : report.failures) subjects.push_back(f.question_id + "@" + f.endpoint);
    const ErrorKind kind = report.failures.empty() ? ErrorKind::internal : report.failures.front().kind;
    throw Error(kind, "empty_result",
                "all " + std::to_string(report.failures.size()) + " (question, endpoint) pairs failed; first: " +
                    (report.failures.empty() ? std::string("n/a") : report.failures.front().message),
                std::move(subjects));
  }
  return report;
}

inline ordered_json to_json(const ScoreFailure& f) {
  return ordered_json{{"question_id", f.question_id},
                      {"endpoint", f.endpoint},
                      {"kind", to_string(f.kind)},
                      {"code", f.code},
                      {"message", f.message}};
}

}  // namespace ordikit
