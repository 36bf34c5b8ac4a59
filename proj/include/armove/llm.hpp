#pragma once

#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <regex>
#include <semaphore>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "armove/canonical.hpp"
#include "armove/common.hpp"

namespace armove::llm {

using canonical::json;

struct Message {
  std::string role;  // system | user | assistant
  std::string content;
};

struct ChatRequest {
  std::string model_id;
  std::vector<Message> messages;
  double temperature = 0.0;
  int max_tokens = 1024;
  std::optional<std::int64_t> seed;
  std::string purpose;  // client-side stage tag; never serialized or hashed
};

struct ChatResponse {
  std::string text;
  std::size_t prompt_tokens = 0;
  std::size_t completion_tokens = 0;
  double latency_ms = 0.0;
  std::string source;  // live | mock | replay
  int retries = 0;
};

inline void validate(const ChatRequest& req) {
  if (req.messages.empty()) throw Error("chat request needs at least one message");
  const auto& first = req.messages.front().role;
  if (first != "system" && first != "user")
    throw Error("first message role must be system or user");
  if (req.temperature < 0) throw Error("temperature must be >= 0");
  if (req.max_tokens <= 0) throw Error("max_tokens must be positive");
}

inline std::string concatenated_content(const ChatRequest& req) {
  std::string all;
  for (const auto& m : req.messages) {
    all += m.content;
    all += "\n";
  }
  return all;
}

/// Canonical wire-shaped serialization: sorted keys, no incidental
/// whitespace, temperature rounded. Replay fixtures key off its hash, so
/// this form must stay stable across runs and platforms.
inline json canonical_request_json(const ChatRequest& req) {
  json j;
  j["max_tokens"] = req.max_tokens;
  json msgs = json::array();
  for (const auto& m : req.messages) {
    json mj;
    mj["content"] = m.content;
    mj["role"] = m.role;
    msgs.push_back(std::move(mj));
  }
  j["messages"] = std::move(msgs);
  j["model"] = req.model_id;
  if (req.seed) j["seed"] = *req.seed;
  j["temperature"] = canonical::num(req.temperature);
  return j;
}

inline std::string request_hash(const ChatRequest& req) {
  return fnv1a64_hex(canonical_request_json(req).dump());
}

class Backend {
public:
  virtual ~Backend() = default;
  virtual ChatResponse complete(const ChatRequest& request) = 0;
  virtual std::string name() const = 0;
};

// ---------------------------------------------------------------------------
// scripted mock
// ---------------------------------------------------------------------------

struct MockRule {
  std::string pattern;  // ECMAScript regex over concatenated message content
  std::string text;
};

class MockBackend : public Backend {
public:
  explicit MockBackend(std::vector<MockRule> rules) {
    for (auto& r : rules) add_rule(std::move(r));
  }

  MockBackend(std::initializer_list<MockRule> rules) {
    for (const auto& r : rules) add_rule(r);
  }

  static std::shared_ptr<MockBackend> from_file(const std::filesystem::path& path) {
    std::vector<MockRule> rules;
    for (const auto& j : canonical::read_json(path)) {
      rules.push_back({j.at("pattern").get<std::string>(),
                       j.at("text").get<std::string>()});
    }
    return std::make_shared<MockBackend>(std::move(rules));
  }

  ChatResponse complete(const ChatRequest& request) override {
    validate(request);
    const std::string haystack = concatenated_content(request);
    for (const auto& rule : rules_) {
      bool hit = rule.literal ? haystack.find(rule.pattern) != std::string::npos
                              : std::regex_search(haystack, rule.re);
      if (hit) {
        ChatResponse resp;
        resp.text = rule.text;
        resp.prompt_tokens = token_count(haystack);
        resp.completion_tokens = token_count(rule.text);
        resp.source = "mock";
        return resp;
      }
    }
    throw Error("no mock rule matched request (purpose: " + request.purpose + ")");
  }

  std::string name() const override { return "mock"; }

private:
  struct Compiled {
    std::string pattern;
    std::string text;
    bool literal;
    std::regex re;
  };

  void add_rule(MockRule rule) {
    bool literal = rule.pattern.find_first_of("\\^$.|?*+()[]{}") == std::string::npos;
    Compiled c;
    c.pattern = rule.pattern;
    c.text = std::move(rule.text);
    c.literal = literal;
    if (!literal) c.re = std::regex(c.pattern, std::regex::ECMAScript);
    rules_.push_back(std::move(c));
  }

  std::vector<Compiled> rules_;
};

// ---------------------------------------------------------------------------
// record / replay
// ---------------------------------------------------------------------------

class ReplayBackend : public Backend {
public:
  explicit ReplayBackend(const std::filesystem::path& fixture_path) {
    for (const auto& j : canonical::read_json_lines(fixture_path))
      fixtures_.emplace(j.at("hash").get<std::string>(), j.at("text").get<std::string>());
  }

  ChatResponse complete(const ChatRequest& request) override {
    validate(request);
    const std::string key = request_hash(request);
    auto it = fixtures_.find(key);
    if (it == fixtures_.end())
      throw Error("fixture miss: no recorded response for request hash " + key);
    ChatResponse resp;
    resp.text = it->second;
    resp.prompt_tokens = token_count(concatenated_content(request));
    resp.completion_tokens = token_count(resp.text);
    resp.source = "replay";
    return resp;
  }

  std::string name() const override { return "replay"; }

private:
  std::map<std::string, std::string> fixtures_;
};

/// Wraps any backend and appends {hash, text} fixture lines as calls happen.
/// The produced file feeds ReplayBackend.
class RecordingBackend : public Backend {
public:
  RecordingBackend(std::shared_ptr<Backend> inner, std::filesystem::path path)
      : inner_(std::move(inner)), path_(std::move(path)) {}

  ChatResponse complete(const ChatRequest& request) override {
    ChatResponse resp = inner_->complete(request);
    const std::string key = request_hash(request);
    std::lock_guard lock(mutex_);
    if (seen_.insert(key).second) {
      json j;
      j["hash"] = key;
      j["text"] = resp.text;
      std::ofstream out(path_, std::ios::binary | std::ios::app);
      if (!out) throw Error("cannot append fixture file: " + path_.string());
      out << canonical::dump_line(j);
    }
    return resp;
  }

  std::string name() const override { return "record(" + inner_->name() + ")"; }

private:
  std::shared_ptr<Backend> inner_;
  std::filesystem::path path_;
  std::set<std::string> seen_;
  std::mutex mutex_;
};

/// Per-purpose call tally; the transfer suite asserts the optimization
/// phases stay silent.
class CountingBackend : public Backend {
public:
  explicit CountingBackend(std::shared_ptr<Backend> inner) : inner_(std::move(inner)) {}

  ChatResponse complete(const ChatRequest& request) override {
    {
      std::lock_guard lock(mutex_);
      ++counts_[request.purpose];
      ++total_;
    }
    return inner_->complete(request);
  }

  std::string name() const override { return inner_->name(); }

  int count(const std::string& purpose) const {
    std::lock_guard lock(mutex_);
    auto it = counts_.find(purpose);
    return it == counts_.end() ? 0 : it->second;
  }

  int total() const {
    std::lock_guard lock(mutex_);
    return total_;
  }

  std::map<std::string, int> counts() const {
    std::lock_guard lock(mutex_);
    return counts_;
  }

private:
  std::shared_ptr<Backend> inner_;
  std::map<std::string, int> counts_;
  int total_ = 0;
  mutable std::mutex mutex_;
};

// ---------------------------------------------------------------------------
// live HTTP backend (transport injected; real transport lives in net.hpp)
// ---------------------------------------------------------------------------

struct HttpResult {
  int status = 0;
  std::string body;
  bool timeout = false;
};

class HttpTransport {
public:
  virtual ~HttpTransport() = default;
  virtual HttpResult post(const std::string& path, const std::string& body,
                          const std::string& bearer_token) = 0;
};

struct LiveConfig {
  std::string api_key;
  int max_retries = 3;
  std::int64_t backoff_base_ms = 1000;
  int max_in_flight = 4;
  bool sleep_between_retries = true;
};

class LiveBackend : public Backend {
public:
  LiveBackend(std::shared_ptr<HttpTransport> transport, LiveConfig cfg)
      : transport_(std::move(transport)),
        cfg_(std::move(cfg)),
        in_flight_(cfg_.max_in_flight) {}

  ChatResponse complete(const ChatRequest& request) override {
    validate(request);
    json body = canonical_request_json(request);
    const std::string payload = body.dump();

    in_flight_.acquire();
    struct Release {
      std::counting_semaphore<64>& sem;
      ~Release() { sem.release(); }
    } release{in_flight_};

    auto started = std::chrono::steady_clock::now();
    HttpResult last;
    int attempts = cfg_.max_retries + 1;
    for (int attempt = 0; attempt < attempts; ++attempt) {
      if (attempt > 0 && cfg_.sleep_between_retries)
        std::this_thread::sleep_for(
            std::chrono::milliseconds(cfg_.backoff_base_ms << (attempt - 1)));
      last = transport_->post("/chat/completions", payload, cfg_.api_key);
      bool retryable = last.timeout || last.status == 429 || last.status >= 500;
      if (!retryable && last.status == 200) {
        ChatResponse resp = parse_response(last.body);
        resp.retries = attempt;
        resp.latency_ms =
            std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started)
                .count();
        resp.source = "live";
        return resp;
      }
      if (!retryable) break;
    }
    if (last.timeout) throw Error("backend error: request timed out after retries");
    throw Error("backend error: HTTP status " + std::to_string(last.status));
  }

  std::string name() const override { return "live"; }

private:
  static ChatResponse parse_response(const std::string& body) {
    ChatResponse resp;
    json j = json::parse(body, nullptr, false);
    if (j.is_discarded()) throw Error("backend error: unparseable response body");
    try {
      resp.text = j.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (...) {
      throw Error("backend error: response missing choices[0].message.content");
    }
    if (j.contains("usage")) {
      resp.prompt_tokens = j["usage"].value("prompt_tokens", 0);
      resp.completion_tokens = j["usage"].value("completion_tokens", 0);
    } else {
      resp.completion_tokens = token_count(resp.text);
    }
    return resp;
  }

  std::shared_ptr<HttpTransport> transport_;
  LiveConfig cfg_;
  std::counting_semaphore<64> in_flight_;
};

// ---------------------------------------------------------------------------
// response payload extraction
// ---------------------------------------------------------------------------

class ParseError : public Error {
public:
  explicit ParseError(std::string raw)
      : Error("no JSON payload found in model output"), raw_(std::move(raw)) {}
  const std::string& raw() const { return raw_; }

private:
  std::string raw_;
};

namespace detail {

inline std::optional<json> try_parse(const std::string& text) {
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded()) return std::nullopt;
  return j;
}

inline std::optional<std::string> first_fenced_block(const std::string& text) {
  auto open = text.find("```");
  if (open == std::string::npos) return std::nullopt;
  auto body_start = text.find('\n', open);
  if (body_start == std::string::npos) return std::nullopt;
  auto close = text.find("```", body_start);
  if (close == std::string::npos) return std::nullopt;
  return text.substr(body_start + 1, close - body_start - 1);
}

inline std::optional<std::string> first_balanced(const std::string& text) {
  for (std::size_t start = 0; start < text.size(); ++start) {
    char open = text[start];
    if (open != '{' && open != '[') continue;
    char close = open == '{' ? '}' : ']';
    int depth = 0;
    bool in_string = false;
    bool escaped = false;
    for (std::size_t i = start; i < text.size(); ++i) {
      char c = text[i];
      if (in_string) {
        if (escaped)
          escaped = false;
        else if (c == '\\')
          escaped = true;
        else if (c == '"')
          in_string = false;
        continue;
      }
      if (c == '"')
        in_string = true;
      else if (c == open)
        ++depth;
      else if (c == close) {
        --depth;
        if (depth == 0) {
          std::string candidate = text.substr(start, i - start + 1);
          if (try_parse(candidate)) return candidate;
          break;
        }
      }
    }
  }
  return std::nullopt;
}

}  // namespace detail

/// Tries, in order: whole-text parse, first fenced code block, first
/// balanced top-level object/array. Throws ParseError (carrying the raw
/// text) when every strategy fails.
inline json extract_json_payload(const std::string& text) {
  if (auto whole = detail::try_parse(trim(text))) return *whole;
  if (auto fenced = detail::first_fenced_block(text)) {
    if (auto j = detail::try_parse(trim(*fenced))) return *j;
  }
  if (auto balanced = detail::first_balanced(text)) return detail::try_parse(*balanced).value();
  throw ParseError(text);
}

// ---------------------------------------------------------------------------
// transcripts
// ---------------------------------------------------------------------------

/// Reasoning-trace log, one record per completion. API keys never enter
/// these records.
class TranscriptLog {
public:
  void append(const ChatRequest& request, const ChatResponse& response) {
    json j;
    json msgs = json::array();
    for (const auto& m : request.messages)
      msgs.push_back({{"content", m.content}, {"role", m.role}});
    j["messages"] = std::move(msgs);
    j["model"] = request.model_id;
    j["purpose"] = request.purpose;
    j["response"] = response.text;
    j["source"] = response.source;
    std::lock_guard lock(mutex_);
    records_.push_back(std::move(j));
  }

  void save(const std::filesystem::path& path) const {
    std::lock_guard lock(mutex_);
    canonical::write_json_lines(path, records_);
  }

  std::size_t size() const {
    std::lock_guard lock(mutex_);
    return records_.size();
  }

private:
  std::vector<json> records_;
  mutable std::mutex mutex_;
};

}  // namespace armove::llm
