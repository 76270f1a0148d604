#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include "haystack/backends.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <random>
#include <thread>

#include "haystack/errors.hpp"
#include "haystack/hashing.hpp"

namespace haystack {

using nlohmann::json;

std::string_view to_string(BackendKind k) {
  switch (k) {
    case BackendKind::ChatHttp: return "chat-http";
    case BackendKind::CompletionHttp: return "completion-http";
    case BackendKind::MockBiased: return "mock-biased";
  }
  return "?";
}

std::string_view to_string(Origin o) {
  switch (o) {
    case Origin::East: return "east";
    case Origin::West: return "west";
    case Origin::Other: return "other";
  }
  return "?";
}

Origin origin_from_string(std::string_view s) {
  if (s == "east") return Origin::East;
  if (s == "west") return Origin::West;
  if (s == "other") return Origin::Other;
  throw ConfigError("unknown origin '" + std::string(s) + "' (expected east, west or other)");
}

double logistic(double x) noexcept {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// ---------------------------------------------------------------------------
// Mock

double MockBiasSpec::bias(const LanguageCode& l1, const LanguageCode& l2) const {
  if (l1 == l2) return 0.0;
  const bool forward = l1 < l2;
  auto it = log_odds_.find(forward ? std::pair{l1, l2} : std::pair{l2, l1});
  if (it == log_odds_.end()) return 0.0;
  return forward ? it->second : -it->second;
}

void MockBiasSpec::set_bias(const LanguageCode& l1, const LanguageCode& l2, double log_odds) {
  if (l1 == l2) throw ConfigError("mock bias needs two different languages");
  if (l1 < l2) {
    log_odds_[{l1, l2}] = log_odds;
  } else {
    log_odds_[{l2, l1}] = -log_odds;
  }
}

void MockBiasSpec::validate() const {
  auto in_unit = [](double p) { return p >= 0.0 && p <= 1.0; };
  if (!in_unit(detection_rate) || !in_unit(failure_rate) || detection_rate + failure_rate > 1.0) {
    throw ConfigError("mock detection_rate and failure_rate must lie in [0, 1] and sum to at most 1");
  }
}

std::string mock_answer(const MockBiasSpec& spec, const HaystackMeta& haystack, const LanguageCode& prompt_lang) {
  const auto& c = haystack.config;
  const auto& low = std::min(c.l1, c.l2);
  const auto& high = std::max(c.l1, c.l2);
  const std::string key = std::to_string(spec.rng_seed) + "|" + std::to_string(c.seed) + "|" + low.str() + "|" +
                          high.str() + "|" + std::to_string(c.size_budget) + "|" + prompt_lang.str();
  SplitMix64 rng(fnv1a64(key));
  const auto& first = haystack.first_name;

  const double outcome = rng.uniform();
  if (outcome < spec.detection_rate) {
    if (!c.conflicting()) return first + " " + c.x1;
    return "The sources disagree: " + first + " " + c.x1 + " or " + first + " " + c.x2 + ".";
  }
  if (outcome < spec.detection_rate + spec.failure_rate) {
    return "The text does not say who that is.";
  }
  if (!c.conflicting()) return first + " " + c.x1;

  const double p_low = logistic(spec.bias(low, high));
  const bool pick_low = rng.uniform() < p_low;
  // x1 is presented in l1; the alphabetically smaller language carries x1 iff l1 is it.
  const bool x1_is_low = c.l1 == low;
  const bool pick_x1 = c.monolingual() ? pick_low : (pick_low == x1_is_low);
  return first + " " + (pick_x1 ? c.x1 : c.x2);
}

MockBackend::MockBackend(BackendConfig config) : Backend(std::move(config)) {
  if (!this->config().mock) throw ConfigError("backend '" + this->config().id + "' has no [backend.mock] table");
  this->config().mock->validate();
}

QueryResult MockBackend::query(const Prompt& prompt, const HaystackMeta& haystack) {
  QueryResult r;
  r.text = mock_answer(*config().mock, haystack, prompt.prompt_lang);
  r.attempts = 1;
  r.http_status = 200;
  return r;
}

// ---------------------------------------------------------------------------
// Rate limiting

TokenBucket::TokenBucket(double per_minute, Clock::time_point start)
    : rate_per_ms_(per_minute / 60000.0),
      capacity_(std::max(1.0, per_minute / 60.0)),
      tokens_(capacity_),
      last_(start) {}

std::chrono::milliseconds TokenBucket::reserve(Clock::time_point now) {
  std::lock_guard lock(mu_);
  if (rate_per_ms_ <= 0.0) return std::chrono::milliseconds(0);
  if (now > last_) {
    const double elapsed = std::chrono::duration<double, std::milli>(now - last_).count();
    tokens_ = std::min(capacity_, tokens_ + elapsed * rate_per_ms_);
    last_ = now;
  }
  tokens_ -= 1.0;
  if (tokens_ >= 0.0) return std::chrono::milliseconds(0);
  return std::chrono::milliseconds(static_cast<long long>(std::ceil(-tokens_ / rate_per_ms_)));
}

void TokenBucket::acquire() {
  const auto wait = reserve(Clock::now());
  if (wait.count() > 0) std::this_thread::sleep_for(wait);
}

// ---------------------------------------------------------------------------
// HTTP

namespace {

void split_url(const std::string& url, std::string& base, std::string& path) {
  const auto scheme_end = url.find("://");
  if (url.empty() || scheme_end == std::string::npos) throw ConfigError("endpoint must be an absolute URL: '" + url + "'");
  const auto scheme = url.substr(0, scheme_end);
  if (scheme != "http" && scheme != "https") throw ConfigError("unsupported URL scheme in '" + url + "'");
  const auto path_start = url.find('/', scheme_end + 3);
  base = path_start == std::string::npos ? url : url.substr(0, path_start);
  path = path_start == std::string::npos ? "/" : url.substr(path_start);
}

bool retryable_status(int status) { return status == 408 || status == 409 || status == 429 || status >= 500; }

}  // namespace

std::string BackendConfig::api_key_variable() const {
  std::string name = "HAYSTACK_API_KEY_";
  for (unsigned char c : id) name += std::isalnum(c) ? static_cast<char>(std::toupper(c)) : '_';
  return name;
}

HttpBackend::HttpBackend(BackendConfig config, std::optional<std::string> api_key, Sleeper sleeper)
    : Backend(std::move(config)), api_key_(std::move(api_key)), sleep_(std::move(sleeper)) {
  if (this->config().kind == BackendKind::MockBiased) throw ConfigError("HttpBackend cannot serve a mock backend");
  split_url(this->config().endpoint_url, scheme_host_port_, path_);
  if (!sleep_) sleep_ = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
  bucket_ = std::make_unique<TokenBucket>(this->config().rate_limit_per_minute);
}

json HttpBackend::request_body(const Prompt& prompt) const {
  const auto& cfg = config();
  json body{{"model", cfg.model_name},
            {"temperature", cfg.decoding.temperature},
            {"max_tokens", cfg.decoding.max_output_tokens}};
  if (cfg.kind == BackendKind::ChatHttp) {
    body["messages"] = json::array({json{{"role", "user"}, {"content", prompt.text}}});
  } else {
    body["prompt"] = prompt.text;
  }
  if (cfg.decoding.reasoning_effort) body["reasoning_effort"] = *cfg.decoding.reasoning_effort;
  return body;
}

std::chrono::milliseconds HttpBackend::backoff(int attempt) const {
  thread_local std::mt19937_64 jitter_rng{std::random_device{}()};
  const auto& r = config().retry;
  const double base = r.base_backoff_ms * std::pow(2.0, attempt - 1);
  const double jitter = std::uniform_real_distribution<double>(0.5, 1.0)(jitter_rng);
  return std::chrono::milliseconds(static_cast<long long>(std::min<double>(r.max_backoff_ms, base * jitter)));
}

QueryResult HttpBackend::query(const Prompt& prompt, const HaystackMeta&) {
  const auto& cfg = config();
  httplib::Client client(scheme_host_port_);
  client.set_connection_timeout(std::chrono::seconds(cfg.timeout_s));
  client.set_read_timeout(std::chrono::seconds(cfg.timeout_s));
  client.set_write_timeout(std::chrono::seconds(cfg.timeout_s));
  httplib::Headers headers;
  if (api_key_) headers.emplace("Authorization", "Bearer " + *api_key_);
  const auto body = request_body(prompt).dump();

  QueryResult result;
  std::string last_error;
  const int max_attempts = std::max(1, cfg.retry.max_attempts);
  for (int attempt = 1; attempt <= max_attempts; ++attempt) {
    result.attempts = attempt;
    bucket_->acquire();
    auto res = client.Post(path_, headers, body, "application/json");
    std::chrono::milliseconds wait = backoff(attempt);
    if (!res) {
      last_error = "network: " + httplib::to_string(res.error());
    } else {
      result.http_status = res->status;
      if (res->status == 401 || res->status == 403) {
        throw AuthError("backend '" + cfg.id + "' rejected the credentials (HTTP " + std::to_string(res->status) +
                        "); set " + cfg.api_key_variable());
      }
      if (res->status >= 200 && res->status < 300) {
        try {
          const auto j = json::parse(res->body);
          const auto& choice = j.at("choices").at(0);
          if (cfg.kind == BackendKind::ChatHttp) {
            const auto& content = choice.at("message").at("content");
            result.text = content.is_null() ? std::string() : content.get<std::string>();
          } else {
            result.text = choice.at("text").get<std::string>();
          }
          if (j.contains("usage")) result.usage = j["usage"];
          result.error.reset();
          return result;
        } catch (const json::exception& e) {
          last_error = std::string("malformed response: ") + e.what();
        }
      } else if (retryable_status(res->status)) {
        last_error = "http " + std::to_string(res->status);
        if (res->has_header("Retry-After")) {
          try {
            const auto seconds = std::stod(res->get_header_value("Retry-After"));
            wait = std::max(wait, std::chrono::milliseconds(static_cast<long long>(seconds * 1000)));
          } catch (const std::exception&) {
          }
        }
      } else {
        result.error = "http " + std::to_string(res->status);
        return result;
      }
    }
    if (attempt < max_attempts) sleep_(std::min(wait, std::chrono::milliseconds(cfg.retry.max_backoff_ms)));
  }
  result.error = last_error;
  return result;
}

std::unique_ptr<Backend> make_backend(const BackendConfig& config) {
  if (config.kind == BackendKind::MockBiased) return std::make_unique<MockBackend>(config);
  std::optional<std::string> key;
  if (const char* v = std::getenv(config.api_key_variable().c_str()); v && *v) key = v;
  return std::make_unique<HttpBackend>(config, key);
}

}  // namespace haystack
