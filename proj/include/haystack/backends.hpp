#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "haystack/corpus_io.hpp"
#include "haystack/prompt.hpp"

namespace haystack {

enum class BackendKind { ChatHttp, CompletionHttp, MockBiased };
enum class Origin { East, West, Other };

std::string_view to_string(BackendKind k);
std::string_view to_string(Origin o);
Origin origin_from_string(std::string_view s);

struct DecodingParams {
  double temperature = 0.0;
  int max_output_tokens = 256;
  /// Passed through verbatim as "reasoning_effort" when set.
  std::optional<std::string> reasoning_effort;
};

struct RetryPolicy {
  int max_attempts = 5;
  int base_backoff_ms = 1000;
  int max_backoff_ms = 60000;
};

/// Synthetic answerer with a known language preference, used to validate the
/// statistics end to end.
struct MockBiasSpec {
  double detection_rate = 0.0;  // answers with both names
  double failure_rate = 0.0;    // answers with neither
  std::uint64_t rng_seed = 0;

  /// Preference log-odds for the surname presented in `l1` over the one in
  /// `l2`. Stored once per unordered pair, so bias(a, b) == -bias(b, a).
  double bias(const LanguageCode& l1, const LanguageCode& l2) const;
  void set_bias(const LanguageCode& l1, const LanguageCode& l2, double log_odds);

  /// Throws ConfigError when the rates are outside [0, 1] or sum above 1.
  void validate() const;

 private:
  std::map<std::pair<LanguageCode, LanguageCode>, double> log_odds_;
};

struct BackendConfig {
  std::string id;
  BackendKind kind = BackendKind::MockBiased;
  std::string endpoint_url;
  std::string model_name;
  DecodingParams decoding;
  double rate_limit_per_minute = 0.0;  // 0: unlimited
  RetryPolicy retry;
  int timeout_s = 60;
  Origin origin = Origin::Other;
  std::optional<MockBiasSpec> mock;

  /// HAYSTACK_API_KEY_<ID>, with the id uppercased and non-alphanumerics as '_'.
  std::string api_key_variable() const;
  PromptMode prompt_mode() const noexcept {
    return kind == BackendKind::CompletionHttp ? PromptMode::Completion : PromptMode::Chat;
  }
};

/// Parses a backends document (`[[backend]]` tables). Errors name the key path.
std::vector<BackendConfig> parse_backends(std::string_view toml_text, std::string_view source_name = "backends");
std::vector<BackendConfig> load_backends(const std::filesystem::path& file);

struct QueryResult {
  std::string text;
  int attempts = 0;
  int http_status = 0;
  std::optional<std::string> error;  // transport error tag after exhausted retries
  nlohmann::json usage = nlohmann::json::object();
};

class Backend {
 public:
  explicit Backend(BackendConfig config) : config_(std::move(config)) {}
  virtual ~Backend() = default;
  Backend(const Backend&) = delete;
  Backend& operator=(const Backend&) = delete;

  const BackendConfig& config() const noexcept { return config_; }

  /// Safe to call concurrently. Transport failures come back in
  /// QueryResult::error; AuthError is thrown.
  virtual QueryResult query(const Prompt& prompt, const HaystackMeta& haystack) = 0;

 private:
  BackendConfig config_;
};

double logistic(double x) noexcept;

/// Deterministic answer of the mock for one (haystack, prompt language).
/// Draws come from splitmix64 seeded with FNV-1a of
/// "rng_seed|haystack seed|low lang|high lang|size|prompt lang". Both members
/// of a contrastive pair therefore see the same draws, and the choice compares
/// one uniform against the preference for the alphabetically smaller
/// language, so P(x1) = logistic(bias(l1, l2)) in either member.
std::string mock_answer(const MockBiasSpec& spec, const HaystackMeta& haystack, const LanguageCode& prompt_lang);

class MockBackend final : public Backend {
 public:
  explicit MockBackend(BackendConfig config);
  QueryResult query(const Prompt& prompt, const HaystackMeta& haystack) override;
};

/// Token bucket holding up to max(1, rate/60) requests.
class TokenBucket {
 public:
  using Clock = std::chrono::steady_clock;
  explicit TokenBucket(double per_minute, Clock::time_point start = Clock::now());

  /// Takes one token at `now`; returns how long the caller must wait before
  /// sending. Tokens may go negative, which queues later callers.
  std::chrono::milliseconds reserve(Clock::time_point now);
  void acquire();

 private:
  std::mutex mu_;
  double rate_per_ms_;
  double capacity_;
  double tokens_;
  Clock::time_point last_;
};

/// OpenAI-compatible chat-completions or prompt/completion client.
class HttpBackend final : public Backend {
 public:
  using Sleeper = std::function<void(std::chrono::milliseconds)>;

  explicit HttpBackend(BackendConfig config, std::optional<std::string> api_key = std::nullopt,
                       Sleeper sleeper = nullptr);

  QueryResult query(const Prompt& prompt, const HaystackMeta& haystack) override;

  /// JSON request body for `prompt`.
  nlohmann::json request_body(const Prompt& prompt) const;

 private:
  std::chrono::milliseconds backoff(int attempt) const;

  std::optional<std::string> api_key_;
  Sleeper sleep_;
  std::unique_ptr<TokenBucket> bucket_;
  std::string scheme_host_port_;
  std::string path_;
};

/// Mock or HTTP backend; HTTP keys are read from the environment.
std::unique_ptr<Backend> make_backend(const BackendConfig& config);

}  // namespace haystack
