#include <fstream>
#include <sstream>

#include <toml.hpp>

#include "haystack/backends.hpp"
#include "haystack/errors.hpp"

namespace haystack {

namespace {

using View = toml::node_view<const toml::node>;

[[noreturn]] void fail(const std::string& key, const std::string& what) { throw ConfigError(key + ": " + what); }

std::string get_string(View node, const std::string& key, std::optional<std::string> fallback = std::nullopt) {
  if (!node) {
    if (fallback) return *fallback;
    fail(key, "required key is missing");
  }
  auto v = node.value<std::string>();
  if (!v) fail(key, "expected a string");
  return *v;
}

double get_number(View node, const std::string& key, double fallback) {
  if (!node) return fallback;
  if (!node.is_number()) fail(key, "expected a number");
  return *node.value<double>();
}

std::int64_t get_integer(View node, const std::string& key, std::int64_t fallback) {
  if (!node) return fallback;
  auto v = node.value<std::int64_t>();
  if (!node.is_integer() || !v) fail(key, "expected an integer");
  return *v;
}

BackendKind kind_from_string(const std::string& s, const std::string& key) {
  if (s == "chat-http") return BackendKind::ChatHttp;
  if (s == "completion-http") return BackendKind::CompletionHttp;
  if (s == "mock-biased") return BackendKind::MockBiased;
  fail(key, "expected one of chat-http, completion-http, mock-biased (got '" + s + "')");
}

MockBiasSpec parse_mock(View node, const std::string& path) {
  MockBiasSpec spec;
  spec.detection_rate = get_number(node["detection_rate"], path + ".detection_rate", 0.0);
  spec.failure_rate = get_number(node["failure_rate"], path + ".failure_rate", 0.0);
  spec.rng_seed = static_cast<std::uint64_t>(get_integer(node["seed"], path + ".seed", 0));
  if (auto bias = node["bias"]) {
    const auto* arr = bias.as_array();
    if (!arr) fail(path + ".bias", "expected an array of {l1, l2, log_odds} tables");
    for (std::size_t i = 0; i < arr->size(); ++i) {
      const auto bpath = path + ".bias[" + std::to_string(i) + "]";
      const View b{arr->get(i)};
      try {
        spec.set_bias(LanguageCode(get_string(b["l1"], bpath + ".l1")), LanguageCode(get_string(b["l2"], bpath + ".l2")),
                      get_number(b["log_odds"], bpath + ".log_odds", 0.0));
      } catch (const ConfigError& e) {
        const std::string msg = e.what();
        if (msg.rfind(bpath, 0) == 0) throw;
        fail(bpath, msg);
      }
    }
  }
  try {
    spec.validate();
  } catch (const ConfigError& e) {
    fail(path, e.what());
  }
  return spec;
}

}  // namespace

std::vector<BackendConfig> parse_backends(std::string_view toml_text, std::string_view source_name) {
  toml::table doc;
  try {
    doc = toml::parse(toml_text, source_name);
  } catch (const toml::parse_error& e) {
    std::ostringstream msg;
    msg << source_name << ":" << e.source().begin.line << ": " << e.description();
    throw ConfigError(msg.str());
  }
  const auto* arr = doc["backend"].as_array();
  if (!arr || arr->empty()) fail("backend", "at least one [[backend]] table is required");

  std::vector<BackendConfig> out;
  for (std::size_t i = 0; i < arr->size(); ++i) {
    const auto path = "backend[" + std::to_string(i) + "]";
    const View node{arr->get(i)};
    if (!node.is_table()) fail(path, "expected a table");
    BackendConfig cfg;
    cfg.id = get_string(node["id"], path + ".id");
    if (cfg.id.empty()) fail(path + ".id", "must not be empty");
    for (const auto& prev : out) {
      if (prev.id == cfg.id) fail(path + ".id", "duplicate backend id '" + cfg.id + "'");
    }
    cfg.kind = kind_from_string(get_string(node["kind"], path + ".kind"), path + ".kind");
    cfg.model_name = get_string(node["model"], path + ".model", cfg.id);
    cfg.endpoint_url = get_string(node["endpoint"], path + ".endpoint", "");
    if (cfg.kind != BackendKind::MockBiased && cfg.endpoint_url.empty()) fail(path + ".endpoint", "required for HTTP backends");
    cfg.decoding.temperature = get_number(node["temperature"], path + ".temperature", 0.0);
    cfg.decoding.max_output_tokens =
        static_cast<int>(get_integer(node["max_output_tokens"], path + ".max_output_tokens", 256));
    if (cfg.decoding.max_output_tokens <= 0) fail(path + ".max_output_tokens", "must be positive");
    if (node["reasoning_effort"]) cfg.decoding.reasoning_effort = get_string(node["reasoning_effort"], path + ".reasoning_effort");
    cfg.rate_limit_per_minute = get_number(node["rate_limit"], path + ".rate_limit", 0.0);
    if (cfg.rate_limit_per_minute < 0) fail(path + ".rate_limit", "must not be negative");
    cfg.timeout_s = static_cast<int>(get_integer(node["timeout_s"], path + ".timeout_s", 60));
    cfg.retry.max_attempts = static_cast<int>(get_integer(node["retry"]["max_attempts"], path + ".retry.max_attempts", 5));
    cfg.retry.base_backoff_ms =
        static_cast<int>(get_integer(node["retry"]["base_backoff_ms"], path + ".retry.base_backoff_ms", 1000));
    if (cfg.retry.max_attempts < 1) fail(path + ".retry.max_attempts", "must be at least 1");
    try {
      cfg.origin = origin_from_string(get_string(node["origin"], path + ".origin", "other"));
    } catch (const ConfigError& e) {
      fail(path + ".origin", e.what());
    }
    if (cfg.kind == BackendKind::MockBiased) {
      if (!node["mock"].is_table()) fail(path + ".mock", "mock-biased backends need a [backend.mock] table");
      cfg.mock = parse_mock(node["mock"], path + ".mock");
    }
    out.push_back(std::move(cfg));
  }
  return out;
}

std::vector<BackendConfig> load_backends(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw ConfigError("cannot read backends file " + file.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_backends(ss.str(), file.string());
}

}  // namespace haystack
