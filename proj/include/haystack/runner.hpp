#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "haystack/backends.hpp"
#include "haystack/corpus_io.hpp"
#include "haystack/prompt.hpp"

namespace haystack {

/// Question for `config` in `lang`, with the format instruction appended when
/// `strict_format` is set. Throws CorpusError for a missing translation.
std::string render_question(const HaystackConfig& config, const NeedleSet& needles, const LanguageCode& lang,
                            bool strict_format);

/// Chat: haystack, blank line, question. Completion: haystack, blank line,
/// "Question: <q>", blank line, "Answer:". Trailing newlines of the haystack
/// are folded into the blank line.
Prompt build_prompt(std::string_view haystack_text, const HaystackConfig& config, const NeedleSet& needles,
                    const LanguageCode& prompt_lang, PromptMode mode, bool strict_format);

struct QueryRecord {
  std::string run_id;
  std::string backend_id;
  HaystackConfig config;
  LanguageCode prompt_lang;
  PromptMode mode = PromptMode::Chat;
  bool strict_format = true;
  std::string prompt_hash;
  std::string response_text;
  int attempts = 0;
  int http_status = 0;
  std::string started_at;
  std::string finished_at;
  std::optional<std::string> error;
  nlohmann::json usage = nlohmann::json::object();

  /// "<size>/<config id>/<prompt lang>"; unique within one backend file.
  std::string key() const;
};

std::string record_key(const HaystackConfig& config, const LanguageCode& prompt_lang);

nlohmann::json to_json(const QueryRecord& r);
QueryRecord record_from_json(const nlohmann::json& j);

/// Append-only JSON Lines file of QueryRecords for one (run, backend).
/// Opening tolerates a torn final line (it is cut off); a malformed line
/// anywhere else throws StoreError. Appends are serialized and flushed one
/// whole line at a time.
class ResultStore {
 public:
  explicit ResultStore(std::filesystem::path path);

  const std::filesystem::path& path() const noexcept { return path_; }
  bool contains(const std::string& key) const;
  std::size_t size() const;
  /// Returns false (and writes nothing) when the key is already present.
  bool append(const QueryRecord& record);

 private:
  std::filesystem::path path_;
  mutable std::mutex mu_;
  std::set<std::string> keys_;
};

/// Every record of a store file, in file order. Same torn-line rule as
/// ResultStore, without modifying the file.
std::vector<QueryRecord> read_records(const std::filesystem::path& file);

/// Rewrites a store keeping the first record per key, sorted by key.
std::size_t compact_store(const std::filesystem::path& file);

std::filesystem::path results_file(const std::filesystem::path& results_root, const std::string& run_id,
                                   const std::string& backend_id);

struct RunOptions {
  std::string run_id;
  std::vector<LanguageCode> prompt_langs;
  bool strict_format = true;
  int parallel = 8;
  /// Stop after issuing this many new queries per backend (used to simulate
  /// an interrupted run).
  std::optional<std::size_t> max_new_queries;
};

struct RunStats {
  std::string backend_id;
  std::size_t planned = 0;
  std::size_t skipped = 0;  // already present
  std::size_t issued = 0;
  std::size_t failed = 0;  // transport errors recorded
};

using ProgressFn = std::function<void(const std::string& backend_id, std::size_t done, std::size_t total)>;

/// Queries every (haystack, prompt language) for every backend, skipping keys
/// already stored under `results_root/<run_id>/<backend>.jsonl`. AuthError
/// aborts the run after in-flight queries finish.
std::vector<RunStats> run_matrix(const std::filesystem::path& corpus_root, std::span<const HaystackMeta> haystacks,
                                 std::span<const std::unique_ptr<Backend>> backends, const NeedleSet& needles,
                                 const RunOptions& options, const std::filesystem::path& results_root,
                                 const ProgressFn& progress = nullptr);

}  // namespace haystack
