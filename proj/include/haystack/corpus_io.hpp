#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "haystack/corpus.hpp"

namespace haystack {

/// One manifest.jsonl row: everything downstream stages need to know about a
/// haystack without re-reading the pool.
struct HaystackMeta {
  HaystackConfig config;
  std::string first_name;
  std::vector<Slot> slots;
  std::array<NeedlePosition, 2> needle_positions{};
  int total_english_words = 0;
  std::string text_file;  // relative to the corpus root

  std::string id() const { return config.id(); }
};

HaystackMeta meta_of(const Haystack& h, const NeedleSet& needles);

nlohmann::json to_json(const HaystackConfig& c);
HaystackConfig config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const HaystackMeta& m);
HaystackMeta meta_from_json(const nlohmann::json& j);

struct CorpusSummary {
  int size_budget = 0;
  GroupCounts counts;
  std::size_t pairs = 0;
};

/// Writes `<out>/<size>/<config-id>.txt` and `<out>/<size>/manifest.jsonl`
/// for every size. Each file is written atomically.
std::vector<CorpusSummary> generate_corpus(const ArticlePool& pool, const NeedleSet& needles,
                                           std::span<const LanguageCode> languages, std::span<const int> sizes,
                                           const std::filesystem::path& out);

/// Reads every `<root>/<size>/manifest.jsonl`, sizes ascending.
std::vector<HaystackMeta> load_corpus_index(const std::filesystem::path& root);

std::string read_haystack_text(const std::filesystem::path& root, const HaystackMeta& meta);

}  // namespace haystack
