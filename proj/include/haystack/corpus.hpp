#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "haystack/language.hpp"

namespace haystack {

/// Surname and entity value sets a configuration may draw from.
struct NameSets {
  std::vector<std::string> surnames;
  std::vector<std::string> entities;

  /// Delcroft/Quellman/Pikehart and the six invented entity names.
  static NameSets standard();

  bool has_surname(std::string_view s) const;
  bool has_entity(std::string_view e) const;
};

// ---------------------------------------------------------------------------
// Article pool

struct Article {
  std::string id;
  std::map<LanguageCode, std::vector<std::string>> paragraphs;
  int english_word_count = 0;
  std::string license = "unknown";

  const std::vector<std::string>& in(const LanguageCode& lang) const;
};

/// Parallel news articles, kept sorted by id. The sorted order is the
/// canonical slot order used by language assignment and permutation.
class ArticlePool {
 public:
  ArticlePool() = default;
  explicit ArticlePool(std::vector<Article> articles);

  /// Reads `root/<article-id>/<lang>.txt` for every language in `languages`
  /// (paragraphs separated by blank lines) plus an optional `meta.toml`
  /// carrying `license = "..."`. Every article needs an English version.
  static ArticlePool load(const std::filesystem::path& root, std::span<const LanguageCode> languages);

  std::span<const Article> articles() const noexcept { return articles_; }
  std::size_t size() const noexcept { return articles_.size(); }
  /// Canonical slot index of `id`, or nullopt.
  std::optional<std::size_t> index_of(std::string_view id) const;
  const Article& at(std::string_view id) const;

 private:
  std::vector<Article> articles_;
};

/// Whitespace-token count.
int count_words(std::string_view text);

// ---------------------------------------------------------------------------
// Needles

struct NeedleTemplate {
  int category = 0;
  std::string target_article;
  int target_paragraph = 0;  // 1-based
  std::map<LanguageCode, std::string> text;
};

struct SurnameInfo {
  std::string name;
  std::map<LanguageCode, std::string> display;
  std::vector<std::string> extra_variants;

  /// Form used when rendering into `lang`; the Latin name when none is given.
  const std::string& display_in(const LanguageCode& lang) const;
  /// Latin name, every display form and the extra variants, deduplicated.
  std::vector<std::string> match_variants() const;
};

struct NeedleCategory {
  int id = 0;
  std::string role;
  std::string first_name;
  std::map<LanguageCode, std::string> first_name_display;
  std::map<LanguageCode, std::string> question;
  std::map<LanguageCode, std::string> strict_instruction;
  std::array<NeedleTemplate, 2> needles;
};

/// Declarative needle definitions plus the name sets and language metadata
/// that come with them.
class NeedleSet {
 public:
  static NeedleSet load(const std::filesystem::path& file);
  static NeedleSet parse(std::string_view toml_text, std::string_view source_name = "needles");

  const NameSets& names() const noexcept { return names_; }
  const LanguageRegistry& languages() const noexcept { return languages_; }
  std::span<const NeedleCategory> categories() const noexcept { return categories_; }
  std::vector<int> category_ids() const;
  const NeedleCategory& category(int id) const;
  const SurnameInfo& surname(std::string_view name) const;

  /// Throws CorpusError unless every category has a needle text, question
  /// and strict instruction in each of `languages`.
  void require_languages(std::span<const LanguageCode> languages) const;

 private:
  NameSets names_;
  LanguageRegistry languages_;
  std::vector<NeedleCategory> categories_;
  std::map<std::string, SurnameInfo, std::less<>> surnames_;
};

// ---------------------------------------------------------------------------
// Configurations

enum class ConfigGroup {
  BilingualConflicting,
  MonolingualConflicting,
  BilingualNonConflicting,
  MonolingualNonConflicting,
};

std::string_view to_string(ConfigGroup g);

struct HaystackConfig {
  int category = 0;
  LanguageCode l1;
  LanguageCode l2;
  std::string x1;
  std::string x2;
  std::string y;
  int size_budget = 0;
  std::uint64_t seed = 0;

  bool conflicting() const noexcept { return x1 != x2; }
  bool monolingual() const noexcept { return l1 == l2; }
  ConfigGroup group() const noexcept;
  /// File-safe identifier, unique within one size, e.g. "c1-Delcroft-Quellman-Clevantra-eng-cmn".
  std::string id() const;
  /// Identifier of the language-swapped twin's pair, direction-free.
  std::string pair_id() const;

  bool operator==(const HaystackConfig&) const = default;
};

/// Canonical text hashed into a configuration seed: "category|x1|x2|y".
std::string seed_text(int category, std::string_view x1, std::string_view x2, std::string_view y);

/// FNV-1a 64 of seed_text(). Independent of languages and size, so every
/// language pair sharing a needle shares its draws.
std::uint64_t derive_seed(const NameSets& names, int category, std::string_view x1, std::string_view x2,
                          std::string_view y);

/// Entity for a (category, x1, x2) triple: first splitmix64 draw seeded with
/// FNV-1a of "category|x1|x2", modulo the entity count.
std::string choose_entity(const NameSets& names, int category, std::string_view x1, std::string_view x2);

/// All category x ordered surname pair x ordered language pair combinations.
/// Languages are visited in sorted order; the result order is stable.
std::vector<HaystackConfig> enumerate_configs(const NameSets& names, std::span<const int> categories,
                                              std::span<const LanguageCode> languages, int size_budget);

struct GroupCounts {
  std::size_t bilingual_conflicting = 0;
  std::size_t monolingual_conflicting = 0;
  std::size_t bilingual_non_conflicting = 0;
  std::size_t monolingual_non_conflicting = 0;

  std::size_t total() const noexcept {
    return bilingual_conflicting + monolingual_conflicting + bilingual_non_conflicting +
           monolingual_non_conflicting;
  }
  bool operator==(const GroupCounts&) const = default;
};

GroupCounts count_groups(std::span<const HaystackConfig> configs);

// ---------------------------------------------------------------------------
// Layout and assembly

/// Language of each slot. The needle slots get l1 and l2; every other slot
/// takes one coin from a splitmix64 stream seeded with config.seed, in slot
/// order. Coin 0 picks the alphabetically smaller of {l1, l2}, so the two
/// members of a contrastive pair agree on every non-needle slot.
std::vector<LanguageCode> assign_languages(const HaystackConfig& config, std::size_t n_slots,
                                           std::size_t needle1_slot, std::size_t needle2_slot);

struct SlotLayout {
  std::vector<LanguageCode> languages;  // indexed by canonical slot
  std::vector<std::size_t> order;       // permuted canonical slot indices
};

/// Language coins, then Fisher-Yates over the canonical order
/// (i from n-1 down to 1, j = draw mod (i+1)), all from the same stream.
SlotLayout plan_layout(const HaystackConfig& config, std::size_t n_slots, std::size_t needle1_slot,
                       std::size_t needle2_slot);

struct Slot {
  std::string article_id;
  LanguageCode language;
  int needle = 0;  // 0: none, 1: carries needle 1 (x1, l1), 2: carries needle 2 (x2, l2)
  int english_words = 0;

  bool operator==(const Slot&) const = default;
};

struct NeedlePosition {
  std::size_t slot = 0;
  int paragraph = 0;  // 1-based

  bool operator==(const NeedlePosition&) const = default;
};

struct Haystack {
  HaystackConfig config;
  std::vector<Slot> slots;
  std::array<NeedlePosition, 2> needle_positions{};
  std::array<std::string, 2> needle_texts;
  int total_english_words = 0;
  std::string rendered_text;
};

/// Replaces the single SURNAME and ENTITY placeholders.
std::string render_needle(std::string_view tmpl, std::string_view surname, std::string_view entity);

/// Builds one haystack: needles appended to their anchor paragraphs, articles
/// permuted, then a greedy prefix of the non-needle articles kept while the
/// English word count (articles plus English needle sentences) fits the
/// budget. Needle articles are always kept. Articles are separated by a blank
/// line, paragraphs by a newline.
Haystack assemble_haystack(const HaystackConfig& config, const ArticlePool& pool, const NeedleSet& needles);

struct ContrastivePair {
  HaystackConfig a;  // l1 < l2
  HaystackConfig b;  // languages swapped
  std::string id() const { return a.pair_id(); }
};

/// Matches every bilingual conflicting config with its swapped twin.
/// Throws std::logic_error when a twin is missing.
std::vector<ContrastivePair> make_contrastive_pairs(std::span<const HaystackConfig> configs);

}  // namespace haystack
