#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "haystack/corpus.hpp"
#include "haystack/runner.hpp"

namespace haystack {

enum class OutcomeTag { Both, None, One };
enum class Which { X1, X2 };

struct Outcome {
  OutcomeTag tag = OutcomeTag::None;
  std::optional<Which> which;  // set iff tag == One

  static Outcome both() { return {OutcomeTag::Both, std::nullopt}; }
  static Outcome none() { return {OutcomeTag::None, std::nullopt}; }
  static Outcome one(Which w) { return {OutcomeTag::One, w}; }
  bool operator==(const Outcome&) const = default;
};

std::string to_string(const Outcome& o);  // "Both", "None", "One(x1)", "One(x2)"
Outcome outcome_from_string(std::string_view s);

/// Lowercases ASCII, Latin-1, Latin Extended-A and Cyrillic letters; dotted
/// and dotless i both fold to "i". Other code points pass through.
std::string fold_case(std::string_view utf8);

/// True when `variant` occurs in `text`, case-insensitively. Variants written
/// in ASCII must start at a word boundary and end at one, optionally after a
/// single trailing "s"; other scripts match as plain substrings so inflected
/// forms (e.g. Russian case endings) still count.
bool mentions(std::string_view text, std::string_view variant);

Outcome classify_output(std::string_view text, std::span<const std::string> x1_variants,
                        std::span<const std::string> x2_variants);

enum class PairTag { L1Win, L2Win, SameSurname, Discard };
std::string_view to_string(PairTag t);
PairTag pair_tag_from_string(std::string_view s);

/// `a` is the member whose x1 is presented in l1, `b` its language-swapped twin.
PairTag classify_pair(const Outcome& a, const Outcome& b);

struct ClassifiedRecord {
  std::string backend_id;
  HaystackConfig config;
  LanguageCode prompt_lang;
  Outcome outcome;
  bool transport_error = false;
};

/// Transport-error records classify as None.
ClassifiedRecord classify_record(const QueryRecord& r, const NeedleSet& needles);

struct PairResult {
  std::string pair_id;
  int size_budget = 0;
  LanguageCode prompt_lang;
  std::string backend_id;
  LanguageCode l1;  // language of x1 in member a (the alphabetically smaller one)
  LanguageCode l2;
  PairTag tag = PairTag::Discard;
};

/// Pairs bilingual conflicting records with their twins, per backend, size and
/// prompt language. Member a is the one with l1 < l2. Records without a twin
/// are skipped and counted in `unmatched`.
std::vector<PairResult> make_pair_results(std::span<const ClassifiedRecord> records, std::size_t* unmatched = nullptr);

nlohmann::json to_json(const ClassifiedRecord& r);
ClassifiedRecord classified_from_json(const nlohmann::json& j);
nlohmann::json to_json(const PairResult& p);
PairResult pair_from_json(const nlohmann::json& j);

struct OutcomeCounts {
  int both = 0;
  int none = 0;
  int one = 0;
  int total() const { return both + none + one; }
  bool operator==(const OutcomeCounts&) const = default;
};

struct OutcomeRow {
  std::string backend_id;
  int size_budget = 0;
  OutcomeCounts monolingual;
  OutcomeCounts multilingual;
};

/// Conflicting records only, ordered by size then backend id.
std::vector<OutcomeRow> outcome_summary(std::span<const ClassifiedRecord> records);

std::filesystem::path classified_file(const std::filesystem::path& root, const std::string& run_id);
std::filesystem::path pairs_file(const std::filesystem::path& root, const std::string& run_id);

void write_classified(const std::filesystem::path& file, std::span<const ClassifiedRecord> records);
std::vector<ClassifiedRecord> read_classified(const std::filesystem::path& file);
void write_pairs(const std::filesystem::path& file, std::span<const PairResult> pairs);
std::vector<PairResult> read_pairs(const std::filesystem::path& file);

}  // namespace haystack
