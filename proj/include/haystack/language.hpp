#pragma once

#include <compare>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace haystack {

/// ISO-639-3 style language identifier ("cmn", "eng", ...).
class LanguageCode {
 public:
  LanguageCode() = default;
  /// Throws ConfigError unless `code` is 2-8 lowercase ASCII letters.
  explicit LanguageCode(std::string_view code);

  const std::string& str() const noexcept { return code_; }
  bool empty() const noexcept { return code_.empty(); }

  auto operator<=>(const LanguageCode&) const = default;

 private:
  std::string code_;
};

/// The five languages of the original experiment, in code order.
std::vector<LanguageCode> standard_languages();

struct LanguageInfo {
  LanguageCode code;
  std::string name;
  /// Inserted between a paragraph and an appended sentence, and between a
  /// question and its format instruction. Empty for scripts without spaces.
  std::string sentence_separator = " ";
};

class LanguageRegistry {
 public:
  /// Registry with the five standard languages and their English names.
  static LanguageRegistry standard();

  void add(LanguageInfo info);
  bool contains(const LanguageCode& code) const { return infos_.contains(code); }
  /// Throws ConfigError for unregistered codes.
  const LanguageInfo& info(const LanguageCode& code) const;
  const std::string& name(const LanguageCode& code) const { return info(code).name; }
  std::vector<LanguageCode> codes() const;

 private:
  std::map<LanguageCode, LanguageInfo> infos_;
};

/// Parses "cmn,deu,eng" into codes, rejecting duplicates and empty lists.
std::vector<LanguageCode> parse_language_list(std::string_view csv);

/// Throws ConfigError unless `languages` is exactly the five standard languages.
void require_standard_languages(std::span<const LanguageCode> languages);

std::string join_codes(std::span<const LanguageCode> languages, std::string_view sep = ",");

}  // namespace haystack
