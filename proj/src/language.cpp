#include "haystack/language.hpp"

#include <algorithm>
#include <set>

#include "haystack/errors.hpp"

namespace haystack {

LanguageCode::LanguageCode(std::string_view code) : code_(code) {
  const bool ok = code.size() >= 2 && code.size() <= 8 &&
                  std::all_of(code.begin(), code.end(), [](char c) { return c >= 'a' && c <= 'z'; });
  if (!ok) throw ConfigError("invalid language code '" + std::string(code) + "'");
}

std::vector<LanguageCode> standard_languages() {
  return {LanguageCode("cmn"), LanguageCode("deu"), LanguageCode("eng"), LanguageCode("rus"),
          LanguageCode("tur")};
}

LanguageRegistry LanguageRegistry::standard() {
  LanguageRegistry reg;
  reg.add({LanguageCode("cmn"), "Chinese", ""});
  reg.add({LanguageCode("deu"), "German", " "});
  reg.add({LanguageCode("eng"), "English", " "});
  reg.add({LanguageCode("rus"), "Russian", " "});
  reg.add({LanguageCode("tur"), "Turkish", " "});
  return reg;
}

void LanguageRegistry::add(LanguageInfo info) {
  if (info.name.empty()) info.name = info.code.str();
  infos_.insert_or_assign(info.code, std::move(info));
}

const LanguageInfo& LanguageRegistry::info(const LanguageCode& code) const {
  auto it = infos_.find(code);
  if (it == infos_.end()) throw ConfigError("language '" + code.str() + "' is not registered");
  return it->second;
}

std::vector<LanguageCode> LanguageRegistry::codes() const {
  std::vector<LanguageCode> out;
  out.reserve(infos_.size());
  for (const auto& [code, _] : infos_) out.push_back(code);
  return out;
}

std::vector<LanguageCode> parse_language_list(std::string_view csv) {
  std::vector<LanguageCode> out;
  std::set<LanguageCode> seen;
  std::size_t pos = 0;
  while (pos <= csv.size()) {
    auto comma = csv.find(',', pos);
    if (comma == std::string_view::npos) comma = csv.size();
    auto token = csv.substr(pos, comma - pos);
    while (!token.empty() && token.front() == ' ') token.remove_prefix(1);
    while (!token.empty() && token.back() == ' ') token.remove_suffix(1);
    if (!token.empty()) {
      LanguageCode code(token);
      if (!seen.insert(code).second) throw ConfigError("duplicate language '" + code.str() + "'");
      out.push_back(code);
    }
    pos = comma + 1;
  }
  if (out.empty()) throw ConfigError("empty language list");
  return out;
}

void require_standard_languages(std::span<const LanguageCode> languages) {
  std::vector<LanguageCode> sorted(languages.begin(), languages.end());
  std::sort(sorted.begin(), sorted.end());
  if (sorted != standard_languages()) {
    throw ConfigError("standard mode accepts exactly cmn,deu,eng,rus,tur (got " +
                      join_codes(languages) + ")");
  }
}

std::string join_codes(std::span<const LanguageCode> languages, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < languages.size(); ++i) {
    if (i) out += sep;
    out += languages[i].str();
  }
  return out;
}

}  // namespace haystack
