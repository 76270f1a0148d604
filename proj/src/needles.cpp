#include <fstream>
#include <sstream>

#include <toml.hpp>

#include "haystack/corpus.hpp"
#include "haystack/errors.hpp"

namespace haystack {

namespace {

[[noreturn]] void fail(std::string_view key, std::string_view what) {
  throw ConfigError(std::string(key) + ": " + std::string(what));
}

std::string require_string(const toml::node_view<const toml::node>& node, std::string_view key) {
  auto v = node.value<std::string>();
  if (!v) fail(key, "expected a string");
  return *v;
}

std::vector<std::string> string_array(const toml::node_view<const toml::node>& node, std::string_view key) {
  std::vector<std::string> out;
  if (!node) return out;
  const auto* arr = node.as_array();
  if (!arr) fail(key, "expected an array of strings");
  for (const auto& el : *arr) {
    auto s = el.value<std::string>();
    if (!s) fail(key, "expected an array of strings");
    out.push_back(*s);
  }
  return out;
}

std::map<LanguageCode, std::string> per_language(const toml::node_view<const toml::node>& node,
                                                 std::string_view key) {
  std::map<LanguageCode, std::string> out;
  if (!node) return out;
  const auto* tbl = node.as_table();
  if (!tbl) fail(key, "expected a table keyed by language code");
  for (const auto& [k, v] : *tbl) {
    auto s = v.value<std::string>();
    const auto path = std::string(key) + "." + std::string(k.str());
    if (!s) fail(path, "expected a string");
    if (k.str() == "default") continue;
    try {
      out.emplace(LanguageCode(k.str()), *s);
    } catch (const ConfigError& e) {
      fail(path, e.what());
    }
  }
  return out;
}

}  // namespace

NeedleSet NeedleSet::load(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw ConfigError("cannot read needle file " + file.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), file.string());
}

NeedleSet NeedleSet::parse(std::string_view toml_text, std::string_view source_name) {
  toml::table doc;
  try {
    doc = toml::parse(toml_text, source_name);
  } catch (const toml::parse_error& e) {
    std::ostringstream msg;
    msg << source_name << ":" << e.source().begin.line << ": " << e.description();
    throw ConfigError(msg.str());
  }
  const toml::node_view<const toml::node> root{doc};

  NeedleSet set;
  set.names_.surnames = string_array(root["surnames"], "surnames");
  set.names_.entities = string_array(root["entities"], "entities");
  if (set.names_.surnames.empty()) set.names_.surnames = NameSets::standard().surnames;
  if (set.names_.entities.empty()) set.names_.entities = NameSets::standard().entities;

  set.languages_ = LanguageRegistry::standard();
  if (const auto* langs = root["language"].as_table()) {
    for (const auto& [k, v] : *langs) {
      const auto path = "language." + std::string(k.str());
      const toml::node_view<const toml::node> node{v};
      LanguageInfo info;
      try {
        info.code = LanguageCode(k.str());
      } catch (const ConfigError& e) {
        fail(path, e.what());
      }
      info.name = node["name"].value_or(std::string(k.str()));
      info.sentence_separator = node["sentence_separator"].value_or(std::string(" "));
      set.languages_.add(std::move(info));
    }
  }

  for (const auto& s : set.names_.surnames) {
    SurnameInfo info{s, {}, {}};
    const auto node = root["surname"][s];
    info.display = per_language(node["display"], "surname." + s + ".display");
    info.extra_variants = string_array(node["variants"], "surname." + s + ".variants");
    set.surnames_.emplace(s, std::move(info));
  }

  const auto* cats = root["category"].as_array();
  if (!cats || cats->empty()) fail("category", "at least one [[category]] is required");
  for (std::size_t i = 0; i < cats->size(); ++i) {
    const auto path = "category[" + std::to_string(i) + "]";
    const toml::node_view<const toml::node> node{cats->get(i)};
    NeedleCategory cat;
    auto id = node["id"].value<int64_t>();
    if (!id || *id < 1) fail(path + ".id", "expected a positive integer");
    cat.id = static_cast<int>(*id);
    cat.role = require_string(node["role"], path + ".role");
    if (node["first_name"].is_table()) {
      cat.first_name = node["first_name"]["default"].value_or(std::string("John"));
      cat.first_name_display = per_language(node["first_name"], path + ".first_name");
    } else {
      cat.first_name = node["first_name"].value_or(std::string("John"));
    }
    cat.question = per_language(node["question"], path + ".question");
    cat.strict_instruction = per_language(node["strict"], path + ".strict");
    for (const auto& [lang, q] : cat.question) {
      if (q.find("ENTITY") == std::string::npos) fail(path + ".question." + lang.str(), "missing ENTITY placeholder");
    }

    const auto* needles = node["needle"].as_array();
    if (!needles || needles->size() != 2) fail(path + ".needle", "each category needs exactly two needles");
    for (std::size_t k = 0; k < 2; ++k) {
      const auto npath = path + ".needle[" + std::to_string(k) + "]";
      const toml::node_view<const toml::node> n{needles->get(k)};
      NeedleTemplate t;
      t.category = cat.id;
      t.target_article = require_string(n["article"], npath + ".article");
      auto para = n["paragraph"].value<int64_t>();
      if (!para || *para < 1) fail(npath + ".paragraph", "expected a 1-based paragraph index");
      t.target_paragraph = static_cast<int>(*para);
      t.text = per_language(n["text"], npath + ".text");
      if (t.text.empty()) fail(npath + ".text", "no needle texts");
      for (const auto& [lang, text] : t.text) {
        for (std::string_view key : {"SURNAME", "ENTITY"}) {
          const auto first = text.find(key);
          if (first == std::string::npos || text.find(key, first + 1) != std::string::npos) {
            fail(npath + ".text." + lang.str(), std::string(key) + " must appear exactly once");
          }
        }
      }
      cat.needles[k] = std::move(t);
    }
    for (const auto& existing : set.categories_) {
      if (existing.id == cat.id) fail(path + ".id", "duplicate category id");
    }
    set.categories_.push_back(std::move(cat));
  }
  return set;
}

}  // namespace haystack
