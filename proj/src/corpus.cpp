#include "haystack/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

#include "haystack/errors.hpp"
#include "haystack/hashing.hpp"

namespace haystack {

namespace fs = std::filesystem;

NameSets NameSets::standard() {
  return {{"Delcroft", "Quellman", "Pikehart"},
          {"Cinderfax", "Noiseweld", "Motelvine", "Brovencia", "Clevantra", "Teraluxis"}};
}

bool NameSets::has_surname(std::string_view s) const {
  return std::find(surnames.begin(), surnames.end(), s) != surnames.end();
}

bool NameSets::has_entity(std::string_view e) const {
  return std::find(entities.begin(), entities.end(), e) != entities.end();
}

int count_words(std::string_view text) {
  int n = 0;
  bool in_word = false;
  for (unsigned char c : text) {
    const bool space = c == ' ' || c == '\n' || c == '\t' || c == '\r' || c == '\f' || c == '\v';
    if (!space && !in_word) ++n;
    in_word = !space;
  }
  return n;
}

// ---------------------------------------------------------------------------
// Pool

const std::vector<std::string>& Article::in(const LanguageCode& lang) const {
  auto it = paragraphs.find(lang);
  if (it == paragraphs.end()) {
    throw CorpusError("article '" + id + "' has no translation for language '" + lang.str() + "'");
  }
  return it->second;
}

ArticlePool::ArticlePool(std::vector<Article> articles) : articles_(std::move(articles)) {
  std::sort(articles_.begin(), articles_.end(), [](const Article& a, const Article& b) { return a.id < b.id; });
  for (std::size_t i = 1; i < articles_.size(); ++i) {
    if (articles_[i].id == articles_[i - 1].id) throw CorpusError("duplicate article id '" + articles_[i].id + "'");
  }
}

namespace {

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw CorpusError("cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string trim(std::string_view s) {
  const auto ws = " \t\r\n";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(ws);
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_paragraphs(std::string_view text) {
  std::vector<std::string> out;
  std::string current;
  std::size_t pos = 0;
  auto flush = [&] {
    auto t = trim(current);
    if (!t.empty()) out.push_back(std::move(t));
    current.clear();
  };
  while (pos < text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    auto line = text.substr(pos, nl - pos);
    if (trim(line).empty()) {
      flush();
    } else {
      if (!current.empty()) current += ' ';
      current += trim(line);
    }
    pos = nl + 1;
  }
  flush();
  return out;
}

std::string read_license(const fs::path& meta) {
  if (!fs::exists(meta)) return "unknown";
  std::istringstream in(read_text(meta));
  std::string line;
  while (std::getline(in, line)) {
    auto eq = line.find('=');
    if (eq == std::string::npos || trim(line.substr(0, eq)) != "license") continue;
    auto value = trim(line.substr(eq + 1));
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
    return value;
  }
  return "unknown";
}

}  // namespace

ArticlePool ArticlePool::load(const fs::path& root, std::span<const LanguageCode> languages) {
  if (!fs::is_directory(root)) throw CorpusError("article pool directory not found: " + root.string());
  const LanguageCode eng("eng");
  std::vector<fs::path> dirs;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (entry.is_directory()) dirs.push_back(entry.path());
  }
  std::sort(dirs.begin(), dirs.end());

  std::vector<Article> articles;
  for (const auto& dir : dirs) {
    Article art;
    art.id = dir.filename().string();
    const auto eng_file = dir / "eng.txt";
    if (!fs::exists(eng_file)) throw CorpusError("article '" + art.id + "' has no English original (eng.txt)");
    const auto eng_text = read_text(eng_file);
    art.paragraphs[eng] = split_paragraphs(eng_text);
    art.english_word_count = count_words(eng_text);
    if (art.english_word_count <= 0) throw CorpusError("article '" + art.id + "' has an empty English original");
    for (const auto& lang : languages) {
      if (lang == eng) continue;
      const auto file = dir / (lang.str() + ".txt");
      if (!fs::exists(file)) {
        throw CorpusError("article '" + art.id + "' has no translation for language '" + lang.str() + "'");
      }
      auto paras = split_paragraphs(read_text(file));
      if (paras.size() != art.paragraphs[eng].size()) {
        throw CorpusError("article '" + art.id + "' translation '" + lang.str() + "' has " +
                          std::to_string(paras.size()) + " paragraphs, English has " +
                          std::to_string(art.paragraphs[eng].size()));
      }
      art.paragraphs[lang] = std::move(paras);
    }
    art.license = read_license(dir / "meta.toml");
    articles.push_back(std::move(art));
  }
  if (articles.empty()) throw CorpusError("article pool " + root.string() + " contains no articles");
  return ArticlePool(std::move(articles));
}

std::optional<std::size_t> ArticlePool::index_of(std::string_view id) const {
  auto it = std::lower_bound(articles_.begin(), articles_.end(), id,
                             [](const Article& a, std::string_view key) { return a.id < key; });
  if (it == articles_.end() || it->id != id) return std::nullopt;
  return static_cast<std::size_t>(it - articles_.begin());
}

const Article& ArticlePool::at(std::string_view id) const {
  auto idx = index_of(id);
  if (!idx) throw CorpusError("article '" + std::string(id) + "' is not in the pool");
  return articles_[*idx];
}

// ---------------------------------------------------------------------------
// Needles (file parsing lives in needles.cpp)

const std::string& SurnameInfo::display_in(const LanguageCode& lang) const {
  auto it = display.find(lang);
  return it == display.end() ? name : it->second;
}

std::vector<std::string> SurnameInfo::match_variants() const {
  std::vector<std::string> out{name};
  auto add = [&](const std::string& v) {
    if (!v.empty() && std::find(out.begin(), out.end(), v) == out.end()) out.push_back(v);
  };
  for (const auto& [_, v] : display) add(v);
  for (const auto& v : extra_variants) add(v);
  return out;
}

std::vector<int> NeedleSet::category_ids() const {
  std::vector<int> ids;
  for (const auto& c : categories_) ids.push_back(c.id);
  return ids;
}

const NeedleCategory& NeedleSet::category(int id) const {
  for (const auto& c : categories_) {
    if (c.id == id) return c;
  }
  throw ConfigError("unknown needle category " + std::to_string(id));
}

const SurnameInfo& NeedleSet::surname(std::string_view name) const {
  auto it = surnames_.find(name);
  if (it == surnames_.end()) throw ConfigError("unknown surname '" + std::string(name) + "'");
  return it->second;
}

void NeedleSet::require_languages(std::span<const LanguageCode> languages) const {
  for (const auto& cat : categories_) {
    for (const auto& lang : languages) {
      const auto where = "category " + std::to_string(cat.id) + " language '" + lang.str() + "'";
      if (!cat.question.contains(lang)) throw CorpusError("missing question for " + where);
      if (!cat.strict_instruction.contains(lang)) throw CorpusError("missing strict instruction for " + where);
      for (const auto& n : cat.needles) {
        if (!n.text.contains(lang)) {
          throw CorpusError("missing needle text for article '" + n.target_article + "' in " + where);
        }
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Configurations

std::string_view to_string(ConfigGroup g) {
  switch (g) {
    case ConfigGroup::BilingualConflicting: return "bilingual-conflicting";
    case ConfigGroup::MonolingualConflicting: return "monolingual-conflicting";
    case ConfigGroup::BilingualNonConflicting: return "bilingual-non-conflicting";
    case ConfigGroup::MonolingualNonConflicting: return "monolingual-non-conflicting";
  }
  return "?";
}

ConfigGroup HaystackConfig::group() const noexcept {
  if (conflicting()) return monolingual() ? ConfigGroup::MonolingualConflicting : ConfigGroup::BilingualConflicting;
  return monolingual() ? ConfigGroup::MonolingualNonConflicting : ConfigGroup::BilingualNonConflicting;
}

std::string HaystackConfig::id() const {
  return "c" + std::to_string(category) + "-" + x1 + "-" + x2 + "-" + y + "-" + l1.str() + "-" + l2.str();
}

std::string HaystackConfig::pair_id() const {
  const auto& lo = std::min(l1, l2);
  const auto& hi = std::max(l1, l2);
  return "c" + std::to_string(category) + "-" + x1 + "-" + x2 + "-" + y + "-" + lo.str() + "-" + hi.str();
}

std::string seed_text(int category, std::string_view x1, std::string_view x2, std::string_view y) {
  std::string s = std::to_string(category);
  s.append("|").append(x1).append("|").append(x2).append("|").append(y);
  return s;
}

std::uint64_t derive_seed(const NameSets& names, int category, std::string_view x1, std::string_view x2,
                          std::string_view y) {
  if (!names.has_surname(x1)) throw ConfigError("unknown surname '" + std::string(x1) + "'");
  if (!names.has_surname(x2)) throw ConfigError("unknown surname '" + std::string(x2) + "'");
  if (!names.has_entity(y)) throw ConfigError("unknown entity '" + std::string(y) + "'");
  return fnv1a64(seed_text(category, x1, x2, y));
}

std::string choose_entity(const NameSets& names, int category, std::string_view x1, std::string_view x2) {
  if (names.entities.empty()) throw ConfigError("entity list is empty");
  std::string key = std::to_string(category);
  key.append("|").append(x1).append("|").append(x2);
  SplitMix64 rng(fnv1a64(key));
  return names.entities[rng.below(names.entities.size())];
}

std::vector<HaystackConfig> enumerate_configs(const NameSets& names, std::span<const int> categories,
                                              std::span<const LanguageCode> languages, int size_budget) {
  if (languages.empty()) throw ConfigError("no languages registered for enumeration");
  if (categories.empty()) throw ConfigError("no needle categories registered for enumeration");
  if (size_budget <= 0) throw ConfigError("size budget must be positive");
  std::vector<LanguageCode> langs(languages.begin(), languages.end());
  std::sort(langs.begin(), langs.end());
  if (std::adjacent_find(langs.begin(), langs.end()) != langs.end()) throw ConfigError("duplicate language");

  std::vector<HaystackConfig> out;
  out.reserve(categories.size() * names.surnames.size() * names.surnames.size() * langs.size() * langs.size());
  for (int cat : categories) {
    for (const auto& x1 : names.surnames) {
      for (const auto& x2 : names.surnames) {
        const auto y = choose_entity(names, cat, x1, x2);
        const auto seed = derive_seed(names, cat, x1, x2, y);
        for (const auto& l1 : langs) {
          for (const auto& l2 : langs) {
            out.push_back(HaystackConfig{cat, l1, l2, x1, x2, y, size_budget, seed});
          }
        }
      }
    }
  }
  return out;
}

GroupCounts count_groups(std::span<const HaystackConfig> configs) {
  GroupCounts c;
  for (const auto& cfg : configs) {
    switch (cfg.group()) {
      case ConfigGroup::BilingualConflicting: ++c.bilingual_conflicting; break;
      case ConfigGroup::MonolingualConflicting: ++c.monolingual_conflicting; break;
      case ConfigGroup::BilingualNonConflicting: ++c.bilingual_non_conflicting; break;
      case ConfigGroup::MonolingualNonConflicting: ++c.monolingual_non_conflicting; break;
    }
  }
  return c;
}

// ---------------------------------------------------------------------------
// Layout

namespace {

std::vector<LanguageCode> draw_languages(SplitMix64& rng, const HaystackConfig& config, std::size_t n_slots,
                                         std::size_t needle1_slot, std::size_t needle2_slot) {
  if (n_slots < 2) throw ArgumentError("a haystack needs at least two slots");
  if (needle1_slot >= n_slots || needle2_slot >= n_slots || needle1_slot == needle2_slot) {
    throw ArgumentError("needle slots must be distinct and within range");
  }
  const auto& low = std::min(config.l1, config.l2);
  const auto& high = std::max(config.l1, config.l2);
  std::vector<LanguageCode> langs(n_slots);
  for (std::size_t i = 0; i < n_slots; ++i) {
    if (i == needle1_slot) {
      langs[i] = config.l1;
    } else if (i == needle2_slot) {
      langs[i] = config.l2;
    } else {
      langs[i] = rng.coin() ? high : low;
    }
  }
  return langs;
}

}  // namespace

std::vector<LanguageCode> assign_languages(const HaystackConfig& config, std::size_t n_slots,
                                           std::size_t needle1_slot, std::size_t needle2_slot) {
  SplitMix64 rng(config.seed);
  return draw_languages(rng, config, n_slots, needle1_slot, needle2_slot);
}

SlotLayout plan_layout(const HaystackConfig& config, std::size_t n_slots, std::size_t needle1_slot,
                       std::size_t needle2_slot) {
  SplitMix64 rng(config.seed);
  SlotLayout layout;
  layout.languages = draw_languages(rng, config, n_slots, needle1_slot, needle2_slot);
  layout.order.resize(n_slots);
  for (std::size_t i = 0; i < n_slots; ++i) layout.order[i] = i;
  for (std::size_t i = n_slots - 1; i > 0; --i) {
    const auto j = static_cast<std::size_t>(rng.below(i + 1));
    std::swap(layout.order[i], layout.order[j]);
  }
  return layout;
}

// ---------------------------------------------------------------------------
// Assembly

std::string render_needle(std::string_view tmpl, std::string_view surname, std::string_view entity) {
  auto replace_once = [](std::string text, std::string_view key, std::string_view value) {
    const auto pos = text.find(key);
    if (pos == std::string::npos || text.find(key, pos + key.size()) != std::string::npos) {
      throw CorpusError("needle template must contain " + std::string(key) + " exactly once: " + text);
    }
    text.replace(pos, key.size(), value);
    return text;
  };
  // ENTITY first: surnames never contain the token, but a rendered entity could.
  return replace_once(replace_once(std::string(tmpl), "ENTITY", entity), "SURNAME", surname);
}

Haystack assemble_haystack(const HaystackConfig& config, const ArticlePool& pool, const NeedleSet& needles) {
  const auto& cat = needles.category(config.category);
  const LanguageCode eng("eng");
  std::array<std::size_t, 2> needle_slot{};
  for (int k = 0; k < 2; ++k) {
    const auto& tmpl = cat.needles[k];
    auto idx = pool.index_of(tmpl.target_article);
    if (!idx) throw CorpusError("needle article '" + tmpl.target_article + "' is not in the pool");
    needle_slot[k] = *idx;
  }

  const auto layout = plan_layout(config, pool.size(), needle_slot[0], needle_slot[1]);

  Haystack h;
  h.config = config;
  std::array<int, 2> needle_words{};
  for (int k = 0; k < 2; ++k) {
    const auto& tmpl = cat.needles[k];
    const auto& lang = k == 0 ? config.l1 : config.l2;
    const auto& surname = k == 0 ? config.x1 : config.x2;
    auto text_it = tmpl.text.find(lang);
    if (text_it == tmpl.text.end()) {
      throw CorpusError("needle for article '" + tmpl.target_article + "' has no '" + lang.str() + "' text");
    }
    h.needle_texts[k] = render_needle(text_it->second, needles.surname(surname).display_in(lang), config.y);
    needle_words[k] = count_words(render_needle(tmpl.text.at(eng), surname, config.y));
    const auto& article = pool.articles()[needle_slot[k]];
    const auto paragraphs = article.in(lang).size();
    if (tmpl.target_paragraph < 1 || static_cast<std::size_t>(tmpl.target_paragraph) > paragraphs) {
      throw CorpusError("article '" + article.id + "' has no paragraph " + std::to_string(tmpl.target_paragraph));
    }
  }

  int total = 0;
  for (int k = 0; k < 2; ++k) total += pool.articles()[needle_slot[k]].english_word_count + needle_words[k];
  if (total > config.size_budget) {
    throw BudgetError("needle articles alone need " + std::to_string(total) + " English words, budget is " +
                      std::to_string(config.size_budget));
  }

  // Greedy prefix of the permuted order: stop at the first non-needle article
  // that does not fit; needle articles stay wherever they fall.
  std::vector<bool> keep(pool.size(), false);
  keep[needle_slot[0]] = keep[needle_slot[1]] = true;
  for (auto idx : layout.order) {
    if (idx == needle_slot[0] || idx == needle_slot[1]) continue;
    const int w = pool.articles()[idx].english_word_count;
    if (total + w > config.size_budget) break;
    total += w;
    keep[idx] = true;
  }
  h.total_english_words = total;

  std::string text;
  for (auto idx : layout.order) {
    if (!keep[idx]) continue;
    const auto& article = pool.articles()[idx];
    const auto& lang = layout.languages[idx];
    Slot slot{article.id, lang, 0, article.english_word_count};
    const auto& paragraphs = article.in(lang);
    const auto& sep = needles.languages().contains(lang) ? needles.languages().info(lang).sentence_separator
                                                         : std::string(" ");
    if (!text.empty()) text += "\n\n";
    for (std::size_t p = 0; p < paragraphs.size(); ++p) {
      if (p) text += '\n';
      text += paragraphs[p];
      for (int k = 0; k < 2; ++k) {
        if (idx == needle_slot[k] && static_cast<int>(p) + 1 == cat.needles[k].target_paragraph) {
          text += sep;
          text += h.needle_texts[k];
          slot.needle = k + 1;
          slot.english_words += needle_words[k];
          h.needle_positions[k] = {h.slots.size(), cat.needles[k].target_paragraph};
        }
      }
    }
    h.slots.push_back(std::move(slot));
  }
  text += '\n';
  h.rendered_text = std::move(text);
  return h;
}

std::vector<ContrastivePair> make_contrastive_pairs(std::span<const HaystackConfig> configs) {
  std::unordered_map<std::string, const HaystackConfig*> by_id;
  for (const auto& c : configs) by_id.emplace(c.id(), &c);
  std::vector<ContrastivePair> pairs;
  for (const auto& c : configs) {
    if (c.group() != ConfigGroup::BilingualConflicting || !(c.l1 < c.l2)) continue;
    HaystackConfig twin = c;
    std::swap(twin.l1, twin.l2);
    auto it = by_id.find(twin.id());
    if (it == by_id.end()) throw std::logic_error("contrastive twin missing for " + c.id());
    if (it->second->seed != c.seed || it->second->size_budget != c.size_budget) {
      throw std::logic_error("contrastive twin of " + c.id() + " differs beyond its languages");
    }
    pairs.push_back({c, *it->second});
  }
  return pairs;
}

}  // namespace haystack
