#include "haystack/corpus_io.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "haystack/errors.hpp"
#include "haystack/fsutil.hpp"

namespace haystack {

namespace fs = std::filesystem;
using nlohmann::json;

HaystackMeta meta_of(const Haystack& h, const NeedleSet& needles) {
  HaystackMeta m;
  m.config = h.config;
  m.first_name = needles.category(h.config.category).first_name;
  m.slots = h.slots;
  m.needle_positions = h.needle_positions;
  m.total_english_words = h.total_english_words;
  m.text_file = std::to_string(h.config.size_budget) + "/" + h.config.id() + ".txt";
  return m;
}

json to_json(const HaystackConfig& c) {
  return json{{"category", c.category}, {"l1", c.l1.str()}, {"l2", c.l2.str()}, {"x1", c.x1},
              {"x2", c.x2},             {"y", c.y},         {"size", c.size_budget}, {"seed", c.seed}};
}

HaystackConfig config_from_json(const json& j) {
  try {
    HaystackConfig c;
    c.category = j.at("category").get<int>();
    c.l1 = LanguageCode(j.at("l1").get<std::string>());
    c.l2 = LanguageCode(j.at("l2").get<std::string>());
    c.x1 = j.at("x1").get<std::string>();
    c.x2 = j.at("x2").get<std::string>();
    c.y = j.at("y").get<std::string>();
    c.size_budget = j.at("size").get<int>();
    c.seed = j.at("seed").get<std::uint64_t>();
    return c;
  } catch (const json::exception& e) {
    throw StoreError(std::string("malformed haystack config: ") + e.what());
  }
}

json to_json(const HaystackMeta& m) {
  json slots = json::array();
  for (const auto& s : m.slots) {
    slots.push_back({{"article", s.article_id}, {"lang", s.language.str()}, {"needle", s.needle},
                     {"words", s.english_words}});
  }
  json j = to_json(m.config);
  j["id"] = m.id();
  j["group"] = std::string(to_string(m.config.group()));
  j["first_name"] = m.first_name;
  j["slots"] = std::move(slots);
  j["needle_positions"] = json::array({json::array({m.needle_positions[0].slot, m.needle_positions[0].paragraph}),
                                       json::array({m.needle_positions[1].slot, m.needle_positions[1].paragraph})});
  j["total_english_words"] = m.total_english_words;
  j["file"] = m.text_file;
  return j;
}

HaystackMeta meta_from_json(const json& j) {
  HaystackMeta m;
  m.config = config_from_json(j);
  try {
    m.first_name = j.value("first_name", std::string("John"));
    for (const auto& s : j.at("slots")) {
      m.slots.push_back({s.at("article").get<std::string>(), LanguageCode(s.at("lang").get<std::string>()),
                         s.at("needle").get<int>(), s.value("words", 0)});
    }
    const auto& np = j.at("needle_positions");
    for (int k = 0; k < 2; ++k) m.needle_positions[k] = {np.at(k).at(0).get<std::size_t>(), np.at(k).at(1).get<int>()};
    m.total_english_words = j.at("total_english_words").get<int>();
    m.text_file = j.at("file").get<std::string>();
  } catch (const json::exception& e) {
    throw StoreError(std::string("malformed manifest row: ") + e.what());
  }
  return m;
}

std::vector<CorpusSummary> generate_corpus(const ArticlePool& pool, const NeedleSet& needles,
                                           std::span<const LanguageCode> languages, std::span<const int> sizes,
                                           const fs::path& out) {
  needles.require_languages(languages);
  const auto categories = needles.category_ids();
  std::vector<CorpusSummary> summaries;
  for (int size : sizes) {
    const auto configs = enumerate_configs(needles.names(), categories, languages, size);
    const auto dir = out / std::to_string(size);
    fs::create_directories(dir);
    std::string manifest;
    for (const auto& cfg : configs) {
      const auto h = assemble_haystack(cfg, pool, needles);
      write_file_atomic(dir / (cfg.id() + ".txt"), h.rendered_text);
      manifest += to_json(meta_of(h, needles)).dump();
      manifest += '\n';
    }
    write_file_atomic(dir / "manifest.jsonl", manifest);
    summaries.push_back({size, count_groups(configs), make_contrastive_pairs(configs).size()});
  }
  return summaries;
}

std::vector<HaystackMeta> load_corpus_index(const fs::path& root) {
  if (!fs::is_directory(root)) throw StoreError("corpus directory not found: " + root.string() + " (run `generate`)");
  std::vector<std::pair<int, fs::path>> manifests;
  for (const auto& e : fs::directory_iterator(root)) {
    if (!e.is_directory() || !fs::exists(e.path() / "manifest.jsonl")) continue;
    const auto name = e.path().filename().string();
    if (name.empty() || !std::all_of(name.begin(), name.end(), [](char c) { return c >= '0' && c <= '9'; })) continue;
    manifests.emplace_back(std::stoi(name), e.path() / "manifest.jsonl");
  }
  if (manifests.empty()) throw StoreError("no manifest.jsonl under " + root.string() + " (run `generate`)");
  std::sort(manifests.begin(), manifests.end());
  std::vector<HaystackMeta> out;
  for (const auto& [size, file] : manifests) {
    std::istringstream in(read_file(file));
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty()) continue;
      json j;
      try {
        j = json::parse(line);
      } catch (const json::exception& e) {
        throw StoreError(file.string() + ":" + std::to_string(lineno) + ": " + e.what());
      }
      out.push_back(meta_from_json(j));
    }
  }
  return out;
}

std::string read_haystack_text(const fs::path& root, const HaystackMeta& meta) {
  return read_file(root / meta.text_file);
}

}  // namespace haystack
