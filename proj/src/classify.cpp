#include "haystack/classify.hpp"

#include <algorithm>
#include <tuple>

#include "haystack/errors.hpp"
#include "haystack/fsutil.hpp"

namespace haystack {

namespace fs = std::filesystem;
using nlohmann::json;

std::string to_string(const Outcome& o) {
  switch (o.tag) {
    case OutcomeTag::Both: return "Both";
    case OutcomeTag::None: return "None";
    case OutcomeTag::One: return o.which == Which::X1 ? "One(x1)" : "One(x2)";
  }
  return "None";
}

Outcome outcome_from_string(std::string_view s) {
  if (s == "Both") return Outcome::both();
  if (s == "None") return Outcome::none();
  if (s == "One(x1)") return Outcome::one(Which::X1);
  if (s == "One(x2)") return Outcome::one(Which::X2);
  throw StoreError("unknown outcome '" + std::string(s) + "'");
}

// ---------------------------------------------------------------------------
// Case folding

namespace {

char32_t fold(char32_t c) {
  if (c >= U'A' && c <= U'Z') return c + 32;
  if (c < 0x80) return c;
  if (c >= 0xC0 && c <= 0xDE && c != 0xD7) return c + 0x20;
  if (c == 0x130 || c == 0x131) return U'i';
  if (c == 0x178) return 0xFF;
  if ((c >= 0x100 && c <= 0x137) || (c >= 0x14A && c <= 0x177)) return c | 1;
  if ((c >= 0x139 && c <= 0x148) || (c >= 0x179 && c <= 0x17E)) return (c & 1) ? c + 1 : c;
  if (c >= 0x410 && c <= 0x42F) return c + 0x20;
  if (c >= 0x400 && c <= 0x40F) return c + 0x50;
  return c;
}

void encode(char32_t c, std::string& out) {
  if (c < 0x80) {
    out += static_cast<char>(c);
  } else if (c < 0x800) {
    out += static_cast<char>(0xC0 | (c >> 6));
    out += static_cast<char>(0x80 | (c & 0x3F));
  } else if (c < 0x10000) {
    out += static_cast<char>(0xE0 | (c >> 12));
    out += static_cast<char>(0x80 | ((c >> 6) & 0x3F));
    out += static_cast<char>(0x80 | (c & 0x3F));
  } else {
    out += static_cast<char>(0xF0 | (c >> 18));
    out += static_cast<char>(0x80 | ((c >> 12) & 0x3F));
    out += static_cast<char>(0x80 | ((c >> 6) & 0x3F));
    out += static_cast<char>(0x80 | (c & 0x3F));
  }
}

bool ascii_alnum(unsigned char c) { return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9'); }

bool is_ascii(std::string_view s) {
  return std::all_of(s.begin(), s.end(), [](char c) { return static_cast<unsigned char>(c) < 0x80; });
}

bool mentions_folded(std::string_view text, std::string_view variant) {
  if (variant.empty()) return false;
  if (!is_ascii(variant)) return text.find(variant) != std::string_view::npos;
  for (auto pos = text.find(variant); pos != std::string_view::npos; pos = text.find(variant, pos + 1)) {
    if (pos > 0 && ascii_alnum(static_cast<unsigned char>(text[pos - 1]))) continue;
    auto end = pos + variant.size();
    if (end < text.size() && text[end] == 's') ++end;
    if (end < text.size() && ascii_alnum(static_cast<unsigned char>(text[end]))) continue;
    return true;
  }
  return false;
}

bool any_mention(std::string_view folded_text, std::span<const std::string> variants) {
  return std::any_of(variants.begin(), variants.end(),
                     [&](const std::string& v) { return mentions_folded(folded_text, fold_case(v)); });
}

}  // namespace

std::string fold_case(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  std::size_t i = 0;
  while (i < s.size()) {
    const auto b = static_cast<unsigned char>(s[i]);
    int len = 0;
    char32_t c = 0;
    if (b < 0x80) {
      c = b, len = 1;
    } else if ((b & 0xE0) == 0xC0) {
      c = b & 0x1F, len = 2;
    } else if ((b & 0xF0) == 0xE0) {
      c = b & 0x0F, len = 3;
    } else if ((b & 0xF8) == 0xF0) {
      c = b & 0x07, len = 4;
    }
    bool valid = len > 0 && i + len <= s.size();
    for (int k = 1; valid && k < len; ++k) {
      const auto cb = static_cast<unsigned char>(s[i + k]);
      if ((cb & 0xC0) != 0x80) valid = false;
      c = (c << 6) | (cb & 0x3F);
    }
    if (!valid) {
      out += s[i++];
      continue;
    }
    encode(fold(c), out);
    i += len;
  }
  return out;
}

bool mentions(std::string_view text, std::string_view variant) {
  return mentions_folded(fold_case(text), fold_case(variant));
}

Outcome classify_output(std::string_view text, std::span<const std::string> x1_variants,
                        std::span<const std::string> x2_variants) {
  const auto folded = fold_case(text);
  const bool has1 = any_mention(folded, x1_variants);
  const bool has2 = any_mention(folded, x2_variants);
  if (has1 && has2) return Outcome::both();
  if (has1) return Outcome::one(Which::X1);
  if (has2) return Outcome::one(Which::X2);
  return Outcome::none();
}

// ---------------------------------------------------------------------------
// Pairs

std::string_view to_string(PairTag t) {
  switch (t) {
    case PairTag::L1Win: return "L1Win";
    case PairTag::L2Win: return "L2Win";
    case PairTag::SameSurname: return "SameSurname";
    case PairTag::Discard: return "Discard";
  }
  return "Discard";
}

PairTag pair_tag_from_string(std::string_view s) {
  if (s == "L1Win") return PairTag::L1Win;
  if (s == "L2Win") return PairTag::L2Win;
  if (s == "SameSurname") return PairTag::SameSurname;
  if (s == "Discard") return PairTag::Discard;
  throw StoreError("unknown pair tag '" + std::string(s) + "'");
}

PairTag classify_pair(const Outcome& a, const Outcome& b) {
  if (a.tag != OutcomeTag::One || b.tag != OutcomeTag::One) return PairTag::Discard;
  if (*a.which == *b.which) return PairTag::SameSurname;
  // In b the surnames swap presentation languages, so picking x2 there means
  // picking the surname shown in a's l1.
  return *a.which == Which::X1 ? PairTag::L1Win : PairTag::L2Win;
}

ClassifiedRecord classify_record(const QueryRecord& r, const NeedleSet& needles) {
  ClassifiedRecord c;
  c.backend_id = r.backend_id;
  c.config = r.config;
  c.prompt_lang = r.prompt_lang;
  c.transport_error = r.error.has_value();
  if (c.transport_error) return c;
  const auto v1 = needles.surname(r.config.x1).match_variants();
  if (r.config.conflicting()) {
    const auto v2 = needles.surname(r.config.x2).match_variants();
    c.outcome = classify_output(r.response_text, v1, v2);
  } else {
    c.outcome = classify_output(r.response_text, v1, {});
  }
  return c;
}

std::vector<PairResult> make_pair_results(std::span<const ClassifiedRecord> records, std::size_t* unmatched) {
  using Key = std::tuple<std::string, int, std::string, LanguageCode>;
  std::map<Key, std::array<const ClassifiedRecord*, 2>> members;
  for (const auto& r : records) {
    const auto& c = r.config;
    if (!c.conflicting() || c.monolingual()) continue;
    auto& slot = members[{r.backend_id, c.size_budget, c.pair_id(), r.prompt_lang}];
    slot[c.l1 < c.l2 ? 0 : 1] = &r;
  }
  std::vector<PairResult> out;
  std::size_t missing = 0;
  for (const auto& [key, m] : members) {
    if (!m[0] || !m[1]) {
      ++missing;
      continue;
    }
    PairResult p;
    p.backend_id = std::get<0>(key);
    p.size_budget = std::get<1>(key);
    p.pair_id = std::get<2>(key);
    p.prompt_lang = std::get<3>(key);
    p.l1 = m[0]->config.l1;
    p.l2 = m[0]->config.l2;
    p.tag = classify_pair(m[0]->outcome, m[1]->outcome);
    out.push_back(std::move(p));
  }
  if (unmatched) *unmatched = missing;
  return out;
}

// ---------------------------------------------------------------------------
// Serialization

json to_json(const ClassifiedRecord& r) {
  return json{{"backend", r.backend_id},
              {"haystack", r.config.id()},
              {"config", to_json(r.config)},
              {"prompt_lang", r.prompt_lang.str()},
              {"outcome", to_string(r.outcome)},
              {"transport_error", r.transport_error}};
}

ClassifiedRecord classified_from_json(const json& j) {
  ClassifiedRecord r;
  r.backend_id = j.at("backend").get<std::string>();
  r.config = config_from_json(j.at("config"));
  r.prompt_lang = LanguageCode(j.at("prompt_lang").get<std::string>());
  r.outcome = outcome_from_string(j.at("outcome").get<std::string>());
  r.transport_error = j.value("transport_error", false);
  return r;
}

json to_json(const PairResult& p) {
  return json{{"pair", p.pair_id},    {"size", p.size_budget}, {"prompt_lang", p.prompt_lang.str()},
              {"backend", p.backend_id}, {"l1", p.l1.str()},     {"l2", p.l2.str()},
              {"tag", to_string(p.tag)}};
}

PairResult pair_from_json(const json& j) {
  PairResult p;
  p.pair_id = j.at("pair").get<std::string>();
  p.size_budget = j.at("size").get<int>();
  p.prompt_lang = LanguageCode(j.at("prompt_lang").get<std::string>());
  p.backend_id = j.at("backend").get<std::string>();
  p.l1 = LanguageCode(j.at("l1").get<std::string>());
  p.l2 = LanguageCode(j.at("l2").get<std::string>());
  p.tag = pair_tag_from_string(j.at("tag").get<std::string>());
  return p;
}

std::vector<OutcomeRow> outcome_summary(std::span<const ClassifiedRecord> records) {
  std::map<std::pair<int, std::string>, OutcomeRow> rows;
  for (const auto& r : records) {
    if (!r.config.conflicting()) continue;
    auto& row = rows[{r.config.size_budget, r.backend_id}];
    row.backend_id = r.backend_id;
    row.size_budget = r.config.size_budget;
    auto& counts = r.config.monolingual() ? row.monolingual : row.multilingual;
    switch (r.outcome.tag) {
      case OutcomeTag::Both: ++counts.both; break;
      case OutcomeTag::None: ++counts.none; break;
      case OutcomeTag::One: ++counts.one; break;
    }
  }
  std::vector<OutcomeRow> out;
  for (auto& [_, row] : rows) out.push_back(std::move(row));
  return out;
}

fs::path classified_file(const fs::path& root, const std::string& run_id) {
  return root / "classified" / (run_id + ".jsonl");
}

fs::path pairs_file(const fs::path& root, const std::string& run_id) { return root / "pairs" / (run_id + ".jsonl"); }

namespace {

template <typename T, typename Parse>
std::vector<T> read_jsonl(const fs::path& file, Parse parse) {
  const auto data = read_file(file);
  std::vector<T> out;
  std::size_t pos = 0;
  std::size_t line_no = 0;
  while (pos < data.size()) {
    ++line_no;
    auto nl = data.find('\n', pos);
    if (nl == std::string::npos) nl = data.size();
    const std::string_view line(data.data() + pos, nl - pos);
    if (!line.empty()) {
      try {
        out.push_back(parse(json::parse(line)));
      } catch (const std::exception& e) {
        throw StoreError(file.string() + ":" + std::to_string(line_no) + ": " + e.what());
      }
    }
    pos = nl + 1;
  }
  return out;
}

}  // namespace

void write_classified(const fs::path& file, std::span<const ClassifiedRecord> records) {
  std::vector<const ClassifiedRecord*> sorted;
  for (const auto& r : records) sorted.push_back(&r);
  std::sort(sorted.begin(), sorted.end(), [](const auto* a, const auto* b) {
    return std::tuple(a->backend_id, record_key(a->config, a->prompt_lang)) <
           std::tuple(b->backend_id, record_key(b->config, b->prompt_lang));
  });
  std::string out;
  for (const auto* r : sorted) out += to_json(*r).dump() + "\n";
  write_file_atomic(file, out);
}

std::vector<ClassifiedRecord> read_classified(const fs::path& file) {
  return read_jsonl<ClassifiedRecord>(file, classified_from_json);
}

void write_pairs(const fs::path& file, std::span<const PairResult> pairs) {
  std::string out;
  for (const auto& p : pairs) out += to_json(p).dump() + "\n";
  write_file_atomic(file, out);
}

std::vector<PairResult> read_pairs(const fs::path& file) { return read_jsonl<PairResult>(file, pair_from_json); }

}  // namespace haystack
