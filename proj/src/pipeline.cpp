#include "haystack/pipeline.hpp"

#include <algorithm>
#include <map>
#include <set>

#include <toml.hpp>

#include "haystack/classify.hpp"
#include "haystack/errors.hpp"
#include "haystack/fsutil.hpp"

namespace haystack {

namespace fs = std::filesystem;

namespace {

using View = toml::node_view<const toml::node>;

[[noreturn]] void fail(const std::string& key, const std::string& what) { throw ConfigError(key + ": " + what); }

std::optional<std::string> opt_string(View node, const std::string& key) {
  if (!node) return std::nullopt;
  auto v = node.value<std::string>();
  if (!node.is_string() || !v) fail(key, "expected a string");
  return *v;
}

std::optional<std::int64_t> opt_integer(View node, const std::string& key) {
  if (!node) return std::nullopt;
  auto v = node.value<std::int64_t>();
  if (!node.is_integer() || !v) fail(key, "expected an integer");
  return *v;
}

std::optional<double> opt_number(View node, const std::string& key) {
  if (!node) return std::nullopt;
  if (!node.is_number()) fail(key, "expected a number");
  return *node.value<double>();
}

std::optional<bool> opt_bool(View node, const std::string& key) {
  if (!node) return std::nullopt;
  if (!node.is_boolean()) fail(key, "expected true or false");
  return *node.value<bool>();
}

std::vector<std::string> string_list(View node, const std::string& key) {
  const auto* arr = node.as_array();
  if (!arr) fail(key, "expected an array of strings");
  std::vector<std::string> out;
  for (std::size_t i = 0; i < arr->size(); ++i) {
    auto v = arr->get(i)->value<std::string>();
    if (!arr->get(i)->is_string() || !v) fail(key + "[" + std::to_string(i) + "]", "expected a string");
    out.push_back(*v);
  }
  return out;
}

std::vector<LanguageCode> language_list(View node, const std::string& key) {
  std::string csv;
  for (const auto& s : string_list(node, key)) csv += (csv.empty() ? "" : ",") + s;
  try {
    return parse_language_list(csv);
  } catch (const ConfigError& e) {
    fail(key, e.what());
  }
}

template <typename F>
auto wrap(const std::string& key, F&& f) {
  try {
    return f();
  } catch (const ConfigError& e) {
    fail(key, e.what());
  } catch (const ArgumentError& e) {
    fail(key, e.what());
  }
}

fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() ? path : base / path;
}

void log_line(std::ostream& log, const std::string& s) { log << s << '\n' << std::flush; }

std::vector<HaystackMeta> corpus_for_sizes(const PipelineConfig& cfg) {
  if (!fs::exists(cfg.corpus_dir())) {
    throw StoreError("missing corpus " + cfg.corpus_dir().string() + "; run `generate` first");
  }
  std::vector<HaystackMeta> out;
  const std::set<int> wanted(cfg.sizes.begin(), cfg.sizes.end());
  std::set<int> seen;
  for (auto& m : load_corpus_index(cfg.corpus_dir())) {
    if (!wanted.contains(m.config.size_budget)) continue;
    seen.insert(m.config.size_budget);
    out.push_back(std::move(m));
  }
  for (int s : wanted) {
    if (!seen.contains(s)) {
      throw StoreError("corpus has no haystacks of size " + std::to_string(s) + "; run `generate` first");
    }
  }
  return out;
}

RunManifest require_manifest(const PipelineConfig& cfg) {
  if (!fs::exists(cfg.manifest_file())) {
    throw StoreError("missing " + cfg.manifest_file().string() + "; run `run` first");
  }
  auto m = read_manifest(cfg.manifest_file());
  verify_corpus(cfg, m);
  return m;
}

nlohmann::json mcmc_json(const MCMCConfig& c) {
  return {{"chains", c.chains},
          {"warmup", c.warmup},
          {"samples", c.samples},
          {"seed", c.seed},
          {"target_accept", c.target_accept},
          {"prior_sd", c.prior_sd},
          {"scale_prior_sd", c.scale_prior_sd}};
}

}  // namespace

PipelineConfig parse_pipeline_config(std::string_view toml_text, const fs::path& base_dir,
                                     std::string_view source_name) {
  toml::table doc;
  try {
    doc = toml::parse(toml_text, std::string(source_name));
  } catch (const toml::parse_error& e) {
    throw ConfigError(std::string(source_name) + ": " + std::string(e.description()));
  }
  static const std::set<std::string> known{"workspace",     "run_id",   "pool", "corpus",     "needles",  "backends",
                                           "backend_ids",   "languages", "prompt_langs", "sizes", "strict_format",
                                           "parallel",      "analysis", "report"};
  for (const auto& [k, _] : doc) {
    if (!known.contains(std::string(k.str()))) fail(std::string(k.str()), "unknown key");
  }
  const View root{doc};
  PipelineConfig cfg;
  if (auto v = opt_string(root["workspace"], "workspace")) cfg.workspace = resolve(base_dir, *v);
  if (auto v = opt_string(root["run_id"], "run_id")) cfg.run_id = *v;
  if (auto v = opt_string(root["pool"], "pool")) cfg.pool_dir = resolve(base_dir, *v);
  if (auto v = opt_string(root["corpus"], "corpus")) cfg.corpus_root = resolve(base_dir, *v);
  if (auto v = opt_string(root["needles"], "needles")) cfg.needles_file = resolve(base_dir, *v);
  if (auto v = opt_string(root["backends"], "backends")) cfg.backends_file = resolve(base_dir, *v);
  if (root["backend_ids"]) cfg.backend_ids = string_list(root["backend_ids"], "backend_ids");
  if (root["languages"]) cfg.languages = language_list(root["languages"], "languages");
  if (root["prompt_langs"]) cfg.prompt_langs = language_list(root["prompt_langs"], "prompt_langs");
  if (const auto* arr = root["sizes"].as_array()) {
    cfg.sizes.clear();
    for (std::size_t i = 0; i < arr->size(); ++i) {
      const auto key = "sizes[" + std::to_string(i) + "]";
      auto v = arr->get(i)->value<std::int64_t>();
      if (!arr->get(i)->is_integer() || !v || *v <= 0) fail(key, "expected a positive integer");
      cfg.sizes.push_back(static_cast<int>(*v));
    }
  } else if (root["sizes"]) {
    fail("sizes", "expected an array of integers");
  }
  if (auto v = opt_bool(root["strict_format"], "strict_format")) cfg.strict_format = *v;
  if (auto v = opt_integer(root["parallel"], "parallel")) {
    if (*v < 1) fail("parallel", "must be at least 1");
    cfg.parallel = static_cast<int>(*v);
  }

  if (auto a = root["analysis"]) {
    if (!a.is_table()) fail("analysis", "expected a table");
    if (a["variants"]) {
      cfg.variants.clear();
      for (const auto& s : string_list(a["variants"], "analysis.variants")) {
        cfg.variants.push_back(wrap("analysis.variants", [&] { return variant_from_string(s); }));
      }
    }
    if (auto v = opt_integer(a["chains"], "analysis.chains")) cfg.mcmc.chains = static_cast<int>(*v);
    if (auto v = opt_integer(a["warmup"], "analysis.warmup")) cfg.mcmc.warmup = static_cast<int>(*v);
    if (auto v = opt_integer(a["samples"], "analysis.samples")) cfg.mcmc.samples = static_cast<int>(*v);
    if (auto v = opt_integer(a["seed"], "analysis.seed")) cfg.mcmc.seed = static_cast<std::uint64_t>(*v);
    if (auto v = opt_number(a["target_accept"], "analysis.target_accept")) cfg.mcmc.target_accept = *v;
    if (auto v = opt_number(a["prior_sd"], "analysis.prior_sd")) cfg.mcmc.prior_sd = *v;
    if (auto v = opt_number(a["scale_prior_sd"], "analysis.scale_prior_sd")) cfg.mcmc.scale_prior_sd = *v;
    if (auto v = opt_integer(a["bonferroni_family"], "analysis.bonferroni_family")) {
      if (*v < 1) fail("analysis.bonferroni_family", "must be at least 1");
      cfg.bonferroni_family = static_cast<int>(*v);
    }
    if (auto v = opt_string(a["sidedness"], "analysis.sidedness")) {
      cfg.sidedness = wrap("analysis.sidedness", [&] { return sidedness_from_string(*v); });
    }
  }
  if (auto r = root["report"]) {
    if (!r.is_table()) fail("report", "expected a table");
    if (auto v = opt_string(r["format"], "report.format")) {
      cfg.format = wrap("report.format", [&] { return report_format_from_string(*v); });
    }
    if (auto v = opt_string(r["out"], "report.out")) cfg.report_dir = resolve(base_dir, *v);
  }
  return cfg;
}

PipelineConfig load_pipeline_config(const fs::path& file) {
  if (!fs::exists(file)) throw ConfigError("config file not found: " + file.string());
  return parse_pipeline_config(read_file(file), file.parent_path(), file.string());
}

nlohmann::json to_json(const RunManifest& m) {
  nlohmann::json backends = nlohmann::json::array();
  for (const auto& b : m.backends) {
    backends.push_back({{"id", b.id}, {"kind", b.kind}, {"model", b.model}, {"origin", to_string(b.origin)}});
  }
  nlohmann::json langs = nlohmann::json::array();
  for (const auto& l : m.prompt_langs) langs.push_back(l.str());
  return {{"run_id", m.run_id},
          {"tool_version", m.tool_version},
          {"corpus_checksum", m.corpus_checksum},
          {"backends", backends},
          {"prompt_langs", langs},
          {"sizes", m.sizes},
          {"flags",
           {{"strict_format", m.strict_format},
            {"bonferroni_family", m.bonferroni_family},
            {"sidedness", m.sidedness},
            {"mcmc", mcmc_json(m.mcmc)}}}};
}

RunManifest manifest_from_json(const nlohmann::json& j) {
  try {
    RunManifest m;
    m.run_id = j.at("run_id").get<std::string>();
    m.tool_version = j.at("tool_version").get<std::string>();
    m.corpus_checksum = j.at("corpus_checksum").get<std::string>();
    for (const auto& b : j.at("backends")) {
      m.backends.push_back({b.at("id").get<std::string>(), b.at("kind").get<std::string>(),
                            b.at("model").get<std::string>(), origin_from_string(b.at("origin").get<std::string>())});
    }
    for (const auto& l : j.at("prompt_langs")) m.prompt_langs.emplace_back(l.get<std::string>());
    m.sizes = j.at("sizes").get<std::vector<int>>();
    const auto& f = j.at("flags");
    m.strict_format = f.at("strict_format").get<bool>();
    m.bonferroni_family = f.at("bonferroni_family").get<int>();
    m.sidedness = f.at("sidedness").get<std::string>();
    const auto& c = f.at("mcmc");
    m.mcmc.chains = c.at("chains").get<int>();
    m.mcmc.warmup = c.at("warmup").get<int>();
    m.mcmc.samples = c.at("samples").get<int>();
    m.mcmc.seed = c.at("seed").get<std::uint64_t>();
    m.mcmc.target_accept = c.at("target_accept").get<double>();
    m.mcmc.prior_sd = c.at("prior_sd").get<double>();
    m.mcmc.scale_prior_sd = c.at("scale_prior_sd").get<double>();
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw StoreError(std::string("malformed run manifest: ") + e.what());
  }
}

RunManifest read_manifest(const fs::path& file) {
  try {
    return manifest_from_json(nlohmann::json::parse(read_file(file)));
  } catch (const nlohmann::json::parse_error& e) {
    throw StoreError(file.string() + ": " + e.what());
  }
}

std::vector<BackendConfig> select_backends(const PipelineConfig& cfg) {
  if (cfg.backends_file.empty()) throw ConfigError("backends: no backends file configured");
  auto all = load_backends(cfg.backends_file);
  if (cfg.backend_ids.empty()) return all;
  std::vector<BackendConfig> out;
  for (const auto& id : cfg.backend_ids) {
    auto it = std::find_if(all.begin(), all.end(), [&](const BackendConfig& b) { return b.id == id; });
    if (it == all.end()) {
      throw ConfigError("unknown backend id '" + id + "' (not defined in " + cfg.backends_file.string() + ")");
    }
    out.push_back(*it);
  }
  return out;
}

void verify_corpus(const PipelineConfig& cfg, const RunManifest& manifest) {
  const auto actual = directory_checksum(cfg.corpus_dir());
  if (actual != manifest.corpus_checksum) {
    throw StoreError("corpus checksum mismatch for run '" + manifest.run_id + "': manifest has " +
                     manifest.corpus_checksum + ", corpus hashes to " + actual + "; refusing to proceed");
  }
}

std::vector<CorpusSummary> stage_generate(const PipelineConfig& cfg, std::ostream& log) {
  if (cfg.pool_dir.empty()) throw ConfigError("pool: no article pool configured");
  if (cfg.needles_file.empty()) throw ConfigError("needles: no needle file configured");
  const auto pool = ArticlePool::load(cfg.pool_dir, cfg.languages);
  const auto needles = NeedleSet::load(cfg.needles_file);
  const auto summaries = generate_corpus(pool, needles, cfg.languages, cfg.sizes, cfg.corpus_dir());
  for (const auto& s : summaries) {
    const auto& c = s.counts;
    log_line(log, "generate: size " + std::to_string(s.size_budget) + ": " + std::to_string(c.total()) +
                      " haystacks (bilingual conflicting " + std::to_string(c.bilingual_conflicting) +
                      ", monolingual conflicting " + std::to_string(c.monolingual_conflicting) +
                      ", bilingual non-conflicting " + std::to_string(c.bilingual_non_conflicting) +
                      ", monolingual non-conflicting " + std::to_string(c.monolingual_non_conflicting) + "), " +
                      std::to_string(s.pairs) + " contrastive pairs");
  }
  log_line(log, "generate: corpus checksum " + directory_checksum(cfg.corpus_dir()));
  return summaries;
}

std::vector<RunStats> stage_run(const PipelineConfig& cfg, std::ostream& log) {
  const auto configs = select_backends(cfg);
  const auto needles = NeedleSet::load(cfg.needles_file);
  const auto metas = corpus_for_sizes(cfg);

  RunManifest manifest;
  manifest.run_id = cfg.run_id;
  manifest.corpus_checksum = directory_checksum(cfg.corpus_dir());
  for (const auto& b : configs) {
    manifest.backends.push_back({b.id, std::string(to_string(b.kind)), b.model_name, b.origin});
  }
  manifest.prompt_langs = cfg.prompt_langs;
  manifest.sizes = cfg.sizes;
  manifest.strict_format = cfg.strict_format;
  manifest.bonferroni_family = cfg.bonferroni_family;
  manifest.sidedness = std::string(to_string(cfg.sidedness));
  manifest.mcmc = cfg.mcmc;
  if (fs::exists(cfg.manifest_file())) {
    const auto previous = read_manifest(cfg.manifest_file());
    if (previous.corpus_checksum != manifest.corpus_checksum) verify_corpus(cfg, previous);
  }
  write_file_atomic(cfg.manifest_file(), to_json(manifest).dump(2) + "\n");

  std::vector<std::unique_ptr<Backend>> backends;
  for (const auto& c : configs) backends.push_back(make_backend(c));
  RunOptions opt;
  opt.run_id = cfg.run_id;
  opt.prompt_langs = cfg.prompt_langs;
  opt.strict_format = cfg.strict_format;
  opt.parallel = cfg.parallel;
  opt.max_new_queries = cfg.max_new_queries;
  const auto stats = run_matrix(cfg.corpus_dir(), metas, backends, needles, opt, cfg.results_root());
  for (const auto& s : stats) {
    log_line(log, "run: " + s.backend_id + ": planned " + std::to_string(s.planned) + ", already present " +
                      std::to_string(s.skipped) + ", issued " + std::to_string(s.issued) + ", failed " +
                      std::to_string(s.failed));
  }
  return stats;
}

void stage_classify(const PipelineConfig& cfg, std::ostream& log) {
  const auto manifest = require_manifest(cfg);
  const auto needles = NeedleSet::load(cfg.needles_file);
  std::vector<ClassifiedRecord> classified;
  for (const auto& b : manifest.backends) {
    const auto file = results_file(cfg.results_root(), cfg.run_id, b.id);
    if (!fs::exists(file)) throw StoreError("missing " + file.string() + "; run `run` first");
    for (const auto& r : read_records(file)) classified.push_back(classify_record(r, needles));
  }
  std::size_t unmatched = 0;
  const auto pairs = make_pair_results(classified, &unmatched);
  write_classified(classified_file(cfg.workspace, cfg.run_id), classified);
  write_pairs(pairs_file(cfg.workspace, cfg.run_id), pairs);
  std::map<PairTag, std::size_t> tags;
  for (const auto& p : pairs) ++tags[p.tag];
  log_line(log, "classify: " + std::to_string(classified.size()) + " records, " + std::to_string(pairs.size()) +
                    " pairs (L1Win " + std::to_string(tags[PairTag::L1Win]) + ", L2Win " +
                    std::to_string(tags[PairTag::L2Win]) + ", SameSurname " +
                    std::to_string(tags[PairTag::SameSurname]) + ", Discard " + std::to_string(tags[PairTag::Discard]) +
                    "), " + std::to_string(unmatched) + " unmatched");
}

void stage_analyze(const PipelineConfig& cfg, std::ostream& log) {
  const auto manifest = require_manifest(cfg);
  const auto pfile = pairs_file(cfg.workspace, cfg.run_id);
  if (!fs::exists(pfile)) throw StoreError("missing " + pfile.string() + "; run `classify` first");
  const auto pairs = read_pairs(pfile);
  std::map<std::string, Origin> origins;
  for (const auto& b : manifest.backends) origins[b.id] = b.origin;
  std::set<int> sizes;
  for (const auto& p : pairs) sizes.insert(p.size_budget);
  const auto binomial = binomial_tsv(binomial_rows(pairs, cfg.bonferroni_family, cfg.sidedness));

  for (const auto variant : cfg.variants) {
    const auto dir = analysis_dir(cfg.workspace, cfg.run_id, variant);
    std::vector<PosteriorRow> rows;
    std::vector<ContrastRow> contrasts;
    bool have_contrast = false;
    for (int size : sizes) {
      const auto cells = build_cells(pairs, size, origins);
      const auto fit = fit_hierarchical(cells, variant, cfg.mcmc);
      const auto r = posterior_rows(fit, size);
      rows.insert(rows.end(), r.begin(), r.end());
      log_line(log, "analyze: " + std::string(to_string(variant)) + " size " + std::to_string(size) + ": " +
                        std::to_string(fit.groups.size()) + " pair groups over " + std::to_string(fit.n_cells) +
                        " cells" + (fit.converged ? "" : "; WARNING: R-hat above limit"));
      if (variant == Variant::ByOrigin) {
        const bool east = std::any_of(fit.groups.begin(), fit.groups.end(),
                                      [](const GroupPosterior& g) { return g.key.origin == Origin::East; });
        const bool west = std::any_of(fit.groups.begin(), fit.groups.end(),
                                      [](const GroupPosterior& g) { return g.key.origin == Origin::West; });
        if (east && west) {
          have_contrast = true;
          for (const auto& c : origin_contrast(fit)) contrasts.push_back({size, c});
        }
      }
    }
    write_file_atomic(dir / "posterior.tsv", posterior_tsv(rows));
    write_file_atomic(dir / "binomial.tsv", binomial);
    if (have_contrast) {
      write_file_atomic(dir / "origin_contrast.tsv", contrast_tsv(contrasts));
    } else if (variant == Variant::ByOrigin) {
      fs::remove(dir / "origin_contrast.tsv");
      log_line(log, "analyze: no east/west backend pair; origin contrast skipped");
    }
  }
}

std::vector<fs::path> stage_report(const PipelineConfig& cfg, std::ostream& log) {
  const auto files = render_tables(cfg.workspace, cfg.run_id, cfg.tables_dir(), cfg.format,
                                   LanguageRegistry::standard(), cfg.bonferroni_family, cfg.sidedness);
  for (const auto& f : files) log_line(log, "report: wrote " + f.string());
  return files;
}

void stage_all(const PipelineConfig& cfg, std::ostream& log) {
  stage_generate(cfg, log);
  stage_run(cfg, log);
  stage_classify(cfg, log);
  stage_analyze(cfg, log);
  stage_report(cfg, log);
}

}  // namespace haystack
