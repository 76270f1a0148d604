#include "haystack/cli.hpp"

#include <CLI11.hpp>

#include "haystack/errors.hpp"
#include "haystack/pipeline.hpp"

namespace haystack {

namespace {

struct Flags {
  std::string config;
  std::optional<std::string> workspace, run_id, pool, needles, backends, corpus;
  std::vector<std::string> backend_ids;
  std::optional<std::string> languages, prompt_langs, sizes;
  std::optional<std::string> strict_format;
  std::optional<int> parallel;
  std::optional<std::size_t> max_new_queries;
  std::optional<std::uint64_t> seed;
  std::optional<int> chains, warmup, samples, family;
  std::optional<std::string> variant, sidedness, format, out;
};

bool parse_bool(const std::string& s) {
  if (s == "true" || s == "1" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "no") return false;
  throw ConfigError("--strict-format: expected true or false (got '" + s + "')");
}

std::vector<int> parse_sizes(const std::string& csv) {
  std::vector<int> out;
  std::size_t pos = 0;
  while (pos <= csv.size()) {
    const auto comma = csv.find(',', pos);
    const auto item = csv.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
    try {
      std::size_t used = 0;
      const int v = std::stoi(item, &used);
      if (used != item.size() || v <= 0) throw std::invalid_argument(item);
      out.push_back(v);
    } catch (const std::exception&) {
      throw ConfigError("--sizes: expected positive integers separated by commas (got '" + item + "')");
    }
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  return out;
}

PipelineConfig resolve_config(const Flags& f) {
  PipelineConfig cfg = f.config.empty() ? PipelineConfig{} : load_pipeline_config(f.config);
  if (f.workspace) cfg.workspace = *f.workspace;
  if (f.run_id) cfg.run_id = *f.run_id;
  if (f.pool) cfg.pool_dir = *f.pool;
  if (f.needles) cfg.needles_file = *f.needles;
  if (f.backends) cfg.backends_file = *f.backends;
  if (f.corpus) cfg.corpus_root = *f.corpus;
  if (!f.backend_ids.empty()) cfg.backend_ids = f.backend_ids;
  if (f.languages) cfg.languages = parse_language_list(*f.languages);
  if (f.prompt_langs) cfg.prompt_langs = parse_language_list(*f.prompt_langs);
  if (f.sizes) cfg.sizes = parse_sizes(*f.sizes);
  if (f.strict_format) cfg.strict_format = parse_bool(*f.strict_format);
  if (f.parallel) cfg.parallel = *f.parallel;
  if (f.max_new_queries) cfg.max_new_queries = *f.max_new_queries;
  if (f.seed) cfg.mcmc.seed = *f.seed;
  if (f.chains) cfg.mcmc.chains = *f.chains;
  if (f.warmup) cfg.mcmc.warmup = *f.warmup;
  if (f.samples) cfg.mcmc.samples = *f.samples;
  if (f.family) cfg.bonferroni_family = *f.family;
  if (f.variant) {
    if (*f.variant == "both") {
      cfg.variants = {Variant::Pooled, Variant::ByOrigin};
    } else {
      try {
        cfg.variants = {variant_from_string(*f.variant)};
      } catch (const ArgumentError& e) {
        throw ConfigError(std::string("--variant: ") + e.what());
      }
    }
  }
  if (f.sidedness) {
    try {
      cfg.sidedness = sidedness_from_string(*f.sidedness);
    } catch (const ArgumentError& e) {
      throw ConfigError(std::string("--sidedness: ") + e.what());
    }
  }
  if (f.format) cfg.format = report_format_from_string(*f.format);
  if (f.out) cfg.report_dir = *f.out;
  return cfg;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Multilingual conflicting-needle retrieval benchmark"};
  app.name("haystack");
  app.require_subcommand(1);
  app.fallthrough();
  Flags f;

  app.add_option("--config", f.config, "TOML config file; flags override its values")->check(CLI::ExistingFile);
  app.add_option("--workspace", f.workspace, "Directory holding every artifact");
  app.add_option("--run-id", f.run_id, "Run identifier");
  app.add_option("--pool", f.pool, "Article pool directory");
  app.add_option("--needles", f.needles, "Needle definition file");
  app.add_option("--backends", f.backends, "Backend definition file");
  app.add_option("--corpus", f.corpus, "Corpus directory (default <workspace>/corpus)");
  app.add_option("--backend-id", f.backend_ids, "Query only these backends (repeatable)");
  app.add_option("--languages", f.languages, "Haystack languages, e.g. cmn,deu,eng,rus,tur");
  app.add_option("--langs", f.prompt_langs, "Prompt languages");
  app.add_option("--sizes", f.sizes, "Haystack sizes in English words, e.g. 1000,25000");
  app.add_option("--strict-format", f.strict_format, "Append the answer-format instruction (true|false)");
  app.add_option("--parallel", f.parallel, "In-flight requests per backend")->check(CLI::PositiveNumber);
  app.add_option("--max-new-queries", f.max_new_queries, "Stop after this many new queries per backend");
  app.add_option("--seed", f.seed, "Sampler seed");
  app.add_option("--chains", f.chains, "MCMC chains")->check(CLI::PositiveNumber);
  app.add_option("--warmup", f.warmup, "MCMC warmup iterations")->check(CLI::NonNegativeNumber);
  app.add_option("--samples", f.samples, "MCMC kept iterations per chain")->check(CLI::PositiveNumber);
  app.add_option("--bonferroni-family", f.family, "Bonferroni family size")->check(CLI::PositiveNumber);
  app.add_option("--sidedness", f.sidedness, "Binomial test sidedness (one|two)");
  app.add_option("--variant", f.variant, "Model variant (pooled|by-origin|both)");
  app.add_option("--format", f.format, "Report format (tsv|markdown)");
  app.add_option("--out", f.out, "Report output directory");

  auto* generate = app.add_subcommand("generate", "Build the corpus");
  auto* run = app.add_subcommand("run", "Query every backend on every haystack and prompt language");
  auto* classify = app.add_subcommand("classify", "Reduce responses to outcomes and contrastive pairs");
  auto* analyze = app.add_subcommand("analyze", "Fit the bias model and run binomial tests");
  auto* report = app.add_subcommand("report", "Render tables");
  auto* all = app.add_subcommand("all", "generate, run, classify, analyze, report");
  auto* compact = app.add_subcommand("compact", "Rewrite result stores keeping one record per key");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }

  PipelineConfig cfg;
  try {
    cfg = resolve_config(f);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }

  try {
    if (generate->parsed()) stage_generate(cfg, out);
    if (run->parsed()) stage_run(cfg, out);
    if (classify->parsed()) stage_classify(cfg, out);
    if (analyze->parsed()) stage_analyze(cfg, out);
    if (report->parsed()) stage_report(cfg, out);
    if (all->parsed()) stage_all(cfg, out);
    if (compact->parsed()) {
      for (const auto& b : select_backends(cfg)) {
        const auto file = results_file(cfg.results_root(), cfg.run_id, b.id);
        if (!std::filesystem::exists(file)) continue;
        out << "compact: " << file.string() << ": " << compact_store(file) << " records\n";
      }
    }
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

}  // namespace haystack
