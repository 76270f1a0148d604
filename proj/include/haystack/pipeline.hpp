#pragma once

#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "haystack/backends.hpp"
#include "haystack/corpus_io.hpp"
#include "haystack/inference.hpp"
#include "haystack/report.hpp"
#include "haystack/runner.hpp"

namespace haystack {

inline constexpr const char* kToolVersion = "0.1.0";

/// Everything one pipeline invocation needs. Loaded from a TOML document and
/// then overridden by command-line flags.
struct PipelineConfig {
  std::filesystem::path workspace = "work";
  std::string run_id = "default";
  std::filesystem::path pool_dir;
  std::filesystem::path needles_file;
  std::filesystem::path backends_file;
  /// Defaults to `<workspace>/corpus`.
  std::filesystem::path corpus_root;
  std::vector<LanguageCode> languages = standard_languages();
  std::vector<LanguageCode> prompt_langs = standard_languages();
  std::vector<int> sizes{1000, 2500, 5000, 10000, 25000};
  /// Backends of `backends_file` to query; empty selects all of them.
  std::vector<std::string> backend_ids;
  bool strict_format = true;
  int parallel = 8;
  std::optional<std::size_t> max_new_queries;

  std::vector<Variant> variants{Variant::Pooled, Variant::ByOrigin};
  MCMCConfig mcmc;
  int bonferroni_family = 20;
  Sidedness sidedness = Sidedness::One;

  ReportFormat format = ReportFormat::Tsv;
  /// Defaults to `<workspace>/tables/<run_id>`.
  std::filesystem::path report_dir;

  std::filesystem::path corpus_dir() const { return corpus_root.empty() ? workspace / "corpus" : corpus_root; }
  std::filesystem::path results_root() const { return workspace / "results"; }
  std::filesystem::path manifest_file() const { return workspace / "manifests" / (run_id + ".json"); }
  std::filesystem::path tables_dir() const {
    return report_dir.empty() ? workspace / "tables" / run_id : report_dir;
  }
};

/// Relative paths resolve against `base_dir`. Errors name the key path.
PipelineConfig parse_pipeline_config(std::string_view toml_text, const std::filesystem::path& base_dir,
                                     std::string_view source_name = "config");
PipelineConfig load_pipeline_config(const std::filesystem::path& file);

struct ManifestBackend {
  std::string id;
  std::string kind;
  std::string model;
  Origin origin = Origin::Other;
};

/// Reproducibility record of one run, written before any query is issued.
struct RunManifest {
  std::string run_id;
  std::string tool_version = kToolVersion;
  std::string corpus_checksum;
  std::vector<ManifestBackend> backends;
  std::vector<LanguageCode> prompt_langs;
  std::vector<int> sizes;
  bool strict_format = true;
  int bonferroni_family = 20;
  std::string sidedness = "one";
  MCMCConfig mcmc;
};

nlohmann::json to_json(const RunManifest& m);
RunManifest manifest_from_json(const nlohmann::json& j);
RunManifest read_manifest(const std::filesystem::path& file);

/// Backends of the config's file, restricted to `backend_ids` in that order.
/// Throws ConfigError naming any id the file does not define.
std::vector<BackendConfig> select_backends(const PipelineConfig& cfg);

std::vector<CorpusSummary> stage_generate(const PipelineConfig& cfg, std::ostream& log);
/// Writes (or re-verifies) the manifest, then queries every missing cell.
std::vector<RunStats> stage_run(const PipelineConfig& cfg, std::ostream& log);
/// Writes the classified and pair stores of the run.
void stage_classify(const PipelineConfig& cfg, std::ostream& log);
/// Writes posterior.tsv and binomial.tsv per variant, plus origin_contrast.tsv
/// for the by-origin variant when both east and west backends are present.
void stage_analyze(const PipelineConfig& cfg, std::ostream& log);
std::vector<std::filesystem::path> stage_report(const PipelineConfig& cfg, std::ostream& log);
/// generate, run, classify, analyze, report.
void stage_all(const PipelineConfig& cfg, std::ostream& log);

/// Throws StoreError unless the corpus still hashes to the manifest checksum.
void verify_corpus(const PipelineConfig& cfg, const RunManifest& manifest);

}  // namespace haystack
