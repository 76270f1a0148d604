#include <doctest.h>

#include <unistd.h>

#include <filesystem>
#include <sstream>

#include "haystack/cli.hpp"
#include "haystack/errors.hpp"
#include "haystack/fsutil.hpp"
#include "haystack/pipeline.hpp"

using namespace haystack;
namespace fs = std::filesystem;

namespace {

const fs::path kRoot = fs::path(HAYSTACK_SOURCE_DIR);

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag)
      : path(fs::temp_directory_path() / ("haystack_" + tag + "_" + std::to_string(::getpid()))) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

struct CliResult {
  int status;
  std::string out;
  std::string err;
};

CliResult cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int status = run_cli(args, out, err);
  return {status, out.str(), err.str()};
}

std::vector<std::string> base_args(const fs::path& work) {
  return {"--config", (kRoot / "data" / "config.toml").string(), "--workspace", work.string(), "--run-id", "t",
          "--chains", "2", "--warmup", "300", "--samples", "500"};
}

std::vector<std::string> with(std::vector<std::string> args, std::initializer_list<std::string> more) {
  args.insert(args.end(), more.begin(), more.end());
  return args;
}

/// Every file under `root` that downstream of `run` must be reproducible,
/// keyed by relative path. Result stores carry timestamps and are skipped.
std::map<std::string, std::string> derived_artifacts(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file()) continue;
    const auto rel = fs::relative(e.path(), root).generic_string();
    if (rel.starts_with("results/")) continue;
    out[rel] = read_file(e.path());
  }
  return out;
}

}  // namespace

TEST_CASE("config parsing resolves paths and names bad keys") {
  const auto cfg = parse_pipeline_config(
      "workspace = \"w\"\npool = \"/abs/pool\"\nsizes = [1000, 2500]\nprompt_langs = [\"eng\", \"cmn\"]\n"
      "[analysis]\nvariants = [\"pooled\"]\nsamples = 10\nsidedness = \"two\"\n[report]\nformat = \"markdown\"\n",
      "/base");
  CHECK(cfg.workspace == fs::path("/base/w"));
  CHECK(cfg.pool_dir == fs::path("/abs/pool"));
  CHECK(cfg.sizes == std::vector<int>{1000, 2500});
  CHECK(cfg.prompt_langs.size() == 2);
  CHECK(cfg.variants == std::vector<Variant>{Variant::Pooled});
  CHECK(cfg.mcmc.samples == 10);
  CHECK(cfg.sidedness == Sidedness::Two);
  CHECK(cfg.format == ReportFormat::Markdown);
  CHECK(cfg.corpus_dir() == fs::path("/base/w/corpus"));
  CHECK(cfg.tables_dir() == fs::path("/base/w/tables/default"));

  auto error_of = [](const std::string& text) {
    try {
      parse_pipeline_config(text, "/");
    } catch (const ConfigError& e) {
      return std::string(e.what());
    }
    return std::string("no error");
  };
  CHECK(error_of("sizes = [1000, \"x\"]").starts_with("sizes[1]:"));
  CHECK(error_of("[analysis]\nchains = \"four\"").starts_with("analysis.chains:"));
  CHECK(error_of("[analysis]\nvariants = [\"nested\"]").starts_with("analysis.variants:"));
  CHECK(error_of("[report]\nformat = \"html\"").starts_with("report.format:"));
  CHECK(error_of("colour = 1").starts_with("colour: unknown key"));
  CHECK(error_of("languages = [\"eng\", \"eng\"]").starts_with("languages:"));
}

TEST_CASE("manifest round-trips") {
  RunManifest m;
  m.run_id = "r";
  m.corpus_checksum = "abc";
  m.backends = {{"a", "mock-biased", "m", Origin::East}};
  m.prompt_langs = standard_languages();
  m.sizes = {1000};
  m.mcmc.seed = 9;
  const auto back = manifest_from_json(to_json(m));
  CHECK(to_json(back) == to_json(m));
  CHECK(back.backends[0].origin == Origin::East);
  CHECK_THROWS_AS(manifest_from_json(nlohmann::json::object()), StoreError);
}

TEST_CASE("cli validation") {
  TempDir dir("cli");
  const auto work = dir.path / "w";

  auto r = cli({});
  CHECK(r.status == 2);

  r = cli(with(base_args(work), {"generate"}));
  REQUIRE(r.status == 0);
  CHECK(r.out.find("900 haystacks (bilingual conflicting 480, monolingual conflicting 120, bilingual "
                   "non-conflicting 240, monolingual non-conflicting 60), 240 contrastive pairs") != std::string::npos);

  r = cli(with(base_args(work), {"run", "--backend-id", "nosuch"}));
  CHECK(r.status != 0);
  CHECK(r.err.find("nosuch") != std::string::npos);

  r = cli(with(base_args(work), {"classify"}));
  CHECK(r.status == 1);
  CHECK(r.err.find("run `run` first") != std::string::npos);

  r = cli(with(base_args(work), {"report"}));
  CHECK(r.status == 1);
  CHECK(r.err.find("run `classify` first") != std::string::npos);

  r = cli(with(base_args(work), {"generate", "--sizes", "1000,abc"}));
  CHECK(r.status == 2);
  CHECK(r.err.find("--sizes") != std::string::npos);

  r = cli(with(base_args(work), {"analyze", "--sidedness", "three"}));
  CHECK(r.status == 2);
}

TEST_CASE("all equals the sequence of subcommands") {
  TempDir dir("seq");
  const auto a = dir.path / "a";
  const auto b = dir.path / "b";
  REQUIRE(cli(with(base_args(a), {"all"})).status == 0);
  for (const auto* sub : {"generate", "run", "classify", "analyze", "report"}) {
    const auto r = cli(with(base_args(b), {sub}));
    INFO(sub << ": " << r.err);
    REQUIRE(r.status == 0);
  }
  const auto fa = derived_artifacts(a);
  const auto fb = derived_artifacts(b);
  CHECK(fa.size() == fb.size());
  CHECK(fa == fb);
  CHECK(fa.contains("analysis/t/pooled/posterior.tsv"));
  CHECK(fa.contains("analysis/t/by-origin/binomial.tsv"));
  CHECK(fa.contains("manifests/t.json"));
  CHECK(fa.contains("tables/t/wins_mock_1000.md"));

  const auto records = read_records(results_file(a / "results", "t", "mock"));
  CHECK(records.size() == 4500);

  SUBCASE("resume issues nothing") {
    const auto r = cli(with(base_args(a), {"run"}));
    CHECK(r.out.find("already present 4500, issued 0") != std::string::npos);
  }
  SUBCASE("compaction keeps every record") {
    const auto r = cli(with(base_args(a), {"compact"}));
    CHECK(r.status == 0);
    CHECK(r.out.find(": 4500 records") != std::string::npos);
  }
  SUBCASE("a modified corpus is refused") {
    for (const auto& e : fs::directory_iterator(a / "corpus" / "1000")) {
      if (e.path().extension() == ".txt") {
        write_file_atomic(e.path(), read_file(e.path()) + " ");
        break;
      }
    }
    const auto r = cli(with(base_args(a), {"analyze"}));
    CHECK(r.status == 1);
    CHECK(r.err.find("checksum mismatch") != std::string::npos);
  }
}
