#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "haystack/classify.hpp"
#include "haystack/inference.hpp"

namespace haystack {

// ---------------------------------------------------------------------------
// Analysis artifacts

/// One line of posterior.tsv. `parameter` is "b" for a top-level bias and
/// "s" for the cell-effect scale (languages empty).
struct PosteriorRow {
  int size_budget = 0;
  Variant variant = Variant::Pooled;
  std::string parameter = "b";
  std::optional<Origin> origin;
  std::string l1;
  std::string l2;
  ParamSummary summary;
  bool converged = true;
};

std::vector<PosteriorRow> posterior_rows(const PosteriorFit& fit, int size_budget);
std::string posterior_tsv(std::span<const PosteriorRow> rows);
std::vector<PosteriorRow> parse_posterior_tsv(std::string_view text);

struct BinomialRow {
  int size_budget = 0;
  std::string backend_id;
  LanguageCode winner;
  LanguageCode loser;
  int k = 0;
  int n = 0;
  double p_value = 1.0;
  bool significant = false;
};

/// Both directions of every language pair per backend and size.
std::vector<BinomialRow> binomial_rows(std::span<const PairResult> pairs, int family_size,
                                       Sidedness sided = Sidedness::One);
std::string binomial_tsv(std::span<const BinomialRow> rows);

struct ContrastRow {
  int size_budget = 0;
  ContrastSummary contrast;
};
std::string contrast_tsv(std::span<const ContrastRow> rows);
std::vector<ContrastRow> parse_contrast_tsv(std::string_view text);

std::filesystem::path analysis_dir(const std::filesystem::path& workspace, const std::string& run_id, Variant v);

// ---------------------------------------------------------------------------
// Tables

enum class CellStyle { WinnerBold, LoserPlain, TieGray, Diagonal };
std::string_view to_string(CellStyle s);

struct WinMatrix {
  std::string backend_id;
  int size_budget = 0;
  std::vector<LanguageCode> languages;
  std::vector<std::vector<int>> counts;  // [row winner][column loser]
  std::vector<std::vector<CellStyle>> styles;
  std::vector<std::vector<double>> p_values;
  std::vector<int> row_sums;
};

/// Counts, from both orders of every contrastive pair, how often the row
/// language won over the column language; styles cells by the exact test
/// under Bonferroni correction. A cell is bold only when its count exceeds
/// the mirrored count.
WinMatrix win_matrix(std::span<const PairResult> pairs, const std::string& backend_id, int size_budget,
                     std::span<const LanguageCode> languages, int family_size, Sidedness sided = Sidedness::One);

struct BiasTableRow {
  std::string label;  // "Chinese vs Russian"
  double p = 0;       // probability of the stated direction, >= 0.5
  double lower = 0;
  double upper = 0;
};

/// Rows in canonical pair order, each oriented so that the stated direction
/// has posterior probability of at least one half.
std::vector<BiasTableRow> bias_table(std::span<const PosteriorRow> rows, const LanguageRegistry& names);

/// "Chinese vs Russian\t100.0%\t[2.54, 4.17]"
std::string format_bias_row_tsv(const BiasTableRow& row);

enum class ReportFormat { Tsv, Markdown };
ReportFormat report_format_from_string(std::string_view s);

std::string render_outcome_table(std::span<const OutcomeRow> rows, ReportFormat f);
std::string render_win_matrix(const WinMatrix& m, ReportFormat f);
std::string render_bias_table(std::span<const BiasTableRow> rows, ReportFormat f);

/// Antisymmetric matrix of signed values with sign-confidence styling. Used
/// for origin contrasts and per-origin biases.
struct SignedEntry {
  LanguageCode l1;
  LanguageCode l2;
  double median = 0;
  double p_positive = 0;
};
std::string render_signed_matrix(std::span<const SignedEntry> entries, std::span<const LanguageCode> languages,
                                 ReportFormat f);

/// Reads classified/, pairs/ and analysis/ artifacts of `run_id` and writes
/// every table under `out`. Throws StoreError naming the subcommand that
/// produces a missing artifact. Returns the files written, sorted.
std::vector<std::filesystem::path> render_tables(const std::filesystem::path& workspace, const std::string& run_id,
                                                 const std::filesystem::path& out, ReportFormat format,
                                                 const LanguageRegistry& names, int family_size = 20,
                                                 Sidedness sided = Sidedness::One);

}  // namespace haystack
