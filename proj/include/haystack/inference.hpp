#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "haystack/backends.hpp"
#include "haystack/classify.hpp"

namespace haystack {

// ---------------------------------------------------------------------------
// Exact binomial test

struct BinomialTestResult {
  int k = 0;
  int n = 0;
  /// P[X >= k] for X ~ Binomial(n, 1/2).
  double p_value = 1.0;
  bool applicable = false;  // n > 0
};

/// Exact upper tail; 128-bit integer arithmetic up to n = 126, log-space
/// long double beyond. Throws ArgumentError unless 0 <= k <= n.
BinomialTestResult exact_binomial_test(int k, int n);

enum class Sidedness { One, Two };
std::string_view to_string(Sidedness s);
Sidedness sidedness_from_string(std::string_view s);

/// One-sided: P[X >= k]. Two-sided: min(1, 2 P[X >= max(k, n - k)]).
double binomial_p_value(int k, int n, Sidedness sided);

/// p < alpha / family_size. Throws ArgumentError for family_size < 1.
bool bonferroni_flag(double p_value, int family_size, double alpha = 0.05);

// ---------------------------------------------------------------------------
// Data

enum class Variant { Pooled, ByOrigin };
std::string_view to_string(Variant v);
Variant variant_from_string(std::string_view s);

/// Win counts of one (pair, prompt language, backend) cell. l1 < l2.
struct CellData {
  LanguageCode l1;
  LanguageCode l2;
  LanguageCode prompt_lang;
  std::string backend_id;
  Origin origin = Origin::Other;
  int wins_l1 = 0;
  int wins_l2 = 0;
};

/// Sums L1Win/L2Win tags per cell for one haystack size; SameSurname and
/// Discard are dropped. Backends missing from `origins` count as Other.
std::vector<CellData> build_cells(std::span<const PairResult> pairs, int size_budget,
                                  const std::map<std::string, Origin>& origins = {});

// ---------------------------------------------------------------------------
// Hierarchical model

struct MCMCConfig {
  int chains = 4;
  int warmup = 1000;
  int samples = 2000;
  std::uint64_t seed = 1;
  double target_accept = 0.3;
  double prior_sd = 100.0;    // top-level b
  double scale_prior_sd = 100.0;  // half-normal on s
  /// Fix s = 0 so every cell shares its group's b.
  bool collapse_cells = false;
  /// Initialize at the negation of the usual starting point.
  bool mirror_init = false;
  double rhat_limit = 1.05;
};

struct ParamSummary {
  double median = 0;
  double mean = 0;
  double lower = 0;  // 2.5%
  double upper = 0;  // 97.5%
  double p_positive = 0;
  double rhat = 0;
  double ess = 0;
};

ParamSummary summarize_draws(std::span<const std::vector<double>> chains);

struct GroupKey {
  std::optional<Origin> origin;  // set for the by-origin variant
  LanguageCode l1;
  LanguageCode l2;
  auto operator<=>(const GroupKey&) const = default;
};

struct GroupPosterior {
  GroupKey key;
  ParamSummary summary;
  std::vector<double> draws;  // chains concatenated; index-aligned across groups
};

struct PosteriorFit {
  Variant variant = Variant::Pooled;
  std::vector<GroupPosterior> groups;  // sorted by key
  ParamSummary scale;                  // s (zero when collapsed)
  std::size_t n_cells = 0;
  bool converged = true;  // every reported R-hat within the limit
  double acceptance = 0;  // mean sampling-phase acceptance over all moves
};

/// Random-walk Metropolis over top-level b per group, s, and non-centered
/// cell effects z (cell b = group b + s * z). Each iteration updates every z,
/// every group b (plain and with cell effects held fixed), and log s (plain
/// and rescaling z). Scales adapt in batches during warmup. Chains run on
/// separate threads with their own splitmix64 streams.
PosteriorFit fit_hierarchical(std::span<const CellData> cells, Variant variant, const MCMCConfig& config);

// ---------------------------------------------------------------------------
// Origin contrast

enum class SignTier { Strong, Moderate, Weak };
std::string_view to_string(SignTier t);
/// Strong above 0.99, moderate above 0.90, weak otherwise.
SignTier sign_tier(double p_sign);

struct ContrastSummary {
  LanguageCode l1;
  LanguageCode l2;
  double median = 0;
  double lower = 0;
  double upper = 0;
  double p_positive = 0;
  SignTier tier = SignTier::Weak;
};

/// Sample-wise east minus west per pair. Both spans hold groups of one fit
/// (same draw indexing). Throws ArgumentError when the pair sets differ.
std::vector<ContrastSummary> origin_contrast(std::span<const GroupPosterior> east,
                                             std::span<const GroupPosterior> west);
/// Splits a by-origin fit by origin and contrasts east with west.
std::vector<ContrastSummary> origin_contrast(const PosteriorFit& by_origin);

}  // namespace haystack
