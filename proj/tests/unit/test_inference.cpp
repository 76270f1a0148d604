#include <doctest.h>

#include <bit>
#include <cmath>

#include "haystack/errors.hpp"
#include "haystack/hashing.hpp"
#include "haystack/inference.hpp"

using namespace haystack;

namespace {

const std::vector<LanguageCode> kLangs = standard_languages();

double log_sigmoid(double x) { return x >= 0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x)); }

// Posterior mean of b under Normal(0, 100) with k wins and n - k losses,
// by trapezoid integration over [-20, 20].
double grid_mean(int wins, int losses) {
  const int n = 200001;
  std::vector<double> lp(n), xs(n);
  double mx = -1e300;
  for (int i = 0; i < n; ++i) {
    xs[i] = -20.0 + 40.0 * i / (n - 1);
    lp[i] = wins * log_sigmoid(xs[i]) + losses * log_sigmoid(-xs[i]) - 0.5 * xs[i] * xs[i] / 1e4;
    mx = std::max(mx, lp[i]);
  }
  double z = 0, m = 0;
  for (int i = 0; i < n; ++i) {
    const double w = std::exp(lp[i] - mx) * ((i == 0 || i == n - 1) ? 0.5 : 1.0);
    z += w;
    m += w * xs[i];
  }
  return m / z;
}

int binomial_draw(SplitMix64& rng, int n, double p) {
  int k = 0;
  for (int i = 0; i < n; ++i) k += rng.uniform() < p ? 1 : 0;
  return k;
}

// One cell per (pair, prompt language, model) with 24 contrastive pairs each.
std::vector<CellData> synthetic_cells(std::uint64_t seed, int models, Origin origin,
                                      const std::function<double(const LanguageCode&, const LanguageCode&)>& beta,
                                      const std::string& prefix = "m") {
  SplitMix64 rng(seed);
  std::vector<CellData> out;
  for (std::size_t i = 0; i < kLangs.size(); ++i) {
    for (std::size_t j = i + 1; j < kLangs.size(); ++j) {
      for (const auto& lp : kLangs) {
        for (int m = 0; m < models; ++m) {
          CellData c{kLangs[i], kLangs[j], lp, prefix + std::to_string(m), origin, 0, 0};
          const double p = 1.0 / (1.0 + std::exp(-beta(kLangs[i], kLangs[j])));
          c.wins_l1 = binomial_draw(rng, 24, p);
          c.wins_l2 = 24 - c.wins_l1;
          out.push_back(c);
        }
      }
    }
  }
  return out;
}

const GroupPosterior& group(const PosteriorFit& fit, const char* l1, const char* l2,
                            std::optional<Origin> origin = std::nullopt) {
  for (const auto& g : fit.groups) {
    if (g.key.l1 == LanguageCode(l1) && g.key.l2 == LanguageCode(l2) && g.key.origin == origin) return g;
  }
  throw std::runtime_error("group not found");
}

}  // namespace

TEST_CASE("binomial spec values") {
  CHECK(exact_binomial_test(5, 10).p_value == doctest::Approx(638.0 / 1024).epsilon(1e-15));
  CHECK(exact_binomial_test(15, 18).p_value == doctest::Approx(988.0 / 262144).epsilon(1e-15));
  const auto empty = exact_binomial_test(0, 0);
  CHECK_FALSE(empty.applicable);
  CHECK(empty.p_value == 1.0);
  CHECK_THROWS_AS(exact_binomial_test(3, 2), ArgumentError);
  CHECK_THROWS_AS(exact_binomial_test(-1, 2), ArgumentError);
}

TEST_CASE("binomial matches sequence enumeration up to n = 20") {
  for (int n = 0; n <= 20; ++n) {
    std::vector<std::uint64_t> at_least(n + 2, 0);
    for (std::uint32_t seq = 0; seq < (1u << n); ++seq) ++at_least[std::popcount(seq)];
    for (int k = n - 1; k >= 0; --k) at_least[k] += at_least[k + 1];
    for (int k = 0; k <= n; ++k) {
      const double brute = static_cast<double>(at_least[k]) / static_cast<double>(1u << n);
      CHECK(std::abs(exact_binomial_test(k, n).p_value - brute) <= 1e-12);
    }
  }
}

TEST_CASE("binomial large-n values") {
  // Exact rational values evaluated offline.
  CHECK(exact_binomial_test(64, 69).p_value == doctest::Approx(2.0596154989838134e-14).epsilon(1e-10));
  CHECK(exact_binomial_test(64, 127).p_value == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(exact_binomial_test(100, 200).p_value == doctest::Approx(0.5281742395046282).epsilon(1e-12));
  CHECK(exact_binomial_test(140, 250).p_value == doctest::Approx(0.03321057562002166).epsilon(1e-12));
}

TEST_CASE("Bonferroni flags") {
  CHECK(bonferroni_flag(0.001, 20));
  CHECK_FALSE(bonferroni_flag(0.004, 20));
  CHECK_THROWS_AS(bonferroni_flag(0.01, 0), ArgumentError);
  // Published win-matrix cells: 64 vs 5 bold; 18 vs 3 bold; 23 vs 11 and 21 vs 7 gray.
  CHECK(exact_binomial_test(64, 69).p_value < 1e-12);
  CHECK(bonferroni_flag(exact_binomial_test(64, 69).p_value, 20));
  CHECK(bonferroni_flag(exact_binomial_test(18, 21).p_value, 20));
  CHECK_FALSE(bonferroni_flag(exact_binomial_test(23, 34).p_value, 20));
  CHECK_FALSE(bonferroni_flag(exact_binomial_test(21, 28).p_value, 20));
  CHECK_FALSE(bonferroni_flag(exact_binomial_test(23, 43).p_value, 20));
}

TEST_CASE("cells from pair results") {
  std::vector<PairResult> pairs;
  auto add = [&](const char* lp, const char* backend, PairTag tag, int size = 1000) {
    pairs.push_back({"p", size, LanguageCode(lp), backend, LanguageCode("cmn"), LanguageCode("rus"), tag});
  };
  add("eng", "a", PairTag::L1Win);
  add("eng", "a", PairTag::L1Win);
  add("eng", "a", PairTag::L2Win);
  add("eng", "a", PairTag::SameSurname);
  add("eng", "a", PairTag::Discard);
  add("eng", "b", PairTag::Discard);
  add("eng", "a", PairTag::L1Win, 2500);
  const auto cells = build_cells(pairs, 1000, {{"a", Origin::East}});
  REQUIRE(cells.size() == 2);
  CHECK(cells[0].backend_id == "a");
  CHECK(cells[0].wins_l1 == 2);
  CHECK(cells[0].wins_l2 == 1);
  CHECK(cells[0].origin == Origin::East);
  CHECK(cells[1].wins_l1 + cells[1].wins_l2 == 0);
  CHECK(cells[1].origin == Origin::Other);
}

TEST_CASE("collapsed single cell matches grid integration") {
  const double oracle = grid_mean(7, 3);
  CHECK(oracle == doctest::Approx(0.94994).epsilon(1e-4));
  const std::vector<CellData> cells{{LanguageCode("cmn"), LanguageCode("eng"), LanguageCode("eng"), "m", Origin::Other, 7, 3}};
  MCMCConfig cfg;
  cfg.collapse_cells = true;
  const auto fit = fit_hierarchical(cells, Variant::Pooled, cfg);
  REQUIRE(fit.groups.size() == 1);
  const auto& s = fit.groups[0].summary;
  CHECK(std::abs(s.mean - oracle) <= 0.05);
  CHECK(s.rhat <= 1.05);
  CHECK(s.ess >= 100);
  CHECK(s.lower < s.median);
  CHECK(s.median < s.upper);
}

TEST_CASE("collapsed two-group model matches grid per group") {
  const std::vector<CellData> cells{
      {LanguageCode("cmn"), LanguageCode("eng"), LanguageCode("eng"), "m", Origin::Other, 2, 9},
      {LanguageCode("deu"), LanguageCode("rus"), LanguageCode("eng"), "m", Origin::Other, 12, 4},
  };
  MCMCConfig cfg;
  cfg.collapse_cells = true;
  cfg.seed = 3;
  const auto fit = fit_hierarchical(cells, Variant::Pooled, cfg);
  CHECK(std::abs(group(fit, "cmn", "eng").summary.mean - grid_mean(2, 9)) <= 0.05);
  CHECK(std::abs(group(fit, "deu", "rus").summary.mean - grid_mean(12, 4)) <= 0.05);
}

TEST_CASE("symmetric data gives no direction") {
  std::vector<CellData> cells;
  for (std::size_t i = 0; i < kLangs.size(); ++i) {
    for (std::size_t j = i + 1; j < kLangs.size(); ++j) {
      for (const auto& lp : kLangs) cells.push_back({kLangs[i], kLangs[j], lp, "m", Origin::Other, 5, 5});
    }
  }
  const auto fit = fit_hierarchical(cells, Variant::Pooled, MCMCConfig{});
  CHECK(fit.groups.size() == 10);
  for (const auto& g : fit.groups) {
    CHECK(g.summary.p_positive >= 0.4);
    CHECK(g.summary.p_positive <= 0.6);
    CHECK(g.summary.lower < 0);
    CHECK(g.summary.upper > 0);
  }
  CHECK(fit.converged);
}

TEST_CASE("flipping every win negates the posterior") {
  auto cells = synthetic_cells(11, 2, Origin::Other, [](const LanguageCode& a, const LanguageCode& b) {
    return (a == LanguageCode("cmn") && b == LanguageCode("rus")) ? 1.5 : 0.3;
  });
  auto flipped = cells;
  for (auto& c : flipped) std::swap(c.wins_l1, c.wins_l2);
  MCMCConfig cfg;
  const auto fit = fit_hierarchical(cells, Variant::Pooled, cfg);
  cfg.mirror_init = true;
  const auto mirrored = fit_hierarchical(flipped, Variant::Pooled, cfg);
  for (std::size_t g = 0; g < fit.groups.size(); ++g) {
    CHECK(std::abs(fit.groups[g].summary.median + mirrored.groups[g].summary.median) <= 0.1);
  }
}

TEST_CASE("no observations recover the prior") {
  std::vector<CellData> cells{{LanguageCode("eng"), LanguageCode("tur"), LanguageCode("eng"), "m", Origin::Other, 0, 0}};
  MCMCConfig cfg;
  cfg.samples = 10000;
  const auto fit = fit_hierarchical(cells, Variant::Pooled, cfg);
  const auto& s = fit.groups[0].summary;
  CHECK(std::abs(s.median) <= 5);
  CHECK(s.upper - s.lower >= 100);
  CHECK(s.p_positive >= 0.4);
  CHECK(s.p_positive <= 0.6);
}

TEST_CASE("bias recovery and diagnostics on synthetic data") {
  const auto cells = synthetic_cells(21, 3, Origin::Other, [](const LanguageCode& a, const LanguageCode& b) {
    return (a == LanguageCode("cmn") && b == LanguageCode("rus")) ? 2.0 : 0.0;
  });
  const auto fit = fit_hierarchical(cells, Variant::Pooled, MCMCConfig{});
  const auto& biased = group(fit, "cmn", "rus").summary;
  CHECK(biased.median >= 1.0);
  CHECK(biased.median <= 3.0);
  CHECK(biased.p_positive >= 0.99);
  for (const auto& g : fit.groups) {
    CHECK(g.summary.rhat <= 1.05);
    CHECK(g.summary.ess >= 100);
  }
  CHECK(fit.scale.rhat <= 1.05);
  CHECK(fit.scale.ess >= 100);
  CHECK(fit.converged);
}

TEST_CASE("degenerate pair with zero losses") {
  std::vector<CellData> cells;
  for (const auto& lp : kLangs) {
    for (int m = 0; m < 3; ++m) {
      cells.push_back({LanguageCode("rus"), LanguageCode("tur"), lp, "m" + std::to_string(m), Origin::East, 0, 10});
      cells.push_back({LanguageCode("cmn"), LanguageCode("deu"), lp, "m" + std::to_string(m), Origin::East, 6, 5});
    }
  }
  const auto fit = fit_hierarchical(cells, Variant::Pooled, MCMCConfig{});
  const auto& s = group(fit, "rus", "tur").summary;
  CHECK(std::isfinite(s.median));
  CHECK(std::abs(s.median) >= 10);
  CHECK(s.upper - s.lower >= 20);
  CHECK(s.p_positive < 0.01);
}

TEST_CASE("origin contrast") {
  auto beta = [](double v) {
    return [v](const LanguageCode&, const LanguageCode&) { return v; };
  };
  SUBCASE("identical data") {
    auto east = synthetic_cells(31, 2, Origin::East, beta(0.0), "e");
    auto west = east;
    for (auto& c : west) c.origin = Origin::West, c.backend_id[0] = 'w';
    east.insert(east.end(), west.begin(), west.end());
    const auto fit = fit_hierarchical(east, Variant::ByOrigin, MCMCConfig{});
    const auto contrast = origin_contrast(fit);
    CHECK(contrast.size() == 10);
    for (const auto& c : contrast) {
      CHECK(c.tier == SignTier::Weak);
      CHECK(std::abs(c.median) <= 0.3);
    }
  }
  SUBCASE("eastern preference") {
    auto cells = synthetic_cells(41, 3, Origin::East, beta(2.0), "e");
    const auto west = synthetic_cells(42, 3, Origin::West, beta(0.0), "w");
    cells.insert(cells.end(), west.begin(), west.end());
    const auto fit = fit_hierarchical(cells, Variant::ByOrigin, MCMCConfig{});
    for (const auto& c : origin_contrast(fit)) {
      CHECK(c.median >= 1.4);
      CHECK(c.median <= 2.6);
      CHECK(c.tier == SignTier::Strong);
    }
  }
  SUBCASE("mismatched pairs") {
    const auto fit = fit_hierarchical(synthetic_cells(5, 1, Origin::East, beta(0.0)), Variant::ByOrigin,
                                      MCMCConfig{.chains = 2, .warmup = 100, .samples = 100});
    CHECK_THROWS_AS(origin_contrast(fit), ArgumentError);
  }
}

TEST_CASE("sign tiers") {
  CHECK(sign_tier(0.995) == SignTier::Strong);
  CHECK(sign_tier(0.99) == SignTier::Moderate);
  CHECK(sign_tier(0.95) == SignTier::Moderate);
  CHECK(sign_tier(0.90) == SignTier::Weak);
}
