#include "haystack/inference.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <thread>

#include "haystack/errors.hpp"
#include "haystack/hashing.hpp"

namespace haystack {

// ---------------------------------------------------------------------------
// Binomial

BinomialTestResult exact_binomial_test(int k, int n) {
  if (n < 0 || k < 0 || k > n) {
    throw ArgumentError("binomial test needs 0 <= k <= n (got k=" + std::to_string(k) + ", n=" + std::to_string(n) + ")");
  }
  BinomialTestResult r{k, n, 1.0, n > 0};
  if (n == 0 || k == 0) return r;

  if (n <= 126) {
    // Pascal row: entries and the tail stay below 2^126.
    std::vector<unsigned __int128> row(static_cast<std::size_t>(n) + 1, 0);
    row[0] = 1;
    for (int i = 1; i <= n; ++i) {
      for (int j = i; j > 0; --j) row[j] += row[j - 1];
    }
    unsigned __int128 tail = 0;
    for (int i = k; i <= n; ++i) tail += row[i];
    const auto hi = static_cast<long double>(static_cast<std::uint64_t>(tail >> 64));
    const auto lo = static_cast<long double>(static_cast<std::uint64_t>(tail));
    r.p_value = static_cast<double>(std::ldexp(hi, 64 - n) + std::ldexp(lo, -n));
    return r;
  }

  const long double log2 = std::log(2.0L);
  std::vector<long double> terms;
  for (int i = k; i <= n; ++i) {
    terms.push_back(std::lgamma(static_cast<long double>(n) + 1) - std::lgamma(static_cast<long double>(i) + 1) -
                    std::lgamma(static_cast<long double>(n - i) + 1) - n * log2);
  }
  const auto mx = *std::max_element(terms.begin(), terms.end());
  long double acc = 0;
  for (auto t : terms) acc += std::exp(t - mx);
  r.p_value = static_cast<double>(std::min(1.0L, std::exp(mx) * acc));
  return r;
}

std::string_view to_string(Sidedness s) { return s == Sidedness::One ? "one" : "two"; }

Sidedness sidedness_from_string(std::string_view s) {
  if (s == "one") return Sidedness::One;
  if (s == "two") return Sidedness::Two;
  throw ArgumentError("unknown sidedness '" + std::string(s) + "' (expected one or two)");
}

double binomial_p_value(int k, int n, Sidedness sided) {
  if (sided == Sidedness::One) return exact_binomial_test(k, n).p_value;
  const auto t = exact_binomial_test(std::max(k, n - k), n);
  return std::min(1.0, 2.0 * t.p_value);
}

bool bonferroni_flag(double p_value, int family_size, double alpha) {
  if (family_size < 1) throw ArgumentError("Bonferroni family size must be at least 1");
  return p_value < alpha / family_size;
}

// ---------------------------------------------------------------------------
// Data

std::string_view to_string(Variant v) { return v == Variant::Pooled ? "pooled" : "by-origin"; }

Variant variant_from_string(std::string_view s) {
  if (s == "pooled") return Variant::Pooled;
  if (s == "by-origin" || s == "by_origin") return Variant::ByOrigin;
  throw ConfigError("unknown variant '" + std::string(s) + "' (expected pooled or by-origin)");
}

std::vector<CellData> build_cells(std::span<const PairResult> pairs, int size_budget,
                                  const std::map<std::string, Origin>& origins) {
  using Key = std::tuple<LanguageCode, LanguageCode, LanguageCode, std::string>;
  std::map<Key, CellData> cells;
  for (const auto& p : pairs) {
    if (p.size_budget != size_budget) continue;
    auto& c = cells[{p.l1, p.l2, p.prompt_lang, p.backend_id}];
    if (c.backend_id.empty()) {
      c.l1 = p.l1;
      c.l2 = p.l2;
      c.prompt_lang = p.prompt_lang;
      c.backend_id = p.backend_id;
      auto it = origins.find(p.backend_id);
      c.origin = it == origins.end() ? Origin::Other : it->second;
    }
    if (p.tag == PairTag::L1Win) ++c.wins_l1;
    if (p.tag == PairTag::L2Win) ++c.wins_l2;
  }
  std::vector<CellData> out;
  for (auto& [_, c] : cells) out.push_back(std::move(c));
  return out;
}

// ---------------------------------------------------------------------------
// Summaries

namespace {

double quantile(const std::vector<double>& sorted, double q) {
  if (sorted.empty()) return 0.0;
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

double mean_of(std::span<const double> x) {
  return x.empty() ? 0.0 : std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

double variance_of(std::span<const double> x) {
  if (x.size() < 2) return 0.0;
  const double m = mean_of(x);
  double s = 0;
  for (double v : x) s += (v - m) * (v - m);
  return s / static_cast<double>(x.size() - 1);
}

// Halves of every chain, equal length.
std::vector<std::span<const double>> split_chains(std::span<const std::vector<double>> chains) {
  std::size_t n = SIZE_MAX;
  for (const auto& c : chains) n = std::min(n, c.size());
  const std::size_t half = n / 2;
  std::vector<std::span<const double>> out;
  for (const auto& c : chains) {
    out.emplace_back(c.data(), half);
    out.emplace_back(c.data() + (n - half), half);
  }
  return out;
}

void rhat_and_ess(std::span<const std::vector<double>> chains, double& rhat, double& ess) {
  const auto parts = split_chains(chains);
  const std::size_t m = parts.size();
  const std::size_t n = m ? parts[0].size() : 0;
  if (m < 2 || n < 4) {
    rhat = std::numeric_limits<double>::quiet_NaN();
    ess = 0;
    return;
  }
  std::vector<double> means(m), vars(m);
  for (std::size_t j = 0; j < m; ++j) {
    means[j] = mean_of(parts[j]);
    vars[j] = variance_of(parts[j]);
  }
  const double w = mean_of(vars);
  const double b_over_n = variance_of(means);
  const double var_plus = (static_cast<double>(n) - 1) / static_cast<double>(n) * w + b_over_n;
  if (w <= 0.0) {
    rhat = 1.0;
    ess = static_cast<double>(m * n);
    return;
  }
  rhat = std::sqrt(var_plus / w);

  // Multi-chain autocorrelation with Geyer's initial monotone sequence.
  auto acov = [&](std::size_t lag) {
    double total = 0;
    for (std::size_t j = 0; j < m; ++j) {
      double s = 0;
      for (std::size_t t = 0; t + lag < n; ++t) s += (parts[j][t] - means[j]) * (parts[j][t + lag] - means[j]);
      total += s / static_cast<double>(n);
    }
    return total / static_cast<double>(m);
  };
  auto rho = [&](std::size_t lag) { return 1.0 - (w * (n - 1.0) / n - acov(lag)) / var_plus; };
  double tau = -1.0;
  double prev_pair = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; 2 * k + 1 < n; ++k) {
    double pair = rho(2 * k) + rho(2 * k + 1);
    if (pair <= 0) break;
    pair = std::min(pair, prev_pair);
    prev_pair = pair;
    tau += 2.0 * pair;
  }
  tau = std::max(tau, 1.0 / std::log10(static_cast<double>(m * n)));
  ess = static_cast<double>(m * n) / tau;
}

}  // namespace

ParamSummary summarize_draws(std::span<const std::vector<double>> chains) {
  std::vector<double> all;
  for (const auto& c : chains) all.insert(all.end(), c.begin(), c.end());
  ParamSummary s;
  if (all.empty()) return s;
  s.mean = mean_of(all);
  s.p_positive = static_cast<double>(std::count_if(all.begin(), all.end(), [](double v) { return v > 0; })) /
                 static_cast<double>(all.size());
  std::sort(all.begin(), all.end());
  s.median = quantile(all, 0.5);
  s.lower = quantile(all, 0.025);
  s.upper = quantile(all, 0.975);
  rhat_and_ess(chains, s.rhat, s.ess);
  return s;
}

// ---------------------------------------------------------------------------
// Sampler

namespace {

double log_sigmoid(double x) { return x >= 0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x)); }

struct Model {
  std::vector<int> cell_group;
  std::vector<double> w1, w2;
  std::vector<std::vector<int>> group_cells;
  double prior_var = 1e4;
  double scale_prior_var = 1e4;
  bool collapsed = false;

  double loglik(int c, double eta) const { return w1[c] * log_sigmoid(eta) + w2[c] * log_sigmoid(-eta); }
  double log_prior_b(double b) const { return -0.5 * b * b / prior_var; }
  // Density of log s: half-normal on s plus the log-Jacobian.
  double log_prior_ls(double ls) const {
    const double s = std::exp(ls);
    return -0.5 * s * s / scale_prior_var + ls;
  }
};

class Normal01 {
 public:
  explicit Normal01(SplitMix64& rng) : rng_(rng) {}
  double operator()() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = 0;
    while (u1 <= 0) u1 = rng_.uniform();
    const double u2 = rng_.uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    spare_ = r * std::sin(2.0 * M_PI * u2);
    has_spare_ = true;
    return r * std::cos(2.0 * M_PI * u2);
  }

 private:
  SplitMix64& rng_;
  double spare_ = 0;
  bool has_spare_ = false;
};

struct ChainOutput {
  std::vector<std::vector<double>> b;  // [group][iteration]
  std::vector<double> s;
  double accepted = 0;
  double proposed = 0;
};

struct Adaptive {
  double scale = 1.0;
  int accepted = 0;
  int proposed = 0;

  void record(bool ok) {
    ++proposed;
    accepted += ok ? 1 : 0;
  }
  void adapt(double target) {
    if (proposed == 0) return;
    const double rate = static_cast<double>(accepted) / proposed;
    scale *= std::exp(2.0 * (rate - target));
    scale = std::clamp(scale, 1e-4, 1e4);
    accepted = proposed = 0;
  }
};

ChainOutput run_chain(const Model& model, const MCMCConfig& cfg, int chain_index) {
  const int G = static_cast<int>(model.group_cells.size());
  const int C = static_cast<int>(model.cell_group.size());
  SplitMix64 init_rng(fnv1a64(std::to_string(cfg.seed) + "|init|" + std::to_string(chain_index)));
  SplitMix64 rng(fnv1a64(std::to_string(cfg.seed) + "|chain|" + std::to_string(chain_index)));
  Normal01 normal(rng);
  const double sign = cfg.mirror_init ? -1.0 : 1.0;

  std::vector<double> b(G), z(C), eta(C), ll(C);
  for (auto& v : b) v = sign * (2.0 * init_rng.uniform() - 1.0);
  for (auto& v : z) v = sign * (2.0 * init_rng.uniform() - 1.0);
  double ls = std::log(0.5 + init_rng.uniform());
  double s = model.collapsed ? 0.0 : std::exp(ls);
  for (int c = 0; c < C; ++c) {
    eta[c] = b[model.cell_group[c]] + s * z[c];
    ll[c] = model.loglik(c, eta[c]);
  }

  std::vector<Adaptive> a_z(C), a_b(G), a_bc(G);
  Adaptive a_s{0.5}, a_sc{0.5};
  auto accept = [&](double log_ratio) { return log_ratio >= 0 || std::log(rng.uniform()) < log_ratio; };

  ChainOutput out;
  out.b.assign(G, {});
  for (auto& v : out.b) v.reserve(cfg.samples);
  out.s.reserve(cfg.samples);
  std::vector<double> new_ll;

  const int total = cfg.warmup + cfg.samples;
  for (int it = 0; it < total; ++it) {
    const bool sampling = it >= cfg.warmup;
    auto tally = [&](Adaptive& a, bool ok) {
      a.record(ok);
      if (sampling) {
        out.proposed += 1;
        out.accepted += ok ? 1 : 0;
      }
    };

    if (!model.collapsed) {
      // Cell effects.
      for (int c = 0; c < C; ++c) {
        const double zn = z[c] + a_z[c].scale * normal();
        const double en = b[model.cell_group[c]] + s * zn;
        const double lln = model.loglik(c, en);
        const bool ok = accept(lln - ll[c] - 0.5 * (zn * zn - z[c] * z[c]));
        if (ok) z[c] = zn, eta[c] = en, ll[c] = lln;
        tally(a_z[c], ok);
      }
    }

    for (int g = 0; g < G; ++g) {
      const auto& cells = model.group_cells[g];
      // Group mean with cell effects fixed: every cell in the group moves.
      {
        const double d = a_b[g].scale * normal();
        double delta = model.log_prior_b(b[g] + d) - model.log_prior_b(b[g]);
        new_ll.resize(cells.size());
        for (std::size_t i = 0; i < cells.size(); ++i) {
          const int c = cells[i];
          new_ll[i] = model.loglik(c, eta[c] + d);
          delta += new_ll[i] - ll[c];
        }
        const bool ok = accept(delta);
        if (ok) {
          b[g] += d;
          for (std::size_t i = 0; i < cells.size(); ++i) eta[cells[i]] += d, ll[cells[i]] = new_ll[i];
        }
        tally(a_b[g], ok);
      }
      // Group mean with cell values fixed: z absorbs the shift.
      if (!model.collapsed && !cells.empty()) {
        const double d = a_bc[g].scale * normal();
        double delta = model.log_prior_b(b[g] + d) - model.log_prior_b(b[g]);
        for (int c : cells) {
          const double zn = z[c] - d / s;
          delta -= 0.5 * (zn * zn - z[c] * z[c]);
        }
        const bool ok = accept(delta);
        if (ok) {
          b[g] += d;
          for (int c : cells) z[c] -= d / s;
        }
        tally(a_bc[g], ok);
      }
    }

    if (!model.collapsed) {
      // Scale with z fixed.
      {
        const double lsn = ls + a_s.scale * normal();
        const double sn = std::exp(lsn);
        double delta = model.log_prior_ls(lsn) - model.log_prior_ls(ls);
        new_ll.resize(C);
        for (int c = 0; c < C; ++c) {
          new_ll[c] = model.loglik(c, b[model.cell_group[c]] + sn * z[c]);
          delta += new_ll[c] - ll[c];
        }
        const bool ok = accept(delta);
        if (ok) {
          ls = lsn, s = sn;
          for (int c = 0; c < C; ++c) eta[c] = b[model.cell_group[c]] + s * z[c], ll[c] = new_ll[c];
        }
        tally(a_s, ok);
      }
      // Scale with cell values fixed: z rescales by s / s'.
      {
        const double e = a_sc.scale * normal();
        const double factor = std::exp(-e);
        double delta = model.log_prior_ls(ls + e) - model.log_prior_ls(ls) - e * C;
        for (int c = 0; c < C; ++c) delta -= 0.5 * z[c] * z[c] * (factor * factor - 1.0);
        const bool ok = accept(delta);
        if (ok) {
          ls += e;
          s = std::exp(ls);
          for (auto& v : z) v *= factor;
        }
        tally(a_sc, ok);
      }
    }

    if (!sampling && (it + 1) % 50 == 0) {
      for (auto* group : {&a_z, &a_b, &a_bc}) {
        for (auto& a : *group) a.adapt(cfg.target_accept);
      }
      a_s.adapt(cfg.target_accept);
      a_sc.adapt(cfg.target_accept);
    }
    if (sampling) {
      for (int g = 0; g < G; ++g) out.b[g].push_back(b[g]);
      out.s.push_back(s);
    }
  }
  return out;
}

}  // namespace

PosteriorFit fit_hierarchical(std::span<const CellData> cells, Variant variant, const MCMCConfig& cfg) {
  if (cfg.chains < 1 || cfg.samples < 1 || cfg.warmup < 0) throw ArgumentError("invalid MCMC configuration");

  std::map<GroupKey, int> group_index;
  for (const auto& c : cells) {
    if (!(c.l1 < c.l2)) throw ArgumentError("cell languages must be in canonical order (" + c.l1.str() + ", " + c.l2.str() + ")");
    GroupKey key{variant == Variant::ByOrigin ? std::optional(c.origin) : std::nullopt, c.l1, c.l2};
    group_index.emplace(key, 0);
  }
  int next = 0;
  for (auto& [_, idx] : group_index) idx = next++;

  Model model;
  model.prior_var = cfg.prior_sd * cfg.prior_sd;
  model.scale_prior_var = cfg.scale_prior_sd * cfg.scale_prior_sd;
  model.collapsed = cfg.collapse_cells;
  model.group_cells.assign(group_index.size(), {});
  for (const auto& c : cells) {
    GroupKey key{variant == Variant::ByOrigin ? std::optional(c.origin) : std::nullopt, c.l1, c.l2};
    const int g = group_index.at(key);
    model.group_cells[g].push_back(static_cast<int>(model.cell_group.size()));
    model.cell_group.push_back(g);
    model.w1.push_back(c.wins_l1);
    model.w2.push_back(c.wins_l2);
  }

  std::vector<ChainOutput> outputs(cfg.chains);
  std::vector<std::thread> threads;
  for (int k = 0; k < cfg.chains; ++k) {
    threads.emplace_back([&, k] { outputs[k] = run_chain(model, cfg, k); });
  }
  for (auto& t : threads) t.join();

  PosteriorFit fit;
  fit.variant = variant;
  fit.n_cells = cells.size();
  double acc = 0, prop = 0;
  for (const auto& o : outputs) acc += o.accepted, prop += o.proposed;
  fit.acceptance = prop > 0 ? acc / prop : 0.0;

  for (const auto& [key, g] : group_index) {
    std::vector<std::vector<double>> chains;
    GroupPosterior gp;
    gp.key = key;
    for (const auto& o : outputs) {
      chains.push_back(o.b[g]);
      gp.draws.insert(gp.draws.end(), o.b[g].begin(), o.b[g].end());
    }
    gp.summary = summarize_draws(chains);
    if (!(gp.summary.rhat <= cfg.rhat_limit)) fit.converged = false;
    fit.groups.push_back(std::move(gp));
  }
  std::vector<std::vector<double>> s_chains;
  for (const auto& o : outputs) s_chains.push_back(o.s);
  fit.scale = summarize_draws(s_chains);
  if (!cfg.collapse_cells && !(fit.scale.rhat <= cfg.rhat_limit)) fit.converged = false;
  return fit;
}

// ---------------------------------------------------------------------------
// Origin contrast

std::string_view to_string(SignTier t) {
  switch (t) {
    case SignTier::Strong: return "strong";
    case SignTier::Moderate: return "moderate";
    case SignTier::Weak: return "weak";
  }
  return "weak";
}

SignTier sign_tier(double p_sign) {
  if (p_sign > 0.99) return SignTier::Strong;
  if (p_sign > 0.90) return SignTier::Moderate;
  return SignTier::Weak;
}

std::vector<ContrastSummary> origin_contrast(std::span<const GroupPosterior> east, std::span<const GroupPosterior> west) {
  std::map<std::pair<LanguageCode, LanguageCode>, const GroupPosterior*> w;
  for (const auto& g : west) w[{g.key.l1, g.key.l2}] = &g;
  if (w.size() != east.size()) throw ArgumentError("origin contrast needs the same language pairs for both origins");
  std::vector<ContrastSummary> out;
  for (const auto& e : east) {
    auto it = w.find({e.key.l1, e.key.l2});
    if (it == w.end()) {
      throw ArgumentError("pair " + e.key.l1.str() + "-" + e.key.l2.str() + " has no western estimate");
    }
    const auto& wd = it->second->draws;
    if (wd.size() != e.draws.size()) throw ArgumentError("origin contrast needs draws from one fit");
    std::vector<double> diff(e.draws.size());
    for (std::size_t i = 0; i < diff.size(); ++i) diff[i] = e.draws[i] - wd[i];
    const std::vector<std::vector<double>> one{diff};
    const auto s = summarize_draws(one);
    ContrastSummary c{e.key.l1, e.key.l2, s.median, s.lower, s.upper, s.p_positive, SignTier::Weak};
    c.tier = sign_tier(std::max(s.p_positive, 1.0 - s.p_positive));
    out.push_back(c);
  }
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return std::pair(a.l1, a.l2) < std::pair(b.l1, b.l2); });
  return out;
}

std::vector<ContrastSummary> origin_contrast(const PosteriorFit& fit) {
  if (fit.variant != Variant::ByOrigin) throw ArgumentError("origin contrast needs a by-origin fit");
  std::vector<GroupPosterior> east, west;
  for (const auto& g : fit.groups) {
    if (g.key.origin == Origin::East) east.push_back(g);
    if (g.key.origin == Origin::West) west.push_back(g);
  }
  return origin_contrast(east, west);
}

}  // namespace haystack
