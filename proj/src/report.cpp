#include "haystack/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>
#include <sstream>

#include "haystack/errors.hpp"
#include "haystack/fsutil.hpp"

namespace haystack {

namespace fs = std::filesystem;

namespace {

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  std::string s = buf;
  // Never print a signed zero.
  if (s.size() > 1 && s[0] == '-' && s.find_first_not_of("-0.") == std::string::npos) s.erase(0, 1);
  return s;
}

std::vector<std::string> split_tabs(std::string_view line) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (true) {
    const auto tab = line.find('\t', pos);
    out.emplace_back(line.substr(pos, tab == std::string_view::npos ? std::string_view::npos : tab - pos));
    if (tab == std::string_view::npos) return out;
    pos = tab + 1;
  }
}

std::vector<std::vector<std::string>> tsv_body(std::string_view text, std::size_t columns, std::string_view what) {
  std::vector<std::vector<std::string>> rows;
  std::size_t pos = 0;
  bool header = true;
  std::size_t line_no = 0;
  while (pos < text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    const auto line = text.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    if (line.starts_with('#')) continue;
    if (header) {
      header = false;
      continue;
    }
    if (line.empty()) continue;
    auto cols = split_tabs(line);
    if (cols.size() != columns) {
      throw StoreError(std::string(what) + " line " + std::to_string(line_no) + ": expected " +
                       std::to_string(columns) + " columns");
    }
    rows.push_back(std::move(cols));
  }
  return rows;
}

std::string origin_text(const std::optional<Origin>& o) { return o ? std::string(to_string(*o)) : "-"; }

std::optional<Origin> origin_opt(const std::string& s) {
  if (s == "-") return std::nullopt;
  return origin_from_string(s);
}

std::string gray(const std::string& s) { return "<span style=\"color:gray\">" + s + "</span>"; }

}  // namespace

// ---------------------------------------------------------------------------
// Posterior

std::vector<PosteriorRow> posterior_rows(const PosteriorFit& fit, int size_budget) {
  std::vector<PosteriorRow> rows;
  for (const auto& g : fit.groups) {
    rows.push_back({size_budget, fit.variant, "b", g.key.origin, g.key.l1.str(), g.key.l2.str(), g.summary, fit.converged});
  }
  rows.push_back({size_budget, fit.variant, "s", std::nullopt, "-", "-", fit.scale, fit.converged});
  return rows;
}

std::string posterior_tsv(std::span<const PosteriorRow> rows) {
  std::string out = "size\tvariant\tparameter\torigin\tl1\tl2\tmedian\tmean\tlower\tupper\tp_positive\trhat\tess\tconverged\n";
  for (const auto& r : rows) {
    const auto& s = r.summary;
    out += std::to_string(r.size_budget) + "\t" + std::string(to_string(r.variant)) + "\t" + r.parameter + "\t" +
           origin_text(r.origin) + "\t" + r.l1 + "\t" + r.l2 + "\t" + fmt("%.6f", s.median) + "\t" +
           fmt("%.6f", s.mean) + "\t" + fmt("%.6f", s.lower) + "\t" + fmt("%.6f", s.upper) + "\t" +
           fmt("%.6f", s.p_positive) + "\t" + fmt("%.4f", s.rhat) + "\t" + fmt("%.1f", s.ess) + "\t" +
           (r.converged ? "yes" : "no") + "\n";
  }
  return out;
}

std::vector<PosteriorRow> parse_posterior_tsv(std::string_view text) {
  std::vector<PosteriorRow> out;
  for (const auto& c : tsv_body(text, 14, "posterior.tsv")) {
    PosteriorRow r;
    r.size_budget = std::stoi(c[0]);
    r.variant = variant_from_string(c[1]);
    r.parameter = c[2];
    r.origin = origin_opt(c[3]);
    r.l1 = c[4];
    r.l2 = c[5];
    r.summary = {std::stod(c[6]), std::stod(c[7]), std::stod(c[8]), std::stod(c[9]),
                 std::stod(c[10]), std::stod(c[11]), std::stod(c[12])};
    r.converged = c[13] == "yes";
    out.push_back(std::move(r));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Binomial

std::vector<BinomialRow> binomial_rows(std::span<const PairResult> pairs, int family_size, Sidedness sided) {
  std::map<std::tuple<int, std::string, LanguageCode, LanguageCode>, int> wins;
  std::set<std::tuple<int, std::string, LanguageCode, LanguageCode>> cells;
  for (const auto& p : pairs) {
    cells.insert({p.size_budget, p.backend_id, p.l1, p.l2});
    if (p.tag == PairTag::L1Win) ++wins[{p.size_budget, p.backend_id, p.l1, p.l2}];
    if (p.tag == PairTag::L2Win) ++wins[{p.size_budget, p.backend_id, p.l2, p.l1}];
  }
  std::vector<BinomialRow> out;
  for (const auto& [size, backend, a, b] : cells) {
    const int ab = wins[{size, backend, a, b}];
    const int ba = wins[{size, backend, b, a}];
    for (const auto& [w, l, k] : {std::tuple{a, b, ab}, std::tuple{b, a, ba}}) {
      const int n = ab + ba;
      const double p = binomial_p_value(k, n, sided);
      out.push_back({size, backend, w, l, k, n, p, n > 0 && 2 * k > n && bonferroni_flag(p, family_size)});
    }
  }
  return out;
}

std::string binomial_tsv(std::span<const BinomialRow> rows) {
  std::string out = "size\tbackend\twinner\tloser\tk\tn\tp_value\tsignificant\n";
  for (const auto& r : rows) {
    char p[32];
    std::snprintf(p, sizeof p, "%.6g", r.p_value);
    out += std::to_string(r.size_budget) + "\t" + r.backend_id + "\t" + r.winner.str() + "\t" + r.loser.str() + "\t" +
           std::to_string(r.k) + "\t" + std::to_string(r.n) + "\t" + p + "\t" + (r.significant ? "yes" : "no") + "\n";
  }
  return out;
}

std::string contrast_tsv(std::span<const ContrastRow> rows) {
  std::string out = "size\tl1\tl2\tmedian\tlower\tupper\tp_positive\ttier\n";
  for (const auto& r : rows) {
    const auto& c = r.contrast;
    out += std::to_string(r.size_budget) + "\t" + c.l1.str() + "\t" + c.l2.str() + "\t" + fmt("%.6f", c.median) + "\t" +
           fmt("%.6f", c.lower) + "\t" + fmt("%.6f", c.upper) + "\t" + fmt("%.6f", c.p_positive) + "\t" +
           std::string(to_string(c.tier)) + "\n";
  }
  return out;
}

std::vector<ContrastRow> parse_contrast_tsv(std::string_view text) {
  std::vector<ContrastRow> out;
  for (const auto& c : tsv_body(text, 8, "origin_contrast.tsv")) {
    ContrastSummary s{LanguageCode(c[1]), LanguageCode(c[2]), std::stod(c[3]), std::stod(c[4]),
                      std::stod(c[5]),    std::stod(c[6]),    SignTier::Weak};
    s.tier = sign_tier(std::max(s.p_positive, 1.0 - s.p_positive));
    out.push_back({std::stoi(c[0]), s});
  }
  return out;
}

fs::path analysis_dir(const fs::path& workspace, const std::string& run_id, Variant v) {
  return workspace / "analysis" / run_id / std::string(to_string(v));
}

// ---------------------------------------------------------------------------
// Win matrices

std::string_view to_string(CellStyle s) {
  switch (s) {
    case CellStyle::WinnerBold: return "winner-bold";
    case CellStyle::LoserPlain: return "loser-plain";
    case CellStyle::TieGray: return "tie-gray";
    case CellStyle::Diagonal: return "diagonal";
  }
  return "tie-gray";
}

WinMatrix win_matrix(std::span<const PairResult> pairs, const std::string& backend_id, int size_budget,
                     std::span<const LanguageCode> languages, int family_size, Sidedness sided) {
  const std::size_t L = languages.size();
  WinMatrix m;
  m.backend_id = backend_id;
  m.size_budget = size_budget;
  m.languages.assign(languages.begin(), languages.end());
  m.counts.assign(L, std::vector<int>(L, 0));
  m.styles.assign(L, std::vector<CellStyle>(L, CellStyle::TieGray));
  m.p_values.assign(L, std::vector<double>(L, 1.0));
  m.row_sums.assign(L, 0);
  auto index = [&](const LanguageCode& c) -> std::optional<std::size_t> {
    auto it = std::find(languages.begin(), languages.end(), c);
    if (it == languages.end()) return std::nullopt;
    return static_cast<std::size_t>(it - languages.begin());
  };
  for (const auto& p : pairs) {
    if (p.backend_id != backend_id || p.size_budget != size_budget) continue;
    const auto a = index(p.l1), b = index(p.l2);
    if (!a || !b) continue;
    if (p.tag == PairTag::L1Win) ++m.counts[*a][*b];
    if (p.tag == PairTag::L2Win) ++m.counts[*b][*a];
  }
  for (std::size_t i = 0; i < L; ++i) {
    m.styles[i][i] = CellStyle::Diagonal;
    for (std::size_t j = 0; j < L; ++j) {
      if (i == j) continue;
      m.row_sums[i] += m.counts[i][j];
      const int n = m.counts[i][j] + m.counts[j][i];
      const double p = binomial_p_value(m.counts[i][j], n, sided);
      m.p_values[i][j] = p;
      if (n > 0 && 2 * m.counts[i][j] > n && bonferroni_flag(p, family_size)) {
        m.styles[i][j] = CellStyle::WinnerBold;
        m.styles[j][i] = CellStyle::LoserPlain;
      }
    }
  }
  return m;
}

// ---------------------------------------------------------------------------
// Bias table

std::vector<BiasTableRow> bias_table(std::span<const PosteriorRow> rows, const LanguageRegistry& names) {
  std::vector<const PosteriorRow*> sel;
  for (const auto& r : rows) {
    if (r.parameter == "b") sel.push_back(&r);
  }
  std::sort(sel.begin(), sel.end(), [](const auto* a, const auto* b) { return std::pair(a->l1, a->l2) < std::pair(b->l1, b->l2); });
  std::vector<BiasTableRow> out;
  for (const auto* r : sel) {
    const auto n1 = names.name(LanguageCode(r->l1));
    const auto n2 = names.name(LanguageCode(r->l2));
    const auto& s = r->summary;
    if (s.p_positive >= 0.5) {
      out.push_back({n1 + " vs " + n2, s.p_positive, s.lower, s.upper});
    } else {
      out.push_back({n2 + " vs " + n1, 1.0 - s.p_positive, -s.upper, -s.lower});
    }
  }
  return out;
}

std::string format_bias_row_tsv(const BiasTableRow& row) {
  return row.label + "\t" + fmt("%.1f", 100.0 * row.p) + "%\t[" + fmt("%.2f", row.lower) + ", " + fmt("%.2f", row.upper) + "]";
}

ReportFormat report_format_from_string(std::string_view s) {
  if (s == "tsv") return ReportFormat::Tsv;
  if (s == "markdown" || s == "md") return ReportFormat::Markdown;
  throw ConfigError("unknown report format '" + std::string(s) + "' (expected tsv or markdown)");
}

std::string render_outcome_table(std::span<const OutcomeRow> rows, ReportFormat f) {
  std::ostringstream out;
  if (f == ReportFormat::Tsv) {
    out << "backend\tsize\tmono_both\tmono_none\tmono_one\tmulti_both\tmulti_none\tmulti_one\n";
  } else {
    out << "| Model | Size | Mono Both | Mono None | Mono One | Multi Both | Multi None | Multi One |\n"
        << "|---|---:|---:|---:|---:|---:|---:|---:|\n";
  }
  for (const auto& r : rows) {
    const std::vector<std::string> cols{r.backend_id,
                                        std::to_string(r.size_budget),
                                        std::to_string(r.monolingual.both),
                                        std::to_string(r.monolingual.none),
                                        std::to_string(r.monolingual.one),
                                        std::to_string(r.multilingual.both),
                                        std::to_string(r.multilingual.none),
                                        std::to_string(r.multilingual.one)};
    for (std::size_t i = 0; i < cols.size(); ++i) {
      if (f == ReportFormat::Tsv) {
        out << (i ? "\t" : "") << cols[i];
      } else {
        out << "| " << cols[i] << " ";
      }
    }
    out << (f == ReportFormat::Tsv ? "\n" : "|\n");
  }
  return out.str();
}

std::string render_win_matrix(const WinMatrix& m, ReportFormat f) {
  std::ostringstream out;
  const std::size_t L = m.languages.size();
  if (f == ReportFormat::Tsv) {
    out << "backend\tsize\trow\tcolumn\tcount\tstyle\tp_value\n";
    for (std::size_t i = 0; i < L; ++i) {
      for (std::size_t j = 0; j < L; ++j) {
        if (i == j) continue;
        char p[32];
        std::snprintf(p, sizeof p, "%.6g", m.p_values[i][j]);
        out << m.backend_id << '\t' << m.size_budget << '\t' << m.languages[i].str() << '\t' << m.languages[j].str()
            << '\t' << m.counts[i][j] << '\t' << to_string(m.styles[i][j]) << '\t' << p << '\n';
      }
      out << m.backend_id << '\t' << m.size_budget << '\t' << m.languages[i].str() << "\tsum\t" << m.row_sums[i]
          << "\t-\t-\n";
    }
    return out.str();
  }
  out << "**" << m.backend_id << "**, size " << m.size_budget << "\n\n|  |";
  for (const auto& l : m.languages) out << ' ' << l.str() << " |";
  out << " Σ |\n|---|";
  for (std::size_t j = 0; j <= L; ++j) out << "---:|";
  out << '\n';
  for (std::size_t i = 0; i < L; ++i) {
    out << "| " << m.languages[i].str() << " |";
    for (std::size_t j = 0; j < L; ++j) {
      const auto v = std::to_string(m.counts[i][j]);
      switch (m.styles[i][j]) {
        case CellStyle::Diagonal: out << " -- |"; break;
        case CellStyle::WinnerBold: out << " **" << v << "** |"; break;
        case CellStyle::LoserPlain: out << ' ' << v << " |"; break;
        case CellStyle::TieGray: out << ' ' << gray(v) << " |"; break;
      }
    }
    out << ' ' << m.row_sums[i] << " |\n";
  }
  return out.str();
}

std::string render_bias_table(std::span<const BiasTableRow> rows, ReportFormat f) {
  std::string out;
  if (f == ReportFormat::Tsv) {
    out = "Language pair\tP(> 0)\t95% CI\n";
    for (const auto& r : rows) out += format_bias_row_tsv(r) + "\n";
    return out;
  }
  out = "| Language pair | P(> 0) | 95% CI |\n|---|---:|---|\n";
  for (const auto& r : rows) {
    out += "| " + r.label + " | " + fmt("%.1f", 100.0 * r.p) + "% | [" + fmt("%.2f", r.lower) + ", " +
           fmt("%.2f", r.upper) + "] |\n";
  }
  return out;
}

std::string render_signed_matrix(std::span<const SignedEntry> entries, std::span<const LanguageCode> languages,
                                 ReportFormat f) {
  std::map<std::pair<LanguageCode, LanguageCode>, std::pair<double, double>> cell;  // median, P(> 0)
  for (const auto& e : entries) {
    cell[{e.l1, e.l2}] = {e.median, e.p_positive};
    cell[{e.l2, e.l1}] = {-e.median, 1.0 - e.p_positive};
  }
  std::ostringstream out;
  if (f == ReportFormat::Tsv) {
    out << "row\tcolumn\tmedian\ttier\n";
    for (const auto& a : languages) {
      for (const auto& b : languages) {
        auto it = cell.find({a, b});
        if (a == b || it == cell.end()) continue;
        const auto [med, p] = it->second;
        out << a.str() << '\t' << b.str() << '\t' << fmt("%.1f", med) << '\t' << to_string(sign_tier(std::max(p, 1 - p)))
            << '\n';
      }
    }
    return out.str();
  }
  out << "|  |";
  for (const auto& l : languages) out << ' ' << l.str() << " |";
  out << "\n|---|";
  for (std::size_t j = 0; j < languages.size(); ++j) out << "---:|";
  out << '\n';
  for (const auto& a : languages) {
    out << "| " << a.str() << " |";
    for (const auto& b : languages) {
      auto it = cell.find({a, b});
      if (a == b || it == cell.end()) {
        out << "  |";
        continue;
      }
      const auto [med, p] = it->second;
      const auto v = fmt("%.1f", med);
      switch (sign_tier(std::max(p, 1 - p))) {
        case SignTier::Strong: out << " **" << v << "** |"; break;
        case SignTier::Moderate: out << ' ' << v << " |"; break;
        case SignTier::Weak: out << ' ' << gray(v) << " |"; break;
      }
    }
    out << '\n';
  }
  return out.str();
}

// ---------------------------------------------------------------------------
// Orchestration

namespace {

void require(const fs::path& p, std::string_view subcommand) {
  if (!fs::exists(p)) {
    throw StoreError("missing " + p.string() + "; run `" + std::string(subcommand) + "` first");
  }
}

}  // namespace

std::vector<fs::path> render_tables(const fs::path& workspace, const std::string& run_id, const fs::path& out,
                                    ReportFormat format, const LanguageRegistry& names, int family_size,
                                    Sidedness sided) {
  const auto classified = classified_file(workspace, run_id);
  const auto pairs_path = pairs_file(workspace, run_id);
  require(classified, "classify");
  require(pairs_path, "classify");
  const auto pooled_dir = analysis_dir(workspace, run_id, Variant::Pooled);
  const auto origin_dir = analysis_dir(workspace, run_id, Variant::ByOrigin);
  if (!fs::exists(pooled_dir / "posterior.tsv") && !fs::exists(origin_dir / "posterior.tsv")) {
    require(pooled_dir / "posterior.tsv", "analyze");
  }

  const std::string ext = format == ReportFormat::Tsv ? ".tsv" : ".md";
  std::vector<fs::path> written;
  auto emit = [&](const std::string& name, const std::string& body) {
    const auto p = out / (name + ext);
    write_file_atomic(p, body);
    written.push_back(p);
  };

  const auto records = read_classified(classified);
  const auto summary = outcome_summary(records);
  std::set<int> sizes;
  std::set<std::string> backends;
  std::set<LanguageCode> langs;
  for (const auto& r : records) {
    sizes.insert(r.config.size_budget);
    backends.insert(r.backend_id);
    langs.insert(r.config.l1);
  }
  const std::vector<LanguageCode> languages(langs.begin(), langs.end());

  for (int size : sizes) {
    std::vector<OutcomeRow> rows;
    for (const auto& r : summary) {
      if (r.size_budget == size) rows.push_back(r);
    }
    emit("outcomes_" + std::to_string(size), render_outcome_table(rows, format));
  }

  const auto pairs = read_pairs(pairs_path);
  for (int size : sizes) {
    for (const auto& b : backends) {
      emit("wins_" + b + "_" + std::to_string(size),
           render_win_matrix(win_matrix(pairs, b, size, languages, family_size, sided), format));
    }
  }

  if (fs::exists(pooled_dir / "posterior.tsv")) {
    const auto rows = parse_posterior_tsv(read_file(pooled_dir / "posterior.tsv"));
    std::set<int> psizes;
    for (const auto& r : rows) psizes.insert(r.size_budget);
    for (int size : psizes) {
      std::vector<PosteriorRow> sel;
      for (const auto& r : rows) {
        if (r.size_budget == size) sel.push_back(r);
      }
      emit("bias_pooled_" + std::to_string(size), render_bias_table(bias_table(sel, names), format));
    }
  }

  if (fs::exists(origin_dir / "posterior.tsv")) {
    const auto rows = parse_posterior_tsv(read_file(origin_dir / "posterior.tsv"));
    std::map<std::pair<int, Origin>, std::vector<SignedEntry>> by;
    for (const auto& r : rows) {
      if (r.parameter != "b" || !r.origin) continue;
      by[{r.size_budget, *r.origin}].push_back(
          {LanguageCode(r.l1), LanguageCode(r.l2), r.summary.median, r.summary.p_positive});
    }
    for (const auto& [key, entries] : by) {
      emit("bias_" + std::string(to_string(key.second)) + "_" + std::to_string(key.first),
           render_signed_matrix(entries, languages, format));
    }
    if (fs::exists(origin_dir / "origin_contrast.tsv")) {
      std::map<int, std::vector<SignedEntry>> contrast;
      for (const auto& r : parse_contrast_tsv(read_file(origin_dir / "origin_contrast.tsv"))) {
        contrast[r.size_budget].push_back({r.contrast.l1, r.contrast.l2, r.contrast.median, r.contrast.p_positive});
      }
      for (const auto& [size, entries] : contrast) {
        emit("origin_contrast_" + std::to_string(size), render_signed_matrix(entries, languages, format));
      }
    }
  }
  std::sort(written.begin(), written.end());
  return written;
}

}  // namespace haystack
