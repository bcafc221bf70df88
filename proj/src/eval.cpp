#include "spantag/eval.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>
#include <tuple>
#include <unordered_map>

namespace spantag {

MetricCell make_cell(double tp, double pred, double gold) {
  if (pred == 0.0 && gold == 0.0) return {1.0, 1.0, 1.0};
  MetricCell c;
  c.precision = pred > 0.0 ? tp / pred : 0.0;
  c.recall = gold > 0.0 ? tp / gold : 0.0;
  const double s = c.precision + c.recall;
  c.f1 = s > 0.0 ? 2.0 * c.precision * c.recall / s : 0.0;
  return c;
}

namespace {

using SpanKey = std::tuple<std::string, std::size_t, std::size_t>;

void check_single_type(std::span<const EntitySpan> gold, std::span<const EntitySpan> pred) {
  const EntitySpan* first = !gold.empty() ? &gold.front() : (!pred.empty() ? &pred.front() : nullptr);
  if (!first) return;
  const std::string type = canonical_entity_type(first->entity_type);
  auto check = [&](std::span<const EntitySpan> spans) {
    for (const auto& s : spans) {
      if (canonical_entity_type(s.entity_type) != type) {
        throw Error("metrics expect a single entity type, got " + type + " and " + s.entity_type);
      }
    }
  };
  check(gold);
  check(pred);
}

std::set<SpanKey> key_set(std::span<const EntitySpan> spans) {
  std::set<SpanKey> keys;
  for (const auto& s : spans) keys.emplace(s.doc_id, s.start, s.end);
  return keys;
}

using Interval = std::pair<std::size_t, std::size_t>;

// Sorted, disjoint, non-adjacent-merged intervals covering the same chars.
std::vector<Interval> merge(std::vector<Interval> v) {
  std::sort(v.begin(), v.end());
  std::vector<Interval> out;
  for (const auto& iv : v) {
    if (!out.empty() && iv.first <= out.back().second) {
      out.back().second = std::max(out.back().second, iv.second);
    } else {
      out.push_back(iv);
    }
  }
  return out;
}

std::size_t covered(const std::vector<Interval>& v) {
  std::size_t n = 0;
  for (const auto& iv : v) n += iv.second - iv.first;
  return n;
}

std::size_t intersection(const std::vector<Interval>& a, const std::vector<Interval>& b) {
  std::size_t i = 0, j = 0, n = 0;
  while (i < a.size() && j < b.size()) {
    const std::size_t lo = std::max(a[i].first, b[j].first);
    const std::size_t hi = std::min(a[i].second, b[j].second);
    if (lo < hi) n += hi - lo;
    if (a[i].second < b[j].second) ++i;
    else ++j;
  }
  return n;
}

}  // namespace

StrictCounts strict_counts(std::span<const EntitySpan> gold, std::span<const EntitySpan> pred) {
  check_single_type(gold, pred);
  const auto g = key_set(gold);
  const auto p = key_set(pred);
  StrictCounts c;
  c.gold = g.size();
  c.pred = p.size();
  for (const auto& k : p) c.tp += g.count(k);
  return c;
}

MetricCell strict_metrics(std::span<const EntitySpan> gold, std::span<const EntitySpan> pred) {
  const StrictCounts c = strict_counts(gold, pred);
  return make_cell(static_cast<double>(c.tp), static_cast<double>(c.pred),
                   static_cast<double>(c.gold));
}

CharCounts char_counts(std::span<const EntitySpan> gold, std::span<const EntitySpan> pred,
                       const Corpus& docs) {
  check_single_type(gold, pred);
  std::map<std::string, std::pair<std::vector<Interval>, std::vector<Interval>>> by_doc;
  auto collect = [&](std::span<const EntitySpan> spans, bool is_gold) {
    for (const auto& s : spans) {
      const Document* d = docs.find(s.doc_id);
      if (!d) throw Error("span references unknown document " + s.doc_id);
      if (s.start >= s.end || s.end > d->length()) {
        throw Error("span [" + std::to_string(s.start) + "," + std::to_string(s.end) +
                    ") is out of bounds for document " + s.doc_id);
      }
      auto& slot = by_doc[s.doc_id];
      (is_gold ? slot.first : slot.second).emplace_back(s.start, s.end);
    }
  };
  collect(gold, true);
  collect(pred, false);
  CharCounts c;
  for (auto& [id, sets] : by_doc) {
    const auto g = merge(std::move(sets.first));
    const auto p = merge(std::move(sets.second));
    c.gold += covered(g);
    c.pred += covered(p);
    c.overlap += intersection(g, p);
  }
  return c;
}

MetricCell char_metrics(std::span<const EntitySpan> gold, std::span<const EntitySpan> pred,
                        const Corpus& docs) {
  const CharCounts c = char_counts(gold, pred, docs);
  return make_cell(static_cast<double>(c.overlap), static_cast<double>(c.pred),
                   static_cast<double>(c.gold));
}

MeanStd aggregate(std::span<const double> values) {
  if (values.size() < 2) throw Error("aggregate needs at least 2 values");
  const double n = static_cast<double>(values.size());
  double sum = 0.0;
  for (double v : values) sum += v;
  MeanStd out;
  out.mean = sum / n;
  double ss = 0.0;
  for (double v : values) ss += (v - out.mean) * (v - out.mean);
  out.std = std::sqrt(ss / n);
  return out;
}

std::map<std::string, int> rank_systems(const std::map<std::string, double>& scores,
                                        bool higher_better) {
  if (scores.empty()) throw Error("rank_systems needs at least one system");
  std::vector<std::pair<double, std::string>> sorted;
  for (const auto& [name, score] : scores) {
    if (std::isnan(score)) throw Error("score of system " + name + " is NaN");
    sorted.emplace_back(higher_better ? -score : score, name);
  }
  std::sort(sorted.begin(), sorted.end());
  std::map<std::string, int> ranks;
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    const bool tied = i > 0 && sorted[i].first == sorted[i - 1].first;
    ranks[sorted[i].second] = tied ? ranks[sorted[i - 1].second] : static_cast<int>(i) + 1;
  }
  return ranks;
}

std::string_view metric_key(Metric m) {
  switch (m) {
    case Metric::kCharR: return "char_r";
    case Metric::kCharP: return "char_p";
    case Metric::kCharF1: return "char_f1";
    case Metric::kStrictR: return "strict_r";
    case Metric::kStrictP: return "strict_p";
    case Metric::kStrictF1: return "strict_f1";
  }
  return "";
}

std::string_view metric_label(Metric m) {
  switch (m) {
    case Metric::kCharR: return "Char R";
    case Metric::kCharP: return "Char P";
    case Metric::kCharF1: return "Char F1";
    case Metric::kStrictR: return "Strict R";
    case Metric::kStrictP: return "Strict P";
    case Metric::kStrictF1: return "Strict F1";
  }
  return "";
}

Metric parse_metric(std::string_view key) {
  for (Metric m : kAllMetrics) {
    if (metric_key(m) == key) return m;
  }
  throw Error("unknown metric '" + std::string(key) + "'");
}

double CellReport::value(Metric m) const {
  switch (m) {
    case Metric::kCharR: return chr.recall;
    case Metric::kCharP: return chr.precision;
    case Metric::kCharF1: return chr.f1;
    case Metric::kStrictR: return strict.recall;
    case Metric::kStrictP: return strict.precision;
    case Metric::kStrictF1: return strict.f1;
  }
  return 0.0;
}

MetricsReport build_report(std::span<const EntitySpan> gold, std::span<const EntitySpan> pred,
                           const Corpus& docs, std::vector<std::string> languages,
                           std::vector<std::string> entity_types, unsigned jobs) {
  MetricsReport report;
  std::set<std::string> seen_types;
  auto note = [&](std::span<const EntitySpan> spans) {
    for (const auto& s : spans) {
      if (!docs.find(s.doc_id)) {
        throw Error((s.origin.empty() ? "span" : s.origin) + ": unknown document " + s.doc_id);
      }
      if (is_entity_type_alias(s.entity_type)) {
        report.aliases[s.entity_type] = canonical_entity_type(s.entity_type);
      }
      seen_types.insert(canonical_entity_type(s.entity_type));
    }
  };
  note(gold);
  note(pred);

  if (languages.empty()) {
    std::set<std::string> langs;
    for (const auto& d : docs.docs) langs.insert(d.lang);
    languages.assign(langs.begin(), langs.end());
  }
  if (entity_types.empty()) {
    entity_types.assign(seen_types.begin(), seen_types.end());
  } else {
    for (auto& t : entity_types) {
      if (is_entity_type_alias(t)) report.aliases[t] = canonical_entity_type(t);
      t = canonical_entity_type(t);
    }
  }
  report.languages = languages;
  report.entity_types = entity_types;

  // Bucket spans by (lang, type) once.
  using Bucket = std::pair<std::vector<EntitySpan>, std::vector<EntitySpan>>;
  std::map<std::pair<std::string, std::string>, Bucket> buckets;
  auto fill = [&](std::span<const EntitySpan> spans, bool is_gold) {
    for (const auto& s : spans) {
      EntitySpan c = s;
      c.entity_type = canonical_entity_type(s.entity_type);
      auto& b = buckets[{docs.find(s.doc_id)->lang, c.entity_type}];
      (is_gold ? b.first : b.second).push_back(std::move(c));
    }
  };
  fill(gold, true);
  fill(pred, false);

  std::vector<std::pair<std::string, std::string>> keys;
  for (const auto& l : languages) {
    for (const auto& t : entity_types) keys.emplace_back(l, t);
  }
  std::vector<CellReport> results(keys.size());
  static const Bucket kEmpty;
  auto score = [&](std::size_t k) {
    auto it = buckets.find(keys[k]);
    const Bucket& b = it == buckets.end() ? kEmpty : it->second;
    CellReport& cell = results[k];
    cell.strict_support = strict_counts(b.first, b.second);
    cell.char_support = char_counts(b.first, b.second, docs);
    cell.strict = make_cell(static_cast<double>(cell.strict_support.tp),
                            static_cast<double>(cell.strict_support.pred),
                            static_cast<double>(cell.strict_support.gold));
    cell.chr = make_cell(static_cast<double>(cell.char_support.overlap),
                         static_cast<double>(cell.char_support.pred),
                         static_cast<double>(cell.char_support.gold));
  };
  if (jobs <= 1 || keys.size() <= 1) {
    for (std::size_t k = 0; k < keys.size(); ++k) score(k);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> workers;
    std::exception_ptr failure;
    std::mutex failure_mu;
    for (unsigned w = 0; w < jobs; ++w) {
      workers.emplace_back([&] {
        try {
          for (std::size_t k; (k = next.fetch_add(1)) < keys.size();) score(k);
        } catch (...) {
          std::lock_guard lock(failure_mu);
          if (!failure) failure = std::current_exception();
        }
      });
    }
    for (auto& w : workers) w.join();
    if (failure) std::rethrow_exception(failure);
  }
  for (std::size_t k = 0; k < keys.size(); ++k) {
    report.cells[keys[k].first][keys[k].second] = results[k];
  }

  if (languages.size() >= 2) {
    for (const auto& t : entity_types) {
      for (Metric m : kAllMetrics) {
        std::vector<double> values;
        for (const auto& l : languages) values.push_back(report.cells[l][t].value(m));
        report.aggregates[t][m] = aggregate(values);
      }
    }
  }
  return report;
}

nlohmann::json report_to_json(const MetricsReport& report) {
  using nlohmann::json;
  json cells = json::object();
  for (const auto& [lang, by_type] : report.cells) {
    for (const auto& [type, c] : by_type) {
      cells[lang][type] = {
          {"strict", {{"p", c.strict.precision}, {"r", c.strict.recall}, {"f1", c.strict.f1}}},
          {"char", {{"p", c.chr.precision}, {"r", c.chr.recall}, {"f1", c.chr.f1}}},
          {"support",
           {{"gold_spans", c.strict_support.gold},
            {"pred_spans", c.strict_support.pred},
            {"strict_tp", c.strict_support.tp},
            {"gold_chars", c.char_support.gold},
            {"pred_chars", c.char_support.pred},
            {"overlap_chars", c.char_support.overlap}}}};
    }
  }
  json aggs = json::object();
  for (const auto& [type, by_metric] : report.aggregates) {
    for (const auto& [m, ms] : by_metric) {
      aggs[type][std::string(metric_key(m))] = {{"mean", ms.mean}, {"std", ms.std}};
    }
  }
  json out = {{"cells", cells}, {"aggregates", aggs}};
  if (!report.aliases.empty()) out["type_aliases"] = report.aliases;
  return out;
}

namespace {

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

// Display width in codepoints (the table only contains '±' beyond ASCII).
std::size_t display_width(const std::string& s) {
  std::size_t n = 0;
  for (unsigned char c : s) n += (c & 0xC0) != 0x80;
  return n;
}

std::string render_grid(const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> widths;
  for (const auto& r : rows) {
    if (widths.size() < r.size()) widths.resize(r.size(), 0);
    for (std::size_t c = 0; c < r.size(); ++c) widths[c] = std::max(widths[c], display_width(r[c]));
  }
  std::ostringstream out;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t c = 0; c < rows[i].size(); ++c) {
      if (c) out << "  ";
      out << rows[i][c];
      if (c + 1 < rows[i].size()) out << std::string(widths[c] - display_width(rows[i][c]), ' ');
    }
    out << '\n';
    if (i == 0) {
      std::size_t total = 0;
      for (auto w : widths) total += w;
      out << std::string(total + 2 * (widths.size() - 1), '-') << '\n';
    }
  }
  return out.str();
}

std::vector<std::string> header_row(std::string first, std::string second = {}) {
  std::vector<std::string> row{std::move(first)};
  if (!second.empty()) row.push_back(std::move(second));
  for (Metric m : kAllMetrics) row.emplace_back(metric_label(m));
  return row;
}

std::string alias_note(const std::map<std::string, std::string>& aliases) {
  std::string out;
  for (const auto& [from, to] : aliases) out += "note: entity type " + from + " read as " + to + "\n";
  return out;
}

}  // namespace

std::string render_report_table(const MetricsReport& report, int digits) {
  std::string out;
  if (!report.aggregates.empty()) {
    std::vector<std::vector<std::string>> rows{header_row("Entity Type")};
    for (const auto& t : report.entity_types) {
      std::vector<std::string> row{t};
      for (Metric m : kAllMetrics) {
        const MeanStd& ms = report.aggregates.at(t).at(m);
        row.push_back(fixed(ms.mean, digits) + " ± " + fixed(ms.std, digits));
      }
      rows.push_back(std::move(row));
    }
    out += render_grid(rows) + "\n";
  }
  std::vector<std::vector<std::string>> rows{header_row("Entity Type", "Lang")};
  for (const auto& t : report.entity_types) {
    for (const auto& l : report.languages) {
      std::vector<std::string> row{t, l};
      const CellReport& c = report.cells.at(l).at(t);
      for (Metric m : kAllMetrics) row.push_back(fixed(c.value(m), digits));
      rows.push_back(std::move(row));
    }
  }
  out += render_grid(rows);
  return out + alias_note(report.aliases);
}

std::vector<RankRow> build_rank_table(const std::map<std::string, MetricsReport>& reports) {
  if (reports.empty()) throw Error("compare needs at least one system");
  const MetricsReport& first = reports.begin()->second;
  for (const auto& [name, r] : reports) {
    if (r.languages != first.languages || r.entity_types != first.entity_types) {
      throw Error("system " + name + " was scored on a different language/type grid");
    }
  }
  std::vector<RankRow> rows;
  for (const auto& t : first.entity_types) {
    for (const auto& l : first.languages) {
      RankRow row{t, l, {}, {}};
      for (Metric m : kAllMetrics) {
        for (const auto& [name, r] : reports) row.scores[m][name] = r.cells.at(l).at(t).value(m);
        row.ranks[m] = rank_systems(row.scores[m], true);
      }
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

std::string render_rank_table(const std::vector<RankRow>& rows, int digits) {
  std::vector<std::vector<std::string>> grid;
  std::vector<std::string> header{"System", "Entity Type", "Lang"};
  for (Metric m : kAllMetrics) header.push_back(std::string(metric_label(m)) + " rk");
  header.emplace_back("Char F1");
  header.emplace_back("Strict F1");
  grid.push_back(header);
  if (rows.empty()) return render_grid(grid);
  for (const auto& [system, unused] : rows.front().ranks.at(Metric::kCharR)) {
    for (const auto& row : rows) {
      std::vector<std::string> line{system, row.entity_type, row.lang};
      for (Metric m : kAllMetrics) line.push_back(std::to_string(row.ranks.at(m).at(system)));
      line.push_back(fixed(row.scores.at(Metric::kCharF1).at(system), digits));
      line.push_back(fixed(row.scores.at(Metric::kStrictF1).at(system), digits));
      grid.push_back(std::move(line));
    }
  }
  return render_grid(grid);
}

std::vector<ScoreRow> parse_score_csv(std::istream& in, const std::string& source_name) {
  auto split = [](const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    std::istringstream ss(line);
    while (std::getline(ss, field, ',')) {
      const auto b = field.find_first_not_of(" \t\r");
      const auto e = field.find_last_not_of(" \t\r");
      out.push_back(b == std::string::npos ? std::string() : field.substr(b, e - b + 1));
    }
    return out;
  };
  std::string line;
  std::size_t lineno = 0;
  std::vector<std::string> header;
  while (header.empty() && std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") != std::string::npos) header = split(line);
  }
  if (header.size() < 3 || header[0] != "entity_type" || header[1] != "lang") {
    throw Error(source_name + ": header must start with entity_type,lang followed by metric columns");
  }
  std::vector<Metric> columns;
  for (std::size_t c = 2; c < header.size(); ++c) {
    try {
      columns.push_back(parse_metric(header[c]));
    } catch (const Error& e) {
      throw Error(source_name + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  std::vector<ScoreRow> rows;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos || line[0] == '#') continue;
    const auto fields = split(line);
    const std::string loc = source_name + ":" + std::to_string(lineno);
    if (fields.size() != header.size()) throw Error(loc + ": expected " + std::to_string(header.size()) + " fields");
    ScoreRow row{fields[0], fields[1], {}};
    for (std::size_t c = 0; c < columns.size(); ++c) {
      const std::string& f = fields[c + 2];
      std::size_t used = 0;
      double v = 0.0;
      try {
        v = std::stod(f, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != f.size() || f.empty() || !std::isfinite(v)) {
        throw Error(loc + ": bad number '" + f + "'");
      }
      row.values[columns[c]] = v;
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

std::vector<ScoreRow> read_score_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  return parse_score_csv(in, path.string());
}

AggregateTable aggregate_scores(std::span<const ScoreRow> rows) {
  AggregateTable table;
  std::map<std::string, std::map<Metric, std::vector<double>>> values;
  for (const auto& r : rows) {
    const std::string type = canonical_entity_type(r.entity_type);
    if (is_entity_type_alias(r.entity_type)) table.aliases[r.entity_type] = type;
    if (std::find(table.entity_types.begin(), table.entity_types.end(), type) ==
        table.entity_types.end()) {
      table.entity_types.push_back(type);
    }
    for (const auto& [m, v] : r.values) values[type][m].push_back(v);
  }
  for (const auto& [type, by_metric] : values) {
    for (const auto& [m, vs] : by_metric) table.cells[type][m] = aggregate(vs);
  }
  return table;
}

std::string render_aggregate_table(const AggregateTable& table, int digits) {
  std::vector<Metric> present;
  for (Metric m : kAllMetrics) {
    for (const auto& [type, cells] : table.cells) {
      if (cells.count(m)) {
        present.push_back(m);
        break;
      }
    }
  }
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> header{"Entity Type"};
  for (Metric m : present) header.emplace_back(metric_label(m));
  rows.push_back(header);
  for (const auto& t : table.entity_types) {
    std::vector<std::string> row{t};
    for (Metric m : present) {
      auto it = table.cells.at(t).find(m);
      row.push_back(it == table.cells.at(t).end()
                        ? "-"
                        : fixed(it->second.mean, digits) + " ± " + fixed(it->second.std, digits));
    }
    rows.push_back(std::move(row));
  }
  return render_grid(rows) + alias_note(table.aliases);
}

}  // namespace spantag
