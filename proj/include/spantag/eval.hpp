#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "spantag/corpus.hpp"

namespace spantag {

struct MetricCell {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

// P = tp/pred, R = tp/gold, F1 their harmonic mean. Both sides empty scores
// 1 everywhere; one empty side gives 0 for the undefined ratio.
MetricCell make_cell(double tp, double pred, double gold);

struct StrictCounts {
  std::size_t tp = 0;
  std::size_t pred = 0;
  std::size_t gold = 0;
};

struct CharCounts {
  std::size_t overlap = 0;
  std::size_t pred = 0;
  std::size_t gold = 0;
};

// Exact (doc, start, end) matches after deduplication. All spans must share
// one canonical entity type.
StrictCounts strict_counts(std::span<const EntitySpan> gold, std::span<const EntitySpan> pred);
MetricCell strict_metrics(std::span<const EntitySpan> gold, std::span<const EntitySpan> pred);

// Per document, the union of characters covered by gold spans against the
// union covered by predictions, summed over documents (micro).
CharCounts char_counts(std::span<const EntitySpan> gold, std::span<const EntitySpan> pred,
                       const Corpus& docs);
MetricCell char_metrics(std::span<const EntitySpan> gold, std::span<const EntitySpan> pred,
                        const Corpus& docs);

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // population (divide by n)
};

MeanStd aggregate(std::span<const double> values);

// Standard competition ranking ("1224"): best is 1, ties share the smaller
// rank, the next rank skips.
std::map<std::string, int> rank_systems(const std::map<std::string, double>& scores,
                                        bool higher_better = true);

// Column order of the summary table.
enum class Metric { kCharR, kCharP, kCharF1, kStrictR, kStrictP, kStrictF1 };
inline constexpr std::array<Metric, 6> kAllMetrics = {Metric::kCharR,   Metric::kCharP,
                                                      Metric::kCharF1,  Metric::kStrictR,
                                                      Metric::kStrictP, Metric::kStrictF1};
std::string_view metric_key(Metric m);    // "char_r", ...
std::string_view metric_label(Metric m);  // "Char R", ...
Metric parse_metric(std::string_view key);

struct CellReport {
  MetricCell strict;
  MetricCell chr;
  StrictCounts strict_support;
  CharCounts char_support;

  double value(Metric m) const;
};

struct MetricsReport {
  std::vector<std::string> languages;
  std::vector<std::string> entity_types;
  std::map<std::string, std::map<std::string, CellReport>> cells;  // lang -> type -> cell
  // type -> metric -> mean/std across languages; only with >= 2 languages.
  std::map<std::string, std::map<Metric, MeanStd>> aggregates;
  // Input type names that were folded into a canonical name.
  std::map<std::string, std::string> aliases;
};

// Empty `languages` / `entity_types` are derived from the inputs. Entity
// types are canonicalized (DISEASE -> DISORDER). `jobs` > 1 scores cells on
// worker threads; the result does not depend on it.
MetricsReport build_report(std::span<const EntitySpan> gold, std::span<const EntitySpan> pred,
                           const Corpus& docs, std::vector<std::string> languages = {},
                           std::vector<std::string> entity_types = {}, unsigned jobs = 1);

nlohmann::json report_to_json(const MetricsReport& report);
std::string render_report_table(const MetricsReport& report, int digits = 2);

// Rank columns for several systems scored on the same corpus.
struct RankRow {
  std::string entity_type;
  std::string lang;
  std::map<Metric, std::map<std::string, int>> ranks;
  std::map<Metric, std::map<std::string, double>> scores;
};

std::vector<RankRow> build_rank_table(const std::map<std::string, MetricsReport>& reports);
std::string render_rank_table(const std::vector<RankRow>& rows, int digits = 4);

// Externally reported per-(type, language) scores, one CSV row each:
// `entity_type,lang,<metric keys...>`.
struct ScoreRow {
  std::string entity_type;
  std::string lang;
  std::map<Metric, double> values;
};

std::vector<ScoreRow> read_score_csv(const std::filesystem::path& path);
std::vector<ScoreRow> parse_score_csv(std::istream& in, const std::string& source_name);

struct AggregateTable {
  std::vector<std::string> entity_types;  // first-seen order
  std::map<std::string, std::map<Metric, MeanStd>> cells;
  std::map<std::string, std::string> aliases;
};

AggregateTable aggregate_scores(std::span<const ScoreRow> rows);
std::string render_aggregate_table(const AggregateTable& table, int digits = 2);

}  // namespace spantag
