// Acceptance suite: one PASS/FAIL line per criterion. With criterion ids as
// arguments only those run. Exit status is the number of failing criteria.
#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "spantag/corpus.hpp"
#include "spantag/decode.hpp"
#include "spantag/eval.hpp"
#include "spantag/head.hpp"
#include "spantag/pipeline.hpp"
#include "spantag/window.hpp"
#include "support/generators.hpp"
#include "support/gradcheck.hpp"
#include "support/oracles.hpp"

namespace fs = std::filesystem;
using namespace spantag;

namespace {

const fs::path kData = SPANTAG_DATA_DIR;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v, int digits = 4) {
  std::ostringstream ss;
  ss << std::fixed << std::setprecision(digits) << v;
  return ss.str();
}

std::string round2(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

// 1. Summary mean ± std from the per-language leaderboard F1 values.
Outcome summary_from_leaderboard() {
  const auto rows = read_score_csv(kData / "leaderboard_f1.csv");
  const AggregateTable t = aggregate_scores(rows);
  struct Expected {
    const char* type;
    const char* char_f1;
    const char* strict_f1;
  };
  const Expected expected[] = {{"PROCEDURE", "0.83±0.01", "0.71±0.02"},
                               {"DISORDER", "0.82±0.02", "0.71±0.03"},
                               {"SYMPTOM", "0.76±0.02", "0.62±0.03"}};
  std::size_t matched = 0;
  std::string mismatch;
  for (const auto& e : expected) {
    const auto& cells = t.cells.at(e.type);
    const MeanStd c = cells.at(Metric::kCharF1), s = cells.at(Metric::kStrictF1);
    const std::string got_c = round2(c.mean) + "±" + round2(c.std);
    const std::string got_s = round2(s.mean) + "±" + round2(s.std);
    matched += (got_c == e.char_f1) + (got_s == e.strict_f1);
    if (got_c != e.char_f1) mismatch += std::string(" ") + e.type + " char " + got_c;
    if (got_s != e.strict_f1) mismatch += std::string(" ") + e.type + " strict " + got_s;
  }
  // The sample estimator must not be the one that matches.
  std::vector<double> sym;
  for (const auto& r : rows) {
    if (r.entity_type == "SYMPTOM") sym.push_back(r.values.at(Metric::kStrictF1));
  }
  const double n = static_cast<double>(sym.size());
  const double sample_std = aggregate(sym).std * std::sqrt(n / (n - 1));
  const bool sample_differs = round2(sample_std) != "0.03";
  return {matched == 6 && rows.size() == 21 && sample_differs,
          std::to_string(matched) + "/6 cells match from " + std::to_string(rows.size()) +
              " rows; sample std for SYMPTOM strict would give " + round2(sample_std) + mismatch};
}

// Shared by criteria 2 and 7.
std::vector<testing::SmallCorpus> random_corpora(std::size_t n) {
  std::mt19937_64 rng(20260);
  std::vector<testing::SmallCorpus> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(testing::random_small_corpus(rng, 5, 40, 6));
  return out;
}

std::map<std::string, std::size_t> lengths(const Corpus& c) {
  std::map<std::string, std::size_t> m;
  for (const auto& d : c.docs) m[d.id] = d.length();
  return m;
}

// 2. Metrics against set and bitmap oracles.
Outcome metric_oracles(const std::vector<testing::SmallCorpus>& corpora) {
  std::size_t bad = 0;
  for (const auto& sc : corpora) {
    const auto so = oracle::prf(oracle::strict(sc.gold, sc.pred));
    const auto co = oracle::prf(oracle::chars(sc.gold, sc.pred, lengths(sc.corpus)));
    const MetricCell s = strict_metrics(sc.gold, sc.pred);
    const MetricCell c = char_metrics(sc.gold, sc.pred, sc.corpus);
    const bool ok = s.precision == so[0] && s.recall == so[1] && s.f1 == so[2] &&
                    c.precision == co[0] && c.recall == co[1] && c.f1 == co[2];
    bad += !ok;
  }
  return {bad == 0, std::to_string(corpora.size()) + " corpora, " + std::to_string(bad) +
                        " disagreements"};
}

// 3. Analytic gradients against central differences.
Outcome gradients() {
  double worst = 0.0;
  std::string worst_tensor;
  std::size_t entries = 0, rejected = 0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto r = testing::run_gradcheck(seed, 8, 8, 10, 1e-3);
    entries += r.entries_checked;
    rejected += r.kink_rejections;
    for (const auto& [name, err] : r.max_rel_error) {
      if (err > worst) {
        worst = err;
        worst_tensor = name;
      }
    }
  }
  std::ostringstream ss;
  ss << "20 instances, " << entries << " entries, worst relative error " << std::scientific
     << std::setprecision(2) << worst << (worst_tensor.empty() ? "" : " (" + worst_tensor + ")")
     << ", " << rejected << " draws redrawn near the ReLU kink";
  return {worst < 1e-4, ss.str()};
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string("'") + SPANTAG_CLI + "' " + args;
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string q(const fs::path& p) { return "'" + p.string() + "'"; }

// 4. Overfit the bundled synthetic corpus through the CLI.
constexpr std::size_t kOverfitEpochs = 60;

Outcome overfit() {
  const fs::path docs = kData / "synthetic" / "docs.jsonl";
  const fs::path anns = kData / "synthetic" / "annotations.jsonl";
  const fs::path dir = fs::temp_directory_path() / ("spantag-acc-" + std::to_string(::getpid()));
  fs::create_directories(dir);
  const fs::path model = dir / "model.bin", trace = dir / "trace.csv";
  const fs::path pred = dir / "pred.jsonl", report = dir / "report.json";

  const std::string train = "train --docs " + q(docs) + " --annotations " + q(anns) +
                            " --entity-type SYMPTOM --hidden 64 --dim 32 --lr 0.001 --epochs " +
                            std::to_string(kOverfitEpochs) + " --seed 0 --model " + q(model) +
                            " --trace " + q(trace) + " 2>/dev/null";
  if (run_cli(train) != 0) return {false, "train failed"};
  if (run_cli("predict --docs " + q(docs) + " --model " + q(model) +
              " --entity-type SYMPTOM --out " + q(pred) + " 2>/dev/null") != 0) {
    return {false, "predict failed"};
  }
  if (run_cli("eval --docs " + q(docs) + " --annotations " + q(anns) + " --pred " + q(pred) +
              " --out " + q(report) + " >/dev/null") != 0) {
    return {false, "eval failed"};
  }

  // Pooled character F1 over all documents.
  const Corpus corpus = load_corpus(docs, anns);
  const auto predicted = read_spans_jsonl(pred);
  const double char_f1 = char_metrics(corpus.spans, predicted, corpus).f1;

  // Token accuracy of the checkpoint's argmax labels against projected gold.
  const TaggerParams params = load_checkpoint(model);
  std::size_t right = 0, total = 0;
  PredictOptions opts;
  const auto symptoms = spans_of_type(corpus.spans, "SYMPTOM");
  for (const auto& doc : corpus.docs) {
    const TokenizedDocument t = tokenize(doc);
    std::vector<EntitySpan> mine;
    for (const auto& s : symptoms) {
      if (s.doc_id == doc.id) mine.push_back(s);
    }
    const auto gold = project_bio(t, mine);
    const LabelSeq got = predict_labels(encode_for(params, t), params, opts);
    for (std::size_t i = 0; i < gold.size(); ++i) right += got[i] == gold[i];
    total += gold.size();
  }
  const double acc = total ? static_cast<double>(right) / static_cast<double>(total) : 0.0;

  std::ifstream in(trace);
  std::string line;
  std::getline(in, line);
  double first = NAN, last = NAN;
  while (std::getline(in, line)) {
    const double loss = std::stod(line.substr(line.find(',') + 1));
    if (std::isnan(first)) first = loss;
    last = loss;
  }
  fs::remove_all(dir);
  const bool ok = acc >= 0.99 && char_f1 >= 0.95 && last < first;
  return {ok, std::to_string(kOverfitEpochs) + " epochs: token accuracy " + fmt(acc) +
                  ", char F1 " + fmt(char_f1) + ", loss " + fmt(first, 2) + " -> " +
                  fmt(last, 2)};
}

// 5. Windowed prediction against single-window prediction and the owner oracle.
Outcome windowing() {
  std::mt19937_64 rng(55);
  std::size_t short_bad = 0, long_bad = 0, long_docs = 0, tokens_checked = 0;
  for (int iter = 0; iter < 100; ++iter) {
    const std::size_t d = testing::draw(rng, 1, 6), h = testing::draw(rng, 1, 8);
    const TaggerParams params = testing::random_params(rng, d, h);
    const std::size_t w = testing::draw(rng, 1, 24);
    const std::size_t s = testing::draw(rng, 1, w);

    const EncoderOutput small = testing::random_enc(rng, testing::draw(rng, 0, w), d);
    short_bad += predict_windowed(small, params, w, s) != predict(small, params);

    const std::size_t n = testing::draw(rng, w + 1, 4 * w + 10);
    const EncoderOutput big = testing::random_enc(rng, n, d);
    ++long_docs;
    // Independent window enumeration: grid starts, then one right-aligned window.
    std::vector<std::pair<std::size_t, std::size_t>> windows;
    for (std::size_t st = 0; st + w < n; st += s) windows.emplace_back(st, st + w);
    windows.emplace_back(n - w, n);
    std::vector<LabelSeq> per_window;
    for (const auto& [a, b] : windows) {
      per_window.push_back(predict(slice_encoder_output(big, {a, b}), params));
    }
    const LabelSeq got = predict_windowed(big, params, w, s);
    for (std::size_t t = 0; t < n; ++t) {
      const std::size_t o = oracle::owner(windows, t);
      long_bad += got[t] != per_window[o][t - windows[o].first];
      ++tokens_checked;
    }
  }
  return {short_bad == 0 && long_bad == 0,
          "100 short docs: " + std::to_string(short_bad) + " differ; " + std::to_string(long_docs) +
              " long docs, " + std::to_string(tokens_checked) + " tokens: " +
              std::to_string(long_bad) + " not from their owner window"};
}

// 6. BIO projection and decoding round trip.
Outcome decode_round_trip() {
  std::mt19937_64 rng(66);
  std::size_t standard_bad = 0, paper_bad = 0, lone_b = 0;
  for (int iter = 0; iter < 500; ++iter) {
    const std::size_t n = testing::draw(rng, 1, 30);
    std::string text;
    for (std::size_t t = 0; t < n; ++t) text += (t ? " w" : "w") + std::to_string(t);
    const Document doc = make_document("d", "en", text);
    const TokenizedDocument tdoc = tokenize(doc);

    // Non-adjacent token spans: at least one O token between neighbours.
    std::vector<TokenRange> spans;
    std::size_t t = testing::draw(rng, 0, 3);
    while (t < n) {
      const std::size_t len = testing::draw(rng, 1, 4);
      const std::size_t end = std::min(n, t + len);
      spans.push_back({t, end});
      t = end + testing::draw(rng, 1, 4);
    }
    std::vector<EntitySpan> chars = spans_to_char(spans, tdoc, "SYMPTOM");
    const LabelSeq labels = project_bio(tdoc, chars);

    const auto standard = decode_token_spans(labels, DecodeMode::kStandard);
    standard_bad += standard.size() != spans.size() ||
                    !std::equal(spans.begin(), spans.end(), standard.begin(),
                                [](const TokenRange& a, const TokenRange& b) {
                                  return a.start == b.start && a.end == b.end;
                                });

    const auto paper = decode_token_spans(labels, DecodeMode::kPaper);
    std::vector<std::pair<std::size_t, std::size_t>> got;
    for (const auto& r : paper) {
      got.emplace_back(r.start, r.end);
      lone_b += r.size() == 1 && labels[r.start] == Label::B;
    }
    paper_bad += got != oracle::regex_paper_spans(labels_to_string(labels));
  }
  return {standard_bad == 0 && paper_bad == 0 && lone_b == 0,
          "500 layouts: standard mismatches " + std::to_string(standard_bad) +
              ", paper vs regex mismatches " + std::to_string(paper_bad) + ", lone-B spans " +
              std::to_string(lone_b)};
}

// 7. Character metrics at least as high as strict metrics.
Outcome dominance(const std::vector<testing::SmallCorpus>& corpora) {
  std::size_t violations = 0;
  std::string example;
  for (const auto& sc : corpora) {
    const MetricCell s = strict_metrics(sc.gold, sc.pred);
    const MetricCell c = char_metrics(sc.gold, sc.pred, sc.corpus);
    if (c.recall >= s.recall && c.precision >= s.precision) continue;
    ++violations;
    if (example.empty()) {
      example = "; e.g. strict R/P " + fmt(s.recall, 3) + "/" + fmt(s.precision, 3) +
                " vs char R/P " + fmt(c.recall, 3) + "/" + fmt(c.precision, 3);
    }
  }
  return {violations == 0, std::to_string(violations) + " of " + std::to_string(corpora.size()) +
                               " corpora violate it" + example};
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
  struct Criterion {
    int id;
    const char* name;
    double limit_s;
    std::function<Outcome()> run;
  };
  std::vector<testing::SmallCorpus> corpora;
  const std::vector<Criterion> criteria = {
      {1, "summary aggregates from per-language F1", 1.0, summary_from_leaderboard},
      {2, "metric oracle equivalence", 30.0,
       [&] {
         corpora = random_corpora(1000);
         return metric_oracles(corpora);
       }},
      {3, "gradient correctness", 60.0, gradients},
      {4, "end-to-end overfit", 300.0, overfit},
      {5, "windowing consistency", 30.0, windowing},
      {6, "decode round trip", 10.0, decode_round_trip},
      {7, "dominance of character over strict scores", 30.0,
       [&] {
         if (corpora.empty()) corpora = random_corpora(1000);
         return dominance(corpora);
       }},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    if (!only.empty() && !only.count(c.id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_time = secs < c.limit_s;
    const bool pass = o.pass && in_time;
    failed += !pass;
    std::cout << (pass ? "[PASS]" : "[FAIL]") << " criterion " << c.id << ": " << c.name << " ("
              << fmt(secs, 2) << " s, limit " << fmt(c.limit_s, 0) << " s) " << o.detail
              << (in_time ? "" : " [over time limit]") << std::endl;
  }
  return failed;
}
