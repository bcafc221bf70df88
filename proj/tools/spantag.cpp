#include <CLI11.hpp>

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "spantag/corpus.hpp"
#include "spantag/encoder.hpp"
#include "spantag/eval.hpp"
#include "spantag/head.hpp"
#include "spantag/kernels.hpp"
#include "spantag/pipeline.hpp"

namespace fs = std::filesystem;
using namespace spantag;

namespace {

struct RunConfig {
  std::string docs, annotations, embeddings, model, out, trace, scores, pred;
  std::vector<std::string> systems;
  std::string entity_type;
  std::string decode = "paper";
  std::size_t window = kDefaultWindow;
  std::size_t stride = 0;
  std::size_t max_doc_tokens = 0;
  TrainConfig train;
  int digits = 2;
  unsigned jobs = 1;
  bool aggregate_only = false;
};

std::uint64_t seed_from_env(std::uint64_t fallback) {
  const char* env = std::getenv("SPANTAG_SEED");
  if (!env || !*env) return fallback;
  try {
    std::size_t pos = 0;
    const unsigned long long v = std::stoull(env, &pos, 10);
    if (pos != std::string(env).size()) throw std::invalid_argument(env);
    return v;
  } catch (const std::exception&) {
    throw Error(std::string("SPANTAG_SEED is not an unsigned integer: ") + env);
  }
}

std::vector<EncoderOutput> maybe_external(const RunConfig& cfg, const Corpus& corpus) {
  if (cfg.embeddings.empty()) return {};
  return load_external(cfg.embeddings, corpus);
}

Corpus docs_only(const std::string& path) {
  Corpus c;
  c.docs = read_documents_jsonl(path);
  c.reindex();
  return c;
}

int cmd_train(const RunConfig& cfg) {
  const Corpus corpus = load_corpus(cfg.docs, cfg.annotations);
  TrainConfig tc = cfg.train;
  tc.seed = seed_from_env(tc.seed);
  const auto external = maybe_external(cfg, corpus);
  if (!external.empty()) tc.dim = external.front().dim;
  const TrainResult r = train(corpus, cfg.entity_type, tc, external.empty() ? nullptr : &external);
  save_checkpoint(fs::path(cfg.model), r.params);
  if (!cfg.trace.empty()) write_loss_trace(cfg.trace, r.trace);
  std::cerr << "trained " << cfg.entity_type << " on " << corpus.docs.size() << " documents, "
            << r.steps << " steps";
  if (!r.trace.empty()) std::cerr << ", final loss " << r.trace.back().loss;
  std::cerr << "\n";
  return 0;
}

int cmd_predict(const RunConfig& cfg) {
  const Corpus corpus = docs_only(cfg.docs);
  const TaggerParams params = load_checkpoint(fs::path(cfg.model));
  const auto external = maybe_external(cfg, corpus);
  PredictOptions opts;
  opts.entity_type = canonical_entity_type(cfg.entity_type);
  opts.mode = parse_decode_mode(cfg.decode);
  opts.window = cfg.window == 0 ? std::numeric_limits<std::size_t>::max() : cfg.window;
  opts.stride = cfg.stride;
  opts.max_doc_tokens = cfg.max_doc_tokens;
  opts.jobs = cfg.jobs;
  const PredictResult r =
      predict_corpus(corpus, params, opts, external.empty() ? nullptr : &external);
  for (const auto& w : r.warnings) std::cerr << "warning: " << w << "\n";
  write_spans_jsonl(cfg.out, r.spans, corpus);
  std::cerr << "wrote " << r.spans.size() << " spans to " << cfg.out << "\n";
  return 0;
}

std::vector<EntitySpan> load_predictions(const std::string& path, const Corpus& corpus) {
  std::vector<EntitySpan> pred = read_annotations(path);
  validate_spans(corpus, pred);
  return pred;
}

std::vector<std::string> type_filter(const RunConfig& cfg) {
  if (cfg.entity_type.empty()) return {};
  return {canonical_entity_type(cfg.entity_type)};
}

int cmd_eval(const RunConfig& cfg) {
  const Corpus corpus = load_corpus(cfg.docs, cfg.annotations);
  const auto pred = load_predictions(cfg.pred, corpus);
  const MetricsReport report =
      build_report(corpus.spans, pred, corpus, {}, type_filter(cfg), cfg.jobs);
  if (!cfg.out.empty()) {
    std::ofstream out(cfg.out);
    if (!out) throw Error("cannot write " + cfg.out);
    out << report_to_json(report).dump(2) << "\n";
  }
  std::cout << render_report_table(report, cfg.digits);
  return 0;
}

int cmd_compare(const RunConfig& cfg) {
  if (cfg.aggregate_only) {
    if (cfg.scores.empty()) throw Error("--aggregate-only needs --scores");
    const auto rows = read_score_csv(cfg.scores);
    std::cout << render_aggregate_table(aggregate_scores(rows), cfg.digits);
    return 0;
  }
  if (cfg.systems.empty()) throw Error("compare needs at least one --system name=path");
  if (cfg.docs.empty() || cfg.annotations.empty()) {
    throw Error("compare needs --docs and --annotations");
  }
  const Corpus corpus = load_corpus(cfg.docs, cfg.annotations);
  std::map<std::string, MetricsReport> reports;
  for (const auto& sys : cfg.systems) {
    const auto eq = sys.find('=');
    if (eq == std::string::npos || eq == 0 || eq + 1 == sys.size()) {
      throw Error("--system expects name=path, got '" + sys + "'");
    }
    const std::string name = sys.substr(0, eq);
    if (reports.count(name)) throw Error("duplicate system name '" + name + "'");
    const auto pred = load_predictions(sys.substr(eq + 1), corpus);
    reports.emplace(name, build_report(corpus.spans, pred, corpus, {}, type_filter(cfg), cfg.jobs));
  }
  std::cout << render_rank_table(build_rank_table(reports), std::max(cfg.digits, 4));
  return 0;
}

int cmd_tokenize(const RunConfig& cfg) {
  const Corpus corpus = docs_only(cfg.docs);
  std::ofstream file;
  if (!cfg.out.empty()) {
    file.open(cfg.out);
    if (!file) throw Error("cannot write " + cfg.out);
  }
  std::ostream& out = cfg.out.empty() ? std::cout : file;
  for (const auto& doc : corpus.docs) {
    const TokenizedDocument t = tokenize(doc);
    nlohmann::json j;
    j["doc_id"] = doc.id;
    j["tokens"] = nlohmann::json::array();
    for (const auto& tok : t.tokens) j["tokens"].push_back({tok.start, tok.end});
    out << j.dump() << "\n";
  }
  return 0;
}

int cmd_validate(const RunConfig& cfg) {
  const Corpus corpus = load_corpus(cfg.docs, cfg.annotations);
  std::map<std::string, std::size_t> by_type;
  for (const auto& s : corpus.spans) ++by_type[canonical_entity_type(s.entity_type)];
  std::cout << corpus.docs.size() << " documents, " << corpus.spans.size() << " spans\n";
  for (const auto& [type, n] : by_type) std::cout << "  " << type << ": " << n << "\n";
  if (!cfg.embeddings.empty()) {
    const auto ext = load_external(cfg.embeddings, corpus);
    std::cout << "embeddings: " << ext.size() << " documents, dim "
              << (ext.empty() ? 0 : ext.front().dim) << "\n";
  }
  return 0;
}

void add_window_flags(CLI::App* app, RunConfig& cfg) {
  app->add_option("--window", cfg.window, "Window length in tokens (0: whole document)")
      ->capture_default_str();
  app->add_option("--stride", cfg.stride, "Window stride in tokens (0: window / 2)")
      ->capture_default_str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multilingual clinical span tagging"};
  app.require_subcommand(1);
  RunConfig cfg;
  std::string simd;
  app.add_option("--simd", simd, "Kernel variant: scalar or avx2 (default: best available)");

  auto* train = app.add_subcommand("train", "Train one tagger for an entity type");
  train->add_option("--docs", cfg.docs, "Documents JSONL")->required();
  train->add_option("--annotations", cfg.annotations, "Gold spans (JSONL or BRAT)")->required();
  train->add_option("--entity-type", cfg.entity_type, "Entity type to learn")->required();
  train->add_option("--model", cfg.model, "Checkpoint to write")->required();
  train->add_option("--embeddings", cfg.embeddings, "External embeddings JSONL");
  train->add_option("--trace", cfg.trace, "Loss trace CSV to write");
  train->add_option("--epochs", cfg.train.epochs)->capture_default_str();
  train->add_option("--lr", cfg.train.lr)->capture_default_str();
  train->add_option("--batch", cfg.train.batch, "Documents per step")->capture_default_str();
  train->add_option("--hidden", cfg.train.hidden, "Conv channels")->capture_default_str();
  train->add_option("--dim", cfg.train.dim, "Hashed encoder dimension")->capture_default_str();
  train->add_option("--table-size", cfg.train.table_size, "Hashed encoder buckets")
      ->capture_default_str();
  train->add_flag("--freeze-encoder", cfg.train.freeze_encoder, "Keep the embedding table fixed");
  train->add_option("--seed", cfg.train.seed)->capture_default_str();

  auto* predict = app.add_subcommand("predict", "Tag documents with a trained model");
  predict->add_option("--docs", cfg.docs, "Documents JSONL")->required();
  predict->add_option("--model", cfg.model, "Checkpoint")->required();
  predict->add_option("--entity-type", cfg.entity_type, "Type written on output spans")->required();
  predict->add_option("--out", cfg.out, "Predictions JSONL to write")->required();
  predict->add_option("--embeddings", cfg.embeddings, "External embeddings JSONL");
  predict->add_option("--decode", cfg.decode, "paper or standard")
      ->check(CLI::IsMember({"paper", "standard"}))
      ->capture_default_str();
  add_window_flags(predict, cfg);
  predict->add_option("--max-doc-tokens", cfg.max_doc_tokens, "Truncate longer documents (0: off)");
  predict->add_option("--jobs", cfg.jobs)->check(CLI::PositiveNumber);

  auto* eval = app.add_subcommand("eval", "Score predictions against gold spans");
  eval->add_option("--docs", cfg.docs, "Documents JSONL")->required();
  eval->add_option("--annotations", cfg.annotations, "Gold spans")->required();
  eval->add_option("--pred", cfg.pred, "Predicted spans")->required();
  eval->add_option("--entity-type", cfg.entity_type, "Only score this type");
  eval->add_option("--out", cfg.out, "Report JSON to write");
  eval->add_option("--digits", cfg.digits)->check(CLI::Range(0, 8))->capture_default_str();
  eval->add_option("--jobs", cfg.jobs)->check(CLI::PositiveNumber);

  auto* compare = app.add_subcommand("compare", "Rank systems or aggregate a score table");
  compare->add_option("--docs", cfg.docs, "Documents JSONL");
  compare->add_option("--annotations", cfg.annotations, "Gold spans");
  compare->add_option("--system", cfg.systems, "name=predictions path (repeatable)");
  compare->add_option("--entity-type", cfg.entity_type, "Only rank this type");
  compare->add_flag("--aggregate-only", cfg.aggregate_only,
                    "Aggregate per-language scores from --scores");
  compare->add_option("--scores", cfg.scores, "CSV: entity_type,lang,<metric>...");
  compare->add_option("--digits", cfg.digits)->check(CLI::Range(0, 8))->capture_default_str();
  compare->add_option("--jobs", cfg.jobs)->check(CLI::PositiveNumber);

  auto* tok = app.add_subcommand("tokenize", "Print token offsets");
  tok->add_option("--docs", cfg.docs, "Documents JSONL")->required();
  tok->add_option("--out", cfg.out, "Output JSONL (default: stdout)");

  auto* validate = app.add_subcommand("validate", "Check documents, spans and embeddings");
  validate->add_option("--docs", cfg.docs, "Documents JSONL")->required();
  validate->add_option("--annotations", cfg.annotations, "Gold spans")->required();
  validate->add_option("--embeddings", cfg.embeddings, "External embeddings JSONL");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }

  try {
    if (!simd.empty() && !kernels::select(simd)) throw Error("kernel variant not available: " + simd);
    if (*train) return cmd_train(cfg);
    if (*predict) return cmd_predict(cfg);
    if (*eval) return cmd_eval(cfg);
    if (*compare) return cmd_compare(cfg);
    if (*tok) return cmd_tokenize(cfg);
    if (*validate) return cmd_validate(cfg);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
