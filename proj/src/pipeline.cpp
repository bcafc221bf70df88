#include "spantag/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <map>
#include <mutex>
#include <thread>

namespace spantag {

std::size_t PredictOptions::effective_stride() const {
  return stride ? stride : std::max<std::size_t>(1, window / 2);
}

LabelSeq predict_labels(const EncoderOutput& enc, const TaggerParams& params,
                        const PredictOptions& opts) {
  return predict_windowed(enc, params, opts.window, opts.effective_stride());
}

PredictResult predict_corpus(const Corpus& corpus, const TaggerParams& params,
                             const PredictOptions& opts,
                             const std::vector<EncoderOutput>* external) {
  plan_windows(1, opts.window, opts.effective_stride());  // validates W and S

  std::map<std::string, const EncoderOutput*, std::less<>> ext;
  if (external) {
    for (const auto& e : *external) {
      if (e.dim != params.dim) {
        throw Error("embeddings for " + e.doc_id + " have dim " + std::to_string(e.dim) +
                    " but the model expects " + std::to_string(params.dim));
      }
      ext[e.doc_id] = &e;
    }
  } else if (!params.has_table()) {
    throw Error("model was trained on external embeddings; pass --embeddings");
  }

  std::vector<std::vector<EntitySpan>> per_doc(corpus.docs.size());
  std::vector<std::string> warnings(corpus.docs.size());

  auto run = [&](std::size_t k) {
    const Document& doc = corpus.docs[k];
    EncoderOutput enc;
    if (external) {
      auto it = ext.find(doc.id);
      if (it == ext.end()) throw Error("no embeddings for document " + doc.id);
      enc = *it->second;
    } else {
      enc = encode_hashed(tokenize(doc), params.table);
    }
    if (opts.max_doc_tokens && enc.size() > opts.max_doc_tokens) {
      warnings[k] = "document " + doc.id + " truncated from " + std::to_string(enc.size()) +
                    " to " + std::to_string(opts.max_doc_tokens) + " tokens";
      enc = slice_encoder_output(enc, {0, opts.max_doc_tokens});
    }
    const LabelSeq labels = predict_labels(enc, params, opts);
    per_doc[k] = decode(labels, tokenized_view(doc, enc), opts.mode, opts.entity_type);
  };

  const unsigned jobs = std::max(1u, opts.jobs);
  if (jobs == 1) {
    for (std::size_t k = 0; k < corpus.docs.size(); ++k) run(k);
  } else {
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex mu;
    std::vector<std::thread> workers;
    for (unsigned w = 0; w < jobs; ++w) {
      workers.emplace_back([&] {
        try {
          for (std::size_t k; (k = next.fetch_add(1)) < corpus.docs.size();) run(k);
        } catch (...) {
          std::lock_guard lock(mu);
          if (!failure) failure = std::current_exception();
        }
      });
    }
    for (auto& w : workers) w.join();
    if (failure) std::rethrow_exception(failure);
  }

  PredictResult result;
  for (std::size_t k = 0; k < per_doc.size(); ++k) {
    result.spans.insert(result.spans.end(), per_doc[k].begin(), per_doc[k].end());
    if (!warnings[k].empty()) result.warnings.push_back(std::move(warnings[k]));
  }
  std::sort(result.spans.begin(), result.spans.end(), span_less);
  return result;
}

}  // namespace spantag
