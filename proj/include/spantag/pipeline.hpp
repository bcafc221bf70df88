#pragma once

#include <string>
#include <vector>

#include "spantag/corpus.hpp"
#include "spantag/decode.hpp"
#include "spantag/encoder.hpp"
#include "spantag/head.hpp"
#include "spantag/window.hpp"

namespace spantag {

struct PredictOptions {
  std::string entity_type;
  DecodeMode mode = DecodeMode::kPaper;
  std::size_t window = kDefaultWindow;
  std::size_t stride = 0;          // 0 means window / 2
  std::size_t max_doc_tokens = 0;  // 0 means no truncation
  unsigned jobs = 1;

  std::size_t effective_stride() const;
};

struct PredictResult {
  std::vector<EntitySpan> spans;  // sorted by doc id, then start
  std::vector<std::string> warnings;
};

// encode -> plan windows -> per-window argmax -> reconcile -> decode.
// With `external`, each document's vectors and token offsets come from it.
PredictResult predict_corpus(const Corpus& corpus, const TaggerParams& params,
                             const PredictOptions& opts,
                             const std::vector<EncoderOutput>* external = nullptr);

// Token labels for one document, before decoding.
LabelSeq predict_labels(const EncoderOutput& enc, const TaggerParams& params,
                        const PredictOptions& opts);

}  // namespace spantag
