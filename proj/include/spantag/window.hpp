#pragma once

#include <cstddef>
#include <vector>

#include "spantag/corpus.hpp"
#include "spantag/encoder.hpp"
#include "spantag/head.hpp"

namespace spantag {

struct TokenRange {
  std::size_t start = 0;
  std::size_t end = 0;  // exclusive
  std::size_t size() const { return end - start; }
  bool contains(std::size_t t) const { return t >= start && t < end; }
  bool operator==(const TokenRange&) const = default;
};

// Windows start at 0, S, 2S, ... and the last one ends exactly at N. Each
// token is owned by the window that leaves it the most context on its
// shorter side, min(t - start, end - 1 - t); ties go to the earliest window.
struct WindowPlan {
  std::size_t window = 0;
  std::size_t stride = 0;
  std::vector<TokenRange> windows;
  std::vector<std::size_t> owner;
};

inline constexpr std::size_t kDefaultWindow = 8192;

std::size_t context_score(const TokenRange& w, std::size_t t);

WindowPlan plan_windows(std::size_t tokens, std::size_t window, std::size_t stride);

LabelSeq reconcile(const WindowPlan& plan, const std::vector<LabelSeq>& per_window);

// Runs the tagger independently on each window and keeps every token's
// label from its owner window.
LabelSeq predict_windowed(const EncoderOutput& enc, const TaggerParams& params,
                          std::size_t window, std::size_t stride);

EncoderOutput slice_encoder_output(const EncoderOutput& enc, const TokenRange& range);

}  // namespace spantag
