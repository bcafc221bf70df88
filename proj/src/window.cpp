#include "spantag/window.hpp"

#include <algorithm>
#include <string>

namespace spantag {

std::size_t context_score(const TokenRange& w, std::size_t t) {
  return std::min(t - w.start, w.end - 1 - t);
}

WindowPlan plan_windows(std::size_t tokens, std::size_t window, std::size_t stride) {
  if (window < 1 || stride < 1) throw Error("window and stride must be >= 1");
  if (stride > window) throw Error("stride must not exceed the window length");
  WindowPlan plan;
  plan.window = window;
  plan.stride = stride;
  if (tokens == 0) return plan;

  std::size_t s = 0;
  for (; s + window < tokens; s += stride) plan.windows.push_back({s, s + window});
  plan.windows.push_back({tokens > window ? tokens - window : 0, tokens});

  plan.owner.assign(tokens, 0);
  std::vector<std::size_t> best(tokens, 0);
  std::vector<char> seen(tokens, 0);
  for (std::size_t w = 0; w < plan.windows.size(); ++w) {
    const TokenRange& r = plan.windows[w];
    for (std::size_t t = r.start; t < r.end; ++t) {
      const std::size_t score = context_score(r, t);
      if (!seen[t] || score > best[t]) {
        seen[t] = 1;
        best[t] = score;
        plan.owner[t] = w;
      }
    }
  }
  return plan;
}

LabelSeq reconcile(const WindowPlan& plan, const std::vector<LabelSeq>& per_window) {
  if (per_window.size() != plan.windows.size()) {
    throw Error("reconcile: got " + std::to_string(per_window.size()) + " label sequences for " +
                std::to_string(plan.windows.size()) + " windows");
  }
  for (std::size_t w = 0; w < plan.windows.size(); ++w) {
    if (per_window[w].size() != plan.windows[w].size()) {
      throw Error("reconcile: window " + std::to_string(w) + " has " +
                  std::to_string(per_window[w].size()) + " labels for " +
                  std::to_string(plan.windows[w].size()) + " tokens");
    }
  }
  LabelSeq out(plan.owner.size(), Label::O);
  for (std::size_t t = 0; t < plan.owner.size(); ++t) {
    const std::size_t w = plan.owner[t];
    out[t] = per_window[w][t - plan.windows[w].start];
  }
  return out;
}

EncoderOutput slice_encoder_output(const EncoderOutput& enc, const TokenRange& range) {
  EncoderOutput out;
  out.doc_id = enc.doc_id;
  out.dim = enc.dim;
  out.tokens.assign(enc.tokens.begin() + static_cast<std::ptrdiff_t>(range.start),
                    enc.tokens.begin() + static_cast<std::ptrdiff_t>(range.end));
  out.vectors = Matrix(range.size(), enc.dim);
  std::copy(enc.vectors.data.begin() + static_cast<std::ptrdiff_t>(range.start * enc.dim),
            enc.vectors.data.begin() + static_cast<std::ptrdiff_t>(range.end * enc.dim),
            out.vectors.data.begin());
  return out;
}

LabelSeq predict_windowed(const EncoderOutput& enc, const TaggerParams& params,
                          std::size_t window, std::size_t stride) {
  const WindowPlan plan = plan_windows(enc.size(), window, stride);
  if (plan.windows.size() == 1) return predict(enc, params);
  std::vector<LabelSeq> per_window;
  per_window.reserve(plan.windows.size());
  for (const TokenRange& r : plan.windows) {
    per_window.push_back(predict(slice_encoder_output(enc, r), params));
  }
  return reconcile(plan, per_window);
}

}  // namespace spantag
