#include "spantag/decode.hpp"

#include <string>

namespace spantag {

DecodeMode parse_decode_mode(std::string_view name) {
  if (name == "paper") return DecodeMode::kPaper;
  if (name == "standard") return DecodeMode::kStandard;
  throw Error("unknown decode mode '" + std::string(name) + "' (expected paper or standard)");
}

std::string_view decode_mode_name(DecodeMode mode) {
  return mode == DecodeMode::kPaper ? "paper" : "standard";
}

std::vector<TokenRange> decode_token_spans(std::span<const Label> labels, DecodeMode mode) {
  std::vector<TokenRange> out;
  const std::size_t n = labels.size();
  auto run_end = [&](std::size_t i) {
    while (i < n && labels[i] == Label::I) ++i;
    return i;
  };
  std::size_t i = 0;
  while (i < n) {
    switch (labels[i]) {
      case Label::O:
        ++i;
        break;
      case Label::I: {
        const std::size_t e = run_end(i);
        out.push_back({i, e});
        i = e;
        break;
      }
      case Label::B: {
        const std::size_t e = run_end(i + 1);
        if (e > i + 1 || mode == DecodeMode::kStandard) out.push_back({i, e});
        i = e;
        break;
      }
    }
  }
  return out;
}

std::vector<EntitySpan> spans_to_char(std::span<const TokenRange> token_spans,
                                      const TokenizedDocument& tdoc,
                                      std::string_view entity_type) {
  std::vector<EntitySpan> out;
  out.reserve(token_spans.size());
  for (const TokenRange& r : token_spans) {
    if (r.start >= r.end || r.end > tdoc.tokens.size()) {
      throw Error("token span [" + std::to_string(r.start) + "," + std::to_string(r.end) +
                  ") is empty or out of range");
    }
    EntitySpan s;
    s.doc_id = tdoc.doc ? tdoc.doc->id : std::string();
    s.entity_type = std::string(entity_type);
    s.start = tdoc.tokens[r.start].start;
    s.end = tdoc.tokens[r.end - 1].end;
    if (tdoc.doc) s.surface = tdoc.doc->slice(s.start, s.end);
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<EntitySpan> decode(std::span<const Label> labels, const TokenizedDocument& tdoc,
                               DecodeMode mode, std::string_view entity_type) {
  if (labels.size() != tdoc.tokens.size()) {
    throw Error("decode: " + std::to_string(labels.size()) + " labels for " +
                std::to_string(tdoc.tokens.size()) + " tokens");
  }
  const auto token_spans = decode_token_spans(labels, mode);
  return spans_to_char(token_spans, tdoc, entity_type);
}

}  // namespace spantag
