#pragma once

#include <span>
#include <string_view>
#include <vector>

#include "spantag/corpus.hpp"
#include "spantag/window.hpp"

namespace spantag {

// kPaper reads maximal B?I+ matches: a B that is not followed by I yields
// nothing. kStandard is lenient IOB2: B I* is a span, a lone B included,
// and an orphan I run opens one too. Both split at every B.
enum class DecodeMode { kPaper, kStandard };

DecodeMode parse_decode_mode(std::string_view name);
std::string_view decode_mode_name(DecodeMode mode);

// Token extents [start, end) in label order.
std::vector<TokenRange> decode_token_spans(std::span<const Label> labels, DecodeMode mode);

std::vector<EntitySpan> spans_to_char(std::span<const TokenRange> token_spans,
                                      const TokenizedDocument& tdoc,
                                      std::string_view entity_type);

std::vector<EntitySpan> decode(std::span<const Label> labels, const TokenizedDocument& tdoc,
                               DecodeMode mode, std::string_view entity_type);

}  // namespace spantag
