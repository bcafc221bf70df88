#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace spantag::unicode {

// Decodes UTF-8 into scalar values. Throws std::invalid_argument on
// malformed input, overlong forms, surrogates and values above U+10FFFF.
std::u32string decode_utf8(std::string_view bytes);

std::string encode_utf8(std::u32string_view chars);

void append_utf8(std::string& out, char32_t c);

// General category L* or N*.
bool is_alnum(char32_t c);

// White_Space property (tab, newline, NBSP, ideographic space, ...).
bool is_space(char32_t c);

}  // namespace spantag::unicode
