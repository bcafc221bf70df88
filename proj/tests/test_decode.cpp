#include <doctest.h>

#include <random>

#include "spantag/decode.hpp"
#include "support/generators.hpp"
#include "support/oracles.hpp"

using namespace spantag;

namespace {

std::vector<std::pair<std::size_t, std::size_t>> token_spans(const std::string& bio, DecodeMode mode) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (const auto& r : decode_token_spans(labels_from_string(bio), mode)) out.emplace_back(r.start, r.end);
  return out;
}

using Pairs = std::vector<std::pair<std::size_t, std::size_t>>;

}  // namespace

TEST_CASE("paper mode reads B?I+") {
  CHECK(token_spans("OBIIOI", DecodeMode::kPaper) == Pairs{{1, 4}, {5, 6}});
  CHECK(token_spans("OBO", DecodeMode::kPaper).empty());
  CHECK(token_spans("IIOBBI", DecodeMode::kPaper) == Pairs{{0, 2}, {4, 6}});
  CHECK(oracle::regex_paper_spans("IIOBBI") == Pairs{{0, 2}, {4, 6}});
  CHECK(token_spans("IIBI", DecodeMode::kPaper) == Pairs{{0, 2}, {2, 4}});
  CHECK(token_spans("", DecodeMode::kPaper).empty());
}

TEST_CASE("standard mode keeps lone B and orphan I") {
  CHECK(token_spans("OBO", DecodeMode::kStandard) == Pairs{{1, 2}});
  CHECK(token_spans("IIOBBI", DecodeMode::kStandard) == Pairs{{0, 2}, {3, 4}, {4, 6}});
  CHECK(token_spans("IIBI", DecodeMode::kStandard) == Pairs{{0, 2}, {2, 4}});
}

TEST_CASE("paper mode equals regex enumeration on random sequences") {
  std::mt19937_64 rng(3);
  for (int iter = 0; iter < 2000; ++iter) {
    std::string bio;
    const std::size_t n = testing::draw(rng, 0, 16);
    for (std::size_t i = 0; i < n; ++i) bio.push_back("BIO"[testing::draw(rng, 0, 2)]);
    const auto paper = token_spans(bio, DecodeMode::kPaper);
    REQUIRE(paper == oracle::regex_paper_spans(bio));
    // Every multi-token paper span is also a standard span.
    const auto standard = token_spans(bio, DecodeMode::kStandard);
    for (const auto& sp : paper) {
      if (sp.second - sp.first < 2) continue;
      CHECK(std::find(standard.begin(), standard.end(), sp) != standard.end());
    }
  }
}

TEST_CASE("spans_to_char") {
  const Document doc = make_document("d", "en", "chest pain, acute.");
  const TokenizedDocument tdoc = tokenize(doc);
  std::vector<TokenRange> r{{0, 2}};
  auto spans = spans_to_char(r, tdoc, "SYMPTOM");
  REQUIRE(spans.size() == 1);
  CHECK(spans[0].start == 0);
  CHECK(spans[0].end == 10);
  CHECK(spans[0].surface == std::optional<std::string>("chest pain"));
  r = {{3, 4}};
  spans = spans_to_char(r, tdoc, "SYMPTOM");
  CHECK(spans[0].start == 12);
  CHECK(spans[0].end == 17);
  r = {{2, 2}};
  CHECK_THROWS_AS(spans_to_char(r, tdoc, "SYMPTOM"), Error);
  CHECK_THROWS_AS(decode(LabelSeq(4, Label::O), tdoc, DecodeMode::kPaper, "SYMPTOM"), Error);
}

TEST_CASE("decoded spans are sorted, disjoint and in bounds") {
  std::mt19937_64 rng(4);
  const Document doc = make_document("d", "en", "a bb, c dd e; ff g hh i j kk l");
  const TokenizedDocument tdoc = tokenize(doc);
  for (int iter = 0; iter < 500; ++iter) {
    LabelSeq labels(tdoc.size());
    for (auto& l : labels) l = static_cast<Label>(testing::draw(rng, 0, 2));
    for (DecodeMode mode : {DecodeMode::kPaper, DecodeMode::kStandard}) {
      const auto spans = decode(labels, tdoc, mode, "X");
      for (std::size_t k = 0; k < spans.size(); ++k) {
        CHECK(spans[k].start < spans[k].end);
        CHECK(spans[k].end <= doc.length());
        if (k) CHECK(spans[k - 1].end <= spans[k].start);
      }
    }
  }
}

TEST_CASE("decode mode names") {
  CHECK(parse_decode_mode("paper") == DecodeMode::kPaper);
  CHECK(parse_decode_mode("standard") == DecodeMode::kStandard);
  CHECK_THROWS_AS(parse_decode_mode("crf"), Error);
}
