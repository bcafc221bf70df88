#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "spantag/error.hpp"

namespace spantag {

// Offsets everywhere are counted in Unicode scalar values, end-exclusive.
struct Document {
  std::string id;
  std::string lang;
  std::string text;      // UTF-8
  std::u32string chars;  // decoded text; offsets index into this

  std::size_t length() const { return chars.size(); }
  std::string slice(std::size_t start, std::size_t end) const;
};

// Decodes and validates `text`. Throws Error on an empty id or bad UTF-8.
Document make_document(std::string id, std::string lang, std::string text);

struct EntitySpan {
  std::string doc_id;
  std::string entity_type;
  std::size_t start = 0;
  std::size_t end = 0;
  std::optional<std::string> surface;
  // Where the span came from ("anns.jsonl:12", "doc1.ann:3 T2"); used in
  // error messages only and ignored by comparisons.
  std::string origin;

  std::size_t length() const { return end - start; }
};

bool operator==(const EntitySpan& a, const EntitySpan& b);
// Canonical output order: doc id, start, end, type.
bool span_less(const EntitySpan& a, const EntitySpan& b);

struct Token {
  std::size_t start = 0;
  std::size_t end = 0;
  bool operator==(const Token&) const = default;
};

struct TokenizedDocument {
  const Document* doc = nullptr;
  std::vector<Token> tokens;

  std::size_t size() const { return tokens.size(); }
};

// Fixed label alphabet order. Argmax ties resolve toward the lower value.
enum class Label : std::uint8_t { B = 0, I = 1, O = 2 };
inline constexpr std::size_t kNumLabels = 3;

using LabelSeq = std::vector<Label>;

char label_char(Label l);
std::string labels_to_string(std::span<const Label> labels);
LabelSeq labels_from_string(std::string_view s);

// Tokens are maximal runs of alphanumeric characters or single
// non-whitespace, non-alphanumeric characters.
TokenizedDocument tokenize(const Document& doc);

// Checks token offsets supplied from outside (e.g. an embeddings file):
// in bounds, non-empty, sorted and non-overlapping.
void validate_tokens(const Document& doc, std::span<const Token> tokens);

// BIO labels for the spans of one entity type. A token gets a label from the
// span it overlaps; where same-type spans overlap, the longer span (then the
// earlier start) owns the shared tokens. B marks a span's first overlapping
// token, I its later ones.
LabelSeq project_bio(const TokenizedDocument& tdoc, std::span<const EntitySpan> spans);

// DISEASE is accepted as an alias of DISORDER; other types pass through.
std::string canonical_entity_type(std::string_view type);
bool is_entity_type_alias(std::string_view type);

struct Corpus {
  std::vector<Document> docs;
  std::vector<EntitySpan> spans;

  const Document* find(std::string_view id) const;
  void reindex();

 private:
  std::unordered_map<std::string, std::size_t> index_;
};

std::vector<Document> read_documents_jsonl(const std::filesystem::path& path);
void write_documents_jsonl(const std::filesystem::path& path, std::span<const Document> docs);

std::vector<EntitySpan> read_spans_jsonl(const std::filesystem::path& path);
// Writes `{"doc_id","type","start","end","surface"}` lines. Surfaces are
// filled from `docs` when the span does not carry one.
void write_spans_jsonl(const std::filesystem::path& path, std::span<const EntitySpan> spans,
                       const Corpus& docs);

// BRAT standoff text-bound annotations (`T<k>\t<TYPE> <start> <end>\t<surface>`).
// Other annotation kinds are skipped; discontinuous spans are rejected.
std::vector<EntitySpan> read_brat(std::istream& in, const std::string& doc_id,
                                  const std::string& source_name);
// A single .ann file or a directory of them; file stem = doc id.
std::vector<EntitySpan> read_brat_path(const std::filesystem::path& path);

// Throws Error naming the span's origin on unknown doc, out-of-bounds
// offsets or a surface that disagrees with the text.
void validate_spans(const Corpus& corpus, std::span<const EntitySpan> spans);

// Annotations may be JSONL or BRAT (a directory or a `.ann` file).
std::vector<EntitySpan> read_annotations(const std::filesystem::path& path);

Corpus load_corpus(const std::filesystem::path& docs_path,
                   const std::filesystem::path& anns_path);

std::vector<EntitySpan> spans_of_type(std::span<const EntitySpan> spans, std::string_view type);

}  // namespace spantag
