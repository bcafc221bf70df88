#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "spantag/corpus.hpp"
#include "spantag/matrix.hpp"

namespace spantag {

struct EncoderOutput {
  std::string doc_id;
  std::size_t dim = 0;
  std::vector<Token> tokens;
  Matrix vectors;  // tokens.size() x dim

  std::size_t size() const { return tokens.size(); }
};

enum class EncoderBackend { kHashedNGram, kExternal };

struct EncoderConfig {
  EncoderBackend backend = EncoderBackend::kHashedNGram;
  std::size_t dim = 32;
  std::size_t table_size = 65536;
  std::size_t max_context_tokens = 8192;

  void validate() const;
};

// Trainable V x D lookup table indexed by hashed character 3-grams.
struct HashedNGramTable {
  Matrix rows;
  bool trainable = true;

  std::size_t size() const { return rows.rows; }
  std::size_t dim() const { return rows.cols; }
};

std::uint64_t fnv1a64(std::string_view bytes);

// Table rows hit by a token: one bucket per 3-gram of "^token$", in order,
// repeats kept. Each 3-gram is hashed as UTF-8.
std::vector<std::uint32_t> ngram_buckets(std::u32string_view token, std::size_t table_size);

// Bucket lists for every token of a document, reusable across epochs.
struct NGramIndex {
  std::string doc_id;
  std::vector<Token> tokens;
  std::vector<std::vector<std::uint32_t>> buckets;
};

NGramIndex index_ngrams(const TokenizedDocument& tdoc, std::size_t table_size);

EncoderOutput encode_hashed(const NGramIndex& index, const HashedNGramTable& table);
EncoderOutput encode_hashed(const TokenizedDocument& tdoc, const HashedNGramTable& table);

// Gradient of a document's loss w.r.t. the table, restricted to the rows it
// touches. `rows` is sorted and unique; `values` holds one row per entry.
struct SparseRowGrad {
  std::size_t dim = 0;
  std::vector<std::uint32_t> rows;
  Matrix values;

  Matrix to_dense(std::size_t table_size) const;
};

SparseRowGrad encode_hashed_backward(const Matrix& grad_vectors, const NGramIndex& index,
                                     const HashedNGramTable& table);
SparseRowGrad encode_hashed_backward(const Matrix& grad_vectors, const TokenizedDocument& tdoc,
                                     const HashedNGramTable& table);

// Embeddings file: a `{"format":"spantag-emb","version":1,"dim":D}` header
// line, then one `{"doc_id","tokens":[[s,e],...],"vectors":[[...],...]}`
// line per document. Values are stored as 32-bit floats.
struct EmbeddingsFile {
  std::size_t dim = 0;
  std::vector<EncoderOutput> docs;
};

EmbeddingsFile read_embeddings(const std::filesystem::path& path);
void write_embeddings(const std::filesystem::path& path, const EmbeddingsFile& file);

// Reads an embeddings file and checks every entry against the corpus:
// known doc, in-bounds sorted tokens, finite values, one dim throughout.
std::vector<EncoderOutput> load_external(const std::filesystem::path& path, const Corpus& corpus);

// Token view of a document built from externally supplied offsets.
TokenizedDocument tokenized_view(const Document& doc, const EncoderOutput& enc);

}  // namespace spantag
