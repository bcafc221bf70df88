#include "spantag/encoder.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "spantag/kernels.hpp"
#include "spantag/unicode.hpp"

namespace spantag {

namespace fs = std::filesystem;
using json = nlohmann::json;

void EncoderConfig::validate() const {
  if (dim < 1) throw Error("encoder dim must be >= 1");
  if (max_context_tokens < 1) throw Error("max_context_tokens must be >= 1");
  if (backend == EncoderBackend::kHashedNGram && table_size < 1) {
    throw Error("hashed encoder table size must be >= 1");
  }
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 14695981039346656037ull;
  for (char c : bytes) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ull;
  }
  return h;
}

std::vector<std::uint32_t> ngram_buckets(std::u32string_view token, std::size_t table_size) {
  std::u32string padded;
  padded.reserve(token.size() + 2);
  padded.push_back(U'^');
  padded.append(token);
  padded.push_back(U'$');
  std::vector<std::uint32_t> out;
  out.reserve(padded.size() - 2);
  std::string gram;
  for (std::size_t i = 0; i + 3 <= padded.size(); ++i) {
    gram.clear();
    for (std::size_t k = 0; k < 3; ++k) unicode::append_utf8(gram, padded[i + k]);
    out.push_back(static_cast<std::uint32_t>(fnv1a64(gram) % table_size));
  }
  return out;
}

NGramIndex index_ngrams(const TokenizedDocument& tdoc, std::size_t table_size) {
  NGramIndex index;
  index.doc_id = tdoc.doc ? tdoc.doc->id : std::string();
  index.tokens = tdoc.tokens;
  index.buckets.reserve(tdoc.size());
  for (const Token& t : tdoc.tokens) {
    std::u32string_view text(tdoc.doc->chars);
    index.buckets.push_back(ngram_buckets(text.substr(t.start, t.end - t.start), table_size));
  }
  return index;
}

EncoderOutput encode_hashed(const NGramIndex& index, const HashedNGramTable& table) {
  EncoderOutput out;
  out.doc_id = index.doc_id;
  out.dim = table.dim();
  out.tokens = index.tokens;
  out.vectors = Matrix(index.tokens.size(), table.dim());
  for (std::size_t t = 0; t < index.buckets.size(); ++t) {
    for (std::uint32_t b : index.buckets[t]) kernels::add(table.rows.row(b), out.vectors.row(t));
  }
  return out;
}

EncoderOutput encode_hashed(const TokenizedDocument& tdoc, const HashedNGramTable& table) {
  return encode_hashed(index_ngrams(tdoc, table.size()), table);
}

Matrix SparseRowGrad::to_dense(std::size_t table_size) const {
  Matrix dense(table_size, dim);
  for (std::size_t k = 0; k < rows.size(); ++k) {
    auto src = values.row(k);
    std::copy(src.begin(), src.end(), dense.row(rows[k]).begin());
  }
  return dense;
}

SparseRowGrad encode_hashed_backward(const Matrix& grad_vectors, const NGramIndex& index,
                                     const HashedNGramTable& table) {
  if (grad_vectors.rows != index.tokens.size() ||
      (grad_vectors.rows > 0 && grad_vectors.cols != table.dim())) {
    throw Error("encode_hashed_backward: gradient shape " + std::to_string(grad_vectors.rows) +
                "x" + std::to_string(grad_vectors.cols) + " does not match " +
                std::to_string(index.tokens.size()) + " tokens of dim " +
                std::to_string(table.dim()));
  }
  SparseRowGrad grad;
  grad.dim = table.dim();
  for (const auto& bs : index.buckets) grad.rows.insert(grad.rows.end(), bs.begin(), bs.end());
  std::sort(grad.rows.begin(), grad.rows.end());
  grad.rows.erase(std::unique(grad.rows.begin(), grad.rows.end()), grad.rows.end());
  grad.values = Matrix(grad.rows.size(), grad.dim);
  for (std::size_t t = 0; t < index.buckets.size(); ++t) {
    for (std::uint32_t b : index.buckets[t]) {
      const auto slot = static_cast<std::size_t>(
          std::lower_bound(grad.rows.begin(), grad.rows.end(), b) - grad.rows.begin());
      kernels::add(grad_vectors.row(t), grad.values.row(slot));
    }
  }
  return grad;
}

SparseRowGrad encode_hashed_backward(const Matrix& grad_vectors, const TokenizedDocument& tdoc,
                                     const HashedNGramTable& table) {
  return encode_hashed_backward(grad_vectors, index_ngrams(tdoc, table.size()), table);
}

namespace {

// Python's json module emits bare NaN/Infinity; nlohmann rejects them. Swap
// them for null outside strings so the reader can name the offending value.
std::string neutralize_non_finite(const std::string& line) {
  std::string out;
  out.reserve(line.size());
  bool in_string = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (in_string) {
      out.push_back(c);
      if (c == '\\' && i + 1 < line.size()) {
        out.push_back(line[++i]);
      } else if (c == '"') {
        in_string = false;
      }
      continue;
    }
    if (c == '"') {
      in_string = true;
      out.push_back(c);
      continue;
    }
    std::string_view rest(line.data() + i, line.size() - i);
    std::size_t skip = 0;
    if (rest.starts_with("NaN")) skip = 3;
    else if (rest.starts_with("-Infinity")) skip = 9;
    else if (rest.starts_with("Infinity")) skip = 8;
    if (skip) {
      out += "null";
      i += skip - 1;
    } else {
      out.push_back(c);
    }
  }
  return out;
}

void append_float(std::string& out, double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof buf, static_cast<float>(v));
  out.append(buf, res.ptr);
}

}  // namespace

EmbeddingsFile read_embeddings(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  EmbeddingsFile file;
  std::string line;
  std::size_t lineno = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string loc = path.string() + ":" + std::to_string(lineno);
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json obj;
    try {
      obj = json::parse(neutralize_non_finite(line));
    } catch (const json::parse_error& e) {
      throw Error(loc + ": malformed JSON: " + e.what());
    }
    try {
      if (!have_header) {
        if (obj.value("format", "") != "spantag-emb") {
          throw Error(loc + ": missing spantag-emb header");
        }
        if (obj.value("version", 0) != 1) throw Error(loc + ": unsupported embeddings version");
        file.dim = obj.at("dim").get<std::size_t>();
        if (file.dim < 1) throw Error(loc + ": dim must be >= 1");
        have_header = true;
        continue;
      }
      EncoderOutput enc;
      enc.doc_id = obj.at("doc_id").get<std::string>();
      enc.dim = file.dim;
      const auto& toks = obj.at("tokens");
      const auto& vecs = obj.at("vectors");
      if (toks.size() != vecs.size()) {
        throw Error(loc + ": document " + enc.doc_id + " has " + std::to_string(toks.size()) +
                    " tokens but " + std::to_string(vecs.size()) + " vectors");
      }
      enc.vectors = Matrix(toks.size(), file.dim);
      for (std::size_t t = 0; t < toks.size(); ++t) {
        const auto& pair = toks[t];
        if (!pair.is_array() || pair.size() != 2 || pair[0].get<long long>() < 0 ||
            pair[1].get<long long>() < 0) {
          throw Error(loc + ": document " + enc.doc_id + " token " + std::to_string(t) +
                      ": expected [start,end]");
        }
        enc.tokens.push_back({pair[0].get<std::size_t>(), pair[1].get<std::size_t>()});
        const auto& vec = vecs[t];
        if (!vec.is_array() || vec.size() != file.dim) {
          throw Error(loc + ": document " + enc.doc_id + " token " + std::to_string(t) +
                      ": vector length " + std::to_string(vec.size()) + " does not match dim " +
                      std::to_string(file.dim));
        }
        for (std::size_t d = 0; d < file.dim; ++d) {
          const double x = vec[d].is_number() ? vec[d].get<double>() : NAN;
          if (!std::isfinite(x) || !std::isfinite(static_cast<float>(x))) {
            throw Error(loc + ": document " + enc.doc_id + " token " + std::to_string(t) +
                        ": non-finite value at component " + std::to_string(d));
          }
          enc.vectors(t, d) = static_cast<float>(x);
        }
      }
      file.docs.push_back(std::move(enc));
    } catch (const json::exception& e) {
      throw Error(loc + ": " + e.what());
    }
  }
  if (!have_header) throw Error(path.string() + ": empty embeddings file");
  return file;
}

void write_embeddings(const fs::path& path, const EmbeddingsFile& file) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << json{{"format", "spantag-emb"}, {"version", 1}, {"dim", file.dim}}.dump() << '\n';
  for (const auto& enc : file.docs) {
    std::string line = "{\"doc_id\":" + json(enc.doc_id).dump() + ",\"tokens\":[";
    for (std::size_t t = 0; t < enc.tokens.size(); ++t) {
      if (t) line.push_back(',');
      line += "[" + std::to_string(enc.tokens[t].start) + "," +
              std::to_string(enc.tokens[t].end) + "]";
    }
    line += "],\"vectors\":[";
    for (std::size_t t = 0; t < enc.tokens.size(); ++t) {
      if (t) line.push_back(',');
      line.push_back('[');
      for (std::size_t d = 0; d < enc.dim; ++d) {
        if (d) line.push_back(',');
        append_float(line, enc.vectors(t, d));
      }
      line.push_back(']');
    }
    line += "]}";
    out << line << '\n';
  }
}

std::vector<EncoderOutput> load_external(const fs::path& path, const Corpus& corpus) {
  EmbeddingsFile file = read_embeddings(path);
  for (const auto& enc : file.docs) {
    const Document* doc = corpus.find(enc.doc_id);
    if (!doc) throw Error(path.string() + ": unknown document " + enc.doc_id);
    validate_tokens(*doc, enc.tokens);
  }
  return std::move(file.docs);
}

TokenizedDocument tokenized_view(const Document& doc, const EncoderOutput& enc) {
  return TokenizedDocument{&doc, enc.tokens};
}

}  // namespace spantag
