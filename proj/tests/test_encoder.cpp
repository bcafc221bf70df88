#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "spantag/encoder.hpp"
#include "spantag/unicode.hpp"
#include "support/generators.hpp"
#include "support/oracles.hpp"

using namespace spantag;
namespace fs = std::filesystem;

namespace {

HashedNGramTable random_table(std::size_t v, std::size_t d, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  HashedNGramTable t;
  t.rows = Matrix(v, d);
  for (double& x : t.rows.data) x = testing::draw_real(rng, -1.0, 1.0);
  return t;
}

fs::path temp_path(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "spantag_test_encoder";
  fs::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST_CASE("FNV-1a 64 golden values") {
  CHECK(fnv1a64("") == 0xcbf29ce484222325ull);
  CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cull);
  CHECK(fnv1a64("^ab") == 0xc37f601a13114326ull);
  CHECK(fnv1a64("ab$") == 0xe71fe7190541cc8aull);
  CHECK(ngram_buckets(U"ab", 65536) == std::vector<std::uint32_t>{17190, 52362});
  CHECK(ngram_buckets(U"č.", 65536).front() == 5896);
}

TEST_CASE("encode_hashed sums the rows of the token's 3-grams") {
  const Document doc = make_document("d", "en", "ab");
  const HashedNGramTable table = random_table(65536, 4, 1);
  const EncoderOutput out = encode_hashed(tokenize(doc), table);
  REQUIRE(out.size() == 1);
  for (std::size_t c = 0; c < 4; ++c) {
    CHECK(out.vectors(0, c) == table.rows(17190, c) + table.rows(52362, c));
  }
}

TEST_CASE("zero table gives zero vectors") {
  const Document doc = make_document("d", "en", "bolest hlavy, horečka");
  HashedNGramTable table;
  table.rows = Matrix(128, 6);
  const EncoderOutput out = encode_hashed(tokenize(doc), table);
  CHECK(out.size() == 4);
  for (double x : out.vectors.data) CHECK(x == 0.0);
}

TEST_CASE("encode_hashed agrees with an independent 3-gram enumerator") {
  const Document doc = make_document("d", "ro", "Durere în piept, febră 38 și tuse");
  const HashedNGramTable table = random_table(997, 5, 3);
  const TokenizedDocument tdoc = tokenize(doc);
  const EncoderOutput out = encode_hashed(tdoc, table);
  for (std::size_t t = 0; t < tdoc.size(); ++t) {
    const auto& tok = tdoc.tokens[t];
    const auto expect = oracle::hashed_vector(doc.chars.substr(tok.start, tok.end - tok.start), table.rows);
    for (std::size_t c = 0; c < 5; ++c) CHECK(out.vectors(t, c) == doctest::Approx(expect[c]).epsilon(1e-14));
  }
  // "febră" and "tuse" share no 3-gram bucket here; their vectors differ.
  CHECK(out.vectors.row(4)[0] != out.vectors.row(7)[0]);
  // Repeated calls are bit-identical.
  CHECK(encode_hashed(tdoc, table).vectors == out.vectors);
}

TEST_CASE("encode_hashed_backward routes gradients to the hashed rows") {
  const Document one = make_document("d", "en", "a");
  const HashedNGramTable table = random_table(64, 3, 4);
  Matrix g(1, 3);
  g(0, 0) = 1.5, g(0, 1) = -2.0, g(0, 2) = 0.25;
  const SparseRowGrad grad = encode_hashed_backward(g, tokenize(one), table);
  REQUIRE(grad.rows.size() == 1);
  CHECK(grad.rows[0] == oracle::fnv1a("^a$") % 64);
  CHECK(grad.values.row(0)[0] == 1.5);
  CHECK(grad.values.row(0)[1] == -2.0);
  const Matrix dense = grad.to_dense(64);
  double total = 0.0;
  for (double x : dense.data) total += std::abs(x);
  CHECK(total == doctest::Approx(3.75));

  const Document empty = make_document("e", "en", "");
  CHECK(encode_hashed_backward(Matrix(0, 3), tokenize(empty), table).rows.empty());

  CHECK_THROWS_AS(encode_hashed_backward(Matrix(2, 3), tokenize(one), table), Error);
  CHECK_THROWS_AS(encode_hashed_backward(Matrix(1, 4), tokenize(one), table), Error);
}

TEST_CASE("encode_hashed_backward matches central finite differences") {
  std::mt19937_64 rng(8);
  const Document doc = make_document("d", "en", "pain aches pain");
  HashedNGramTable table = random_table(16, 4, 9);  // small table forces collisions
  const TokenizedDocument tdoc = tokenize(doc);
  Matrix upstream(3, 4);
  for (double& x : upstream.data) x = testing::draw_real(rng, -1, 1);
  // Scalar objective: sum_t <upstream_t, v_t> + 0.5 * sum v^2, so the
  // gradient depends on the table values too.
  auto objective = [&] {
    const EncoderOutput out = encode_hashed(tdoc, table);
    double s = 0.0;
    for (std::size_t i = 0; i < out.vectors.data.size(); ++i) {
      s += upstream.data[i] * out.vectors.data[i] + 0.5 * out.vectors.data[i] * out.vectors.data[i];
    }
    return s;
  };
  const EncoderOutput out = encode_hashed(tdoc, table);
  Matrix g = upstream;
  for (std::size_t i = 0; i < g.data.size(); ++i) g.data[i] += out.vectors.data[i];
  const Matrix analytic = encode_hashed_backward(g, tdoc, table).to_dense(16);
  for (int k = 0; k < 5; ++k) {
    const std::size_t idx = testing::draw(rng, 0, table.rows.data.size() - 1);
    const double numeric = oracle::central_difference(objective, table.rows.data[idx], 1e-3);
    const double a = analytic.data[idx];
    const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-12});
    CHECK((rel < 1e-4 || (a == 0.0 && std::abs(numeric) < 1e-9)));
  }
}

TEST_CASE("embeddings file load/save") {
  Corpus corpus;
  corpus.docs.push_back(make_document("d1", "en", "chest pain ."));
  corpus.docs.push_back(make_document("d2", "en", std::string(2000, 'x') + " y"));
  corpus.reindex();

  EmbeddingsFile file;
  file.dim = 8;
  EncoderOutput e1;
  e1.doc_id = "d1";
  e1.dim = 8;
  e1.tokens = {{0, 5}, {6, 10}, {11, 12}};
  e1.vectors = Matrix(3, 8);
  for (std::size_t i = 0; i < e1.vectors.data.size(); ++i) e1.vectors.data[i] = static_cast<float>(0.1 * i - 1.0);
  file.docs.push_back(e1);
  const fs::path p = temp_path("emb.jsonl");
  write_embeddings(p, file);

  SUBCASE("one document with three vectors") {
    const auto loaded = load_external(p, corpus);
    REQUIRE(loaded.size() == 1);
    CHECK(loaded[0].size() == 3);
    CHECK(loaded[0].tokens == e1.tokens);
    CHECK(loaded[0].vectors == e1.vectors);
    // save of a load is the identity on the file.
    const fs::path p2 = temp_path("emb2.jsonl");
    write_embeddings(p2, EmbeddingsFile{8, loaded});
    std::ifstream a(p), b(p2);
    std::string sa((std::istreambuf_iterator<char>(a)), {}), sb((std::istreambuf_iterator<char>(b)), {});
    CHECK(sa == sb);
  }

  SUBCASE("NaN names document and token") {
    const fs::path bad = temp_path("nan.jsonl");
    std::ofstream(bad) << R"({"format":"spantag-emb","version":1,"dim":2})" "\n"
                       << R"({"doc_id":"d1","tokens":[[0,5],[6,10]],"vectors":[[0.1,0.2],[NaN,0.3]]})" "\n";
    CHECK_THROWS_WITH_AS(load_external(bad, corpus), doctest::Contains("document d1 token 1"), Error);
  }

  SUBCASE("vector length must equal header dim") {
    const fs::path bad = temp_path("dim.jsonl");
    std::ofstream(bad) << R"({"format":"spantag-emb","version":1,"dim":2})" "\n"
                       << R"({"doc_id":"d1","tokens":[[0,5]],"vectors":[[0.1,0.2,0.3]]})" "\n";
    CHECK_THROWS_WITH_AS(load_external(bad, corpus), doctest::Contains("does not match dim"), Error);
  }

  SUBCASE("offsets out of bounds") {
    const fs::path bad = temp_path("oob.jsonl");
    std::ofstream(bad) << R"({"format":"spantag-emb","version":1,"dim":1})" "\n"
                       << R"({"doc_id":"d1","tokens":[[6,40]],"vectors":[[0.5]]})" "\n";
    CHECK_THROWS_WITH_AS(load_external(bad, corpus), doctest::Contains("token 0"), Error);
  }

  SUBCASE("documents longer than the context limit load unchanged") {
    EncoderConfig cfg;
    cfg.max_context_tokens = 1;
    cfg.validate();
    const fs::path longer = temp_path("long.jsonl");
    EncoderOutput e2;
    e2.doc_id = "d2";
    e2.dim = 1;
    e2.tokens = {{0, 2000}, {2001, 2002}};
    e2.vectors = Matrix(2, 1);
    write_embeddings(longer, EmbeddingsFile{1, {e2}});
    const auto loaded = load_external(longer, corpus);
    CHECK(loaded[0].size() == 2);
    CHECK(loaded[0].size() > cfg.max_context_tokens);
  }

  SUBCASE("missing header") {
    const fs::path bad = temp_path("nohdr.jsonl");
    std::ofstream(bad) << R"({"doc_id":"d1","tokens":[],"vectors":[]})" "\n";
    CHECK_THROWS_AS(load_external(bad, corpus), Error);
  }
}

TEST_CASE("encoder config validation") {
  EncoderConfig cfg;
  CHECK(cfg.max_context_tokens == 8192);
  CHECK_NOTHROW(cfg.validate());
  cfg.max_context_tokens = 0;
  CHECK_THROWS_AS(cfg.validate(), Error);
}
