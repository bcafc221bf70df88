#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <vector>

#include "spantag/corpus.hpp"
#include "spantag/encoder.hpp"
#include "spantag/matrix.hpp"

namespace spantag {

inline constexpr std::size_t kConvWidth = 5;
inline constexpr std::size_t kConvPad = kConvWidth / 2;

// Two same-padded width-5 convolutions with ReLU, then a linear layer onto
// the B/I/O logits. Conv kernels are stored [tap][in][out].
struct TaggerParams {
  std::size_t dim = 0;     // D, encoder vector size
  std::size_t hidden = 0;  // H, both conv layers
  std::vector<double> w1;  // k x D x H
  std::vector<double> b1;  // H
  std::vector<double> w2;  // k x H x H
  std::vector<double> b2;  // H
  std::vector<double> wout;  // H x 3
  std::vector<double> bout;  // 3
  // Present for the hashed backend; empty (size 0) with external vectors.
  HashedNGramTable table;

  static TaggerParams zeros(std::size_t dim, std::size_t hidden, std::size_t table_size);
  // He-uniform conv and output weights, zero biases, small uniform table.
  static TaggerParams init(std::size_t dim, std::size_t hidden, std::size_t table_size,
                           std::uint64_t seed);

  bool has_table() const { return table.size() > 0; }
  bool operator==(const TaggerParams& o) const;
};

struct HeadActivations {
  Matrix z1, h1, z2, h2, logits;
};

HeadActivations forward_activations(const EncoderOutput& enc, const TaggerParams& params);
Matrix forward(const EncoderOutput& enc, const TaggerParams& params);

// Softmax cross-entropy summed over tokens.
double loss(const Matrix& logits, const LabelSeq& gold);

struct TaggerGrads {
  std::vector<double> w1, b1, w2, b2, wout, bout;
  Matrix vectors;       // d loss / d encoder vectors
  SparseRowGrad table;  // filled only when an NGramIndex is supplied
  double loss = 0.0;

  static TaggerGrads zeros_like(const TaggerParams& params, std::size_t tokens);
};

// Exact reverse-mode gradients of `loss(forward(enc, params), gold)`.
// With `ngrams`, the vector gradient is pushed through the hashed table too.
TaggerGrads backward(const EncoderOutput& enc, const TaggerParams& params, const LabelSeq& gold,
                     const NGramIndex* ngrams = nullptr);

// Argmax per token; ties go to the earlier label in B, I, O order.
LabelSeq argmax_labels(const Matrix& logits);
LabelSeq predict(const EncoderOutput& enc, const TaggerParams& params);

struct TrainConfig {
  std::size_t epochs = 4;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::size_t batch = 1;
  std::uint64_t seed = 0;
  std::size_t hidden = 64;
  std::size_t dim = 32;
  std::size_t table_size = 65536;
  bool freeze_encoder = false;
  std::size_t logs_per_epoch = 11;

  void validate() const;
};

struct LossPoint {
  double epoch;  // fractional, counted from 0
  double loss;   // summed over the documents since the previous point
};

using LossTrace = std::vector<LossPoint>;

// One training document: fixed external vectors, or hashed-table features.
struct TrainingExample {
  std::optional<EncoderOutput> external;
  std::optional<NGramIndex> ngrams;
  LabelSeq gold;
};

struct TrainResult {
  TaggerParams params;
  LossTrace trace;
  std::size_t steps = 0;
};

// Adam over shuffled documents, `batch` documents per step. Table rows are
// updated lazily: only rows with gradient in the current step move.
TrainResult train(const std::vector<TrainingExample>& examples, const TrainConfig& cfg,
                  std::optional<TaggerParams> initial = std::nullopt);

// One model per entity type. Uses the hashed encoder over the toolkit
// tokenizer, or `external` vectors (and their token offsets) when given.
TrainResult train(const Corpus& corpus, std::string_view entity_type, const TrainConfig& cfg,
                  const std::vector<EncoderOutput>* external = nullptr);

std::vector<TrainingExample> make_examples(const Corpus& corpus, std::string_view entity_type,
                                           std::size_t table_size,
                                           const std::vector<EncoderOutput>* external);

// Encoder vectors for a document, from the params' table or external data.
EncoderOutput encode_for(const TaggerParams& params, const TokenizedDocument& tdoc);

void write_loss_trace(const std::filesystem::path& path, const LossTrace& trace);

// Checkpoint: "SPTG", u32 version, u32 D, H, V, then w1 b1 w2 b2 wout bout
// table as little-endian f32, row-major.
inline constexpr std::uint32_t kCheckpointVersion = 1;
void save_checkpoint(std::ostream& out, const TaggerParams& params);
void save_checkpoint(const std::filesystem::path& path, const TaggerParams& params);
TaggerParams load_checkpoint(std::istream& in);
TaggerParams load_checkpoint(const std::filesystem::path& path);

}  // namespace spantag
