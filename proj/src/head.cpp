#include "spantag/head.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <map>
#include <random>

#include "spantag/kernels.hpp"

namespace spantag {

namespace {

constexpr std::size_t kLabels = kNumLabels;

std::span<const double> kernel_row(const std::vector<double>& w, std::size_t tap,
                                   std::size_t in, std::size_t cin, std::size_t cout) {
  return {w.data() + (tap * cin + in) * cout, cout};
}

std::span<double> kernel_row(std::vector<double>& w, std::size_t tap, std::size_t in,
                             std::size_t cin, std::size_t cout) {
  return {w.data() + (tap * cin + in) * cout, cout};
}

// Same-padded convolution: out[t] = b + sum_j sum_c in[t+j-2][c] * w[j][c][:].
Matrix conv_forward(const Matrix& in, const std::vector<double>& w, const std::vector<double>& b,
                    std::size_t cout) {
  const std::size_t n = in.rows;
  const std::size_t cin = in.cols;
  Matrix out(n, cout);
  for (std::size_t t = 0; t < n; ++t) {
    auto dst = out.row(t);
    std::copy(b.begin(), b.end(), dst.begin());
    for (std::size_t j = 0; j < kConvWidth; ++j) {
      if (t + j < kConvPad || t + j - kConvPad >= n) continue;
      const std::size_t src = t + j - kConvPad;
      for (std::size_t c = 0; c < cin; ++c) {
        kernels::axpy(in(src, c), kernel_row(w, j, c, cin, cout), dst);
      }
    }
  }
  return out;
}

void conv_backward(const Matrix& in, const std::vector<double>& w, const Matrix& dout,
                   std::vector<double>& dw, std::vector<double>& db, Matrix* din) {
  const std::size_t n = in.rows;
  const std::size_t cin = in.cols;
  const std::size_t cout = dout.cols;
  for (std::size_t t = 0; t < n; ++t) {
    auto g = dout.row(t);
    kernels::add(g, db);
    for (std::size_t j = 0; j < kConvWidth; ++j) {
      if (t + j < kConvPad || t + j - kConvPad >= n) continue;
      const std::size_t src = t + j - kConvPad;
      for (std::size_t c = 0; c < cin; ++c) {
        kernels::axpy(in(src, c), g, kernel_row(dw, j, c, cin, cout));
        if (din) (*din)(src, c) += kernels::dot(kernel_row(w, j, c, cin, cout), g);
      }
    }
  }
}

Matrix relu(const Matrix& z) {
  Matrix h = z;
  for (double& x : h.data) x = x > 0.0 ? x : 0.0;
  return h;
}

void relu_backward(const Matrix& z, Matrix& grad) {
  for (std::size_t i = 0; i < z.data.size(); ++i) {
    if (!(z.data[i] > 0.0)) grad.data[i] = 0.0;
  }
}

void check_dims(const EncoderOutput& enc, const TaggerParams& params) {
  if (enc.vectors.rows != enc.tokens.size() ||
      (enc.vectors.rows > 0 && enc.vectors.cols != params.dim) || enc.dim != params.dim) {
    throw Error("encoder output for " + enc.doc_id + " has dim " + std::to_string(enc.dim) +
                " but the tagger expects " + std::to_string(params.dim));
  }
}

double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

void fill_uniform(std::vector<double>& v, double limit, std::mt19937_64& rng) {
  for (double& x : v) x = (2.0 * uniform01(rng) - 1.0) * limit;
}

// Unbiased draw in [0, n).
std::size_t bounded(std::mt19937_64& rng, std::size_t n) {
  const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
  std::uint64_t x;
  do {
    x = rng();
  } while (x >= limit);
  return static_cast<std::size_t>(x % n);
}

}  // namespace

TaggerParams TaggerParams::zeros(std::size_t dim, std::size_t hidden, std::size_t table_size) {
  TaggerParams p;
  p.dim = dim;
  p.hidden = hidden;
  p.w1.assign(kConvWidth * dim * hidden, 0.0);
  p.b1.assign(hidden, 0.0);
  p.w2.assign(kConvWidth * hidden * hidden, 0.0);
  p.b2.assign(hidden, 0.0);
  p.wout.assign(hidden * kLabels, 0.0);
  p.bout.assign(kLabels, 0.0);
  p.table.rows = Matrix(table_size, table_size ? dim : 0);
  return p;
}

TaggerParams TaggerParams::init(std::size_t dim, std::size_t hidden, std::size_t table_size,
                                std::uint64_t seed) {
  TaggerParams p = zeros(dim, hidden, table_size);
  std::mt19937_64 rng(seed);
  fill_uniform(p.w1, std::sqrt(6.0 / static_cast<double>(kConvWidth * dim)), rng);
  fill_uniform(p.w2, std::sqrt(6.0 / static_cast<double>(kConvWidth * hidden)), rng);
  fill_uniform(p.wout, std::sqrt(6.0 / static_cast<double>(hidden + kLabels)), rng);
  fill_uniform(p.table.rows.data, 0.1, rng);
  return p;
}

bool TaggerParams::operator==(const TaggerParams& o) const {
  return dim == o.dim && hidden == o.hidden && w1 == o.w1 && b1 == o.b1 && w2 == o.w2 &&
         b2 == o.b2 && wout == o.wout && bout == o.bout && table.rows == o.table.rows;
}

HeadActivations forward_activations(const EncoderOutput& enc, const TaggerParams& params) {
  check_dims(enc, params);
  HeadActivations a;
  const std::size_t h = params.hidden;
  a.z1 = conv_forward(enc.vectors, params.w1, params.b1, h);
  a.h1 = relu(a.z1);
  a.z2 = conv_forward(a.h1, params.w2, params.b2, h);
  a.h2 = relu(a.z2);
  a.logits = Matrix(enc.size(), kLabels);
  for (std::size_t t = 0; t < enc.size(); ++t) {
    for (std::size_t c = 0; c < kLabels; ++c) a.logits(t, c) = params.bout[c];
    for (std::size_t k = 0; k < h; ++k) {
      const double x = a.h2(t, k);
      for (std::size_t c = 0; c < kLabels; ++c) a.logits(t, c) += x * params.wout[k * kLabels + c];
    }
  }
  return a;
}

Matrix forward(const EncoderOutput& enc, const TaggerParams& params) {
  return forward_activations(enc, params).logits;
}

namespace {

// Returns log-sum-exp of a logit row and writes softmax into `probs`.
double softmax_row(std::span<const double> row, double* probs) {
  const double m = *std::max_element(row.begin(), row.end());
  double z = 0.0;
  for (std::size_t c = 0; c < row.size(); ++c) {
    probs[c] = std::exp(row[c] - m);
    z += probs[c];
  }
  for (std::size_t c = 0; c < row.size(); ++c) probs[c] /= z;
  return m + std::log(z);
}

void check_gold(const Matrix& logits, const LabelSeq& gold) {
  if (logits.rows != gold.size()) {
    throw Error("label sequence length " + std::to_string(gold.size()) + " does not match " +
                std::to_string(logits.rows) + " tokens");
  }
}

}  // namespace

double loss(const Matrix& logits, const LabelSeq& gold) {
  check_gold(logits, gold);
  double total = 0.0;
  double probs[kLabels];
  for (std::size_t t = 0; t < logits.rows; ++t) {
    const double lse = softmax_row(logits.row(t), probs);
    total += lse - logits(t, static_cast<std::size_t>(gold[t]));
  }
  return total;
}

TaggerGrads TaggerGrads::zeros_like(const TaggerParams& params, std::size_t tokens) {
  TaggerGrads g;
  g.w1.assign(params.w1.size(), 0.0);
  g.b1.assign(params.b1.size(), 0.0);
  g.w2.assign(params.w2.size(), 0.0);
  g.b2.assign(params.b2.size(), 0.0);
  g.wout.assign(params.wout.size(), 0.0);
  g.bout.assign(params.bout.size(), 0.0);
  g.vectors = Matrix(tokens, params.dim);
  g.table.dim = params.dim;
  return g;
}

TaggerGrads backward(const EncoderOutput& enc, const TaggerParams& params, const LabelSeq& gold,
                     const NGramIndex* ngrams) {
  const HeadActivations a = forward_activations(enc, params);
  check_gold(a.logits, gold);
  const std::size_t n = enc.size();
  const std::size_t h = params.hidden;
  TaggerGrads g = TaggerGrads::zeros_like(params, n);

  Matrix dh2(n, h);
  double probs[kLabels];
  for (std::size_t t = 0; t < n; ++t) {
    g.loss += softmax_row(a.logits.row(t), probs) - a.logits(t, static_cast<std::size_t>(gold[t]));
    probs[static_cast<std::size_t>(gold[t])] -= 1.0;
    for (std::size_t c = 0; c < kLabels; ++c) g.bout[c] += probs[c];
    for (std::size_t k = 0; k < h; ++k) {
      const double x = a.h2(t, k);
      double acc = 0.0;
      for (std::size_t c = 0; c < kLabels; ++c) {
        g.wout[k * kLabels + c] += x * probs[c];
        acc += params.wout[k * kLabels + c] * probs[c];
      }
      dh2(t, k) = acc;
    }
  }

  relu_backward(a.z2, dh2);
  Matrix dh1(n, h);
  conv_backward(a.h1, params.w2, dh2, g.w2, g.b2, &dh1);
  relu_backward(a.z1, dh1);
  conv_backward(enc.vectors, params.w1, dh1, g.w1, g.b1, &g.vectors);

  if (ngrams && params.has_table()) g.table = encode_hashed_backward(g.vectors, *ngrams, params.table);
  return g;
}

LabelSeq argmax_labels(const Matrix& logits) {
  LabelSeq out(logits.rows, Label::O);
  for (std::size_t t = 0; t < logits.rows; ++t) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < kLabels; ++c) {
      if (logits(t, c) > logits(t, best)) best = c;
    }
    out[t] = static_cast<Label>(best);
  }
  return out;
}

LabelSeq predict(const EncoderOutput& enc, const TaggerParams& params) {
  return argmax_labels(forward(enc, params));
}

void TrainConfig::validate() const {
  if (epochs < 1) throw Error("epochs must be >= 1");
  if (!(lr > 0.0)) throw Error("learning rate must be > 0");
  if (batch < 1) throw Error("batch must be >= 1");
  if (hidden < 1 || dim < 1) throw Error("hidden and dim must be >= 1");
  if (logs_per_epoch < 1) throw Error("logs_per_epoch must be >= 1");
}

namespace {

struct AdamState {
  std::vector<double> m, v;
  explicit AdamState(std::size_t n = 0) : m(n, 0.0), v(n, 0.0) {}
};

void adam_update(std::vector<double>& p, AdamState& s, const std::vector<double>& g,
                 const kernels::AdamStep& step) {
  kernels::active().adam(p.data(), s.m.data(), s.v.data(), g.data(), p.size(), step);
}

}  // namespace

TrainResult train(const std::vector<TrainingExample>& examples, const TrainConfig& cfg,
                  std::optional<TaggerParams> initial) {
  cfg.validate();
  if (examples.empty()) throw Error("cannot train on an empty corpus");

  const bool external = examples.front().external.has_value();
  for (const auto& ex : examples) {
    if (ex.external.has_value() != external || (!external && !ex.ngrams)) {
      throw Error("training examples mix external and hashed encoders");
    }
  }
  const std::size_t dim = external ? examples.front().external->dim : cfg.dim;

  TrainResult result;
  result.params = initial ? std::move(*initial)
                          : TaggerParams::init(dim, cfg.hidden, external ? 0 : cfg.table_size,
                                               cfg.seed ^ 0x9E3779B97F4A7C15ull);
  TaggerParams& p = result.params;
  const bool update_table = p.has_table() && !cfg.freeze_encoder && p.table.trainable;

  AdamState s_w1(p.w1.size()), s_b1(p.b1.size()), s_w2(p.w2.size()), s_b2(p.b2.size()),
      s_wout(p.wout.size()), s_bout(p.bout.size());
  AdamState s_table(update_table ? p.table.rows.data.size() : 0);
  Matrix table_acc(update_table ? p.table.size() : 0, p.dim);
  std::vector<char> touched(update_table ? p.table.size() : 0, 0);
  std::vector<std::uint32_t> touched_rows;

  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(examples.size());
  for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;

  const std::size_t steps_per_epoch = (examples.size() + cfg.batch - 1) / cfg.batch;
  double beta1_t = 1.0;
  double beta2_t = 1.0;
  double window_loss = 0.0;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t k = order.size(); k > 1; --k) std::swap(order[k - 1], order[bounded(rng, k)]);

    for (std::size_t step = 0; step < steps_per_epoch; ++step) {
      TaggerGrads acc = TaggerGrads::zeros_like(p, 0);
      const std::size_t first = step * cfg.batch;
      const std::size_t last = std::min(first + cfg.batch, examples.size());
      for (std::size_t k = first; k < last; ++k) {
        const TrainingExample& ex = examples[order[k]];
        const EncoderOutput enc = external ? *ex.external : encode_hashed(*ex.ngrams, p.table);
        const TaggerGrads g =
            backward(enc, p, ex.gold, update_table ? &*ex.ngrams : nullptr);
        window_loss += g.loss;
        kernels::add(g.w1, acc.w1);
        kernels::add(g.b1, acc.b1);
        kernels::add(g.w2, acc.w2);
        kernels::add(g.b2, acc.b2);
        kernels::add(g.wout, acc.wout);
        kernels::add(g.bout, acc.bout);
        for (std::size_t r = 0; r < g.table.rows.size(); ++r) {
          const std::uint32_t row = g.table.rows[r];
          if (!touched[row]) {
            touched[row] = 1;
            touched_rows.push_back(row);
          }
          kernels::add(g.table.values.row(r), table_acc.row(row));
        }
      }

      beta1_t *= cfg.beta1;
      beta2_t *= cfg.beta2;
      const kernels::AdamStep adam{cfg.lr, cfg.beta1, cfg.beta2, cfg.eps, 1.0 - beta1_t,
                                   1.0 - beta2_t};
      adam_update(p.w1, s_w1, acc.w1, adam);
      adam_update(p.b1, s_b1, acc.b1, adam);
      adam_update(p.w2, s_w2, acc.w2, adam);
      adam_update(p.b2, s_b2, acc.b2, adam);
      adam_update(p.wout, s_wout, acc.wout, adam);
      adam_update(p.bout, s_bout, acc.bout, adam);
      if (update_table) {
        std::sort(touched_rows.begin(), touched_rows.end());
        for (std::uint32_t row : touched_rows) {
          const std::size_t off = static_cast<std::size_t>(row) * p.dim;
          kernels::active().adam(p.table.rows.data.data() + off, s_table.m.data() + off,
                                 s_table.v.data() + off, table_acc.row(row).data(), p.dim, adam);
          auto r = table_acc.row(row);
          std::fill(r.begin(), r.end(), 0.0);
          touched[row] = 0;
        }
        touched_rows.clear();
      }
      ++result.steps;

      // Log points split each epoch into `logs_per_epoch` roughly equal parts.
      const std::size_t done = step + 1;
      if ((done * cfg.logs_per_epoch) / steps_per_epoch !=
          (step * cfg.logs_per_epoch) / steps_per_epoch) {
        result.trace.push_back({static_cast<double>(epoch) +
                                    static_cast<double>(done) / static_cast<double>(steps_per_epoch),
                                window_loss});
        window_loss = 0.0;
      }
    }
  }
  return result;
}

std::vector<TrainingExample> make_examples(const Corpus& corpus, std::string_view entity_type,
                                           std::size_t table_size,
                                           const std::vector<EncoderOutput>* external) {
  std::map<std::string, std::vector<EntitySpan>, std::less<>> by_doc;
  for (auto& s : spans_of_type(corpus.spans, entity_type)) by_doc[s.doc_id].push_back(s);

  std::map<std::string, const EncoderOutput*, std::less<>> ext;
  if (external) {
    for (const auto& e : *external) ext[e.doc_id] = &e;
  }

  std::vector<TrainingExample> examples;
  for (const Document& doc : corpus.docs) {
    TrainingExample ex;
    TokenizedDocument tdoc;
    if (external) {
      auto it = ext.find(doc.id);
      if (it == ext.end()) throw Error("no embeddings for document " + doc.id);
      ex.external = *it->second;
      tdoc = tokenized_view(doc, *it->second);
    } else {
      tdoc = tokenize(doc);
      ex.ngrams = index_ngrams(tdoc, table_size);
    }
    auto it = by_doc.find(doc.id);
    static const std::vector<EntitySpan> kNoSpans;
    ex.gold = project_bio(tdoc, it == by_doc.end() ? kNoSpans : it->second);
    examples.push_back(std::move(ex));
  }
  return examples;
}

TrainResult train(const Corpus& corpus, std::string_view entity_type, const TrainConfig& cfg,
                  const std::vector<EncoderOutput>* external) {
  if (corpus.docs.empty()) throw Error("cannot train on an empty corpus");
  if (spans_of_type(corpus.spans, entity_type).empty()) {
    throw Error("corpus has no gold spans of type " + std::string(entity_type));
  }
  return train(make_examples(corpus, entity_type, cfg.table_size, external), cfg);
}

EncoderOutput encode_for(const TaggerParams& params, const TokenizedDocument& tdoc) {
  if (!params.has_table()) throw Error("model has no hashed encoder table; supply embeddings");
  return encode_hashed(tdoc, params.table);
}

void write_loss_trace(const std::filesystem::path& path, const LossTrace& trace) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << "fractional_epoch,loss\n";
  char buf[64];
  for (const auto& pt : trace) {
    std::snprintf(buf, sizeof buf, "%.4f,%.4f\n", pt.epoch, pt.loss);
    out << buf;
  }
}

namespace {

void put_u32(std::ostream& out, std::uint32_t v) {
  const char bytes[4] = {static_cast<char>(v & 0xFF), static_cast<char>((v >> 8) & 0xFF),
                         static_cast<char>((v >> 16) & 0xFF), static_cast<char>((v >> 24) & 0xFF)};
  out.write(bytes, 4);
}

std::uint32_t get_u32(std::istream& in) {
  unsigned char bytes[4];
  if (!in.read(reinterpret_cast<char*>(bytes), 4)) throw Error("truncated checkpoint");
  return static_cast<std::uint32_t>(bytes[0]) | (static_cast<std::uint32_t>(bytes[1]) << 8) |
         (static_cast<std::uint32_t>(bytes[2]) << 16) | (static_cast<std::uint32_t>(bytes[3]) << 24);
}

void put_tensor(std::ostream& out, std::span<const double> values) {
  for (double v : values) put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
}

void get_tensor(std::istream& in, std::span<double> values) {
  for (double& v : values) v = std::bit_cast<float>(get_u32(in));
}

std::uint32_t checked_u32(std::size_t v) {
  if (v > 0xFFFFFFFFu) throw Error("tensor dimension does not fit the checkpoint format");
  return static_cast<std::uint32_t>(v);
}

}  // namespace

void save_checkpoint(std::ostream& out, const TaggerParams& p) {
  out.write("SPTG", 4);
  put_u32(out, kCheckpointVersion);
  put_u32(out, checked_u32(p.dim));
  put_u32(out, checked_u32(p.hidden));
  put_u32(out, checked_u32(p.table.size()));
  put_tensor(out, p.w1);
  put_tensor(out, p.b1);
  put_tensor(out, p.w2);
  put_tensor(out, p.b2);
  put_tensor(out, p.wout);
  put_tensor(out, p.bout);
  put_tensor(out, p.table.rows.data);
  if (!out) throw Error("failed writing checkpoint");
}

void save_checkpoint(const std::filesystem::path& path, const TaggerParams& params) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  save_checkpoint(out, params);
}

TaggerParams load_checkpoint(std::istream& in) {
  char magic[4];
  if (!in.read(magic, 4) || std::string_view(magic, 4) != "SPTG") {
    throw Error("not a spantag checkpoint (bad magic)");
  }
  const std::uint32_t version = get_u32(in);
  if (version != kCheckpointVersion) {
    throw Error("unsupported checkpoint version " + std::to_string(version));
  }
  const std::uint32_t dim = get_u32(in);
  const std::uint32_t hidden = get_u32(in);
  const std::uint32_t table = get_u32(in);
  if (dim == 0 || hidden == 0) throw Error("checkpoint has zero-sized dimensions");
  TaggerParams p = TaggerParams::zeros(dim, hidden, table);
  get_tensor(in, p.w1);
  get_tensor(in, p.b1);
  get_tensor(in, p.w2);
  get_tensor(in, p.b2);
  get_tensor(in, p.wout);
  get_tensor(in, p.bout);
  get_tensor(in, p.table.rows.data);
  return p;
}

TaggerParams load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  return load_checkpoint(in);
}

}  // namespace spantag
