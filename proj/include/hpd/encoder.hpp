#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace hpd::encoder {

struct EncoderConfig {
  size_t vocab_size = 0;
  size_t layers = 1;
  size_t model_dim = 64;
  size_t heads = 4;
  size_t ffn_dim = 128;
  size_t max_len = 32;
  uint64_t seed = 42;

  void validate() const;  // throws InputError on violated invariants
};

// Token ids with a parallel validity mask (true = real token).
struct TokenSequence {
  std::vector<uint32_t> ids;
  std::vector<uint8_t> mask;

  size_t size() const { return ids.size(); }
};

// Word-level vocabulary with reserved PAD/OOV ids.
class Vocab {
 public:
  static constexpr uint32_t kPad = 0;
  static constexpr uint32_t kOov = 1;

  Vocab() = default;

  uint32_t id_of(const std::string& word) const;  // kOov when unknown
  size_t size() const { return 2 + words_.size(); }

  void add(const std::string& word, uint32_t id);
  const std::map<std::string, uint32_t>& entries() const { return words_; }

 private:
  std::map<std::string, uint32_t> words_;
};

// Frequency-built vocabulary: words seen fewer than min_count times are
// dropped and fall back to OOV. Ids are assigned by descending frequency,
// ties alphabetical.
Vocab build_vocab(std::span<const std::string> sentences, size_t min_count = 2);

std::vector<std::string> split_words(const std::string& text);

TokenSequence tokenize(const std::string& text, const Vocab& vocab,
                       size_t max_len);

struct LayerParams {
  std::vector<double> ln1_gain, ln1_bias;
  std::vector<double> wq, bq, wk, bk, wv, bv, wo, bo;  // w*: [D x D] row-major
  std::vector<double> ln2_gain, ln2_bias;
  std::vector<double> w1, b1;  // [F x D], [F]
  std::vector<double> w2, b2;  // [D x F], [D]
};

struct TensorView {
  std::string name;
  std::vector<size_t> shape;
  std::vector<double>* data;
};
struct ConstTensorView {
  std::string name;
  std::vector<size_t> shape;
  const std::vector<double>* data;
};

// All weights of the encoder, also used as the gradient container.
struct EncoderParams {
  EncoderConfig config;
  std::vector<double> tok_emb;  // [vocab x D]
  std::vector<double> pos_emb;  // [max_len x D]
  std::vector<LayerParams> layers;
  std::vector<double> lnf_gain, lnf_bias;

  static EncoderParams zeros(const EncoderConfig& config);
  std::vector<TensorView> tensors();
  std::vector<ConstTensorView> tensors() const;
  size_t parameter_count() const;
};

// Seeded deterministic init: linear weights N(0, 1/fan_in), embeddings
// N(0, 1/D), layer-norm gains 1, all biases 0.
EncoderParams init_params(const EncoderConfig& config);

// Forward pass: pre-LN transformer blocks, final layer norm, masked mean
// pooling. Returns a vector of width model_dim.
std::vector<double> encode(const EncoderParams& params,
                           const TokenSequence& seq);

// Analytic gradient of dot(upstream, encode(params, seq)) with respect to
// every parameter tensor.
EncoderParams encode_backward(const EncoderParams& params,
                              const TokenSequence& seq,
                              std::span<const double> upstream);

}  // namespace hpd::encoder
