#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "hpd/encoder.hpp"
#include "hpd/linalg.hpp"
#include "hpd/reduce.hpp"
#include "hpd/retrieval.hpp"

namespace hpd::io {

// ==================================================================
// text files
// ==================================================================

std::string read_text_file(const std::string& path);
// write temp file in the same directory, then rename over the target
void write_text_atomic(const std::string& path, const std::string& content);
void write_bytes_atomic(const std::string& path, const std::string& bytes);

// ==================================================================
// encoder checkpoints — magic "HPDW"
// ==================================================================

void save_encoder(const std::string& path, const encoder::EncoderParams& params);
encoder::EncoderParams load_encoder(const std::string& path);

// vocabulary TSV: token<TAB>id
void save_vocab(const std::string& path, const encoder::Vocab& vocab);
encoder::Vocab load_vocab(const std::string& path);

// ==================================================================
// linear transforms — magic "HPDT"
// ==================================================================

enum class TransformKind : uint8_t { kPca = 0, kWhiten = 1, kProj = 2 };

// One container for all three: y = W^T (e - mean) + bias, with mean == 0 for
// projection heads and bias == 0 for PCA/whitening.
struct TransformFile {
  TransformKind kind = TransformKind::kPca;
  std::vector<double> mean;   // width in_dim
  linalg::Matrix weights;     // in_dim x out_dim
  std::vector<double> bias;   // width out_dim
  size_t in_dim() const { return weights.rows; }
  size_t out_dim() const { return weights.cols; }
};

TransformFile from_pca(const reduce::PcaTransform& t);
TransformFile from_whitening(const reduce::WhiteningTransform& t);
TransformFile from_projection(const reduce::ProjectionHead& head);
reduce::ProjectionHead to_projection(const TransformFile& t);

std::vector<double> apply_transform(const TransformFile& t,
                                    std::span<const double> e);

void save_transform(const std::string& path, const TransformFile& t);
TransformFile load_transform(const std::string& path);

// ==================================================================
// embedding matrices — magic "HPDE"
// ==================================================================

void save_embeddings(const std::string& path, const linalg::Matrix& rows);
linalg::Matrix load_embeddings(const std::string& path);

// ==================================================================
// IVF index — magic "HPDI"
// ==================================================================

void save_index(const std::string& path, const retrieval::IvfIndex& index);
retrieval::IvfIndex load_index(const std::string& path);

// ==================================================================
// flat config files: key = value, '#' comments
// ==================================================================

std::map<std::string, std::string> load_config(const std::string& path);
void save_config(const std::string& path,
                 const std::map<std::string, std::string>& values);

// CSV with header; each row joined by commas
void write_csv(const std::string& path, const std::string& header,
               const std::vector<std::string>& rows);

}  // namespace hpd::io
