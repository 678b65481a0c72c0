#include "hpd/io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "hpd/errors.hpp"

namespace hpd::io {

namespace {

// ==================================================================
// little-endian primitives
// ==================================================================

void put_u32(std::string& out, uint32_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
  out.push_back(static_cast<char>((v >> 16) & 0xff));
  out.push_back(static_cast<char>((v >> 24) & 0xff));
}

void put_u64(std::string& out, uint64_t v) {
  for (int i = 0; i < 8; ++i)
    out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f32(std::string& out, double v) {
  put_u32(out, std::bit_cast<uint32_t>(static_cast<float>(v)));
}

struct ByteReader {
  const std::string& buf;
  const std::string& path;
  size_t pos = 0;

  void need(size_t n) {
    if (pos + n > buf.size()) throw ParseError(path + ": truncated file");
  }
  uint32_t u32() {
    need(4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
      v |= static_cast<uint32_t>(static_cast<unsigned char>(buf[pos + i]))
           << (8 * i);
    pos += 4;
    return v;
  }
  uint64_t u64() {
    need(8);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i)
      v |= static_cast<uint64_t>(static_cast<unsigned char>(buf[pos + i]))
           << (8 * i);
    pos += 8;
    return v;
  }
  double f32() { return static_cast<double>(std::bit_cast<float>(u32())); }
  std::string str(size_t n) {
    need(n);
    std::string s = buf.substr(pos, n);
    pos += n;
    return s;
  }
  void expect_magic(const char* magic) {
    if (str(4) != magic) {
      throw ParseError(path + ": bad magic, expected " + std::string(magic));
    }
  }
  void expect_end() {
    if (pos != buf.size()) {
      throw ParseError(path + ": " + std::to_string(buf.size() - pos) +
                       " trailing bytes");
    }
  }
};

constexpr uint32_t kCheckpointVersion = 1;

void check_finite(const std::vector<double>& values, const std::string& path,
                  const std::string& what) {
  for (double v : values) {
    if (!std::isfinite(v)) {
      throw ParseError(path + ": non-finite value in " + what);
    }
  }
}

}  // namespace

// ==================================================================
// text files
// ==================================================================

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  if (in.bad()) throw IoError("read failure on " + path);
  return buf.str();
}

void write_bytes_atomic(const std::string& path, const std::string& bytes) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("short write to " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) {
    std::remove(tmp.c_str());
    throw IoError("cannot rename " + tmp + " to " + path);
  }
}

void write_text_atomic(const std::string& path, const std::string& content) {
  write_bytes_atomic(path, content);
}

// ==================================================================
// encoder checkpoints
// ==================================================================

void save_encoder(const std::string& path,
                  const encoder::EncoderParams& params) {
  std::string out;
  out += "HPDW";
  put_u32(out, kCheckpointVersion);

  auto views = params.tensors();
  put_u32(out, static_cast<uint32_t>(views.size() + 1));  // + meta

  auto put_tensor = [&out](const std::string& name,
                           const std::vector<size_t>& shape,
                           const std::vector<double>& values) {
    put_u32(out, static_cast<uint32_t>(name.size()));
    out += name;
    put_u32(out, static_cast<uint32_t>(shape.size()));
    for (size_t d : shape) put_u64(out, d);
    for (double v : values) put_f32(out, v);
  };

  // heads and the init seed are not recoverable from tensor shapes; stored
  // as 16-bit chunks, which f32 holds exactly
  const uint64_t seed = params.config.seed;
  std::vector<double> meta{
      static_cast<double>(params.config.heads),
      static_cast<double>(seed & 0xffff),
      static_cast<double>((seed >> 16) & 0xffff),
      static_cast<double>((seed >> 32) & 0xffff),
      static_cast<double>((seed >> 48) & 0xffff),
  };
  put_tensor("meta", {meta.size()}, meta);
  for (const auto& t : views) put_tensor(t.name, t.shape, *t.data);

  write_bytes_atomic(path, out);
}

encoder::EncoderParams load_encoder(const std::string& path) {
  const std::string buf = read_text_file(path);
  ByteReader r{buf, path};
  r.expect_magic("HPDW");
  const uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw ParseError(path + ": unsupported checkpoint version " +
                     std::to_string(version));
  }
  const uint32_t count = r.u32();

  struct Stored {
    std::vector<size_t> shape;
    std::vector<double> values;
  };
  std::map<std::string, Stored> table;
  for (uint32_t t = 0; t < count; ++t) {
    const uint32_t name_len = r.u32();
    std::string name = r.str(name_len);
    const uint32_t ndim = r.u32();
    Stored s;
    size_t n = 1;
    for (uint32_t i = 0; i < ndim; ++i) {
      s.shape.push_back(r.u64());
      n *= s.shape.back();
    }
    s.values.resize(n);
    for (size_t i = 0; i < n; ++i) s.values[i] = r.f32();
    if (!table.emplace(std::move(name), std::move(s)).second) {
      throw ParseError(path + ": duplicate tensor");
    }
  }
  r.expect_end();

  auto find = [&](const std::string& name) -> const Stored& {
    auto it = table.find(name);
    if (it == table.end()) {
      throw ParseError(path + ": missing tensor \"" + name + "\"");
    }
    return it->second;
  };

  const Stored& meta = find("meta");
  if (meta.shape != std::vector<size_t>{5}) {
    throw ParseError(path + ": bad meta tensor");
  }
  const Stored& tok = find("tok_emb");
  const Stored& pos = find("pos_emb");
  if (tok.shape.size() != 2 || pos.shape.size() != 2) {
    throw ParseError(path + ": bad embedding shapes");
  }

  encoder::EncoderConfig config;
  config.vocab_size = tok.shape[0];
  config.model_dim = tok.shape[1];
  config.max_len = pos.shape[0];
  config.heads = static_cast<size_t>(meta.values[0]);
  config.seed = static_cast<uint64_t>(meta.values[1]) |
                (static_cast<uint64_t>(meta.values[2]) << 16) |
                (static_cast<uint64_t>(meta.values[3]) << 32) |
                (static_cast<uint64_t>(meta.values[4]) << 48);
  size_t layers = 0;
  while (table.count("layer" + std::to_string(layers) + ".ln1.gain")) ++layers;
  config.layers = layers;
  if (layers == 0) throw ParseError(path + ": no transformer layers");
  const Stored& w1 = find("layer0.ffn.w1");
  if (w1.shape.size() != 2) throw ParseError(path + ": bad ffn.w1 shape");
  config.ffn_dim = w1.shape[0];
  config.validate();

  encoder::EncoderParams params = encoder::EncoderParams::zeros(config);
  size_t used = 1;  // meta
  for (auto& t : params.tensors()) {
    const Stored& s = find(t.name);
    if (s.shape != t.shape) {
      throw ParseError(path + ": tensor \"" + t.name + "\" has wrong shape");
    }
    check_finite(s.values, path, t.name);
    *t.data = s.values;
    ++used;
  }
  if (used != table.size()) {
    throw ParseError(path + ": unexpected extra tensors");
  }
  return params;
}

// ==================================================================
// vocabulary
// ==================================================================

void save_vocab(const std::string& path, const encoder::Vocab& vocab) {
  std::vector<std::pair<uint32_t, std::string>> by_id;
  for (const auto& [word, id] : vocab.entries()) by_id.emplace_back(id, word);
  std::sort(by_id.begin(), by_id.end());
  std::string out;
  for (const auto& [id, word] : by_id) {
    out += word;
    out += '\t';
    out += std::to_string(id);
    out += '\n';
  }
  write_text_atomic(path, out);
}

encoder::Vocab load_vocab(const std::string& path) {
  const std::string content = read_text_file(path);
  encoder::Vocab vocab;
  size_t start = 0, line_no = 0;
  while (start < content.size()) {
    size_t nl = content.find('\n', start);
    if (nl == std::string::npos) nl = content.size();
    std::string line = content.substr(start, nl - start);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    start = nl + 1;
    ++line_no;
    if (line.empty()) continue;
    const size_t tab = line.find('\t');
    if (tab == std::string::npos || tab == 0) {
      throw ParseError(path + ":" + std::to_string(line_no) +
                       ": expected token<TAB>id");
    }
    const std::string word = line.substr(0, tab);
    char* end = nullptr;
    const unsigned long id = std::strtoul(line.c_str() + tab + 1, &end, 10);
    if (end == line.c_str() + tab + 1 || *end != '\0') {
      throw ParseError(path + ":" + std::to_string(line_no) + ": bad id");
    }
    vocab.add(word, static_cast<uint32_t>(id));
  }
  return vocab;
}

// ==================================================================
// transforms
// ==================================================================

TransformFile from_pca(const reduce::PcaTransform& t) {
  return {TransformKind::kPca, t.mean, t.weights, {}};
}

TransformFile from_whitening(const reduce::WhiteningTransform& t) {
  return {TransformKind::kWhiten, t.mean, t.weights, {}};
}

TransformFile from_projection(const reduce::ProjectionHead& head) {
  return {TransformKind::kProj,
          std::vector<double>(head.weights.rows, 0.0), head.weights,
          head.bias};
}

reduce::ProjectionHead to_projection(const TransformFile& t) {
  reduce::ProjectionHead head;
  head.weights = t.weights;
  head.bias.assign(t.out_dim(), 0.0);
  if (!t.bias.empty()) head.bias = t.bias;
  // fold the centering into the bias: W^T(e - m) + b = W^T e + (b - W^T m)
  for (size_t i = 0; i < t.weights.rows; ++i)
    for (size_t j = 0; j < t.weights.cols; ++j)
      head.bias[j] -= t.weights.at(i, j) * t.mean[i];
  return head;
}

std::vector<double> apply_transform(const TransformFile& t,
                                    std::span<const double> e) {
  if (e.size() != t.in_dim()) {
    throw ShapeError("apply_transform: expected width " +
                     std::to_string(t.in_dim()) + ", got " +
                     std::to_string(e.size()));
  }
  std::vector<double> out(t.out_dim(), 0.0);
  if (!t.bias.empty()) out = t.bias;
  for (size_t i = 0; i < t.in_dim(); ++i) {
    const double c = e[i] - t.mean[i];
    const double* w = &t.weights.data[i * t.out_dim()];
    for (size_t j = 0; j < t.out_dim(); ++j) out[j] += w[j] * c;
  }
  return out;
}

void save_transform(const std::string& path, const TransformFile& t) {
  if (t.mean.size() != t.in_dim()) {
    throw ShapeError("save_transform: mean width does not match weights");
  }
  const bool proj = t.kind == TransformKind::kProj;
  if (proj && t.bias.size() != t.out_dim()) {
    throw ShapeError("save_transform: projection bias width mismatch");
  }
  if (!proj && !t.bias.empty()) {
    throw ShapeError("save_transform: bias only valid for projections");
  }
  std::string out;
  out += "HPDT";
  out.push_back(static_cast<char>(t.kind));
  put_u32(out, static_cast<uint32_t>(t.in_dim()));
  put_u32(out, static_cast<uint32_t>(t.out_dim()));
  for (double v : t.mean) put_f32(out, v);
  for (double v : t.weights.data) put_f32(out, v);
  if (proj) {
    for (double v : t.bias) put_f32(out, v);
  }
  write_bytes_atomic(path, out);
}

TransformFile load_transform(const std::string& path) {
  const std::string buf = read_text_file(path);
  ByteReader r{buf, path};
  r.expect_magic("HPDT");
  const uint8_t kind_byte = static_cast<uint8_t>(r.str(1)[0]);
  if (kind_byte > 2) {
    throw ParseError(path + ": unknown transform kind " +
                     std::to_string(kind_byte));
  }
  TransformFile t;
  t.kind = static_cast<TransformKind>(kind_byte);
  const size_t in = r.u32();
  const size_t out = r.u32();
  if (in < 1 || out < 1) throw ParseError(path + ": bad dimensions");
  t.mean.resize(in);
  for (auto& v : t.mean) v = r.f32();
  t.weights = linalg::Matrix(in, out);
  for (auto& v : t.weights.data) v = r.f32();
  if (t.kind == TransformKind::kProj) {
    t.bias.resize(out);
    for (auto& v : t.bias) v = r.f32();
  }
  r.expect_end();
  check_finite(t.mean, path, "mean");
  check_finite(t.weights.data, path, "weights");
  check_finite(t.bias, path, "bias");
  return t;
}

// ==================================================================
// embeddings
// ==================================================================

void save_embeddings(const std::string& path, const linalg::Matrix& rows) {
  std::string out;
  out += "HPDE";
  put_u64(out, rows.rows);
  put_u32(out, static_cast<uint32_t>(rows.cols));
  for (double v : rows.data) put_f32(out, v);
  write_bytes_atomic(path, out);
}

linalg::Matrix load_embeddings(const std::string& path) {
  const std::string buf = read_text_file(path);
  ByteReader r{buf, path};
  r.expect_magic("HPDE");
  const uint64_t count = r.u64();
  const uint32_t dim = r.u32();
  if (count < 1 || dim < 1) throw ParseError(path + ": empty embedding file");
  linalg::Matrix rows(count, dim);
  for (auto& v : rows.data) v = r.f32();
  r.expect_end();
  check_finite(rows.data, path, "embeddings");
  return rows;
}

// ==================================================================
// IVF index
// ==================================================================

void save_index(const std::string& path, const retrieval::IvfIndex& index) {
  std::string out;
  out += "HPDI";
  put_u32(out, static_cast<uint32_t>(index.dim));
  put_u32(out, static_cast<uint32_t>(index.nlist));
  put_u64(out, index.total);
  for (double v : index.centroids.data) put_f32(out, v);
  for (const auto& cell : index.cells) {
    put_u64(out, cell.ids.size());
    for (uint64_t id : cell.ids) put_u64(out, id);
    for (double v : cell.vectors) put_f32(out, v);
  }
  write_bytes_atomic(path, out);
}

retrieval::IvfIndex load_index(const std::string& path) {
  const std::string buf = read_text_file(path);
  ByteReader r{buf, path};
  r.expect_magic("HPDI");
  retrieval::IvfIndex index;
  index.dim = r.u32();
  index.nlist = r.u32();
  index.total = r.u64();
  if (index.dim < 1 || index.nlist < 1) {
    throw ParseError(path + ": bad index header");
  }
  index.centroids = linalg::Matrix(index.nlist, index.dim);
  for (auto& v : index.centroids.data) v = r.f32();
  index.cells.resize(index.nlist);
  size_t total = 0;
  for (auto& cell : index.cells) {
    const uint64_t n = r.u64();
    cell.ids.resize(n);
    for (auto& id : cell.ids) id = r.u64();
    cell.vectors.resize(n * index.dim);
    for (auto& v : cell.vectors) v = r.f32();
    total += n;
  }
  r.expect_end();
  if (total != index.total) {
    throw ParseError(path + ": cell sizes sum to " + std::to_string(total) +
                     ", header says " + std::to_string(index.total));
  }
  return index;
}

// ==================================================================
// config files
// ==================================================================

std::map<std::string, std::string> load_config(const std::string& path) {
  const std::string content = read_text_file(path);
  std::map<std::string, std::string> values;
  size_t start = 0, line_no = 0;
  auto trim = [](std::string s) {
    const char* ws = " \t\r";
    const size_t a = s.find_first_not_of(ws);
    if (a == std::string::npos) return std::string();
    const size_t b = s.find_last_not_of(ws);
    return s.substr(a, b - a + 1);
  };
  while (start < content.size()) {
    size_t nl = content.find('\n', start);
    if (nl == std::string::npos) nl = content.size();
    std::string line = content.substr(start, nl - start);
    start = nl + 1;
    ++line_no;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw ParseError(path + ":" + std::to_string(line_no) +
                       ": expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) {
      throw ParseError(path + ":" + std::to_string(line_no) + ": empty key");
    }
    values[key] = value;
  }
  return values;
}

void save_config(const std::string& path,
                 const std::map<std::string, std::string>& values) {
  std::string out;
  for (const auto& [k, v] : values) {
    out += k;
    out += " = ";
    out += v;
    out += '\n';
  }
  write_text_atomic(path, out);
}

void write_csv(const std::string& path, const std::string& header,
               const std::vector<std::string>& rows) {
  std::string out = header;
  out += '\n';
  for (const auto& row : rows) {
    out += row;
    out += '\n';
  }
  write_text_atomic(path, out);
}

}  // namespace hpd::io
