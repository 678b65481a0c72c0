#include "hpd/encoder.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <string>

#include "hpd/errors.hpp"
#include "hpd/rng.hpp"

namespace hpd::encoder {

namespace {

constexpr double kLnEps = 1e-5;
constexpr double kInvSqrt2Pi = 0.3989422804014326779;

double gelu(double x) {
  return 0.5 * x * (1.0 + std::erf(x * M_SQRT1_2));
}

double gelu_grad(double x) {
  const double phi = 0.5 * (1.0 + std::erf(x * M_SQRT1_2));
  const double density = kInvSqrt2Pi * std::exp(-0.5 * x * x);
  return phi + x * density;
}

// out[i] = sum_j w[i*in_dim + j] * x[j] + b[i]
void linear(const std::vector<double>& w, const std::vector<double>& b,
            const double* x, double* out, size_t out_dim, size_t in_dim) {
  for (size_t i = 0; i < out_dim; ++i) {
    double acc = b[i];
    const double* wr = w.data() + i * in_dim;
    for (size_t j = 0; j < in_dim; ++j) acc += wr[j] * x[j];
    out[i] = acc;
  }
}

// Backward of `linear`: accumulates into gw, gb, gx (gx may be null).
void linear_backward(const std::vector<double>& w, const double* x,
                     const double* gout, std::vector<double>& gw,
                     std::vector<double>& gb, double* gx, size_t out_dim,
                     size_t in_dim) {
  for (size_t i = 0; i < out_dim; ++i) {
    const double g = gout[i];
    gb[i] += g;
    double* gwr = gw.data() + i * in_dim;
    const double* wr = w.data() + i * in_dim;
    for (size_t j = 0; j < in_dim; ++j) {
      gwr[j] += g * x[j];
      if (gx) gx[j] += g * wr[j];
    }
  }
}

void layernorm(const double* x, const std::vector<double>& gain,
               const std::vector<double>& bias, double* out, double* mean_out,
               double* rstd_out, size_t d) {
  double mean = 0.0;
  for (size_t j = 0; j < d; ++j) mean += x[j];
  mean /= static_cast<double>(d);
  double var = 0.0;
  for (size_t j = 0; j < d; ++j) {
    const double c = x[j] - mean;
    var += c * c;
  }
  var /= static_cast<double>(d);
  const double rstd = 1.0 / std::sqrt(var + kLnEps);
  for (size_t j = 0; j < d; ++j)
    out[j] = gain[j] * (x[j] - mean) * rstd + bias[j];
  *mean_out = mean;
  *rstd_out = rstd;
}

// Accumulates parameter grads; writes input grad through gx (+=).
void layernorm_backward(const double* x, double mean, double rstd,
                        const std::vector<double>& gain, const double* gout,
                        std::vector<double>& g_gain, std::vector<double>& g_bias,
                        double* gx, size_t d) {
  double m1 = 0.0;  // mean of g_xhat
  double m2 = 0.0;  // mean of g_xhat * xhat
  for (size_t j = 0; j < d; ++j) {
    const double xhat = (x[j] - mean) * rstd;
    const double gxh = gout[j] * gain[j];
    g_gain[j] += gout[j] * xhat;
    g_bias[j] += gout[j];
    m1 += gxh;
    m2 += gxh * xhat;
  }
  m1 /= static_cast<double>(d);
  m2 /= static_cast<double>(d);
  for (size_t j = 0; j < d; ++j) {
    const double xhat = (x[j] - mean) * rstd;
    const double gxh = gout[j] * gain[j];
    gx[j] += rstd * (gxh - m1 - xhat * m2);
  }
}

struct LayerTrace {
  std::vector<double> x_in, n1, mean1, rstd1;
  std::vector<double> q, k, v;
  std::vector<double> att;  // [H x T x T], zero where key is masked
  std::vector<double> ctx, x_mid, n2, mean2, rstd2;
  std::vector<double> f1, act;
};

struct Trace {
  std::vector<LayerTrace> layers;
  std::vector<double> x_out, meanf, rstdf;
};

void check_sequence(const EncoderConfig& cfg, const TokenSequence& seq) {
  if (seq.ids.empty() || seq.ids.size() != seq.mask.size()) {
    throw InputError("encode: ids/mask must be non-empty and equal length");
  }
  if (seq.ids.size() > cfg.max_len) {
    throw InputError("encode: sequence longer than max_len");
  }
  bool any = false;
  for (size_t t = 0; t < seq.size(); ++t) {
    if (seq.ids[t] >= cfg.vocab_size) {
      throw InputError("encode: token id " + std::to_string(seq.ids[t]) +
                       " out of vocabulary range");
    }
    any = any || seq.mask[t];
  }
  if (!any) throw InputError("encode: all positions masked out");
}

std::vector<double> run_forward(const EncoderParams& params,
                                const TokenSequence& seq, Trace& trace) {
  const EncoderConfig& cfg = params.config;
  check_sequence(cfg, seq);
  const size_t T = seq.size();
  const size_t D = cfg.model_dim;
  const size_t H = cfg.heads;
  const size_t Dh = D / H;
  const size_t F = cfg.ffn_dim;
  const double scale = 1.0 / std::sqrt(static_cast<double>(Dh));

  std::vector<double> x(T * D);
  for (size_t t = 0; t < T; ++t) {
    const double* te = params.tok_emb.data() + size_t{seq.ids[t]} * D;
    const double* pe = params.pos_emb.data() + t * D;
    for (size_t j = 0; j < D; ++j) x[t * D + j] = te[j] + pe[j];
  }

  trace.layers.resize(cfg.layers);
  for (size_t l = 0; l < cfg.layers; ++l) {
    const LayerParams& lp = params.layers[l];
    LayerTrace& lt = trace.layers[l];
    lt.x_in = x;
    lt.n1.resize(T * D);
    lt.mean1.resize(T);
    lt.rstd1.resize(T);
    lt.q.resize(T * D);
    lt.k.resize(T * D);
    lt.v.resize(T * D);
    lt.att.assign(H * T * T, 0.0);
    lt.ctx.assign(T * D, 0.0);

    for (size_t t = 0; t < T; ++t) {
      layernorm(x.data() + t * D, lp.ln1_gain, lp.ln1_bias,
                lt.n1.data() + t * D, &lt.mean1[t], &lt.rstd1[t], D);
      linear(lp.wq, lp.bq, lt.n1.data() + t * D, lt.q.data() + t * D, D, D);
      linear(lp.wk, lp.bk, lt.n1.data() + t * D, lt.k.data() + t * D, D, D);
      linear(lp.wv, lp.bv, lt.n1.data() + t * D, lt.v.data() + t * D, D, D);
    }

    // attention, masked keys excluded from the softmax
    std::vector<double> scores(T);
    for (size_t h = 0; h < H; ++h) {
      const size_t off = h * Dh;
      for (size_t t = 0; t < T; ++t) {
        double maxs = -1e300;
        for (size_t u = 0; u < T; ++u) {
          if (!seq.mask[u]) continue;
          const double* qh = lt.q.data() + t * D + off;
          const double* kh = lt.k.data() + u * D + off;
          double s = 0.0;
          for (size_t j = 0; j < Dh; ++j) s += qh[j] * kh[j];
          s *= scale;
          scores[u] = s;
          maxs = std::max(maxs, s);
        }
        double denom = 0.0;
        for (size_t u = 0; u < T; ++u) {
          if (!seq.mask[u]) continue;
          denom += std::exp(scores[u] - maxs);
        }
        double* att_row = lt.att.data() + (h * T + t) * T;
        for (size_t u = 0; u < T; ++u) {
          if (!seq.mask[u]) continue;
          att_row[u] = std::exp(scores[u] - maxs) / denom;
        }
        double* ctx_h = lt.ctx.data() + t * D + off;
        for (size_t u = 0; u < T; ++u) {
          const double a = att_row[u];
          if (a == 0.0) continue;
          const double* vh = lt.v.data() + u * D + off;
          for (size_t j = 0; j < Dh; ++j) ctx_h[j] += a * vh[j];
        }
      }
    }

    lt.x_mid.resize(T * D);
    std::vector<double> ao(D);
    for (size_t t = 0; t < T; ++t) {
      linear(lp.wo, lp.bo, lt.ctx.data() + t * D, ao.data(), D, D);
      for (size_t j = 0; j < D; ++j) lt.x_mid[t * D + j] = x[t * D + j] + ao[j];
    }

    lt.n2.resize(T * D);
    lt.mean2.resize(T);
    lt.rstd2.resize(T);
    lt.f1.resize(T * F);
    lt.act.resize(T * F);
    std::vector<double> f3(D);
    for (size_t t = 0; t < T; ++t) {
      layernorm(lt.x_mid.data() + t * D, lp.ln2_gain, lp.ln2_bias,
                lt.n2.data() + t * D, &lt.mean2[t], &lt.rstd2[t], D);
      linear(lp.w1, lp.b1, lt.n2.data() + t * D, lt.f1.data() + t * F, F, D);
      for (size_t j = 0; j < F; ++j)
        lt.act[t * F + j] = gelu(lt.f1[t * F + j]);
      linear(lp.w2, lp.b2, lt.act.data() + t * F, f3.data(), D, F);
      for (size_t j = 0; j < D; ++j)
        x[t * D + j] = lt.x_mid[t * D + j] + f3[j];
    }
  }

  trace.x_out = x;
  trace.meanf.resize(T);
  trace.rstdf.resize(T);
  std::vector<double> nf(T * D);
  for (size_t t = 0; t < T; ++t) {
    layernorm(x.data() + t * D, params.lnf_gain, params.lnf_bias,
              nf.data() + t * D, &trace.meanf[t], &trace.rstdf[t], D);
  }

  size_t count = 0;
  std::vector<double> pooled(D, 0.0);
  for (size_t t = 0; t < T; ++t) {
    if (!seq.mask[t]) continue;
    ++count;
    for (size_t j = 0; j < D; ++j) pooled[j] += nf[t * D + j];
  }
  for (size_t j = 0; j < D; ++j) pooled[j] /= static_cast<double>(count);
  return pooled;
}

}  // namespace

void EncoderConfig::validate() const {
  if (vocab_size < 1 || layers < 1 || model_dim < 1 || heads < 1 ||
      ffn_dim < 1 || max_len < 1) {
    throw InputError("encoder config: all counts must be >= 1");
  }
  if (model_dim % heads != 0) {
    throw InputError("encoder config: model_dim must be divisible by heads");
  }
}

uint32_t Vocab::id_of(const std::string& word) const {
  auto it = words_.find(word);
  return it == words_.end() ? kOov : it->second;
}

void Vocab::add(const std::string& word, uint32_t id) {
  if (id < 2) throw InputError("vocab: ids 0 and 1 are reserved");
  words_[word] = id;
}

std::vector<std::string> split_words(const std::string& text) {
  std::vector<std::string> words;
  std::string cur;
  for (char c : text) {
    const unsigned char uc = static_cast<unsigned char>(c);
    if (std::isalnum(uc)) {
      cur.push_back(static_cast<char>(std::tolower(uc)));
    } else if (!cur.empty()) {
      words.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) words.push_back(std::move(cur));
  return words;
}

Vocab build_vocab(std::span<const std::string> sentences, size_t min_count) {
  std::map<std::string, size_t> counts;
  for (const std::string& s : sentences) {
    for (std::string& w : split_words(s)) counts[w] += 1;
  }
  std::vector<std::pair<std::string, size_t>> kept;
  for (const auto& [word, n] : counts) {
    if (n >= min_count) kept.emplace_back(word, n);
  }
  std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  Vocab vocab;
  uint32_t next = 2;
  for (const auto& [word, n] : kept) vocab.add(word, next++);
  return vocab;
}

TokenSequence tokenize(const std::string& text, const Vocab& vocab,
                       size_t max_len) {
  std::vector<std::string> words = split_words(text);
  if (words.empty()) {
    throw InputError("tokenize: empty text");
  }
  TokenSequence seq;
  for (const std::string& w : words) {
    if (seq.ids.size() == max_len) break;
    seq.ids.push_back(vocab.id_of(w));
    seq.mask.push_back(1);
  }
  return seq;
}

EncoderParams EncoderParams::zeros(const EncoderConfig& config) {
  config.validate();
  const size_t D = config.model_dim;
  const size_t F = config.ffn_dim;
  EncoderParams p;
  p.config = config;
  p.tok_emb.assign(config.vocab_size * D, 0.0);
  p.pos_emb.assign(config.max_len * D, 0.0);
  p.layers.resize(config.layers);
  for (LayerParams& lp : p.layers) {
    lp.ln1_gain.assign(D, 0.0);
    lp.ln1_bias.assign(D, 0.0);
    lp.wq.assign(D * D, 0.0);
    lp.bq.assign(D, 0.0);
    lp.wk.assign(D * D, 0.0);
    lp.bk.assign(D, 0.0);
    lp.wv.assign(D * D, 0.0);
    lp.bv.assign(D, 0.0);
    lp.wo.assign(D * D, 0.0);
    lp.bo.assign(D, 0.0);
    lp.ln2_gain.assign(D, 0.0);
    lp.ln2_bias.assign(D, 0.0);
    lp.w1.assign(F * D, 0.0);
    lp.b1.assign(F, 0.0);
    lp.w2.assign(D * F, 0.0);
    lp.b2.assign(D, 0.0);
  }
  p.lnf_gain.assign(D, 0.0);
  p.lnf_bias.assign(D, 0.0);
  return p;
}

std::vector<TensorView> EncoderParams::tensors() {
  const size_t D = config.model_dim;
  const size_t F = config.ffn_dim;
  std::vector<TensorView> out;
  out.push_back({"tok_emb", {config.vocab_size, D}, &tok_emb});
  out.push_back({"pos_emb", {config.max_len, D}, &pos_emb});
  for (size_t l = 0; l < layers.size(); ++l) {
    const std::string p = "layer" + std::to_string(l) + ".";
    LayerParams& lp = layers[l];
    out.push_back({p + "ln1.gain", {D}, &lp.ln1_gain});
    out.push_back({p + "ln1.bias", {D}, &lp.ln1_bias});
    out.push_back({p + "attn.wq", {D, D}, &lp.wq});
    out.push_back({p + "attn.bq", {D}, &lp.bq});
    out.push_back({p + "attn.wk", {D, D}, &lp.wk});
    out.push_back({p + "attn.bk", {D}, &lp.bk});
    out.push_back({p + "attn.wv", {D, D}, &lp.wv});
    out.push_back({p + "attn.bv", {D}, &lp.bv});
    out.push_back({p + "attn.wo", {D, D}, &lp.wo});
    out.push_back({p + "attn.bo", {D}, &lp.bo});
    out.push_back({p + "ln2.gain", {D}, &lp.ln2_gain});
    out.push_back({p + "ln2.bias", {D}, &lp.ln2_bias});
    out.push_back({p + "ffn.w1", {F, D}, &lp.w1});
    out.push_back({p + "ffn.b1", {F}, &lp.b1});
    out.push_back({p + "ffn.w2", {D, F}, &lp.w2});
    out.push_back({p + "ffn.b2", {D}, &lp.b2});
  }
  out.push_back({"ln_f.gain", {D}, &lnf_gain});
  out.push_back({"ln_f.bias", {D}, &lnf_bias});
  return out;
}

std::vector<ConstTensorView> EncoderParams::tensors() const {
  std::vector<ConstTensorView> out;
  for (const TensorView& t : const_cast<EncoderParams*>(this)->tensors()) {
    out.push_back({t.name, t.shape, t.data});
  }
  return out;
}

size_t EncoderParams::parameter_count() const {
  size_t n = 0;
  for (const ConstTensorView& t : tensors()) n += t.data->size();
  return n;
}

EncoderParams init_params(const EncoderConfig& config) {
  config.validate();
  EncoderParams p = EncoderParams::zeros(config);
  Rng rng(config.seed);
  const double emb_std = 1.0 / std::sqrt(static_cast<double>(config.model_dim));
  const double d_std = emb_std;
  const double f_std = 1.0 / std::sqrt(static_cast<double>(config.ffn_dim));

  auto fill = [&rng](std::vector<double>& v, double std) {
    for (double& x : v) x = rng.normal(0.0, std);
  };
  auto ones = [](std::vector<double>& v) { std::fill(v.begin(), v.end(), 1.0); };

  fill(p.tok_emb, emb_std);
  fill(p.pos_emb, emb_std);
  for (LayerParams& lp : p.layers) {
    ones(lp.ln1_gain);
    fill(lp.wq, d_std);
    fill(lp.wk, d_std);
    fill(lp.wv, d_std);
    fill(lp.wo, d_std);
    ones(lp.ln2_gain);
    fill(lp.w1, d_std);  // fan_in = model_dim
    fill(lp.w2, f_std);  // fan_in = ffn_dim
  }
  ones(p.lnf_gain);
  return p;
}

std::vector<double> encode(const EncoderParams& params,
                           const TokenSequence& seq) {
  Trace trace;
  return run_forward(params, seq, trace);
}

EncoderParams encode_backward(const EncoderParams& params,
                              const TokenSequence& seq,
                              std::span<const double> upstream) {
  const EncoderConfig& cfg = params.config;
  const size_t D = cfg.model_dim;
  if (upstream.size() != D) {
    throw ShapeError("encode_backward: upstream width " +
                     std::to_string(upstream.size()) + " != model_dim " +
                     std::to_string(D));
  }
  Trace trace;
  run_forward(params, seq, trace);

  const size_t T = seq.size();
  const size_t H = cfg.heads;
  const size_t Dh = D / H;
  const size_t F = cfg.ffn_dim;
  const double scale = 1.0 / std::sqrt(static_cast<double>(Dh));

  EncoderParams grads = EncoderParams::zeros(cfg);

  size_t count = 0;
  for (size_t t = 0; t < T; ++t) count += seq.mask[t] ? 1 : 0;
  const double inv_count = 1.0 / static_cast<double>(count);

  // through final layer norm
  std::vector<double> g_x(T * D, 0.0);
  std::vector<double> g_nf(D);
  for (size_t t = 0; t < T; ++t) {
    if (!seq.mask[t]) continue;
    for (size_t j = 0; j < D; ++j) g_nf[j] = upstream[j] * inv_count;
    layernorm_backward(trace.x_out.data() + t * D, trace.meanf[t],
                       trace.rstdf[t], params.lnf_gain, g_nf.data(),
                       grads.lnf_gain, grads.lnf_bias, g_x.data() + t * D, D);
  }

  for (size_t l = cfg.layers; l-- > 0;) {
    const LayerParams& lp = params.layers[l];
    const LayerTrace& lt = trace.layers[l];
    LayerParams& gl = grads.layers[l];

    // ---- feed-forward sublayer ----
    // g_x is the gradient at x_out = x_mid + f3
    std::vector<double> g_x_mid = g_x;  // residual branch
    std::vector<double> g_act(F), g_f1(F), g_n2(D);
    for (size_t t = 0; t < T; ++t) {
      const double* g_f3 = g_x.data() + t * D;
      std::fill(g_act.begin(), g_act.end(), 0.0);
      linear_backward(lp.w2, lt.act.data() + t * F, g_f3, gl.w2, gl.b2,
                      g_act.data(), D, F);
      for (size_t j = 0; j < F; ++j)
        g_f1[j] = g_act[j] * gelu_grad(lt.f1[t * F + j]);
      std::fill(g_n2.begin(), g_n2.end(), 0.0);
      linear_backward(lp.w1, lt.n2.data() + t * D, g_f1.data(), gl.w1, gl.b1,
                      g_n2.data(), F, D);
      layernorm_backward(lt.x_mid.data() + t * D, lt.mean2[t], lt.rstd2[t],
                         lp.ln2_gain, g_n2.data(), gl.ln2_gain, gl.ln2_bias,
                         g_x_mid.data() + t * D, D);
    }

    // ---- attention sublayer ----
    // g_x_mid is the gradient at x_mid = x_in + attn_out
    std::vector<double> g_x_in = g_x_mid;  // residual branch
    std::vector<double> g_ctx(T * D, 0.0);
    for (size_t t = 0; t < T; ++t) {
      linear_backward(lp.wo, lt.ctx.data() + t * D, g_x_mid.data() + t * D,
                      gl.wo, gl.bo, g_ctx.data() + t * D, D, D);
    }

    std::vector<double> g_q(T * D, 0.0), g_k(T * D, 0.0), g_v(T * D, 0.0);
    std::vector<double> g_att(T), g_s(T);
    for (size_t h = 0; h < H; ++h) {
      const size_t off = h * Dh;
      for (size_t t = 0; t < T; ++t) {
        const double* att_row = lt.att.data() + (h * T + t) * T;
        const double* g_ctx_h = g_ctx.data() + t * D + off;
        double dot_ag = 0.0;
        for (size_t u = 0; u < T; ++u) {
          if (!seq.mask[u]) {
            g_att[u] = 0.0;
            continue;
          }
          const double* vh = lt.v.data() + u * D + off;
          double s = 0.0;
          for (size_t j = 0; j < Dh; ++j) s += g_ctx_h[j] * vh[j];
          g_att[u] = s;
          dot_ag += att_row[u] * s;
          // value gradient: v_h[u] += att[t][u] * g_ctx_h
          double* gvh = g_v.data() + u * D + off;
          const double a = att_row[u];
          for (size_t j = 0; j < Dh; ++j) gvh[j] += a * g_ctx_h[j];
        }
        // softmax backward over unmasked keys
        double* gqh = g_q.data() + t * D + off;
        const double* qh = lt.q.data() + t * D + off;
        for (size_t u = 0; u < T; ++u) {
          if (!seq.mask[u]) continue;
          const double gs = att_row[u] * (g_att[u] - dot_ag) * scale;
          if (gs == 0.0) continue;
          const double* kh = lt.k.data() + u * D + off;
          double* gkh = g_k.data() + u * D + off;
          for (size_t j = 0; j < Dh; ++j) {
            gqh[j] += gs * kh[j];
            gkh[j] += gs * qh[j];
          }
        }
      }
    }

    std::vector<double> g_n1(D);
    for (size_t t = 0; t < T; ++t) {
      std::fill(g_n1.begin(), g_n1.end(), 0.0);
      linear_backward(lp.wq, lt.n1.data() + t * D, g_q.data() + t * D, gl.wq,
                      gl.bq, g_n1.data(), D, D);
      linear_backward(lp.wk, lt.n1.data() + t * D, g_k.data() + t * D, gl.wk,
                      gl.bk, g_n1.data(), D, D);
      linear_backward(lp.wv, lt.n1.data() + t * D, g_v.data() + t * D, gl.wv,
                      gl.bv, g_n1.data(), D, D);
      layernorm_backward(lt.x_in.data() + t * D, lt.mean1[t], lt.rstd1[t],
                         lp.ln1_gain, g_n1.data(), gl.ln1_gain, gl.ln1_bias,
                         g_x_in.data() + t * D, D);
    }
    g_x = std::move(g_x_in);
  }

  // embeddings
  for (size_t t = 0; t < T; ++t) {
    double* gt = grads.tok_emb.data() + size_t{seq.ids[t]} * D;
    double* gp = grads.pos_emb.data() + t * D;
    const double* gx = g_x.data() + t * D;
    for (size_t j = 0; j < D; ++j) {
      gt[j] += gx[j];
      gp[j] += gx[j];
    }
  }
  return grads;
}

}  // namespace hpd::encoder
