#pragma once

// Small autoregressive token policy with exact sampling, log-probabilities
// and hand-derived gradients.
//
//   h      = tanh(sum_j E_j[c_j] + a)      c_j = token j+1 positions back (PAD before start)
//   logits = B h + b
//   p      = softmax(logits)
//
// E holds one table per window offset, so the hidden layer sees every
// (offset, token) pair of the window directly.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "a2d/rng.hpp"
#include "a2d/vocab.hpp"

namespace a2d::policy {

struct PolicyShape {
  int window = 32;
  int hidden_dim = 256;
  int vocab_size = vocab::kSize;

  std::size_t embedding_size() const {
    return static_cast<std::size_t>(window) * vocab_size * hidden_dim;
  }
  std::size_t param_count() const {
    const std::size_t d = hidden_dim, v = vocab_size;
    return embedding_size() + d + v * d + v;
  }
  void validate() const {
    if (window < 1 || hidden_dim < 1 || vocab_size < 1)
      throw std::invalid_argument("policy shape entries must be positive");
  }
  friend bool operator==(const PolicyShape&, const PolicyShape&) = default;
};

struct PolicyParams {
  PolicyShape shape;
  std::vector<double> values;
  std::string version = "toy-policy/2";
  std::string lineage;     // free-form seed history, e.g. "init:7>backbone:7"
  std::string provenance;  // config hash, master seed and code version of the producing run

  void check() const {
    if (values.size() != shape.param_count())
      throw std::invalid_argument("parameter count does not match shape");
    for (double v : values)
      if (!std::isfinite(v)) throw std::invalid_argument("non-finite parameter");
  }
};

/// Offsets of each block inside the flat vector.
struct Layout {
  std::size_t emb, hidden_b, out_w, out_b, total;

  explicit Layout(const PolicyShape& s) {
    const std::size_t d = s.hidden_dim, v = s.vocab_size;
    emb = 0;
    hidden_b = s.embedding_size();
    out_w = hidden_b + d;
    out_b = out_w + v * d;
    total = out_b + v;
  }
};

inline constexpr double kInitScale = 0.02;

inline PolicyParams init_params(std::uint64_t seed, PolicyShape shape, double init_scale = kInitScale) {
  shape.validate();
  PolicyParams p;
  p.shape = shape;
  p.values.resize(shape.param_count());
  Rng rng(stream_seed(seed, "policy/init"));
  for (double& v : p.values) v = rng.uniform(-init_scale, init_scale);
  p.lineage = "init:" + std::to_string(seed);
  return p;
}

/// Scratch buffers for one decoding position. One per thread.
struct Workspace {
  std::vector<Token> context;
  std::vector<double> h, logits, logp;

  explicit Workspace(const PolicyShape& s)
      : context(s.window), h(s.hidden_dim), logits(s.vocab_size), logp(s.vocab_size) {}
};

inline void check_token(Token t, const PolicyShape& s) {
  if (t < 0 || t >= s.vocab_size) throw std::invalid_argument("token id " + std::to_string(t) + " outside vocabulary");
}

/// Computes log-probabilities of the token at position `t` of `seq` given
/// seq[0..t). Results land in ws.logp (and ws.logits, ws.h).
inline void forward(const PolicyParams& params, std::span<const Token> seq, std::size_t t, Workspace& ws) {
  const PolicyShape& s = params.shape;
  const Layout lay(s);
  const std::size_t d = s.hidden_dim, v = s.vocab_size, w = s.window;
  const double* p = params.values.data();

  std::copy(p + lay.hidden_b, p + lay.hidden_b + d, ws.h.begin());
  for (std::size_t j = 0; j < w; ++j) {
    const Token c = (t >= j + 1) ? seq[t - 1 - j] : vocab::kPad;
    ws.context[j] = c;
    const double* row = p + lay.emb + (j * v + static_cast<std::size_t>(c)) * d;
    for (std::size_t k = 0; k < d; ++k) ws.h[k] += row[k];
  }
  for (double& hk : ws.h) hk = std::tanh(hk);

  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t o = 0; o < v; ++o) {
    const double* brow = p + lay.out_w + o * d;
    double z = p[lay.out_b + o];
    for (std::size_t k = 0; k < d; ++k) z += brow[k] * ws.h[k];
    ws.logits[o] = z;
    mx = std::max(mx, z);
  }
  double sum = 0.0;
  for (std::size_t o = 0; o < v; ++o) sum += std::exp(ws.logits[o] - mx);
  const double lse = mx + std::log(sum);
  for (std::size_t o = 0; o < v; ++o) ws.logp[o] = ws.logits[o] - lse;
}

/// Next-token log-probabilities after `prefix`.
inline std::vector<double> next_token_logprobs(const PolicyParams& params, std::span<const Token> prefix) {
  Workspace ws(params.shape);
  forward(params, prefix, prefix.size(), ws);
  return ws.logp;
}

/// Per-token log pi(tokens[t] | prompt, tokens[0..t)).
inline std::vector<double> logprob(const PolicyParams& params, std::span<const Token> prompt,
                                   std::span<const Token> tokens) {
  for (Token t : prompt) check_token(t, params.shape);
  for (Token t : tokens) check_token(t, params.shape);
  TokenSeq seq(prompt.begin(), prompt.end());
  seq.insert(seq.end(), tokens.begin(), tokens.end());
  Workspace ws(params.shape);
  std::vector<double> out(tokens.size());
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const std::size_t t = prompt.size() + i;
    forward(params, seq, t, ws);
    out[i] = ws.logp[static_cast<std::size_t>(seq[t])];
  }
  return out;
}

/// Adds d/dtheta sum_t w_t * log pi(tokens[t] | prefix) into `grad`, where
/// w_t = weight_of(t, log pi(tokens[t] | prefix)) is decided after the forward
/// pass of position t. Returns the per-token log-probabilities.
template <class WeightFn>
std::vector<double> accumulate_backward_fn(const PolicyParams& params, std::span<const Token> prompt,
                                           std::span<const Token> tokens, WeightFn&& weight_of,
                                           std::span<double> grad) {
  if (grad.size() != params.values.size()) throw std::invalid_argument("backward: gradient buffer has wrong size");
  for (Token t : prompt) check_token(t, params.shape);
  for (Token t : tokens) check_token(t, params.shape);

  const PolicyShape& s = params.shape;
  const Layout lay(s);
  const std::size_t d = s.hidden_dim, v = s.vocab_size, w = s.window;
  const double* p = params.values.data();
  double* g = grad.data();

  TokenSeq seq(prompt.begin(), prompt.end());
  seq.insert(seq.end(), tokens.begin(), tokens.end());
  Workspace ws(s);
  std::vector<double> dlogits(v), dh(d), lps(tokens.size());

  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const std::size_t t = prompt.size() + i;
    forward(params, seq, t, ws);
    const auto y = static_cast<std::size_t>(seq[t]);
    lps[i] = ws.logp[y];
    const double wt = weight_of(i, lps[i]);
    if (!std::isfinite(wt)) throw std::invalid_argument("backward: non-finite weight");
    if (wt == 0.0) continue;

    for (std::size_t o = 0; o < v; ++o) dlogits[o] = -wt * std::exp(ws.logp[o]);
    dlogits[y] += wt;

    std::fill(dh.begin(), dh.end(), 0.0);
    for (std::size_t o = 0; o < v; ++o) {
      const double go = dlogits[o];
      g[lay.out_b + o] += go;
      double* gb = g + lay.out_w + o * d;
      const double* brow = p + lay.out_w + o * d;
      for (std::size_t k = 0; k < d; ++k) {
        gb[k] += go * ws.h[k];
        dh[k] += go * brow[k];
      }
    }
    for (std::size_t k = 0; k < d; ++k) dh[k] *= 1.0 - ws.h[k] * ws.h[k];
    for (std::size_t k = 0; k < d; ++k) g[lay.hidden_b + k] += dh[k];
    for (std::size_t j = 0; j < w; ++j) {
      double* ge = g + lay.emb + (j * v + static_cast<std::size_t>(ws.context[j])) * d;
      for (std::size_t k = 0; k < d; ++k) ge[k] += dh[k];
    }
  }
  return lps;
}

/// Adds d/dtheta sum_t weights[t] * log pi(tokens[t] | prefix) into `grad`.
inline void accumulate_backward(const PolicyParams& params, std::span<const Token> prompt,
                                std::span<const Token> tokens, std::span<const double> weights,
                                std::span<double> grad) {
  if (weights.size() != tokens.size()) throw std::invalid_argument("backward: weights/tokens length mismatch");
  for (double x : weights)
    if (!std::isfinite(x)) throw std::invalid_argument("backward: non-finite weight");
  accumulate_backward_fn(params, prompt, tokens, [&](std::size_t i, double) { return weights[i]; }, grad);
}

inline std::vector<double> backward(const PolicyParams& params, std::span<const Token> prompt,
                                    std::span<const Token> tokens, std::span<const double> weights) {
  std::vector<double> grad(params.values.size(), 0.0);
  accumulate_backward(params, prompt, tokens, weights, grad);
  return grad;
}

// ---------------------------------------------------------------------------
// Sampling

struct SamplingOptions {
  double temperature = 1.0;
  double top_p = 1.0;
  int max_len = 24;
  bool greedy = false;
};

struct Rollout {
  TokenSeq prompt;
  TokenSeq tokens;
  std::vector<double> behavior_logprobs;  // untruncated temperature-1 policy at sampling time
  std::vector<double> current_logprobs;
  double reward = 0.0;
  bool guided = false;

  std::size_t size() const { return tokens.size(); }
};

/// Draws one token index from log-probabilities under temperature/top-p.
inline std::size_t draw(std::span<const double> logp, const SamplingOptions& opt, Rng& rng,
                        std::vector<double>& scratch, std::vector<std::size_t>& order) {
  const std::size_t v = logp.size();
  if (opt.greedy)
    return static_cast<std::size_t>(std::max_element(logp.begin(), logp.end()) - logp.begin());

  scratch.resize(v);
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < v; ++i) mx = std::max(mx, logp[i] / opt.temperature);
  double sum = 0.0;
  for (std::size_t i = 0; i < v; ++i) sum += (scratch[i] = std::exp(logp[i] / opt.temperature - mx));
  for (double& q : scratch) q /= sum;

  const double u = rng.uniform();
  if (opt.top_p >= 1.0) {
    double acc = 0.0;
    for (std::size_t i = 0; i < v; ++i) {
      acc += scratch[i];
      if (u < acc) return i;
    }
    return v - 1;
  }
  order.resize(v);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scratch[a] > scratch[b]; });
  std::size_t keep = 0;
  double mass = 0.0;
  while (keep < v && mass < opt.top_p) mass += scratch[order[keep++]];
  double acc = 0.0;
  for (std::size_t r = 0; r < keep; ++r) {
    acc += scratch[order[r]] / mass;
    if (u < acc) return order[r];
  }
  return order[keep - 1];
}

inline Rollout sample(const PolicyParams& params, std::span<const Token> prompt, const SamplingOptions& opt, Rng& rng) {
  if (opt.max_len <= 0) throw std::invalid_argument("sample: max_len must be positive");
  if (!opt.greedy && !(opt.temperature > 0.0)) throw std::invalid_argument("sample: temperature must be positive");
  if (!(opt.top_p > 0.0 && opt.top_p <= 1.0)) throw std::invalid_argument("sample: top_p must be in (0, 1]");
  for (Token t : prompt) check_token(t, params.shape);

  Rollout r;
  r.prompt.assign(prompt.begin(), prompt.end());
  TokenSeq seq = r.prompt;
  Workspace ws(params.shape);
  std::vector<double> scratch;
  std::vector<std::size_t> order;
  for (int i = 0; i < opt.max_len; ++i) {
    forward(params, seq, seq.size(), ws);
    const std::size_t y = draw(ws.logp, opt, rng, scratch, order);
    const auto tok = static_cast<Token>(y);
    seq.push_back(tok);
    r.tokens.push_back(tok);
    r.behavior_logprobs.push_back(ws.logp[y]);
    if (tok == vocab::kEos) break;
  }
  r.current_logprobs = r.behavior_logprobs;
  return r;
}

// ---------------------------------------------------------------------------
// Checkpoints: magic, shape, version, lineage, count, raw little-endian doubles.

namespace detail {
inline void put_u32(std::string& out, std::uint32_t x) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((x >> (8 * i)) & 0xFF));
}
inline void put_u64(std::string& out, std::uint64_t x) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((x >> (8 * i)) & 0xFF));
}
inline std::uint64_t get_uint(std::string_view in, std::size_t& pos, int bytes) {
  if (pos + static_cast<std::size_t>(bytes) > in.size()) throw std::runtime_error("checkpoint truncated");
  std::uint64_t x = 0;
  for (int i = 0; i < bytes; ++i) x |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
  pos += static_cast<std::size_t>(bytes);
  return x;
}
inline std::string get_str(std::string_view in, std::size_t& pos) {
  const auto n = static_cast<std::size_t>(get_uint(in, pos, 4));
  if (pos + n > in.size()) throw std::runtime_error("checkpoint truncated");
  std::string s(in.substr(pos, n));
  pos += n;
  return s;
}
}  // namespace detail

inline constexpr std::string_view kCheckpointMagic = "A2DPOL03";

inline std::string serialize(const PolicyParams& p) {
  std::string out(kCheckpointMagic);
  detail::put_u32(out, static_cast<std::uint32_t>(p.shape.window));
  detail::put_u32(out, static_cast<std::uint32_t>(p.shape.hidden_dim));
  detail::put_u32(out, static_cast<std::uint32_t>(p.shape.vocab_size));
  detail::put_u32(out, static_cast<std::uint32_t>(p.version.size()));
  out += p.version;
  detail::put_u32(out, static_cast<std::uint32_t>(p.lineage.size()));
  out += p.lineage;
  detail::put_u32(out, static_cast<std::uint32_t>(p.provenance.size()));
  out += p.provenance;
  detail::put_u64(out, p.values.size());
  for (double v : p.values) detail::put_u64(out, std::bit_cast<std::uint64_t>(v));
  return out;
}

inline PolicyParams deserialize(std::string_view in) {
  if (in.substr(0, kCheckpointMagic.size()) != kCheckpointMagic) throw std::runtime_error("not a policy checkpoint");
  std::size_t pos = kCheckpointMagic.size();
  PolicyParams p;
  p.shape.window = static_cast<int>(detail::get_uint(in, pos, 4));
  p.shape.hidden_dim = static_cast<int>(detail::get_uint(in, pos, 4));
  p.shape.vocab_size = static_cast<int>(detail::get_uint(in, pos, 4));
  p.version = detail::get_str(in, pos);
  p.lineage = detail::get_str(in, pos);
  p.provenance = detail::get_str(in, pos);
  const auto n = static_cast<std::size_t>(detail::get_uint(in, pos, 8));
  if (n != p.shape.param_count()) throw std::runtime_error("checkpoint parameter count does not match its shape");
  p.values.resize(n);
  for (double& v : p.values) v = std::bit_cast<double>(detail::get_uint(in, pos, 8));
  if (pos != in.size()) throw std::runtime_error("trailing bytes in checkpoint");
  return p;
}

inline void save(const PolicyParams& p, const std::string& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write checkpoint " + path);
  const std::string bytes = serialize(p);
  os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

inline PolicyParams load(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot read checkpoint " + path);
  std::string bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  return deserialize(bytes);
}

/// FNV-1a over the serialized values only (shape and metadata excluded).
inline std::uint64_t params_hash(const PolicyParams& p) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (double v : p.values) {
    std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
    for (int i = 0; i < 8; ++i) {
      h ^= (bits >> (8 * i)) & 0xFF;
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

// ---------------------------------------------------------------------------
// Adaptive-moment optimizer

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::vector<double> m, v;
  std::int64_t step = 0;
};

/// One descent step on `loss_grad`.
inline void adam_update(PolicyParams& params, std::span<const double> loss_grad, AdamState& st, const AdamConfig& cfg) {
  const std::size_t n = params.values.size();
  if (loss_grad.size() != n) throw std::invalid_argument("adam_update: gradient size mismatch");
  if (st.m.size() != n) {
    st.m.assign(n, 0.0);
    st.v.assign(n, 0.0);
  }
  ++st.step;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(st.step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(st.step));
  for (std::size_t i = 0; i < n; ++i) {
    const double g = loss_grad[i];
    st.m[i] = cfg.beta1 * st.m[i] + (1.0 - cfg.beta1) * g;
    st.v[i] = cfg.beta2 * st.v[i] + (1.0 - cfg.beta2) * g * g;
    params.values[i] -= cfg.lr * (st.m[i] / c1) / (std::sqrt(st.v[i] / c2) + cfg.eps);
  }
}

}  // namespace a2d::policy
