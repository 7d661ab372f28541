#include "surfgest/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "binary_io.hpp"
#include "surfgest/error.hpp"

namespace surfgest::model {

namespace {

constexpr double kBnEps = 1e-5;
constexpr double kBnMomentum = 0.1;

// y += a * x
template <typename T>
inline void axpy(std::size_t n, T a, const T* __restrict x, T* __restrict y) {
#pragma omp simd
  for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

template <typename T>
inline T dot(std::size_t n, const T* __restrict x, const T* __restrict y) {
  T acc = 0;
#pragma omp simd reduction(+ : acc)
  for (std::size_t i = 0; i < n; ++i) acc += x[i] * y[i];
  return acc;
}

template <typename T>
inline T sum(std::size_t n, const T* __restrict x) {
  T acc = 0;
#pragma omp simd reduction(+ : acc)
  for (std::size_t i = 0; i < n; ++i) acc += x[i];
  return acc;
}

constexpr std::size_t kTile = 32;   // time samples per register tile
constexpr std::size_t kRows = 4;    // output rows per register tile

// out[r][t] (+)= sum_i w[r*ws_r + i*ws_i] * in[i][t] over rows [0, rows) and
// inputs [0, nin), for one time tile of width tl. Rows and inputs are strided
// by len in memory.
template <typename T, std::size_t R, std::size_t TL>
inline void mix_tile(const T* in, const T* w, std::size_t ws_r, std::size_t ws_i, const T* init, T* out,
                     std::size_t nin, std::size_t len) {
  T acc[R][TL];
  for (std::size_t r = 0; r < R; ++r) {
    const T v = init != nullptr ? init[r] : T(0);
#pragma omp simd
    for (std::size_t t = 0; t < TL; ++t) acc[r][t] = v;
  }
  for (std::size_t i = 0; i < nin; ++i) {
    const T* xs = in + i * len;
    for (std::size_t r = 0; r < R; ++r) {
      const T wv = w[r * ws_r + i * ws_i];
#pragma omp simd
      for (std::size_t t = 0; t < TL; ++t) acc[r][t] += wv * xs[t];
    }
  }
  for (std::size_t r = 0; r < R; ++r) {
#pragma omp simd
    for (std::size_t t = 0; t < TL; ++t) out[r * len + t] = acc[r][t];
  }
}

template <typename T>
inline void mix_tile_any(const T* in, const T* w, std::size_t ws_r, std::size_t ws_i, const T* init, T* out,
                         std::size_t rows, std::size_t nin, std::size_t len, std::size_t tl) {
  for (std::size_t r = 0; r < rows; ++r) {
    T* o = out + r * len;
    const T v = init != nullptr ? init[r] : T(0);
    for (std::size_t t = 0; t < tl; ++t) o[t] = v;
    for (std::size_t i = 0; i < nin; ++i) axpy(tl, w[r * ws_r + i * ws_i], in + i * len, o);
  }
}

// Y[rows x len] = init + M X[nin x len] with M[r][i] = w[r*ws_r + i*ws_i].
template <typename T>
void channel_mix(const T* x, const T* w, std::size_t ws_r, std::size_t ws_i, const T* init, T* y,
                 std::size_t rows, std::size_t nin, std::size_t len) {
  for (std::size_t t0 = 0; t0 < len; t0 += kTile) {
    const std::size_t tl = std::min(kTile, len - t0);
    for (std::size_t r0 = 0; r0 < rows; r0 += kRows) {
      const std::size_t rl = std::min(kRows, rows - r0);
      const T* wr = w + r0 * ws_r;
      const T* ir = init != nullptr ? init + r0 : nullptr;
      if (tl == kTile && rl == kRows) {
        mix_tile<T, kRows, kTile>(x + t0, wr, ws_r, ws_i, ir, y + r0 * len + t0, nin, len);
      } else {
        mix_tile_any(x + t0, wr, ws_r, ws_i, ir, y + r0 * len + t0, rl, nin, len, tl);
      }
    }
  }
}

// Same-padded 1-D correlation of one row: y[t] = bias + sum_j w[j] x[t + j - pad].
template <typename T>
void conv_row(const T* x, const T* w, T bias, T* y, std::size_t len, std::size_t k) {
  const std::size_t pad = k / 2;
  auto edge = [&](std::size_t t) {
    T acc = bias;
    for (std::size_t j = 0; j < k; ++j) {
      const auto s = static_cast<std::ptrdiff_t>(t + j) - static_cast<std::ptrdiff_t>(pad);
      if (s >= 0 && s < static_cast<std::ptrdiff_t>(len)) acc += w[j] * x[s];
    }
    y[t] = acc;
  };
  if (len < k) {
    for (std::size_t t = 0; t < len; ++t) edge(t);
    return;
  }
  // Interior outputs t in [pad, len - pad) read x[t - pad .. t + pad] only.
  const std::size_t lo = pad, hi = len - pad;
  for (std::size_t t = 0; t < lo; ++t) edge(t);
  std::size_t t0 = lo;
  for (; t0 + kTile <= hi; t0 += kTile) {
    T acc[kTile];
#pragma omp simd
    for (std::size_t t = 0; t < kTile; ++t) acc[t] = bias;
    const T* xs = x + t0 - pad;
    for (std::size_t j = 0; j < k; ++j) {
      const T wv = w[j];
#pragma omp simd
      for (std::size_t t = 0; t < kTile; ++t) acc[t] += wv * xs[t + j];
    }
#pragma omp simd
    for (std::size_t t = 0; t < kTile; ++t) y[t0 + t] = acc[t];
  }
  for (std::size_t t = t0; t < hi; ++t) {
    T acc = bias;
    const T* xs = x + t - pad;
    for (std::size_t j = 0; j < k; ++j) acc += w[j] * xs[j];
    y[t] = acc;
  }
  for (std::size_t t = hi; t < len; ++t) edge(t);
}

// Same-padded depthwise convolution, stride 1, one filter per channel.
template <typename T>
void depthwise_forward(const T* x, const T* w, const T* bias, T* y, std::size_t n, std::size_t ch,
                       std::size_t len, std::size_t k) {
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t c = 0; c < ch; ++c) {
      conv_row(x + (b * ch + c) * len, w + c * k, bias[c], y + (b * ch + c) * len, len, k);
    }
  }
}

template <typename T>
void depthwise_backward(const T* x, const T* w, const T* dy, T* dw, T* db, T* dx, std::size_t n,
                        std::size_t ch, std::size_t len, std::size_t k) {
  const auto pad = static_cast<std::ptrdiff_t>(k / 2);
  const auto L = static_cast<std::ptrdiff_t>(len);
  std::vector<T> flipped(k);
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t c = 0; c < ch; ++c) {
      const T* xi = x + (b * ch + c) * len;
      const T* g = dy + (b * ch + c) * len;
      db[c] += sum(len, g);
      for (std::size_t j = 0; j < k; ++j) {
        const std::ptrdiff_t off = static_cast<std::ptrdiff_t>(j) - pad;
        const std::ptrdiff_t t0 = std::max<std::ptrdiff_t>(0, -off);
        const std::ptrdiff_t t1 = std::min<std::ptrdiff_t>(L, L - off);
        if (t1 > t0) dw[c * k + j] += dot(static_cast<std::size_t>(t1 - t0), g + t0, xi + t0 + off);
      }
      if (dx != nullptr) {
        // dx[s] = sum_j w[j] g[s - j + pad]: correlation with the flipped kernel.
        std::reverse_copy(w + c * k, w + (c + 1) * k, flipped.begin());
        conv_row(g, flipped.data(), T(0), dx + (b * ch + c) * len, len, k);
      }
    }
  }
}

// 1x1 convolution mixing channels: y[o] = bias[o] + sum_c W[o][c] x[c].
template <typename T>
void pointwise_forward(const T* x, const T* w, const T* bias, T* y, std::size_t n, std::size_t cin,
                       std::size_t cout, std::size_t len) {
  for (std::size_t b = 0; b < n; ++b) channel_mix(x + b * cin * len, w, cin, 1, bias, y + b * cout * len, cout, cin, len);
}

template <typename T>
void pointwise_backward(const T* x, const T* w, const T* dy, T* dw, T* db, T* dx, std::size_t n,
                        std::size_t cin, std::size_t cout, std::size_t len) {
  constexpr std::size_t kChunk = 256;
  for (std::size_t b = 0; b < n; ++b) {
    const T* gb = dy + b * cout * len;
    const T* xb = x + b * cin * len;
    for (std::size_t o = 0; o < cout; ++o) db[o] += sum(len, gb + o * len);
    for (std::size_t t0 = 0; t0 < len; t0 += kChunk) {
      const std::size_t tl = std::min(kChunk, len - t0);
      for (std::size_t o = 0; o < cout; ++o) {
        for (std::size_t c = 0; c < cin; ++c) dw[o * cin + c] += dot(tl, gb + o * len + t0, xb + c * len + t0);
      }
    }
    // dx[c] = sum_o W[o][c] dy[o]
    if (dx != nullptr) channel_mix(gb, w, 1, cin, static_cast<const T*>(nullptr), dx + b * cin * len, cin, cout, len);
  }
}

// Dense: y[b][o] = bias[o] + sum_i W[o][i] x[b][i].
template <typename T>
void dense_forward(const T* x, const T* w, const T* bias, T* y, std::size_t n, std::size_t in,
                   std::size_t out) {
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t o = 0; o < out; ++o) y[b * out + o] = bias[o] + dot(in, w + o * in, x + b * in);
  }
}

template <typename T>
void dense_backward(const T* x, const T* w, const T* dy, T* dw, T* db, T* dx, std::size_t n, std::size_t in,
                    std::size_t out) {
  std::fill(dx, dx + n * in, T(0));
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t o = 0; o < out; ++o) {
      const T g = dy[b * out + o];
      db[o] += g;
      axpy(in, g, x + b * in, dw + o * in);
      axpy(in, g, w + o * in, dx + b * in);
    }
  }
}

// y = g * xh + be, pooled in pairs and rectified. The backward pass rebuilds
// the same y from xh to route gradients, so both sides share this expression.
template <typename T>
inline T bn_affine(T g, T xh, T be) {
  return g * xh + be;
}

template <typename T>
void pool_relu(const T* __restrict xh, T g, T be, T* __restrict out, std::size_t len2) {
#pragma omp simd
  for (std::size_t j = 0; j < len2; ++j) {
    const T y0 = bn_affine(g, xh[2 * j], be);
    const T y1 = bn_affine(g, xh[2 * j + 1], be);
    const T p = y1 > y0 ? y1 : y0;
    out[j] = p > T(0) ? p : T(0);
  }
}

template <typename T>
void pool_relu_backward(const T* __restrict xh, T g, T be, const T* __restrict dout, const T* __restrict mask,
                        T* __restrict dy, std::size_t len2) {
#pragma omp simd
  for (std::size_t j = 0; j < len2; ++j) {
    const T y0 = bn_affine(g, xh[2 * j], be);
    const T y1 = bn_affine(g, xh[2 * j + 1], be);
    const bool second = y1 > y0;
    const T p = second ? y1 : y0;
    T d = p > T(0) ? dout[j] : T(0);
    if (mask != nullptr) d *= mask[j];
    dy[2 * j] = second ? T(0) : d;
    dy[2 * j + 1] = second ? d : T(0);
  }
}

std::pair<std::size_t, std::size_t> adaptive_bin(std::size_t i, std::size_t len, std::size_t out) {
  const std::size_t start = (i * len) / out;
  const std::size_t end = ((i + 1) * len + out - 1) / out;
  return {start, end};
}

}  // namespace

// ---------------------------------------------------------------------------
// Config

void SepCnnConfig::validate() const {
  if (in_channels == 0 || num_blocks == 0 || block_width == 0 || kernel_size == 0 || pool_out == 0 ||
      classifier_hidden == 0 || num_classes == 0 || input_length == 0) {
    throw ConfigError("model: all counts must be >= 1");
  }
  if (kernel_size % 2 == 0) throw ConfigError("model: kernel_size must be odd, got " + std::to_string(kernel_size));
  if (!(dropout_p >= 0.0) || !(dropout_p < 1.0)) throw ConfigError("model: dropout_p must be in [0, 1)");
  const auto chain = time_chain();
  for (std::size_t i = 1; i < chain.size(); ++i) {
    if (chain[i] < 1) {
      throw ConfigError("model: pooling chain collapses to length 0 after block " + std::to_string(i) +
                        " (input length " + std::to_string(input_length) + ")");
    }
  }
  if (chain.back() < pool_out) {
    throw ConfigError("model: time axis shrinks to " + std::to_string(chain.back()) + " samples, below pool_out " +
                      std::to_string(pool_out));
  }
}

std::vector<std::size_t> SepCnnConfig::time_chain() const {
  std::vector<std::size_t> chain{input_length};
  for (std::size_t i = 0; i < num_blocks; ++i) chain.push_back(chain.back() / 2);
  return chain;
}

std::size_t ParamTensor::size() const {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

namespace {

std::vector<ParamTensor> make_layout(const SepCnnConfig& cfg) {
  std::vector<ParamTensor> layout;
  std::size_t offset = 0;
  auto add = [&](std::string name, std::vector<std::size_t> shape, bool decay) {
    ParamTensor p{std::move(name), offset, std::move(shape), decay};
    offset += p.size();
    layout.push_back(std::move(p));
  };
  for (std::size_t i = 0; i < cfg.num_blocks; ++i) {
    const std::size_t cin = i == 0 ? cfg.in_channels : cfg.block_width;
    const std::string b = "b" + std::to_string(i) + ".";
    add(b + "dw.weight", {cin, cfg.kernel_size}, true);
    add(b + "dw.bias", {cin}, false);
    add(b + "pw.weight", {cfg.block_width, cin}, true);
    add(b + "pw.bias", {cfg.block_width}, false);
    add(b + "bn.gamma", {cfg.block_width}, false);
    add(b + "bn.beta", {cfg.block_width}, false);
  }
  add("fc1.weight", {cfg.classifier_hidden, cfg.classifier_input()}, true);
  add("fc1.bias", {cfg.classifier_hidden}, false);
  add("fc2.weight", {cfg.num_classes, cfg.classifier_hidden}, true);
  add("fc2.bias", {cfg.num_classes}, false);
  return layout;
}

// Layout indices of a block's tensors.
struct BlockIdx {
  std::size_t dw_w, dw_b, pw_w, pw_b, gamma, beta;
};
BlockIdx block_idx(std::size_t i) { return {6 * i, 6 * i + 1, 6 * i + 2, 6 * i + 3, 6 * i + 4, 6 * i + 5}; }

}  // namespace

std::size_t count_parameters(const SepCnnConfig& cfg) {
  const auto layout = make_layout(cfg);
  return layout.back().offset + layout.back().size();
}

// ---------------------------------------------------------------------------
// Model

template <typename T>
SepCnn<T> SepCnn<T>::build(const SepCnnConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  SepCnn m;
  m.cfg_ = cfg;
  m.layout_ = make_layout(cfg);
  m.params_.assign(m.layout_.back().offset + m.layout_.back().size(), T(0));

  std::mt19937_64 rng(seed);
  for (const auto& p : m.layout_) {
    T* dst = m.params_.data() + p.offset;
    if (p.name.ends_with(".weight")) {
      // fan-in: kernel taps for depthwise, input width otherwise
      const double bound = std::sqrt(6.0 / static_cast<double>(p.shape[1]));
      std::uniform_real_distribution<double> u(-bound, bound);
      for (std::size_t k = 0; k < p.size(); ++k) dst[k] = static_cast<T>(u(rng));
    } else if (p.name.ends_with(".gamma")) {
      std::fill(dst, dst + p.size(), T(1));
    }
  }
  m.running_.assign(2 * cfg.num_blocks * cfg.block_width, T(0));
  for (std::size_t i = 0; i < cfg.num_blocks; ++i) {
    auto var = m.running_.begin() + static_cast<std::ptrdiff_t>((2 * i + 1) * cfg.block_width);
    std::fill(var, var + static_cast<std::ptrdiff_t>(cfg.block_width), T(1));
  }
  return m;
}

template <typename T>
std::span<T> SepCnn<T>::param(const std::string& name) {
  for (const auto& p : layout_) {
    if (p.name == name) return {params_.data() + p.offset, p.size()};
  }
  throw InvalidArgumentError("model has no parameter named " + name);
}

template <typename T>
std::span<const T> SepCnn<T>::param(const std::string& name) const {
  return const_cast<SepCnn*>(this)->param(name);
}

template <typename T>
template <typename U>
SepCnn<U> SepCnn<T>::cast() const {
  SepCnn<U> out;
  out.cfg_ = cfg_;
  out.layout_ = layout_;
  out.params_.assign(params_.begin(), params_.end());
  out.running_.assign(running_.begin(), running_.end());
  return out;
}

template <typename T>
std::vector<T> SepCnn<T>::run(std::span<const float> batch, std::size_t n, Mode mode, std::mt19937_64* rng,
                              Cache& cache, bool update_running, StatTap* tap) {
  const auto& cfg = cfg_;
  const auto chain = cfg.time_chain();
  if (n == 0) throw ShapeError("forward: empty batch");
  if (batch.size() != n * cfg.in_channels * cfg.input_length) {
    throw ShapeError("forward: block 0 depthwise expects " + std::to_string(cfg.in_channels) + " channels x " +
                     std::to_string(cfg.input_length) + " samples per window, got " + std::to_string(batch.size()) +
                     " values for " + std::to_string(n) + " windows");
  }
  const bool drop = mode == Mode::kTrain && cfg.dropout_p > 0.0;
  if (drop && rng == nullptr) throw InvalidArgumentError("forward: train mode with dropout needs an rng");

  cache.n = n;
  cache.mode = mode;
  cache.input.assign(batch.begin(), batch.end());
  cache.blocks.resize(cfg.num_blocks);

  const std::size_t C = cfg.block_width;
  std::vector<T> out, bn_mean;
  std::vector<std::uint32_t> bits;
  for (std::size_t i = 0; i < cfg.num_blocks; ++i) {
    const std::size_t cin = i == 0 ? cfg.in_channels : C;
    const std::size_t L = chain[i];
    const std::size_t L2 = chain[i + 1];
    const auto idx = block_idx(i);
    const T* P = params_.data();
    auto& bc = cache.blocks[i];
    if (i > 0) bc.input = std::move(out);
    const T* x = i == 0 ? cache.input.data() : bc.input.data();

    bc.dw_out.resize(n * cin * L);
    depthwise_forward(x, P + layout_[idx.dw_w].offset, P + layout_[idx.dw_b].offset, bc.dw_out.data(), n, cin, L,
                      cfg.kernel_size);
    bc.bn_out.resize(n * C * L);
    pointwise_forward(bc.dw_out.data(), P + layout_[idx.pw_w].offset, P + layout_[idx.pw_b].offset,
                      bc.bn_out.data(), n, cin, C, L);
    if (tap != nullptr && tap->block == i) {
      for (std::size_t b = 0; b < n; ++b) {
        for (std::size_t c = 0; c < C; ++c) {
          const T* z = bc.bn_out.data() + (b * C + c) * L;
          const double shift = tap->shift[c];
          double s = 0.0, ss = 0.0;
#pragma omp simd reduction(+ : s, ss)
          for (std::size_t t = 0; t < L; ++t) {
            const double d = static_cast<double>(z[t]) - shift;
            s += d;
            ss += d * d;
          }
          tap->sum[c] += s;
          tap->sum_sq[c] += ss;
        }
      }
      tap->count += static_cast<double>(n * L);
      return {};
    }

    // Batch norm over (batch, time) per channel.
    bc.xhat.resize(n * C * L);
    bc.inv_std.resize(C);
    bn_mean.resize(C);
    const T* gamma = P + layout_[idx.gamma].offset;
    const T* beta = P + layout_[idx.beta].offset;
    T* run_mean = running_.data() + 2 * i * C;
    T* run_var = run_mean + C;
    const double count = static_cast<double>(n * L);
    for (std::size_t c = 0; c < C; ++c) {
      double mean, inv_std;
      if (mode == Mode::kTrain) {
        double s = 0.0;
        for (std::size_t b = 0; b < n; ++b) s += static_cast<double>(sum(L, bc.bn_out.data() + (b * C + c) * L));
        mean = s / count;
        double ss = 0.0;
        for (std::size_t b = 0; b < n; ++b) {
          const T* z = bc.bn_out.data() + (b * C + c) * L;
          double acc = 0.0;
#pragma omp simd reduction(+ : acc)
          for (std::size_t t = 0; t < L; ++t) {
            const double d = static_cast<double>(z[t]) - mean;
            acc += d * d;
          }
          ss += acc;
        }
        const double var = ss / count;
        inv_std = 1.0 / std::sqrt(var + kBnEps);
        if (update_running) {
          const double unbiased = count > 1.0 ? ss / (count - 1.0) : var;
          run_mean[c] = static_cast<T>((1.0 - kBnMomentum) * run_mean[c] + kBnMomentum * mean);
          run_var[c] = static_cast<T>((1.0 - kBnMomentum) * run_var[c] + kBnMomentum * unbiased);
        }
      } else {
        mean = run_mean[c];
        inv_std = 1.0 / std::sqrt(static_cast<double>(run_var[c]) + kBnEps);
      }
      bc.inv_std[c] = static_cast<T>(inv_std);
      bn_mean[c] = static_cast<T>(mean);
    }

    // Normalize, affine, max-pool k=2 s=2 (floor), ReLU.
    out.resize(n * C * L2);
    for (std::size_t b = 0; b < n; ++b) {
      for (std::size_t c = 0; c < C; ++c) {
        const std::size_t r = b * C + c;
        const T* z = bc.bn_out.data() + r * L;
        T* xh = bc.xhat.data() + r * L;
        const T m = bn_mean[c], is = bc.inv_std[c];
#pragma omp simd
        for (std::size_t t = 0; t < L; ++t) xh[t] = (z[t] - m) * is;
        pool_relu(xh, gamma[c], beta[c], out.data() + r * L2, L2);
      }
    }
    if (drop) {
      bc.mask.resize(out.size());
      const T keep_scale = static_cast<T>(1.0 / (1.0 - cfg.dropout_p));
      // Each 64-bit draw yields two 32-bit uniforms; unit k is dropped when
      // its uniform falls below p * 2^32.
      const auto cut = static_cast<std::uint64_t>(std::ldexp(cfg.dropout_p, 32));
      bits.resize(out.size() + 1);
      for (std::size_t k = 0; k < out.size(); k += 2) {
        const std::uint64_t w = (*rng)();
        bits[k] = static_cast<std::uint32_t>(w);
        bits[k + 1] = static_cast<std::uint32_t>(w >> 32);
      }
      const std::uint32_t* u32 = bits.data();
      T* mk = bc.mask.data();
      T* o = out.data();
#pragma omp simd
      for (std::size_t k = 0; k < out.size(); ++k) {
        const std::uint64_t u = u32[k];
        mk[k] = u < cut ? T(0) : keep_scale;
        o[k] *= mk[k];
      }
    } else {
      bc.mask.clear();
    }
  }
  cache.block_out = std::move(out);

  // Adaptive average pool + flatten.
  const std::size_t Lf = chain.back();
  const std::size_t P = cfg.pool_out;
  const std::size_t flat = cfg.classifier_input();
  cache.flat.assign(n * flat, T(0));
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t c = 0; c < C; ++c) {
      const T* src = cache.block_out.data() + (b * C + c) * Lf;
      for (std::size_t i = 0; i < P; ++i) {
        const auto [s, e] = adaptive_bin(i, Lf, P);
        cache.flat[b * flat + c * P + i] = sum(e - s, src + s) / static_cast<T>(e - s);
      }
    }
  }

  const std::size_t H = cfg.classifier_hidden;
  const std::size_t K = cfg.num_classes;
  const T* fc1w = params_.data() + layout_[6 * cfg.num_blocks].offset;
  const T* fc1b = params_.data() + layout_[6 * cfg.num_blocks + 1].offset;
  const T* fc2w = params_.data() + layout_[6 * cfg.num_blocks + 2].offset;
  const T* fc2b = params_.data() + layout_[6 * cfg.num_blocks + 3].offset;
  cache.hidden.resize(n * H);
  dense_forward(cache.flat.data(), fc1w, fc1b, cache.hidden.data(), n, flat, H);
  for (T& h : cache.hidden) h = h > T(0) ? h : T(0);
  cache.logits.resize(n * K);
  dense_forward(cache.hidden.data(), fc2w, fc2b, cache.logits.data(), n, H, K);
  return cache.logits;
}

template <typename T>
void SepCnn<T>::recalibrate_statistics(std::span<const float> data, std::size_t n, std::size_t chunk) {
  const std::size_t stride = cfg_.in_channels * cfg_.input_length;
  if (n == 0 || data.size() != n * stride) throw ShapeError("recalibrate_statistics: data does not hold n windows");
  if (chunk == 0) throw InvalidArgumentError("recalibrate_statistics: chunk must be positive");
  const std::size_t C = cfg_.block_width;
  Cache local;
  for (std::size_t i = 0; i < cfg_.num_blocks; ++i) {
    StatTap tap;
    tap.block = i;
    tap.shift.assign(running_.begin() + static_cast<std::ptrdiff_t>(2 * i * C),
                     running_.begin() + static_cast<std::ptrdiff_t>(2 * i * C + C));
    tap.sum.assign(C, 0.0);
    tap.sum_sq.assign(C, 0.0);
    for (std::size_t b = 0; b < n; b += chunk) {
      const std::size_t m = std::min(chunk, n - b);
      run(data.subspan(b * stride, m * stride), m, Mode::kEval, nullptr, local, false, &tap);
    }
    for (std::size_t c = 0; c < C; ++c) {
      const double d = tap.sum[c] / tap.count;
      const double var = std::max(0.0, tap.sum_sq[c] / tap.count - d * d);
      running_[2 * i * C + c] = static_cast<T>(tap.shift[c] + d);
      running_[(2 * i + 1) * C + c] = static_cast<T>(tap.count > 1.0 ? var * tap.count / (tap.count - 1.0) : var);
    }
  }
}

template <typename T>
std::vector<T> SepCnn<T>::forward(std::span<const float> batch, std::size_t n, Mode mode, std::mt19937_64* rng) {
  return run(batch, n, mode, rng, cache_, mode == Mode::kTrain);
}

template <typename T>
std::vector<T> SepCnn<T>::predict(std::span<const float> batch, std::size_t n) const {
  Cache local;
  // Eval mode reads but never writes model state.
  return const_cast<SepCnn*>(this)->run(batch, n, Mode::kEval, nullptr, local, false);
}

template <typename T>
void SepCnn<T>::backward(const Cache& cache, std::span<const T> dlogits, std::span<T> grad) const {
  const auto& cfg = cfg_;
  const auto chain = cfg.time_chain();
  const std::size_t n = cache.n;
  const std::size_t C = cfg.block_width;
  const std::size_t H = cfg.classifier_hidden;
  const std::size_t K = cfg.num_classes;
  const std::size_t flat = cfg.classifier_input();
  const std::size_t nb = cfg.num_blocks;
  std::fill(grad.begin(), grad.end(), T(0));
  const T* P = params_.data();
  T* G = grad.data();
  auto off = [&](std::size_t li) { return layout_[li].offset; };

  std::vector<T> dhidden(n * H);
  dense_backward(cache.hidden.data(), P + off(6 * nb + 2), dlogits.data(), G + off(6 * nb + 2),
                 G + off(6 * nb + 3), dhidden.data(), n, H, K);
  for (std::size_t k = 0; k < dhidden.size(); ++k) {
    if (!(cache.hidden[k] > T(0))) dhidden[k] = T(0);
  }
  std::vector<T> dflat(n * flat);
  dense_backward(cache.flat.data(), P + off(6 * nb), dhidden.data(), G + off(6 * nb), G + off(6 * nb + 1),
                 dflat.data(), n, flat, H);

  const std::size_t Lf = chain.back();
  std::vector<T> dout(n * C * Lf, T(0));
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t c = 0; c < C; ++c) {
      for (std::size_t i = 0; i < cfg.pool_out; ++i) {
        const auto [s, e] = adaptive_bin(i, Lf, cfg.pool_out);
        const T g = dflat[b * flat + c * cfg.pool_out + i] / static_cast<T>(e - s);
        for (std::size_t t = s; t < e; ++t) dout[(b * C + c) * Lf + t] += g;
      }
    }
  }

  std::vector<T> dy, ddw, dx;
  std::vector<double> s_dy, s_dyx;
  for (std::size_t ii = nb; ii-- > 0;) {
    const auto& bc = cache.blocks[ii];
    const std::size_t cin = ii == 0 ? cfg.in_channels : C;
    const std::size_t L = chain[ii];
    const std::size_t L2 = chain[ii + 1];
    const auto idx = block_idx(ii);

    // Dropout, ReLU and max-pool, with the batch-norm sums gathered per channel.
    const T* gamma = P + off(idx.gamma);
    const T* beta = P + off(idx.beta);
    T* dgamma = G + off(idx.gamma);
    T* dbeta = G + off(idx.beta);
    dy.resize(n * C * L);
    s_dy.assign(C, 0.0);
    s_dyx.assign(C, 0.0);
    for (std::size_t b = 0; b < n; ++b) {
      for (std::size_t c = 0; c < C; ++c) {
        const std::size_t r = b * C + c;
        const T* xh = bc.xhat.data() + r * L;
        T* g = dy.data() + r * L;
        pool_relu_backward(xh, gamma[c], beta[c], dout.data() + r * L2,
                           bc.mask.empty() ? nullptr : bc.mask.data() + r * L2, g, L2);
        if (L > 2 * L2) g[L - 1] = T(0);
        s_dy[c] += static_cast<double>(sum(L, g));
        s_dyx[c] += static_cast<double>(dot(L, g, xh));
      }
    }

    // Batch norm.
    const double count = static_cast<double>(n * L);
    for (std::size_t c = 0; c < C; ++c) {
      dgamma[c] += static_cast<T>(s_dyx[c]);
      dbeta[c] += static_cast<T>(s_dy[c]);
      const T a = static_cast<T>(static_cast<double>(gamma[c]) * static_cast<double>(bc.inv_std[c]));
      const T m1 = static_cast<T>(s_dy[c] / count);
      const T m2 = static_cast<T>(s_dyx[c] / count);
      for (std::size_t b = 0; b < n; ++b) {
        T* g = dy.data() + (b * C + c) * L;
        const T* xh = bc.xhat.data() + (b * C + c) * L;
        if (cache.mode == Mode::kTrain) {
#pragma omp simd
          for (std::size_t t = 0; t < L; ++t) g[t] = a * (g[t] - m1 - xh[t] * m2);
        } else {
#pragma omp simd
          for (std::size_t t = 0; t < L; ++t) g[t] = a * g[t];
        }
      }
    }

    ddw.resize(n * cin * L);
    pointwise_backward(bc.dw_out.data(), P + off(idx.pw_w), dy.data(), G + off(idx.pw_w), G + off(idx.pw_b),
                       ddw.data(), n, cin, C, L);

    const T* x = ii == 0 ? cache.input.data() : bc.input.data();
    if (ii > 0) dx.resize(n * cin * L);
    depthwise_backward(x, P + off(idx.dw_w), ddw.data(), G + off(idx.dw_w), G + off(idx.dw_b),
                       ii > 0 ? dx.data() : nullptr, n, cin, L, cfg.kernel_size);
    dout.swap(dx);
  }
}

template <typename T>
T SepCnn<T>::loss_and_grad(std::span<const float> batch, std::span<const int> labels, std::span<T> grad,
                           std::mt19937_64& rng) {
  const std::size_t n = labels.size();
  const std::size_t K = cfg_.num_classes;
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= K) {
      throw InvalidArgumentError("label " + std::to_string(y) + " out of range for " + std::to_string(K) + " classes");
    }
  }
  if (grad.size() != params_.size()) throw ShapeError("loss_and_grad: gradient buffer size mismatch");
  const auto logits = run(batch, n, Mode::kTrain, &rng, cache_, true);

  std::vector<T> dlogits(n * K);
  double loss = 0.0;
  for (std::size_t b = 0; b < n; ++b) {
    const T* z = logits.data() + b * K;
    const double zmax = static_cast<double>(*std::max_element(z, z + K));
    double denom = 0.0;
    for (std::size_t k = 0; k < K; ++k) denom += std::exp(static_cast<double>(z[k]) - zmax);
    const double log_denom = std::log(denom);
    const auto y = static_cast<std::size_t>(labels[b]);
    loss -= static_cast<double>(z[y]) - zmax - log_denom;
    for (std::size_t k = 0; k < K; ++k) {
      const double p = std::exp(static_cast<double>(z[k]) - zmax - log_denom);
      dlogits[b * K + k] = static_cast<T>((p - (k == y ? 1.0 : 0.0)) / static_cast<double>(n));
    }
  }
  backward(cache_, dlogits, grad);
  return static_cast<T>(loss / static_cast<double>(n));
}

template class SepCnn<float>;
template class SepCnn<double>;
template SepCnn<double> SepCnn<float>::cast<double>() const;
template SepCnn<float> SepCnn<double>::cast<float>() const;
template SepCnn<float> SepCnn<float>::cast<float>() const;
template SepCnn<double> SepCnn<double>::cast<double>() const;

// ---------------------------------------------------------------------------
// Checkpoints

namespace {
constexpr std::uint16_t kCheckpointVersion = 1;
}

void save_checkpoint(const std::filesystem::path& path, const SepCnn<float>& model) {
  const auto& c = model.config();
  detail::ByteWriter w;
  w.magic("SEPW");
  w.put<std::uint16_t>(kCheckpointVersion);
  w.put<std::uint16_t>(static_cast<std::uint16_t>(c.in_channels));
  w.put<std::uint16_t>(static_cast<std::uint16_t>(c.num_blocks));
  w.put<std::uint16_t>(static_cast<std::uint16_t>(c.block_width));
  w.put<std::uint16_t>(static_cast<std::uint16_t>(c.kernel_size));
  w.put<double>(c.dropout_p);
  w.put<std::uint16_t>(static_cast<std::uint16_t>(c.pool_out));
  w.put<std::uint16_t>(static_cast<std::uint16_t>(c.classifier_hidden));
  w.put<std::uint16_t>(static_cast<std::uint16_t>(c.num_classes));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(c.input_length));
  w.put<std::uint64_t>(model.params().size());
  w.put<std::uint64_t>(model.running_stats().size());
  for (float v : model.params()) w.put<float>(v);
  for (float v : model.running_stats()) w.put<float>(v);
  w.save(path);
}

SepCnn<float> load_checkpoint(const std::filesystem::path& path) {
  auto r = detail::ByteReader::from_file(path);
  r.expect_magic("SEPW");
  const auto version = r.get<std::uint16_t>();
  if (version != kCheckpointVersion) r.fail("unsupported checkpoint version " + std::to_string(version), 4);
  SepCnnConfig c;
  c.in_channels = r.get<std::uint16_t>();
  c.num_blocks = r.get<std::uint16_t>();
  c.block_width = r.get<std::uint16_t>();
  c.kernel_size = r.get<std::uint16_t>();
  c.dropout_p = r.get<double>();
  c.pool_out = r.get<std::uint16_t>();
  c.classifier_hidden = r.get<std::uint16_t>();
  c.num_classes = r.get<std::uint16_t>();
  c.input_length = r.get<std::uint32_t>();
  try {
    c.validate();
  } catch (const ConfigError& e) {
    r.fail(std::string("invalid model config: ") + e.what());
  }
  auto model = SepCnn<float>::build(c, 0);
  const auto n_params = r.get<std::uint64_t>();
  const auto n_running = r.get<std::uint64_t>();
  if (n_params != model.params().size() || n_running != model.running_stats().size()) {
    r.fail("parameter count does not match the declared config");
  }
  r.need(4 * (n_params + n_running));
  for (float& v : model.params()) v = r.get<float>();
  for (float& v : model.running_stats()) v = r.get<float>();
  return model;
}

}  // namespace surfgest::model
