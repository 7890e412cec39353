#include "savid/gman.hpp"

#include <cmath>
#include <string>

#include "savid/errors.hpp"

namespace savid {

// ---------------------------------------------------------------------------
// Windows
// ---------------------------------------------------------------------------

WindowTokens partition_windows(const Tensor& x, std::size_t window) {
  if (x.rank() != 4) throw ShapeError("partition_windows expects (B, H, W, C), got " + to_string(x.shape()));
  if (window == 0) throw ValidationError("partition_windows: window size must be positive");
  WindowLayout layout;
  layout.batch = x.dim(0);
  layout.height = x.dim(1);
  layout.width = x.dim(2);
  layout.channels = x.dim(3);
  layout.window = window;
  layout.padded_height = (layout.height + window - 1) / window * window;
  layout.padded_width = (layout.width + window - 1) / window * window;

  const std::size_t nwr = layout.padded_height / window, nwc = layout.padded_width / window;
  const std::size_t n = layout.tokens_per_window(), c = layout.channels;
  Tensor tokens({layout.total_windows(), n, c});
  for (std::size_t b = 0; b < layout.batch; ++b) {
    for (std::size_t wr = 0; wr < nwr; ++wr) {
      for (std::size_t wc = 0; wc < nwc; ++wc) {
        const std::size_t win = (b * nwr + wr) * nwc + wc;
        for (std::size_t i = 0; i < window; ++i) {
          const std::size_t row = wr * window + i;
          if (row >= layout.height) continue;
          for (std::size_t j = 0; j < window; ++j) {
            const std::size_t col = wc * window + j;
            if (col >= layout.width) continue;
            const std::size_t src = ((b * layout.height + row) * layout.width + col) * c;
            const std::size_t dst = (win * n + i * window + j) * c;
            for (std::size_t ch = 0; ch < c; ++ch) tokens[dst + ch] = x[src + ch];
          }
        }
      }
    }
  }
  return {std::move(tokens), layout};
}

Tensor merge_windows(const Tensor& tokens, const WindowLayout& layout) {
  const std::size_t window = layout.window;
  if (window == 0 || layout.padded_height % window != 0 || layout.padded_width % window != 0 ||
      layout.padded_height < layout.height || layout.padded_width < layout.width ||
      layout.padded_height >= layout.height + window || layout.padded_width >= layout.width + window) {
    throw ValidationError("merge_windows: inconsistent window layout");
  }
  const Shape expected{layout.total_windows(), layout.tokens_per_window(), layout.channels};
  if (tokens.shape() != expected) {
    throw ValidationError("merge_windows: tokens " + to_string(tokens.shape()) + " do not match layout " +
                          to_string(expected));
  }
  const std::size_t nwr = layout.padded_height / window, nwc = layout.padded_width / window;
  const std::size_t n = layout.tokens_per_window(), c = layout.channels;
  Tensor out({layout.batch, layout.height, layout.width, c});
  for (std::size_t b = 0; b < layout.batch; ++b) {
    for (std::size_t row = 0; row < layout.height; ++row) {
      for (std::size_t col = 0; col < layout.width; ++col) {
        const std::size_t win = (b * nwr + row / window) * nwc + col / window;
        const std::size_t src = (win * n + (row % window) * window + col % window) * c;
        const std::size_t dst = ((b * layout.height + row) * layout.width + col) * c;
        for (std::size_t ch = 0; ch < c; ++ch) out[dst + ch] = tokens[src + ch];
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Attention
// ---------------------------------------------------------------------------

namespace {

void check_qkv(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t heads) {
  if (q.rank() != 3 || k.shape() != q.shape() || v.shape() != q.shape()) {
    throw ShapeError("attention expects matching (B*, N, C) inputs, got " + to_string(q.shape()) + ", " +
                     to_string(k.shape()) + ", " + to_string(v.shape()));
  }
  if (heads == 0 || q.dim(2) % heads != 0) {
    throw ValidationError("channel count " + std::to_string(q.dim(2)) + " is not divisible by " +
                          std::to_string(heads) + " heads");
  }
}

}  // namespace

Tensor multi_head_attention(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t heads,
                            const Dropout& drop, Tensor* probs) {
  check_qkv(q, k, v, heads);
  const std::size_t bs = q.dim(0), n = q.dim(1), c = q.dim(2), dh = c / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  Tensor logits({bs, heads, n, n});
  for (std::size_t b = 0; b < bs; ++b) {
    for (std::size_t h = 0; h < heads; ++h) {
      for (std::size_t i = 0; i < n; ++i) {
        const double* qi = q.data().data() + (b * n + i) * c + h * dh;
        for (std::size_t j = 0; j < n; ++j) {
          const double* kj = k.data().data() + (b * n + j) * c + h * dh;
          double dot = 0.0;
          for (std::size_t d = 0; d < dh; ++d) dot += qi[d] * kj[d];
          logits[((b * heads + h) * n + i) * n + j] = dot * scale;
        }
      }
    }
  }
  Tensor attn = softmax_lastdim(logits);
  const Tensor mixed = dropout(attn, drop);

  Tensor out({bs, n, c});
  for (std::size_t b = 0; b < bs; ++b) {
    for (std::size_t h = 0; h < heads; ++h) {
      for (std::size_t i = 0; i < n; ++i) {
        double* oi = out.data().data() + (b * n + i) * c + h * dh;
        for (std::size_t j = 0; j < n; ++j) {
          const double a = mixed[((b * heads + h) * n + i) * n + j];
          const double* vj = v.data().data() + (b * n + j) * c + h * dh;
          for (std::size_t d = 0; d < dh; ++d) oi[d] += a * vj[d];
        }
      }
    }
  }
  if (probs) *probs = std::move(attn);
  return out;
}

AttentionGrad multi_head_attention_backward(const Tensor& q, const Tensor& k, const Tensor& v, const Tensor& probs,
                                            std::size_t heads, const Tensor& dout) {
  check_qkv(q, k, v, heads);
  const std::size_t bs = q.dim(0), n = q.dim(1), c = q.dim(2), dh = c / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  if (probs.shape() != Shape{bs, heads, n, n} || dout.shape() != q.shape()) {
    throw ShapeError("multi_head_attention_backward: inconsistent shapes");
  }
  AttentionGrad g{Tensor(q.shape()), Tensor(k.shape()), Tensor(v.shape())};
  std::vector<double> dp(n * n), ds(n * n);
  for (std::size_t b = 0; b < bs; ++b) {
    for (std::size_t h = 0; h < heads; ++h) {
      const double* p = probs.data().data() + (b * heads + h) * n * n;
      for (std::size_t i = 0; i < n; ++i) {
        const double* di = dout.data().data() + (b * n + i) * c + h * dh;
        for (std::size_t j = 0; j < n; ++j) {
          const double* vj = v.data().data() + (b * n + j) * c + h * dh;
          double* dvj = g.dv.data().data() + (b * n + j) * c + h * dh;
          double acc = 0.0;
          for (std::size_t d = 0; d < dh; ++d) {
            acc += di[d] * vj[d];
            dvj[d] += p[i * n + j] * di[d];
          }
          dp[i * n + j] = acc;
        }
        double dot = 0.0;
        for (std::size_t j = 0; j < n; ++j) dot += p[i * n + j] * dp[i * n + j];
        for (std::size_t j = 0; j < n; ++j) ds[i * n + j] = p[i * n + j] * (dp[i * n + j] - dot) * scale;
      }
      for (std::size_t i = 0; i < n; ++i) {
        double* dqi = g.dq.data().data() + (b * n + i) * c + h * dh;
        const double* qi = q.data().data() + (b * n + i) * c + h * dh;
        for (std::size_t j = 0; j < n; ++j) {
          const double s = ds[i * n + j];
          const double* kj = k.data().data() + (b * n + j) * c + h * dh;
          double* dkj = g.dk.data().data() + (b * n + j) * c + h * dh;
          for (std::size_t d = 0; d < dh; ++d) {
            dqi[d] += s * kj[d];
            dkj[d] += s * qi[d];
          }
        }
      }
    }
  }
  return g;
}

// ---------------------------------------------------------------------------
// LSTM
// ---------------------------------------------------------------------------

LstmWeights LstmWeights::random(std::size_t in, std::size_t hidden, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(hidden));
  LstmWeights w;
  w.input = uniform_tensor({in, 4 * hidden}, -bound, bound, rng);
  w.recurrent = uniform_tensor({hidden, 4 * hidden}, -bound, bound, rng);
  const Tensor b = uniform_tensor({4 * hidden}, -bound, bound, rng);
  w.bias.assign(b.data().begin(), b.data().end());
  return w;
}

LstmWeights LstmWeights::zeros(std::size_t in, std::size_t hidden) {
  return LstmWeights{Tensor({in, 4 * hidden}), Tensor({hidden, 4 * hidden}), std::vector<double>(4 * hidden, 0.0)};
}

LstmState LstmState::zeros(const Shape& shape) { return {Tensor(shape), Tensor(shape)}; }

LstmState LstmState::filled(const Shape& shape, double value) { return {Tensor(shape, value), Tensor(shape, value)}; }

namespace {

struct LstmGates {
  std::vector<double> i, f, g, o, c_next;
};

Shape state_shape(const Tensor& x, std::size_t hidden) {
  Shape s = x.shape();
  s.back() = hidden;
  return s;
}

void check_lstm(const Tensor& x, const LstmState& state, const LstmWeights& w) {
  const std::size_t hidden = w.hidden();
  if (hidden == 0 || w.input.rank() != 2 || w.input.dim(1) != 4 * hidden || w.recurrent.dim(1) != 4 * hidden ||
      w.bias.size() != 4 * hidden) {
    throw ShapeError("LSTM weights are inconsistent");
  }
  if (x.last_dim() != w.input.dim(0)) {
    throw ShapeError("LSTM input " + to_string(x.shape()) + " does not match input weights " +
                     to_string(w.input.shape()));
  }
  const Shape expected = state_shape(x, hidden);
  if (!state.empty() && (state.h.shape() != expected || state.c.shape() != expected)) {
    throw ShapeError("LSTM state " + to_string(state.h.shape()) + " does not match " + to_string(expected));
  }
}

// Pre-activations z = x Wx + h Wh + b for one row.
void gate_inputs(const double* x, const double* h, const LstmWeights& w, std::size_t in, std::size_t hidden,
                 double* z) {
  const std::size_t g4 = 4 * hidden;
  for (std::size_t j = 0; j < g4; ++j) z[j] = w.bias[j];
  const double* wx = w.input.data().data();
  const double* wh = w.recurrent.data().data();
  for (std::size_t p = 0; p < in; ++p) {
    const double xp = x[p];
    for (std::size_t j = 0; j < g4; ++j) z[j] += xp * wx[p * g4 + j];
  }
  if (h) {
    for (std::size_t p = 0; p < hidden; ++p) {
      const double hp = h[p];
      for (std::size_t j = 0; j < g4; ++j) z[j] += hp * wh[p * g4 + j];
    }
  }
}

}  // namespace

LstmResult lstm_step(const Tensor& x, const LstmState& state, const LstmWeights& weights) {
  check_lstm(x, state, weights);
  const std::size_t in = x.last_dim(), hidden = weights.hidden();
  const std::size_t rows = x.size() / in;
  const Shape shape = state_shape(x, hidden);
  LstmResult result{Tensor(shape), LstmState::zeros(shape)};
  std::vector<double> z(4 * hidden);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* h = state.empty() ? nullptr : state.h.data().data() + r * hidden;
    const double* c = state.empty() ? nullptr : state.c.data().data() + r * hidden;
    gate_inputs(x.data().data() + r * in, h, weights, in, hidden, z.data());
    for (std::size_t j = 0; j < hidden; ++j) {
      const double ig = sigmoid(z[j]);
      const double fg = sigmoid(z[hidden + j]);
      const double gg = std::tanh(z[2 * hidden + j]);
      const double og = sigmoid(z[3 * hidden + j]);
      const double c_next = fg * (c ? c[j] : 0.0) + ig * gg;
      const double h_next = og * (c_next > 0.0 ? c_next : 0.0);
      result.state.c[r * hidden + j] = c_next;
      result.state.h[r * hidden + j] = h_next;
      result.output[r * hidden + j] = h_next;
    }
  }
  return result;
}

LstmGrad lstm_step_backward(const Tensor& x, const LstmState& state, const LstmWeights& weights,
                            const Tensor& dh_next, const Tensor& dc_next) {
  check_lstm(x, state, weights);
  const std::size_t in = x.last_dim(), hidden = weights.hidden();
  const std::size_t rows = x.size() / in;
  const Shape shape = state_shape(x, hidden);
  if ((!dh_next.empty() && dh_next.shape() != shape) || (!dc_next.empty() && dc_next.shape() != shape)) {
    throw ShapeError("lstm_step_backward: upstream gradient shape mismatch");
  }
  LstmGrad g{Tensor(x.shape()), Tensor(shape), Tensor(shape)};
  const std::size_t g4 = 4 * hidden;
  std::vector<double> z(g4), dz(g4);
  const double* wx = weights.input.data().data();
  const double* wh = weights.recurrent.data().data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* h = state.empty() ? nullptr : state.h.data().data() + r * hidden;
    const double* c = state.empty() ? nullptr : state.c.data().data() + r * hidden;
    gate_inputs(x.data().data() + r * in, h, weights, in, hidden, z.data());
    for (std::size_t j = 0; j < hidden; ++j) {
      const double ig = sigmoid(z[j]);
      const double fg = sigmoid(z[hidden + j]);
      const double gg = std::tanh(z[2 * hidden + j]);
      const double og = sigmoid(z[3 * hidden + j]);
      const double c_prev = c ? c[j] : 0.0;
      const double c_next = fg * c_prev + ig * gg;
      const double dh = dh_next.empty() ? 0.0 : dh_next[r * hidden + j];
      const double dc = (dc_next.empty() ? 0.0 : dc_next[r * hidden + j]) + (c_next > 0.0 ? dh * og : 0.0);
      const double relu_c = c_next > 0.0 ? c_next : 0.0;
      dz[j] = dc * gg * ig * (1.0 - ig);
      dz[hidden + j] = dc * c_prev * fg * (1.0 - fg);
      dz[2 * hidden + j] = dc * ig * (1.0 - gg * gg);
      dz[3 * hidden + j] = dh * relu_c * og * (1.0 - og);
      g.dc[r * hidden + j] = dc * fg;
    }
    double* dx = g.dx.data().data() + r * in;
    for (std::size_t p = 0; p < in; ++p) {
      double acc = 0.0;
      for (std::size_t j = 0; j < g4; ++j) acc += wx[p * g4 + j] * dz[j];
      dx[p] = acc;
    }
    double* dhp = g.dh.data().data() + r * hidden;
    for (std::size_t p = 0; p < hidden; ++p) {
      double acc = 0.0;
      for (std::size_t j = 0; j < g4; ++j) acc += wh[p * g4 + j] * dz[j];
      dhp[p] = acc;
    }
  }
  return g;
}

// ---------------------------------------------------------------------------
// GMAN blocks
// ---------------------------------------------------------------------------

GmanParams GmanParams::random(std::size_t channels, std::size_t heads, std::size_t window, Rng& rng) {
  GmanParams p;
  p.channels = channels;
  p.heads = heads;
  p.window = window;
  p.image_embed = LinearMap::random(3, channels, true, rng);
  p.depth_embed = LinearMap::random(3, channels, true, rng);

  p.lsa.query = LinearMap::random(channels, channels, true, rng);
  p.lsa.key = LinearMap::random(channels, channels, true, rng);
  p.lsa.value = LinearMap::random(channels, channels, true, rng);
  p.lsa.output = LinearMap::random(channels, channels, false, rng);
  std::uniform_real_distribution<double> jitter(-0.2, 0.2);
  p.lsa.spectral.resize(window * window);
  for (auto& tap : p.lsa.spectral) {
    const double re = 1.0 + jitter(rng);
    const double im = jitter(rng);
    tap = Complex(re, im);
  }
  p.lsa.norm_gamma.assign(channels, 1.0);
  p.lsa.norm_beta.assign(channels, 0.0);

  p.gma.key = LinearMap::random(channels, channels, true, rng);
  p.gma.query = LinearMap::random(channels, channels, true, rng);
  p.gma.value = LinearMap::random(channels, channels, true, rng);
  p.gma.lstm = LstmWeights::random(channels, channels, rng);
  p.gma.norm_gamma.assign(channels, 1.0);
  p.gma.norm_beta.assign(channels, 0.0);

  p.mlp = LinearMap::random(channels, channels, true, rng);
  p.validate();
  return p;
}

void GmanParams::validate() const {
  if (channels == 0 || heads == 0 || channels % heads != 0) {
    throw ValidationError("GMAN: channels (" + std::to_string(channels) + ") must be divisible by heads (" +
                          std::to_string(heads) + ")");
  }
  if (window == 0) throw ValidationError("GMAN: window must be positive");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw ValidationError("GMAN: dropout rate must lie in [0, 1)");
  auto square = [&](const LinearMap& m, const char* name) {
    if (m.in_features() != channels || m.out_features() != channels) {
      throw ShapeError(std::string("GMAN: ") + name + " must be C x C");
    }
  };
  square(lsa.query, "lsa.query");
  square(lsa.key, "lsa.key");
  square(lsa.value, "lsa.value");
  square(lsa.output, "lsa.output");
  square(gma.key, "gma.key");
  square(gma.query, "gma.query");
  square(gma.value, "gma.value");
  square(mlp, "mlp");
  if (image_embed.in_features() != 3 || image_embed.out_features() != channels ||
      depth_embed.in_features() != 3 || depth_embed.out_features() != channels) {
    throw ShapeError("GMAN: embeddings must map 3 -> C");
  }
  if (lsa.spectral.size() != window * window) throw ShapeError("GMAN: spectral filter needs window^2 taps");
  if (gma.lstm.hidden() != channels) throw ShapeError("GMAN: LSTM hidden size must equal C");
}

Dropout GmanParams::attention_dropout(std::uint64_t salt) const {
  return Dropout{dropout_rate, dropout_seed ^ (salt * 0x9E3779B97F4A7C15ULL), !training};
}

Tensor lsa_forward(const Tensor& tokens, const GmanParams& params) {
  if (tokens.rank() != 3 || tokens.dim(2) != params.channels) {
    throw ShapeError("lsa_forward expects (B*, N, " + std::to_string(params.channels) + "), got " +
                     to_string(tokens.shape()));
  }
  const LsaParams& lsa = params.lsa;
  const Tensor q = lsa.query.apply(tokens);
  const Tensor k = lsa.key.apply(tokens);
  const Tensor v = lsa.value.apply(tokens);
  const Tensor attended = multi_head_attention(q, k, v, params.heads, params.attention_dropout(1));
  const Tensor mixed = spectral_filter(lsa.output.apply(attended), lsa.spectral);
  return layer_norm(add(tokens, mixed), lsa.norm_gamma, lsa.norm_beta);
}

namespace {

void check_gma_inputs(const Tensor& image_tokens, const Tensor& depth_tokens, const GmanParams& params) {
  if (params.heads == 0 || params.channels % params.heads != 0) {
    throw ValidationError("GMA: channels (" + std::to_string(params.channels) + ") must be divisible by heads (" +
                          std::to_string(params.heads) + ")");
  }
  if (image_tokens.rank() != 3 || image_tokens.shape() != depth_tokens.shape() ||
      image_tokens.dim(2) != params.channels) {
    throw ShapeError("gma_forward: image tokens " + to_string(image_tokens.shape()) + " and depth tokens " +
                     to_string(depth_tokens.shape()) + " must share a (B*, N, C) layout");
  }
}

}  // namespace

GmaResult gma_forward(const Tensor& image_tokens, const Tensor& depth_tokens, const GmanParams& params,
                      const LstmState& state) {
  check_gma_inputs(image_tokens, depth_tokens, params);
  const GmaParams& gma = params.gma;
  const Tensor k = gma.key.apply(image_tokens);
  const Tensor q = gma.query.apply(depth_tokens);
  const Tensor v = gma.value.apply(image_tokens);
  const Tensor attended = multi_head_attention(q, k, v, params.heads, params.attention_dropout(2));
  const LstmState start = state.empty() ? LstmState::zeros(attended.shape()) : state;
  LstmResult cell = lstm_step(attended, start, gma.lstm);
  return {layer_norm(cell.output, gma.norm_gamma, gma.norm_beta), std::move(cell.state)};
}

GmaGrad gma_backward(const Tensor& image_tokens, const Tensor& depth_tokens, const GmanParams& params,
                     const LstmState& state, const Tensor& doutput) {
  check_gma_inputs(image_tokens, depth_tokens, params);
  const GmaParams& gma = params.gma;
  const Tensor k = gma.key.apply(image_tokens);
  const Tensor q = gma.query.apply(depth_tokens);
  const Tensor v = gma.value.apply(image_tokens);
  Tensor probs;
  const Tensor attended = multi_head_attention(q, k, v, params.heads, Dropout{}, &probs);
  const LstmState start = state.empty() ? LstmState::zeros(attended.shape()) : state;
  const LstmResult cell = lstm_step(attended, start, gma.lstm);

  const Tensor dh = layer_norm_backward(cell.output, gma.norm_gamma, doutput).dx;
  const LstmGrad dcell = lstm_step_backward(attended, start, gma.lstm, dh, Tensor{});
  const AttentionGrad datt = multi_head_attention_backward(q, k, v, probs, params.heads, dcell.dx);
  return {add(gma.key.backward_input(datt.dk), gma.value.backward_input(datt.dv)),
          gma.query.backward_input(datt.dq)};
}

namespace {

Tensor as_batched_image(const Tensor& image) {
  if (image.rank() == 3 && image.dim(2) == 3) return image.reshaped({1, image.dim(0), image.dim(1), 3});
  if (image.rank() == 4 && image.dim(0) == 1 && image.dim(3) == 3) return image;
  throw ShapeError("GMAN expects an (H, W, 3) or (1, H, W, 3) image, got " + to_string(image.shape()));
}

}  // namespace

Tensor gman_embed_only(const Tensor& image, const GmanParams& params) {
  const Tensor batched = as_batched_image(image);
  return params.image_embed.apply(batched).reshaped({batched.dim(1), batched.dim(2), params.channels});
}

GmanResult gman_forward(const Tensor& image, const DepthMap& depth, const GmanParams& params,
                        const LstmState& state) {
  params.validate();
  const Tensor batched = as_batched_image(image);
  const std::size_t h = batched.dim(1), w = batched.dim(2);
  if (depth.height != h || depth.width != w) {
    throw ShapeError("gman_forward: depth map " + std::to_string(depth.height) + "x" + std::to_string(depth.width) +
                     " does not match image " + std::to_string(h) + "x" + std::to_string(w));
  }
  const Tensor image_features = params.image_embed.apply(batched);
  const Tensor depth_features =
      params.depth_embed.apply(depth.to_tensor3(params.depth_scale).reshaped({1, h, w, 3}));

  const WindowTokens image_tokens = partition_windows(image_features, params.window);
  const WindowTokens depth_tokens = partition_windows(depth_features, params.window);

  const Tensor local = lsa_forward(image_tokens.tokens, params);
  GmaResult global = gma_forward(local, depth_tokens.tokens, params, state);
  const Tensor fused = params.mlp.apply(global.output);
  Tensor merged = merge_windows(fused, image_tokens.layout);
  return {merged.reshaped({h, w, params.channels}), std::move(global.state), image_tokens.layout};
}

}  // namespace savid
