#pragma once

#include <cstdint>
#include <vector>

#include "savid/depth.hpp"
#include "savid/numerics/linear.hpp"
#include "savid/numerics/ops.hpp"
#include "savid/numerics/spectral.hpp"
#include "savid/numerics/tensor.hpp"

namespace savid {

// ---------------------------------------------------------------------------
// Window partitioning
// ---------------------------------------------------------------------------

/// Geometry of a window partition. `padded_*` are the input extents rounded
/// up to a multiple of `window`; the extra rows and columns are zero.
struct WindowLayout {
  std::size_t batch = 1;
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t window = 1;
  std::size_t channels = 0;
  std::size_t padded_height = 0;
  std::size_t padded_width = 0;

  std::size_t windows_per_image() const { return (padded_height / window) * (padded_width / window); }
  std::size_t total_windows() const { return batch * windows_per_image(); }
  std::size_t tokens_per_window() const { return window * window; }

  friend bool operator==(const WindowLayout&, const WindowLayout&) = default;
};

struct WindowTokens {
  Tensor tokens;  // (B*, N, C), windows ordered (b, row, col), tokens row-major
  WindowLayout layout;
};

WindowTokens partition_windows(const Tensor& x, std::size_t window);
Tensor merge_windows(const Tensor& tokens, const WindowLayout& layout);

// ---------------------------------------------------------------------------
// Attention
// ---------------------------------------------------------------------------

/// Scaled dot-product attention per head. q, k, v are (B*, N, C); head h
/// owns channels [h*C/heads, (h+1)*C/heads). When `probs` is given it
/// receives the (pre-dropout) attention matrix, shape (B*, heads, N, N).
Tensor multi_head_attention(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t heads,
                            const Dropout& drop, Tensor* probs = nullptr);

struct AttentionGrad {
  Tensor dq;
  Tensor dk;
  Tensor dv;
};

/// Backward of multi_head_attention without dropout, given the attention
/// matrix returned through `probs`.
AttentionGrad multi_head_attention_backward(const Tensor& q, const Tensor& k, const Tensor& v, const Tensor& probs,
                                            std::size_t heads, const Tensor& dout);

// ---------------------------------------------------------------------------
// ReLU LSTM
// ---------------------------------------------------------------------------

/// Gate order in the packed weights is input, forget, candidate, output.
struct LstmWeights {
  Tensor input;      // (C_in, 4C)
  Tensor recurrent;  // (C, 4C)
  std::vector<double> bias;  // 4C

  std::size_t hidden() const { return recurrent.empty() ? 0 : recurrent.dim(0); }

  static LstmWeights random(std::size_t in, std::size_t hidden, Rng& rng);
  static LstmWeights zeros(std::size_t in, std::size_t hidden);
};

struct LstmState {
  Tensor h;
  Tensor c;

  static LstmState zeros(const Shape& shape);
  static LstmState filled(const Shape& shape, double value);
  bool empty() const { return h.empty(); }

  friend bool operator==(const LstmState&, const LstmState&) = default;
};

struct LstmResult {
  Tensor output;
  LstmState state;
};

/// c' = f*c + i*g and h' = o * ReLU(c'), applied independently to every
/// leading position of x (..., C_in).
LstmResult lstm_step(const Tensor& x, const LstmState& state, const LstmWeights& weights);

struct LstmGrad {
  Tensor dx;
  Tensor dh;
  Tensor dc;
};

/// Gradients of a loss with upstream dL/dh' and dL/dc' (either may be
/// empty, meaning zero).
LstmGrad lstm_step_backward(const Tensor& x, const LstmState& state, const LstmWeights& weights,
                            const Tensor& dh_next, const Tensor& dc_next);

// ---------------------------------------------------------------------------
// GMAN parameters and blocks
// ---------------------------------------------------------------------------

struct LsaParams {
  LinearMap query;
  LinearMap key;
  LinearMap value;
  LinearMap output;  // no bias
  std::vector<Complex> spectral;  // one tap per token in a window
  std::vector<double> norm_gamma;
  std::vector<double> norm_beta;
};

struct GmaParams {
  LinearMap key;    // applied to image tokens
  LinearMap query;  // applied to depth tokens
  LinearMap value;  // applied to image tokens
  LstmWeights lstm;
  std::vector<double> norm_gamma;
  std::vector<double> norm_beta;
};

struct GmanParams {
  std::size_t channels = 64;
  std::size_t heads = 8;
  std::size_t window = 7;
  double dropout_rate = 0.30;
  bool training = false;
  std::uint64_t dropout_seed = 0;
  double depth_scale = 0.01;  // meters -> network units

  LinearMap image_embed;  // 3 -> C
  LinearMap depth_embed;  // 3 -> C
  LsaParams lsa;
  GmaParams gma;
  LinearMap mlp;  // fully connected C -> C after GMA, identity activation

  /// Seeded uniform(-1/sqrt(C), 1/sqrt(C)) weights; unit norms; spectral
  /// taps near one.
  static GmanParams random(std::size_t channels, std::size_t heads, std::size_t window, Rng& rng);

  /// Throws ValidationError unless channels divide evenly over heads and
  /// every map agrees with `channels`.
  void validate() const;

  Dropout attention_dropout(std::uint64_t salt) const;
};

/// Window self-attention, spectral filter along the token axis, residual and
/// layer norm: LN(x + spectral(W_o * attention(x))).
Tensor lsa_forward(const Tensor& tokens, const GmanParams& params);

struct GmaResult {
  Tensor output;  // (B*, N, C)
  LstmState state;
};

/// Attention with queries from depth tokens and keys/values from image
/// tokens, followed by the ReLU LSTM and layer norm. An empty state starts
/// from zeros.
GmaResult gma_forward(const Tensor& image_tokens, const Tensor& depth_tokens, const GmanParams& params,
                      const LstmState& state);

struct GmaGrad {
  Tensor d_image;
  Tensor d_depth;
};

/// Input gradients of gma_forward in inference mode for upstream dL/doutput.
GmaGrad gma_backward(const Tensor& image_tokens, const Tensor& depth_tokens, const GmanParams& params,
                     const LstmState& state, const Tensor& doutput);

struct GmanResult {
  Tensor features;  // (H, W, C)
  LstmState state;
  WindowLayout layout;
};

/// Stage 1 for one frame. `image` is (H, W, 3) or (1, H, W, 3) and must
/// share H and W with `depth`.
GmanResult gman_forward(const Tensor& image, const DepthMap& depth, const GmanParams& params,
                        const LstmState& state);

/// Image embedding alone, used when Stage 1 is ablated.
Tensor gman_embed_only(const Tensor& image, const GmanParams& params);

}  // namespace savid
