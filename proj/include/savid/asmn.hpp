#pragma once

#include <utility>
#include <vector>

#include "savid/numerics/linear.hpp"
#include "savid/numerics/ops.hpp"
#include "savid/numerics/tensor.hpp"

namespace savid {

/// How the query-key product l(q_g) . l(k) becomes a per-token C-vector.
///   attention:   sparse attention of LiDAR queries over image keys, the
///                row-normalized weights applied to the keys.
///   elementwise: q_g * k channel by channel.
enum class AsmnMode { attention, elementwise };

struct AsmnParams {
  std::size_t channels = 64;
  LinearMap query;  // applied to F_L
  LinearMap key;    // applied to F_I
  LinearMap value;  // applied to F_I
  BatchNormParams bn_qk;
  BatchNormParams bn_hidden;
  double sparsity = 0.25;  // fraction of keys kept per query row
  AsmnMode mode = AsmnMode::attention;
  // Both on: F_S = ReLU(b_c * l(v)) * Tanh(b_h * l(v)).
  // Both off: F_S = (b_c * v) * Tanh(b_h * v).
  bool value_relu = true;
  bool value_linear = true;

  static AsmnParams random(std::size_t channels, Rng& rng);
  void validate() const;
};

/// Hidden and cell state over the flattened (H*W, C) tokens.
struct AsmnState {
  Tensor h;
  Tensor c;

  /// Multiplicative gates annihilate a zero state, so sequences start from ones.
  static AsmnState ones(std::size_t tokens, std::size_t channels);

  friend bool operator==(const AsmnState&, const AsmnState&) = default;
};

/// Scaled logits q k^T / sqrt(C), shape (T, T). In each row all but the
/// ceil(rho * T) largest entries are set to -inf; ties keep the lower column.
Tensor sparse_attention_logits(const Tensor& q, const Tensor& k, double rho);

struct AsmnResult {
  Tensor features;  // F_S, (H, W, C)
  AsmnState state;
};

AsmnResult asmn_step(const Tensor& image_features, const Tensor& lidar_features, const AsmnParams& params,
                     const AsmnState& state);

/// The l(q_g) . l(k) term for the flattened tokens, shape (H*W, C), before
/// batch normalization.
Tensor asmn_query_key(const Tensor& image_features, const Tensor& lidar_features, const AsmnParams& params);

struct AsmnGrad {
  Tensor d_image;
  Tensor d_lidar;
};

/// Input gradients of asmn_step for upstream gradients on F_S, h_t and c_t
/// (any of which may be empty, meaning zero).
AsmnGrad asmn_step_backward(const Tensor& image_features, const Tensor& lidar_features, const AsmnParams& params,
                            const AsmnState& state, const Tensor& d_features, const Tensor& d_hidden,
                            const Tensor& d_cell);

struct AsmnSequenceResult {
  Tensor features;               // F_S of the last frame
  std::vector<AsmnState> states;  // state after each frame
};

/// Folds asmn_step over (F_I, F_L) frames from an all-ones state.
AsmnSequenceResult asmn_sequence(const std::vector<std::pair<Tensor, Tensor>>& frames, const AsmnParams& params);

}  // namespace savid
