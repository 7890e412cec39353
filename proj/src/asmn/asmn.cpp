#include "savid/asmn.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <string>

#include "savid/errors.hpp"

namespace savid {

namespace {

std::size_t kept_per_row(double rho, std::size_t tokens) {
  if (!(rho > 0.0 && rho <= 1.0)) throw ValidationError("sparsity fraction must lie in (0, 1], got " + std::to_string(rho));
  if (tokens == 0) throw ValidationError("sparse attention needs at least one token");
  // The small slack keeps values like 0.3 * 10 from rounding up to 4.
  const double raw = std::ceil(rho * static_cast<double>(tokens) - 1e-9);
  return std::clamp<std::size_t>(static_cast<std::size_t>(raw), 1, tokens);
}

// Row-wise sparse softmax attention of q over k: for every row the kept
// columns (ascending) and their normalized weights.
struct SparseAttention {
  std::size_t tokens = 0;
  std::size_t keep = 0;
  std::vector<std::uint32_t> cols;
  std::vector<double> weights;
};

constexpr std::size_t kRowBlock = 4;

// Scaled logits of query rows [first, first + rows) into rows.size() buffers
// of length T. Rows are processed together so each pass over K^T serves
// several queries; every entry is still summed over channels in order.
void logit_rows(const Tensor& q, const Tensor& k_transposed, std::size_t first, std::size_t rows, double scale,
                std::vector<std::vector<double>>& out) {
  const std::size_t t = k_transposed.dim(1), c = k_transposed.dim(0);
  const double* kt = k_transposed.data().data();
  const double* qd = q.data().data();
  for (std::size_t r = 0; r < rows; ++r) std::fill(out[r].begin(), out[r].end(), 0.0);
  if (rows == kRowBlock) {
    double* r0 = out[0].data();
    double* r1 = out[1].data();
    double* r2 = out[2].data();
    double* r3 = out[3].data();
    for (std::size_t ch = 0; ch < c; ++ch) {
      const double a0 = qd[first * c + ch], a1 = qd[(first + 1) * c + ch];
      const double a2 = qd[(first + 2) * c + ch], a3 = qd[(first + 3) * c + ch];
      const double* krow = kt + ch * t;
      for (std::size_t j = 0; j < t; ++j) {
        const double kv = krow[j];
        r0[j] += a0 * kv;
        r1[j] += a1 * kv;
        r2[j] += a2 * kv;
        r3[j] += a3 * kv;
      }
    }
  } else {
    for (std::size_t r = 0; r < rows; ++r) {
      double* row = out[r].data();
      for (std::size_t ch = 0; ch < c; ++ch) {
        const double a = qd[(first + r) * c + ch];
        const double* krow = kt + ch * t;
        for (std::size_t j = 0; j < t; ++j) row[j] += a * krow[j];
      }
    }
  }
  for (std::size_t r = 0; r < rows; ++r) {
    for (double& v : out[r]) v *= scale;
  }
}

// Indices of the `keep` largest entries, ties to the lower index, returned
// in ascending index order.
void top_columns(const std::vector<double>& row, std::size_t keep, std::vector<std::uint32_t>& idx) {
  idx.resize(row.size());
  std::iota(idx.begin(), idx.end(), 0u);
  auto better = [&row](std::uint32_t a, std::uint32_t b) { return row[a] > row[b] || (row[a] == row[b] && a < b); };
  if (keep < row.size()) std::nth_element(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(keep - 1), idx.end(), better);
  idx.resize(keep);
  std::sort(idx.begin(), idx.end());
}

Tensor transpose2(const Tensor& x) { return transpose_last2(x); }

SparseAttention sparse_attention(const Tensor& q, const Tensor& k, double rho) {
  const std::size_t t = q.dim(0), c = q.dim(1);
  SparseAttention att;
  att.tokens = t;
  att.keep = kept_per_row(rho, t);
  att.cols.resize(t * att.keep);
  att.weights.resize(t * att.keep);
  const Tensor kt = transpose2(k);
  const double scale = 1.0 / std::sqrt(static_cast<double>(c));
  std::vector<std::vector<double>> rows(kRowBlock, std::vector<double>(t));
  std::vector<std::uint32_t> idx;
  for (std::size_t first = 0; first < t; first += kRowBlock) {
    const std::size_t count = std::min(kRowBlock, t - first);
    logit_rows(q, kt, first, count, scale, rows);
    for (std::size_t r = 0; r < count; ++r) {
      const std::size_t i = first + r;
      const std::vector<double>& row = rows[r];
      top_columns(row, att.keep, idx);
      double peak = -std::numeric_limits<double>::infinity();
      for (auto j : idx) peak = std::max(peak, row[j]);
      double sum = 0.0;
      double* w = att.weights.data() + i * att.keep;
      for (std::size_t s = 0; s < att.keep; ++s) {
        w[s] = std::exp(row[idx[s]] - peak);
        sum += w[s];
      }
      for (std::size_t s = 0; s < att.keep; ++s) w[s] /= sum;
      std::copy(idx.begin(), idx.end(), att.cols.begin() + static_cast<std::ptrdiff_t>(i * att.keep));
    }
  }
  return att;
}

Tensor apply_attention(const SparseAttention& att, const Tensor& values) {
  const std::size_t c = values.dim(1);
  Tensor out({att.tokens, c});
  for (std::size_t i = 0; i < att.tokens; ++i) {
    double* oi = out.data().data() + i * c;
    for (std::size_t s = 0; s < att.keep; ++s) {
      const double a = att.weights[i * att.keep + s];
      const double* vj = values.data().data() + att.cols[i * att.keep + s] * c;
      for (std::size_t ch = 0; ch < c; ++ch) oi[ch] += a * vj[ch];
    }
  }
  return out;
}

struct Flattened {
  Tensor image;  // (T, C)
  Tensor lidar;  // (T, C)
  std::size_t height;
  std::size_t width;
};

Flattened flatten_inputs(const Tensor& image, const Tensor& lidar, const AsmnParams& params) {
  if (image.rank() != 3 || image.shape() != lidar.shape()) {
    throw ShapeError("asmn_step: F_I " + to_string(image.shape()) + " and F_L " + to_string(lidar.shape()) +
                     " must share an (H, W, C) shape");
  }
  if (image.dim(2) != params.channels) {
    throw ShapeError("asmn_step: features have " + std::to_string(image.dim(2)) + " channels, expected " +
                     std::to_string(params.channels));
  }
  const std::size_t t = image.dim(0) * image.dim(1);
  return {image.reshaped({t, params.channels}), lidar.reshaped({t, params.channels}), image.dim(0), image.dim(1)};
}

void check_state(const AsmnState& state, std::size_t tokens, std::size_t channels) {
  const Shape expected{tokens, channels};
  if (state.h.shape() != expected || state.c.shape() != expected) {
    throw ShapeError("ASMN state " + to_string(state.h.shape()) + " does not match tokens " + to_string(expected));
  }
  if (!state.h.all_finite() || !state.c.all_finite()) throw NumericalError("ASMN state contains non-finite values");
}

// Every intermediate of one step, kept for the backward pass.
struct Forward {
  Tensor q, k, lv;
  SparseAttention attention;
  Tensor qk, bn_qk, bn_h, beta_h, beta_c, pre_value, value_gate, tanh_gate, features, cell, hidden;
};

Forward run_forward(const Flattened& in, const AsmnParams& params, const AsmnState& state) {
  Forward f;
  f.q = params.query.apply(in.lidar);
  f.k = params.key.apply(in.image);
  f.lv = params.value_linear ? params.value.apply(in.image) : in.image;
  if (params.mode == AsmnMode::attention) {
    f.attention = sparse_attention(f.q, f.k, params.sparsity);
    f.qk = apply_attention(f.attention, f.k);
  } else {
    f.qk = hadamard(f.q, f.k);
  }
  f.bn_qk = batch_norm_affine(f.qk, params.bn_qk);
  f.bn_h = batch_norm_affine(state.h, params.bn_hidden);
  f.beta_h = hadamard(f.bn_qk, f.bn_h);
  f.beta_c = relu(hadamard(f.beta_h, state.c));
  f.pre_value = hadamard(f.beta_c, f.lv);
  f.value_gate = params.value_relu ? relu(f.pre_value) : f.pre_value;
  f.tanh_gate = tanh(hadamard(f.beta_h, f.lv));
  f.features = hadamard(f.value_gate, f.tanh_gate);
  f.cell = hadamard(f.beta_c, f.features);
  f.hidden = hadamard(relu(f.beta_h), tanh(f.cell));
  return f;
}

}  // namespace

AsmnParams AsmnParams::random(std::size_t channels, Rng& rng) {
  AsmnParams p;
  p.channels = channels;
  p.query = LinearMap::random(channels, channels, false, rng);
  p.key = LinearMap::random(channels, channels, false, rng);
  p.value = LinearMap::random(channels, channels, false, rng);
  p.bn_qk = BatchNormParams::identity(channels);
  p.bn_hidden = BatchNormParams::identity(channels);
  return p;
}

void AsmnParams::validate() const {
  if (channels == 0) throw ValidationError("ASMN: channels must be positive");
  for (const LinearMap* m : {&query, &key, &value}) {
    if (m->in_features() != channels || m->out_features() != channels) throw ShapeError("ASMN: linear maps must be C x C");
  }
  if (bn_qk.mean.size() != channels || bn_hidden.mean.size() != channels) {
    throw ShapeError("ASMN: batch-norm statistics must have C entries");
  }
  kept_per_row(sparsity, 1);
}

AsmnState AsmnState::ones(std::size_t tokens, std::size_t channels) {
  return {Tensor({tokens, channels}, 1.0), Tensor({tokens, channels}, 1.0)};
}

Tensor sparse_attention_logits(const Tensor& q, const Tensor& k, double rho) {
  if (q.rank() != 2 || k.shape() != q.shape()) {
    throw ShapeError("sparse_attention_logits expects matching (T, C) inputs, got " + to_string(q.shape()) + " and " +
                     to_string(k.shape()));
  }
  const std::size_t t = q.dim(0), c = q.dim(1);
  const std::size_t keep = kept_per_row(rho, t);
  const Tensor kt = transpose2(k);
  const double scale = 1.0 / std::sqrt(static_cast<double>(c));
  Tensor out({t, t}, -std::numeric_limits<double>::infinity());
  std::vector<std::vector<double>> rows(kRowBlock, std::vector<double>(t));
  std::vector<std::uint32_t> idx;
  for (std::size_t first = 0; first < t; first += kRowBlock) {
    const std::size_t count = std::min(kRowBlock, t - first);
    logit_rows(q, kt, first, count, scale, rows);
    for (std::size_t r = 0; r < count; ++r) {
      top_columns(rows[r], keep, idx);
      for (auto j : idx) out[(first + r) * t + j] = rows[r][j];
    }
  }
  return out;
}

AsmnResult asmn_step(const Tensor& image_features, const Tensor& lidar_features, const AsmnParams& params,
                     const AsmnState& state) {
  params.validate();
  const Flattened in = flatten_inputs(image_features, lidar_features, params);
  check_state(state, in.image.dim(0), params.channels);
  Forward f = run_forward(in, params, state);
  return {f.features.reshaped({in.height, in.width, params.channels}), AsmnState{std::move(f.hidden), std::move(f.cell)}};
}

Tensor asmn_query_key(const Tensor& image_features, const Tensor& lidar_features, const AsmnParams& params) {
  params.validate();
  const Flattened in = flatten_inputs(image_features, lidar_features, params);
  const Tensor q = params.query.apply(in.lidar);
  const Tensor k = params.key.apply(in.image);
  if (params.mode == AsmnMode::elementwise) return hadamard(q, k);
  return apply_attention(sparse_attention(q, k, params.sparsity), k);
}

AsmnGrad asmn_step_backward(const Tensor& image_features, const Tensor& lidar_features, const AsmnParams& params,
                            const AsmnState& state, const Tensor& d_features, const Tensor& d_hidden,
                            const Tensor& d_cell) {
  params.validate();
  const Flattened in = flatten_inputs(image_features, lidar_features, params);
  const std::size_t t = in.image.dim(0), c = params.channels;
  check_state(state, t, c);
  const Forward f = run_forward(in, params, state);

  auto upstream = [&](const Tensor& g) -> Tensor {
    if (g.empty()) return Tensor({t, c});
    if (g.size() != t * c) throw ShapeError("asmn_step_backward: upstream gradient has the wrong size");
    return g.reshaped({t, c});
  };
  const Tensor dF = upstream(d_features), dH = upstream(d_hidden), dC = upstream(d_cell);

  Tensor d_beta_h({t, c}), d_beta_c({t, c}), d_lv({t, c});
  for (std::size_t i = 0; i < t * c; ++i) {
    const double bh = f.beta_h[i], bc = f.beta_c[i], lv = f.lv[i];
    const double tc = std::tanh(f.cell[i]);
    // h_t = ReLU(b_h) * tanh(c_t)
    if (bh > 0.0) d_beta_h[i] += dH[i] * tc;
    const double d_ct = dC[i] + dH[i] * (bh > 0.0 ? bh : 0.0) * (1.0 - tc * tc);
    // c_t = b_c * F_S
    d_beta_c[i] += d_ct * f.features[i];
    const double dFt = dF[i] + d_ct * bc;
    // F_S = gate(b_c * lv) * tanh(b_h * lv)
    const double tg = f.tanh_gate[i];
    const double d_gate = dFt * tg;
    const double d_tanh_pre = dFt * f.value_gate[i] * (1.0 - tg * tg);
    d_beta_h[i] += d_tanh_pre * lv;
    d_lv[i] += d_tanh_pre * bh;
    const double d_pre = params.value_relu ? (f.pre_value[i] > 0.0 ? d_gate : 0.0) : d_gate;
    d_beta_c[i] += d_pre * lv;
    d_lv[i] += d_pre * bc;
    // b_c = ReLU(b_h * c_prev)
    const double c_prev = state.c[i];
    if (bh * c_prev > 0.0) d_beta_h[i] += d_beta_c[i] * c_prev;
  }
  // b_h = BN(qk) * BN(h_prev)
  const Tensor d_qk = batch_norm_affine_backward(hadamard(d_beta_h, f.bn_h), params.bn_qk);

  Tensor dq({t, c}), dk({t, c});
  if (params.mode == AsmnMode::elementwise) {
    dq = hadamard(d_qk, f.k);
    dk = hadamard(d_qk, f.q);
  } else {
    const SparseAttention& att = f.attention;
    const double scale = 1.0 / std::sqrt(static_cast<double>(c));
    std::vector<double> da(att.keep);
    for (std::size_t i = 0; i < t; ++i) {
      const double* g = d_qk.data().data() + i * c;
      const double* w = att.weights.data() + i * att.keep;
      const std::uint32_t* cols = att.cols.data() + i * att.keep;
      double dot = 0.0;
      for (std::size_t s = 0; s < att.keep; ++s) {
        const double* kj = f.k.data().data() + cols[s] * c;
        double* dkj = dk.data().data() + cols[s] * c;
        double acc = 0.0;
        for (std::size_t ch = 0; ch < c; ++ch) {
          acc += g[ch] * kj[ch];
          dkj[ch] += w[s] * g[ch];
        }
        da[s] = acc;
        dot += w[s] * acc;
      }
      const double* qi = f.q.data().data() + i * c;
      double* dqi = dq.data().data() + i * c;
      for (std::size_t s = 0; s < att.keep; ++s) {
        const double ds = w[s] * (da[s] - dot) * scale;
        const double* kj = f.k.data().data() + cols[s] * c;
        double* dkj = dk.data().data() + cols[s] * c;
        for (std::size_t ch = 0; ch < c; ++ch) {
          dqi[ch] += ds * kj[ch];
          dkj[ch] += ds * qi[ch];
        }
      }
    }
  }

  Tensor d_image = params.key.backward_input(dk);
  d_image = add(d_image, params.value_linear ? params.value.backward_input(d_lv) : d_lv);
  const Tensor d_lidar = params.query.backward_input(dq);
  return {d_image.reshaped(image_features.shape()), d_lidar.reshaped(lidar_features.shape())};
}

AsmnSequenceResult asmn_sequence(const std::vector<std::pair<Tensor, Tensor>>& frames, const AsmnParams& params) {
  if (frames.empty()) throw ValidationError("asmn_sequence: empty frame sequence");
  const Tensor& first = frames.front().first;
  if (first.rank() != 3) throw ShapeError("asmn_sequence: frames must be (H, W, C)");
  AsmnState state = AsmnState::ones(first.dim(0) * first.dim(1), params.channels);
  AsmnSequenceResult result;
  result.states.reserve(frames.size());
  for (const auto& [image, lidar] : frames) {
    AsmnResult step = asmn_step(image, lidar, params, state);
    state = step.state;
    result.states.push_back(std::move(step.state));
    result.features = std::move(step.features);
  }
  return result;
}

}  // namespace savid
