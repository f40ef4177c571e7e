#pragma once

// Differentiable blocks with explicit forward/backward passes. Every forward
// optionally records what its backward needs on a tape; backward on a tape
// that was never recorded throws TapeMismatch.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string_view>
#include <vector>

#include "csnet/tensor_core.hpp"

namespace csnet::nn {

enum class Mode { Train, Eval };

using Rng = std::mt19937_64;

// Visits every tensor of a parameter struct as (name, values, decays). Biases
// and normalization gains/shifts report decays = false.
template <class P, class F>
void for_each_tensor(P& params, F&& f) {
  params.visit(params, f);
}

template <class P>
std::size_t parameter_count(const P& params) {
  std::size_t n = 0;
  for_each_tensor(params, [&](std::string_view, auto values, bool) { n += values.size(); });
  return n;
}

template <class P>
std::vector<double> flatten(const P& params) {
  std::vector<double> out;
  for_each_tensor(params, [&](std::string_view, auto values, bool) {
    out.insert(out.end(), values.begin(), values.end());
  });
  return out;
}

template <class P>
void unflatten(P& params, std::span<const double> flat) {
  std::size_t pos = 0;
  for_each_tensor(params, [&](std::string_view, auto values, bool) {
    for (auto& v : values) v = flat[pos++];
  });
}

template <class P>
P zeros_like(const P& params) {
  P out = params;
  for_each_tensor(out, [](std::string_view, auto values, bool) {
    for (auto& v : values) v = 0.0;
  });
  return out;
}

// out += scale * other, tensor by tensor.
template <class P>
void accumulate(P& out, const P& other, double scale = 1.0) {
  std::vector<std::span<const double>> src;
  for_each_tensor(other, [&](std::string_view, auto values, bool) {
    src.emplace_back(values.data(), values.size());
  });
  std::size_t i = 0;
  for_each_tensor(out, [&](std::string_view, auto values, bool) {
    const auto s = src[i++];
    for (std::size_t k = 0; k < values.size(); ++k) values[k] += scale * s[k];
  });
}

// Uniform initialization in +-sqrt(6 / (fan_in + fan_out)).
void init_uniform(std::span<double> values, std::size_t fan_in, std::size_t fan_out, Rng& rng);

// ---------------------------------------------------------------------------
// 2-D convolution signal transform

// Learnable kernel set; weights indexed [n][i][j] over (time, event) taps.
struct KernelBank {
  std::size_t n_kernels = 0;
  std::size_t k_t = 0;
  std::size_t k_s = 0;
  std::vector<double> weights;
  std::vector<double> bias;

  KernelBank() = default;
  KernelBank(std::size_t n, std::size_t kt, std::size_t ks);
  static KernelBank random(std::size_t n, std::size_t kt, std::size_t ks, Rng& rng);

  double& w(std::size_t n, std::size_t i, std::size_t j) { return weights[(n * k_t + i) * k_s + j]; }
  double w(std::size_t n, std::size_t i, std::size_t j) const {
    return weights[(n * k_t + i) * k_s + j];
  }

  template <class Self, class F>
  static void visit(Self& self, F&& f) {
    f("kernel.weights", std::span(self.weights), true);
    f("kernel.bias", std::span(self.bias), false);
  }
};

using FeatureMaps = std::vector<Matrix>;

struct ConvTape {
  Panel input;
  KernelBank bank;
  bool recorded = false;
};

struct ConvGrads {
  Panel input;
  KernelBank bank;
};

// True 2-D convolution with zero same-padding:
//   out[n](t, s) = sum_{x,y} f(x, y) * k_n(t - x + t_off, s - y + s_off) + b_n
// with t_off = k_t / 2, s_off = k_s / 2, summed over valid kernel indices.
// Evaluated as a cross-correlation against the index-reversed kernel.
FeatureMaps conv2d_forward(const Panel& panel, const KernelBank& bank, ConvTape* tape = nullptr);
ConvGrads conv2d_backward(const ConvTape& tape, const FeatureMaps& upstream);

// ---------------------------------------------------------------------------
// Layer normalization over each row

inline constexpr double kLayerNormEps = 1e-5;

struct LayerNormParams {
  std::vector<double> gamma;
  std::vector<double> beta;

  LayerNormParams() = default;
  explicit LayerNormParams(std::size_t width) : gamma(width, 1.0), beta(width, 0.0) {}

  template <class Self, class F>
  static void visit(Self& self, F&& f) {
    f("norm.gamma", std::span(self.gamma), false);
    f("norm.beta", std::span(self.beta), false);
  }
};

struct LayerNormTape {
  Matrix normalized;
  std::vector<double> inv_std;
  bool recorded = false;
};

Matrix layer_norm_forward(const Matrix& x, const LayerNormParams& params,
                          LayerNormTape* tape = nullptr);
// Returns the input gradient; parameter gradients accumulate into `grads`.
Matrix layer_norm_backward(const LayerNormTape& tape, const LayerNormParams& params,
                           const Matrix& upstream, LayerNormParams& grads);

// ---------------------------------------------------------------------------
// Multi-head self-attention with residual connection and layer norm

// Head h uses columns [h * d_head, (h + 1) * d_head) of wq, wk and wv.
struct AttentionParams {
  std::size_t d_model = 0;
  std::size_t n_heads = 0;
  Matrix wq, wk, wv;  // d_model x d_model
  Matrix wo;          // d_model x d_model
  std::vector<double> bo;
  LayerNormParams norm;

  AttentionParams() = default;
  AttentionParams(std::size_t d_model, std::size_t n_heads);
  static AttentionParams random(std::size_t d_model, std::size_t n_heads, Rng& rng);

  std::size_t d_head() const { return d_model / n_heads; }

  template <class Self, class F>
  static void visit(Self& self, F&& f) {
    f("attn.wq", std::span(self.wq.values()), true);
    f("attn.wk", std::span(self.wk.values()), true);
    f("attn.wv", std::span(self.wv.values()), true);
    f("attn.wo", std::span(self.wo.values()), true);
    f("attn.bo", std::span(self.bo), false);
    LayerNormParams::visit(self.norm, f);
  }
};

struct AttentionTape {
  Matrix x, q, k, v;
  std::vector<Matrix> probs;  // one G x G matrix per (group, head), group-major
  std::size_t group = 0;      // tokens per independent set
  Matrix mixed;               // concatenated head outputs, L x d_model
  LayerNormTape norm;
  bool recorded = false;
};

struct AttentionGrads {
  Matrix tokens;
  AttentionParams params;
};

// Row-wise softmax with max subtraction.
void softmax_rows(Matrix& m);

// Pre-residual path: concat_h(softmax(Q_h K_h^T / sqrt(d_head)) V_h) W_o + b_o.
// With group > 0 the rows form consecutive independent sets of `group`
// tokens that only attend within their own set; 0 means one set of all rows.
Matrix attention_core_forward(const Matrix& tokens, const AttentionParams& params,
                              AttentionTape* tape = nullptr, std::size_t group = 0);
// LayerNorm(tokens + core(tokens)). Rows are tokens; no positional encoding.
Matrix attention_forward(const Matrix& tokens, const AttentionParams& params,
                         AttentionTape* tape = nullptr, std::size_t group = 0);
AttentionGrads attention_backward(const AttentionTape& tape, const AttentionParams& params,
                                  const Matrix& upstream);

// ---------------------------------------------------------------------------
// Multilayer perceptron: affine-ReLU chain with a final affine layer

struct MlpParams {
  std::vector<Matrix> weights;  // weights[l] is in_l x out_l
  std::vector<std::vector<double>> biases;

  MlpParams() = default;
  explicit MlpParams(std::span<const std::size_t> widths);
  static MlpParams random(std::span<const std::size_t> widths, Rng& rng);

  std::size_t input_width() const { return weights.front().rows(); }
  std::size_t output_width() const { return weights.back().cols(); }

  template <class Self, class F>
  static void visit(Self& self, F&& f) {
    for (std::size_t l = 0; l < self.weights.size(); ++l) {
      f("mlp.weight", std::span(self.weights[l].values()), true);
      f("mlp.bias", std::span(self.biases[l]), false);
    }
  }
};

struct MlpTape {
  std::vector<Matrix> layer_inputs;  // input seen by each affine layer
  std::vector<Matrix> pre_activation;
  std::vector<std::vector<double>> dropout_masks;  // per hidden layer
  bool recorded = false;
};

struct MlpGrads {
  Matrix input;
  MlpParams params;
};

// Rows of `x` are independent samples. Dropout (train mode only) follows each
// hidden ReLU.
Matrix mlp_forward(const Matrix& x, const MlpParams& params, MlpTape* tape = nullptr,
                   double dropout = 0.0, Mode mode = Mode::Eval, Rng* rng = nullptr);
MlpGrads mlp_backward(const MlpTape& tape, const MlpParams& params, const Matrix& upstream);

// ---------------------------------------------------------------------------
// Transformer encoder layer: attention -> add & norm -> feed-forward -> add & norm

struct EncoderLayerParams {
  AttentionParams attention;
  MlpParams ffn;  // d_model -> d_ff -> d_model
  LayerNormParams norm;

  EncoderLayerParams() = default;
  static EncoderLayerParams random(std::size_t d_model, std::size_t n_heads, std::size_t d_ff,
                                   Rng& rng);

  template <class Self, class F>
  static void visit(Self& self, F&& f) {
    AttentionParams::visit(self.attention, f);
    MlpParams::visit(self.ffn, f);
    LayerNormParams::visit(self.norm, f);
  }
};

struct EncoderLayerTape {
  AttentionTape attention;
  MlpTape ffn;
  LayerNormTape norm;
  bool recorded = false;
};

struct EncoderLayerGrads {
  Matrix tokens;
  EncoderLayerParams params;
};

Matrix encoder_layer_forward(const Matrix& tokens, const EncoderLayerParams& params,
                             EncoderLayerTape* tape = nullptr, std::size_t group = 0);
EncoderLayerGrads encoder_layer_backward(const EncoderLayerTape& tape,
                                         const EncoderLayerParams& params, const Matrix& upstream);

// ---------------------------------------------------------------------------
// Inverted dropout

// Train mode zeroes each entry with probability `rate` and scales survivors by
// 1 / (1 - rate); eval mode is the identity. `mask`, when given, receives the
// per-entry multiplier. Throws InvalidRate unless 0 <= rate < 1.
std::vector<double> dropout_apply(std::span<const double> values, double rate, Mode mode, Rng& rng,
                                  std::vector<double>* mask = nullptr);

// ---------------------------------------------------------------------------
// Finite-difference validation

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  std::size_t checked = 0;
  bool passed = true;
};

// max(|a - n| / max(|a|, |n|, 1e-8)) over all entries, with n the central
// difference of `loss` at `point`.
GradCheckResult finite_difference_check(const std::function<double(std::span<const double>)>& loss,
                                        std::span<const double> point,
                                        std::span<const double> analytic, double step,
                                        double tolerance);

enum class Block { Conv2d, Attention, EncoderLayer, Mlp };

std::string_view block_name(Block block);

// Random instance at the default check shapes (conv: 4x3 panel, two 3x3
// kernels; attention and encoder: 3 tokens, d_model 4, 2 heads; MLP 6-8-3).
// The scalar loss is sum(G * output) for a random G; every input and
// parameter entry is checked.
GradCheckResult check_block_gradients(Block block, std::uint64_t seed, double step = 1e-5,
                                      double tolerance = 1e-4);

}  // namespace csnet::nn
