#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "csnet/error.hpp"
#include "csnet/nn_blocks.hpp"
#include "csnet/tensor_core.hpp"

namespace csnet {

// Ablation variants: convolution transform only (csnet1), the same network
// blended with a VAR forecast (csnet2), and attention encoder plus
// convolution plus VAR blend (csnet3).
enum class Variant { ConvOnly, ConvPlusVar, Full };

std::string variant_name(Variant v);
Variant parse_variant(const std::string& name);

// How the per-kernel feature maps are reduced over the time axis before the
// MLP head. Mean averages each (kernel, event) column; MeanLast also appends
// the column's value at the final time step.
enum class Pooling { Mean, MeanLast };

struct CsNetConfig {
  Variant variant = Variant::Full;
  std::size_t window = 170;
  std::size_t horizon = 8;
  std::size_t n_kernels = 8;
  std::size_t k_t = 3;
  std::size_t k_s = 3;
  std::size_t d_model = 16;
  std::size_t n_heads = 2;
  std::size_t d_ff = 32;
  std::size_t encoder_layers = 1;
  std::vector<std::size_t> mlp_hidden = {32};
  Pooling pooling = Pooling::MeanLast;
  double dropout = 0.1;
  double learning_rate = 1e-3;
  double l2 = 1e-4;
  std::size_t epochs = 50;
  std::size_t batch_size = 8;
  std::uint64_t seed = 0;
  bool record_loss = true;  // evaluate the full training loss after every epoch

  bool uses_attention() const { return variant == Variant::Full; }
  bool uses_var() const { return variant != Variant::ConvOnly; }
  // Throws InvalidConfig.
  void validate() const;
};

struct CsNetParams {
  nn::KernelBank kernels;
  // Attention path; empty unless the variant uses attention.
  Matrix embed_w;  // E x d_model
  std::vector<double> embed_b;
  std::vector<nn::EncoderLayerParams> encoder;
  Matrix unembed_w;  // d_model x E
  std::vector<double> unembed_b;
  nn::MlpParams head;  // pooled features -> H * E

  static CsNetParams init(const CsNetConfig& config, std::size_t e_len, nn::Rng& rng);

  template <class Self, class F>
  static void visit(Self& self, F&& f) {
    nn::KernelBank::visit(self.kernels, f);
    f("embed.weight", std::span(self.embed_w.values()), true);
    f("embed.bias", std::span(self.embed_b), false);
    for (auto& layer : self.encoder) nn::EncoderLayerParams::visit(layer, f);
    f("unembed.weight", std::span(self.unembed_w.values()), true);
    f("unembed.bias", std::span(self.unembed_b), false);
    nn::MlpParams::visit(self.head, f);
  }
};

std::size_t feature_width(const CsNetConfig& config, std::size_t e_len);

// Intermediates of one forward pass, for backward.
struct ModelTape {
  bool recorded = false;
  DataCuboid input;
  // Attention path over the stacked (W * R) x d_model tokens.
  std::vector<nn::EncoderLayerTape> encoder;  // one per layer
  Matrix encoded;
  // Convolution path, one entry per region.
  std::vector<nn::ConvTape> conv;
  std::vector<double> feature_mask;
  nn::MlpTape head;
};

// Maps a normalized W x E x R window to an H x E x R forecast block. With the
// attention path enabled, each time step's R region vectors are embedded to
// d_model, encoded across regions, projected back to E and added to the input.
// Every region's time x event panel then goes through the kernel bank; pooled
// feature maps feed the shared MLP head, which emits all H steps at once.
// Dropout (on pooled features and hidden layers) is active only in train mode.
ForecastBlock forward(const DataCuboid& window, const CsNetParams& params,
                      const CsNetConfig& config, nn::Mode mode, nn::Rng* rng = nullptr,
                      ModelTape* tape = nullptr);

struct ModelGrads {
  DataCuboid input;
  CsNetParams params;
};

ModelGrads backward(const ModelTape& tape, const CsNetParams& params, const CsNetConfig& config,
                    const ForecastBlock& upstream);

// Sum of squares of decaying parameters (biases and norm gains excluded).
double l2_penalty(const CsNetParams& params);
void add_l2_gradient(CsNetParams& grads, const CsNetParams& params, double l2);

// mean((forecast - truth)^2) + l2 * l2_penalty(params).
double loss(const ForecastBlock& forecast, const ForecastBlock& truth, const CsNetParams& params,
            double l2);
// d mean((forecast - truth)^2) / d forecast.
ForecastBlock loss_gradient(const ForecastBlock& forecast, const ForecastBlock& truth);

struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::size_t step = 0;
  std::vector<double> m;
  std::vector<double> v;
};

// Bias-corrected Adam update of every parameter tensor.
template <class P>
void adam_step(P& params, const P& grads, AdamState& state, double lr);

// Per-series z-score statistics, indexed e * r_len + r.
struct Normalization {
  std::size_t e_len = 0;
  std::size_t r_len = 0;
  std::vector<double> mean;
  std::vector<double> scale;  // population std; zero for constant series

  static Normalization fit(const DataCuboid& data);
  DataCuboid normalize(const DataCuboid& data) const;
  DataCuboid denormalize(const DataCuboid& data) const;
};

struct TrainedModel {
  CsNetConfig config;
  std::size_t e_len = 0;
  std::size_t r_len = 0;
  bool count_data = false;
  Normalization normalization;
  CsNetParams params;
  std::vector<double> loss_history;  // eval-mode training loss per epoch
  std::optional<double> ensemble_weight;  // network share when blended with VAR
};

std::size_t count_training_samples(std::size_t t_len, std::size_t window, std::size_t horizon);

// Builds every stride-1 (window, horizon) pair, normalizes per series on the
// given range and runs mini-batch Adam. When `initial` is given, training
// starts from those parameters instead of a fresh draw. Throws
// InsufficientHistory, or IncompatibleModel for mismatched initial parameters.
TrainedModel train(const DataCuboid& data, const CsNetConfig& config, bool count_data = false,
                   const CsNetParams* initial = nullptr);

// Forecast of the H steps after the last row of `data`, from its trailing W rows.
ForecastBlock predict(const DataCuboid& data, const TrainedModel& model);

// Finite-difference check of loss(forward(window)) over every parameter and
// input entry, at a random instance of the given shape.
nn::GradCheckResult check_model_gradients(const CsNetConfig& config, std::size_t e_len,
                                          std::size_t r_len, std::uint64_t seed,
                                          double step = 1e-5, double tolerance = 1e-4);

// Binary model file; layout documented in docs/model_format.md.
void save_model(const TrainedModel& model, const std::filesystem::path& path);
TrainedModel load_model(const std::filesystem::path& path);

// Canonical hash of the model configuration, embedded in artifacts.
std::string config_hash(const CsNetConfig& config);

// ---------------------------------------------------------------------------

template <class P>
void adam_step(P& params, const P& grads, AdamState& state, double lr) {
  const std::size_t n = nn::parameter_count(params);
  if (nn::parameter_count(grads) != n) {
    throw Error(Errc::ShapeMismatch, "gradient shape differs from parameters");
  }
  if (state.m.empty()) {
    state.m.assign(n, 0.0);
    state.v.assign(n, 0.0);
  }
  if (state.m.size() != n || state.v.size() != n) {
    throw Error(Errc::ShapeMismatch, "Adam state shape differs from parameters");
  }
  ++state.step;
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  const std::vector<double> g = nn::flatten(grads);
  std::size_t i = 0;
  nn::for_each_tensor(params, [&](std::string_view, std::span<double> values, bool) {
    for (auto& theta : values) {
      state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g[i];
      state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g[i] * g[i];
      const double m_hat = state.m[i] / c1;
      const double v_hat = state.v[i] / c2;
      theta -= lr * m_hat / (std::sqrt(v_hat) + state.eps);
      ++i;
    }
  });
}

}  // namespace csnet
