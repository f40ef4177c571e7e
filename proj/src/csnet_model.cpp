#include "csnet/csnet_model.hpp"

#include <algorithm>
#include <numeric>

#include "csnet/error.hpp"

namespace csnet {

namespace {

void require(bool ok, Errc code, const std::string& what) {
  if (!ok) throw Error(code, what);
}

// All time steps' region tokens stacked: row t * R + r holds x(t, :, r).
Matrix stacked_tokens(const DataCuboid& x) {
  const std::size_t R = x.r_len();
  Matrix tokens(x.t_len() * R, x.e_len());
  for (std::size_t t = 0; t < x.t_len(); ++t)
    for (std::size_t e = 0; e < x.e_len(); ++e)
      for (std::size_t r = 0; r < R; ++r) tokens(t * R + r, e) = x(t, e, r);
  return tokens;
}

Matrix affine(const Matrix& x, const Matrix& w, std::span<const double> b) {
  Matrix out = matmul(x, w);
  for (std::size_t i = 0; i < out.rows(); ++i) {
    auto row = out.row(i);
    for (std::size_t j = 0; j < out.cols(); ++j) row[j] += b[j];
  }
  return out;
}

// Accumulates dW += x^T g, db += colsum(g); returns g W^T.
Matrix affine_backward(const Matrix& x, const Matrix& w, const Matrix& g, Matrix& dw,
                       std::span<double> db) {
  const Matrix xg = matmul_tn(x, g);
  for (std::size_t i = 0; i < xg.size(); ++i) dw.values()[i] += xg.values()[i];
  for (std::size_t i = 0; i < g.rows(); ++i) {
    auto row = g.row(i);
    for (std::size_t j = 0; j < g.cols(); ++j) db[j] += row[j];
  }
  return matmul_nt(g, w);
}

}  // namespace

std::string variant_name(Variant v) {
  switch (v) {
    case Variant::ConvOnly: return "conv_only";
    case Variant::ConvPlusVar: return "conv_plus_var";
    case Variant::Full: return "full";
  }
  return "unknown";
}

Variant parse_variant(const std::string& name) {
  if (name == "conv_only" || name == "csnet1") return Variant::ConvOnly;
  if (name == "conv_plus_var" || name == "csnet2") return Variant::ConvPlusVar;
  if (name == "full" || name == "csnet3") return Variant::Full;
  throw Error(Errc::InvalidConfig, "unknown model variant '" + name + "'");
}

void CsNetConfig::validate() const {
  auto fail = [](const std::string& what) { throw Error(Errc::InvalidConfig, what); };
  if (horizon < 1) fail("horizon must be >= 1");
  if (window <= std::max(k_t, horizon)) fail("window must exceed both k_t and horizon");
  if (n_kernels < 1) fail("n_kernels must be >= 1");
  if (k_t % 2 == 0 || k_s % 2 == 0) fail("kernel extents k_t and k_s must be odd");
  if (uses_attention()) {
    if (d_model < 1 || n_heads < 1 || d_model % n_heads != 0)
      fail("d_model must be a positive multiple of n_heads");
    if (d_ff < 1) fail("d_ff must be >= 1");
    if (encoder_layers < 1) fail("encoder_layers must be >= 1");
  }
  for (std::size_t w : mlp_hidden)
    if (w < 1) fail("mlp hidden widths must be >= 1");
  if (!(dropout >= 0.0 && dropout < 1.0)) fail("dropout must lie in [0, 1)");
  if (!(learning_rate > 0.0)) fail("learning_rate must be > 0");
  if (!(l2 >= 0.0)) fail("l2 must be >= 0");
  if (batch_size < 1) fail("batch_size must be >= 1");
}

std::size_t feature_width(const CsNetConfig& config, std::size_t e_len) {
  const std::size_t per_pool = config.n_kernels * e_len;
  return config.pooling == Pooling::MeanLast ? 2 * per_pool : per_pool;
}

CsNetParams CsNetParams::init(const CsNetConfig& config, std::size_t e_len, nn::Rng& rng) {
  config.validate();
  CsNetParams p;
  p.kernels = nn::KernelBank::random(config.n_kernels, config.k_t, config.k_s, rng);
  if (config.uses_attention()) {
    p.embed_w = Matrix(e_len, config.d_model);
    nn::init_uniform(p.embed_w.values(), e_len, config.d_model, rng);
    p.embed_b.assign(config.d_model, 0.0);
    for (std::size_t l = 0; l < config.encoder_layers; ++l) {
      p.encoder.push_back(
          nn::EncoderLayerParams::random(config.d_model, config.n_heads, config.d_ff, rng));
    }
    p.unembed_w = Matrix(config.d_model, e_len);
    nn::init_uniform(p.unembed_w.values(), config.d_model, e_len, rng);
    p.unembed_b.assign(e_len, 0.0);
  }
  std::vector<std::size_t> widths{feature_width(config, e_len)};
  widths.insert(widths.end(), config.mlp_hidden.begin(), config.mlp_hidden.end());
  widths.push_back(config.horizon * e_len);
  p.head = nn::MlpParams::random(widths, rng);
  return p;
}

ForecastBlock forward(const DataCuboid& window, const CsNetParams& params,
                      const CsNetConfig& config, nn::Mode mode, nn::Rng* rng, ModelTape* tape) {
  const std::size_t W = window.t_len();
  const std::size_t E = window.e_len();
  const std::size_t R = window.r_len();
  const std::size_t H = config.horizon;
  const std::size_t N = config.n_kernels;
  require(W == config.window, Errc::ShapeMismatch,
          "window has " + std::to_string(W) + " steps, config expects " +
              std::to_string(config.window));
  require(params.head.input_width() == feature_width(config, E) &&
              params.head.output_width() == H * E,
          Errc::ShapeMismatch, "parameters do not match the window's event extent");
  const bool drop = mode == nn::Mode::Train && config.dropout > 0.0;
  require(!drop || rng != nullptr, Errc::InvalidRate, "train-mode dropout needs a generator");

  if (tape) {
    *tape = ModelTape{};
    tape->input = window;
  }

  // Cross-region attention, one independent token set per time step.
  DataCuboid enriched = window;
  if (config.uses_attention()) {
    require(params.embed_w.rows() == E && params.unembed_w.cols() == E &&
                params.encoder.size() == config.encoder_layers,
            Errc::ShapeMismatch, "attention parameters do not match the window");
    // Attention stays within each time step's R tokens.
    Matrix z = affine(stacked_tokens(window), params.embed_w, params.embed_b);
    if (tape) tape->encoder.resize(params.encoder.size());
    for (std::size_t l = 0; l < params.encoder.size(); ++l) {
      z = nn::encoder_layer_forward(z, params.encoder[l], tape ? &tape->encoder[l] : nullptr, R);
    }
    const Matrix y = affine(z, params.unembed_w, params.unembed_b);
    for (std::size_t t = 0; t < W; ++t)
      for (std::size_t e = 0; e < E; ++e)
        for (std::size_t r = 0; r < R; ++r) enriched(t, e, r) += y(t * R + r, e);
    if (tape) tape->encoded = std::move(z);
  }

  // Per-region convolution transform and pooling.
  const std::size_t F = feature_width(config, E);
  Matrix features(R, F);
  const double inv_w = 1.0 / static_cast<double>(W);
  if (tape) tape->conv.resize(R);
  for (std::size_t r = 0; r < R; ++r) {
    const Panel panel = slice_spatial(enriched, r);
    const nn::FeatureMaps maps =
        nn::conv2d_forward(panel, params.kernels, tape ? &tape->conv[r] : nullptr);
    auto row = features.row(r);
    for (std::size_t n = 0; n < N; ++n) {
      for (std::size_t e = 0; e < E; ++e) {
        double acc = 0.0;
        for (std::size_t t = 0; t < W; ++t) acc += maps[n](t, e);
        row[n * E + e] = acc * inv_w;
        if (config.pooling == Pooling::MeanLast) row[N * E + n * E + e] = maps[n](W - 1, e);
      }
    }
  }
  if (drop) {
    std::vector<double> mask;
    features.values() = nn::dropout_apply(features.values(), config.dropout, mode, *rng, &mask);
    if (tape) tape->feature_mask = std::move(mask);
  }

  const Matrix out = nn::mlp_forward(features, params.head, tape ? &tape->head : nullptr,
                                     config.dropout, mode, rng);
  ForecastBlock block(H, E, R);
  for (std::size_t r = 0; r < R; ++r)
    for (std::size_t h = 0; h < H; ++h)
      for (std::size_t e = 0; e < E; ++e) block(h, e, r) = out(r, h * E + e);
  if (tape) tape->recorded = true;
  return block;
}

ModelGrads backward(const ModelTape& tape, const CsNetParams& params, const CsNetConfig& config,
                    const ForecastBlock& upstream) {
  require(tape.recorded, Errc::TapeMismatch, "backward without a recorded forward");
  const std::size_t W = tape.input.t_len();
  const std::size_t E = tape.input.e_len();
  const std::size_t R = tape.input.r_len();
  const std::size_t H = config.horizon;
  const std::size_t N = config.n_kernels;
  require(upstream.t_len() == H && upstream.e_len() == E && upstream.r_len() == R,
          Errc::TapeMismatch, "upstream block shape differs from forward");

  ModelGrads grads{DataCuboid(W, E, R), nn::zeros_like(params)};

  Matrix dout(R, H * E);
  for (std::size_t r = 0; r < R; ++r)
    for (std::size_t h = 0; h < H; ++h)
      for (std::size_t e = 0; e < E; ++e) dout(r, h * E + e) = upstream(h, e, r);
  nn::MlpGrads head = nn::mlp_backward(tape.head, params.head, dout);
  grads.params.head = std::move(head.params);
  Matrix& dfeat = head.input;
  if (!tape.feature_mask.empty()) {
    for (std::size_t i = 0; i < dfeat.size(); ++i) dfeat.values()[i] *= tape.feature_mask[i];
  }

  DataCuboid denriched(W, E, R);
  const double inv_w = 1.0 / static_cast<double>(W);
  for (std::size_t r = 0; r < R; ++r) {
    nn::FeatureMaps dmaps(N, Matrix(W, E));
    auto row = dfeat.row(r);
    for (std::size_t n = 0; n < N; ++n) {
      for (std::size_t e = 0; e < E; ++e) {
        const double g = row[n * E + e] * inv_w;
        for (std::size_t t = 0; t < W; ++t) dmaps[n](t, e) = g;
        if (config.pooling == Pooling::MeanLast) dmaps[n](W - 1, e) += row[N * E + n * E + e];
      }
    }
    nn::ConvGrads conv = nn::conv2d_backward(tape.conv[r], dmaps);
    nn::accumulate(grads.params.kernels, conv.bank);
    for (std::size_t t = 0; t < W; ++t)
      for (std::size_t e = 0; e < E; ++e) denriched(t, e, r) = conv.input(t, e);
  }

  grads.input = denriched;  // identity path of the enrichment
  if (config.uses_attention()) {
    auto& gp = grads.params;
    Matrix dy(W * R, E);
    for (std::size_t t = 0; t < W; ++t)
      for (std::size_t e = 0; e < E; ++e)
        for (std::size_t r = 0; r < R; ++r) dy(t * R + r, e) = denriched(t, e, r);
    Matrix dz = affine_backward(tape.encoded, params.unembed_w, dy, gp.unembed_w, gp.unembed_b);
    for (std::size_t l = params.encoder.size(); l-- > 0;) {
      nn::EncoderLayerGrads layer = nn::encoder_layer_backward(tape.encoder[l], params.encoder[l], dz);
      nn::accumulate(gp.encoder[l], layer.params);
      dz = std::move(layer.tokens);
    }
    const Matrix dtok =
        affine_backward(stacked_tokens(tape.input), params.embed_w, dz, gp.embed_w, gp.embed_b);
    for (std::size_t t = 0; t < W; ++t)
      for (std::size_t e = 0; e < E; ++e)
        for (std::size_t r = 0; r < R; ++r) grads.input(t, e, r) += dtok(t * R + r, e);
  }
  return grads;
}

double l2_penalty(const CsNetParams& params) {
  double acc = 0.0;
  nn::for_each_tensor(params, [&](std::string_view, std::span<const double> values, bool decays) {
    if (!decays) return;
    for (double v : values) acc += v * v;
  });
  return acc;
}

void add_l2_gradient(CsNetParams& grads, const CsNetParams& params, double l2) {
  if (l2 == 0.0) return;
  std::vector<std::span<const double>> src;
  nn::for_each_tensor(params, [&](std::string_view, std::span<const double> values, bool) {
    src.push_back(values);
  });
  std::size_t i = 0;
  nn::for_each_tensor(grads, [&](std::string_view, std::span<double> values, bool decays) {
    const auto p = src[i++];
    if (!decays) return;
    for (std::size_t k = 0; k < values.size(); ++k) values[k] += 2.0 * l2 * p[k];
  });
}

double loss(const ForecastBlock& forecast, const ForecastBlock& truth, const CsNetParams& params,
            double l2) {
  require(forecast.same_shape(truth), Errc::ShapeMismatch, "forecast and truth shapes differ");
  double acc = 0.0;
  for (std::size_t i = 0; i < forecast.size(); ++i) {
    const double d = forecast.values()[i] - truth.values()[i];
    acc += d * d;
  }
  const double mse = acc / static_cast<double>(forecast.size());
  return l2 == 0.0 ? mse : mse + l2 * l2_penalty(params);
}

ForecastBlock loss_gradient(const ForecastBlock& forecast, const ForecastBlock& truth) {
  require(forecast.same_shape(truth), Errc::ShapeMismatch, "forecast and truth shapes differ");
  ForecastBlock g(forecast.t_len(), forecast.e_len(), forecast.r_len());
  const double scale = 2.0 / static_cast<double>(forecast.size());
  for (std::size_t i = 0; i < g.size(); ++i)
    g.values()[i] = scale * (forecast.values()[i] - truth.values()[i]);
  return g;
}

// ---------------------------------------------------------------------------

Normalization Normalization::fit(const DataCuboid& data) {
  Normalization n;
  n.e_len = data.e_len();
  n.r_len = data.r_len();
  const std::size_t S = n.e_len * n.r_len;
  n.mean.assign(S, 0.0);
  n.scale.assign(S, 0.0);
  const double T = static_cast<double>(data.t_len());
  for (std::size_t t = 0; t < data.t_len(); ++t)
    for (std::size_t s = 0; s < S; ++s) n.mean[s] += data.values()[t * S + s];
  for (auto& m : n.mean) m /= T;
  for (std::size_t t = 0; t < data.t_len(); ++t) {
    for (std::size_t s = 0; s < S; ++s) {
      const double d = data.values()[t * S + s] - n.mean[s];
      n.scale[s] += d * d;
    }
  }
  for (std::size_t s = 0; s < S; ++s) {
    const double sd = std::sqrt(n.scale[s] / T);
    // Series whose spread is at rounding level are treated as constant.
    n.scale[s] = sd > 1e-12 * std::max(1.0, std::abs(n.mean[s])) ? sd : 0.0;
  }
  return n;
}

DataCuboid Normalization::normalize(const DataCuboid& data) const {
  require(data.e_len() == e_len && data.r_len() == r_len, Errc::ShapeMismatch,
          "normalization statistics do not match the data");
  DataCuboid out = data;
  const std::size_t S = e_len * r_len;
  for (std::size_t i = 0; i < out.size(); ++i) {
    const std::size_t s = i % S;
    out.values()[i] = scale[s] > 0.0 ? (data.values()[i] - mean[s]) / scale[s] : 0.0;
  }
  return out;
}

DataCuboid Normalization::denormalize(const DataCuboid& data) const {
  require(data.e_len() == e_len && data.r_len() == r_len, Errc::ShapeMismatch,
          "normalization statistics do not match the data");
  DataCuboid out = data;
  const std::size_t S = e_len * r_len;
  for (std::size_t i = 0; i < out.size(); ++i) {
    const std::size_t s = i % S;
    out.values()[i] = mean[s] + scale[s] * data.values()[i];
  }
  return out;
}

std::size_t count_training_samples(std::size_t t_len, std::size_t window, std::size_t horizon) {
  if (t_len < window + horizon) {
    throw Error(Errc::InsufficientHistory,
                std::to_string(t_len) + " steps cannot hold a window of " +
                    std::to_string(window) + " plus horizon " + std::to_string(horizon));
  }
  return t_len - window - horizon + 1;
}

namespace {

double dataset_loss(const std::vector<DataCuboid>& inputs, const std::vector<DataCuboid>& targets,
                    const CsNetParams& params, const CsNetConfig& config) {
  double acc = 0.0;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const ForecastBlock out = forward(inputs[i], params, config, nn::Mode::Eval);
    acc += loss(out, targets[i], params, 0.0);
  }
  return acc / static_cast<double>(inputs.size()) + config.l2 * l2_penalty(params);
}

}  // namespace

TrainedModel train(const DataCuboid& data, const CsNetConfig& config, bool count_data,
                   const CsNetParams* initial) {
  config.validate();
  const std::size_t n_samples = count_training_samples(data.t_len(), config.window, config.horizon);

  TrainedModel model;
  model.config = config;
  model.e_len = data.e_len();
  model.r_len = data.r_len();
  model.count_data = count_data;
  model.normalization = Normalization::fit(data);
  const DataCuboid z = model.normalization.normalize(data);

  std::vector<DataCuboid> inputs, targets;
  inputs.reserve(n_samples);
  targets.reserve(n_samples);
  for (std::size_t s = 0; s < n_samples; ++s) {
    inputs.push_back(time_window(z, s, config.window));
    targets.push_back(time_window(z, s + config.window, config.horizon));
  }

  nn::Rng rng(config.seed);
  model.params = CsNetParams::init(config, data.e_len(), rng);
  if (initial) {
    if (nn::parameter_count(*initial) != nn::parameter_count(model.params)) {
      throw Error(Errc::IncompatibleModel, "warm-start parameters do not match the configuration");
    }
    model.params = *initial;
  }
  AdamState adam;
  std::vector<std::size_t> order(n_samples);
  std::iota(order.begin(), order.end(), std::size_t{0});
  ModelTape tape;

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < n_samples; start += config.batch_size) {
      const std::size_t stop = std::min(n_samples, start + config.batch_size);
      const double inv_batch = 1.0 / static_cast<double>(stop - start);
      CsNetParams grads = nn::zeros_like(model.params);
      for (std::size_t b = start; b < stop; ++b) {
        const std::size_t s = order[b];
        const ForecastBlock out =
            forward(inputs[s], model.params, config, nn::Mode::Train, &rng, &tape);
        ForecastBlock g = loss_gradient(out, targets[s]);
        for (auto& v : g.values()) v *= inv_batch;
        ModelGrads mg = backward(tape, model.params, config, g);
        nn::accumulate(grads, mg.params);
      }
      add_l2_gradient(grads, model.params, config.l2);
      adam_step(model.params, grads, adam, config.learning_rate);
    }
    if (config.record_loss) {
      model.loss_history.push_back(dataset_loss(inputs, targets, model.params, config));
    }
  }
  return model;
}

ForecastBlock predict(const DataCuboid& data, const TrainedModel& model) {
  const auto& config = model.config;
  if (data.t_len() < config.window) {
    throw Error(Errc::InsufficientHistory, std::to_string(data.t_len()) +
                                               " steps cannot fill a window of " +
                                               std::to_string(config.window));
  }
  require(data.e_len() == model.e_len && data.r_len() == model.r_len, Errc::ShapeMismatch,
          "data extents differ from the trained model");
  const DataCuboid tail = time_window(data, data.t_len() - config.window, config.window);
  const ForecastBlock out =
      forward(model.normalization.normalize(tail), model.params, config, nn::Mode::Eval);
  ForecastBlock result = model.normalization.denormalize(out);
  if (model.count_data) {
    for (auto& v : result.values()) v = std::max(v, 0.0);
  }
  return result;
}

nn::GradCheckResult check_model_gradients(const CsNetConfig& config, std::size_t e_len,
                                          std::size_t r_len, std::uint64_t seed, double step,
                                          double tolerance) {
  nn::Rng rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  CsNetParams params = CsNetParams::init(config, e_len, rng);
  // Nonzero biases and norm shifts so every path carries gradient.
  nn::for_each_tensor(params, [&](std::string_view, std::span<double> values, bool decays) {
    if (decays) return;
    for (auto& v : values) v += 0.2 * gauss(rng);
  });
  DataCuboid window(config.window, e_len, r_len);
  for (auto& v : window.values()) v = gauss(rng);
  DataCuboid truth(config.horizon, e_len, r_len);
  for (auto& v : truth.values()) v = gauss(rng);
  const std::uint64_t dropout_seed = rng();

  const std::size_t n_in = window.size();
  std::vector<double> point = window.values();
  const auto pflat = nn::flatten(params);
  point.insert(point.end(), pflat.begin(), pflat.end());

  const nn::Mode mode = config.dropout > 0.0 ? nn::Mode::Train : nn::Mode::Eval;
  auto objective = [&](std::span<const double> flat) {
    DataCuboid x(config.window, e_len, r_len,
                 std::vector<double>(flat.begin(), flat.begin() + static_cast<std::ptrdiff_t>(n_in)));
    CsNetParams p = params;
    nn::unflatten(p, flat.subspan(n_in));
    nn::Rng drop_rng(dropout_seed);
    return loss(forward(x, p, config, mode, &drop_rng), truth, p, config.l2);
  };

  nn::Rng drop_rng(dropout_seed);
  ModelTape tape;
  const ForecastBlock out = forward(window, params, config, mode, &drop_rng, &tape);
  ModelGrads grads = backward(tape, params, config, loss_gradient(out, truth));
  add_l2_gradient(grads.params, params, config.l2);
  std::vector<double> analytic = grads.input.values();
  const auto gflat = nn::flatten(grads.params);
  analytic.insert(analytic.end(), gflat.begin(), gflat.end());
  return nn::finite_difference_check(objective, point, analytic, step, tolerance);
}

}  // namespace csnet
