#include <doctest.h>

#include <fstream>

#include "csnet/config_json.hpp"
#include "csnet/csnet_model.hpp"
#include "csnet/data_io.hpp"
#include "support/helpers.hpp"

using namespace csnet;
using csnet::testing::error_code_of;
using csnet::testing::max_abs_diff;
using csnet::testing::random_cuboid;
using csnet::testing::temp_dir;

namespace {

CsNetConfig small_config(Variant v) {
  CsNetConfig c;
  c.variant = v;
  c.window = 8;
  c.horizon = 2;
  c.n_kernels = 2;
  c.d_model = 4;
  c.n_heads = 2;
  c.d_ff = 6;
  c.mlp_hidden = {5};
  c.dropout = 0.0;
  c.epochs = 3;
  c.batch_size = 4;
  c.record_loss = false;
  return c;
}

DataCuboid permute_regions(const DataCuboid& c, const std::vector<std::size_t>& perm) {
  DataCuboid out(c.t_len(), c.e_len(), c.r_len());
  for (std::size_t t = 0; t < c.t_len(); ++t)
    for (std::size_t e = 0; e < c.e_len(); ++e)
      for (std::size_t r = 0; r < c.r_len(); ++r) out(t, e, r) = c(t, e, perm[r]);
  return out;
}

// Noiseless linear trends, one slope per series.
DataCuboid trend_cuboid(std::size_t T, std::size_t E, std::size_t R) {
  DataCuboid c(T, E, R);
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t e = 0; e < E; ++e)
      for (std::size_t r = 0; r < R; ++r)
        c(t, e, r) = 5.0 + (0.2 + 0.1 * static_cast<double>(e + r)) * static_cast<double>(t);
  return c;
}

// Independent recomputation of the forward pass. Attention runs per time step
// through the encoder block; everything else is written out as plain loops.
ForecastBlock straight_line(const DataCuboid& x, const CsNetParams& p, const CsNetConfig& cfg) {
  const std::size_t W = x.t_len(), E = x.e_len(), R = x.r_len(), N = cfg.n_kernels;
  DataCuboid enriched = x;
  if (cfg.uses_attention()) {
    for (std::size_t t = 0; t < W; ++t) {
      Matrix tokens(R, cfg.d_model);
      for (std::size_t r = 0; r < R; ++r)
        for (std::size_t d = 0; d < cfg.d_model; ++d) {
          double acc = p.embed_b[d];
          for (std::size_t e = 0; e < E; ++e) acc += x(t, e, r) * p.embed_w(e, d);
          tokens(r, d) = acc;
        }
      for (const auto& layer : p.encoder) tokens = nn::encoder_layer_forward(tokens, layer);
      for (std::size_t r = 0; r < R; ++r)
        for (std::size_t e = 0; e < E; ++e) {
          double acc = p.unembed_b[e];
          for (std::size_t d = 0; d < cfg.d_model; ++d) acc += tokens(r, d) * p.unembed_w(d, e);
          enriched(t, e, r) += acc;
        }
    }
  }
  const std::size_t kt = cfg.k_t, ks = cfg.k_s;
  const long ot = static_cast<long>(kt / 2), os = static_cast<long>(ks / 2);
  ForecastBlock out(cfg.horizon, E, R);
  for (std::size_t r = 0; r < R; ++r) {
    std::vector<double> feat(feature_width(cfg, E), 0.0);
    for (std::size_t n = 0; n < N; ++n)
      for (std::size_t t = 0; t < W; ++t)
        for (std::size_t s = 0; s < E; ++s) {
          double v = p.kernels.bias[n];
          for (long i = 0; i < static_cast<long>(kt); ++i)
            for (long j = 0; j < static_cast<long>(ks); ++j) {
              const long xt = static_cast<long>(t) + ot - i, xs = static_cast<long>(s) + os - j;
              if (xt < 0 || xs < 0 || xt >= static_cast<long>(W) || xs >= static_cast<long>(E)) continue;
              v += enriched(static_cast<std::size_t>(xt), static_cast<std::size_t>(xs), r) *
                   p.kernels.w(n, static_cast<std::size_t>(i), static_cast<std::size_t>(j));
            }
          feat[n * E + s] += v / static_cast<double>(W);
          if (cfg.pooling == Pooling::MeanLast && t == W - 1) feat[N * E + n * E + s] = v;
        }
    std::vector<double> a = feat;
    for (std::size_t l = 0; l < p.head.weights.size(); ++l) {
      const Matrix& w = p.head.weights[l];
      std::vector<double> next(w.cols());
      for (std::size_t j = 0; j < w.cols(); ++j) {
        double acc = p.head.biases[l][j];
        for (std::size_t i = 0; i < w.rows(); ++i) acc += a[i] * w(i, j);
        next[j] = (l + 1 < p.head.weights.size()) ? std::max(acc, 0.0) : acc;
      }
      a = std::move(next);
    }
    for (std::size_t h = 0; h < cfg.horizon; ++h)
      for (std::size_t e = 0; e < E; ++e) out(h, e, r) = a[h * E + e];
  }
  return out;
}

}  // namespace

TEST_CASE("zero window with zero biases forecasts zero (conv only)") {
  auto cfg = small_config(Variant::ConvOnly);
  nn::Rng rng(1);
  auto p = CsNetParams::init(cfg, 3, rng);
  std::fill(p.kernels.bias.begin(), p.kernels.bias.end(), 0.0);
  for (auto& b : p.head.biases) std::fill(b.begin(), b.end(), 0.0);
  const auto out = forward(DataCuboid(8, 3, 4), p, cfg, nn::Mode::Eval);
  for (double v : out.values()) CHECK(v == 0.0);
}

TEST_CASE("region permutation permutes forecasts") {
  const std::vector<std::size_t> perm{3, 0, 4, 1, 2};
  for (Variant v : {Variant::ConvOnly, Variant::Full}) {
    auto cfg = small_config(v);
    nn::Rng rng(2);
    const auto p = CsNetParams::init(cfg, 3, rng);
    const auto x = random_cuboid(8, 3, 5, 3);
    const auto y = forward(x, p, cfg, nn::Mode::Eval);
    const auto yp = forward(permute_regions(x, perm), p, cfg, nn::Mode::Eval);
    INFO(variant_name(v));
    if (v == Variant::ConvOnly) {
      CHECK(yp == permute_regions(y, perm));
    } else {
      // Attention reorders its key sums, so the match is to rounding.
      CHECK(max_abs_diff(yp.values(), permute_regions(y, perm).values()) < 1e-12);
    }
  }
}

TEST_CASE("forward matches a straight-line recomputation on a 12x4x5 window") {
  for (Variant v : {Variant::ConvOnly, Variant::Full}) {
    for (Pooling pool : {Pooling::Mean, Pooling::MeanLast}) {
      auto cfg = small_config(v);
      cfg.window = 12;
      cfg.horizon = 3;
      cfg.pooling = pool;
      cfg.k_s = 1;
      nn::Rng rng(4);
      const auto p = CsNetParams::init(cfg, 4, rng);
      const auto x = random_cuboid(12, 4, 5, 5);
      const auto got = forward(x, p, cfg, nn::Mode::Eval);
      CHECK(max_abs_diff(got.values(), straight_line(x, p, cfg).values()) < 1e-10);
    }
  }
}

TEST_CASE("end-to-end gradients agree with finite differences") {
  for (Variant v : {Variant::ConvOnly, Variant::Full}) {
    for (Pooling pool : {Pooling::Mean, Pooling::MeanLast}) {
      auto cfg = small_config(v);
      cfg.pooling = pool;
      for (std::uint64_t seed = 0; seed < 3; ++seed) {
        const auto r = check_model_gradients(cfg, 3, 4, seed);
        INFO(variant_name(v), " seed ", seed, " error ", r.max_rel_error);
        CHECK(r.passed);
      }
    }
  }
}

TEST_CASE("loss examples") {
  nn::Rng rng(6);
  auto cfg = small_config(Variant::ConvOnly);
  const auto p = CsNetParams::init(cfg, 2, rng);
  const auto f = random_cuboid(2, 2, 3, 7);
  CHECK(loss(f, f, p, 0.0) == 0.0);
  auto shifted = f;
  for (auto& v : shifted.values()) v += 1.0;
  CHECK(loss(f, shifted, p, 0.0) == doctest::Approx(1.0).epsilon(1e-14));

  const auto t = random_cuboid(2, 2, 3, 8);
  double sq = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) sq += (f.values()[i] - t.values()[i]) * (f.values()[i] - t.values()[i]);
  double penalty = 0.0;
  for (double w : p.kernels.weights) penalty += w * w;
  for (const auto& w : p.head.weights)
    for (double x : w.values()) penalty += x * x;
  CHECK(std::abs(loss(f, t, p, 0.01) - (sq / f.size() + 0.01 * penalty)) < 1e-12);
  CHECK(error_code_of([&] { loss(f, DataCuboid(1, 2, 3), p, 0.0); }) == Errc::ShapeMismatch);
}

TEST_CASE("adam") {
  SUBCASE("zero gradient leaves parameters unchanged") {
    nn::LayerNormParams p(3), g(3);
    p.gamma = {0.5, -1.0, 2.0};
    std::fill(g.gamma.begin(), g.gamma.end(), 0.0);
    std::fill(g.beta.begin(), g.beta.end(), 0.0);
    const auto before = nn::flatten(p);
    AdamState s;
    adam_step(p, g, s, 1e-3);
    CHECK(nn::flatten(p) == before);
  }
  SUBCASE("unit gradient on a fresh state moves by about lr") {
    nn::LayerNormParams p(1), g(1);
    p.gamma = {0.0};
    g.gamma = {1.0};
    g.beta = {0.0};
    AdamState s;
    adam_step(p, g, s, 1e-3);
    CHECK(p.gamma[0] == doctest::Approx(-1e-3 / (1.0 + 1e-8)).epsilon(1e-12));
    CHECK(s.step == 1);
  }
  SUBCASE("mismatched shapes") {
    nn::LayerNormParams p(2), g(3);
    AdamState s;
    CHECK(error_code_of([&] { adam_step(p, g, s, 1e-3); }) == Errc::ShapeMismatch);
  }
}

TEST_CASE("training sample counts") {
  CHECK(count_training_samples(215, 170, 8) == 38);
  CHECK(count_training_samples(10, 8, 2) == 1);
  CHECK(error_code_of([] { count_training_samples(9, 8, 2); }) == Errc::InsufficientHistory);
  auto cfg = small_config(Variant::ConvOnly);
  CHECK(error_code_of([&] { train(random_cuboid(9, 2, 2, 1), cfg); }) == Errc::InsufficientHistory);
}

TEST_CASE("training is deterministic given the seed") {
  for (Variant v : {Variant::ConvOnly, Variant::Full}) {
    auto cfg = small_config(v);
    cfg.dropout = 0.2;
    cfg.seed = 9;
    const auto data = random_cuboid(20, 2, 3, 10);
    const auto a = train(data, cfg);
    const auto b = train(data, cfg);
    CHECK(nn::flatten(a.params) == nn::flatten(b.params));
    cfg.seed = 10;
    CHECK(nn::flatten(train(data, cfg).params) != nn::flatten(a.params));
  }
}

TEST_CASE("warm start requires matching parameter shapes") {
  auto cfg = small_config(Variant::ConvOnly);
  const auto data = random_cuboid(20, 2, 3, 11);
  const auto first = train(data, cfg);
  cfg.epochs = 0;
  const auto same = train(data, cfg, false, &first.params);
  CHECK(nn::flatten(same.params) == nn::flatten(first.params));
  const auto other = train(random_cuboid(20, 3, 3, 12), small_config(Variant::ConvOnly));
  CHECK(error_code_of([&] { train(data, cfg, false, &other.params); }) == Errc::IncompatibleModel);
}

TEST_CASE("noiseless trend: trained model beats persistence on held-out windows") {
  auto cfg = small_config(Variant::ConvOnly);
  cfg.epochs = 60;
  cfg.learning_rate = 5e-3;
  cfg.seed = 1;
  const auto full = trend_cuboid(60, 2, 3);
  const auto model = train(time_window(full, 0, 50), cfg);
  double net = 0.0, naive = 0.0;
  for (std::size_t k = 50; k + cfg.horizon <= 60; ++k) {
    const auto hist = time_window(full, 0, k);
    const auto pred = predict(hist, model);
    for (std::size_t h = 0; h < cfg.horizon; ++h)
      for (std::size_t e = 0; e < 2; ++e)
        for (std::size_t r = 0; r < 3; ++r) {
          const double truth = full(k + h, e, r);
          net += (pred(h, e, r) - truth) * (pred(h, e, r) - truth);
          naive += (hist(k - 1, e, r) - truth) * (hist(k - 1, e, r) - truth);
        }
  }
  CHECK(net < naive);
}

TEST_CASE("constant series forecast their constant") {
  auto cfg = small_config(Variant::Full);
  DataCuboid data(16, 2, 3, 4.25);
  const auto model = train(data, cfg);
  for (double s : model.normalization.scale) CHECK(s == 0.0);
  const auto forecast = predict(data, model);
  for (double v : forecast.values()) CHECK(v == 4.25);
}

TEST_CASE("predict") {
  auto cfg = small_config(Variant::Full);
  cfg.dropout = 0.3;
  const auto data = random_cuboid(20, 2, 3, 13);
  const auto model = train(data, cfg);
  CHECK(predict(data, model) == predict(data, model));
  CHECK(error_code_of([&] { predict(time_window(data, 0, 7), model); }) == Errc::InsufficientHistory);
  SUBCASE("count data is clamped at zero") {
    auto counts = random_cuboid(20, 2, 3, 14, 0.0, 0.05);
    const auto m = train(counts, cfg, true);
    const auto forecast = predict(counts, m);
    for (double v : forecast.values()) CHECK(v >= 0.0);
  }
}

TEST_CASE("normalization round trip") {
  const auto x = random_cuboid(30, 3, 4, 15, -50.0, 80.0);
  const auto n = Normalization::fit(x);
  CHECK(max_abs_diff(n.denormalize(n.normalize(x)).values(), x.values()) < 1e-12);
  const auto z = n.normalize(x);
  double mean = 0.0;
  for (std::size_t t = 0; t < 30; ++t) mean += z(t, 1, 2) / 30.0;
  CHECK(std::abs(mean) < 1e-12);
}

TEST_CASE("training loss is non-increasing on noiseless linear data") {
  // Dropout off so the recorded eval-mode loss tracks the optimizer alone.
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    auto cfg = small_config(Variant::Full);
    cfg.seed = seed;
    cfg.epochs = 10;
    cfg.learning_rate = 1e-3;
    cfg.record_loss = true;
    const auto model = train(trend_cuboid(40, 2, 3), cfg);
    REQUIRE(model.loss_history.size() == 10);
    for (std::size_t i = 2; i < model.loss_history.size(); ++i) {
      INFO("seed ", seed, " epoch ", i);
      CHECK(model.loss_history[i] <= model.loss_history[i - 1]);
    }
  }
}

TEST_CASE("model files") {
  const auto dir = temp_dir("model_files");
  auto cfg = small_config(Variant::Full);
  const auto data = random_cuboid(20, 2, 3, 16);
  auto model = train(data, cfg);
  model.ensemble_weight = 0.35;
  save_model(model, dir / "m.csnet");
  SUBCASE("round trip is exact") {
    const auto back = load_model(dir / "m.csnet");
    CHECK(nn::flatten(back.params) == nn::flatten(model.params));
    CHECK(back.normalization.mean == model.normalization.mean);
    CHECK(back.normalization.scale == model.normalization.scale);
    CHECK(back.ensemble_weight == model.ensemble_weight);
    CHECK(config_hash(back.config) == config_hash(model.config));
    CHECK(predict(data, back) == predict(data, model));
  }
  SUBCASE("wrong magic") {
    std::ofstream(dir / "bad.csnet") << "NOTAMODEL";
    CHECK(error_code_of([&] { load_model(dir / "bad.csnet"); }) == Errc::IncompatibleModel);
  }
  SUBCASE("truncated file") {
    const auto bytes = read_text_file(dir / "m.csnet");
    std::ofstream(dir / "short.csnet", std::ios::binary) << bytes.substr(0, bytes.size() / 2);
    CHECK(error_code_of([&] { load_model(dir / "short.csnet"); }) == Errc::IncompatibleModel);
  }
  SUBCASE("missing file") {
    CHECK(error_code_of([&] { load_model(dir / "none.csnet"); }) == Errc::IoFailure);
  }
}

TEST_CASE("config json") {
  CsNetConfig c;
  merge_json(c, {{"window", 24}, {"variant", "csnet1"}, {"mlp_hidden", {16, 8}}});
  CHECK(c.window == 24);
  CHECK(c.variant == Variant::ConvOnly);
  CHECK(c.mlp_hidden == std::vector<std::size_t>{16, 8});
  CHECK(c.horizon == 8);
  CsNetConfig round;
  merge_json(round, to_json(c));
  CHECK(config_hash(round) == config_hash(c));
  CHECK(error_code_of([&] { merge_json(c, {{"windw", 3}}); }) == Errc::InvalidConfig);
  CHECK(error_code_of([&] { merge_json(c, {{"window", "big"}}); }) == Errc::InvalidConfig);
  CHECK(error_code_of([&] { merge_json(c, {{"variant", "csnet9"}}); }) == Errc::InvalidConfig);
  CHECK(error_code_of([&] { merge_json(c, {{"variant", "csnet3"}, {"n_heads", 3}, {"d_model", 4}}); c.validate(); }) ==
        Errc::InvalidConfig);
}
