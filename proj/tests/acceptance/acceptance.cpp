// Runs the eight acceptance checks and prints one PASS/FAIL line per check.
// Exit status is nonzero when any check fails.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "csnet/backtest.hpp"
#include "csnet/commands.hpp"
#include "csnet/csnet_model.hpp"
#include "csnet/ensemble_metrics.hpp"
#include "csnet/forecasters.hpp"
#include "csnet/nn_blocks.hpp"
#include "csnet/run_config.hpp"
#include "csnet/var_forecaster.hpp"
#include "support/helpers.hpp"

namespace fs = std::filesystem;
using namespace csnet;
using csnet::testing::max_abs_diff;
using csnet::testing::random_cuboid;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

int failures = 0;

void report(int id, const std::string& name, const std::function<Outcome()>& body) {
  const auto t0 = Clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  if (!o.pass) ++failures;
  std::printf("[%s] %d %s (%.1fs): %s\n", o.pass ? "PASS" : "FAIL", id, name.c_str(),
              seconds_since(t0), o.detail.c_str());
  std::fflush(stdout);
}

std::string fmt(double v) {
  std::ostringstream s;
  s.precision(4);
  s << v;
  return s.str();
}

Outcome gradient_fidelity() {
  const auto t0 = Clock::now();
  double worst = 0.0;
  std::size_t checks = 0;
  bool ok = true;
  for (auto block : {nn::Block::Conv2d, nn::Block::Attention, nn::Block::EncoderLayer, nn::Block::Mlp}) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const auto r = nn::check_block_gradients(block, seed);
      worst = std::max(worst, r.max_rel_error);
      ok = ok && r.passed;
      ++checks;
    }
  }
  for (Variant v : {Variant::ConvOnly, Variant::Full}) {
    CsNetConfig cfg;
    cfg.variant = v;
    cfg.window = 8;
    cfg.horizon = 2;
    cfg.n_kernels = 2;
    cfg.d_model = 4;
    cfg.n_heads = 2;
    cfg.d_ff = 6;
    cfg.mlp_hidden = {5};
    cfg.dropout = 0.0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const auto r = check_model_gradients(cfg, 3, 4, seed);
      worst = std::max(worst, r.max_rel_error);
      ok = ok && r.passed;
      ++checks;
    }
  }
  const double secs = seconds_since(t0);
  ok = ok && worst < 1e-4 && secs < 60.0;
  return {ok, std::to_string(checks) + " checks, worst relative error " + fmt(worst)};
}

Outcome metric_oracles() {
  const std::vector<double> in{1, 2, 3, 4, 5}, truth{6, 7}, pred{6, 8};
  const double m = mase({in, truth, pred});
  const double e = mse(std::vector<double>{1, 2}, std::vector<double>{1, 4});
  bool ok = std::abs(m - 0.5) < 1e-12 && std::abs(e - 2.0) < 1e-12;
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-10.0, 10.0), scale(0.01, 100.0);
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    std::vector<double> a(8), t(4), p(4);
    for (auto* v : {&a, &t, &p})
      for (auto& x : *v) x = u(rng);
    const double c = (i % 2 ? -1.0 : 1.0) * scale(rng);
    const double base = mase({a, t, p});
    for (auto* v : {&a, &t, &p})
      for (auto& x : *v) x *= c;
    worst = std::max(worst, std::abs(mase({a, t, p}) - base) / std::max(1.0, base));
  }
  ok = ok && worst < 1e-12;
  return {ok, "mase " + fmt(m) + ", mse " + fmt(e) + ", worst scale drift " + fmt(worst)};
}

// Records every history it is given; forecasts persistence.
class LeakProbe final : public Forecaster {
 public:
  explicit LeakProbe(std::vector<double>* markers) : markers_(markers) {}
  std::string name() const override { return "probe"; }
  void fit(const DataCuboid& h) override {
    markers_->push_back(h(h.t_len() - 1, 0, 0));
    inner_.fit(h);
  }
  ForecastBlock predict(std::size_t H) override { return inner_.predict(H); }

 private:
  std::vector<double>* markers_;
  PersistenceForecaster inner_;
};

Outcome protocol_fidelity() {
  BacktestProtocol p;
  p.initial_train = 100;
  p.horizon = 4;
  const std::size_t n = count_windows(215, p);

  // Row t carries marker t, so the largest row a forecaster saw is readable.
  DataCuboid data = random_cuboid(215, 3, 4, 5);
  for (std::size_t t = 0; t < 215; ++t) data(t, 0, 0) = static_cast<double>(t);
  std::vector<double> markers;
  const auto probe = run_backtest(data, "probe", [&] { return std::make_unique<LeakProbe>(&markers); }, p);
  bool leak_free = markers.size() == probe.windows.size();
  for (std::size_t i = 0; leak_free && i < markers.size(); ++i)
    leak_free = markers[i] == static_cast<double>(probe.windows[i].train_end - 1);

  const ForecasterFactory oracle = [&] {
    return std::make_unique<csnet::testing::PerfectOracle>(&data);
  };
  const auto perfect = run_backtest(data, "oracle", oracle, p);
  bool zero = true;
  for (const auto& w : perfect.windows) zero = zero && w.mase == 0.0 && w.mse == 0.0;

  const bool ok = n == 112 && leak_free && zero && perfect.windows.size() == 112;
  return {ok, "windows " + std::to_string(n) + ", no-leakage " + (leak_free ? "ok" : "violated") +
                  ", oracle 0/0 " + (zero ? "ok" : "violated")};
}

Outcome var_recovery() {
  // Pre-declared instance: stable 2x2 A, sigma 0.01, 10,000 steps, seed 42.
  const Matrix A(2, 2, std::vector<double>{0.5, 0.1, 0.0, 0.3});
  const std::size_t T = 10000;
  std::mt19937_64 rng(42);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Matrix y(T, 2);
  for (std::size_t t = 1; t < T; ++t)
    for (std::size_t j = 0; j < 2; ++j) {
      double acc = 0.01 * gauss(rng);
      for (std::size_t m = 0; m < 2; ++m) acc += A(j, m) * y(t - 1, m);
      y(t, j) = acc;
    }
  const auto t0 = Clock::now();
  const auto model = fit_var(y, 1, 0.0);
  const double secs = seconds_since(t0);
  const double err = max_abs_diff(model.coefficients[0].values(), A.values());
  return {err < 1e-2 && secs < 10.0,
          "max entry error " + fmt(err) + " (limit 0.01), fit " + fmt(secs) + "s"};
}

Outcome ensemble_soundness() {
  std::size_t runs = 0;
  bool ok = true;
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<ValidationWindow> ws;
    for (int k = 0; k < 2; ++k) {
      ValidationWindow v;
      v.in_sample = random_cuboid(12, 3, 4, rng());
      v.truth = random_cuboid(4, 3, 4, rng());
      v.a = random_cuboid(4, 3, 4, rng());
      v.b = random_cuboid(4, 3, 4, rng());
      ws.push_back(std::move(v));
    }
    const auto s = select_weight(ws);
    ok = ok && s.blended_mase <= std::min(s.mase_a, s.mase_b);
    ++runs;
  }
  // Selections made inside trained ensemble forecasters.
  CsNetConfig cfg;
  cfg.window = 8;
  cfg.horizon = 2;
  cfg.n_kernels = 2;
  cfg.d_model = 4;
  cfg.n_heads = 1;
  cfg.d_ff = 4;
  cfg.mlp_hidden = {4};
  cfg.epochs = 3;
  cfg.record_loss = false;
  for (Variant v : {Variant::ConvPlusVar, Variant::Full}) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      cfg.variant = v;
      cfg.seed = seed;
      CsNetForecaster f(cfg, {}, BlockingKind::PerRegion, {});
      f.fit(random_cuboid(60, 2, 3, 100 + seed));
      const auto& s = f.selection().value();
      ok = ok && s.blended_mase <= std::min(s.mase_a, s.mase_b);
      ++runs;
    }
  }
  return {ok, std::to_string(runs) + " selections, blended <= both components in all"};
}

Outcome ablation_ordering() {
  const char* dir = std::getenv("CSNET_CONFIG_DIR");
  const fs::path path = fs::path(dir ? dir : "configs") / "ablation.json";
  const std::vector<std::string> names{"persistence", "var", "csnet1", "csnet2", "csnet3"};
  std::map<std::string, std::vector<double>> scores;
  const auto t0 = Clock::now();
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    for (const auto& name : names) {
      RunOverrides o;
      o.seed = seed;
      o.variant = name;
      const RunConfig config = load_run_config(path, o);
      const LoadedData data = load_data(config);
      const auto r = run_backtest(data.cuboid, dataset_fingerprint(data.table),
                                  make_factory(config, data.schema.count_data()), config.protocol);
      if (r.windows.size() != 20) throw Error(Errc::InvalidConfig, "ablation needs 20 windows");
      scores[name].push_back(r.aggregate.mase.value());
    }
  }
  const double secs = seconds_since(t0);
  std::map<std::string, double> median;
  for (auto& [name, v] : scores) {
    std::sort(v.begin(), v.end());
    median[name] = v[v.size() / 2];
  }
  const bool ordered = median["csnet3"] <= median["csnet2"] && median["csnet2"] <= median["csnet1"];
  const bool beats = median["csnet3"] < median["persistence"];
  std::string detail = "median MASE";
  for (const auto& n : names) detail += " " + n + "=" + fmt(median[n]);
  detail += ", " + fmt(secs) + "s";
  return {ordered && beats && secs < 600.0, detail};
}

Outcome determinism() {
  const fs::path dir = csnet::testing::temp_dir("acceptance_determinism");
  nlohmann::json j = {
      {"data", {{"synthetic", {{"t_len", 60}, {"e_len", 3}, {"r_len", 4}, {"noise_std", 1.0}}}}},
      {"model",
       {{"window", 8}, {"horizon", 2}, {"epochs", 3}, {"n_kernels", 2}, {"d_model", 4},
        {"n_heads", 2}, {"d_ff", 4}, {"mlp_hidden", {6}}, {"dropout", 0.1}}},
      {"protocol", {{"initial_train", 40}, {"step", 4}}},
      {"seed", 9}};
  bool ok = true;
  for (const char* variant : {"csnet3", "var"}) {
    std::string first;
    for (int rep = 0; rep < 2; ++rep) {
      RunOverrides o;
      o.variant = variant;
      o.out = dir / ("rep" + std::to_string(rep));
      const auto p = cmd_backtest(parse_run_config(j, dir, o));
      std::ifstream in(p, std::ios::binary);
      std::ostringstream text;
      text << in.rdbuf();
      if (rep == 0) first = text.str();
      else ok = ok && !first.empty() && first == text.str();
    }
  }
  return {ok, ok ? "repeated reports are byte-identical" : "reports differ"};
}

Outcome invariance_suite() {
  const auto t0 = Clock::now();
  // Attention permutation equivariance.
  double attn = 0.0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    nn::Rng rng(seed);
    const auto p = nn::AttentionParams::random(4, 2, rng);
    const Matrix x = csnet::testing::random_matrix(6, 4, 100 + seed);
    std::vector<std::size_t> perm(6);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    Matrix xp(6, 4);
    for (std::size_t i = 0; i < 6; ++i)
      for (std::size_t d = 0; d < 4; ++d) xp(i, d) = x(perm[i], d);
    const Matrix y = nn::attention_forward(x, p), yp = nn::attention_forward(xp, p);
    for (std::size_t i = 0; i < 6; ++i)
      for (std::size_t d = 0; d < 4; ++d) attn = std::max(attn, std::abs(yp(i, d) - y(perm[i], d)));
  }
  // Delta kernel reproduces the panel exactly.
  bool delta = true;
  for (std::size_t kt : {1, 3})
    for (std::size_t ks : {1, 3}) {
      nn::KernelBank bank(1, kt, ks);
      bank.w(0, kt / 2, ks / 2) = 1.0;
      const Matrix panel = csnet::testing::random_matrix(7, 5, 3);
      delta = delta && nn::conv2d_forward(panel, bank)[0] == panel;
    }
  // Dropout keeps the expectation.
  nn::Rng rng(23);
  const std::size_t n = 100000;
  const std::vector<double> ones(4, 1.0);
  std::vector<double> sum(4, 0.0);
  for (std::size_t s = 0; s < n; ++s) {
    const auto y = nn::dropout_apply(ones, 0.5, nn::Mode::Train, rng);
    for (std::size_t i = 0; i < 4; ++i) sum[i] += y[i];
  }
  double drop = 0.0;
  for (double s : sum) drop = std::max(drop, std::abs(s / static_cast<double>(n) - 1.0));
  const double drop_limit = 3.0 / std::sqrt(static_cast<double>(n));
  // Normalization round trip.
  const auto x = random_cuboid(30, 3, 4, 15, -50.0, 80.0);
  const auto norm = Normalization::fit(x);
  const double round = max_abs_diff(norm.denormalize(norm.normalize(x)).values(), x.values());

  const double secs = seconds_since(t0);
  const bool ok = attn < 1e-12 && delta && drop < drop_limit && round < 1e-12 && secs < 60.0;
  return {ok, "attention " + fmt(attn) + ", delta kernel " + (delta ? "exact" : "inexact") +
                  ", dropout mean drift " + fmt(drop) + " (3 sigma " + fmt(drop_limit) +
                  "), normalization " + fmt(round)};
}

}  // namespace

int main() {
  configure_logging();
  report(1, "gradient fidelity", gradient_fidelity);
  report(2, "metric oracles", metric_oracles);
  report(3, "protocol fidelity", protocol_fidelity);
  report(4, "VAR recovery", var_recovery);
  report(5, "ensemble soundness", ensemble_soundness);
  report(6, "ablation ordering", ablation_ordering);
  report(7, "determinism", determinism);
  report(8, "invariance suite", invariance_suite);
  std::printf("%d of 8 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
