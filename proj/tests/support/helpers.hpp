#pragma once

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <memory>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "csnet/backtest.hpp"
#include "csnet/error.hpp"
#include "csnet/tensor_core.hpp"

namespace csnet::testing {

// Scratch directory for file-based tests, unique per test binary.
inline std::filesystem::path temp_dir(const std::string& name) {
  const char* env = std::getenv("CSNET_TEST_TMP");
  std::filesystem::path base = env ? env : std::filesystem::temp_directory_path() / "csnet_tests";
  auto dir = base / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline DataCuboid random_cuboid(std::size_t t, std::size_t e, std::size_t r, std::uint64_t seed,
                                double lo = -1.0, double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  DataCuboid c(t, e, r);
  for (auto& v : c.values()) v = u(rng);
  return c;
}

inline Matrix random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed,
                            double lo = -1.0, double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  Matrix m(rows, cols);
  for (auto& v : m.values()) v = u(rng);
  return m;
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
  return worst;
}

// Records every history it is handed; forecasts zeros. Shared state lets the
// test inspect what each fresh instance saw.
struct ProbeLog {
  struct Seen {
    std::size_t rows = 0;
    double last_marker = 0.0;  // value at (last row, 0, 0)
  };
  std::vector<Seen> seen;
};

class ProbeForecaster final : public Forecaster {
 public:
  explicit ProbeForecaster(std::shared_ptr<ProbeLog> log) : log_(std::move(log)) {}
  std::string name() const override { return "probe"; }
  void fit(const DataCuboid& history) override {
    shape_ = history;
    log_->seen.push_back({history.t_len(), history(history.t_len() - 1, 0, 0)});
  }
  ForecastBlock predict(std::size_t horizon) override {
    return ForecastBlock(horizon, shape_.e_len(), shape_.r_len(), 0.0);
  }

 private:
  std::shared_ptr<ProbeLog> log_;
  DataCuboid shape_;
};

// Test-only oracle: reads the future from the full dataset, located by the
// length of the (expanding) history it receives.
class PerfectOracle final : public Forecaster {
 public:
  PerfectOracle(const DataCuboid* full, std::size_t offset = 0) : full_(full), offset_(offset) {}
  std::string name() const override { return "oracle"; }
  void fit(const DataCuboid& history) override { end_ = offset_ + history.t_len(); }
  ForecastBlock predict(std::size_t horizon) override { return time_window(*full_, end_, horizon); }

 private:
  const DataCuboid* full_;
  std::size_t offset_;
  std::size_t end_ = 0;
};

template <class F>
Errc error_code_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  throw std::runtime_error("expected an error");
}

}  // namespace csnet::testing
