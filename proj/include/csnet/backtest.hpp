#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "csnet/decomposition.hpp"
#include "csnet/report.hpp"
#include "csnet/tensor_core.hpp"

namespace csnet {

// Fit on a history block, then forecast the steps that follow it.
class Forecaster {
 public:
  virtual ~Forecaster() = default;
  virtual std::string name() const = 0;
  virtual void fit(const DataCuboid& history) = 0;
  virtual ForecastBlock predict(std::size_t horizon) = 0;
};

using ForecasterFactory = std::function<std::unique_ptr<Forecaster>()>;

// Indices k at which each window's training range ends (exclusive); the
// window is scored on rows [k, k + horizon). Throws InsufficientHistory.
std::vector<std::size_t> window_ends(std::size_t t_len, const BacktestProtocol& protocol);
std::size_t count_windows(std::size_t t_len, const BacktestProtocol& protocol);

struct BacktestOptions {
  unsigned threads = 1;
  // Reuse one forecaster across windows, in order; otherwise every window
  // fits a fresh forecaster.
  bool warm_start = false;
  std::string config_hash;
};

// Runs the protocol on `data`. The forecaster only ever receives the window's
// training rows. A window whose forecaster throws is recorded with its error
// and excluded from the aggregates. Per-window MASE is the mean over series
// (scaled by that window's training range); aggregates average the windows.
BacktestReport run_backtest(const DataCuboid& data, const std::string& dataset_fingerprint,
                            const ForecasterFactory& factory, const BacktestProtocol& protocol,
                            const BacktestOptions& options = {});

BacktestReport run_backtest(const SeriesTable& table, const StructuralSchema& schema,
                            const ForecasterFactory& factory, const BacktestProtocol& protocol,
                            const BacktestOptions& options = {});

struct ComparisonRow {
  std::string forecaster;
  std::optional<double> mase;
  std::optional<double> mse;
};

// Rows sorted by aggregate MASE ascending (undefined last). Throws
// ProtocolMismatch unless every report shares protocol and dataset.
std::vector<ComparisonRow> compare(std::span<const BacktestReport> reports);
std::string comparison_csv(std::span<const ComparisonRow> rows);

}  // namespace csnet
