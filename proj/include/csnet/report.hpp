#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

namespace csnet {

enum class ProtocolKind { Expanding, Sliding };

// Expanding: train on rows [0, k) for k = initial_train, initial_train + step, ...
// Sliding:   train on rows [k - window, k) for k = window, window + step, ...
// Each window is scored on rows [k, k + horizon).
struct BacktestProtocol {
  ProtocolKind kind = ProtocolKind::Expanding;
  std::size_t initial_train = 100;
  std::size_t window = 0;
  std::size_t horizon = 4;
  std::size_t step = 1;

  friend bool operator==(const BacktestProtocol&, const BacktestProtocol&) = default;
};

struct WindowRecord {
  std::size_t train_end = 0;  // first held-out row
  std::size_t horizon = 0;
  std::optional<double> mase;  // unset when no series had a defined scale
  std::optional<double> mse;
  std::size_t skipped_series = 0;
  std::optional<std::string> error;  // set when the forecaster failed
  double seconds = 0.0;              // wall clock; not serialized
};

struct AggregateRecord {
  std::optional<double> mase;
  std::optional<double> mse;
  std::size_t skipped_series = 0;
  std::size_t failed_windows = 0;
};

struct BacktestReport {
  BacktestProtocol protocol;
  std::string forecaster;
  std::string dataset_fingerprint;
  std::string config_hash;
  std::string rng;
  std::vector<WindowRecord> windows;
  AggregateRecord aggregate;
};

// Mean of defined window metrics; failed windows are excluded and counted.
AggregateRecord aggregate_windows(const std::vector<WindowRecord>& windows);

}  // namespace csnet
