#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "csnet/tensor_core.hpp"

namespace csnet {

struct MetricInput {
  std::span<const double> in_sample;  // training-range truth, n >= 2
  std::span<const double> truth;      // h >= 1
  std::span<const double> predicted;  // h
};

// Mean absolute forecast error scaled by the in-sample one-step naive MAE.
// Throws UndefinedScale for a constant in-sample series, LengthMismatch when
// truth and predicted differ or n < 2.
double mase(const MetricInput& input);

// Throws LengthMismatch.
double mse(std::span<const double> truth, std::span<const double> predicted);

struct SeriesScore {
  std::optional<double> mase;  // unset when the in-sample scale is zero
  double mse = 0.0;
};

struct AggregateMetrics {
  double mase = 0.0;  // over series with a defined scale
  double mse = 0.0;   // over all series
  std::size_t skipped_series = 0;
};

// Unweighted means. Throws NoDefinedSeries when no series has a defined MASE.
AggregateMetrics aggregate_metrics(std::span<const SeriesScore> scores);

// Scores every (event, region) series of a forecast block.
std::vector<SeriesScore> score_block(const DataCuboid& in_sample, const ForecastBlock& truth,
                                     const ForecastBlock& predicted);

class EnsembleWeight {
 public:
  // Throws InvalidConfig outside [0, 1].
  explicit EnsembleWeight(double w);
  double value() const noexcept { return w_; }

 private:
  double w_;
};

// w * a + (1 - w) * b entrywise. Throws ShapeMismatch.
ForecastBlock blend(const ForecastBlock& a, const ForecastBlock& b, EnsembleWeight w);

struct ValidationWindow {
  DataCuboid in_sample;
  ForecastBlock truth;
  ForecastBlock a;
  ForecastBlock b;
};

struct WeightSelection {
  EnsembleWeight weight{1.0};
  double blended_mase = 0.0;
  double mase_a = 0.0;
  double mase_b = 0.0;
  std::vector<double> grid;  // validation MASE at w = 0, 0.05, ..., 1
};

inline constexpr std::size_t kWeightGridSteps = 20;

// Validation MASE of one candidate: mean over windows of the window's
// aggregate MASE. Windows without a defined series are skipped.
double validation_mase(std::span<const ValidationWindow> windows, EnsembleWeight w);

// Grid search over w in {0, 0.05, ..., 1} minimizing validation MASE; ties go
// to the larger w. Throws NoDefinedSeries.
WeightSelection select_weight(std::span<const ValidationWindow> windows);

}  // namespace csnet
