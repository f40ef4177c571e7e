#include "csnet/ensemble_metrics.hpp"

#include <cmath>
#include <string>

#include "csnet/error.hpp"

namespace csnet {

double mase(const MetricInput& in) {
  if (in.truth.size() != in.predicted.size() || in.truth.empty()) {
    throw Error(Errc::LengthMismatch, "truth has " + std::to_string(in.truth.size()) +
                                          " values, predicted " +
                                          std::to_string(in.predicted.size()));
  }
  const std::size_t n = in.in_sample.size();
  if (n < 2) throw Error(Errc::LengthMismatch, "in-sample series needs at least 2 values");

  double naive = 0.0;
  for (std::size_t i = 1; i < n; ++i) naive += std::abs(in.in_sample[i] - in.in_sample[i - 1]);
  if (naive == 0.0) throw Error(Errc::UndefinedScale, "in-sample series is constant");
  naive /= static_cast<double>(n - 1);

  double err = 0.0;
  for (std::size_t k = 0; k < in.truth.size(); ++k) err += std::abs(in.truth[k] - in.predicted[k]);
  err /= static_cast<double>(in.truth.size());
  return err / naive;
}

double mse(std::span<const double> truth, std::span<const double> predicted) {
  if (truth.size() != predicted.size() || truth.empty()) {
    throw Error(Errc::LengthMismatch, "truth has " + std::to_string(truth.size()) +
                                          " values, predicted " + std::to_string(predicted.size()));
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const double d = truth[i] - predicted[i];
    acc += d * d;
  }
  return acc / static_cast<double>(truth.size());
}

AggregateMetrics aggregate_metrics(std::span<const SeriesScore> scores) {
  AggregateMetrics agg;
  std::size_t defined = 0;
  for (const auto& s : scores) {
    agg.mse += s.mse;
    if (s.mase) {
      agg.mase += *s.mase;
      ++defined;
    } else {
      ++agg.skipped_series;
    }
  }
  if (defined == 0) throw Error(Errc::NoDefinedSeries, "no series has a defined MASE");
  agg.mase /= static_cast<double>(defined);
  agg.mse /= static_cast<double>(scores.size());
  return agg;
}

std::vector<SeriesScore> score_block(const DataCuboid& in_sample, const ForecastBlock& truth,
                                     const ForecastBlock& predicted) {
  if (!truth.same_shape(predicted) || truth.e_len() != in_sample.e_len() ||
      truth.r_len() != in_sample.r_len()) {
    throw Error(Errc::ShapeMismatch, "forecast, truth and in-sample extents differ");
  }
  std::vector<SeriesScore> scores;
  scores.reserve(truth.e_len() * truth.r_len());
  for (std::size_t e = 0; e < truth.e_len(); ++e) {
    for (std::size_t r = 0; r < truth.r_len(); ++r) {
      const auto hist = in_sample.series(e, r);
      const auto y = truth.series(e, r);
      const auto yhat = predicted.series(e, r);
      SeriesScore s;
      s.mse = mse(y, yhat);
      try {
        s.mase = mase({hist, y, yhat});
      } catch (const Error& err) {
        if (err.code() != Errc::UndefinedScale) throw;
      }
      scores.push_back(s);
    }
  }
  return scores;
}

EnsembleWeight::EnsembleWeight(double w) : w_(w) {
  if (!(w >= 0.0 && w <= 1.0)) {
    throw Error(Errc::InvalidConfig, "ensemble weight " + std::to_string(w) + " outside [0, 1]");
  }
}

ForecastBlock blend(const ForecastBlock& a, const ForecastBlock& b, EnsembleWeight w) {
  if (!a.same_shape(b)) throw Error(Errc::ShapeMismatch, "blended blocks differ in shape");
  ForecastBlock out = a;
  const double wa = w.value();
  const double wb = 1.0 - wa;
  for (std::size_t i = 0; i < out.size(); ++i) out.values()[i] = wa * a.values()[i] + wb * b.values()[i];
  return out;
}

double validation_mase(std::span<const ValidationWindow> windows, EnsembleWeight w) {
  double acc = 0.0;
  std::size_t used = 0;
  for (const auto& win : windows) {
    const ForecastBlock mixed = blend(win.a, win.b, w);
    const auto scores = score_block(win.in_sample, win.truth, mixed);
    try {
      acc += aggregate_metrics(scores).mase;
      ++used;
    } catch (const Error& err) {
      if (err.code() != Errc::NoDefinedSeries) throw;
    }
  }
  if (used == 0) throw Error(Errc::NoDefinedSeries, "no validation window has a defined MASE");
  return acc / static_cast<double>(used);
}

WeightSelection select_weight(std::span<const ValidationWindow> windows) {
  if (windows.empty()) throw Error(Errc::NoDefinedSeries, "no validation windows");
  WeightSelection sel;
  sel.grid.resize(kWeightGridSteps + 1);
  std::size_t best = kWeightGridSteps;
  for (std::size_t i = kWeightGridSteps + 1; i-- > 0;) {
    const double w = static_cast<double>(i) / static_cast<double>(kWeightGridSteps);
    sel.grid[i] = validation_mase(windows, EnsembleWeight(w));
    if (sel.grid[i] < sel.grid[best]) best = i;
  }
  sel.weight = EnsembleWeight(static_cast<double>(best) / static_cast<double>(kWeightGridSteps));
  sel.blended_mase = sel.grid[best];
  sel.mase_a = sel.grid[kWeightGridSteps];
  sel.mase_b = sel.grid[0];
  return sel;
}

}  // namespace csnet
