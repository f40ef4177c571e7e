#include "csnet/backtest.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <thread>

#include "csnet/data_io.hpp"
#include "csnet/ensemble_metrics.hpp"
#include "csnet/error.hpp"

namespace csnet {

std::vector<std::size_t> window_ends(std::size_t t_len, const BacktestProtocol& p) {
  if (p.horizon < 1 || p.step < 1) {
    throw Error(Errc::InvalidConfig, "protocol horizon and step must be >= 1");
  }
  const std::size_t first = p.kind == ProtocolKind::Expanding ? p.initial_train : p.window;
  if (first < 1) throw Error(Errc::InvalidConfig, "protocol training length must be >= 1");
  if (t_len < first + p.horizon) {
    throw Error(Errc::InsufficientHistory,
                std::to_string(t_len) + " rows cannot hold " + std::to_string(first) +
                    " training rows plus horizon " + std::to_string(p.horizon));
  }
  std::vector<std::size_t> ends;
  for (std::size_t k = first; k + p.horizon <= t_len; k += p.step) ends.push_back(k);
  return ends;
}

std::size_t count_windows(std::size_t t_len, const BacktestProtocol& protocol) {
  return window_ends(t_len, protocol).size();
}

namespace {

WindowRecord run_window(const DataCuboid& data, const BacktestProtocol& p, std::size_t k,
                        Forecaster& forecaster) {
  WindowRecord rec;
  rec.train_end = k;
  rec.horizon = p.horizon;
  const auto started = std::chrono::steady_clock::now();
  try {
    const std::size_t start = p.kind == ProtocolKind::Expanding ? 0 : k - p.window;
    const DataCuboid history = time_window(data, start, k - start);
    forecaster.fit(history);
    const ForecastBlock predicted = forecaster.predict(p.horizon);
    const ForecastBlock truth = time_window(data, k, p.horizon);
    if (!predicted.same_shape(truth)) {
      throw Error(Errc::ShapeMismatch, "forecaster returned a block of the wrong shape");
    }
    if (!predicted.all_finite()) throw Error(Errc::ShapeMismatch, "forecast is not finite");
    const auto scores = score_block(history, truth, predicted);
    double mse_sum = 0.0;
    for (const auto& s : scores) mse_sum += s.mse;
    rec.mse = mse_sum / static_cast<double>(scores.size());
    try {
      const auto agg = aggregate_metrics(scores);
      rec.mase = agg.mase;
      rec.skipped_series = agg.skipped_series;
    } catch (const Error& e) {
      if (e.code() != Errc::NoDefinedSeries) throw;
      rec.skipped_series = scores.size();
    }
  } catch (const std::exception& e) {
    rec.mase.reset();
    rec.mse.reset();
    rec.skipped_series = 0;
    rec.error = e.what();
  }
  rec.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return rec;
}

}  // namespace

BacktestReport run_backtest(const DataCuboid& data, const std::string& dataset_fingerprint,
                            const ForecasterFactory& factory, const BacktestProtocol& protocol,
                            const BacktestOptions& options) {
  const auto ends = window_ends(data.t_len(), protocol);
  BacktestReport report;
  report.protocol = protocol;
  report.dataset_fingerprint = dataset_fingerprint;
  report.config_hash = options.config_hash;
  report.rng = kRngName;
  report.forecaster = factory()->name();
  report.windows.resize(ends.size());

  if (options.warm_start) {
    auto forecaster = factory();
    for (std::size_t i = 0; i < ends.size(); ++i)
      report.windows[i] = run_window(data, protocol, ends[i], *forecaster);
  } else if (options.threads <= 1 || ends.size() < 2) {
    for (std::size_t i = 0; i < ends.size(); ++i) {
      auto forecaster = factory();
      report.windows[i] = run_window(data, protocol, ends[i], *forecaster);
    }
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    const unsigned n = std::min<unsigned>(options.threads, static_cast<unsigned>(ends.size()));
    for (unsigned t = 0; t < n; ++t) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < ends.size(); i = next++) {
          auto forecaster = factory();
          report.windows[i] = run_window(data, protocol, ends[i], *forecaster);
        }
      });
    }
    for (auto& th : pool) th.join();
  }
  report.aggregate = aggregate_windows(report.windows);
  return report;
}

BacktestReport run_backtest(const SeriesTable& table, const StructuralSchema& schema,
                            const ForecasterFactory& factory, const BacktestProtocol& protocol,
                            const BacktestOptions& options) {
  return run_backtest(cuboid_from_table(table, schema), dataset_fingerprint(table), factory,
                      protocol, options);
}

std::vector<ComparisonRow> compare(std::span<const BacktestReport> reports) {
  std::vector<ComparisonRow> rows;
  for (const auto& r : reports) {
    const auto& first = reports.front();
    if (!(r.protocol == first.protocol)) {
      throw Error(Errc::ProtocolMismatch,
                  "'" + r.forecaster + "' used a different protocol than '" + first.forecaster + "'");
    }
    if (r.dataset_fingerprint != first.dataset_fingerprint) {
      throw Error(Errc::ProtocolMismatch,
                  "'" + r.forecaster + "' ran on a different dataset than '" + first.forecaster + "'");
    }
    rows.push_back({r.forecaster, r.aggregate.mase, r.aggregate.mse});
  }
  std::stable_sort(rows.begin(), rows.end(), [](const ComparisonRow& a, const ComparisonRow& b) {
    if (a.mase.has_value() != b.mase.has_value()) return a.mase.has_value();
    return a.mase && *a.mase < *b.mase;
  });
  return rows;
}

std::string comparison_csv(std::span<const ComparisonRow> rows) {
  std::string out = "forecaster,mase,mse\n";
  for (const auto& row : rows) {
    out += row.forecaster;
    out += ',';
    if (row.mase) out += format_double(*row.mase);
    out += ',';
    if (row.mse) out += format_double(*row.mse);
    out += '\n';
  }
  return out;
}

}  // namespace csnet
