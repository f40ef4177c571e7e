#include "csnet/commands.hpp"

#include <cstdlib>

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "csnet/error.hpp"

namespace csnet {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(Errc::IoFailure, "cannot create '" + dir.string() + "': " + ec.message());
}

}  // namespace

void configure_logging() {
  static auto logger = [] {
    auto l = spdlog::stderr_color_mt("csforecast");
    l->set_pattern("[%l] %v");
    spdlog::set_default_logger(l);
    return l;
  }();
  const char* env = std::getenv("CSFORECAST_LOG");
  logger->set_level(env ? spdlog::level::from_str(env) : spdlog::level::warn);
}

fs::path cmd_synth(const RunConfig& config) {
  if (!config.synthetic) {
    throw Error(Errc::InvalidConfig, "missing required field 'data.synthetic'");
  }
  ensure_dir(config.output_dir);
  const SeriesTable table = generate_synthetic(*config.synthetic);
  const fs::path csv = config.output_dir / "data.csv";
  write_csv(table, csv);
  const json manifest = {{"seed", config.seed},
                         {"config_hash", run_config_hash(config)},
                         {"rng", kRngName},
                         {"dataset", dataset_fingerprint(table)},
                         {"rows", table.timestamps.size()},
                         {"columns", table.column_labels.size()}};
  write_text_file(config.output_dir / "manifest.json", manifest.dump(2) + "\n");
  spdlog::info("wrote {} rows x {} series to {}", table.timestamps.size(),
               table.column_labels.size(), csv.string());
  return csv;
}

fs::path cmd_train(const RunConfig& config) {
  if (!is_network_forecaster(config.forecaster)) {
    throw Error(Errc::InvalidConfig,
                "forecaster '" + config.forecaster + "' has no trainable model; use forecast");
  }
  const LoadedData data = load_data(config);
  ensure_dir(config.output_dir);
  CsNetForecaster forecaster(config.model, config.var, config.blocking, config.ensemble,
                             data.schema.count_data(), false, config.threads);
  spdlog::info("training {} on {} rows", config.forecaster, data.cuboid.t_len());
  forecaster.fit(data.cuboid);
  if (forecaster.selection()) {
    spdlog::info("ensemble weight {}", forecaster.selection()->weight.value());
  }
  const fs::path path = config.output_dir / "model.csnet";
  save_model(*forecaster.model(), path);
  return path;
}

fs::path cmd_forecast(const RunConfig& config, const std::optional<fs::path>& model) {
  const LoadedData data = load_data(config);
  ensure_dir(config.output_dir);
  const std::size_t H = config.protocol.horizon;
  ForecastBlock block;
  if (is_network_forecaster(config.forecaster)) {
    const fs::path model_path = model.value_or(config.output_dir / "model.csnet");
    CsNetForecaster forecaster(config.model, config.var, config.blocking, config.ensemble,
                               data.schema.count_data(), false, config.threads);
    forecaster.adopt(load_model(model_path), data.cuboid);
    block = forecaster.predict(H);
  } else {
    auto forecaster = make_factory(config, data.schema.count_data())();
    forecaster->fit(data.cuboid);
    block = forecaster->predict(H);
  }
  std::vector<std::string> steps;
  for (std::size_t h = 1; h <= H; ++h) steps.push_back("+" + std::to_string(h));
  const SeriesTable table = table_from_cuboid(block, data.schema, steps, data.table.column_labels);
  const fs::path path = config.output_dir / "forecast.csv";
  write_csv(table, path);
  return path;
}

fs::path cmd_backtest(const RunConfig& config) {
  const LoadedData data = load_data(config);
  ensure_dir(config.output_dir);
  BacktestOptions options;
  options.threads = config.threads;
  options.warm_start = config.warm_start;
  options.config_hash = run_config_hash(config);
  spdlog::info("backtesting {} over {} windows", config.forecaster,
               count_windows(data.cuboid.t_len(), config.protocol));
  const BacktestReport report =
      run_backtest(data.cuboid, dataset_fingerprint(data.table),
                   make_factory(config, data.schema.count_data()), config.protocol, options);
  for (const auto& w : report.windows) {
    if (w.error) spdlog::warn("window ending at {} failed: {}", w.train_end, *w.error);
  }
  const fs::path path = config.output_dir / ("report_" + config.forecaster + ".json");
  write_report(report, path);
  return path;
}

std::string cmd_compare(std::span<const fs::path> reports, const fs::path& out_file) {
  if (reports.empty()) throw Error(Errc::InvalidConfig, "compare needs at least one report");
  std::vector<BacktestReport> loaded;
  for (const auto& p : reports) loaded.push_back(read_report(p));
  const std::string csv = comparison_csv(compare(loaded));
  if (out_file.has_parent_path()) ensure_dir(out_file.parent_path());
  write_text_file(out_file, csv);
  return csv;
}

}  // namespace csnet
