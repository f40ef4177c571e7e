#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "csnet/run_config.hpp"

namespace csnet {

// Each command writes into config.output_dir (created if needed) and returns
// the path of its main artifact.

// <out>/data.csv plus <out>/manifest.json {seed, config_hash, rng, dataset}.
std::filesystem::path cmd_synth(const RunConfig& config);

// <out>/model.csnet. Only the network forecasters can be trained.
std::filesystem::path cmd_train(const RunConfig& config);

// <out>/forecast.csv: H rows after the last data row, one column per series.
// Network forecasters read `model` (default <out>/model.csnet); the baselines
// fit directly on the data. Throws IncompatibleModel on config or extent mismatch.
std::filesystem::path cmd_forecast(const RunConfig& config,
                                   const std::optional<std::filesystem::path>& model = {});

// <out>/report_<forecaster>.json.
std::filesystem::path cmd_backtest(const RunConfig& config);

// Writes the comparison table to `out_file` and returns its text.
std::string cmd_compare(std::span<const std::filesystem::path> reports,
                        const std::filesystem::path& out_file);

// Configures the process-wide log level from CSFORECAST_LOG
// (trace, debug, info, warn, error, off; default warn).
void configure_logging();

}  // namespace csnet
