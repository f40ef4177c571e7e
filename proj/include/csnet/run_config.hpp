#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "csnet/backtest.hpp"
#include "csnet/csnet_model.hpp"
#include "csnet/data_io.hpp"
#include "csnet/decomposition.hpp"
#include "csnet/forecasters.hpp"
#include "csnet/var_forecaster.hpp"

namespace csnet {

// Command-line flags; any value set here wins over the config file.
struct RunOverrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::filesystem::path> out;
  std::optional<std::string> variant;
  std::optional<unsigned> threads;
};

struct RunConfig {
  // Exactly one of the two data sources is set.
  std::optional<std::filesystem::path> csv_path;
  std::optional<SynthConfig> synthetic;
  std::optional<nlohmann::json> schema;  // absent: grid for synthetic data, inferred for CSV
  CsNetConfig model;
  VarSettings var;
  BlockingKind blocking = BlockingKind::PerRegion;
  EnsembleSettings ensemble;
  BacktestProtocol protocol;
  std::filesystem::path output_dir = "csforecast_out";
  std::uint64_t seed = 0;
  std::string forecaster = "csnet3";  // csnet1..3, var, persistence
  unsigned threads = 1;
  bool warm_start = false;
};

// Parses the config tree. Relative data paths resolve against `base_dir`.
// Throws InvalidConfig naming the offending key.
RunConfig parse_run_config(const nlohmann::json& j, const std::filesystem::path& base_dir,
                           const RunOverrides& overrides = {});
RunConfig load_run_config(const std::filesystem::path& path, const RunOverrides& overrides = {});

// Canonical tree of the effective settings (defaults filled in).
nlohmann::json to_json(const RunConfig& config);
std::string run_config_hash(const RunConfig& config);

struct LoadedData {
  SeriesTable table;
  StructuralSchema schema;
  DataCuboid cuboid;
};

LoadedData load_data(const RunConfig& config);
StructuralSchema schema_from_json(const nlohmann::json& j, const SeriesTable* table);

bool is_network_forecaster(const std::string& name);
ForecasterFactory make_factory(const RunConfig& config, bool count_data);

}  // namespace csnet
