#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "csnet/decomposition.hpp"
#include "csnet/report.hpp"

namespace csnet {

// Name of the pseudo-random generator used everywhere in the library.
inline constexpr const char* kRngName = "mt19937_64";

// CSV layout: UTF-8, comma separated, header "time,<label>,<label>,...", one
// row per time step. Throws MalformedCsv, NonNumericCell, DuplicateColumnLabel,
// NonMonotoneTime or IoFailure.
SeriesTable read_csv(const std::filesystem::path& path);
// As above, and additionally requires every column label to resolve under `schema`.
SeriesTable read_csv(const std::filesystem::path& path, const StructuralSchema& schema);

// Values use the shortest representation that reads back exactly.
void write_csv(const SeriesTable& table, const std::filesystem::path& path);
std::string format_double(double value);

// Synthetic structured panel data. For event e, region r and step t:
//
//   x = base_level
//     + trend_amplitude * slope_e * t / t_len
//     + seasonal_amplitude * sin(2 pi t / seasonal_period + phase_e)
//     + factor_amplitude * (mixing * shared_e(t) + (1 - mixing) * own_er(t))
//     + noise_std * eps
//
// clipped at zero. shared_e and own_er are unit-variance AR(1) processes with
// coefficient factor_persistence; slope_e is uniform in [0.5, 1] and phase_e
// uniform in [0, 2 pi). All draws come from one seeded generator.
struct SynthConfig {
  std::size_t t_len = 215;
  std::size_t e_len = 20;
  std::size_t r_len = 260;
  std::uint64_t seed = 0;
  double base_level = 10.0;
  double trend_amplitude = 0.0;
  double seasonal_amplitude = 0.0;
  double seasonal_period = 12.0;
  double factor_amplitude = 0.0;
  double factor_persistence = 0.9;
  double cross_region_mixing = 0.0;
  double noise_std = 0.0;
};

void validate(const SynthConfig& config);
SeriesTable generate_synthetic(const SynthConfig& config);

// Hash of labels, timestamps and values; identifies a dataset in reports.
std::string dataset_fingerprint(const SeriesTable& table);

std::string report_to_json(const BacktestReport& report);
BacktestReport report_from_json(const std::string& text);
void write_report(const BacktestReport& report, const std::filesystem::path& path);
BacktestReport read_report(const std::filesystem::path& path);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace csnet
