#include "csnet/data_io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "csnet/error.hpp"
#include "csnet/hash.hpp"

namespace csnet {

namespace {

using json = nlohmann::json;

// Splits one CSV record. Supports double-quoted fields with "" escapes.
std::vector<std::string> split_record(const std::string& line, std::size_t line_no) {
  std::vector<std::string> fields;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field += c;
      }
    } else if (c == '"') {
      if (!field.empty()) {
        throw Error(Errc::MalformedCsv, "line " + std::to_string(line_no) + ": stray quote");
      }
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(field));
      field.clear();
    } else {
      field += c;
    }
  }
  if (quoted) {
    throw Error(Errc::MalformedCsv, "line " + std::to_string(line_no) + ": unterminated quote");
  }
  fields.push_back(std::move(field));
  return fields;
}

std::string quote_if_needed(const std::string& field) {
  if (field.find_first_of(",\"\n\r") == std::string::npos) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

bool parse_cell(const std::string& text, double& out) {
  std::string_view s(text);
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  if (s.empty()) return false;
  if (s.front() == '+') s.remove_prefix(1);
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size() && std::isfinite(out);
}

json opt_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::optional<double> opt_from(const json& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<double>();
}

}  // namespace

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::IoFailure, "cannot open '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::IoFailure, "cannot write '" + path.string() + "'");
  out << text;
  out.flush();
  if (!out) throw Error(Errc::IoFailure, "write to '" + path.string() + "' failed");
}

std::string format_double(double value) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, ptr);
}

SeriesTable read_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::IoFailure, "cannot open '" + path.string() + "'");

  SeriesTable table;
  std::vector<double> values;
  std::string line;
  std::size_t line_no = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line_no == 1 && line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
    if (line.empty()) continue;
    auto fields = split_record(line, line_no);
    if (!have_header) {
      if (fields.size() < 2) {
        throw Error(Errc::MalformedCsv, "header needs a time column and at least one series");
      }
      std::unordered_set<std::string> seen;
      for (std::size_t c = 1; c < fields.size(); ++c) {
        if (!seen.insert(fields[c]).second) {
          throw Error(Errc::DuplicateColumnLabel, "column label '" + fields[c] + "' repeats");
        }
        table.column_labels.push_back(std::move(fields[c]));
      }
      have_header = true;
      continue;
    }
    if (fields.size() != table.column_labels.size() + 1) {
      throw Error(Errc::MalformedCsv, "line " + std::to_string(line_no) + " has " +
                                          std::to_string(fields.size()) + " fields, expected " +
                                          std::to_string(table.column_labels.size() + 1));
    }
    if (!table.timestamps.empty() && !time_label_less(table.timestamps.back(), fields[0])) {
      throw Error(Errc::NonMonotoneTime, "time '" + fields[0] + "' on line " +
                                             std::to_string(line_no) + " does not follow '" +
                                             table.timestamps.back() + "'");
    }
    table.timestamps.push_back(fields[0]);
    for (std::size_t c = 1; c < fields.size(); ++c) {
      double v = 0.0;
      if (!parse_cell(fields[c], v)) {
        throw Error(Errc::NonNumericCell, "row " + std::to_string(table.timestamps.size() - 1) +
                                              " (line " + std::to_string(line_no) +
                                              "), column '" + table.column_labels[c - 1] +
                                              "': '" + fields[c] + "'");
      }
      values.push_back(v);
    }
  }
  if (!have_header) throw Error(Errc::MalformedCsv, "'" + path.string() + "' is empty");
  if (table.timestamps.empty()) throw Error(Errc::MalformedCsv, "no data rows");
  table.values = Matrix(table.timestamps.size(), table.column_labels.size(), std::move(values));
  return table;
}

SeriesTable read_csv(const std::filesystem::path& path, const StructuralSchema& schema) {
  SeriesTable table = read_csv(path);
  for (const auto& label : table.column_labels) schema.resolve(label);
  return table;
}

void write_csv(const SeriesTable& table, const std::filesystem::path& path) {
  if (table.timestamps.size() != table.rows() || table.column_labels.size() != table.cols()) {
    throw Error(Errc::ShapeMismatch, "table labels do not match its values");
  }
  std::string out = "time";
  for (const auto& label : table.column_labels) {
    out += ',';
    out += quote_if_needed(label);
  }
  out += '\n';
  for (std::size_t t = 0; t < table.rows(); ++t) {
    out += quote_if_needed(table.timestamps[t]);
    for (double v : table.values.row(t)) {
      out += ',';
      out += format_double(v);
    }
    out += '\n';
  }
  write_text_file(path, out);
}

void validate(const SynthConfig& c) {
  if (c.t_len < 1 || c.e_len < 1 || c.r_len < 1) {
    throw Error(Errc::InvalidConfig, "synthetic extents must be >= 1");
  }
  if (!(c.noise_std >= 0.0)) throw Error(Errc::InvalidConfig, "noise_std must be >= 0");
  if (!(c.cross_region_mixing >= 0.0 && c.cross_region_mixing <= 1.0)) {
    throw Error(Errc::InvalidConfig, "cross_region_mixing must lie in [0, 1]");
  }
  if (!(c.seasonal_period > 0.0)) throw Error(Errc::InvalidConfig, "seasonal_period must be > 0");
  if (!(std::abs(c.factor_persistence) < 1.0)) {
    throw Error(Errc::InvalidConfig, "factor_persistence must lie in (-1, 1)");
  }
}

SeriesTable generate_synthetic(const SynthConfig& c) {
  validate(c);
  std::mt19937_64 rng(c.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);

  std::vector<double> slope(c.e_len), phase(c.e_len);
  for (std::size_t e = 0; e < c.e_len; ++e) {
    slope[e] = 0.5 + 0.5 * unit(rng);
    phase[e] = 2.0 * std::numbers::pi * unit(rng);
  }

  const double phi = c.factor_persistence;
  const double innov = std::sqrt(1.0 - phi * phi);
  std::vector<double> shared(c.e_len), own(c.e_len * c.r_len);
  for (auto& s : shared) s = gauss(rng);
  for (auto& s : own) s = gauss(rng);

  const auto schema = StructuralSchema::grid(c.e_len, c.r_len);
  SeriesTable table;
  table.values = Matrix(c.t_len, c.e_len * c.r_len);
  for (std::size_t e = 0; e < c.e_len; ++e)
    for (std::size_t r = 0; r < c.r_len; ++r) table.column_labels.push_back(schema.label(e, r));

  const double mix = c.cross_region_mixing;
  for (std::size_t t = 0; t < c.t_len; ++t) {
    table.timestamps.push_back(std::to_string(t));
    if (t > 0) {
      for (auto& s : shared) s = phi * s + innov * gauss(rng);
      for (auto& s : own) s = phi * s + innov * gauss(rng);
    }
    auto row = table.values.row(t);
    for (std::size_t e = 0; e < c.e_len; ++e) {
      const double td = static_cast<double>(t);
      const double common = c.base_level +
                            c.trend_amplitude * slope[e] * td / static_cast<double>(c.t_len) +
                            c.seasonal_amplitude *
                                std::sin(2.0 * std::numbers::pi * td / c.seasonal_period + phase[e]);
      for (std::size_t r = 0; r < c.r_len; ++r) {
        const double factor = mix * shared[e] + (1.0 - mix) * own[e * c.r_len + r];
        const double noise = gauss(rng);
        const double x = common + c.factor_amplitude * factor + c.noise_std * noise;
        row[e * c.r_len + r] = x > 0.0 ? x : 0.0;
      }
    }
  }
  return table;
}

std::string dataset_fingerprint(const SeriesTable& table) {
  Fnv1a h;
  for (const auto& label : table.column_labels) {
    h.update(label);
    h.update(std::string_view("\x1f", 1));
  }
  for (const auto& ts : table.timestamps) {
    h.update(ts);
    h.update(std::string_view("\x1e", 1));
  }
  for (double v : table.values.values()) h.update(v);
  return h.hex();
}

AggregateRecord aggregate_windows(const std::vector<WindowRecord>& windows) {
  AggregateRecord agg;
  double mase_sum = 0.0, mse_sum = 0.0;
  std::size_t mase_n = 0, mse_n = 0;
  for (const auto& w : windows) {
    if (w.error) {
      ++agg.failed_windows;
      continue;
    }
    agg.skipped_series += w.skipped_series;
    if (w.mase) {
      mase_sum += *w.mase;
      ++mase_n;
    }
    if (w.mse) {
      mse_sum += *w.mse;
      ++mse_n;
    }
  }
  if (mase_n > 0) agg.mase = mase_sum / static_cast<double>(mase_n);
  if (mse_n > 0) agg.mse = mse_sum / static_cast<double>(mse_n);
  return agg;
}

std::string report_to_json(const BacktestReport& report) {
  json j;
  const auto& p = report.protocol;
  j["protocol"] = {{"kind", p.kind == ProtocolKind::Expanding ? "expanding" : "sliding"},
                   {"initial_train", p.initial_train},
                   {"window", p.window},
                   {"horizon", p.horizon},
                   {"step", p.step}};
  j["forecaster"] = report.forecaster;
  j["dataset"] = report.dataset_fingerprint;
  j["config_hash"] = report.config_hash;
  j["rng"] = report.rng;
  j["windows"] = json::array();
  for (const auto& w : report.windows) {
    json wj = {{"train_end", w.train_end},
               {"horizon", w.horizon},
               {"mase", opt_json(w.mase)},
               {"mse", opt_json(w.mse)},
               {"skipped_series", w.skipped_series}};
    if (w.error) wj["error"] = *w.error;
    j["windows"].push_back(std::move(wj));
  }
  j["aggregate"] = {{"mase", opt_json(report.aggregate.mase)},
                    {"mse", opt_json(report.aggregate.mse)},
                    {"skipped_series", report.aggregate.skipped_series},
                    {"failed_windows", report.aggregate.failed_windows}};
  return j.dump(2) + "\n";
}

BacktestReport report_from_json(const std::string& text) {
  BacktestReport r;
  try {
    const json j = json::parse(text);
    const auto& p = j.at("protocol");
    const auto kind = p.at("kind").get<std::string>();
    if (kind != "expanding" && kind != "sliding") {
      throw Error(Errc::InvalidConfig, "unknown protocol kind '" + kind + "'");
    }
    r.protocol.kind = kind == "expanding" ? ProtocolKind::Expanding : ProtocolKind::Sliding;
    r.protocol.initial_train = p.at("initial_train").get<std::size_t>();
    r.protocol.window = p.at("window").get<std::size_t>();
    r.protocol.horizon = p.at("horizon").get<std::size_t>();
    r.protocol.step = p.at("step").get<std::size_t>();
    r.forecaster = j.at("forecaster").get<std::string>();
    r.dataset_fingerprint = j.value("dataset", "");
    r.config_hash = j.value("config_hash", "");
    r.rng = j.value("rng", "");
    for (const auto& wj : j.at("windows")) {
      WindowRecord w;
      w.train_end = wj.at("train_end").get<std::size_t>();
      w.horizon = wj.at("horizon").get<std::size_t>();
      w.mase = opt_from(wj.at("mase"));
      w.mse = opt_from(wj.at("mse"));
      w.skipped_series = wj.value("skipped_series", std::size_t{0});
      if (wj.contains("error")) w.error = wj.at("error").get<std::string>();
      r.windows.push_back(std::move(w));
    }
    const auto& a = j.at("aggregate");
    r.aggregate.mase = opt_from(a.at("mase"));
    r.aggregate.mse = opt_from(a.at("mse"));
    r.aggregate.skipped_series = a.at("skipped_series").get<std::size_t>();
    r.aggregate.failed_windows = a.value("failed_windows", std::size_t{0});
  } catch (const json::exception& e) {
    throw Error(Errc::InvalidConfig, std::string("malformed report: ") + e.what());
  }
  return r;
}

void write_report(const BacktestReport& report, const std::filesystem::path& path) {
  write_text_file(path, report_to_json(report));
}

BacktestReport read_report(const std::filesystem::path& path) {
  return report_from_json(read_text_file(path));
}

}  // namespace csnet
