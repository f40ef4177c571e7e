#include "csnet/run_config.hpp"

#include <set>

#include "csnet/config_json.hpp"
#include "csnet/error.hpp"
#include "csnet/hash.hpp"

namespace csnet {

using json = nlohmann::json;

namespace {

void reject_unknown(const json& j, const std::string& where, const std::set<std::string>& known) {
  if (!j.is_object()) throw Error(Errc::InvalidConfig, "'" + where + "' must be an object");
  for (const auto& [key, value] : j.items()) {
    if (!known.count(key)) {
      throw Error(Errc::InvalidConfig,
                  "unknown key '" + (where.empty() ? key : where + "." + key) + "'");
    }
  }
}

template <class T>
T get_field(const json& j, const std::string& where, const char* key) {
  const std::string full = where.empty() ? key : where + "." + key;
  if (!j.contains(key)) throw Error(Errc::InvalidConfig, "missing required field '" + full + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw Error(Errc::InvalidConfig, "field '" + full + "' has the wrong type");
  }
}

template <class T>
void get_optional(const json& j, const std::string& where, const char* key, T& out) {
  if (j.contains(key)) out = get_field<T>(j, where, key);
}

SynthConfig parse_synthetic(const json& j) {
  reject_unknown(j, "data.synthetic",
                 {"t_len", "e_len", "r_len", "base_level", "trend_amplitude", "seasonal_amplitude",
                  "seasonal_period", "factor_amplitude", "factor_persistence",
                  "cross_region_mixing", "noise_std"});
  SynthConfig c;
  const std::string w = "data.synthetic";
  c.t_len = get_field<std::size_t>(j, w, "t_len");
  c.e_len = get_field<std::size_t>(j, w, "e_len");
  c.r_len = get_field<std::size_t>(j, w, "r_len");
  get_optional(j, w, "base_level", c.base_level);
  get_optional(j, w, "trend_amplitude", c.trend_amplitude);
  get_optional(j, w, "seasonal_amplitude", c.seasonal_amplitude);
  get_optional(j, w, "seasonal_period", c.seasonal_period);
  get_optional(j, w, "factor_amplitude", c.factor_amplitude);
  get_optional(j, w, "factor_persistence", c.factor_persistence);
  get_optional(j, w, "cross_region_mixing", c.cross_region_mixing);
  get_optional(j, w, "noise_std", c.noise_std);
  return c;
}

json synthetic_to_json(const SynthConfig& c) {
  return {{"t_len", c.t_len},
          {"e_len", c.e_len},
          {"r_len", c.r_len},
          {"base_level", c.base_level},
          {"trend_amplitude", c.trend_amplitude},
          {"seasonal_amplitude", c.seasonal_amplitude},
          {"seasonal_period", c.seasonal_period},
          {"factor_amplitude", c.factor_amplitude},
          {"factor_persistence", c.factor_persistence},
          {"cross_region_mixing", c.cross_region_mixing},
          {"noise_std", c.noise_std}};
}

const std::set<std::string> kForecasters = {"csnet1", "csnet2", "csnet3", "var", "persistence"};

}  // namespace

bool is_network_forecaster(const std::string& name) {
  return name == "csnet1" || name == "csnet2" || name == "csnet3";
}

RunConfig parse_run_config(const json& j, const std::filesystem::path& base_dir,
                           const RunOverrides& overrides) {
  reject_unknown(j, "", {"data", "schema", "model", "var", "ensemble", "protocol", "output_dir",
                         "seed", "forecaster", "threads", "warm_start"});
  RunConfig c;

  const json data = get_field<json>(j, "", "data");
  reject_unknown(data, "data", {"csv", "synthetic"});
  if (data.contains("csv") == data.contains("synthetic")) {
    throw Error(Errc::InvalidConfig, "'data' needs exactly one of 'data.csv' or 'data.synthetic'");
  }
  if (data.contains("csv")) {
    std::filesystem::path p = get_field<std::string>(data, "data", "csv");
    c.csv_path = p.is_absolute() ? p : base_dir / p;
  } else {
    c.synthetic = parse_synthetic(data.at("synthetic"));
  }

  if (j.contains("schema")) {
    c.schema = j.at("schema");
    reject_unknown(*c.schema, "schema",
                   {"delimiter", "names", "dimensions", "event_group", "region_group", "count_data"});
  }

  if (j.contains("model")) {
    const json& m = j.at("model");
    if (m.is_object() && m.contains("seed")) {
      throw Error(Errc::InvalidConfig, "'model.seed' is not settable; use the top-level 'seed'");
    }
    merge_json(c.model, m);
  }

  if (j.contains("var")) {
    const json& v = j.at("var");
    reject_unknown(v, "var", {"lag", "ridge", "blocking"});
    get_optional(v, "var", "lag", c.var.lag);
    get_optional(v, "var", "ridge", c.var.ridge);
    if (v.contains("blocking")) c.blocking = parse_blocking(get_field<std::string>(v, "var", "blocking"));
  }

  if (j.contains("ensemble")) {
    const json& e = j.at("ensemble");
    reject_unknown(e, "ensemble", {"validation_windows", "refit"});
    get_optional(e, "ensemble", "validation_windows", c.ensemble.validation_windows);
    get_optional(e, "ensemble", "refit", c.ensemble.refit);
  }

  bool protocol_horizon = false;
  if (j.contains("protocol")) {
    const json& p = j.at("protocol");
    reject_unknown(p, "protocol", {"kind", "initial_train", "window", "horizon", "step"});
    if (p.contains("kind")) {
      const auto kind = get_field<std::string>(p, "protocol", "kind");
      if (kind == "expanding") {
        c.protocol.kind = ProtocolKind::Expanding;
      } else if (kind == "sliding") {
        c.protocol.kind = ProtocolKind::Sliding;
      } else {
        throw Error(Errc::InvalidConfig, "'protocol.kind' must be expanding or sliding");
      }
    }
    get_optional(p, "protocol", "initial_train", c.protocol.initial_train);
    get_optional(p, "protocol", "window", c.protocol.window);
    get_optional(p, "protocol", "step", c.protocol.step);
    if (p.contains("horizon")) {
      c.protocol.horizon = get_field<std::size_t>(p, "protocol", "horizon");
      protocol_horizon = true;
    }
  }
  const bool model_horizon = j.contains("model") && j.at("model").contains("horizon");
  if (protocol_horizon && model_horizon && c.protocol.horizon != c.model.horizon) {
    throw Error(Errc::InvalidConfig, "'protocol.horizon' and 'model.horizon' disagree");
  }
  if (protocol_horizon) {
    c.model.horizon = c.protocol.horizon;
  } else {
    c.protocol.horizon = c.model.horizon;
  }
  if (c.protocol.kind == ProtocolKind::Sliding && c.protocol.window == 0) {
    throw Error(Errc::InvalidConfig, "'protocol.window' is required for a sliding protocol");
  }

  if (j.contains("output_dir")) c.output_dir = get_field<std::string>(j, "", "output_dir");
  get_optional(j, "", "seed", c.seed);
  get_optional(j, "", "forecaster", c.forecaster);
  get_optional(j, "", "threads", c.threads);
  get_optional(j, "", "warm_start", c.warm_start);

  if (overrides.seed) c.seed = *overrides.seed;
  if (overrides.out) c.output_dir = *overrides.out;
  if (overrides.variant) c.forecaster = *overrides.variant;
  if (overrides.threads) c.threads = *overrides.threads;

  if (!kForecasters.count(c.forecaster)) {
    throw Error(Errc::InvalidConfig, "'forecaster' must be one of csnet1, csnet2, csnet3, var, "
                                     "persistence; got '" + c.forecaster + "'");
  }
  if (c.threads < 1) throw Error(Errc::InvalidConfig, "'threads' must be >= 1");
  if (c.forecaster == "csnet1") c.model.variant = Variant::ConvOnly;
  if (c.forecaster == "csnet2") c.model.variant = Variant::ConvPlusVar;
  if (c.forecaster == "csnet3") c.model.variant = Variant::Full;

  c.model.seed = c.seed;
  if (c.synthetic) {
    c.synthetic->seed = c.seed;
    validate(*c.synthetic);
  }
  if (is_network_forecaster(c.forecaster)) c.model.validate();
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path, const RunOverrides& overrides) {
  json j;
  try {
    j = json::parse(read_text_file(path));
  } catch (const json::exception& e) {
    throw Error(Errc::InvalidConfig, "'" + path.string() + "' is not valid JSON: " + e.what());
  }
  return parse_run_config(j, path.parent_path(), overrides);
}

json to_json(const RunConfig& c) {
  json data;
  if (c.csv_path) {
    data["csv"] = c.csv_path->generic_string();
  } else {
    data["synthetic"] = synthetic_to_json(*c.synthetic);
  }
  json protocol = {{"kind", c.protocol.kind == ProtocolKind::Expanding ? "expanding" : "sliding"},
                   {"initial_train", c.protocol.initial_train},
                   {"window", c.protocol.window},
                   {"horizon", c.protocol.horizon},
                   {"step", c.protocol.step}};
  json out = {{"data", data},
              {"model", to_json(c.model)},
              {"var", {{"lag", c.var.lag}, {"ridge", c.var.ridge}, {"blocking", blocking_name(c.blocking)}}},
              {"ensemble", {{"validation_windows", c.ensemble.validation_windows}, {"refit", c.ensemble.refit}}},
              {"protocol", protocol},
              {"seed", c.seed},
              {"forecaster", c.forecaster},
              {"warm_start", c.warm_start}};
  if (c.schema) out["schema"] = *c.schema;
  return out;
}

std::string run_config_hash(const RunConfig& c) {
  // Output location, thread count and loss bookkeeping do not change results.
  json j = to_json(c);
  j["model"].erase("record_loss");
  if (j["data"].contains("csv")) j["data"].erase("csv");
  return fnv1a_hex(j.dump());
}

StructuralSchema schema_from_json(const json& j, const SeriesTable* table) {
  std::string delimiter = "|";
  bool count_data = false;
  get_optional(j, "schema", "delimiter", delimiter);
  get_optional(j, "schema", "count_data", count_data);

  if (!j.contains("dimensions")) {
    if (!table) throw Error(Errc::InvalidConfig, "missing required field 'schema.dimensions'");
    std::vector<std::string> names;
    get_optional(j, "schema", "names", names);
    return StructuralSchema::infer(table->column_labels, delimiter, names, count_data);
  }

  std::vector<Dimension> dims;
  const json& arr = j.at("dimensions");
  if (!arr.is_array()) throw Error(Errc::InvalidConfig, "'schema.dimensions' must be an array");
  for (std::size_t i = 0; i < arr.size(); ++i) {
    const std::string where = "schema.dimensions[" + std::to_string(i) + "]";
    reject_unknown(arr[i], where, {"name", "levels"});
    dims.push_back({get_field<std::string>(arr[i], where, "name"),
                    get_field<std::vector<std::string>>(arr[i], where, "levels")});
  }
  auto group = [&](const char* key, std::vector<std::size_t> fallback) {
    if (!j.contains(key)) return fallback;
    std::vector<std::size_t> idx;
    for (const auto& name : get_field<std::vector<std::string>>(j, "schema", key)) {
      std::size_t d = 0;
      while (d < dims.size() && dims[d].name != name) ++d;
      if (d == dims.size()) {
        throw Error(Errc::InvalidConfig, std::string("'schema.") + key + "' names unknown dimension '" + name + "'");
      }
      idx.push_back(d);
    }
    return idx;
  };
  std::vector<std::size_t> rest;
  for (std::size_t d = 1; d < dims.size(); ++d) rest.push_back(d);
  const auto event = group("event_group", {0});
  const auto region = group("region_group", rest);
  return StructuralSchema(delimiter, dims, event, region, count_data);
}

LoadedData load_data(const RunConfig& c) {
  SeriesTable table = c.csv_path ? read_csv(*c.csv_path) : generate_synthetic(*c.synthetic);
  StructuralSchema schema =
      c.schema ? schema_from_json(*c.schema, &table)
      : c.csv_path ? StructuralSchema::infer(table.column_labels)
                   : StructuralSchema::grid(c.synthetic->e_len, c.synthetic->r_len);
  DataCuboid cuboid = cuboid_from_table(table, schema);
  return {std::move(table), std::move(schema), std::move(cuboid)};
}

ForecasterFactory make_factory(const RunConfig& c, bool count_data) {
  if (c.forecaster == "persistence") {
    return [] { return std::make_unique<PersistenceForecaster>(); };
  }
  if (c.forecaster == "var") {
    return [var = c.var, blocking = c.blocking] {
      return std::make_unique<VarCuboidForecaster>(var, blocking);
    };
  }
  return [c, count_data] {
    return std::make_unique<CsNetForecaster>(c.model, c.var, c.blocking, c.ensemble, count_data,
                                             c.warm_start);
  };
}

}  // namespace csnet
