#include "csnet/decomposition.hpp"

#include <charconv>
#include <cstdio>
#include <set>

#include "csnet/error.hpp"

namespace csnet {

namespace {

bool parse_number(std::string_view s, double& out) {
  if (s.empty()) return false;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  if (*first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last;
}

std::vector<std::string_view> split(std::string_view s, std::string_view delim) {
  std::vector<std::string_view> parts;
  std::size_t pos = 0;
  while (true) {
    const std::size_t next = s.find(delim, pos);
    if (next == std::string_view::npos) {
      parts.push_back(s.substr(pos));
      break;
    }
    parts.push_back(s.substr(pos, next - pos));
    pos = next + delim.size();
  }
  return parts;
}

std::string padded(std::string_view stem, std::size_t value, std::size_t count) {
  int width = 1;
  for (std::size_t n = count > 0 ? count - 1 : 0; n >= 10; n /= 10) ++width;
  char buf[32];
  std::snprintf(buf, sizeof buf, "%0*zu", width, value);
  return std::string(stem) + buf;
}

}  // namespace

bool time_label_less(std::string_view a, std::string_view b) {
  double x = 0.0;
  double y = 0.0;
  if (parse_number(a, x) && parse_number(b, y)) return x < y;
  return a < b;
}

StructuralSchema::StructuralSchema(std::string delimiter, std::vector<Dimension> dimensions,
                                   std::vector<std::size_t> event_group,
                                   std::vector<std::size_t> region_group, bool count_data)
    : delimiter_(std::move(delimiter)),
      dimensions_(std::move(dimensions)),
      event_group_(std::move(event_group)),
      region_group_(std::move(region_group)),
      count_data_(count_data) {
  if (delimiter_.empty()) throw Error(Errc::InvalidConfig, "schema delimiter is empty");
  if (dimensions_.empty()) throw Error(Errc::InvalidConfig, "schema has no dimensions");

  std::vector<int> used(dimensions_.size(), 0);
  for (auto* group : {&event_group_, &region_group_}) {
    for (std::size_t d : *group) {
      if (d >= dimensions_.size()) {
        throw Error(Errc::InvalidConfig, "grouping names dimension " + std::to_string(d) +
                                             " of " + std::to_string(dimensions_.size()));
      }
      ++used[d];
    }
  }
  for (std::size_t d = 0; d < dimensions_.size(); ++d) {
    if (used[d] != 1) {
      throw Error(Errc::InvalidConfig,
                  "dimension '" + dimensions_[d].name + "' must be grouped exactly once");
    }
  }

  level_index_.resize(dimensions_.size());
  for (std::size_t d = 0; d < dimensions_.size(); ++d) {
    const auto& dim = dimensions_[d];
    if (dim.levels.empty()) {
      throw Error(Errc::InvalidConfig, "dimension '" + dim.name + "' has no levels");
    }
    for (std::size_t i = 0; i < dim.levels.size(); ++i) {
      if (dim.levels[i].find(delimiter_) != std::string::npos) {
        throw Error(Errc::InvalidConfig, "level '" + dim.levels[i] + "' contains the delimiter");
      }
      if (!level_index_[d].emplace(dim.levels[i], i).second) {
        throw Error(Errc::InvalidConfig,
                    "dimension '" + dim.name + "' repeats level '" + dim.levels[i] + "'");
      }
    }
  }
  for (std::size_t d : event_group_) event_extent_ *= dimensions_[d].levels.size();
  for (std::size_t d : region_group_) region_extent_ *= dimensions_[d].levels.size();
}

StructuralSchema StructuralSchema::grid(std::size_t n_events, std::size_t n_regions,
                                        bool count_data) {
  Dimension events{"event", {}};
  Dimension regions{"region", {}};
  for (std::size_t e = 0; e < n_events; ++e) events.levels.push_back(padded("event", e, n_events));
  for (std::size_t r = 0; r < n_regions; ++r)
    regions.levels.push_back(padded("region", r, n_regions));
  return StructuralSchema("|", {std::move(events), std::move(regions)}, {0}, {1}, count_data);
}

StructuralSchema StructuralSchema::infer(std::span<const std::string> labels,
                                         std::string delimiter, std::vector<std::string> names,
                                         bool count_data) {
  if (labels.empty()) throw Error(Errc::InvalidConfig, "cannot infer a schema from no labels");
  const std::size_t n_dims = split(labels.front(), delimiter).size();
  std::vector<Dimension> dims(n_dims);
  std::vector<std::set<std::string>> seen(n_dims);
  for (std::size_t d = 0; d < n_dims; ++d) {
    dims[d].name = d < names.size() ? names[d] : (d == 0 ? "event" : "dim" + std::to_string(d));
  }
  for (const auto& label : labels) {
    auto parts = split(label, delimiter);
    if (parts.size() != n_dims) {
      throw Error(Errc::UnparsableLabel, "label '" + label + "' has " +
                                             std::to_string(parts.size()) + " parts, expected " +
                                             std::to_string(n_dims));
    }
    for (std::size_t d = 0; d < n_dims; ++d) {
      std::string level(parts[d]);
      if (seen[d].insert(level).second) dims[d].levels.push_back(std::move(level));
    }
  }
  std::vector<std::size_t> region_group;
  for (std::size_t d = 1; d < n_dims; ++d) region_group.push_back(d);
  // A single dimension leaves the region axis empty (extent 1).
  return StructuralSchema(std::move(delimiter), std::move(dims), {0}, std::move(region_group),
                          count_data);
}

std::size_t StructuralSchema::fold(std::span<const std::size_t> group,
                                   std::span<const std::size_t> level_idx) const {
  std::size_t coord = 0;
  for (std::size_t d : group) coord = coord * dimensions_[d].levels.size() + level_idx[d];
  return coord;
}

void StructuralSchema::unfold(std::span<const std::size_t> group, std::size_t coord,
                              std::vector<std::size_t>& level_idx) const {
  for (auto it = group.rbegin(); it != group.rend(); ++it) {
    const std::size_t n = dimensions_[*it].levels.size();
    level_idx[*it] = coord % n;
    coord /= n;
  }
}

std::pair<std::size_t, std::size_t> StructuralSchema::resolve(std::string_view label) const {
  const std::size_t explicit_dims = dimensions_.size();
  auto parts = split(label, delimiter_);
  if (parts.size() != explicit_dims) {
    throw Error(Errc::UnparsableLabel, "label '" + std::string(label) + "' has " +
                                           std::to_string(parts.size()) + " parts, expected " +
                                           std::to_string(dimensions_.size()));
  }
  std::vector<std::size_t> level_idx(dimensions_.size(), 0);
  for (std::size_t d = 0; d < explicit_dims; ++d) {
    auto it = level_index_[d].find(std::string(parts[d]));
    if (it == level_index_[d].end()) {
      throw Error(Errc::UnparsableLabel, "label '" + std::string(label) + "': unknown " +
                                             dimensions_[d].name + " level '" +
                                             std::string(parts[d]) + "'");
    }
    level_idx[d] = it->second;
  }
  return {fold(event_group_, level_idx), fold(region_group_, level_idx)};
}

std::string StructuralSchema::label(std::size_t event, std::size_t region) const {
  if (event >= event_extent_ || region >= region_extent_) {
    throw Error(Errc::IndexOutOfRange,
                "coordinate (" + std::to_string(event) + ", " + std::to_string(region) + ")");
  }
  std::vector<std::size_t> level_idx(dimensions_.size(), 0);
  unfold(event_group_, event, level_idx);
  unfold(region_group_, region, level_idx);
  std::string out;
  for (std::size_t d = 0; d < dimensions_.size(); ++d) {
    if (d > 0) out += delimiter_;
    out += dimensions_[d].levels[level_idx[d]];
  }
  return out;
}

DataCuboid cuboid_from_table(const SeriesTable& table, const StructuralSchema& schema) {
  const std::size_t e_len = schema.event_extent();
  const std::size_t r_len = schema.region_extent();
  if (table.rows() == 0) throw Error(Errc::ShapeMismatch, "table has no rows");
  if (table.column_labels.size() != table.cols()) {
    throw Error(Errc::ShapeMismatch, "label count differs from column count");
  }

  constexpr std::size_t kUnset = static_cast<std::size_t>(-1);
  std::vector<std::size_t> column_of(e_len * r_len, kUnset);
  for (std::size_t c = 0; c < table.cols(); ++c) {
    auto [e, r] = schema.resolve(table.column_labels[c]);
    auto& slot = column_of[e * r_len + r];
    if (slot != kUnset) {
      throw Error(Errc::DuplicateCoordinate, "columns '" + table.column_labels[slot] + "' and '" +
                                                 table.column_labels[c] +
                                                 "' map to the same cell");
    }
    slot = c;
  }
  for (std::size_t i = 0; i < column_of.size(); ++i) {
    if (column_of[i] == kUnset) {
      throw Error(Errc::MissingCoordinate,
                  "no column for '" + schema.label(i / r_len, i % r_len) + "'");
    }
  }

  DataCuboid cuboid(table.rows(), e_len, r_len);
  for (std::size_t t = 0; t < table.rows(); ++t) {
    auto row = table.values.row(t);
    for (std::size_t e = 0; e < e_len; ++e)
      for (std::size_t r = 0; r < r_len; ++r) cuboid(t, e, r) = row[column_of[e * r_len + r]];
  }
  return cuboid;
}

SeriesTable table_from_cuboid(const DataCuboid& cuboid, const StructuralSchema& schema,
                              std::vector<std::string> timestamps,
                              std::vector<std::string> column_labels) {
  if (cuboid.e_len() != schema.event_extent() || cuboid.r_len() != schema.region_extent()) {
    throw Error(Errc::ShapeMismatch, "cuboid extents do not match the schema");
  }
  if (timestamps.size() != cuboid.t_len()) {
    throw Error(Errc::ShapeMismatch, "timestamp count differs from t_len");
  }
  if (column_labels.empty()) {
    for (std::size_t e = 0; e < cuboid.e_len(); ++e)
      for (std::size_t r = 0; r < cuboid.r_len(); ++r) column_labels.push_back(schema.label(e, r));
  }
  SeriesTable table;
  table.values = Matrix(cuboid.t_len(), column_labels.size());
  std::vector<std::pair<std::size_t, std::size_t>> coords;
  coords.reserve(column_labels.size());
  for (const auto& label : column_labels) coords.push_back(schema.resolve(label));
  for (std::size_t t = 0; t < cuboid.t_len(); ++t)
    for (std::size_t c = 0; c < coords.size(); ++c)
      table.values(t, c) = cuboid(t, coords[c].first, coords[c].second);
  table.timestamps = std::move(timestamps);
  table.column_labels = std::move(column_labels);
  return table;
}

}  // namespace csnet
