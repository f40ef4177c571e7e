#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "csnet/tensor_core.hpp"

namespace csnet {

// Wide table: rows are time steps, columns are labeled series.
struct SeriesTable {
  std::vector<std::string> timestamps;
  std::vector<std::string> column_labels;
  Matrix values;  // timestamps.size() x column_labels.size()

  std::size_t rows() const noexcept { return values.rows(); }
  std::size_t cols() const noexcept { return values.cols(); }
};

// Time labels are opaque strings; numeric labels compare numerically, anything
// else lexicographically.
bool time_label_less(std::string_view a, std::string_view b);

struct Dimension {
  std::string name;
  std::vector<std::string> levels;
};

// Column label grammar: one level per dimension joined by `delimiter`, e.g.
// "event03|region117". Source dimensions are folded onto the two internal
// non-time axes by the event/region groupings; a grouped axis enumerates the
// product of its dimensions' levels with the first listed dimension most
// significant.
class StructuralSchema {
 public:
  StructuralSchema(std::string delimiter, std::vector<Dimension> dimensions,
                   std::vector<std::size_t> event_group, std::vector<std::size_t> region_group,
                   bool count_data = false);

  // Two-dimension grid with labels "eventNN|regionNNN".
  static StructuralSchema grid(std::size_t n_events, std::size_t n_regions, bool count_data = false);

  // Discover levels in order of first appearance. Default grouping puts the
  // first dimension on the event axis and the rest on the region axis.
  static StructuralSchema infer(std::span<const std::string> labels, std::string delimiter = "|",
                                std::vector<std::string> names = {}, bool count_data = false);

  const std::string& delimiter() const noexcept { return delimiter_; }
  const std::vector<Dimension>& dimensions() const noexcept { return dimensions_; }
  const std::vector<std::size_t>& event_group() const noexcept { return event_group_; }
  const std::vector<std::size_t>& region_group() const noexcept { return region_group_; }
  bool count_data() const noexcept { return count_data_; }

  std::size_t event_extent() const noexcept { return event_extent_; }
  std::size_t region_extent() const noexcept { return region_extent_; }

  // (event, region) coordinate for a column label. Throws UnparsableLabel.
  std::pair<std::size_t, std::size_t> resolve(std::string_view label) const;
  std::string label(std::size_t event, std::size_t region) const;

 private:
  std::size_t fold(std::span<const std::size_t> group, std::span<const std::size_t> level_idx) const;
  void unfold(std::span<const std::size_t> group, std::size_t coord,
              std::vector<std::size_t>& level_idx) const;

  std::string delimiter_;
  std::vector<Dimension> dimensions_;
  std::vector<std::size_t> event_group_;
  std::vector<std::size_t> region_group_;
  bool count_data_ = false;
  std::size_t event_extent_ = 1;
  std::size_t region_extent_ = 1;
  std::vector<std::unordered_map<std::string, std::size_t>> level_index_;
};

// Structural decomposition: result(t, e, r) = table[t][column(e, r)].
DataCuboid cuboid_from_table(const SeriesTable& table, const StructuralSchema& schema);

// Flatten back to a table. Columns follow `column_labels` when given,
// otherwise the schema's label order (event major, region minor).
SeriesTable table_from_cuboid(const DataCuboid& cuboid, const StructuralSchema& schema,
                              std::vector<std::string> timestamps,
                              std::vector<std::string> column_labels = {});

}  // namespace csnet
