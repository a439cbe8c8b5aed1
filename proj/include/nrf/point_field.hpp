#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "nrf/field_dataset.hpp"

namespace nrf::data {

// Named-column numeric table, the payload of the NRFPTS1 text and binary
// formats.
struct PointTable {
  std::vector<std::string> names;
  Matrix data;  // rows x names.size()

  int column(std::string_view name) const;  // -1 when absent
};

enum class TableFormat { Text, Binary };

PointTable parse_point_table(std::string_view bytes, const std::string& source = "<memory>");
PointTable load_point_table(const std::filesystem::path& path);
std::string encode_point_table(const PointTable& t, TableFormat fmt);
void save_point_table(const std::filesystem::path& path, const PointTable& t, TableFormat fmt);
// Binary unless the extension is .txt, .tsv or .dat.
TableFormat format_for_path(const std::filesystem::path& path);

// Columns named x, y, z, t become coordinates (in that order, time last);
// the rest become values unless `value_columns` selects a subset.
FieldDataset table_to_dataset(const PointTable& t, const std::vector<std::string>& value_columns = {});
FieldDataset load_point_field(const std::filesystem::path& path, const std::vector<std::string>& value_columns = {});

}  // namespace nrf::data
