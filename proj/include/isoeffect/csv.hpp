#pragma once

#include "isoeffect/core.hpp"

#include "json.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace isoeffect {

// Raw RFC 4180 table: header plus string cells. Quoted fields may contain
// commas, quotes ("") and newlines.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  // Index of a header column, or nullopt.
  std::optional<std::size_t> column(const std::string& name) const;
};

CsvTable read_csv_table(const std::filesystem::path& path);
CsvTable parse_csv(const std::string& text);

// Column mapping for load_csv. Feature columns are either listed explicitly
// or selected by prefix, in header order.
struct CsvSchema {
  std::string outcome = "y";
  std::string treatment = "a";
  std::string feature_prefix = "x_";
  std::vector<std::string> feature_columns;
  std::optional<std::string> text;

  static CsvSchema from_json(const nlohmann::json& j);
  static CsvSchema from_file(const std::filesystem::path& path);
  nlohmann::json to_json() const;
};

std::vector<std::string> select_feature_columns(const CsvTable& table, const CsvSchema& schema);

// Finite number in data row r (0-based) and column c; errors cite 1-based rows.
double cell_number(const CsvTable& table, std::size_t r, std::size_t c);

Dataset load_csv(const std::filesystem::path& path, const CsvSchema& schema = {});
Dataset dataset_from_table(const CsvTable& table, const CsvSchema& schema);

// Feature-only matrix (e.g. a target corpus) using the given column names.
Matrix load_feature_matrix(const std::filesystem::path& path, const std::vector<std::string>& columns);

// Writes `y,a,<feature names>[,text]` with shortest round-trip number
// formatting, so that load_csv(write_csv(d)) reproduces d bit-exactly.
void write_csv(const std::filesystem::path& path, const Dataset& data,
               const std::string& text_column = "text");

// Number parsing/formatting helpers shared by the writers.
std::optional<double> parse_double(std::string_view s);
std::string format_roundtrip(double v);
std::string csv_escape(const std::string& field);

// Writes to a sibling temporary file and renames it into place.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);

}  // namespace isoeffect
