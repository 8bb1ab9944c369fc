#include "isoeffect/csv.hpp"

#include "isoeffect/error.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <system_error>
#include <unistd.h>

namespace isoeffect {

std::optional<std::size_t> CsvTable::column(const std::string& name) const {
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == name) return i;
  return std::nullopt;
}

CsvTable parse_csv(const std::string& text) {
  std::vector<std::vector<std::string>> records;
  std::vector<std::string> record;
  std::string field;
  bool in_quotes = false;
  bool field_started = false;
  std::size_t i = 0;
  // Skip a UTF-8 byte order mark.
  if (text.size() >= 3 && text.compare(0, 3, "\xEF\xBB\xBF") == 0) i = 3;

  auto end_field = [&] {
    record.push_back(std::move(field));
    field.clear();
    field_started = false;
  };
  auto end_record = [&] {
    end_field();
    if (!(record.size() == 1 && record[0].empty())) records.push_back(std::move(record));
    record.clear();
  };

  for (; i < text.size(); ++i) {
    const char c = text[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        field.push_back(c);
      }
      continue;
    }
    if (c == '"' && !field_started) {
      in_quotes = true;
      field_started = true;
    } else if (c == ',') {
      end_field();
    } else if (c == '\r') {
      // CRLF line endings; a lone CR is dropped.
    } else if (c == '\n') {
      end_record();
    } else {
      field.push_back(c);
      field_started = true;
    }
  }
  if (in_quotes) throw ValidationError("core", "unterminated quoted field in CSV input");
  if (!field.empty() || !record.empty()) end_record();

  CsvTable table;
  if (records.empty()) throw SchemaError("core", "CSV input has no header row");
  table.header = std::move(records.front());
  for (std::size_t r = 1; r < records.size(); ++r) {
    if (records[r].size() != table.header.size())
      throw ValidationError("core", "row " + std::to_string(r) + " has " +
                                        std::to_string(records[r].size()) + " fields, header has " +
                                        std::to_string(table.header.size()),
                            r);
    table.rows.push_back(std::move(records[r]));
  }
  return table;
}

CsvTable read_csv_table(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("core", "cannot open '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_csv(buf.str());
}

CsvSchema CsvSchema::from_json(const nlohmann::json& j) {
  CsvSchema s;
  if (!j.is_object()) throw SchemaError("core", "schema config must be a JSON object");
  if (j.contains("outcome")) s.outcome = j.at("outcome").get<std::string>();
  if (j.contains("treatment")) s.treatment = j.at("treatment").get<std::string>();
  if (j.contains("feature_prefix")) s.feature_prefix = j.at("feature_prefix").get<std::string>();
  if (j.contains("feature_columns"))
    s.feature_columns = j.at("feature_columns").get<std::vector<std::string>>();
  if (j.contains("text") && !j.at("text").is_null()) s.text = j.at("text").get<std::string>();
  return s;
}

CsvSchema CsvSchema::from_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("core", "cannot open schema '" + path.string() + "'");
  try {
    return from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError("core", std::string("invalid schema JSON: ") + e.what());
  }
}

nlohmann::json CsvSchema::to_json() const {
  nlohmann::json j{{"outcome", outcome}, {"treatment", treatment}};
  if (feature_columns.empty())
    j["feature_prefix"] = feature_prefix;
  else
    j["feature_columns"] = feature_columns;
  if (text) j["text"] = *text;
  return j;
}

std::optional<double> parse_double(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  if (s.empty()) return std::nullopt;
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

std::string format_roundtrip(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

std::string csv_escape(const std::string& field) {
  if (field.find_first_of(",\"\n\r") == std::string::npos) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

std::vector<std::string> select_feature_columns(const CsvTable& table, const CsvSchema& schema) {
  std::vector<std::string> cols;
  if (!schema.feature_columns.empty()) {
    for (const auto& c : schema.feature_columns) {
      if (!table.column(c)) throw SchemaError("core", "missing feature column '" + c + "'");
      cols.push_back(c);
    }
    return cols;
  }
  for (const auto& h : table.header) {
    if (h == schema.outcome || h == schema.treatment) continue;
    if (schema.text && h == *schema.text) continue;
    if (!schema.feature_prefix.empty() && h.rfind(schema.feature_prefix, 0) == 0) cols.push_back(h);
  }
  return cols;
}

double cell_number(const CsvTable& table, std::size_t r, std::size_t c) {
  auto v = parse_double(table.rows[r][c]);
  const std::size_t row_no = r + 1;
  if (!v)
    throw ValidationError("core", "non-numeric value '" + table.rows[r][c] + "' in column '" +
                                      table.header[c] + "' at row " + std::to_string(row_no),
                          row_no);
  if (!std::isfinite(*v))
    throw ValidationError("core", "non-finite value in column '" + table.header[c] + "' at row " +
                                      std::to_string(row_no),
                          row_no);
  return *v;
}

Dataset dataset_from_table(const CsvTable& table, const CsvSchema& schema) {
  auto y_col = table.column(schema.outcome);
  if (!y_col) throw SchemaError("core", "missing outcome column '" + schema.outcome + "'");
  auto a_col = table.column(schema.treatment);
  if (!a_col) throw SchemaError("core", "missing treatment column '" + schema.treatment + "'");
  std::optional<std::size_t> text_col;
  if (schema.text) {
    text_col = table.column(*schema.text);
    if (!text_col) throw SchemaError("core", "missing text column '" + *schema.text + "'");
  }
  const auto names = select_feature_columns(table, schema);
  if (names.empty() && !text_col)
    throw SchemaError("core", "schema selects no feature columns and no text column");
  std::vector<std::size_t> feat_idx;
  for (const auto& nm : names) feat_idx.push_back(*table.column(nm));

  const std::size_t n = table.rows.size();
  if (n == 0) throw ValidationError("core", "CSV input has no data rows");
  std::vector<double> y(n);
  Treatment a(n);
  Matrix x(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(names.size()));
  std::optional<std::vector<std::string>> texts;
  if (text_col) texts.emplace(n);
  for (std::size_t r = 0; r < n; ++r) {
    y[r] = cell_number(table, r, *y_col);
    const double av = cell_number(table, r, *a_col);
    if (av != 0.0 && av != 1.0)
      throw ValidationError("core", "treatment value '" + table.rows[r][*a_col] +
                                        "' is not binary at row " + std::to_string(r + 1),
                            r + 1);
    a[r] = static_cast<int>(av);
    for (std::size_t j = 0; j < feat_idx.size(); ++j)
      x(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j)) =
          cell_number(table, r, feat_idx[j]);
    if (text_col) (*texts)[r] = table.rows[r][*text_col];
  }
  return Dataset(std::move(y), std::move(a), std::move(x), names, std::move(texts));
}

Dataset load_csv(const std::filesystem::path& path, const CsvSchema& schema) {
  return dataset_from_table(read_csv_table(path), schema);
}

Matrix load_feature_matrix(const std::filesystem::path& path, const std::vector<std::string>& columns) {
  const auto table = read_csv_table(path);
  std::vector<std::size_t> idx;
  for (const auto& c : columns) {
    auto ci = table.column(c);
    if (!ci) throw SchemaError("core", "missing feature column '" + c + "' in '" + path.string() + "'");
    idx.push_back(*ci);
  }
  Matrix x(static_cast<Eigen::Index>(table.rows.size()), static_cast<Eigen::Index>(idx.size()));
  for (std::size_t r = 0; r < table.rows.size(); ++r)
    for (std::size_t j = 0; j < idx.size(); ++j)
      x(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j)) = cell_number(table, r, idx[j]);
  return x;
}

void write_file_atomic(const std::filesystem::path& path, const std::string& contents) {
  auto tmp = path;
  tmp += ".tmp." + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("core", "cannot write '" + tmp.string() + "'");
    out << contents;
    out.flush();
    if (!out) throw IoError("core", "write failed for '" + tmp.string() + "'");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp);
    throw IoError("core", "cannot move output into place at '" + path.string() + "': " + ec.message());
  }
}

void write_csv(const std::filesystem::path& path, const Dataset& data, const std::string& text_column) {
  std::string out = "y,a";
  for (const auto& nm : data.feature_names()) out += "," + csv_escape(nm);
  if (data.texts()) out += "," + csv_escape(text_column);
  out += "\n";
  const auto& x = data.features();
  for (std::size_t i = 0; i < data.size(); ++i) {
    out += format_roundtrip(data.y()[i]);
    out += data.a()[i] ? ",1" : ",0";
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      out += ',';
      out += format_roundtrip(x(static_cast<Eigen::Index>(i), j));
    }
    if (data.texts()) out += "," + csv_escape((*data.texts())[i]);
    out += '\n';
  }
  write_file_atomic(path, out);
}

}  // namespace isoeffect
