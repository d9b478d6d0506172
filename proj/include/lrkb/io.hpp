#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "lrkb/common.hpp"

namespace lrkb {

using Json = nlohmann::ordered_json;

/// Shortest decimal string that reads back to the same double. Non-finite
/// values become "nan", "inf" and "-inf".
std::string format_double(double v);

/// Two-space indented JSON with numbers written by format_double. Non-finite
/// numbers are written as null.
std::string dump_json(const Json& j);

void write_text(const std::filesystem::path& path, const std::string& text);
void write_json(const std::filesystem::path& path, const Json& j);

/// Row-major doubles, host byte order, no header.
void append_binary(std::ofstream& out, const Matrix& m);
void write_binary(const std::filesystem::path& path, const std::vector<Matrix>& matrices);

Json to_json(const Matrix& m);     // array of rows
Json to_json(const Vector& v);     // flat array
Json to_json(const CVector& v);    // array of [re, im]
Json to_json(const Complex& z);    // [re, im]

class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header);
  void row(const std::vector<double>& values);
  /// A row whose leading cells are numbers and whose last cell is text.
  void row(const std::vector<double>& values, const std::string& tail);

 private:
  std::ofstream out_;
};

}  // namespace lrkb
