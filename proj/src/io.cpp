#include "lrkb/io.hpp"

#include <charconv>
#include <cmath>

#include "lrkb/errors.hpp"

namespace lrkb {

namespace {

int significant_digits(const char* begin, const char* end) {
  int first = -1, last = -1, index = 0;
  for (const char* c = begin; c != end && *c != 'e'; ++c) {
    if (*c < '0' || *c > '9') continue;
    if (*c != '0') {
      if (first < 0) first = index;
      last = index;
    }
    ++index;
  }
  return first < 0 ? 1 : last - first + 1;
}

void indent(std::string& out, int level) { out.append(static_cast<std::size_t>(2 * level), ' '); }

void dump_into(std::string& out, const Json& j, int level) {
  switch (j.type()) {
    case Json::value_t::object: {
      if (j.empty()) {
        out += "{}";
        return;
      }
      out += "{\n";
      bool first = true;
      for (const auto& [key, value] : j.items()) {
        if (!first) out += ",\n";
        first = false;
        indent(out, level + 1);
        out += Json(key).dump();
        out += ": ";
        dump_into(out, value, level + 1);
      }
      out += '\n';
      indent(out, level);
      out += '}';
      return;
    }
    case Json::value_t::array: {
      if (j.empty()) {
        out += "[]";
        return;
      }
      // Arrays of scalars stay on one line; that keeps matrices readable.
      bool flat = true;
      for (const auto& v : j)
        if (v.is_structured()) flat = false;
      if (flat) {
        out += '[';
        bool first = true;
        for (const auto& v : j) {
          if (!first) out += ", ";
          first = false;
          dump_into(out, v, level + 1);
        }
        out += ']';
        return;
      }
      out += "[\n";
      bool first = true;
      for (const auto& v : j) {
        if (!first) out += ",\n";
        first = false;
        indent(out, level + 1);
        dump_into(out, v, level + 1);
      }
      out += '\n';
      indent(out, level);
      out += ']';
      return;
    }
    case Json::value_t::number_float: {
      const double v = j.get<double>();
      out += std::isfinite(v) ? format_double(v) : std::string("null");
      return;
    }
    default:
      out += j.dump();
  }
}

std::ofstream open_out(const std::filesystem::path& path, std::ios::openmode mode) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, mode);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  return out;
}

}  // namespace

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  // The plain overload minimizes characters, which for large integral values
  // means all digits in fixed notation. Keep it only when it carries no more
  // significant digits than the scientific form.
  char plain[64], sci[64];
  const char* plain_end = std::to_chars(plain, plain + sizeof plain, v).ptr;
  const char* sci_end = std::to_chars(sci, sci + sizeof sci, v, std::chars_format::scientific).ptr;
  if (significant_digits(plain, plain_end) > significant_digits(sci, sci_end))
    return std::string(sci, static_cast<std::size_t>(sci_end - sci));
  return std::string(plain, static_cast<std::size_t>(plain_end - plain));
}

std::string dump_json(const Json& j) {
  std::string out;
  dump_into(out, j, 0);
  out += '\n';
  return out;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out = open_out(path, std::ios::binary);
  out << text;
}

void write_json(const std::filesystem::path& path, const Json& j) { write_text(path, dump_json(j)); }

void append_binary(std::ofstream& out, const Matrix& m) {
  for (Index i = 0; i < m.rows(); ++i)
    for (Index k = 0; k < m.cols(); ++k) {
      const double v = m(i, k);
      out.write(reinterpret_cast<const char*>(&v), sizeof v);
    }
}

void write_binary(const std::filesystem::path& path, const std::vector<Matrix>& matrices) {
  std::ofstream out = open_out(path, std::ios::binary);
  for (const Matrix& m : matrices) append_binary(out, m);
}

Json to_json(const Matrix& m) {
  Json rows = Json::array();
  for (Index i = 0; i < m.rows(); ++i) {
    Json row = Json::array();
    for (Index k = 0; k < m.cols(); ++k) row.push_back(m(i, k));
    rows.push_back(std::move(row));
  }
  return rows;
}

Json to_json(const Vector& v) {
  Json out = Json::array();
  for (Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
  return out;
}

Json to_json(const Complex& z) { return Json::array({z.real(), z.imag()}); }

Json to_json(const CVector& v) {
  Json out = Json::array();
  for (Index i = 0; i < v.size(); ++i) out.push_back(to_json(v[i]));
  return out;
}

CsvWriter::CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header)
    : out_(open_out(path, std::ios::binary)) {
  for (std::size_t i = 0; i < header.size(); ++i) out_ << (i ? "," : "") << header[i];
  out_ << '\n';
}

void CsvWriter::row(const std::vector<double>& values) {
  for (std::size_t i = 0; i < values.size(); ++i) out_ << (i ? "," : "") << format_double(values[i]);
  out_ << '\n';
}

void CsvWriter::row(const std::vector<double>& values, const std::string& tail) {
  for (const double v : values) out_ << format_double(v) << ',';
  out_ << tail << '\n';
}

}  // namespace lrkb
