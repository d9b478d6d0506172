#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "lrkb/errors.hpp"
#include "lrkb/io.hpp"
#include "lrkb/rng.hpp"
#include "lrkb/scenario.hpp"

using namespace lrkb;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("lrkb_test_io_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string config_error(const std::string& text) {
  try {
    parse_scenario(text, "cfg.json", ".");
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

// Fewest %.*e digits that read back to v.
int shortest_precision(double v) {
  char buf[64];
  for (int p = 1; p <= 17; ++p) {
    std::snprintf(buf, sizeof buf, "%.*e", p - 1, v);
    if (std::strtod(buf, nullptr) == v) return p;
  }
  return 17;
}

int significant_digits(const std::string& s) {
  std::string digits;
  for (char ch : s.substr(0, s.find('e')))
    if (ch >= '0' && ch <= '9') digits += ch;
  const std::size_t first = digits.find_first_not_of('0');
  if (first == std::string::npos) return 1;
  const std::size_t last = digits.find_last_not_of('0');
  return static_cast<int>(last - first + 1);
}

const char* kScalar = R"("A": [[1]], "G": [[1]], "C": [[1]], "H": [[1]])";

}  // namespace

TEST_CASE("format_double is the shortest round-trip representation") {
  CHECK(format_double(0.1) == "0.1");
  CHECK(format_double(4.0) == "4");
  CHECK(format_double(-2.5) == "-2.5");
  CHECK(format_double(1e6) == "1e+06");
  CHECK(format_double(1.0 + std::sqrt(2.0)) == "2.414213562373095");
  CHECK(format_double(100.0) == "100");
  CHECK(format_double(1234567890123456768.0) == "1.2345678901234568e+18");
  CHECK(format_double(std::nan("")) == "nan");
  CHECK(format_double(-HUGE_VAL) == "-inf");
  NormalStream rng(71, 0);
  for (int k = 0; k < 20000; ++k) {
    const double v = std::ldexp(rng.normal(), static_cast<int>(rng.normal() * 200));
    const std::string s = format_double(v);
    CHECK(std::stod(s) == v);
    CHECK(significant_digits(s) == shortest_precision(v));
  }
}

TEST_CASE("dump_json keeps key order, flattens scalar arrays and nulls non-finite numbers") {
  Json j;
  j["b"] = 1;
  j["a"] = Json::array({0.1, 2.0});
  j["m"] = to_json(Matrix(Matrix::Identity(2, 2)));
  j["bad"] = std::nan("");
  j["s"] = "text";
  const std::string text = dump_json(j);
  CHECK(text ==
        "{\n"
        "  \"b\": 1,\n"
        "  \"a\": [0.1, 2],\n"
        "  \"m\": [\n"
        "    [1, 0],\n"
        "    [0, 1]\n"
        "  ],\n"
        "  \"bad\": null,\n"
        "  \"s\": \"text\"\n"
        "}\n");
  CVector z(1);
  z << Complex(1.5, -0.25);
  CHECK(to_json(z).dump() == "[[1.5,-0.25]]");
}

TEST_CASE("csv and binary writers") {
  const fs::path dir = scratch("writers");
  {
    CsvWriter csv(dir / "sub" / "t.csv", {"t", "x", "label"});
    csv.row({0.0, 0.1});
    csv.row({1.0, 1e-300}, "tag");
  }
  CHECK(slurp(dir / "sub" / "t.csv") == "t,x,label\n0,0.1\n1,1e-300,tag\n");
  Matrix m(2, 2);
  m << 1, 2, 3, 4;
  write_binary(dir / "m.bin", {m, 2 * m});
  const std::string raw = slurp(dir / "m.bin");
  REQUIRE(raw.size() == 8 * sizeof(double));
  double values[8];
  std::memcpy(values, raw.data(), raw.size());
  CHECK(values[1] == 2.0);
  CHECK(values[2] == 3.0);
  CHECK(values[7] == 8.0);
}

TEST_CASE("scenario parsing: inline system, defaults and overrides") {
  const ScenarioConfig c = parse_scenario(std::string("{") + kScalar + R"(, "rank": 1, "seed": 5,
      "dt_sim": 0.01, "t_max": 2, "x0": [3], "verify": {"systems": 4, "tol_scale": 0.5}})", "cfg", ".");
  CHECK(c.has_system);
  CHECK(c.system.n() == 1);
  CHECK(c.rank == 1);
  CHECK(c.seed == 5);
  CHECK(c.dt_sim == 0.01);
  CHECK(c.t_max == 2.0);
  CHECK((*c.x0)(0) == 3.0);
  CHECK(c.verify_systems == 4);
  CHECK(c.tol_scale == 0.5);
  const ScenarioConfig d = parse_scenario(std::string("{") + kScalar + R"(, "rank": "auto"})", "cfg", ".");
  CHECK_FALSE(d.rank.has_value());
  CHECK(d.epsilon == 1.0);
  CHECK(d.n_paths == 1000);
  const ScenarioConfig bare = parse_scenario(R"({"A": 2, "G": 1, "C": 1, "H": 1})", "cfg", ".");
  CHECK(bare.system.a(0, 0) == 2.0);
  CHECK_FALSE(parse_scenario("{}", "cfg", ".").has_system);
}

TEST_CASE("scenario parsing: system files and their fallbacks") {
  const fs::path dir = scratch("system_file");
  std::ofstream(dir / "sys.json") << R"({"A": [[1, 0], [0, -1]], "G": [[1, 0], [0, 1]], "C": [[1, 1]],
      "H": [[1]], "seed": 9, "rank": 1, "horizon": 3})";
  std::ofstream(dir / "run.json") << R"({"system": "sys.json", "seed": 2})";
  const ScenarioConfig c = load_scenario(dir / "run.json");
  CHECK(c.system.n() == 2);
  CHECK(c.seed == 2);
  CHECK(c.rank == 1);
  CHECK(c.t_max == 3.0);
  std::ofstream(dir / "nested.json") << R"({"system": {"A": [[1]], "G": [[1]], "C": [[1]], "H": [[1]]}})";
  CHECK(load_scenario(dir / "nested.json").has_system);
}

TEST_CASE("scenario diagnostics name the line, column or field") {
  CHECK(config_error("{\n  \"A\": [[1]],\n  \"G\": [[1]] oops\n}").find("cfg.json:3:") == 0);
  CHECK(config_error("{\n  \"A\": [[1]],\n  \"G\": [[1]] oops\n}").find("syntax error") != std::string::npos);
  CHECK(config_error(std::string("{") + kScalar + R"(, "rank": 1, "rank": 2})").find("field 'rank': given more than once") != std::string::npos);
  CHECK(config_error(std::string("{") + kScalar + R"(, "colour": 1})").find("'colour'") != std::string::npos);
  CHECK(config_error(R"({"A": [[1]], "G": [[1]], "C": [[1]]})").find("field 'H': missing") != std::string::npos);
  CHECK(config_error(std::string("{") + kScalar + R"(, "rank": 0})").find("field 'rank'") != std::string::npos);
  CHECK(config_error(std::string("{") + kScalar + R"(, "rank": 2})").find("field 'rank'") != std::string::npos);
  CHECK(config_error(std::string("{") + kScalar + R"(, "epsilon": 2})").find("field 'epsilon'") != std::string::npos);
  CHECK(config_error(std::string("{") + kScalar + R"(, "t_max": 1, "horizon": 2})").find("synonyms") != std::string::npos);
  CHECK(config_error(R"({"A": [[1, 2]], "G": [[1]], "C": [[1]], "H": [[1]]})") != "");
  CHECK(config_error(R"({"A": [[1]], "G": [[1]], "C": [[1]], "H": [[0]]})") != "");
  CHECK(config_error(R"({"A": [[1], [1, 2]], "G": [[1]], "C": [[1]], "H": [[1]]})").find("field 'A[1]'") != std::string::npos);
  CHECK(config_error(std::string("{") + kScalar + R"(, "seed": -1})").find("field 'seed'") != std::string::npos);
  CHECK(config_error(std::string("{") + kScalar + R"(, "x0": [1, 2]})").find("field 'x0'") != std::string::npos);
  CHECK(config_error(std::string("{") + kScalar + R"(, "verify": {"tol": 1}})").find("verify.") != std::string::npos);
  CHECK_THROWS_AS(load_scenario("/nonexistent/lrkb.json"), ConfigError);
}
