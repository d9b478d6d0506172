#include "lrkb/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <vector>

#include "json.hpp"
#include "lrkb/errors.hpp"

namespace lrkb {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& origin, const std::string& field, const std::string& what) {
  throw ConfigError(origin + ": field '" + field + "': " + what);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

json parse_text(const std::string& text, const std::string& origin) {
  // Duplicate keys would silently keep the last value; reject them instead.
  std::vector<std::set<std::string>> open_objects;
  std::string duplicate;
  auto callback = [&](int, json::parse_event_t event, json& parsed) {
    if (event == json::parse_event_t::object_start) {
      open_objects.emplace_back();
    } else if (event == json::parse_event_t::object_end) {
      open_objects.pop_back();
    } else if (event == json::parse_event_t::key && !open_objects.empty()) {
      const std::string key = parsed.get<std::string>();
      if (!open_objects.back().insert(key).second && duplicate.empty()) duplicate = key;
    }
    return true;
  };
  try {
    json j = json::parse(text, callback);
    if (!duplicate.empty()) fail(origin, duplicate, "given more than once");
    return j;
  } catch (const json::parse_error& e) {
    // e.byte is 1-based and points just past the offending character.
    const std::size_t at = e.byte == 0 ? 0 : std::min<std::size_t>(e.byte - 1, text.size());
    std::size_t line = 1, column = 1;
    for (std::size_t i = 0; i < at; ++i) {
      if (text[i] == '\n') {
        ++line;
        column = 1;
      } else {
        ++column;
      }
    }
    std::ostringstream os;
    os << origin << ":" << line << ":" << column << ": syntax error: " << e.what();
    throw ConfigError(os.str());
  }
}

double number(const json& v, const std::string& origin, const std::string& field) {
  if (!v.is_number()) fail(origin, field, "expected a number");
  return v.get<double>();
}

double positive(const json& v, const std::string& origin, const std::string& field) {
  const double x = number(v, origin, field);
  if (!(x > 0.0) || !std::isfinite(x)) fail(origin, field, "must be a positive finite number");
  return x;
}

std::uint64_t unsigned_int(const json& v, const std::string& origin, const std::string& field) {
  if (v.is_number_unsigned()) return v.get<std::uint64_t>();
  if (v.is_number_integer() && v.get<std::int64_t>() >= 0) return v.get<std::uint64_t>();
  fail(origin, field, "expected a non-negative integer");
}

bool boolean(const json& v, const std::string& origin, const std::string& field) {
  if (!v.is_boolean()) fail(origin, field, "expected true or false");
  return v.get<bool>();
}

Matrix matrix(const json& v, const std::string& origin, const std::string& field) {
  if (v.is_number()) return Matrix::Constant(1, 1, v.get<double>());
  if (!v.is_array() || v.empty()) fail(origin, field, "expected a non-empty array of rows");
  const std::size_t rows = v.size();
  if (!v[0].is_array() || v[0].empty()) fail(origin, field + "[0]", "expected a non-empty row");
  const std::size_t cols = v[0].size();
  Matrix m(static_cast<Index>(rows), static_cast<Index>(cols));
  for (std::size_t i = 0; i < rows; ++i) {
    const std::string row_name = field + "[" + std::to_string(i) + "]";
    if (!v[i].is_array()) fail(origin, row_name, "expected a row array");
    if (v[i].size() != cols) {
      std::ostringstream os;
      os << "row has " << v[i].size() << " entries, expected " << cols;
      fail(origin, row_name, os.str());
    }
    for (std::size_t k = 0; k < cols; ++k)
      m(static_cast<Index>(i), static_cast<Index>(k)) =
          number(v[i][k], origin, row_name + "[" + std::to_string(k) + "]");
  }
  return m;
}

Vector vector(const json& v, const std::string& origin, const std::string& field) {
  if (!v.is_array()) fail(origin, field, "expected an array of numbers");
  Vector out(static_cast<Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i)
    out[static_cast<Index>(i)] = number(v[i], origin, field + "[" + std::to_string(i) + "]");
  return out;
}

void check_keys(const json& obj, const std::set<std::string>& allowed, const std::string& origin,
                const std::string& prefix) {
  for (const auto& [key, _] : obj.items())
    if (!allowed.count(key)) fail(origin, prefix + key, "unknown field");
}

LtiSystem system_from(const json& obj, const std::string& origin, const std::string& prefix) {
  for (const char* key : {"A", "G", "C", "H"})
    if (!obj.contains(key)) fail(origin, prefix + key, "missing");
  LtiSystem sys;
  sys.a = matrix(obj["A"], origin, prefix + "A");
  sys.g = matrix(obj["G"], origin, prefix + "G");
  sys.c = matrix(obj["C"], origin, prefix + "C");
  sys.h = matrix(obj["H"], origin, prefix + "H");
  try {
    return validate(sys);
  } catch (const Error& e) {
    throw ConfigError(origin + ": system: " + e.what());
  }
}

void rank_from(const json& v, ScenarioConfig& cfg, const std::string& origin) {
  if (v.is_string()) {
    if (v.get<std::string>() != "auto") fail(origin, "rank", "expected an integer or \"auto\"");
    cfg.rank.reset();
    return;
  }
  if (!v.is_number_integer()) fail(origin, "rank", "expected an integer or \"auto\"");
  const auto r = v.get<std::int64_t>();
  if (r < 1) fail(origin, "rank", "must be at least 1");
  cfg.rank = static_cast<int>(r);
}

const std::set<std::string> kSystemKeys{"A", "G", "C", "H", "seed", "rank", "horizon", "dt",
                                        "name", "description"};
const std::set<std::string> kScenarioKeys{
    "A",           "G",          "C",          "H",          "system",        "rank",
    "epsilon",     "dt",         "dt_sim",     "t_max",      "horizon",       "oja_t_max",
    "seed",        "n_paths",    "output_dir", "x0",         "initial_cov",   "r0",
    "record_stride", "unstable_threshold",     "co_integrate_oja",            "threads",
    "verify",      "name",       "description"};

}  // namespace

ScenarioConfig parse_scenario(const std::string& text, const std::string& origin,
                              const std::filesystem::path& base_dir) {
  const json root = parse_text(text, origin);
  if (!root.is_object()) throw ConfigError(origin + ": top level must be a JSON object");
  check_keys(root, kScenarioKeys, origin, "");
  ScenarioConfig cfg;

  // System: inline at the top level, as an object, or as a path to a system file.
  json fallbacks = json::object();
  const bool inline_top = root.contains("A") || root.contains("G") || root.contains("C") ||
                          root.contains("H");
  if (inline_top && root.contains("system"))
    fail(origin, "system", "give either top-level A/G/C/H or a system entry, not both");
  if (inline_top) {
    cfg.system = system_from(root, origin, "");
    cfg.has_system = true;
  } else if (root.contains("system")) {
    const json& s = root["system"];
    if (s.is_string()) {
      std::filesystem::path p = s.get<std::string>();
      if (p.is_relative()) p = base_dir / p;
      const std::string sub_origin = p.string();
      const json sub = parse_text(read_file(p), sub_origin);
      if (!sub.is_object()) throw ConfigError(sub_origin + ": top level must be a JSON object");
      check_keys(sub, kSystemKeys, sub_origin, "");
      cfg.system = system_from(sub, sub_origin, "");
      for (const char* key : {"seed", "rank", "horizon", "dt"})
        if (sub.contains(key)) fallbacks[key] = sub[key];
    } else if (s.is_object()) {
      check_keys(s, kSystemKeys, origin, "system.");
      cfg.system = system_from(s, origin, "system.");
      for (const char* key : {"seed", "rank", "horizon", "dt"})
        if (s.contains(key)) fallbacks[key] = s[key];
    } else {
      fail(origin, "system", "expected an object or a file path");
    }
    cfg.has_system = true;
  }

  auto lookup = [&](const char* key) -> const json* {
    if (root.contains(key)) return &root[key];
    if (fallbacks.contains(key)) return &fallbacks[key];
    return nullptr;
  };
  if (root.contains("t_max") && root.contains("horizon"))
    fail(origin, "horizon", "t_max and horizon are synonyms; give only one");

  if (const json* v = lookup("rank")) rank_from(*v, cfg, origin);
  if (const json* v = lookup("seed")) cfg.seed = unsigned_int(*v, origin, "seed");
  if (const json* v = lookup("dt")) cfg.dt = positive(*v, origin, "dt");
  if (root.contains("t_max")) cfg.t_max = positive(root["t_max"], origin, "t_max");
  else if (const json* v = lookup("horizon")) cfg.t_max = positive(*v, origin, "horizon");
  if (root.contains("epsilon")) {
    cfg.epsilon = positive(root["epsilon"], origin, "epsilon");
    if (cfg.epsilon > 1.0) fail(origin, "epsilon", "must lie in (0, 1]");
  }
  if (root.contains("dt_sim")) cfg.dt_sim = positive(root["dt_sim"], origin, "dt_sim");
  if (root.contains("oja_t_max")) cfg.oja_t_max = positive(root["oja_t_max"], origin, "oja_t_max");
  if (root.contains("n_paths")) {
    cfg.n_paths = unsigned_int(root["n_paths"], origin, "n_paths");
    if (cfg.n_paths == 0) fail(origin, "n_paths", "must be at least 1");
  }
  if (root.contains("output_dir")) {
    if (!root["output_dir"].is_string()) fail(origin, "output_dir", "expected a string");
    cfg.output_dir = root["output_dir"].get<std::string>();
  }
  if (root.contains("x0")) cfg.x0 = vector(root["x0"], origin, "x0");
  if (root.contains("initial_cov")) cfg.initial_cov = matrix(root["initial_cov"], origin, "initial_cov");
  if (root.contains("r0")) cfg.r0 = matrix(root["r0"], origin, "r0");
  if (root.contains("record_stride")) {
    cfg.record_stride = static_cast<long>(unsigned_int(root["record_stride"], origin, "record_stride"));
  }
  if (root.contains("unstable_threshold"))
    cfg.unstable_threshold = number(root["unstable_threshold"], origin, "unstable_threshold");
  if (root.contains("co_integrate_oja"))
    cfg.co_integrate_oja = boolean(root["co_integrate_oja"], origin, "co_integrate_oja");
  if (root.contains("threads"))
    cfg.threads = static_cast<unsigned>(unsigned_int(root["threads"], origin, "threads"));
  if (root.contains("verify")) {
    const json& v = root["verify"];
    if (!v.is_object()) fail(origin, "verify", "expected an object");
    check_keys(v, {"systems", "tol_scale"}, origin, "verify.");
    if (v.contains("systems")) {
      cfg.verify_systems = static_cast<int>(unsigned_int(v["systems"], origin, "verify.systems"));
    }
    if (v.contains("tol_scale")) {
      cfg.tol_scale = number(v["tol_scale"], origin, "verify.tol_scale");
      if (!(cfg.tol_scale >= 0.0)) fail(origin, "verify.tol_scale", "must be non-negative");
    }
  }

  if (cfg.has_system) {
    const Index n = cfg.system.n();
    if (cfg.rank && *cfg.rank > n) fail(origin, "rank", "exceeds the state dimension");
    if (cfg.x0 && cfg.x0->size() != n) fail(origin, "x0", "length differs from the state dimension");
    if (cfg.initial_cov && (cfg.initial_cov->rows() != n || cfg.initial_cov->cols() != n))
      fail(origin, "initial_cov", "must be n x n");
    if (cfg.r0 && cfg.rank && (cfg.r0->rows() != *cfg.rank || cfg.r0->cols() != *cfg.rank))
      fail(origin, "r0", "must be rank x rank");
  }
  return cfg;
}

ScenarioConfig load_scenario(const std::filesystem::path& path) {
  const std::filesystem::path base = path.has_parent_path() ? path.parent_path() : ".";
  return parse_scenario(read_file(path), path.string(), base);
}

}  // namespace lrkb
