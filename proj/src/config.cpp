#include "otcrf/config.hpp"

#include <filesystem>
#include <fstream>
#include <istream>
#include <set>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "otcrf/error.hpp"

namespace otcrf {

namespace {

using nlohmann::json;

std::string strip(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

json parse_value(const std::string& value) {
  try {
    return json::parse(value);
  } catch (const json::exception&) {
    return json(value);
  }
}

template <class T>
T get(const json& v, const std::string& where, const std::string& key) {
  try {
    return v.get<T>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, fmt::format("{}: bad value for '{}': {}", where, key, e.what()));
  }
}

std::vector<RhoTerm> parse_rho(const json& v, const std::string& where) {
  std::vector<RhoTerm> out;
  if (!v.is_array()) throw Error(ErrorCode::ParseError, where + ": rho must be a list of [amp, [k...]] terms");
  for (const auto& term : v) {
    if (!term.is_array() || term.size() != 2 || !term[0].is_number() || !term[1].is_array())
      throw Error(ErrorCode::ParseError, where + ": rho term must be [amp, [k...]]");
    out.push_back({term[0].get<double>(), get<std::vector<int>>(term[1], where, "rho")});
  }
  return out;
}

}  // namespace

std::vector<PlotSpec> default_plots() {
  return {
      {"sup_phi", true, {-1.0}},
      {"sup_phi_plus_phidot", true, {-1.0, -0.25}},
      {"c0_distance", true, {-0.125}},
      {"volume_dev", true, {-1.0}},
      {"leaf_scale", true, {-0.5}},
      {"calabi", true, {}},
      {"max_tr_ref_omega", false, {}},
      {"r_min", false, {}},
  };
}

RunConfig parse_run_config(std::istream& in, const std::string& source, const std::string& base_dir) {
  RunConfig cfg;
  std::string section, line, field;
  std::set<std::string> seen_sections;
  PlotSpec* plot = nullptr;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = strip(line);
    if (line.empty()) continue;
    const std::string where = fmt::format("{}:{}", source, lineno);
    if (line.front() == '[') {
      if (line.back() != ']') throw Error(ErrorCode::ParseError, where + ": unterminated section header");
      section = strip(line.substr(1, line.size() - 2));
      if (!seen_sections.insert(section).second)
        throw Error(ErrorCode::ParseError, fmt::format("{}: duplicate section [{}]", where, section));
      plot = nullptr;
      if (section.rfind("plot.", 0) == 0) {
        const std::string series = section.substr(5);
        bool known = false;
        for (const auto& n : ObservableRecord::names()) known = known || n == series;
        if (!known) throw Error(ErrorCode::UnknownSeries, fmt::format("{}: unknown series '{}'", where, series));
        cfg.plots.push_back({series, true, {}});
        plot = &cfg.plots.back();
      } else if (section != "run" && section != "grid" && section != "time" && section != "initial" &&
                 section != "reference" && section != "verify") {
        throw Error(ErrorCode::ParseError, fmt::format("{}: unknown section [{}]", where, section));
      }
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw Error(ErrorCode::ParseError, where + ": expected key = value");
    if (section.empty()) throw Error(ErrorCode::ParseError, where + ": key outside of any section");
    const std::string key = strip(line.substr(0, eq));
    const json v = parse_value(strip(line.substr(eq + 1)));
    const std::string full = section + "." + key;
    auto unknown = [&] { throw Error(ErrorCode::ParseError, fmt::format("{}: unknown key '{}'", where, full)); };

    if (plot) {
      if (key == "log_y") plot->log_y = get<bool>(v, where, key);
      else if (key == "slopes") plot->slopes = get<std::vector<double>>(v, where, key);
      else unknown();
    } else if (section == "run") {
      if (key == "name") cfg.name = get<std::string>(v, where, key);
      else if (key == "field") field = get<std::string>(v, where, key);
      else unknown();
    } else if (section == "grid") {
      if (key == "N") cfg.flow.N = get<int>(v, where, key);
      else unknown();
    } else if (section == "time") {
      if (key == "t_end") cfg.flow.t_end = get<double>(v, where, key);
      else if (key == "stride") cfg.flow.stride = get<double>(v, where, key);
      else if (key == "scheme") cfg.flow.scheme = parse_scheme(get<std::string>(v, where, key));
      else if (key == "cfl") cfg.flow.cfl = get<double>(v, where, key);
      else if (key == "dt_max") cfg.flow.dt_max = get<double>(v, where, key);
      else if (key == "fixed_dt") cfg.flow.fixed_dt = get<double>(v, where, key);
      else unknown();
    } else if (section == "initial") {
      if (key == "rho") cfg.flow.rho = parse_rho(v, where);
      else unknown();
    } else if (section == "reference") {
      if (key == "kind") cfg.flow.reference.kind = get<std::string>(v, where, key);
      else if (key == "alpha_amp") cfg.flow.reference.alpha_amp = get<double>(v, where, key);
      else if (key == "beta_amp") cfg.flow.reference.beta_amp = get<double>(v, where, key);
      else unknown();
    } else if (section == "verify") {
      auto& vs = cfg.verify;
      if (key == "window_start") vs.bounds.window_start = get<double>(v, where, key);
      else if (key == "bounded_factor") vs.bounds.bounded_factor = get<double>(v, where, key);
      else if (key == "calabi_reference_time") vs.bounds.calabi_reference_time = get<double>(v, where, key);
      else if (key == "delta") vs.delta = get<double>(v, where, key);
      else if (key == "fiber_bound") vs.fiber_bound = get<int>(v, where, key);
      else if (key == "threshold") vs.threshold = get<double>(v, where, key);
      else if (key == "pairs") vs.pairs = get<int>(v, where, key);
      else if (key == "seed") vs.seed = get<unsigned>(v, where, key);
      else if (key == "stencil_radius") vs.stencil_radius = get<int>(v, where, key);
      else unknown();
    }
  }
  if (field.empty()) throw Error(ErrorCode::ParseError, source + ": missing [run] field");
  const std::filesystem::path fp(field);
  cfg.field_path = fp.is_absolute() ? fp.string() : (std::filesystem::path(base_dir) / fp).lexically_normal().string();
  if (cfg.name.empty()) cfg.name = std::filesystem::path(source).stem().string();
  if (cfg.plots.empty()) cfg.plots = default_plots();

  validate_config(cfg.flow);
  const auto& vs = cfg.verify;
  if (!(vs.delta > 0.0)) throw Error(ErrorCode::ConfigError, "verify.delta must be positive");
  if (vs.fiber_bound < 1) throw Error(ErrorCode::ConfigError, "verify.fiber_bound must be at least 1");
  if (!(vs.threshold > 0.0)) throw Error(ErrorCode::ConfigError, "verify.threshold must be positive");
  if (vs.pairs < 1) throw Error(ErrorCode::ConfigError, "verify.pairs must be at least 1");
  if (vs.stencil_radius < 1) throw Error(ErrorCode::ConfigError, "verify.stencil_radius must be at least 1");
  if (!(vs.bounds.bounded_factor >= 1.0)) throw Error(ErrorCode::ConfigError, "verify.bounded_factor must be >= 1");
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::MissingInput, "cannot open run file " + path);
  return parse_run_config(in, path, std::filesystem::path(path).parent_path().string());
}

}  // namespace otcrf
