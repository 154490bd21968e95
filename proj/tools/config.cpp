#include "config.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <string>

namespace brpsync::cli {
namespace {

[[noreturn]] void config_error(const std::string& what) { throw Error(ErrorCode::config, what); }

bool compatible(const Json& target, const Json& value) {
  if (target.is_number()) {
    if (!value.is_number()) return false;
    if (target.is_number_integer()) {
      const double v = value.get<double>();
      return std::isfinite(v) && std::floor(v) == v;
    }
    return true;
  }
  return target.type() == value.type();
}

Json coerce(const Json& target, const Json& value) {
  if (target.is_number_unsigned()) {
    if (value.get<double>() < 0) config_error("expected a nonnegative integer");
    return value.get<std::uint64_t>();
  }
  if (target.is_number_integer()) return value.get<std::int64_t>();
  return value;
}

std::string join(const std::string& where, const std::string& key) {
  return where.empty() ? key : where + "." + key;
}

double to_double(std::string_view text) {
  const std::string s(text);
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size() || !std::isfinite(v)) {
    config_error("invalid SNR value '" + s + "'");
  }
  return v;
}

int get_int(const Json& j, const char* key) { return j.at(key).get<int>(); }

}  // namespace

Json default_config() {
  const channel::SystemConfig sys;
  const experiments::ExperimentConfig exp;
  Json c;
  c["system"] = {{"block_length", sys.block_length}, {"num_blocks", sys.num_blocks},
                 {"num_taps", sys.num_taps},         {"tau_rms", sys.tau_rms},
                 {"f0", sys.f0},                     {"f1", sys.f1},
                 {"f2", sys.f2},                     {"snr_db", sys.snr_db}};
  c["preamble"] = {{"mode", std::string(experiments::to_string(exp.mode))},
                   {"theta_policy", "optimal"}};
  c["sweep"] = {{"snr_db", exp.snr_grid_db},
                {"trials", exp.trials},
                {"seed", exp.master_seed},
                {"threads", exp.threads},
                {"mle_grid_points", exp.mle_grid_points},
                {"mle_domain", std::string(estimation::to_string(exp.mle_domain))},
                {"gamma_samples", exp.gamma_samples},
                {"run_estimators", exp.run_estimators},
                {"output_prefix", exp.output_prefix}};
  c["tables"] = {{"block_counts", {3, 4, 5, 6}},
                 {"grid_points", 1001},
                 {"heuristic_block_counts", {4, 6, 8, 10, 12}}};
  c["gamma"] = {{"samples", 10000}, {"seed", std::uint64_t{7}}};
  c["bounds"] = {{"gamma_samples", 500}, {"emcb_trials", 200}, {"seed", std::uint64_t{3}}};
  return c;
}

void merge_strict(Json& base, const Json& overlay, const std::string& where) {
  if (!overlay.is_object()) config_error("section '" + where + "' must be an object");
  for (auto it = overlay.begin(); it != overlay.end(); ++it) {
    const std::string path = join(where, it.key());
    if (!base.contains(it.key())) config_error("unknown config key '" + path + "'");
    Json& target = base[it.key()];
    if (target.is_object()) {
      merge_strict(target, it.value(), path);
    } else if (!compatible(target, it.value())) {
      config_error("config key '" + path + "' has the wrong type");
    } else {
      target = coerce(target, it.value());
    }
  }
}

Json load_config(const std::optional<std::filesystem::path>& path) {
  Json config = default_config();
  if (!path) return config;
  std::ifstream in(*path);
  if (!in) config_error("cannot open config file '" + path->string() + "'");
  Json file;
  try {
    file = Json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    config_error("config file '" + path->string() + "' is not valid JSON: " + e.what());
  }
  merge_strict(config, file);
  return config;
}

void apply_override(Json& config, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos || eq == 0) {
    config_error("override '" + std::string(assignment) + "' is not of the form key=value");
  }
  const std::string key(assignment.substr(0, eq));
  const std::string text(assignment.substr(eq + 1));
  Json value;
  try {
    value = Json::parse(text);
  } catch (const nlohmann::json::parse_error&) {
    value = text;
  }
  // Build the nested overlay {"a": {"b": value}} and merge it strictly.
  Json overlay = value;
  std::string rest = key;
  std::vector<std::string> parts;
  for (std::size_t dot; (dot = rest.find('.')) != std::string::npos; rest = rest.substr(dot + 1)) {
    parts.push_back(rest.substr(0, dot));
  }
  parts.push_back(rest);
  for (auto it = parts.rbegin(); it != parts.rend(); ++it) {
    if (it->empty()) config_error("override key '" + key + "' has an empty component");
    overlay = Json{{*it, overlay}};
  }
  merge_strict(config, overlay);
}

std::vector<double> parse_snr_grid(std::string_view text) {
  std::vector<double> grid;
  if (text.find(':') != std::string_view::npos) {
    std::vector<double> parts;
    std::size_t start = 0;
    while (true) {
      const auto colon = text.find(':', start);
      parts.push_back(to_double(text.substr(start, colon - start)));
      if (colon == std::string_view::npos) break;
      start = colon + 1;
    }
    if (parts.size() != 3) config_error("SNR range must be start:step:stop");
    const double lo = parts[0];
    const double step = parts[1];
    const double hi = parts[2];
    if (!(step > 0.0) || hi < lo) config_error("SNR range needs step > 0 and stop >= start");
    const auto count = static_cast<long>(std::floor((hi - lo) / step + 1e-9)) + 1;
    if (count > 100000) config_error("SNR range has too many points");
    for (long i = 0; i < count; ++i) grid.push_back(lo + step * static_cast<double>(i));
  } else {
    std::size_t start = 0;
    while (true) {
      const auto comma = text.find(',', start);
      grid.push_back(to_double(text.substr(start, comma - start)));
      if (comma == std::string_view::npos) break;
      start = comma + 1;
    }
  }
  return grid;
}

channel::SystemConfig system_from(const Json& config) {
  const Json& s = config.at("system");
  channel::SystemConfig sys;
  sys.block_length = get_int(s, "block_length");
  sys.num_blocks = get_int(s, "num_blocks");
  sys.num_taps = get_int(s, "num_taps");
  sys.tau_rms = s.at("tau_rms").get<double>();
  sys.f0 = s.at("f0").get<double>();
  sys.f1 = s.at("f1").get<double>();
  sys.f2 = s.at("f2").get<double>();
  sys.snr_db = s.at("snr_db").get<double>();
  return sys;
}

experiments::ExperimentConfig experiment_from(const Json& config) {
  experiments::ExperimentConfig exp;
  exp.system = system_from(config);
  exp.mode = experiments::parse_preamble_mode(config.at("preamble").at("mode").get<std::string>());
  const Json& s = config.at("sweep");
  exp.snr_grid_db.clear();
  for (const auto& v : s.at("snr_db")) {
    if (!v.is_number()) config_error("sweep.snr_db must be a list of numbers");
    exp.snr_grid_db.push_back(v.get<double>());
  }
  exp.trials = get_int(s, "trials");
  exp.master_seed = s.at("seed").get<std::uint64_t>();
  exp.threads = get_int(s, "threads");
  exp.mle_grid_points = get_int(s, "mle_grid_points");
  const auto domain = s.at("mle_domain").get<std::string>();
  if (domain == "filtered") {
    exp.mle_domain = estimation::MleDomain::filtered;
  } else if (domain == "received") {
    exp.mle_domain = estimation::MleDomain::received;
  } else {
    config_error("sweep.mle_domain must be 'filtered' or 'received'");
  }
  exp.gamma_samples = get_int(s, "gamma_samples");
  exp.run_estimators = s.at("run_estimators").get<bool>();
  exp.output_prefix = s.at("output_prefix").get<std::string>();
  if (exp.output_prefix.empty() || exp.output_prefix.find('/') != std::string::npos) {
    config_error("sweep.output_prefix must be a plain file name prefix");
  }
  exp.validate();
  return exp;
}

Json number(double value) {
  if (std::isnan(value)) return "nan";
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.8e", value);
  return std::strtod(buf, nullptr);
}

}  // namespace brpsync::cli
