#include "lfv/config.hpp"

#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

namespace lfv {

namespace {

std::string trim(std::string s) {
  s.erase(0, s.find_first_not_of(" \t\r"));
  s.erase(s.find_last_not_of(" \t\r") + 1);
  return s;
}

double to_double(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double out = 0.0;
  try {
    out = std::stod(v, &used);
  } catch (const std::logic_error&) {
    used = 0;
  }
  if (used == 0 || used != v.size()) throw ConfigError("config: '" + key + "' expects a number, got '" + v + "'");
  return out;
}

int to_int(const std::string& key, const std::string& v) {
  const double d = to_double(key, v);
  if (d != static_cast<int>(d)) throw ConfigError("config: '" + key + "' expects an integer, got '" + v + "'");
  return static_cast<int>(d);
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  if (v.empty() || v.find_first_not_of("0123456789") != std::string::npos)
    throw ConfigError("config: '" + key + "' expects a nonnegative integer, got '" + v + "'");
  return std::stoull(v);
}

std::string num(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

void RunConfig::set(const std::string& key, const std::string& value) {
  const std::string& v = value;
  auto& w = fit.weights;
  auto& tw = train.weights;
  if (key == "n_layers") {
    fit.n_layers = train.synthesis.n_layers = train.displacement.n_layers = to_int(key, v);
  } else if (key == "rank") {
    fit.rank = train.synthesis.rank = to_int(key, v);
  } else if (key == "lambda_photo") {
    w.photo = tw.photo = to_double(key, v);
  } else if (key == "lambda_geo") {
    w.geo = tw.geo = to_double(key, v);
  } else if (key == "lambda_temp") {
    w.temp = tw.temp = to_double(key, v);
  } else if (key == "lambda_occ") {
    w.occ = tw.occ = to_double(key, v);
  } else if (key == "lambda_bins") {
    w.bins = tw.bins = to_double(key, v);
  } else if (key == "lambda_tv") {
    w.tv = tw.tv = to_double(key, v);
  } else if (key == "patch_size") {
    train.refinement.patch_size = to_int(key, v);
  } else if (key == "angular_res") {
    angular_res = train.angular_res = to_int(key, v);
  } else if (key == "lr") {
    train.lr = to_double(key, v);
  } else if (key == "epochs") {
    train.epochs = to_int(key, v);
  } else if (key == "seed") {
    seed = fit.seed = train.seed = to_u64(key, v);
  } else if (key == "provider.kind") {
    if (v != "oracle" && v != "files") throw ConfigError("config: provider.kind must be oracle or files, got '" + v + "'");
    provider_kind = v;
  } else if (key == "provider.depth_dir") {
    depth_dir = v;
  } else if (key == "provider.flow_dir") {
    flow_dir = v;
  } else if (key == "iterations") {
    fit.iterations = to_int(key, v);
  } else if (key == "step") {
    fit.step = to_double(key, v);
  } else if (key == "d_step") {
    fit.d_step = to_double(key, v);
  } else if (key == "init") {
    if (v == "uniform")
      fit.init = FitInit::uniform;
    else if (v == "center")
      fit.init = FitInit::center_broadcast;
    else
      throw ConfigError("config: init must be uniform or center, got '" + v + "'");
  } else if (key == "weight_decay") {
    train.weight_decay = to_double(key, v);
  } else if (key == "patience") {
    train.patience = to_int(key, v);
  } else if (key == "crop_height") {
    train.crop_height = to_int(key, v);
  } else if (key == "crop_width") {
    train.crop_width = to_int(key, v);
  } else if (key == "sequence_length") {
    train.sequence_length = to_int(key, v);
  } else if (key == "a_values") {
    std::vector<double> as;
    std::stringstream ss(v);
    std::string cell;
    while (std::getline(ss, cell, ',')) as.push_back(to_double(key, trim(cell)));
    if (as.empty()) throw ConfigError("config: a_values must list at least one value");
    train.a_values = as;
  } else if (key == "b_min") {
    train.b_min = to_double(key, v);
  } else if (key == "b_max") {
    train.b_max = to_double(key, v);
  } else if (key == "base_width") {
    train.synthesis.base_width = to_int(key, v);
  } else if (key == "stages") {
    train.synthesis.stages = to_int(key, v);
  } else if (key == "max_width") {
    train.synthesis.max_width = to_int(key, v);
  } else if (key == "phase") {
    if (v != "selfsup" && v != "refine") throw ConfigError("config: phase must be selfsup or refine, got '" + v + "'");
    // Switching phase resets the phase-specific schedule to its defaults.
    const TrainConfig d = TrainConfig::defaults(v == "selfsup" ? TrainPhase::selfsup : TrainPhase::refine);
    train.phase = d.phase;
    train.epochs = d.epochs;
    train.lr = d.lr;
    train.a_values = d.a_values;
    train.b_min = d.b_min;
    train.b_max = d.b_max;
  } else {
    throw ConfigError("config: unknown key '" + key + "'");
  }
}

std::map<std::string, std::string> RunConfig::resolved() const {
  auto m = train.echo();
  m["iterations"] = std::to_string(fit.iterations);
  m["step"] = num(fit.step);
  m["d_step"] = num(fit.d_step);
  m["init"] = fit.init == FitInit::uniform ? "uniform" : "center";
  m["fit.n_layers"] = std::to_string(fit.n_layers);
  m["fit.rank"] = std::to_string(fit.rank);
  m["fit.lambda_photo"] = num(fit.weights.photo);
  m["fit.lambda_geo"] = num(fit.weights.geo);
  m["fit.lambda_temp"] = num(fit.weights.temp);
  m["fit.lambda_occ"] = num(fit.weights.occ);
  m["fit.lambda_bins"] = num(fit.weights.bins);
  m["fit.lambda_tv"] = num(fit.weights.tv);
  m["angular_res"] = std::to_string(angular_res);
  m["train.angular_res"] = std::to_string(train.angular_res);
  m["provider.kind"] = provider_kind;
  m["provider.depth_dir"] = depth_dir;
  m["provider.flow_dir"] = flow_dir;
  m["seed"] = std::to_string(seed);
  return m;
}

void RunConfig::validate() const {
  try {
    fit.validate();
    train.validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  if (angular_res < 1 || angular_res % 2 == 0) throw ConfigError("config: angular_res must be odd");
  if (provider_kind == "files" && (depth_dir.empty() || flow_dir.empty()))
    throw ConfigError("config: provider.kind=files needs provider.depth_dir and provider.flow_dir");
}

RunConfig parse_run_config(const std::string& text, RunConfig base, const std::string& origin) {
  std::stringstream ss(text);
  std::string line;
  int lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(origin + " line " + std::to_string(lineno) + ": expected key=value, got '" + line + "'");
    try {
      base.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError(origin + " line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return base;
}

RunConfig load_run_config(const std::string& path, RunConfig base) {
  std::ifstream is(path);
  require(static_cast<bool>(is), "cannot open config '" + path + "'");
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_run_config(ss.str(), std::move(base), path);
}

}  // namespace lfv
