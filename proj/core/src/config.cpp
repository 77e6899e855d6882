#include "ddmc/config.hpp"

#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "ddmc/errors.hpp"
#include "ddmc/hash.hpp"

namespace ddmc {
namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

double parse_double(const std::string& key, const std::string& v) {
  errno = 0;
  char* end = nullptr;
  const double x = std::strtod(v.c_str(), &end);
  if (end == v.c_str() || *end != '\0' || errno == ERANGE)
    throw ConfigError("config: " + key + " expects a number, got '" + v + "'");
  return x;
}

std::int64_t parse_int(const std::string& key, const std::string& v) {
  errno = 0;
  char* end = nullptr;
  const long long x = std::strtoll(v.c_str(), &end, 10);
  if (end == v.c_str() || *end != '\0' || errno == ERANGE)
    throw ConfigError("config: " + key + " expects an integer, got '" + v + "'");
  return x;
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  errno = 0;
  char* end = nullptr;
  const unsigned long long x = std::strtoull(v.c_str(), &end, 10);
  if (end == v.c_str() || *end != '\0' || errno == ERANGE || v.find('-') != std::string::npos)
    throw ConfigError("config: " + key + " expects an unsigned integer, got '" + v + "'");
  return x;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("config: " + key + " expects true/false, got '" + v + "'");
}

std::vector<std::int64_t> parse_int_list(const std::string& key,
                                         const std::string& v) {
  std::vector<std::int64_t> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_int(key, trim(item)));
  if (out.empty())
    throw ConfigError("config: " + key + " expects a comma list of integers");
  return out;
}

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fmt_int_list(const std::vector<std::int64_t>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(v[i]);
  }
  return out;
}

}  // namespace

void set_config_key(RunConfig& cfg, const std::string& key,
                    const std::string& value) {
  if (key == "k") cfg.k = int(parse_int(key, value));
  else if (key == "t") cfg.t = int(parse_int(key, value));
  else if (key == "m") cfg.m = int(parse_int(key, value));
  else if (key == "d_z") cfg.d_z = parse_int(key, value);
  else if (key == "hidden") cfg.hidden = parse_int_list(key, value);
  else if (key == "tau") cfg.tau = parse_double(key, value);
  else if (key == "sigma0") cfg.sigma0 = parse_double(key, value);
  else if (key == "beta") cfg.beta = parse_double(key, value);
  else if (key == "lr") cfg.lr = parse_double(key, value);
  else if (key == "weight_decay") cfg.weight_decay = parse_double(key, value);
  else if (key == "epochs") cfg.epochs = parse_int(key, value);
  else if (key == "delta") cfg.delta = parse_double(key, value);
  else if (key == "batch_size") cfg.batch_size = parse_int(key, value);
  else if (key == "e_steps_per_m") cfg.e_steps_per_m = parse_int(key, value);
  else if (key == "warmup_epochs") cfg.warmup_epochs = parse_int(key, value);
  else if (key == "reinit_every") cfg.reinit_every = parse_int(key, value);
  else if (key == "u_z_max") cfg.u_z_max = parse_double(key, value);
  else if (key == "u_c_max") cfg.u_c_max = parse_double(key, value);
  else if (key == "capacity_ramp_frac") cfg.capacity_ramp_frac = parse_double(key, value);
  else if (key == "dataset") cfg.dataset = value;
  else if (key == "data") cfg.data = value;
  else if (key == "t1") cfg.t1 = int(parse_int(key, value));
  else if (key == "t2") cfg.t2 = int(parse_int(key, value));
  else if (key == "per_combo") cfg.per_combo = parse_int(key, value);
  else if (key == "noise") cfg.noise = parse_double(key, value);
  else if (key == "seed") cfg.seed = parse_u64(key, value);
  else if (key == "aug_seed") cfg.aug_seed = parse_u64(key, value);
  else if (key == "coarse_enabled") cfg.coarse_enabled = parse_bool(key, value);
  else if (key == "cluster_assign_enabled") cfg.cluster_assign_enabled = parse_bool(key, value);
  else if (key == "mixing_enabled") cfg.mixing_enabled = parse_bool(key, value);
  else if (key == "fixed_mix_w") cfg.fixed_mix_w = parse_bool(key, value);
  else if (key == "resample_aug") cfg.resample_aug = parse_bool(key, value);
  else throw ConfigError("config: unknown key '" + key + "'");
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("config: cannot open '" + path + "'");
  RunConfig cfg;
  std::string line;
  std::int64_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config: line " + std::to_string(lineno) +
                        " is not key=value: '" + line + "'");
    set_config_key(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return cfg;
}

std::string serialize_config(const RunConfig& c) {
  // Alphabetical by key so the text (and its hash) is canonical.
  std::string out;
  auto put = [&](const char* k, const std::string& v) {
    out += k;
    out += "=";
    out += v;
    out += "\n";
  };
  put("aug_seed", std::to_string(c.aug_seed));
  put("batch_size", std::to_string(c.batch_size));
  put("beta", fmt_double(c.beta));
  put("capacity_ramp_frac", fmt_double(c.capacity_ramp_frac));
  put("cluster_assign_enabled", c.cluster_assign_enabled ? "true" : "false");
  put("coarse_enabled", c.coarse_enabled ? "true" : "false");
  put("d_z", std::to_string(c.d_z));
  put("data", c.data);
  put("dataset", c.dataset);
  put("delta", fmt_double(c.delta));
  put("e_steps_per_m", std::to_string(c.e_steps_per_m));
  put("epochs", std::to_string(c.epochs));
  put("fixed_mix_w", c.fixed_mix_w ? "true" : "false");
  put("hidden", fmt_int_list(c.hidden));
  put("k", std::to_string(c.k));
  put("lr", fmt_double(c.lr));
  put("m", std::to_string(c.m));
  put("mixing_enabled", c.mixing_enabled ? "true" : "false");
  put("noise", fmt_double(c.noise));
  put("per_combo", std::to_string(c.per_combo));
  put("reinit_every", std::to_string(c.reinit_every));
  put("resample_aug", c.resample_aug ? "true" : "false");
  put("seed", std::to_string(c.seed));
  put("sigma0", fmt_double(c.sigma0));
  put("t", std::to_string(c.t));
  put("t1", std::to_string(c.t1));
  put("t2", std::to_string(c.t2));
  put("tau", fmt_double(c.tau));
  put("u_c_max", fmt_double(c.u_c_max));
  put("u_z_max", fmt_double(c.u_z_max));
  put("warmup_epochs", std::to_string(c.warmup_epochs));
  put("weight_decay", fmt_double(c.weight_decay));
  return out;
}

std::uint64_t config_hash(const RunConfig& cfg) {
  return fnv1a64(serialize_config(cfg));
}

void validate_config(const RunConfig& c) {
  if (c.m < 1) throw ConfigError("config: m must be at least 1");
  if (c.k < c.m) throw ConfigError("config: k must be at least m");
  if (c.t < 2) throw ConfigError("config: t must be at least 2");
  if (!(c.tau > 0.0 && c.tau <= 2.0)) throw ConfigError("config: tau must lie in (0, 2]");
  if (!(c.delta > 0.0 && c.delta < 1.0)) throw ConfigError("config: delta must lie in (0, 1)");
  if (c.d_z < 1) throw ConfigError("config: d_z must be positive");
  if (c.hidden.empty()) throw ConfigError("config: hidden must not be empty");
  for (auto h : c.hidden)
    if (h < 1) throw ConfigError("config: hidden widths must be positive");
  if (!(c.sigma0 > 0.0)) throw ConfigError("config: sigma0 must be positive");
  if (!(c.beta > 0.0)) throw ConfigError("config: beta must be positive");
  if (!(c.lr > 0.0)) throw ConfigError("config: lr must be positive");
  if (c.weight_decay < 0.0) throw ConfigError("config: weight_decay must be nonnegative");
  if (c.epochs < 0) throw ConfigError("config: epochs must be nonnegative");
  if (c.batch_size < 2) throw ConfigError("config: batch_size must be at least 2");
  if (c.e_steps_per_m < 1) throw ConfigError("config: e_steps_per_m must be at least 1");
  if (c.warmup_epochs < 0) throw ConfigError("config: warmup_epochs must be nonnegative");
  if (c.reinit_every < 0) throw ConfigError("config: reinit_every must be nonnegative");
  if (c.u_z_max < 0.0) throw ConfigError("config: u_z_max must be nonnegative");
  if (!(c.capacity_ramp_frac >= 0.0 && c.capacity_ramp_frac <= 1.0))
    throw ConfigError("config: capacity_ramp_frac must lie in [0, 1]");
  if (c.dataset != "stickfig" && c.dataset != "colored_shapes")
    throw ConfigError("config: dataset must be stickfig or colored_shapes");
  if (c.t1 != 0 && c.t1 < 2) throw ConfigError("config: t1 must be 0 or at least 2");
  if (c.t2 != 0 && c.t2 < 2) throw ConfigError("config: t2 must be 0 or at least 2");
  if (c.per_combo < 1) throw ConfigError("config: per_combo must be positive");
  if (!(c.noise >= 0.0 && c.noise <= 0.2))
    throw ConfigError("config: noise must lie in [0, 0.2]");
}

double resolved_u_c_max(const RunConfig& cfg) {
  return cfg.u_c_max < 0.0 ? std::log(double(cfg.m)) : cfg.u_c_max;
}

namespace {
std::int64_t ramp_epochs(const RunConfig& cfg) {
  return std::llround(cfg.capacity_ramp_frac * double(cfg.epochs));
}
}  // namespace

CapacitySchedule z_capacity(const RunConfig& cfg) {
  return CapacitySchedule{0.0, cfg.u_z_max, ramp_epochs(cfg)};
}

CapacitySchedule c_capacity(const RunConfig& cfg) {
  return CapacitySchedule{0.0, resolved_u_c_max(cfg), ramp_epochs(cfg)};
}

}  // namespace ddmc
