#include "pidcount/config.hpp"

#include <cerrno>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>
#include <stdexcept>

#include "pidcount/errors.hpp"

namespace pidcount {

PostprocParams RunConfig::postproc_for(int image_size) const {
  if (!min_area_auto) return post;
  PostprocParams p = post;
  p.min_area = 9;
  return p.scaled_for(image_size);
}

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return {};
  const auto b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

struct BadValue : std::runtime_error {
  using std::runtime_error::runtime_error;
};

long long to_int(const std::string& v) {
  long long out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || p != v.data() + v.size()) throw BadValue("expected an integer, got '" + v + "'");
  return out;
}

int to_int32(const std::string& v) {
  const long long x = to_int(v);
  if (x < INT32_MIN || x > INT32_MAX) throw BadValue("integer out of range: '" + v + "'");
  return static_cast<int>(x);
}

std::uint64_t to_u64(const std::string& v) {
  std::uint64_t out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || p != v.data() + v.size()) throw BadValue("expected a non-negative integer, got '" + v + "'");
  return out;
}

double to_double(const std::string& v) {
  if (v.empty()) throw BadValue("expected a number, got ''");
  char* end = nullptr;
  errno = 0;
  const double x = std::strtod(v.c_str(), &end);
  if (end != v.c_str() + v.size() || errno == ERANGE || !std::isfinite(x)) {
    throw BadValue("expected a number, got '" + v + "'");
  }
  return x;
}

bool to_bool(const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw BadValue("expected true or false, got '" + v + "'");
}

std::vector<int> to_ints(const std::string& v, char sep, std::size_t n) {
  std::vector<int> out;
  std::stringstream ss(v);
  std::string part;
  while (std::getline(ss, part, sep)) out.push_back(to_int32(trim(part)));
  if (out.size() != n) throw BadValue("expected " + std::to_string(n) + " integers separated by '" + sep + "', got '" + v + "'");
  return out;
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

std::string fmt_bool(bool b) { return b ? "true" : "false"; }

struct Key {
  const char* name;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

const std::vector<Key>& keys() {
  static const std::vector<Key> table = {
      {"data", [](RunConfig& c, const std::string& v) { c.data = v; }, [](const RunConfig& c) { return c.data; }},
      {"out", [](RunConfig& c, const std::string& v) { c.out = v; }, [](const RunConfig& c) { return c.out; }},
      {"ckpt", [](RunConfig& c, const std::string& v) { c.ckpt = v; }, [](const RunConfig& c) { return c.ckpt; }},
      {"seed", [](RunConfig& c, const std::string& v) { c.seed = to_u64(v); },
       [](const RunConfig& c) { return std::to_string(c.seed); }},
      {"size", [](RunConfig& c, const std::string& v) { c.size = to_int32(v); },
       [](const RunConfig& c) { return std::to_string(c.size); }},
      {"augment_policy",
       [](RunConfig& c, const std::string& v) {
         parse_augment_policy(v);
         c.augment_policy = v;
       },
       [](const RunConfig& c) { return c.augment_policy; }},
      {"split",
       [](RunConfig& c, const std::string& v) {
         const auto r = to_ints(v, ':', 3);
         c.split = {r[0], r[1], r[2]};
       },
       [](const RunConfig& c) {
         return std::to_string(c.split[0]) + ":" + std::to_string(c.split[1]) + ":" + std::to_string(c.split[2]);
       }},
      {"threads", [](RunConfig& c, const std::string& v) { c.threads = to_int32(v); },
       [](const RunConfig& c) { return std::to_string(c.threads); }},

      {"variant", [](RunConfig& c, const std::string& v) { c.model.variant = parse_variant(v); },
       [](const RunConfig& c) { return std::string(variant_name(c.model.variant)); }},
      {"width", [](RunConfig& c, const std::string& v) { c.model.base_width = to_int32(v); },
       [](const RunConfig& c) { return std::to_string(c.model.base_width); }},
      {"in_channels", [](RunConfig& c, const std::string& v) { c.model.in_channels = to_int32(v); },
       [](const RunConfig& c) { return std::to_string(c.model.in_channels); }},
      {"reduce_kernel", [](RunConfig& c, const std::string& v) { c.model.reduce_kernel = to_int32(v); },
       [](const RunConfig& c) { return std::to_string(c.model.reduce_kernel); }},
      {"down_conv_kernel", [](RunConfig& c, const std::string& v) { c.model.down_conv_kernel = to_int32(v); },
       [](const RunConfig& c) { return std::to_string(c.model.down_conv_kernel); }},
      {"bottleneck_depth", [](RunConfig& c, const std::string& v) { c.model.bottleneck_depth = to_int32(v); },
       [](const RunConfig& c) { return std::to_string(c.model.bottleneck_depth); }},

      {"lr", [](RunConfig& c, const std::string& v) { c.hyper.lr = static_cast<float>(to_double(v)); },
       [](const RunConfig& c) { return fmt(c.hyper.lr); }},
      {"beta1", [](RunConfig& c, const std::string& v) { c.hyper.beta1 = static_cast<float>(to_double(v)); },
       [](const RunConfig& c) { return fmt(c.hyper.beta1); }},
      {"beta2", [](RunConfig& c, const std::string& v) { c.hyper.beta2 = static_cast<float>(to_double(v)); },
       [](const RunConfig& c) { return fmt(c.hyper.beta2); }},
      {"eps", [](RunConfig& c, const std::string& v) { c.hyper.eps = static_cast<float>(to_double(v)); },
       [](const RunConfig& c) { return fmt(c.hyper.eps); }},
      {"batch_size", [](RunConfig& c, const std::string& v) { c.hyper.batch_size = to_int32(v); },
       [](const RunConfig& c) { return std::to_string(c.hyper.batch_size); }},
      {"epochs", [](RunConfig& c, const std::string& v) { c.hyper.epochs = to_int32(v); },
       [](const RunConfig& c) { return std::to_string(c.hyper.epochs); }},

      {"prob_threshold", [](RunConfig& c, const std::string& v) { c.post.prob_threshold = static_cast<float>(to_double(v)); },
       [](const RunConfig& c) { return fmt(c.post.prob_threshold); }},
      {"min_area",
       [](RunConfig& c, const std::string& v) {
         if (v == "auto") {
           c.min_area_auto = true;
         } else {
           c.min_area_auto = false;
           c.post.min_area = to_int32(v);
         }
       },
       [](const RunConfig& c) { return c.min_area_auto ? std::string("auto") : std::to_string(c.post.min_area); }},
      {"opening", [](RunConfig& c, const std::string& v) { c.post.opening = to_bool(v); },
       [](const RunConfig& c) { return fmt_bool(c.post.opening); }},

      {"method",
       [](RunConfig& c, const std::string& v) {
         parse_baseline_method(v);
         c.method = v;
       },
       [](const RunConfig& c) { return c.method; }},
      {"dark_foreground", [](RunConfig& c, const std::string& v) { c.baseline.dark_foreground = to_bool(v); },
       [](const RunConfig& c) { return fmt_bool(c.baseline.dark_foreground); }},
      {"watershed_sigma", [](RunConfig& c, const std::string& v) { c.baseline.watershed_sigma = to_double(v); },
       [](const RunConfig& c) { return fmt(c.baseline.watershed_sigma); }},
      {"marker_min_distance", [](RunConfig& c, const std::string& v) { c.baseline.marker_min_distance = to_double(v); },
       [](const RunConfig& c) { return fmt(c.baseline.marker_min_distance); }},
      {"hough_sigma", [](RunConfig& c, const std::string& v) { c.baseline.hough_sigma = to_double(v); },
       [](const RunConfig& c) { return fmt(c.baseline.hough_sigma); }},
      {"hough_r_min", [](RunConfig& c, const std::string& v) { c.baseline.hough_r_min = to_double(v); },
       [](const RunConfig& c) { return fmt(c.baseline.hough_r_min); }},
      {"hough_r_max", [](RunConfig& c, const std::string& v) { c.baseline.hough_r_max = to_double(v); },
       [](const RunConfig& c) { return fmt(c.baseline.hough_r_max); }},
      {"hough_r_step", [](RunConfig& c, const std::string& v) { c.baseline.hough_r_step = to_double(v); },
       [](const RunConfig& c) { return fmt(c.baseline.hough_r_step); }},
      {"hough_edge_threshold", [](RunConfig& c, const std::string& v) { c.baseline.hough_edge_threshold = to_double(v); },
       [](const RunConfig& c) { return fmt(c.baseline.hough_edge_threshold); }},
      {"hough_peak_threshold", [](RunConfig& c, const std::string& v) { c.baseline.hough_peak_threshold = to_double(v); },
       [](const RunConfig& c) { return fmt(c.baseline.hough_peak_threshold); }},
      {"hough_nms_radius", [](RunConfig& c, const std::string& v) { c.baseline.hough_nms_radius = to_double(v); },
       [](const RunConfig& c) { return fmt(c.baseline.hough_nms_radius); }},

      {"n", [](RunConfig& c, const std::string& v) { c.synth.n_images = to_int32(v); },
       [](const RunConfig& c) { return std::to_string(c.synth.n_images); }},
      {"counts",
       [](RunConfig& c, const std::string& v) {
         const auto r = to_ints(v, ':', 2);
         c.synth.min_count = r[0];
         c.synth.max_count = r[1];
       },
       [](const RunConfig& c) { return std::to_string(c.synth.min_count) + ":" + std::to_string(c.synth.max_count); }},
      {"synth_size", [](RunConfig& c, const std::string& v) { c.synth.image_size = to_int32(v); },
       [](const RunConfig& c) { return std::to_string(c.synth.image_size); }},
      {"noise_sigma", [](RunConfig& c, const std::string& v) { c.synth.noise_sigma = to_double(v); },
       [](const RunConfig& c) { return fmt(c.synth.noise_sigma); }},
      {"radius_min", [](RunConfig& c, const std::string& v) { c.synth.radius_min = to_double(v); },
       [](const RunConfig& c) { return fmt(c.synth.radius_min); }},
      {"radius_max", [](RunConfig& c, const std::string& v) { c.synth.radius_max = to_double(v); },
       [](const RunConfig& c) { return fmt(c.synth.radius_max); }},
  };
  return table;
}

const Key* find_key(const std::string& name) {
  for (const auto& k : keys()) {
    if (name == k.name) return &k;
  }
  return nullptr;
}

}  // namespace

std::vector<std::string> config_keys() {
  std::vector<std::string> out;
  for (const auto& k : keys()) out.emplace_back(k.name);
  return out;
}

void set_config_value(RunConfig& config, const std::string& key, const std::string& value) {
  const Key* k = find_key(key);
  if (!k) throw ConfigError("unknown config key '" + key + "'");
  try {
    k->set(config, trim(value));
    // single-field range checks; cross-field ones wait until the config is used
    config.hyper.validate();
    config.model.validate();
    config.post.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(key + ": " + e.what());
  } catch (const BadValue& e) {
    throw ConfigError(key + ": " + e.what());
  }
}

RunConfig parse_config_text(const std::string& text, RunConfig base) {
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError("expected 'key = value', got '" + line + "'", lineno);
    const std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
    if (!find_key(key)) throw ParseError("unknown key '" + key + "'", lineno);
    try {
      set_config_value(base, key, value);
    } catch (const ConfigError& e) {
      throw ParseError(e.what(), lineno);
    }
  }
  return base;
}

RunConfig parse_config(const std::filesystem::path& path, const std::vector<Override>& overrides) {
  RunConfig config;
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw LoadError("cannot read config " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    config = parse_config_text(ss.str());
  }
  for (const auto& [key, value] : overrides) set_config_value(config, key, value);
  return config;
}

std::string format_config(const RunConfig& config) {
  std::string out;
  for (const auto& k : keys()) out += std::string(k.name) + " = " + k.get(config) + "\n";
  return out;
}

void write_resolved_config(const std::filesystem::path& path, const RunConfig& config) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  out << format_config(config);
  if (!out) throw Error("cannot write " + path.string());
}

}  // namespace pidcount
