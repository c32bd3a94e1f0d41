#pragma once

// Run configuration: "key = value" text with '#' comments, overridable
// from the command line.

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "pidcount/baselines.hpp"
#include "pidcount/data.hpp"
#include "pidcount/model.hpp"
#include "pidcount/trainer.hpp"

namespace pidcount {

struct RunConfig {
  std::string data;
  std::string out;
  std::string ckpt;
  std::uint64_t seed = 1;
  int size = 0;  // resize target; 0 keeps the stored size
  std::string augment_policy = "default";  // none, default or paper
  std::array<int, 3> split{3, 1, 1};
  int threads = 0;  // 0 = PIDCOUNT_THREADS or 1

  ModelConfig model;
  HyperParams hyper;
  PostprocParams post;
  bool min_area_auto = true;  // min_area = 9 scaled to the image size
  BaselineParams baseline;
  std::string method = "otsu";

  SynthParams synth;

  /// Postproc parameters for images of the given size.
  PostprocParams postproc_for(int image_size) const;
};

using Override = std::pair<std::string, std::string>;

/// Sets one key; throws ConfigError naming the key on an unknown key or a
/// malformed value.
void set_config_value(RunConfig& config, const std::string& key, const std::string& value);

/// Parses config text. Unknown keys and malformed lines raise ParseError
/// with the 1-based line number.
RunConfig parse_config_text(const std::string& text, RunConfig base = {});
/// Reads `path` (empty path: defaults only), then applies the overrides in order.
RunConfig parse_config(const std::filesystem::path& path, const std::vector<Override>& overrides = {});

/// Every key with its resolved value, one "key = value" line each.
std::string format_config(const RunConfig& config);
void write_resolved_config(const std::filesystem::path& path, const RunConfig& config);

std::vector<std::string> config_keys();

}  // namespace pidcount
