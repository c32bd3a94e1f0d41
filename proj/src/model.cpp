#include "pidcount/model.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <sstream>

#include "pidcount/errors.hpp"
#include "pidcount/random.hpp"

namespace pidcount {

std::string_view variant_name(Variant v) {
  switch (v) {
    case Variant::PID: return "pid";
    case Variant::M1: return "m1";
    case Variant::M2: return "m2";
    case Variant::UNET: return "unet";
  }
  return "unknown";
}

Variant parse_variant(std::string_view name) {
  std::string lower(name);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (lower == "pid" || lower == "pidnet") return Variant::PID;
  if (lower == "m1") return Variant::M1;
  if (lower == "m2") return Variant::M2;
  if (lower == "unet") return Variant::UNET;
  throw ConfigError("unsupported model variant '" + std::string(name) + "'");
}

// ---- ModelConfig --------------------------------------------------------------

void ModelConfig::validate() const {
  if (in_channels != 1 && in_channels != 3) throw ConfigError("in_channels must be 1 or 3");
  if (base_width < 1) throw ConfigError("base_width must be positive");
  if (levels != 4) throw ConfigError("levels must be 4");
  if (classes != 2) throw ConfigError("classes must be 2");
  if (reduce_kernel != 1 && reduce_kernel != 3) throw ConfigError("reduce_kernel must be 1 or 3");
  if (down_conv_kernel != 1 && down_conv_kernel != 3) {
    throw ConfigError("down_conv_kernel must be 1 or 3");
  }
  if (bottleneck_depth < 0) throw ConfigError("bottleneck_depth must be >= 0");
}

std::string ModelConfig::to_text() const {
  std::ostringstream os;
  os << "variant = " << variant_name(variant) << '\n'
     << "in_channels = " << in_channels << '\n'
     << "base_width = " << base_width << '\n'
     << "levels = " << levels << '\n'
     << "classes = " << classes << '\n'
     << "reduce_kernel = " << reduce_kernel << '\n'
     << "down_conv_kernel = " << down_conv_kernel << '\n'
     << "bottleneck_depth = " << bottleneck_depth << '\n';
  return os.str();
}

ModelConfig ModelConfig::from_text(std::string_view text) {
  ModelConfig c;
  std::istringstream is{std::string(text)};
  std::string line;
  while (std::getline(is, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    try {
      if (key == "variant") c.variant = parse_variant(value);
      else if (key == "in_channels") c.in_channels = std::stoi(value);
      else if (key == "base_width") c.base_width = std::stoi(value);
      else if (key == "levels") c.levels = std::stoi(value);
      else if (key == "classes") c.classes = std::stoi(value);
      else if (key == "reduce_kernel") c.reduce_kernel = std::stoi(value);
      else if (key == "down_conv_kernel") c.down_conv_kernel = std::stoi(value);
      else if (key == "bottleneck_depth") c.bottleneck_depth = std::stoi(value);
    } catch (const std::logic_error&) {
      throw ConfigError("bad model setting '" + key + " = " + value + "'");
    }
  }
  c.validate();
  return c;
}

// ---- construction ---------------------------------------------------------------

int Model::block_width(int level) const { return config_.base_width << (level - 1); }

void Model::add_param(std::string name, Shape shape) {
  index_.emplace(name, params_.size());
  names_.push_back(std::move(name));
  params_.push_back(Tensor::zeros(std::move(shape), true));
}

Model Model::build(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  Model m;
  m.config_ = config;
  const int C = config.base_width;
  const bool unet = config.variant == Variant::UNET;

  auto conv_layer = [&](const std::string& name, int cin, int cout, int k) {
    m.add_param(name + ".weight", {cout, cin, k, k});
    m.add_param(name + ".bias", {cout});
  };

  int cin = config.in_channels;
  for (int b = 1; b <= 4; ++b) {
    const int cb = C << (b - 1);
    const std::string blk = "enc" + std::to_string(b);
    conv_layer(blk + ".conv1", cin, cb, 3);
    conv_layer(blk + ".conv2", cb, cb, 3);
    if (config.variant == Variant::PID || config.variant == Variant::M1) {
      conv_layer(blk + ".pool_conv", cb, cb, config.down_conv_kernel);
    }
    if (config.variant == Variant::PID) conv_layer(blk + ".reduce", 5 * cb, cb, config.reduce_kernel);
    if (config.variant == Variant::M2) conv_layer(blk + ".reduce", 4 * cb, cb, config.reduce_kernel);
    cin = cb;
  }
  int feat = cin;  // 8C
  for (int d = 1; d <= config.bottleneck_depth; ++d) {
    conv_layer("bottleneck.conv" + std::to_string(d), feat, 16 * C, 3);
    feat = 16 * C;
  }
  for (int level = 1; level <= 4; ++level) {
    const int target = C << (4 - level);
    const std::string blk = "dec" + std::to_string(level);
    m.add_param(blk + ".up.weight", {feat, target, 3, 3});
    m.add_param(blk + ".up.bias", {target});
    int concat = target;
    if (unet) {
      concat += target;
    } else {
      for (int j = 1; j <= 5 - level; ++j) concat += C << (j - 1);
    }
    conv_layer(blk + ".conv1", concat, target, 3);
    conv_layer(blk + ".conv2", target, target, 3);
    feat = target;
  }
  conv_layer("head", C, config.classes, 1);

  // Uniform(-b, b), b = sqrt(1 / fan_in); biases share their layer's bound.
  Rng rng(seed);
  double bound = 1.0;
  for (std::size_t i = 0; i < m.params_.size(); ++i) {
    const Shape& s = m.params_[i].shape();
    if (s.size() == 4) bound = std::sqrt(1.0 / (static_cast<double>(s[1]) * s[2] * s[3]));
    if (m.names_[i].find(".up.weight") != std::string::npos) {
      bound = std::sqrt(1.0 / (static_cast<double>(s[0]) * s[2] * s[3]));
    }
    for (auto& v : m.params_[i].mutable_data()) v = static_cast<float>(rng.uniform(-bound, bound));
  }
  return m;
}

Model Model::from_checkpoint(const Checkpoint& checkpoint) {
  const ModelConfig config = ModelConfig::from_text(checkpoint.metadata);
  Model m = build(config, 0);
  if (checkpoint.params.size() != m.params_.size()) {
    throw LoadError("checkpoint holds " + std::to_string(checkpoint.params.size()) +
                    " parameters, model expects " + std::to_string(m.params_.size()));
  }
  for (const auto& [name, tensor] : checkpoint.params) {
    auto it = m.index_.find(name);
    if (it == m.index_.end()) throw LoadError("unexpected checkpoint parameter '" + name + "'");
    Tensor& p = m.params_[it->second];
    if (p.shape() != tensor.shape()) {
      throw LoadError("parameter '" + name + "' has shape " + shape_str(tensor.shape()) +
                      ", expected " + shape_str(p.shape()));
    }
    std::ranges::copy(tensor.data(), p.mutable_data().begin());
  }
  return m;
}

const Tensor& Model::parameter(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ConfigError("model has no parameter '" + name + "'");
  return params_[it->second];
}

std::size_t Model::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.numel();
  return n;
}

Checkpoint Model::to_checkpoint() const {
  Checkpoint ck;
  ck.metadata = config_.to_text();
  for (std::size_t i = 0; i < params_.size(); ++i) ck.params.emplace_back(names_[i], params_[i].detach());
  return ck;
}

Model Model::clone() const {
  Model m;
  m.config_ = config_;
  m.names_ = names_;
  m.index_ = index_;
  for (const auto& p : params_) {
    m.params_.push_back(Tensor::from_data(p.shape(), std::vector<float>(p.data().begin(), p.data().end()), true));
  }
  return m;
}

void Model::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

// ---- forward ------------------------------------------------------------------

namespace {

void record(Trace* trace, TraceEvent ev) {
  if (trace) trace->push_back(std::move(ev));
}

TraceEvent event(std::string block, std::string op, const Tensor& in, const Tensor& out,
                 std::string detail = {}) {
  TraceEvent ev;
  ev.block = std::move(block);
  ev.op = std::move(op);
  ev.in_channels = in.dim(1);
  ev.in_height = in.dim(2);
  ev.in_width = in.dim(3);
  ev.out_channels = out.dim(1);
  ev.out_height = out.dim(2);
  ev.out_width = out.dim(3);
  ev.detail = std::move(detail);
  return ev;
}

}  // namespace

Tensor Model::conv(const std::string& name, const Tensor& x, int padding, bool with_relu,
                   const std::string& block, Trace* trace, std::string detail) const {
  const Tensor& w = parameter(name + ".weight");
  Tensor y = conv2d(x, w, parameter(name + ".bias"), 1, padding);
  const int k = w.dim(2);
  record(trace, event(block, "conv" + std::to_string(k) + "x" + std::to_string(k), x, y,
                      detail.empty() ? name : detail));
  if (!with_relu) return y;
  Tensor r = relu(y);
  record(trace, event(block, "relu", y, r));
  return r;
}

EncoderOutput Model::encoder_block(const Tensor& features, int level, Trace* trace) const {
  if (level < 1 || level > 4) throw ConfigError("encoder level must be in 1..4");
  if (features.ndim() != 4 || features.dim(2) % 2 != 0 || features.dim(3) % 2 != 0) {
    throw DimensionError("encoder block needs even spatial extents, got " + shape_str(features.shape()));
  }
  const std::string blk = "enc" + std::to_string(level);
  Tensor h = conv(blk + ".conv1", features, 1, true, blk, trace);
  Tensor skip = conv(blk + ".conv2", h, 1, true, blk, trace);

  auto pooled_branch = [&] {
    Tensor p = maxpool2d(skip);
    record(trace, event(blk, "maxpool", skip, p, "down"));
    const int k = config_.down_conv_kernel;
    return conv(blk + ".pool_conv", p, k / 2, true, blk, trace);
  };
  auto pid_branch = [&] {
    Tensor q = pid_downsample(skip);
    record(trace, event(blk, "pid", skip, q, "down"));
    return q;
  };
  auto reduce = [&](const std::vector<Tensor>& parts) {
    Tensor cat = concat_channels(parts);
    TraceEvent ev = event(blk, "concat", parts.front(), cat, "down");
    ev.parts = 0;
    for (const auto& part : parts) ev.parts += part.dim(1) / skip.dim(1);
    ev.in_channels = skip.dim(1);
    record(trace, std::move(ev));
    return conv(blk + ".reduce", cat, config_.reduce_kernel / 2, false, blk, trace);
  };

  Tensor down;
  switch (config_.variant) {
    case Variant::PID: down = reduce({pid_branch(), pooled_branch()}); break;
    case Variant::M1: down = pooled_branch(); break;
    case Variant::M2: down = reduce({pid_branch()}); break;
    case Variant::UNET: {
      down = maxpool2d(skip);
      record(trace, event(blk, "maxpool", skip, down, "down"));
      break;
    }
  }
  return {std::move(skip), std::move(down)};
}

std::vector<std::vector<Tensor>> Model::skip_pyramid(std::span<const Tensor> encoder_skips,
                                                     Trace* trace) const {
  if (encoder_skips.size() != 4) throw DimensionError("skip pyramid needs 4 encoder skips");
  for (std::size_t j = 1; j < 4; ++j) {
    if (encoder_skips[j].dim(2) * 2 != encoder_skips[j - 1].dim(2) ||
        encoder_skips[j].dim(3) * 2 != encoder_skips[j - 1].dim(3)) {
      throw DimensionError("encoder skips must halve in resolution at every block");
    }
  }
  std::vector<std::vector<Tensor>> out(4);
  if (config_.variant == Variant::UNET) {
    for (int level = 1; level <= 4; ++level) out[level - 1].push_back(encoder_skips[4 - level]);
    return out;
  }
  // pooled[j][t] = encoder skip j (0-based) max-pooled t times.
  for (int j = 0; j < 4; ++j) {
    std::vector<Tensor> chain{encoder_skips[j]};
    for (int t = 1; t <= 3 - j; ++t) {
      chain.push_back(maxpool2d(chain.back()));
      record(trace, event("enc" + std::to_string(j + 1), "pool-skip", chain[t - 1], chain[t],
                          "x" + std::to_string(1 << t)));
    }
    // Decoder level l runs at encoder block (5 - l) resolution: pool 4 - l - j times.
    for (int level = 1; level <= 4 - j; ++level) out[level - 1].push_back(chain[4 - level - j]);
  }
  return out;
}

Tensor Model::decoder_block(const Tensor& features, std::span<const Tensor> skips, int level,
                            Trace* trace) const {
  if (level < 1 || level > 4) throw ConfigError("decoder level must be in 1..4");
  const std::string blk = "dec" + std::to_string(level);
  Tensor up = conv_transpose2d(features, parameter(blk + ".up.weight"), parameter(blk + ".up.bias"));
  record(trace, event(blk, "upsample", features, up, "convT3x3 s2 p1"));
  std::vector<Tensor> parts{up};
  for (const auto& s : skips) {
    if (s.dim(2) != up.dim(2) || s.dim(3) != up.dim(3)) {
      throw DimensionError(blk + " skip " + shape_str(s.shape()) + " does not match upsampled " +
                           shape_str(up.shape()));
    }
    parts.push_back(s);
  }
  Tensor cat = concat_channels(parts);
  TraceEvent ev = event(blk, "concat", up, cat);
  ev.parts = static_cast<int>(parts.size());
  record(trace, std::move(ev));
  Tensor h = conv(blk + ".conv1", cat, 1, true, blk, trace);
  return conv(blk + ".conv2", h, 1, true, blk, trace);
}

Tensor Model::logits(const Tensor& batch, Trace* trace) const {
  if (batch.ndim() != 4) throw DimensionError("model input must be [N,C,H,W]");
  if (batch.dim(1) != config_.in_channels) {
    throw DimensionError("model expects " + std::to_string(config_.in_channels) +
                         " input channels, got " + shape_str(batch.shape()));
  }
  const int factor = 1 << config_.levels;
  if (batch.dim(2) % factor != 0 || batch.dim(3) % factor != 0 || batch.dim(2) == 0) {
    throw DimensionError("model input extents must be divisible by " + std::to_string(factor) +
                         ", got " + shape_str(batch.shape()));
  }
  std::vector<Tensor> skips;
  Tensor x = batch;
  for (int level = 1; level <= 4; ++level) {
    auto [skip, down] = encoder_block(x, level, trace);
    skips.push_back(std::move(skip));
    x = std::move(down);
  }
  {
    TraceEvent ev = event("bottleneck", "input", x, x);
    record(trace, std::move(ev));
  }
  for (int d = 1; d <= config_.bottleneck_depth; ++d) {
    x = conv("bottleneck.conv" + std::to_string(d), x, 1, true, "bottleneck", trace);
  }
  const auto pyramid = skip_pyramid(skips, trace);
  for (int level = 1; level <= 4; ++level) x = decoder_block(x, pyramid[level - 1], level, trace);
  return conv("head", x, 0, false, "head", trace);
}

Tensor Model::forward(const Tensor& batch, Trace* trace) const {
  Tensor z = logits(batch, trace);
  Tensor p = softmax_channels(z);
  record(trace, event("head", "softmax", z, p));
  return p;
}

// ---- topology dump ----------------------------------------------------------------

std::string format_trace(const ModelConfig& config, const Trace& trace, int height, int width) {
  std::ostringstream os;
  os << "model variant=" << variant_name(config.variant) << " in_channels=" << config.in_channels
     << " base_width=" << config.base_width << " input=" << height << "x" << width << '\n';
  for (const auto& ev : trace) {
    if (ev.op == "relu") continue;
    os << ev.block << ' ' << ev.op;
    if (ev.op == "concat") os << " parts=" << ev.parts;
    os << ' ' << ev.in_channels << "->" << ev.out_channels << " @" << ev.in_height << 'x'
       << ev.in_width;
    if (ev.in_height != ev.out_height || ev.in_width != ev.out_width) {
      os << "->" << ev.out_height << 'x' << ev.out_width;
    }
    if (!ev.detail.empty()) os << " (" << ev.detail << ')';
    os << '\n';
  }
  return os.str();
}

std::string Model::topology(int height, int width) const {
  NoGradGuard guard;
  Trace trace;
  forward(Tensor::zeros({1, config_.in_channels, height, width}), &trace);
  return format_trace(config_, trace, height, width);
}

}  // namespace pidcount
