#include "pidcount/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "pidcount/errors.hpp"
#include "pidcount/postproc.hpp"
#include "pidcount/random.hpp"

namespace pidcount {

namespace fs = std::filesystem;

namespace {

std::map<std::string, int> read_counts(const fs::path& file) {
  std::map<std::string, int> counts;
  std::ifstream in(file);
  if (!in) return counts;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || (lineno == 1 && line.rfind("id,", 0) == 0)) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw LoadError(file.string() + " line " + std::to_string(lineno) + ": expected id,count");
    try {
      counts[line.substr(0, comma)] = std::stoi(line.substr(comma + 1));
    } catch (const std::exception&) {
      throw LoadError(file.string() + " line " + std::to_string(lineno) + ": bad count");
    }
  }
  return counts;
}

std::map<std::string, fs::path> scan_pngs(const fs::path& dir, std::vector<std::string>* warnings) {
  std::map<std::string, fs::path> found;
  if (!fs::is_directory(dir)) throw LoadError("missing directory " + dir.string());
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    if (!is_png_path(entry.path())) {
      if (warnings) warnings->push_back("skipping non-image file " + entry.path().string());
      continue;
    }
    found[entry.path().stem().string()] = entry.path();
  }
  return found;
}

}  // namespace

std::vector<Sample> load_dataset(const fs::path& directory, std::vector<std::string>* warnings) {
  const auto images = scan_pngs(directory / "images", warnings);
  const auto masks = scan_pngs(directory / "masks", warnings);
  for (const auto& [id, path] : images) {
    if (!masks.count(id)) throw LoadError("unpaired image " + id + ": no masks/" + id + ".png");
  }
  for (const auto& [id, path] : masks) {
    if (!images.count(id)) throw LoadError("unpaired mask " + id + ": no images/" + id + ".png");
  }
  const auto counts = read_counts(directory / "counts.csv");

  std::vector<Sample> samples;
  samples.reserve(images.size());
  for (const auto& [id, path] : images) {
    Sample s;
    s.id = id;
    s.image = read_png(path);
    s.mask = read_mask_png(masks.at(id));
    if (s.image.height != s.mask.height || s.image.width != s.mask.width) {
      throw LoadError("image and mask sizes differ for " + id);
    }
    if (auto it = counts.find(id); it != counts.end()) s.true_count = it->second;
    samples.push_back(std::move(s));
  }
  return samples;
}

void save_dataset(const fs::path& directory, const std::vector<Sample>& samples) {
  fs::create_directories(directory / "images");
  fs::create_directories(directory / "masks");
  bool any_count = false;
  for (const auto& s : samples) {
    write_png(directory / "images" / (s.id + ".png"), s.image);
    write_mask_png(directory / "masks" / (s.id + ".png"), s.mask);
    any_count = any_count || s.true_count >= 0;
  }
  if (!any_count) return;
  std::ofstream out(directory / "counts.csv");
  out << "id,true_count\n";
  for (const auto& s : samples) {
    if (s.true_count >= 0) out << s.id << ',' << s.true_count << '\n';
  }
  if (!out) throw Error("cannot write " + (directory / "counts.csv").string());
}

Sample resize(const Sample& sample, int size) {
  if (size < 16 || size % 16 != 0) throw ConfigError("resize: size must be a positive multiple of 16, got " + std::to_string(size));
  const Image& src = sample.image;
  if (src.height == size && src.width == size) return sample;

  Sample out;
  out.id = sample.id;
  out.true_count = sample.true_count;
  out.image = Image(size, size, src.channels);
  const double sy = static_cast<double>(src.height) / size, sx = static_cast<double>(src.width) / size;
  for (int y = 0; y < size; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<double>(src.height - 1));
    const int y0 = static_cast<int>(fy), y1 = std::min(y0 + 1, src.height - 1);
    const double wy = fy - y0;
    for (int x = 0; x < size; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, static_cast<double>(src.width - 1));
      const int x0 = static_cast<int>(fx), x1 = std::min(x0 + 1, src.width - 1);
      const double wx = fx - x0;
      for (int c = 0; c < src.channels; ++c) {
        const double top = (1 - wx) * src.at(y0, x0, c) + wx * src.at(y0, x1, c);
        const double bottom = (1 - wx) * src.at(y1, x0, c) + wx * src.at(y1, x1, c);
        out.image.at(y, x, c) = static_cast<float>((1 - wy) * top + wy * bottom);
      }
    }
  }

  const Mask& m = sample.mask;
  out.mask = Mask(size, size);
  const double my = static_cast<double>(m.height) / size, mx = static_cast<double>(m.width) / size;
  for (int y = 0; y < size; ++y) {
    const int iy = std::min(static_cast<int>(std::floor((y + 0.5) * my)), m.height - 1);
    for (int x = 0; x < size; ++x) {
      const int ix = std::min(static_cast<int>(std::floor((x + 0.5) * mx)), m.width - 1);
      out.mask.at(y, x) = m.at(iy, ix);
    }
  }
  return out;
}

namespace {

void require_square(const Sample& s) {
  if (s.image.height != s.image.width) {
    throw ConfigError("augmentation needs a square sample, " + s.id + " is " + std::to_string(s.image.height) + "x" +
                      std::to_string(s.image.width));
  }
}

/// out(y, x) = in(map(y, x)) for both rasters.
template <typename Map>
Sample remap(const Sample& s, Map map) {
  Sample out = s;
  const int n = s.image.height;
  for (int y = 0; y < n; ++y) {
    for (int x = 0; x < n; ++x) {
      const auto [sy, sx] = map(y, x, n);
      for (int c = 0; c < s.image.channels; ++c) out.image.at(y, x, c) = s.image.at(sy, sx, c);
      out.mask.at(y, x) = s.mask.at(sy, sx);
    }
  }
  return out;
}

}  // namespace

Sample mirror(const Sample& sample) {
  require_square(sample);
  return remap(sample, [](int y, int x, int n) { return std::pair{y, n - 1 - x}; });
}

Sample rotate90(const Sample& sample, int quarter_turns) {
  require_square(sample);
  Sample out = sample;
  for (int k = ((quarter_turns % 4) + 4) % 4; k > 0; --k) {
    out = remap(out, [](int y, int x, int n) { return std::pair{x, n - 1 - y}; });
  }
  return out;
}

std::vector<Sample> augment8(const Sample& sample) {
  require_square(sample);
  std::vector<Sample> out;
  out.reserve(8);
  const Sample flipped = mirror(sample);
  for (int k = 0; k < 4; ++k) {
    for (const Sample* base : {&sample, &flipped}) {
      Sample v = rotate90(*base, k);
      v.id = sample.id + "_r" + std::to_string(90 * k) + (base == &flipped ? "m" : "");
      out.push_back(std::move(v));
    }
  }
  return out;
}

AugmentPolicy parse_augment_policy(const std::string& name) {
  if (name == "none") return AugmentPolicy::None;
  if (name == "default") return AugmentPolicy::Default;
  if (name == "paper") return AugmentPolicy::Paper;
  throw ConfigError("unknown augment policy '" + name + "' (expected none, default or paper)");
}

const char* augment_policy_name(AugmentPolicy policy) {
  switch (policy) {
    case AugmentPolicy::None: return "none";
    case AugmentPolicy::Paper: return "paper";
    default: return "default";
  }
}

std::array<std::size_t, 3> split_sizes(std::size_t n, std::array<int, 3> ratio) {
  const long total = std::accumulate(ratio.begin(), ratio.end(), 0L);
  if (total <= 0 || std::any_of(ratio.begin(), ratio.end(), [](int r) { return r < 0; })) {
    throw ConfigError("split ratio must be non-negative with a positive sum");
  }
  std::array<std::size_t, 3> sizes{};
  std::array<long, 3> remainder{};
  std::size_t used = 0;
  for (int i = 0; i < 3; ++i) {
    const long scaled = static_cast<long>(n) * ratio[i];
    sizes[i] = static_cast<std::size_t>(scaled / total);
    remainder[i] = scaled % total;
    used += sizes[i];
  }
  std::array<int, 3> order{0, 1, 2};
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return remainder[a] > remainder[b]; });
  for (int i = 0; used < n; ++i, ++used) ++sizes[order[i]];
  return sizes;
}

DatasetSplit split(const std::vector<Sample>& samples, std::uint64_t seed, AugmentPolicy policy,
                   std::array<int, 3> ratio) {
  if (samples.size() < 5) throw ConfigError("split needs at least 5 samples, got " + std::to_string(samples.size()));
  const auto sizes = split_sizes(samples.size(), ratio);
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  rng.shuffle(order);

  DatasetSplit out;
  out.seed = seed;
  out.policy = policy;
  const bool any = policy != AugmentPolicy::None;
  out.augmented = {any, any, policy == AugmentPolicy::Paper};
  std::array<std::vector<Sample>*, 3> parts{&out.train, &out.val, &out.test};
  std::size_t next = 0;
  for (int p = 0; p < 3; ++p) {
    for (std::size_t i = 0; i < sizes[p]; ++i) {
      const Sample& s = samples[order[next++]];
      if (out.augmented[p]) {
        for (auto& v : augment8(s)) parts[p]->push_back(std::move(v));
      } else {
        parts[p]->push_back(s);
      }
    }
  }
  return out;
}

// ---- synthetic blobs ---------------------------------------------------------------

namespace {

struct Ellipse {
  double cy, cx, a, b, cos_t, sin_t;

  /// Squared normalized radius of a pixel centre; <= 1 inside.
  double rho2(int y, int x) const {
    const double dy = y - cy, dx = x - cx;
    const double u = dx * cos_t + dy * sin_t, v = -dx * sin_t + dy * cos_t;
    return (u * u) / (a * a) + (v * v) / (b * b);
  }
};

bool single_component(const std::vector<int>& pixels, int size) {
  if (pixels.empty()) return false;
  std::set<int> members(pixels.begin(), pixels.end()), seen{pixels[0]};
  std::vector<int> stack{pixels[0]};
  while (!stack.empty()) {
    const int p = stack.back();
    stack.pop_back();
    const int y = p / size, x = p % size;
    for (int dy = -1; dy <= 1; ++dy) {
      for (int dx = -1; dx <= 1; ++dx) {
        const int yy = y + dy, xx = x + dx;
        if (yy < 0 || yy >= size || xx < 0 || xx >= size) continue;
        const int q = yy * size + xx;
        if (members.count(q) && seen.insert(q).second) stack.push_back(q);
      }
    }
  }
  return seen.size() == members.size();
}

constexpr int kPlacementAttempts = 200;
constexpr int kImageRestarts = 20;
constexpr double kMinKeptFraction = 0.75;  // of a blob's ellipse left after carving
constexpr int kMinBlobArea = 5;

}  // namespace

std::vector<Sample> synth_blobs(const SynthParams& p) {
  if (p.min_count < 1 || p.max_count < p.min_count) throw ConfigError("synth: need 1 <= min_count <= max_count");
  if (p.image_size < 16 || p.image_size % 16 != 0) throw ConfigError("synth: image_size must be a positive multiple of 16");
  if (p.n_images < 0) throw ConfigError("synth: n_images must be >= 0");
  if (p.noise_sigma < 0) throw ConfigError("synth: noise_sigma must be >= 0");
  if (p.max_eccentricity < 0 || p.max_eccentricity >= 1) throw ConfigError("synth: max_eccentricity must lie in [0, 1)");
  const int S = p.image_size;
  const double rmin = p.radius_min > 0 ? p.radius_min : 0.07 * S;
  const double rmax = p.radius_max > 0 ? p.radius_max : 0.12 * S;
  if (rmin < 1.0 || rmax < rmin) throw ConfigError("synth: need 1 <= radius_min <= radius_max");
  // crude packing bound: the smallest blobs plus their gap ring must fit in
  // about half the image
  const double smallest = M_PI * (rmin + 0.5) * (rmin + 0.5) * std::sqrt(1 - p.max_eccentricity * p.max_eccentricity);
  if (p.max_count * smallest > 0.5 * S * S) {
    throw GenerationError("synth: " + std::to_string(p.max_count) + " blobs of radius >= " + std::to_string(rmin) +
                          " cannot be packed into " + std::to_string(S) + "x" + std::to_string(S));
  }

  Rng rng(p.seed);
  std::vector<Sample> out;
  out.reserve(p.n_images);
  for (int n = 0; n < p.n_images; ++n) {
    const int count = rng.between(p.min_count, p.max_count);
    std::vector<int> owner;
    std::vector<Ellipse> blobs;
    std::vector<double> gain;
    bool packed = false;
    for (int restart = 0; restart < kImageRestarts && !packed; ++restart) {
      owner.assign(static_cast<std::size_t>(S) * S, 0);
      blobs.clear();
      gain.clear();
      packed = true;
      for (int k = 1; k <= count && packed; ++k) {
        bool placed = false;
        for (int attempt = 0; attempt < kPlacementAttempts && !placed; ++attempt) {
          const double a = rng.uniform(rmin, rmax);
          const double e = rng.uniform(0.0, p.max_eccentricity);
          const double b = std::max(1.0, a * std::sqrt(1 - e * e));
          const double theta = rng.uniform(0.0, M_PI);
          const double cy = rng.uniform(b, S - 1 - b), cx = rng.uniform(b, S - 1 - b);
          const Ellipse el{cy, cx, a, b, std::cos(theta), std::sin(theta)};

          std::vector<int> kept;
          int total = 0;
          const int y0 = std::max(0, static_cast<int>(cy - a - 1)), y1 = std::min(S - 1, static_cast<int>(cy + a + 1));
          const int x0 = std::max(0, static_cast<int>(cx - a - 1)), x1 = std::min(S - 1, static_cast<int>(cx + a + 1));
          for (int y = y0; y <= y1; ++y) {
            for (int x = x0; x <= x1; ++x) {
              if (el.rho2(y, x) > 1.0) continue;
              ++total;
              bool free = true;
              for (int dy = -1; dy <= 1 && free; ++dy) {
                for (int dx = -1; dx <= 1; ++dx) {
                  const int yy = y + dy, xx = x + dx;
                  if (yy >= 0 && yy < S && xx >= 0 && xx < S && owner[yy * S + xx] != 0) {
                    free = false;
                    break;
                  }
                }
              }
              if (free) kept.push_back(y * S + x);
            }
          }
          if (static_cast<int>(kept.size()) < std::max(kMinBlobArea, static_cast<int>(kMinKeptFraction * total))) continue;
          if (!single_component(kept, S)) continue;
          for (int q : kept) owner[q] = k;
          blobs.push_back(el);
          gain.push_back(rng.uniform(0.85, 1.15));
          placed = true;
        }
        packed = placed;
      }
    }
    if (!packed) {
      throw GenerationError("synth: could not place " + std::to_string(count) + " blobs in image " + std::to_string(n) +
                            " (" + std::to_string(S) + "x" + std::to_string(S) + ")");
    }

    Sample s;
    char id[64];
    std::snprintf(id, sizeof id, "%s_%04d", p.id_prefix.c_str(), n);
    s.id = id;
    s.image = Image(S, S, 1);
    s.mask = Mask(S, S);
    for (int y = 0; y < S; ++y) {
      for (int x = 0; x < S; ++x) {
        const int k = owner[y * S + x];
        double v = p.background;
        if (k > 0) {
          s.mask.at(y, x) = 1;
          const double r2 = std::min(1.0, blobs[k - 1].rho2(y, x));
          v = p.foreground * gain[k - 1] * (0.85 + 0.15 * (1.0 - r2));
        }
        v += p.noise_sigma * rng.normal();
        s.image.at(y, x) = static_cast<float>(std::clamp(v, 0.0, 1.0));
      }
    }
    s.true_count = count;
    if (label_components_8(s.mask).count != count) {
      throw GenerationError("synth: internal component check failed for " + s.id);
    }
    out.push_back(std::move(s));
  }
  return out;
}

Tensor images_tensor(const std::vector<const Sample*>& samples) {
  if (samples.empty()) throw DimensionError("images_tensor: empty batch");
  const Image& first = samples[0]->image;
  const int C = first.channels, H = first.height, W = first.width;
  std::vector<float> d(samples.size() * static_cast<std::size_t>(C) * H * W);
  std::size_t i = 0;
  for (const Sample* s : samples) {
    const Image& im = s->image;
    if (im.channels != C || im.height != H || im.width != W) {
      throw DimensionError("images_tensor: sample " + s->id + " does not match the batch shape");
    }
    for (int c = 0; c < C; ++c)
      for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) d[i++] = im.at(y, x, c);
  }
  return Tensor::from_data({static_cast<int>(samples.size()), C, H, W}, std::move(d));
}

Tensor masks_tensor(const std::vector<const Sample*>& samples) {
  if (samples.empty()) throw DimensionError("masks_tensor: empty batch");
  const int H = samples[0]->mask.height, W = samples[0]->mask.width;
  std::vector<float> d;
  d.reserve(samples.size() * static_cast<std::size_t>(H) * W);
  for (const Sample* s : samples) {
    if (s->mask.height != H || s->mask.width != W) {
      throw DimensionError("masks_tensor: sample " + s->id + " does not match the batch shape");
    }
    for (auto v : s->mask.data) d.push_back(static_cast<float>(v));
  }
  return Tensor::from_data({static_cast<int>(samples.size()), H, W}, std::move(d));
}

}  // namespace pidcount
