#include "daslab/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "daslab/errors.hpp"

namespace daslab {

std::string to_string(const ImageShape& shape) {
  return std::to_string(shape.channels) + "x" + std::to_string(shape.height) + "x" +
         std::to_string(shape.width);
}

std::vector<LabeledExample> parse_cifar10_file(std::span<const std::uint8_t> bytes) {
  if (bytes.empty() || bytes.size() % cifar10::kRecordBytes != 0) {
    throw MalformedFileError("CIFAR-10 data length " + std::to_string(bytes.size()) +
                             " is not a positive multiple of " +
                             std::to_string(cifar10::kRecordBytes));
  }
  const std::size_t records = bytes.size() / cifar10::kRecordBytes;
  std::vector<LabeledExample> out(records);
  for (std::size_t r = 0; r < records; ++r) {
    const auto record = bytes.subspan(r * cifar10::kRecordBytes, cifar10::kRecordBytes);
    const int label = record[0];
    if (label >= cifar10::kNumClasses) throw InvalidLabelError(r, label);
    out[r].label = label;
    out[r].pixels.resize(cifar10::kPixels);
    for (std::size_t i = 0; i < cifar10::kPixels; ++i) {
      out[r].pixels[i] = static_cast<float>(record[1 + i]) / 255.0f;
    }
  }
  return out;
}

std::vector<std::uint8_t> serialize_cifar10(std::span<const LabeledExample> examples) {
  std::vector<std::uint8_t> bytes;
  bytes.reserve(examples.size() * cifar10::kRecordBytes);
  for (std::size_t r = 0; r < examples.size(); ++r) {
    const auto& ex = examples[r];
    if (ex.pixels.size() != cifar10::kPixels) {
      throw StructuralError("example " + std::to_string(r) + " has " +
                            std::to_string(ex.pixels.size()) + " pixels, expected 3072");
    }
    if (ex.label < 0 || ex.label >= cifar10::kNumClasses) throw InvalidLabelError(r, ex.label);
    bytes.push_back(static_cast<std::uint8_t>(ex.label));
    for (float p : ex.pixels) {
      const float scaled = std::clamp(p, 0.0f, 1.0f) * 255.0f;
      bytes.push_back(static_cast<std::uint8_t>(std::lround(scaled)));
    }
  }
  return bytes;
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  in.seekg(0, std::ios::end);
  const auto size = static_cast<std::size_t>(in.tellg());
  in.seekg(0, std::ios::beg);
  std::vector<std::uint8_t> bytes(size);
  if (size > 0 && !in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(size))) {
    throw IoError("short read on " + path.string());
  }
  return bytes;
}

Dataset load_cifar10_dir(const std::filesystem::path& dir) {
  Dataset data{cifar10::kShape, cifar10::kNumClasses, {}};
  bool any = false;
  for (const char* name : cifar10::kFileNames) {
    const auto path = dir / name;
    if (!std::filesystem::exists(path)) continue;
    any = true;
    auto records = parse_cifar10_file(read_file_bytes(path));
    data.examples.insert(data.examples.end(), std::make_move_iterator(records.begin()),
                         std::make_move_iterator(records.end()));
  }
  if (!any) throw IoError("no CIFAR-10 batch files found in " + dir.string());
  return data;
}

DatasetSplit split_dataset(const Dataset& examples, SplitSizes sizes, std::uint64_t seed) {
  const std::size_t total = sizes.train + sizes.validation + sizes.test;
  if (total > examples.size()) {
    throw ConfigError("split sizes " + std::to_string(sizes.train) + "+" +
                      std::to_string(sizes.validation) + "+" + std::to_string(sizes.test) +
                      " exceed dataset size " + std::to_string(examples.size()));
  }
  std::vector<std::size_t> order(examples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  auto take = [&](std::size_t begin, std::size_t count) {
    Dataset part{examples.shape, examples.num_classes, {}};
    part.examples.reserve(count);
    for (std::size_t i = begin; i < begin + count; ++i) part.examples.push_back(examples.examples[order[i]]);
    return part;
  };
  DatasetSplit split;
  split.train_pool = take(0, sizes.train);
  split.validation = take(sizes.train, sizes.validation);
  split.test = take(sizes.train + sizes.validation, sizes.test);
  return split;
}

void validate(const AugmentConfig& cfg, const ImageShape& shape) {
  if (cfg.flip_prob < 0.0 || cfg.flip_prob > 1.0) {
    throw ConfigError("flip probability must lie in [0, 1]");
  }
  if (cfg.crop_size != shape.height || cfg.crop_size != shape.width) {
    throw ConfigError("crop size " + std::to_string(cfg.crop_size) +
                      " must equal the image side for shape " + to_string(shape));
  }
  if (cfg.crop_size > shape.height + 2 * cfg.pad) {
    throw ConfigError("crop size exceeds padded image size");
  }
}

LabeledExample crop_and_flip(const LabeledExample& example, const ImageShape& shape,
                             const AugmentConfig& cfg, std::size_t offset_y,
                             std::size_t offset_x, bool flip) {
  const std::size_t side = cfg.crop_size;
  LabeledExample out{std::vector<float>(shape.channels * side * side, 0.0f), example.label};
  // padded(y, x) = input(y - pad, x - pad), zero outside the input.
  for (std::size_t c = 0; c < shape.channels; ++c) {
    const float* src = example.pixels.data() + c * shape.height * shape.width;
    float* dst = out.pixels.data() + c * side * side;
    for (std::size_t y = 0; y < side; ++y) {
      const auto sy = static_cast<std::ptrdiff_t>(y + offset_y) - static_cast<std::ptrdiff_t>(cfg.pad);
      if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(shape.height)) continue;
      for (std::size_t x = 0; x < side; ++x) {
        const auto sx = static_cast<std::ptrdiff_t>(x + offset_x) - static_cast<std::ptrdiff_t>(cfg.pad);
        if (sx < 0 || sx >= static_cast<std::ptrdiff_t>(shape.width)) continue;
        const std::size_t dx = flip ? side - 1 - x : x;
        dst[y * side + dx] = src[static_cast<std::size_t>(sy) * shape.width + static_cast<std::size_t>(sx)];
      }
    }
  }
  return out;
}

LabeledExample augment(const LabeledExample& example, const ImageShape& shape,
                       const AugmentConfig& cfg, Rng& rng) {
  const std::size_t max_y = shape.height + 2 * cfg.pad - cfg.crop_size;
  const std::size_t max_x = shape.width + 2 * cfg.pad - cfg.crop_size;
  std::uniform_int_distribution<std::size_t> pick_y(0, max_y);
  std::uniform_int_distribution<std::size_t> pick_x(0, max_x);
  const std::size_t oy = pick_y(rng);
  const std::size_t ox = pick_x(rng);
  std::bernoulli_distribution flip(cfg.flip_prob);
  return crop_and_flip(example, shape, cfg, oy, ox, flip(rng));
}

ChannelStats channel_stats(const Dataset& data) {
  const std::size_t plane = data.shape.height * data.shape.width;
  ChannelStats stats{std::vector<double>(data.shape.channels, 0.0),
                     std::vector<double>(data.shape.channels, 0.0)};
  if (data.examples.empty() || plane == 0) {
    std::fill(stats.stddev.begin(), stats.stddev.end(), 1.0);
    return stats;
  }
  const double count = static_cast<double>(data.examples.size() * plane);
  for (std::size_t c = 0; c < data.shape.channels; ++c) {
    double sum = 0.0;
    double sq = 0.0;
    for (const auto& ex : data.examples) {
      for (std::size_t i = 0; i < plane; ++i) {
        const double v = ex.pixels[c * plane + i];
        sum += v;
        sq += v * v;
      }
    }
    const double mean = sum / count;
    const double var = std::max(0.0, sq / count - mean * mean);
    stats.mean[c] = mean;
    stats.stddev[c] = var > 0.0 ? std::sqrt(var) : 1.0;
  }
  return stats;
}

void standardize(Dataset& data, const ChannelStats& stats) {
  const std::size_t plane = data.shape.height * data.shape.width;
  for (auto& ex : data.examples) {
    for (std::size_t c = 0; c < data.shape.channels; ++c) {
      const auto mean = static_cast<float>(stats.mean[c]);
      const auto inv = static_cast<float>(1.0 / stats.stddev[c]);
      for (std::size_t i = 0; i < plane; ++i) {
        float& v = ex.pixels[c * plane + i];
        v = (v - mean) * inv;
      }
    }
  }
}

namespace {

constexpr float kTemplateBase = 0.5f;
constexpr float kTemplateContrast = 0.08f;
constexpr double kNoiseA = 0.03;
constexpr double kNoiseB = 0.3;

LabeledExample draw_around(const std::vector<float>& center, double sigma, int label, Rng& rng) {
  std::normal_distribution<double> noise(0.0, sigma);
  LabeledExample ex{std::vector<float>(center.size()), label};
  for (std::size_t i = 0; i < center.size(); ++i) {
    ex.pixels[i] = static_cast<float>(std::clamp(center[i] + noise(rng), 0.0, 1.0));
  }
  return ex;
}

}  // namespace

std::vector<float> synth_template(int label) {
  // A fixed +-1 pattern (independent of any run seed); class A adds it to a
  // mid-gray base, class B subtracts it.
  Rng pattern_rng(0x5eed7e3a1a7eULL);
  std::bernoulli_distribution coin(0.5);
  std::vector<float> out(kSyntheticShape.size());
  const float sign = label == 0 ? 1.0f : -1.0f;
  for (auto& v : out) {
    const float p = coin(pattern_rng) ? 1.0f : -1.0f;
    v = kTemplateBase + sign * kTemplateContrast * p;
  }
  return out;
}

TwoClassFixture synth_two_class(std::size_t n_per_class, double noise_rate_b, std::uint64_t seed) {
  if (noise_rate_b < 0.0 || noise_rate_b > 0.5) {
    throw ConfigError("noise_rate_b must lie in [0, 0.5]");
  }
  TwoClassFixture fixture{Dataset{kSyntheticShape, 2, {}}, {}};
  if (n_per_class == 0) return fixture;

  Rng rng(seed);
  const auto template_a = synth_template(0);
  const auto template_b = synth_template(1);
  const auto flips = static_cast<std::size_t>(std::floor(noise_rate_b * static_cast<double>(n_per_class)));

  std::vector<std::size_t> b_slots(n_per_class);
  std::iota(b_slots.begin(), b_slots.end(), std::size_t{0});
  std::shuffle(b_slots.begin(), b_slots.end(), rng);
  std::vector<bool> flipped(n_per_class, false);
  for (std::size_t i = 0; i < flips; ++i) flipped[b_slots[i]] = true;

  auto& examples = fixture.data.examples;
  examples.reserve(2 * n_per_class);
  // Interleave A and B so prefixes stay balanced.
  for (std::size_t i = 0; i < n_per_class; ++i) {
    examples.push_back(draw_around(template_a, kNoiseA, 0, rng));
    if (flipped[i]) {
      fixture.flipped.push_back(examples.size());
      examples.push_back(draw_around(template_a, kNoiseA, 1, rng));
    } else {
      examples.push_back(draw_around(template_b, kNoiseB, 1, rng));
    }
  }
  return fixture;
}

Dataset stub_dataset(std::size_t count, int num_classes, std::uint64_t seed) {
  Dataset data{ImageShape{1, 1, 1}, num_classes, {}};
  data.examples.reserve(count);
  Rng rng(seed);
  std::uniform_int_distribution<int> label(0, num_classes - 1);
  std::uniform_real_distribution<float> jitter(0.0f, 0.05f);
  for (std::size_t i = 0; i < count; ++i) {
    const int y = label(rng);
    const float base = num_classes > 1 ? static_cast<float>(y) / static_cast<float>(num_classes) : 0.0f;
    data.examples.push_back({{std::min(1.0f, base + jitter(rng))}, y});
  }
  return data;
}

}  // namespace daslab
