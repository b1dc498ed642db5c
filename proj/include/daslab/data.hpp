#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace daslab {

using Rng = std::mt19937_64;

/// Channel-major image geometry. Flat feature vectors use {n, 1, 1}.
struct ImageShape {
  std::size_t channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;

  std::size_t size() const noexcept { return channels * height * width; }
  bool operator==(const ImageShape&) const = default;
};

std::string to_string(const ImageShape& shape);

struct LabeledExample {
  std::vector<float> pixels;  // channel-major, values in [0, 1]
  int label = 0;
};

/// A set of examples sharing one image shape and class count.
struct Dataset {
  ImageShape shape;
  int num_classes = 0;
  std::vector<LabeledExample> examples;

  std::size_t size() const noexcept { return examples.size(); }
};

struct DatasetSplit {
  Dataset train_pool;
  Dataset validation;
  Dataset test;
};

struct SplitSizes {
  std::size_t train = 0;
  std::size_t validation = 0;
  std::size_t test = 0;
};

namespace cifar10 {
inline constexpr std::size_t kChannels = 3;
inline constexpr std::size_t kSide = 32;
inline constexpr std::size_t kPixels = kChannels * kSide * kSide;
inline constexpr std::size_t kRecordBytes = 1 + kPixels;
inline constexpr std::size_t kRecordsPerFile = 10000;
inline constexpr int kNumClasses = 10;
inline constexpr ImageShape kShape{kChannels, kSide, kSide};

/// Train batches first, then the test batch.
inline constexpr std::array<const char*, 6> kFileNames = {
    "data_batch_1.bin", "data_batch_2.bin", "data_batch_3.bin",
    "data_batch_4.bin", "data_batch_5.bin", "test_batch.bin"};
}  // namespace cifar10

/// Decodes CIFAR-10 binary records (1 label byte + 3072 pixel bytes each).
/// Throws MalformedFileError when the length is not a positive multiple of
/// the record size, InvalidLabelError for label bytes above 9.
std::vector<LabeledExample> parse_cifar10_file(std::span<const std::uint8_t> bytes);

/// Inverse of parse_cifar10_file: pixels are rescaled by 255 and rounded.
std::vector<std::uint8_t> serialize_cifar10(std::span<const LabeledExample> examples);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);

/// Loads every CIFAR-10 batch present in `dir` in canonical file order.
/// Throws IoError when none of the six files exist.
Dataset load_cifar10_dir(const std::filesystem::path& dir);

/// Seeded shuffle of `examples`, then consecutive train/validation/test slices.
DatasetSplit split_dataset(const Dataset& examples, SplitSizes sizes, std::uint64_t seed);

/// Random crop after zero padding, then horizontal flip.
struct AugmentConfig {
  std::size_t pad = 4;
  std::size_t crop_size = 32;
  double flip_prob = 0.5;
};

void validate(const AugmentConfig& cfg, const ImageShape& shape);

/// Deterministic core of augment: crop the zero-padded image at
/// (offset_y, offset_x) and optionally mirror it left-to-right.
LabeledExample crop_and_flip(const LabeledExample& example, const ImageShape& shape,
                             const AugmentConfig& cfg, std::size_t offset_y,
                             std::size_t offset_x, bool flip);

/// Draws a crop offset uniformly over the valid range and flips with
/// cfg.flip_prob. `cfg` must already be valid for `shape`.
LabeledExample augment(const LabeledExample& example, const ImageShape& shape,
                       const AugmentConfig& cfg, Rng& rng);

/// Per-channel mean and standard deviation.
struct ChannelStats {
  std::vector<double> mean;
  std::vector<double> stddev;
};

ChannelStats channel_stats(const Dataset& data);
void standardize(Dataset& data, const ChannelStats& stats);

/// Two-class fixture: class 0 ("A") sits tightly around one template; class 1
/// ("B") is a noisy second template. floor(noise_rate_b * n_per_class) class-B
/// items are label flips: they carry label B but are drawn from class A's
/// distribution.
struct TwoClassFixture {
  Dataset data;
  std::vector<std::size_t> flipped;  // indices into data.examples
};

inline constexpr ImageShape kSyntheticShape{3, 8, 8};

TwoClassFixture synth_two_class(std::size_t n_per_class, double noise_rate_b, std::uint64_t seed);

/// Template images the fixture draws around; exposed for tests.
std::vector<float> synth_template(int label);

/// Tiny labeled set used by dry runs: 1x1x1 images, `num_classes` classes.
Dataset stub_dataset(std::size_t count, int num_classes, std::uint64_t seed);

}  // namespace daslab
