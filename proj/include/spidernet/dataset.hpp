#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "spidernet/tensor.hpp"

namespace spidernet {

enum class DatasetKind { kSynthetic, kCifar10 };

struct Augmentation {
  bool random_crop = false;  // zero padding of 4, then crop back
  bool horizontal_flip = false;
  int cutout = 0;  // side of the zeroed square, 0 disables
  bool normalize = true;
};

struct DatasetSpec {
  DatasetKind kind = DatasetKind::kSynthetic;
  std::filesystem::path path;  // cifar10: directory of binary batches
  int classes = 2;
  std::size_t samples = 512;
  int image_size = 8;
  double separation = 1.0;
  double noise = 0.25;
  // 0 keeps everything the source provides (synthetic: a quarter goes to test).
  std::size_t train_size = 0;
  std::size_t test_size = 0;
  Augmentation augmentation;
};

// Crop, flip and cutout sized for the spec's resolution.
DatasetSpec default_spec(DatasetKind kind);

struct Split {
  int channels = 3;
  int image_size = 0;
  std::vector<double> pixels;  // sample-major CHW
  std::vector<int> labels;

  std::size_t size() const { return labels.size(); }
  std::size_t sample_elements() const {
    return static_cast<std::size_t>(channels) * image_size * image_size;
  }
  std::span<const double> image(std::size_t i) const {
    return {pixels.data() + i * sample_elements(), sample_elements()};
  }
};

struct Dataset {
  int classes = 0;
  Split train;
  Split test;
  std::array<double, 3> mean{0.0, 0.0, 0.0};
  std::array<double, 3> stddev{1.0, 1.0, 1.0};
  Augmentation augmentation;

  int channels() const { return train.channels; }
  int image_size() const { return train.image_size; }
};

inline constexpr std::size_t kCifarRecordBytes = 3073;
inline constexpr int kCifarSide = 32;

// Class-coloured images: each class has its own per-channel offset, pixels
// add Gaussian noise, and draws whose channel means fall closer to another
// class centroid (or within the margin) are rejected, so the classes are
// linearly separable.
Dataset make_synthetic(const DatasetSpec& spec, std::uint64_t seed);

// One CIFAR-10 binary batch. `origin` names the source in errors.
Split parse_cifar_batch(std::span<const std::uint8_t> bytes, const std::string& origin);
Split read_cifar_batch(const std::filesystem::path& file);
Dataset load_cifar10(const DatasetSpec& spec);

Dataset load_dataset(const DatasetSpec& spec, std::uint64_t seed);

// Per-channel mean and standard deviation of the training split.
void fit_normalization(Dataset& data);

struct Batch {
  Tensor images;
  std::vector<int> labels;
};

// Shuffled index order cut into batches; the last batch may be short.
std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, std::size_t batch_size,
                                                   std::mt19937_64& rng);
// Train batches go through the augmentation pipeline (crop, flip, normalize,
// cutout); test batches are only normalized.
Batch gather_train(const Dataset& data, std::span<const std::size_t> indices,
                   std::mt19937_64& rng);
Batch gather_test(const Dataset& data, std::span<const std::size_t> indices);

}  // namespace spidernet
