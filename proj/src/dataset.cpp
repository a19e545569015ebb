#include "spidernet/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numeric>

#include "spidernet/errors.hpp"

namespace spidernet {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr int kCropPad = 4;

using Vec3 = std::array<double, 3>;

double dist(const Vec3& a, const Vec3& b) {
  double s = 0.0;
  for (int i = 0; i < 3; ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

Vec3 unit(Vec3 v) {
  const double n = std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
  for (double& x : v) x /= n;
  return v;
}

// Evenly spaced points on a circle of radius separation/2 in a random plane
// through (0.5, 0.5, 0.5).
std::vector<Vec3> class_centroids(int classes, double separation, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  const Vec3 u = unit({g(rng), g(rng), g(rng)});
  Vec3 v{g(rng), g(rng), g(rng)};
  const double d = u[0] * v[0] + u[1] * v[1] + u[2] * v[2];
  for (int i = 0; i < 3; ++i) v[i] -= d * u[i];
  v = unit(v);
  const double phase = std::uniform_real_distribution<double>(0.0, 2.0 * kPi)(rng);
  std::vector<Vec3> out;
  for (int k = 0; k < classes; ++k) {
    const double a = phase + 2.0 * kPi * k / classes;
    Vec3 c;
    for (int i = 0; i < 3; ++i) {
      c[i] = 0.5 + 0.5 * separation * (std::cos(a) * u[i] + std::sin(a) * v[i]);
    }
    out.push_back(c);
  }
  return out;
}

void append_split(Split& dst, const Split& src, std::size_t i) {
  const auto img = src.image(i);
  dst.pixels.insert(dst.pixels.end(), img.begin(), img.end());
  dst.labels.push_back(src.labels[i]);
}

void truncate(Split& s, std::size_t n) {
  if (n == 0 || n >= s.size()) return;
  s.labels.resize(n);
  s.pixels.resize(n * s.sample_elements());
}

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw InputError("cannot open " + file.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

DatasetSpec default_spec(DatasetKind kind) {
  DatasetSpec s;
  s.kind = kind;
  if (kind == DatasetKind::kCifar10) {
    s.classes = 10;
    s.image_size = kCifarSide;
    s.augmentation = Augmentation{true, true, 16, true};
  } else {
    s.augmentation = Augmentation{false, false, 0, true};
  }
  return s;
}

Dataset make_synthetic(const DatasetSpec& spec, std::uint64_t seed) {
  if (spec.classes < 2) throw ConfigError("synthetic dataset needs at least 2 classes");
  if (spec.image_size < 1) throw ConfigError("synthetic image size must be >= 1");
  if (spec.samples < static_cast<std::size_t>(2 * spec.classes)) {
    throw ConfigError("synthetic dataset needs at least two samples per class");
  }
  if (!(spec.separation > 0.0) || spec.noise < 0.0) {
    throw ConfigError("synthetic separation must be > 0 and noise >= 0");
  }
  std::mt19937_64 rng(seed);
  const std::vector<Vec3> centroids = class_centroids(spec.classes, spec.separation, rng);
  double min_gap = INFINITY;
  for (std::size_t a = 0; a < centroids.size(); ++a) {
    for (std::size_t b = a + 1; b < centroids.size(); ++b) {
      min_gap = std::min(min_gap, dist(centroids[a], centroids[b]));
    }
  }
  const double margin = 0.1 * min_gap;

  Split all;
  all.channels = 3;
  all.image_size = spec.image_size;
  const std::size_t plane = static_cast<std::size_t>(spec.image_size) * spec.image_size;
  std::normal_distribution<double> noise(0.0, spec.noise);
  std::vector<double> img(3 * plane);
  for (std::size_t i = 0; i < spec.samples; ++i) {
    const int label = static_cast<int>(i % static_cast<std::size_t>(spec.classes));
    for (;;) {
      Vec3 means{0.0, 0.0, 0.0};
      for (int c = 0; c < 3; ++c) {
        for (std::size_t p = 0; p < plane; ++p) {
          const double v = centroids[label][c] + noise(rng);
          img[c * plane + p] = v;
          means[c] += v / static_cast<double>(plane);
        }
      }
      const double own = dist(means, centroids[label]);
      bool ok = true;
      for (int k = 0; k < spec.classes && ok; ++k) {
        if (k != label && dist(means, centroids[k]) - own < margin) ok = false;
      }
      if (ok) break;
    }
    all.pixels.insert(all.pixels.end(), img.begin(), img.end());
    all.labels.push_back(label);
  }

  std::vector<std::size_t> order(all.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  const std::size_t test_n = spec.test_size ? std::min(spec.test_size, all.size() - 1)
                                            : all.size() / 4;

  Dataset d;
  d.classes = spec.classes;
  d.train.channels = d.test.channels = 3;
  d.train.image_size = d.test.image_size = spec.image_size;
  for (std::size_t j = 0; j < order.size(); ++j) {
    append_split(j < test_n ? d.test : d.train, all, order[j]);
  }
  truncate(d.train, spec.train_size);
  d.augmentation = spec.augmentation;
  fit_normalization(d);
  return d;
}

Split parse_cifar_batch(std::span<const std::uint8_t> bytes, const std::string& origin) {
  const std::size_t whole = bytes.size() / kCifarRecordBytes;
  if (bytes.size() % kCifarRecordBytes != 0) {
    throw FormatError(origin + ": truncated record at byte offset " +
                      std::to_string(whole * kCifarRecordBytes) + " (" +
                      std::to_string(bytes.size() % kCifarRecordBytes) + " trailing bytes)");
  }
  Split s;
  s.channels = 3;
  s.image_size = kCifarSide;
  s.pixels.reserve(whole * (kCifarRecordBytes - 1));
  s.labels.reserve(whole);
  for (std::size_t r = 0; r < whole; ++r) {
    const std::size_t off = r * kCifarRecordBytes;
    const int label = bytes[off];
    if (label >= 10) {
      throw FormatError(origin + ": label " + std::to_string(label) + " at byte offset " +
                        std::to_string(off) + " is outside [0,10)");
    }
    s.labels.push_back(label);
    for (std::size_t k = 1; k < kCifarRecordBytes; ++k) {
      s.pixels.push_back(bytes[off + k] / 255.0);
    }
  }
  return s;
}

Split read_cifar_batch(const std::filesystem::path& file) {
  const std::vector<std::uint8_t> bytes = read_bytes(file);
  return parse_cifar_batch(bytes, file.string());
}

Dataset load_cifar10(const DatasetSpec& spec) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(spec.path)) {
    throw InputError("cifar10 path " + spec.path.string() + " is not a directory");
  }
  Dataset d;
  d.classes = 10;
  d.train.channels = d.test.channels = 3;
  d.train.image_size = d.test.image_size = kCifarSide;
  for (int b = 1; b <= 5; ++b) {
    const fs::path f = spec.path / ("data_batch_" + std::to_string(b) + ".bin");
    if (!fs::exists(f)) continue;
    const Split part = read_cifar_batch(f);
    for (std::size_t i = 0; i < part.size(); ++i) append_split(d.train, part, i);
  }
  if (d.train.size() == 0) throw InputError("no data_batch_*.bin under " + spec.path.string());
  const fs::path test = spec.path / "test_batch.bin";
  if (!fs::exists(test)) throw InputError("missing " + test.string());
  d.test = read_cifar_batch(test);
  truncate(d.train, spec.train_size);
  truncate(d.test, spec.test_size);
  d.augmentation = spec.augmentation;
  fit_normalization(d);
  return d;
}

Dataset load_dataset(const DatasetSpec& spec, std::uint64_t seed) {
  return spec.kind == DatasetKind::kCifar10 ? load_cifar10(spec) : make_synthetic(spec, seed);
}

void fit_normalization(Dataset& data) {
  const Split& s = data.train;
  const std::size_t plane = static_cast<std::size_t>(s.image_size) * s.image_size;
  for (int c = 0; c < s.channels && c < 3; ++c) {
    double sum = 0.0;
    double sq = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
      const double* p = s.pixels.data() + i * s.sample_elements() + c * plane;
      for (std::size_t k = 0; k < plane; ++k) {
        sum += p[k];
        sq += p[k] * p[k];
      }
    }
    const double n = static_cast<double>(s.size() * plane);
    data.mean[c] = sum / n;
    data.stddev[c] = std::sqrt(std::max(sq / n - data.mean[c] * data.mean[c], 1e-12));
  }
}

std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, std::size_t batch_size,
                                                   std::mt19937_64& rng) {
  if (batch_size == 0) throw ConfigError("batch size must be >= 1");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t b = 0; b < n; b += batch_size) {
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(b),
                     order.begin() + static_cast<std::ptrdiff_t>(std::min(n, b + batch_size)));
  }
  return out;
}

namespace {

Batch gather(const Dataset& data, const Split& split, std::span<const std::size_t> indices,
             std::mt19937_64* rng) {
  const int side = split.image_size;
  const int ch = split.channels;
  Batch b;
  b.images = Tensor(Shape{static_cast<int>(indices.size()), ch, side, side});
  const Augmentation& aug = data.augmentation;
  for (std::size_t j = 0; j < indices.size(); ++j) {
    const auto src = split.image(indices[j]);
    b.labels.push_back(split.labels[indices[j]]);
    int dy = 0;
    int dx = 0;
    bool flip = false;
    if (rng && aug.random_crop) {
      std::uniform_int_distribution<int> shift(-kCropPad, kCropPad);
      dy = shift(*rng);
      dx = shift(*rng);
    }
    if (rng && aug.horizontal_flip) flip = std::bernoulli_distribution(0.5)(*rng);
    for (int c = 0; c < ch; ++c) {
      const double mean = aug.normalize && c < 3 ? data.mean[c] : 0.0;
      const double sd = aug.normalize && c < 3 ? data.stddev[c] : 1.0;
      for (int y = 0; y < side; ++y) {
        for (int x = 0; x < side; ++x) {
          const int sy = y + dy;
          const int sx0 = x + dx;
          const int sx = flip ? side - 1 - sx0 : sx0;
          double v = 0.0;
          if (sy >= 0 && sy < side && sx0 >= 0 && sx0 < side) {
            v = src[(static_cast<std::size_t>(c) * side + sy) * side + sx];
          }
          b.images.at(static_cast<int>(j), c, y, x) = (v - mean) / sd;
        }
      }
    }
    if (rng && aug.cutout > 0) {
      std::uniform_int_distribution<int> pos(0, side - 1);
      const int cy = pos(*rng);
      const int cx = pos(*rng);
      const int y0 = std::max(0, cy - aug.cutout / 2);
      const int y1 = std::min(side, cy + (aug.cutout + 1) / 2);
      const int x0 = std::max(0, cx - aug.cutout / 2);
      const int x1 = std::min(side, cx + (aug.cutout + 1) / 2);
      for (int c = 0; c < ch; ++c) {
        for (int y = y0; y < y1; ++y) {
          for (int x = x0; x < x1; ++x) b.images.at(static_cast<int>(j), c, y, x) = 0.0;
        }
      }
    }
  }
  return b;
}

}  // namespace

Batch gather_train(const Dataset& data, std::span<const std::size_t> indices,
                   std::mt19937_64& rng) {
  return gather(data, data.train, indices, &rng);
}

Batch gather_test(const Dataset& data, std::span<const std::size_t> indices) {
  return gather(data, data.test, indices, nullptr);
}

}  // namespace spidernet
