#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string_view>
#include <vector>

#include "spidernet/tape.hpp"
#include "spidernet/tensor.hpp"

namespace spidernet {

enum class PrimitiveKind : std::uint8_t {
  // Searchable operation set.
  kIdentity,
  kMaxPool3x3,
  kAvgPool3x3,
  kSepConv3x3,
  kSepConv5x5,
  kDilConv3x3,
  kDilConv5x5,
  // Fixed plumbing.
  kConv1x1,
  kFactorizedReduce,
  kBatchNorm,
  kReLU,
  kGlobalAvgPool,
  kLinearClassifier,
  kStemConv3x3,
};

inline constexpr std::array<PrimitiveKind, 7> kSearchableKinds = {
    PrimitiveKind::kIdentity,    PrimitiveKind::kMaxPool3x3,  PrimitiveKind::kAvgPool3x3,
    PrimitiveKind::kSepConv3x3,  PrimitiveKind::kSepConv5x5,  PrimitiveKind::kDilConv3x3,
    PrimitiveKind::kDilConv5x5,
};

bool is_searchable(PrimitiveKind kind);
std::string_view kind_name(PrimitiveKind kind);
std::optional<PrimitiveKind> kind_from_name(std::string_view name);

inline constexpr double kBatchNormEps = 1e-5;
inline constexpr double kBatchNormMomentum = 0.1;

struct BatchNormStats {
  std::vector<double> mean;
  std::vector<double> var;

  explicit BatchNormStats(int channels = 0) : mean(channels, 0.0), var(channels, 1.0) {}
  void reset();
};

namespace ops {

struct ConvSpec {
  int stride = 1;
  int pad = 0;
  int dilation = 1;
  int groups = 1;
  // Start index into the input before striding (FactorizedReduce's shifted path).
  int offset = 0;
};

Var conv2d(Tape& tape, Var x, Var weight, const ConvSpec& spec);
// Batch statistics in train mode, running statistics in eval mode. gamma and
// beta have shape (1, C, 1, 1).
Var batch_norm(Tape& tape, Var x, Var gamma, Var beta, BatchNormStats& stats);
Var relu(Tape& tape, Var x);
// 3x3, stride 1, padding 1. Padding never wins the max and is excluded from
// the average.
Var max_pool3x3(Tape& tape, Var x);
Var avg_pool3x3(Tape& tape, Var x);
Var add(Tape& tape, std::span<const Var> xs);
Var scale(Tape& tape, Var x, double factor);
Var concat_channels(Tape& tape, Var a, Var b);
Var global_avg_pool(Tape& tape, Var x);
Var dropout(Tape& tape, Var x, double rate);
// x is flattened per sample; weight (K, F, 1, 1), bias (1, K, 1, 1).
Var linear(Tape& tape, Var x, Var weight, Var bias);
// Mean softmax cross-entropy over the batch; returns a (1,1,1,1) scalar.
Var softmax_cross_entropy(Tape& tape, Var logits, std::span<const int> labels);

}  // namespace ops

// Parameters and statistics for one instance of a primitive.
//
// Layouts:
//   SepConvKxK : [dw1, pw1, gamma1, beta1, dw2, pw2, gamma2, beta2], two BN stats
//   DilConvKxK : [dw, pw, gamma, beta], one BN stat; depthwise dilation 2
//   Conv1x1    : [w, gamma, beta] (projection followed by BatchNorm)
//   FactorizedReduce : [w_a, w_b, gamma, beta] (w_b absent for 1 output channel)
//   BatchNorm  : [gamma, beta]
//   LinearClassifier : [weight, bias]
//   StemConv3x3 : [w]
struct PrimitiveBlock {
  PrimitiveKind kind = PrimitiveKind::kIdentity;
  int in_channels = 0;
  int out_channels = 0;
  std::vector<Param> params;
  std::vector<BatchNormStats> bn;
};

PrimitiveBlock make_block(PrimitiveKind kind, int in_channels, int out_channels,
                          std::mt19937_64& rng);
void reinitialize(PrimitiveBlock& block, std::mt19937_64& rng);

// Runs the primitive on x. Shape mismatches raise StructuralError naming the
// kind and the offending shapes.
Var apply_primitive(Tape& tape, Var x, PrimitiveBlock& block);

std::size_t parameter_count(const PrimitiveBlock& block);
// Non-trainable state (BatchNorm running mean and variance).
std::size_t buffer_count(const PrimitiveBlock& block);
// Output spatial extent of the block for a given input extent.
Shape output_shape(const PrimitiveBlock& block, Shape in);
// Per-sample count of elements in every tensor the block records.
std::size_t activation_elements(const PrimitiveBlock& block, Shape in);

}  // namespace spidernet
