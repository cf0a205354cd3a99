#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "pseg/adam.hpp"
#include "pseg/ops.hpp"

namespace pseg::model {

using nn::Mode;
using nn::Parameter;
using nn::Tensor;

struct ModelConfig {
  int in_channels = 1;
  int out_channels = 1;
  int depth = 4;
  int base_channels = 16;
  int blocks_per_stage = 2;
  std::uint64_t seed = 0;

  /// Throws std::invalid_argument naming the violated constraint.
  void validate() const;
  int channels_at(int stage) const { return base_channels << stage; }
  /// Spatial dims must be a multiple of this.
  int spatial_multiple() const { return 1 << depth; }

  bool operator==(const ModelConfig&) const = default;
};

class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(int in_ch, int out_ch, int kernel, int padding, bool with_bias, std::mt19937_64& rng);

  Tensor forward(const Tensor& x) const;
  void collect(const std::string& prefix, std::vector<Parameter>& out) const;

  Tensor weight;
  std::optional<Tensor> bias;
  int padding = 0;
};

class BatchNorm2d {
 public:
  BatchNorm2d() = default;
  explicit BatchNorm2d(int channels);

  Tensor forward(const Tensor& x, Mode mode);
  Tensor infer(const Tensor& x) const;
  void collect(const std::string& prefix, std::vector<Parameter>& out) const;
  void collect_buffers(const std::string& prefix, std::vector<Parameter>& out) const;

  Tensor gamma;
  Tensor beta;
  nn::RunningStats stats;
};

/// conv3x3-bn-relu, conv3x3-bn, plus shortcut (1x1 projection when the
/// channel count changes), then relu.
class ResidualBlock {
 public:
  ResidualBlock() = default;
  ResidualBlock(int in_ch, int out_ch, std::mt19937_64& rng);

  Tensor forward(const Tensor& x, Mode mode);
  Tensor infer(const Tensor& x) const;
  void collect(const std::string& prefix, std::vector<Parameter>& out) const;
  void collect_buffers(const std::string& prefix, std::vector<Parameter>& out) const;

 private:
  template <class Self>
  static Tensor run(Self& self, const Tensor& x, Mode mode);

  Conv2d conv1_;
  BatchNorm2d bn1_;
  Conv2d conv2_;
  BatchNorm2d bn2_;
  std::optional<Conv2d> proj_;
};

struct ForwardOptions {
  /// Stage indices whose encoder activation is replaced by zeros before the
  /// decoder concatenation. Used to probe the skip wiring.
  std::vector<int> zero_skips;
};

/// U-Net with a residual encoder. Encoder stage i has base_channels * 2^i
/// channels; the bottleneck sits below the last pool at 2^depth.
class UNet {
 public:
  explicit UNet(const ModelConfig& config);

  const ModelConfig& config() const { return config_; }

  /// N x in_channels x H x W -> N x out_channels x H x W probabilities.
  /// Train mode updates batch-norm running statistics.
  Tensor forward(const Tensor& x, Mode mode, const ForwardOptions& opts = {});
  /// Eval-mode forward; never mutates the model.
  Tensor infer(const Tensor& x, const ForwardOptions& opts = {}) const;

  /// Trainable parameters in registration order.
  std::vector<Parameter> parameters() const;
  /// Batch-norm running statistics.
  std::vector<Parameter> buffers() const;
  /// parameters() followed by buffers(); the checkpoint payload.
  std::vector<Parameter> named_arrays() const;

 private:
  template <class Self>
  static Tensor run(Self& self, const Tensor& x, Mode mode, const ForwardOptions& opts);
  void check_input(const Tensor& x) const;

  ModelConfig config_;
  std::vector<std::vector<ResidualBlock>> encoder_;
  std::vector<ResidualBlock> bottleneck_;
  std::vector<ResidualBlock> decoder_;  // decoder_[i] produces stage i
  Conv2d head_;
};

std::int64_t count_params(std::span<const Parameter> params);
std::int64_t count_params(const UNet& model);

/// Name prefix shared by every encoder array.
inline constexpr std::string_view kEncoderPrefix = "enc";

}  // namespace pseg::model
