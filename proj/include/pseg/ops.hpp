#pragma once

#include <optional>

#include "pseg/tensor.hpp"

namespace pseg::nn {

enum class Mode { train, eval };

/// Batch-norm running statistics, one entry per channel. Not trained by
/// gradient; updated in train mode and saved with the checkpoint.
struct RunningStats {
  Tensor mean;
  Tensor var;

  explicit RunningStats(std::int64_t channels = 0)
      : mean(Shape{channels}, 0.0f), var(Shape{channels}, 1.0f) {}
};

// Layer primitives. Image tensors are N x C x H x W.

Tensor conv2d(const Tensor& input, const Tensor& weight,
              const std::optional<Tensor>& bias, int stride, int padding);

/// 2x2 max pooling with stride 2. Ties route the gradient to the first
/// cell in row-major window order.
Tensor max_pool2(const Tensor& input);

Tensor upsample2_nearest(const Tensor& input);

Tensor concat_channels(const Tensor& a, const Tensor& b);
Tensor slice_channels(const Tensor& input, std::int64_t begin, std::int64_t end);

inline constexpr float kBatchNormMomentum = 0.1f;
inline constexpr float kBatchNormEps = 1e-5f;

/// Train mode normalizes with biased batch statistics and folds them into
/// `stats` (running var uses the unbiased estimate). Eval mode reads `stats`.
Tensor batch_norm(const Tensor& input, const Tensor& gamma, const Tensor& beta,
                  RunningStats& stats, Mode mode,
                  float momentum = kBatchNormMomentum, float eps = kBatchNormEps);

Tensor relu(const Tensor& input);
Tensor sigmoid(const Tensor& input);

Tensor add(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor sum(const Tensor& input);
Tensor mean(const Tensor& input);

}  // namespace pseg::nn
