#pragma once

#include <string>
#include <vector>

#include "pseg/rle.hpp"
#include "pseg/tensor.hpp"

namespace pseg::metrics {

// Overlap metrics on binary masks. Two empty masks score 1.0: a correct
// "no finding" counts as a perfect prediction.
double dice(const BinaryMask& x, const BinaryMask& y);
double iou(const BinaryMask& x, const BinaryMask& y);

inline constexpr float kBceEps = 1e-7f;

/// Mean binary cross-entropy over every element. `p` are probabilities,
/// `y` targets in {0,1}; logs are taken of p clamped to [eps, 1-eps].
nn::Tensor bce_loss(const nn::Tensor& p, const nn::Tensor& y, float eps = kBceEps);

struct SampleScore {
  std::string id;
  double dice = 0.0;
  double iou = 0.0;
};

struct EvalReport {
  std::vector<SampleScore> per_sample;
  double mean_dice = 0.0;
  double mean_iou = 0.0;
  float theta = 0.0f;
  int min_area = 0;
  int n_samples = 0;

  /// "n theta min_area mean_dice mean_iou" header, then "id dice iou" lines.
  std::string to_text() const;
  std::string to_json() const;
};

/// Unweighted per-sample means. Throws std::invalid_argument on an empty list.
EvalReport aggregate(std::vector<SampleScore> entries, float theta, int min_area);

}  // namespace pseg::metrics
