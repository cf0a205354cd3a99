#pragma once

// Central finite-difference oracle. Independent of the tape: the numeric
// side only ever calls the forward function and reduces outputs in double.

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "pseg/ops.hpp"

namespace pseg::testing {

using nn::Tensor;

struct GradCheckResult {
  double max_rel_error = 0.0;  // per input, ||analytic - numeric||_inf / scale
  std::size_t worst_input = 0;
};

inline Tensor random_tensor(nn::Shape shape, std::mt19937_64& rng, float lo = -1.0f,
                            float hi = 1.0f, bool requires_grad = true) {
  std::uniform_real_distribution<float> dist(lo, hi);
  std::vector<float> v(static_cast<std::size_t>(nn::numel(shape)));
  for (auto& x : v) x = dist(rng);
  return Tensor(std::move(shape), std::move(v), requires_grad);
}

// Values spaced well apart so no max-pool window has a near tie and no
// relu input sits within a finite-difference step of zero.
inline Tensor spaced_tensor(nn::Shape shape, std::mt19937_64& rng) {
  const auto n = nn::numel(shape);
  std::vector<float> v(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) v[i] = -1.0f + 0.05f * static_cast<float>(i) + 0.0125f;
  std::shuffle(v.begin(), v.end(), rng);
  return Tensor(std::move(shape), std::move(v), true);
}

/// Checks d(sum(f(inputs) * r))/d(inputs) for a fixed random projection r.
/// The relative error of each input is its max abs deviation divided by the
/// larger of the two gradients' max magnitudes (floored at 1e-3).
inline GradCheckResult grad_check(const std::function<Tensor(const std::vector<Tensor>&)>& f,
                                  std::vector<Tensor> inputs, std::mt19937_64& rng,
                                  float h = 1e-3f) {
  Tensor out = f(inputs);
  std::uniform_real_distribution<float> dist(-1.0f, 1.0f);
  std::vector<float> r(out.data().size());
  for (auto& v : r) v = dist(rng);
  const Tensor proj(out.shape(), r);

  for (auto& in : inputs) in.zero_grad();
  nn::sum(nn::mul(out, proj)).backward();

  auto objective = [&]() {
    nn::NoGradGuard guard;
    Tensor o = f(inputs);
    double s = 0.0;
    for (std::size_t i = 0; i < r.size(); ++i) s += static_cast<double>(o.data()[i]) * r[i];
    return s;
  };

  GradCheckResult res;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    Tensor& in = inputs[k];
    if (!in.requires_grad()) continue;
    std::vector<float> analytic(in.data().size(), 0.0f);
    if (in.has_grad()) std::copy(in.grad().begin(), in.grad().end(), analytic.begin());
    double max_diff = 0.0, scale = 1e-3;
    for (std::size_t i = 0; i < in.data().size(); ++i) {
      const float orig = in.data()[i];
      in.data()[i] = orig + h;
      const double up = objective();
      in.data()[i] = orig - h;
      const double down = objective();
      in.data()[i] = orig;
      const double numeric = (up - down) / (2.0 * h);
      max_diff = std::max(max_diff, std::abs(numeric - analytic[i]));
      scale = std::max({scale, std::abs(numeric), std::abs(static_cast<double>(analytic[i]))});
    }
    const double rel = max_diff / scale;
    if (rel > res.max_rel_error) {
      res.max_rel_error = rel;
      res.worst_input = k;
    }
  }
  return res;
}

}  // namespace pseg::testing
