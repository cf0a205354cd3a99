#include "pseg/adam.hpp"

#include <cmath>
#include <stdexcept>

namespace pseg::nn {

Adam::Adam(std::span<const Parameter> params, Options opts) : opts_(opts) {
  if (!(opts.lr > 0.0f)) throw std::invalid_argument("adam: lr must be positive");
  if (!(opts.beta1 > 0.0f && opts.beta1 < 1.0f) || !(opts.beta2 > 0.0f && opts.beta2 < 1.0f))
    throw std::invalid_argument("adam: betas must lie in (0,1)");
  if (!(opts.epsilon > 0.0f)) throw std::invalid_argument("adam: epsilon must be positive");
  for (const auto& p : params) {
    params_.push_back(p.tensor);
    m_.emplace_back(p.tensor.data().size(), 0.0f);
    v_.emplace_back(p.tensor.data().size(), 0.0f);
  }
}

void adam_update(std::span<float> param, std::span<const float> grad,
                 std::span<float> m, std::span<float> v, std::int64_t step,
                 const Adam::Options& opts) {
  if (grad.size() != param.size() || m.size() != param.size() || v.size() != param.size())
    throw ShapeError("adam: gradient/moment size does not match parameter (" +
                     std::to_string(param.size()) + " vs " + std::to_string(grad.size()) + ")");
  if (step < 1) throw std::invalid_argument("adam: step index must be >= 1");
  const double bc1 = 1.0 - std::pow(static_cast<double>(opts.beta1), static_cast<double>(step));
  const double bc2 = 1.0 - std::pow(static_cast<double>(opts.beta2), static_cast<double>(step));
  for (std::size_t i = 0; i < param.size(); ++i) {
    const float g = grad[i];
    m[i] = opts.beta1 * m[i] + (1.0f - opts.beta1) * g;
    v[i] = opts.beta2 * v[i] + (1.0f - opts.beta2) * g * g;
    const double mhat = m[i] / bc1;
    const double vhat = v[i] / bc2;
    param[i] -= static_cast<float>(opts.lr * mhat / (std::sqrt(vhat) + opts.epsilon));
  }
}

void Adam::step() {
  ++step_;
  std::vector<float> zeros;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& p = params_[i];
    std::span<const float> g = p.grad();
    if (!p.has_grad()) {
      zeros.assign(p.data().size(), 0.0f);
      g = zeros;
    }
    adam_update(p.data(), g, m_[i], v_[i], step_, opts_);
  }
}

void Adam::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

}  // namespace pseg::nn
