#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "pseg/tensor.hpp"

namespace pseg::nn {

struct Parameter {
  std::string name;
  Tensor tensor;
};

/// Adam with bias correction. One moment pair per parameter, in the order
/// the parameters were registered.
class Adam {
 public:
  struct Options {
    float lr = 1e-4f;
    float beta1 = 0.9f;
    float beta2 = 0.999f;
    float epsilon = 1e-8f;
  };

  Adam(std::span<const Parameter> params, Options opts);

  /// Applies one update from each parameter's accumulated grad. Parameters
  /// without a grad are treated as having a zero gradient.
  void step();
  void zero_grad();

  std::int64_t step_count() const { return step_; }
  const Options& options() const { return opts_; }
  std::span<const float> first_moment(std::size_t i) const { return m_.at(i); }
  std::span<const float> second_moment(std::size_t i) const { return v_.at(i); }

 private:
  std::vector<Tensor> params_;
  std::vector<std::vector<float>> m_;
  std::vector<std::vector<float>> v_;
  Options opts_;
  std::int64_t step_ = 0;
};

/// Single Adam update on raw arrays; the building block of Adam::step().
/// `step` is the 1-based index of this update.
void adam_update(std::span<float> param, std::span<const float> grad,
                 std::span<float> m, std::span<float> v, std::int64_t step,
                 const Adam::Options& opts);

}  // namespace pseg::nn
