#include "pseg/unet.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <type_traits>

namespace pseg::model {

void ModelConfig::validate() const {
  auto fail = [](const std::string& what) { throw std::invalid_argument("model config: " + what); };
  if (in_channels < 1) fail("in_channels must be >= 1");
  if (out_channels < 1) fail("out_channels must be >= 1");
  if (depth < 2) fail("depth must be >= 2");
  if (depth > 12) fail("depth must be <= 12");
  if (base_channels < 1) fail("base_channels must be >= 1");
  if (blocks_per_stage < 1) fail("blocks_per_stage must be >= 1");
}

// He fan-in normal init, zero bias.
Conv2d::Conv2d(int in_ch, int out_ch, int kernel, int pad, bool with_bias,
               std::mt19937_64& rng)
    : padding(pad) {
  const int fan_in = in_ch * kernel * kernel;
  std::normal_distribution<float> dist(0.0f, std::sqrt(2.0f / static_cast<float>(fan_in)));
  std::vector<float> w(static_cast<std::size_t>(out_ch) * fan_in);
  for (auto& v : w) v = dist(rng);
  weight = Tensor({out_ch, in_ch, kernel, kernel}, std::move(w), true);
  if (with_bias) bias = Tensor({out_ch}, 0.0f, true);
}

Tensor Conv2d::forward(const Tensor& x) const { return nn::conv2d(x, weight, bias, 1, padding); }

void Conv2d::collect(const std::string& prefix, std::vector<Parameter>& out) const {
  out.push_back({prefix + ".weight", weight});
  if (bias) out.push_back({prefix + ".bias", *bias});
}

BatchNorm2d::BatchNorm2d(int channels)
    : gamma({channels}, 1.0f, true), beta({channels}, 0.0f, true), stats(channels) {}

Tensor BatchNorm2d::forward(const Tensor& x, Mode mode) {
  return nn::batch_norm(x, gamma, beta, stats, mode);
}

Tensor BatchNorm2d::infer(const Tensor& x) const {
  // Handles share storage; eval mode only reads the statistics.
  nn::RunningStats view = stats;
  return nn::batch_norm(x, gamma, beta, view, Mode::eval);
}

void BatchNorm2d::collect(const std::string& prefix, std::vector<Parameter>& out) const {
  out.push_back({prefix + ".weight", gamma});
  out.push_back({prefix + ".bias", beta});
}

void BatchNorm2d::collect_buffers(const std::string& prefix, std::vector<Parameter>& out) const {
  out.push_back({prefix + ".running_mean", stats.mean});
  out.push_back({prefix + ".running_var", stats.var});
}

ResidualBlock::ResidualBlock(int in_ch, int out_ch, std::mt19937_64& rng)
    : conv1_(in_ch, out_ch, 3, 1, false, rng),
      bn1_(out_ch),
      conv2_(out_ch, out_ch, 3, 1, false, rng),
      bn2_(out_ch) {
  if (in_ch != out_ch) proj_.emplace(in_ch, out_ch, 1, 0, true, rng);
}

template <class Self>
Tensor ResidualBlock::run(Self& self, const Tensor& x, Mode mode) {
  auto bn = [mode](auto& layer, const Tensor& t) {
    if constexpr (std::is_const_v<Self>)
      return layer.infer(t);
    else
      return layer.forward(t, mode);
  };
  Tensor h = nn::relu(bn(self.bn1_, self.conv1_.forward(x)));
  h = bn(self.bn2_, self.conv2_.forward(h));
  Tensor shortcut = self.proj_ ? self.proj_->forward(x) : x;
  return nn::relu(nn::add(h, shortcut));
}

Tensor ResidualBlock::forward(const Tensor& x, Mode mode) { return run(*this, x, mode); }
Tensor ResidualBlock::infer(const Tensor& x) const { return run(*this, x, Mode::eval); }

void ResidualBlock::collect(const std::string& prefix, std::vector<Parameter>& out) const {
  conv1_.collect(prefix + ".conv1", out);
  bn1_.collect(prefix + ".bn1", out);
  conv2_.collect(prefix + ".conv2", out);
  bn2_.collect(prefix + ".bn2", out);
  if (proj_) proj_->collect(prefix + ".proj", out);
}

void ResidualBlock::collect_buffers(const std::string& prefix, std::vector<Parameter>& out) const {
  bn1_.collect_buffers(prefix + ".bn1", out);
  bn2_.collect_buffers(prefix + ".bn2", out);
}

UNet::UNet(const ModelConfig& config) : config_(config) {
  config_.validate();
  std::mt19937_64 rng(config_.seed);
  const int depth = config_.depth;

  int in_ch = config_.in_channels;
  encoder_.resize(static_cast<std::size_t>(depth));
  for (int s = 0; s < depth; ++s) {
    const int ch = config_.channels_at(s);
    for (int b = 0; b < config_.blocks_per_stage; ++b) {
      encoder_[s].emplace_back(in_ch, ch, rng);
      in_ch = ch;
    }
  }
  const int bottom = config_.channels_at(depth);
  for (int b = 0; b < config_.blocks_per_stage; ++b) {
    bottleneck_.emplace_back(in_ch, bottom, rng);
    in_ch = bottom;
  }
  decoder_.resize(static_cast<std::size_t>(depth));
  for (int s = depth - 1; s >= 0; --s) {
    const int ch = config_.channels_at(s);
    decoder_[s] = ResidualBlock(in_ch + ch, ch, rng);
    in_ch = ch;
  }
  head_ = Conv2d(in_ch, config_.out_channels, 1, 0, true, rng);
}

void UNet::check_input(const Tensor& x) const {
  if (x.rank() != 4)
    throw nn::ShapeError("unet: expected N x C x H x W input, got " + nn::shape_str(x.shape()));
  if (x.dim(1) != config_.in_channels)
    throw nn::ShapeError("unet: expected " + std::to_string(config_.in_channels) +
                         " input channel(s), got " + nn::shape_str(x.shape()));
  const int m = config_.spatial_multiple();
  if (x.dim(2) % m != 0 || x.dim(3) % m != 0 || x.dim(2) == 0 || x.dim(3) == 0)
    throw nn::ShapeError("unet: spatial dims of " + nn::shape_str(x.shape()) +
                         " must be positive multiples of " + std::to_string(m) +
                         " (2^depth)");
}

template <class Self>
Tensor UNet::run(Self& self, const Tensor& x, Mode mode, const ForwardOptions& opts) {
  self.check_input(x);
  auto block = [mode](auto& b, const Tensor& t) {
    if constexpr (std::is_const_v<Self>)
      return b.infer(t);
    else
      return b.forward(t, mode);
  };
  const int depth = self.config_.depth;
  std::vector<Tensor> skips;
  Tensor h = x;
  for (int s = 0; s < depth; ++s) {
    for (auto& b : self.encoder_[s]) h = block(b, h);
    skips.push_back(h);
    h = nn::max_pool2(h);
  }
  for (auto& b : self.bottleneck_) h = block(b, h);
  for (int s = depth - 1; s >= 0; --s) {
    Tensor skip = skips[s];
    if (std::find(opts.zero_skips.begin(), opts.zero_skips.end(), s) != opts.zero_skips.end())
      skip = Tensor::zeros(skip.shape());
    h = block(self.decoder_[s], nn::concat_channels(nn::upsample2_nearest(h), skip));
  }
  return nn::sigmoid(self.head_.forward(h));
}

Tensor UNet::forward(const Tensor& x, Mode mode, const ForwardOptions& opts) {
  return run(*this, x, mode, opts);
}

Tensor UNet::infer(const Tensor& x, const ForwardOptions& opts) const {
  nn::NoGradGuard no_grad;
  return run(*this, x, Mode::eval, opts);
}

std::vector<Parameter> UNet::parameters() const {
  std::vector<Parameter> out;
  for (std::size_t s = 0; s < encoder_.size(); ++s)
    for (std::size_t b = 0; b < encoder_[s].size(); ++b)
      encoder_[s][b].collect("enc" + std::to_string(s) + ".block" + std::to_string(b), out);
  for (std::size_t b = 0; b < bottleneck_.size(); ++b)
    bottleneck_[b].collect("bottleneck.block" + std::to_string(b), out);
  for (std::size_t s = decoder_.size(); s-- > 0;)
    decoder_[s].collect("dec" + std::to_string(s) + ".block0", out);
  head_.collect("head", out);
  return out;
}

std::vector<Parameter> UNet::buffers() const {
  std::vector<Parameter> out;
  for (std::size_t s = 0; s < encoder_.size(); ++s)
    for (std::size_t b = 0; b < encoder_[s].size(); ++b)
      encoder_[s][b].collect_buffers("enc" + std::to_string(s) + ".block" + std::to_string(b),
                                     out);
  for (std::size_t b = 0; b < bottleneck_.size(); ++b)
    bottleneck_[b].collect_buffers("bottleneck.block" + std::to_string(b), out);
  for (std::size_t s = decoder_.size(); s-- > 0;)
    decoder_[s].collect_buffers("dec" + std::to_string(s) + ".block0", out);
  return out;
}

std::vector<Parameter> UNet::named_arrays() const {
  auto out = parameters();
  auto bufs = buffers();
  out.insert(out.end(), bufs.begin(), bufs.end());
  return out;
}

std::int64_t count_params(std::span<const Parameter> params) {
  std::int64_t n = 0;
  for (const auto& p : params) n += p.tensor.numel();
  return n;
}

std::int64_t count_params(const UNet& model) { return count_params(model.parameters()); }

}  // namespace pseg::model
