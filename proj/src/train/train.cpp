#include "pseg/train.hpp"

#include <fmt/format.h>

#include <cmath>
#include <stdexcept>

#include "pseg/adam.hpp"

namespace pseg::train {

using nn::Tensor;

void TrainConfig::validate() const {
  if (!(lr > 0.0f)) throw std::invalid_argument("lr must be > 0");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (max_epochs < 1) throw std::invalid_argument("max_epochs is required and must be >= 1");
  if (patience < 1) throw std::invalid_argument("patience must be >= 1");
  if (!(val_fraction > 0.0f && val_fraction < 1.0f))
    throw std::invalid_argument("val_fraction must lie in (0,1)");
  if (!(theta > 0.0f && theta < 1.0f)) throw std::invalid_argument("theta must lie in (0,1)");
  if (min_area < 0) throw std::invalid_argument("min_area must be >= 0");
  if (max_steps < 0) throw std::invalid_argument("max_steps must be >= 0");
}

EarlyStopping::EarlyStopping(int patience, double min_delta)
    : patience_(patience), min_delta_(min_delta) {
  if (patience < 1) throw std::invalid_argument("patience must be >= 1");
}

bool EarlyStopping::update(int epoch, double value) {
  if (best_epoch_ == 0 || best_ - value >= min_delta_) {
    best_ = value;
    best_epoch_ = epoch;
    since_best_ = 0;
    return true;
  }
  ++since_best_;
  return false;
}

std::string TrainHistory::to_csv() const {
  std::string out = "epoch,train_loss,val_loss,val_dice,val_iou\n";
  for (const auto& r : per_epoch)
    out += fmt::format("{},{:.6f},{:.6f},{:.6f},{:.6f}\n", r.epoch, r.train_loss, r.val_loss,
                       r.val_dice, r.val_iou);
  return out;
}

namespace {

imaging::ProbabilityMap plane(const Tensor& probs, std::int64_t n) {
  const int h = static_cast<int>(probs.dim(2)), w = static_cast<int>(probs.dim(3));
  const auto sz = static_cast<std::size_t>(h) * w;
  const auto d = probs.data();
  imaging::ProbabilityMap p{w, h, std::vector<float>(d.begin() + n * sz, d.begin() + (n + 1) * sz)};
  return p;
}

std::uint64_t epoch_seed(std::uint64_t seed, int epoch) {
  return seed ^ (0x9E3779B97F4A7C15ULL * static_cast<std::uint64_t>(epoch));
}

}  // namespace

BinaryMask postprocess(const imaging::ProbabilityMap& p, float theta, int min_area) {
  return imaging::remove_small_components(imaging::binarize(p, theta), min_area);
}

Validation validate(const model::UNet& model, const data::DatasetIndex& index, float theta,
                    int min_area, int batch_size) {
  if (index.entries.empty()) throw std::invalid_argument("validation set is empty");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  nn::NoGradGuard guard;
  double loss_sum = 0.0;
  std::int64_t pixels = 0;
  std::vector<metrics::SampleScore> scores;
  for (std::size_t start = 0; start < index.entries.size(); start += batch_size) {
    const auto end = std::min(index.entries.size(), start + static_cast<std::size_t>(batch_size));
    std::vector<data::Sample> samples;
    for (auto i = start; i < end; ++i) samples.push_back(data::load_sample(index, i));
    const auto batch = data::make_batch(samples);
    const Tensor probs = model.infer(batch.images);
    loss_sum += static_cast<double>(metrics::bce_loss(probs, batch.masks).item()) * probs.numel();
    pixels += probs.numel();
    for (std::size_t k = 0; k < samples.size(); ++k) {
      const auto mask = postprocess(plane(probs, static_cast<std::int64_t>(k)), theta, min_area);
      scores.push_back({samples[k].id, metrics::dice(mask, samples[k].mask),
                        metrics::iou(mask, samples[k].mask)});
    }
  }
  return {loss_sum / static_cast<double>(pixels),
          metrics::aggregate(std::move(scores), theta, min_area)};
}

metrics::EvalReport evaluate(const model::UNet& model, const data::DatasetIndex& index,
                             float theta, int min_area, int batch_size) {
  return validate(model, index, theta, min_area, batch_size).report;
}

TrainResult train(model::UNet& model, const data::DatasetIndex& train_set,
                  const data::DatasetIndex& val_set, const TrainConfig& cfg,
                  const TrainHooks& hooks) {
  cfg.validate();
  if (train_set.entries.empty()) throw std::invalid_argument("training split is empty");
  if (val_set.entries.empty()) throw std::invalid_argument("validation split is empty");
  if (train_set.image_size % model.config().spatial_multiple() != 0)
    throw std::invalid_argument(fmt::format("image_size {} is not a multiple of {} (depth {})",
                                            train_set.image_size,
                                            model.config().spatial_multiple(),
                                            model.config().depth));

  const auto params = model.parameters();
  nn::Adam opt(params, {.lr = cfg.lr});
  EarlyStopping stopper(cfg.patience);
  TrainResult result;
  auto& hist = result.history;
  auto snapshot_meta = [&](int epoch, double val_loss) {
    return std::map<std::string, std::string>{
        {"image_size", std::to_string(train_set.image_size)},
        {"best_epoch", std::to_string(epoch)},
        {"val_loss", fmt::format("{:.9g}", val_loss)},
        {"theta", fmt::format("{}", cfg.theta)},
        {"min_area", std::to_string(cfg.min_area)},
    };
  };

  bool budget_spent = false;
  for (int epoch = 1; epoch <= cfg.max_epochs && !budget_spent; ++epoch) {
    data::BatchStream stream(train_set, cfg.batch_size, epoch_seed(cfg.seed, epoch), cfg.augment);
    double loss_sum = 0.0;
    std::int64_t seen = 0;
    while (auto batch = stream.next()) {
      opt.zero_grad();
      const Tensor probs = model.forward(batch->images, nn::Mode::train);
      const Tensor loss = metrics::bce_loss(probs, batch->masks);
      loss.backward();
      opt.step();
      loss_sum += static_cast<double>(loss.item()) * batch->images.dim(0);
      seen += batch->images.dim(0);
      ++hist.steps;
      if (cfg.max_steps > 0 && hist.steps >= cfg.max_steps) {
        budget_spent = true;
        break;
      }
    }

    const auto val = validate(model, val_set, cfg.theta, cfg.min_area, cfg.batch_size);
    EpochRecord rec{epoch, loss_sum / static_cast<double>(seen), val.loss, val.report.mean_dice,
                    val.report.mean_iou};
    hist.per_epoch.push_back(rec);
    if (hooks.on_epoch) hooks.on_epoch(rec);

    const double monitored = hooks.monitor ? hooks.monitor(epoch, val.loss) : val.loss;
    if (stopper.update(epoch, monitored))
      result.best = model::Checkpoint::from_model(model, snapshot_meta(epoch, val.loss));
    if (stopper.should_stop()) {
      hist.stopped_early = epoch < cfg.max_epochs;
      break;
    }
  }
  hist.best_epoch = stopper.best_epoch();
  model::load_weights(model, result.best);
  return result;
}

TrainResult train(model::UNet& model, const data::DatasetIndex& index, const TrainConfig& cfg,
                  const TrainHooks& hooks) {
  cfg.validate();
  auto [tr, va] = data::split(index, cfg.val_fraction, cfg.seed);
  return train(model, tr, va, cfg, hooks);
}

Prediction predict(const model::UNet& model, const imaging::Gray8& raw, float theta,
                   int min_area, int image_size) {
  Prediction out;
  out.input = data::preprocess(raw, image_size);
  const Tensor x({1, 1, image_size, image_size}, out.input.pixels);
  const Tensor probs = model.infer(x);
  out.prob = plane(probs, 0);
  out.mask = postprocess(out.prob, theta, min_area);
  out.rle = rle::encode(out.mask);
  out.overlay = imaging::overlay(out.input, out.mask);
  return out;
}

Prediction predict(const model::UNet& model, std::span<const std::uint8_t> image_bytes,
                   float theta, int min_area, int image_size) {
  return predict(model, imaging::decode_png(image_bytes), theta, min_area, image_size);
}

int checkpoint_image_size(const model::Checkpoint& ckpt) {
  const auto it = ckpt.metadata.find("image_size");
  if (it == ckpt.metadata.end()) return data::kDefaultImageSize;
  try {
    const int v = std::stoi(it->second);
    if (v > 0) return v;
  } catch (const std::exception&) {
  }
  throw model::CheckpointError(model::CheckpointError::Kind::bad_config,
                               "checkpoint metadata image_size is not a positive integer: '" +
                                   it->second + "'");
}

}  // namespace pseg::train
