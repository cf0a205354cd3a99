#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "pseg/checkpoint.hpp"
#include "pseg/data.hpp"
#include "pseg/imaging.hpp"
#include "pseg/metrics.hpp"
#include "pseg/unet.hpp"

namespace pseg::train {

struct TrainConfig {
  float lr = 1e-4f;
  int batch_size = 8;
  int max_epochs = 0;  // required; validate() rejects 0
  int patience = 5;
  float val_fraction = 0.2f;
  float theta = imaging::kDefaultTheta;
  int min_area = imaging::kDefaultMinArea;
  bool augment = false;
  std::uint64_t seed = 0;
  int max_steps = 0;  // optimizer step budget; 0 = unlimited

  void validate() const;
};

/// Stops after `patience` consecutive epochs without an improvement of at
/// least `min_delta` over the best value so far. Epochs are 1-based.
class EarlyStopping {
 public:
  explicit EarlyStopping(int patience, double min_delta = 1e-5);

  /// Records one epoch; returns true when it became the new best.
  bool update(int epoch, double value);
  bool should_stop() const { return since_best_ >= patience_; }
  int best_epoch() const { return best_epoch_; }
  double best_value() const { return best_; }

 private:
  int patience_;
  double min_delta_;
  int best_epoch_ = 0;
  double best_ = 0.0;
  int since_best_ = 0;
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_dice = 0.0;
  double val_iou = 0.0;
};

struct TrainHistory {
  std::vector<EpochRecord> per_epoch;
  int best_epoch = 0;
  bool stopped_early = false;
  std::int64_t steps = 0;

  /// `epoch,train_loss,val_loss,val_dice,val_iou` rows.
  std::string to_csv() const;
};

struct TrainHooks {
  /// Replaces the value fed to early stopping (the recorded val_loss is
  /// unchanged). Receives (epoch, val_loss).
  std::function<double(int, double)> monitor;
  std::function<void(const EpochRecord&)> on_epoch;
};

struct TrainResult {
  model::Checkpoint best;  // weights of best_epoch, also loaded into the model
  TrainHistory history;
};

/// Trains on `train_set`, early-stops on mean BCE over `val_set`.
TrainResult train(model::UNet& model, const data::DatasetIndex& train_set,
                  const data::DatasetIndex& val_set, const TrainConfig& cfg,
                  const TrainHooks& hooks = {});
/// Splits `index` by cfg.val_fraction / cfg.seed, then trains.
TrainResult train(model::UNet& model, const data::DatasetIndex& index, const TrainConfig& cfg,
                  const TrainHooks& hooks = {});

struct Validation {
  double loss = 0.0;  // mean BCE over every pixel
  metrics::EvalReport report;
};

/// Eval-mode pass: BCE against the masks plus Dice/IoU after
/// binarize -> remove_small_components.
Validation validate(const model::UNet& model, const data::DatasetIndex& index, float theta,
                    int min_area, int batch_size = 8);

metrics::EvalReport evaluate(const model::UNet& model, const data::DatasetIndex& index,
                             float theta, int min_area, int batch_size = 8);

/// Binarize at theta, then drop components below min_area.
BinaryMask postprocess(const imaging::ProbabilityMap& p, float theta, int min_area);

struct Prediction {
  imaging::GrayImage input;  // preprocessed model input
  imaging::ProbabilityMap prob;
  BinaryMask mask;
  std::string rle;
  imaging::RgbImage overlay;
};

/// Decodes, preprocesses to image_size x image_size, runs the model and
/// post-processes. Throws imaging::ImageError for unreadable images.
Prediction predict(const model::UNet& model, std::span<const std::uint8_t> image_bytes,
                   float theta, int min_area, int image_size);
Prediction predict(const model::UNet& model, const imaging::Gray8& raw, float theta,
                   int min_area, int image_size);

/// Image size stored in checkpoint metadata, or the default when absent.
int checkpoint_image_size(const model::Checkpoint& ckpt);

}  // namespace pseg::train
