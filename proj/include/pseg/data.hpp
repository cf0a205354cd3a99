#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "pseg/imaging.hpp"
#include "pseg/tensor.hpp"

namespace pseg::data {

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::string_view kCsvHeader = "ImageId,EncodedPixels";
inline constexpr int kDefaultImageSize = 256;

struct IndexEntry {
  std::string id;
  std::string rle;  // canonical, in the source image's pixel grid
  int width = 0;    // source image dims
  int height = 0;
};

struct SkippedImage {
  std::string id;
  std::string reason;
};

struct DatasetIndex {
  std::vector<IndexEntry> entries;
  std::filesystem::path root;
  int image_size = kDefaultImageSize;
  std::vector<SkippedImage> skipped;  // missing or corrupt files
  int corrupt_count = 0;

  std::filesystem::path image_path(const IndexEntry& e) const { return root / (e.id + ".png"); }
};

/// Parses an `ImageId,EncodedPixels` CSV. Images are resolved as
/// `<root>/<ImageId>.png`. Rows sharing an id are merged by pixelwise OR.
/// Missing or corrupt images are listed in `skipped`; malformed rows throw
/// DataError naming the line.
DatasetIndex load_index(std::string_view csv, const std::filesystem::path& root,
                        int image_size = kDefaultImageSize);
DatasetIndex load_index_file(const std::filesystem::path& csv_path,
                             const std::filesystem::path& root,
                             int image_size = kDefaultImageSize);

std::string to_csv(const DatasetIndex& index);

struct Sample {
  std::string id;
  imaging::GrayImage image;  // image_size x image_size, preprocessed
  BinaryMask mask;
};

/// normalize01 -> equalize_hist -> bilinear resize to the model size.
imaging::GrayImage preprocess(const imaging::Gray8& raw, int image_size);

/// Reads, preprocesses and resizes one sample. Errors name the id.
Sample load_sample(const DatasetIndex& index, std::size_t i);

/// round(n * val_fraction), half away from zero.
std::size_t validation_count(std::size_t n, float val_fraction);

/// Seeded shuffle, then the first validation_count ids go to validation.
/// Both halves keep the index's original order.
std::pair<DatasetIndex, DatasetIndex> split(const DatasetIndex& index, float val_fraction,
                                            std::uint64_t seed);

struct Batch {
  std::vector<std::string> ids;
  nn::Tensor images;  // N x 1 x S x S
  nn::Tensor masks;   // N x 1 x S x S, values in {0,1}
};

/// One epoch over an index in seeded order. Augmentation (random crop +
/// resize back) draws from the same epoch RNG, in batch order.
class BatchStream {
 public:
  BatchStream(const DatasetIndex& index, int batch_size, std::uint64_t seed, bool augment,
              float crop_min_frac = 0.8f);

  std::size_t num_batches() const;
  const std::vector<std::size_t>& order() const { return order_; }
  std::optional<Batch> next();

 private:
  const DatasetIndex& index_;
  int batch_size_;
  bool augment_;
  float crop_min_frac_;
  std::mt19937_64 rng_;
  std::vector<std::size_t> order_;
  std::size_t pos_ = 0;
};

/// Stacks samples into a batch tensor pair.
Batch make_batch(const std::vector<Sample>& samples);

struct SyntheticConfig {
  int n_samples = 16;
  int image_size = 64;
  float empty_fraction = 0.3f;
  float noise_std = 0.05f;
  std::uint64_t seed = 0;

  void validate() const;
};

struct Ellipse {
  double cx, cy;  // pixel coordinates
  double a, b;    // semi-axes
  double angle;   // radians
};

struct SyntheticSample {
  std::string id;
  std::optional<Ellipse> ellipse;
  imaging::Gray8 image;
  BinaryMask mask;
};

/// Pure generation step: dark noisy background, positives add one bright
/// filled ellipse whose interior is the mask.
std::vector<SyntheticSample> synthesize(const SyntheticConfig& cfg);

/// Writes `<dir>/index.csv` and `<dir>/images/<id>.png`, returns the index.
DatasetIndex generate_synthetic(const SyntheticConfig& cfg, const std::filesystem::path& dir,
                                int image_size = 0);

}  // namespace pseg::data
