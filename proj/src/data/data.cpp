#include "pseg/data.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <unordered_map>

#include "pseg/io.hpp"

namespace pseg::data {

namespace fs = std::filesystem;

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

bool valid_id(std::string_view id) {
  return !id.empty() && id != "." && id != ".." &&
         id.find_first_of("/\\\"") == std::string_view::npos;
}

struct PendingEntry {
  std::string id;
  std::vector<std::pair<std::size_t, std::string>> rles;  // (line, text)
};

}  // namespace

DatasetIndex load_index(std::string_view csv, const fs::path& root, int image_size) {
  if (image_size <= 0) throw DataError("image_size must be positive");
  DatasetIndex index;
  index.root = root;
  index.image_size = image_size;

  std::vector<PendingEntry> pending;
  std::unordered_map<std::string, std::size_t> slot;
  bool have_header = false;
  std::size_t line_no = 0, pos = 0;
  while (pos < csv.size()) {
    auto nl = csv.find('\n', pos);
    if (nl == std::string_view::npos) nl = csv.size();
    const auto line = trim(csv.substr(pos, nl - pos));
    pos = nl + 1;
    ++line_no;
    if (line.empty()) continue;
    if (!have_header) {
      if (line != kCsvHeader)
        throw DataError(fmt::format("line {}: expected header '{}'", line_no, kCsvHeader));
      have_header = true;
      continue;
    }
    const auto comma = line.find(',');
    if (comma == std::string_view::npos || line.find(',', comma + 1) != std::string_view::npos)
      throw DataError(fmt::format("line {}: expected 2 fields", line_no));
    const auto id = trim(line.substr(0, comma));
    const auto rle_text = trim(line.substr(comma + 1));
    if (!valid_id(id)) throw DataError(fmt::format("line {}: invalid image id '{}'", line_no, id));
    if (rle_text.empty()) throw DataError(fmt::format("line {}: empty EncodedPixels", line_no));
    auto [it, fresh] = slot.emplace(std::string(id), pending.size());
    if (fresh) pending.push_back({std::string(id), {}});
    pending[it->second].rles.emplace_back(line_no, std::string(rle_text));
  }
  if (!have_header) throw DataError("index is empty: missing header");

  for (const auto& p : pending) {
    const auto path = root / (p.id + ".png");
    std::error_code ec;
    if (!fs::is_regular_file(path, ec)) {
      index.skipped.push_back({p.id, "missing file " + path.string()});
      continue;
    }
    imaging::Gray8 raw;
    try {
      raw = imaging::decode_png(io::read_file(path));
    } catch (const std::exception& e) {
      index.skipped.push_back({p.id, std::string("corrupt: ") + e.what()});
      ++index.corrupt_count;
      continue;
    }
    std::vector<std::uint8_t> merged(static_cast<std::size_t>(raw.width) * raw.height, 0);
    for (const auto& [ln, text] : p.rles) {
      BinaryMask m;
      try {
        m = rle::decode(text, raw.width, raw.height);
      } catch (const rle::RleError& e) {
        throw DataError(fmt::format("line {}: {}", ln, e.what()));
      }
      for (std::size_t i = 0; i < merged.size(); ++i) merged[i] |= m.pixels()[i];
    }
    index.entries.push_back({p.id, rle::encode(BinaryMask(raw.width, raw.height, std::move(merged))),
                             raw.width, raw.height});
  }
  return index;
}

DatasetIndex load_index_file(const fs::path& csv_path, const fs::path& root, int image_size) {
  const auto bytes = io::read_file(csv_path);
  return load_index(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()),
                    root, image_size);
}

std::string to_csv(const DatasetIndex& index) {
  std::string out(kCsvHeader);
  out += '\n';
  for (const auto& e : index.entries) out += e.id + "," + e.rle + "\n";
  return out;
}

imaging::GrayImage preprocess(const imaging::Gray8& raw, int image_size) {
  auto img = imaging::equalize_hist(imaging::normalize01(raw));
  if (img.width == image_size && img.height == image_size) return img;
  return imaging::resize_bilinear(img, image_size, image_size);
}

Sample load_sample(const DatasetIndex& index, std::size_t i) {
  const auto& e = index.entries.at(i);
  try {
    const auto raw = imaging::decode_png(io::read_file(index.image_path(e)));
    if (raw.width != e.width || raw.height != e.height)
      throw DataError(fmt::format("image is {}x{}, index says {}x{}", raw.width, raw.height,
                                  e.width, e.height));
    Sample s;
    s.id = e.id;
    s.image = preprocess(raw, index.image_size);
    s.mask = imaging::resize_nearest(rle::decode(e.rle, e.width, e.height), index.image_size,
                                     index.image_size);
    return s;
  } catch (const std::exception& ex) {
    throw DataError(fmt::format("sample '{}': {}", e.id, ex.what()));
  }
}

std::size_t validation_count(std::size_t n, float val_fraction) {
  return static_cast<std::size_t>(std::llround(static_cast<double>(n) * val_fraction));
}

std::pair<DatasetIndex, DatasetIndex> split(const DatasetIndex& index, float val_fraction,
                                            std::uint64_t seed) {
  if (!(val_fraction > 0.0f && val_fraction < 1.0f))
    throw std::invalid_argument("split: val_fraction must lie in (0,1)");
  const std::size_t n = index.entries.size();
  std::vector<std::size_t> perm(n);
  for (std::size_t i = 0; i < n; ++i) perm[i] = i;
  std::mt19937_64 rng(seed);
  std::shuffle(perm.begin(), perm.end(), rng);
  const std::size_t n_val = validation_count(n, val_fraction);
  std::vector<char> is_val(n, 0);
  for (std::size_t k = 0; k < n_val; ++k) is_val[perm[k]] = 1;

  DatasetIndex train, val;
  for (auto* part : {&train, &val}) {
    part->root = index.root;
    part->image_size = index.image_size;
  }
  for (std::size_t i = 0; i < n; ++i) (is_val[i] ? val : train).entries.push_back(index.entries[i]);
  return {std::move(train), std::move(val)};
}

Batch make_batch(const std::vector<Sample>& samples) {
  if (samples.empty()) throw DataError("cannot batch zero samples");
  const int s = samples.front().image.width;
  const auto plane = static_cast<std::size_t>(s) * s;
  std::vector<float> img(samples.size() * plane), msk(samples.size() * plane);
  Batch b;
  for (std::size_t k = 0; k < samples.size(); ++k) {
    const auto& smp = samples[k];
    if (smp.image.width != s || smp.image.height != s || smp.mask.width() != s ||
        smp.mask.height() != s)
      throw DataError("sample '" + smp.id + "' does not match the batch size " + std::to_string(s));
    std::copy(smp.image.pixels.begin(), smp.image.pixels.end(), img.begin() + k * plane);
    std::copy(smp.mask.pixels().begin(), smp.mask.pixels().end(), msk.begin() + k * plane);
    b.ids.push_back(smp.id);
  }
  const nn::Shape shape{static_cast<std::int64_t>(samples.size()), 1, s, s};
  b.images = nn::Tensor(shape, std::move(img));
  b.masks = nn::Tensor(shape, std::move(msk));
  return b;
}

BatchStream::BatchStream(const DatasetIndex& index, int batch_size, std::uint64_t seed,
                         bool augment, float crop_min_frac)
    : index_(index),
      batch_size_(batch_size),
      augment_(augment),
      crop_min_frac_(crop_min_frac),
      rng_(seed),
      order_(index.entries.size()) {
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = i;
  std::shuffle(order_.begin(), order_.end(), rng_);
}

std::size_t BatchStream::num_batches() const {
  return (order_.size() + batch_size_ - 1) / batch_size_;
}

std::optional<Batch> BatchStream::next() {
  if (pos_ >= order_.size()) return std::nullopt;
  const std::size_t end = std::min(order_.size(), pos_ + static_cast<std::size_t>(batch_size_));
  std::vector<Sample> samples;
  for (; pos_ < end; ++pos_) {
    auto s = load_sample(index_, order_[pos_]);
    if (augment_) {
      auto [img, msk] = imaging::random_crop_resize(s.image, s.mask, rng_, crop_min_frac_);
      s.image = std::move(img);
      s.mask = std::move(msk);
    }
    samples.push_back(std::move(s));
  }
  return make_batch(samples);
}

void SyntheticConfig::validate() const {
  if (n_samples <= 0) throw std::invalid_argument("synthetic: n_samples must be > 0");
  if (image_size < 8) throw std::invalid_argument("synthetic: image_size must be >= 8");
  if (!(empty_fraction >= 0.0f && empty_fraction <= 1.0f))
    throw std::invalid_argument("synthetic: empty_fraction must lie in [0,1]");
  if (!(noise_std >= 0.0f)) throw std::invalid_argument("synthetic: noise_std must be >= 0");
}

namespace {

bool inside(const Ellipse& e, double x, double y) {
  const double dx = x - e.cx, dy = y - e.cy;
  const double c = std::cos(e.angle), s = std::sin(e.angle);
  const double u = (dx * c + dy * s) / e.a, v = (-dx * s + dy * c) / e.b;
  return u * u + v * v <= 1.0;
}

}  // namespace

std::vector<SyntheticSample> synthesize(const SyntheticConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed);
  const int n = cfg.n_samples, s = cfg.image_size;

  // Exactly round(n * empty_fraction) negatives, at seeded positions.
  std::vector<char> empty(n, 0);
  const auto n_empty = std::min<std::size_t>(
      n, static_cast<std::size_t>(std::llround(static_cast<double>(n) * cfg.empty_fraction)));
  std::fill(empty.begin(), empty.begin() + static_cast<std::ptrdiff_t>(n_empty), 1);
  std::shuffle(empty.begin(), empty.end(), rng);

  std::uniform_real_distribution<double> center(0.3 * s, 0.7 * s), axis(0.12 * s, 0.25 * s),
      angle(0.0, std::numbers::pi);
  std::normal_distribution<double> noise(0.0, cfg.noise_std);
  constexpr double kBackground = 0.2, kForeground = 0.75;

  std::vector<SyntheticSample> out;
  for (int k = 0; k < n; ++k) {
    SyntheticSample smp;
    smp.id = fmt::format("synth_{:04d}", k);
    if (!empty[k]) {
      const double cx = center(rng), cy = center(rng), a = axis(rng), b = axis(rng);
      smp.ellipse = Ellipse{cx, cy, a, b, angle(rng)};
    }
    smp.image = {s, s, std::vector<std::uint8_t>(static_cast<std::size_t>(s) * s)};
    smp.mask = BinaryMask(s, s);
    for (int r = 0; r < s; ++r)
      for (int c = 0; c < s; ++c) {
        const bool in = smp.ellipse && inside(*smp.ellipse, c + 0.5, r + 0.5);
        double v = (in ? kForeground : kBackground);
        if (cfg.noise_std > 0) v += noise(rng);
        smp.image.pixels[static_cast<std::size_t>(r) * s + c] =
            static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
        if (in) smp.mask.set(r, c, true);
      }
    out.push_back(std::move(smp));
  }
  return out;
}

DatasetIndex generate_synthetic(const SyntheticConfig& cfg, const fs::path& dir,
                                int image_size) {
  const auto samples = synthesize(cfg);
  const auto images = dir / "images";
  std::error_code ec;
  fs::create_directories(images, ec);
  if (ec) throw DataError("cannot create " + images.string() + ": " + ec.message());
  std::string csv(kCsvHeader);
  csv += '\n';
  for (const auto& smp : samples) {
    io::write_file(images / (smp.id + ".png"), imaging::encode_png(smp.image));
    csv += smp.id + "," + rle::encode(smp.mask) + "\n";
  }
  io::write_file(dir / "index.csv", csv);
  return load_index(csv, images, image_size > 0 ? image_size : cfg.image_size);
}

}  // namespace pseg::data
