#include "pseg/checkpoint.hpp"

#include <bit>
#include <charconv>
#include <cstring>
#include <set>
#include <sstream>

namespace pseg::model {

namespace {

using Kind = CheckpointError::Kind;
constexpr char kMagic[4] = {'P', 'S', 'E', 'G'};
constexpr std::string_view kMetaPrefix = "meta.";

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> in) : in_(in) {}

  void need(std::size_t n, const char* what) const {
    if (in_.size() - pos_ < n)
      throw CheckpointError(Kind::truncated, std::string("checkpoint truncated while reading ") +
                                                 what + " at byte " + std::to_string(pos_));
  }
  std::uint8_t u8(const char* what) {
    need(1, what);
    return in_[pos_++];
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::string str(const char* what) {
    const auto n = u32(what);
    need(n, what);
    std::string s(reinterpret_cast<const char*>(in_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  void floats(std::vector<float>& out, std::size_t n, const char* what) {
    if (n > (in_.size() - pos_) / 4) need(n * 4, what);
    out.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      std::uint32_t v = 0;
      for (int b = 0; b < 4; ++b) v |= static_cast<std::uint32_t>(in_[pos_ + b]) << (8 * b);
      out[i] = std::bit_cast<float>(v);
      pos_ += 4;
    }
  }
  std::span<const std::uint8_t> raw(std::size_t n, const char* what) {
    need(n, what);
    auto s = in_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == in_.size(); }

 private:
  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
};

template <class T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  const auto* end = value.data() + value.size();
  auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end)
    throw CheckpointError(Kind::bad_config, "checkpoint config: bad value for " + key + ": '" +
                                                value + "'");
  return out;
}

void parse_config_text(const std::string& text, ModelConfig& config,
                       std::map<std::string, std::string>* metadata) {
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw CheckpointError(Kind::bad_config, "checkpoint config: malformed line '" + line + "'");
    const std::string key = line.substr(0, eq), value = line.substr(eq + 1);
    if (key == "in_channels")
      config.in_channels = parse_number<int>(key, value);
    else if (key == "out_channels")
      config.out_channels = parse_number<int>(key, value);
    else if (key == "depth")
      config.depth = parse_number<int>(key, value);
    else if (key == "base_channels")
      config.base_channels = parse_number<int>(key, value);
    else if (key == "blocks_per_stage")
      config.blocks_per_stage = parse_number<int>(key, value);
    else if (key == "seed")
      config.seed = parse_number<std::uint64_t>(key, value);
    else if (metadata && key.starts_with(kMetaPrefix))
      (*metadata)[key.substr(kMetaPrefix.size())] = value;
    else
      throw CheckpointError(Kind::bad_config, "checkpoint config: unknown key '" + key + "'");
  }
  try {
    config.validate();
  } catch (const std::invalid_argument& e) {
    throw CheckpointError(Kind::bad_config, e.what());
  }
}

}  // namespace

std::string config_to_text(const ModelConfig& c) {
  std::ostringstream out;
  out << "in_channels=" << c.in_channels << "\n"
      << "out_channels=" << c.out_channels << "\n"
      << "depth=" << c.depth << "\n"
      << "base_channels=" << c.base_channels << "\n"
      << "blocks_per_stage=" << c.blocks_per_stage << "\n"
      << "seed=" << c.seed << "\n";
  return out.str();
}

ModelConfig config_from_text(const std::string& text) {
  ModelConfig c;
  parse_config_text(text, c, nullptr);
  return c;
}

Checkpoint Checkpoint::from_model(const UNet& model, std::map<std::string, std::string> metadata) {
  Checkpoint ckpt;
  ckpt.config = model.config();
  ckpt.metadata = std::move(metadata);
  for (const auto& p : model.named_arrays()) {
    auto values = p.tensor.data();
    ckpt.arrays.push_back({p.name, p.tensor.shape(), {values.begin(), values.end()}});
  }
  return ckpt;
}

std::vector<std::uint8_t> Checkpoint::serialize() const {
  std::string text = config_to_text(config);
  for (const auto& [k, v] : metadata) {
    if (k.find_first_of("=\n") != std::string::npos || v.find('\n') != std::string::npos)
      throw std::invalid_argument("checkpoint metadata '" + k + "' contains '=' or newline");
    text += std::string(kMetaPrefix) + k + "=" + v + "\n";
  }
  Writer w;
  w.bytes(kMagic, sizeof kMagic);
  w.u32(format_version);
  w.str(text);
  w.u32(static_cast<std::uint32_t>(arrays.size()));
  for (const auto& a : arrays) {
    if (nn::numel(a.shape) != static_cast<std::int64_t>(a.values.size()))
      throw std::invalid_argument("checkpoint array '" + a.name + "' has " +
                                  std::to_string(a.values.size()) + " values for shape " +
                                  nn::shape_str(a.shape));
    w.str(a.name);
    w.u8(static_cast<std::uint8_t>(a.shape.size()));
    for (auto d : a.shape) w.u32(static_cast<std::uint32_t>(d));
    for (float v : a.values) w.f32(v);
  }
  return w.take();
}

Checkpoint Checkpoint::parse(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  auto magic = r.raw(4, "magic");
  if (std::memcmp(magic.data(), kMagic, 4) != 0)
    throw CheckpointError(Kind::bad_magic, "not a checkpoint: bad magic bytes");
  Checkpoint ckpt;
  ckpt.format_version = r.u32("format version");
  if (ckpt.format_version != kCheckpointVersion)
    throw CheckpointError(Kind::unsupported_version,
                          "unsupported checkpoint version " +
                              std::to_string(ckpt.format_version) + " (expected " +
                              std::to_string(kCheckpointVersion) + ")");
  parse_config_text(r.str("config"), ckpt.config, &ckpt.metadata);
  const auto count = r.u32("array count");
  std::set<std::string> seen;
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedArray a;
    a.name = r.str("array name");
    if (!seen.insert(a.name).second)
      throw CheckpointError(Kind::duplicate_array, "checkpoint array '" + a.name + "' repeated");
    const auto rank = r.u8("array rank");
    for (int d = 0; d < rank; ++d) a.shape.push_back(r.u32("array dims"));
    r.floats(a.values, static_cast<std::size_t>(nn::numel(a.shape)), "array payload");
    ckpt.arrays.push_back(std::move(a));
  }
  return ckpt;
}

std::vector<std::uint8_t> save_checkpoint(const UNet& model,
                                          const std::map<std::string, std::string>& metadata) {
  return Checkpoint::from_model(model, metadata).serialize();
}

void load_weights(UNet& model, const Checkpoint& ckpt, LoadMode mode) {
  std::map<std::string, const NamedArray*> by_name;
  for (const auto& a : ckpt.arrays) by_name[a.name] = &a;

  auto targets = model.named_arrays();
  std::set<std::string> known;
  for (auto& p : targets) {
    known.insert(p.name);
    const bool wanted = mode == LoadMode::full || p.name.starts_with(kEncoderPrefix);
    if (!wanted) continue;
    auto it = by_name.find(p.name);
    if (it == by_name.end())
      throw CheckpointError(Kind::missing_array, "checkpoint is missing array '" + p.name + "'");
    const NamedArray& src = *it->second;
    if (src.shape != p.tensor.shape())
      throw CheckpointError(Kind::shape_mismatch,
                            "shape mismatch for '" + p.name + "': checkpoint " +
                                nn::shape_str(src.shape) + ", model " +
                                nn::shape_str(p.tensor.shape()));
  }
  for (const auto& a : ckpt.arrays)
    if (!known.contains(a.name) && mode == LoadMode::full)
      throw CheckpointError(Kind::unknown_array, "checkpoint array '" + a.name +
                                                     "' does not exist in the model");

  // All checks passed; copy.
  for (auto& p : targets) {
    auto it = by_name.find(p.name);
    if (it == by_name.end()) continue;
    if (mode == LoadMode::encoder_only && !p.name.starts_with(kEncoderPrefix)) continue;
    std::copy(it->second->values.begin(), it->second->values.end(), p.tensor.data().begin());
  }
}

UNet load_checkpoint(const Checkpoint& ckpt) {
  UNet model(ckpt.config);
  load_weights(model, ckpt, LoadMode::full);
  return model;
}

UNet load_checkpoint(std::span<const std::uint8_t> bytes) {
  return load_checkpoint(Checkpoint::parse(bytes));
}

}  // namespace pseg::model
