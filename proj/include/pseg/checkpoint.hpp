#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "pseg/unet.hpp"

namespace pseg::model {

// Binary layout (all integers little-endian):
//   "PSEG" | u32 version | u32 len, config text | u32 count |
//   count x (u32 len, name | u8 rank | rank x u32 dim | f32 payload)
// The config text is `key=value` lines; metadata keys carry a "meta." prefix.
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedArray {
  std::string name;
  nn::Shape shape;
  std::vector<float> values;
};

struct Checkpoint {
  std::uint32_t format_version = kCheckpointVersion;
  ModelConfig config;
  std::vector<NamedArray> arrays;
  std::map<std::string, std::string> metadata;

  static Checkpoint from_model(const UNet& model, std::map<std::string, std::string> metadata = {});
  std::vector<std::uint8_t> serialize() const;
  static Checkpoint parse(std::span<const std::uint8_t> bytes);
};

class CheckpointError : public std::runtime_error {
 public:
  enum class Kind {
    bad_magic,
    unsupported_version,
    truncated,
    bad_config,
    shape_mismatch,
    missing_array,
    unknown_array,
    duplicate_array,
  };
  CheckpointError(Kind kind, const std::string& msg) : std::runtime_error(msg), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

enum class LoadMode {
  full,          // every model array must be present exactly once
  encoder_only,  // only arrays under kEncoderPrefix are copied; the rest keep their init
};

std::vector<std::uint8_t> save_checkpoint(const UNet& model,
                                          const std::map<std::string, std::string>& metadata = {});
/// Builds a model from the stored config and copies every array into it.
UNet load_checkpoint(std::span<const std::uint8_t> bytes);
UNet load_checkpoint(const Checkpoint& ckpt);
/// Copies arrays from `ckpt` into an existing model.
void load_weights(UNet& model, const Checkpoint& ckpt, LoadMode mode = LoadMode::full);

std::string config_to_text(const ModelConfig& config);
ModelConfig config_from_text(const std::string& text);

}  // namespace pseg::model
