#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "kgfuse/rng.hpp"

namespace kgfuse {

inline constexpr std::uint32_t kCheckpointVersion = 1;

enum class Phase : std::uint8_t { kPretrained = 0, kFinetuned = 1 };

std::string_view phase_name(Phase phase);

struct NamedTensor {
  std::string name;
  std::vector<std::uint32_t> dims;
  std::vector<double> values;
  friend bool operator==(const NamedTensor&, const NamedTensor&) = default;
};

// Little-endian layout: "CGMK", u32 version, u8 phase, u32 config length and
// text, u32 tensor count, then per tensor u16 name length and name, u8 rank,
// u32 dims, f64 values; finally the 32-byte RNG state.
struct Checkpoint {
  Phase phase = Phase::kPretrained;
  std::string config_text;
  std::vector<NamedTensor> tensors;
  Rng::State rng{};

  const NamedTensor* find(std::string_view name) const;
  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

std::string encode_checkpoint(const Checkpoint& ckpt);
// FormatError for bad magic or truncated/trailing bytes, VersionError for
// an unknown version.
Checkpoint decode_checkpoint(std::string_view bytes);

// Writes to a temporary sibling then renames over `path`. IoError on failure.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace kgfuse
