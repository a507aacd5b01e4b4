#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "kgfuse/encoder.hpp"
#include "kgfuse/training.hpp"

namespace kgfuse {

struct RunConfig {
  EncoderConfig encoder;
  TrainConfig train;
  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

// Every recognised key, in the order config_to_text writes them.
const std::vector<std::string>& config_keys();

// Flat `key = value` lines; blank lines and `#` comments are ignored. Keys
// missing from the text keep their defaults. Unknown or repeated keys and
// unparsable values raise ConfigError naming `source` and the line.
RunConfig parse_config(std::string_view text, const std::string& source = "<config>");
// IoError when the file cannot be read.
RunConfig load_config(const std::filesystem::path& path);

// Every key with its effective value; parse_config(config_to_text(c)) == c.
std::string config_to_text(const RunConfig& config);

}  // namespace kgfuse
