#pragma once

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "kgfuse/checkpoint.hpp"
#include "kgfuse/config.hpp"
#include "kgfuse/encoder.hpp"
#include "kgfuse/training.hpp"

namespace kgfuse {

// Everything a checkpoint restores: the model, the config it was trained
// with and, after fine-tuning, the user-item links the model reads.
struct ModelBundle {
  RunConfig config;
  EncoderModel model;
  Phase phase = Phase::kPretrained;
  Rng rng;
  std::size_t num_users = 0;
  std::vector<UserItem> links;
};

Checkpoint to_checkpoint(const ModelBundle& bundle);
// FormatError when tensors are missing, unexpected or misshapen; ConfigError
// when the stored config does not parse.
ModelBundle from_checkpoint(const Checkpoint& ckpt);

// Runs one command (args exclude the program name). Reports go to `out` as
// JSON, logs and errors to `err`. Returns 0 on success, 2 on I/O errors and
// 1 for everything else, including usage errors.
int run_command(std::span<const std::string> args, std::ostream& out, std::ostream& err);

}  // namespace kgfuse
