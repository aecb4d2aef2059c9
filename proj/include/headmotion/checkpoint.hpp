#pragma once

#include <array>
#include <filesystem>
#include <string>

#include "headmotion/manifest.hpp"
#include "headmotion/network.hpp"
#include "headmotion/preprocess.hpp"
#include "headmotion/softbin.hpp"

namespace headmotion::nn {

/// Everything needed to turn a volume into a prediction besides the weights.
struct ModelInfo {
  NetConfig net;
  softbin::BinGrid grid;
  double sigma = 0.078;
  prep::Preprocess preprocess = prep::Preprocess::Lsb8;
  io::Target target = io::Target::MotionScore;
};

struct Checkpoint {
  ModelInfo info;
  Params params;
};

/// Flat `key = value` echo of a ModelInfo (also embedded in checkpoints).
std::string describe(const ModelInfo& info);
ModelInfo parse_model_info(const std::string& text);

/// Binary container: magic "HMCKPT01", format version, config echo, named tensors with
/// shapes and little-endian float64 payloads, trailing CRC-32 of all preceding bytes.
void write_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);

/// Throws Integrity on checksum mismatch or a damaged container.
Checkpoint read_checkpoint(const std::filesystem::path& path);

}  // namespace headmotion::nn
