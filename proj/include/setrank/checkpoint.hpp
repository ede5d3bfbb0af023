#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "setrank/core.hpp"
#include "setrank/made.hpp"
#include "setrank/masksa.hpp"

// Checkpoint layout: a text header of "key value..." lines declaring the
// format version, model kind, label-space digest, architecture, and every
// tensor's name and shape, then a raw little-endian float64 payload holding
// the tensors row-major in header order. The header ends with the payload's
// byte count and SHA-256, so truncation or corruption is always detected.

namespace setrank {

inline constexpr int kCheckpointVersion = 1;

enum class ModelKind { kMade, kMaskSa };

std::string model_kind_name(ModelKind kind);

/// Free-form key/value pairs stored alongside the model (training settings etc.).
using CheckpointMeta = std::map<std::string, std::string>;

std::string serialize_checkpoint(const MadeModel& model, const CheckpointMeta& meta = {});
std::string serialize_checkpoint(const MaskSaModel& model, const CheckpointMeta& meta = {});

/// Throws InputError on a malformed or truncated image, a version or kind
/// mismatch, or a label-space digest that differs from `space`.
MadeModel deserialize_made(const std::string& bytes, const LabelSpace& space);
MaskSaModel deserialize_masksa(const std::string& bytes, const LabelSpace& space);
ModelKind checkpoint_kind(const std::string& bytes);
CheckpointMeta checkpoint_meta(const std::string& bytes);

void save_checkpoint(const MadeModel& model, const std::filesystem::path& path, const CheckpointMeta& meta = {});
void save_checkpoint(const MaskSaModel& model, const std::filesystem::path& path, const CheckpointMeta& meta = {});
MadeModel load_made_checkpoint(const std::filesystem::path& path, const LabelSpace& space);
MaskSaModel load_masksa_checkpoint(const std::filesystem::path& path, const LabelSpace& space);

std::string read_file_bytes(const std::filesystem::path& path);

}  // namespace setrank
