#pragma once

#include <cstdint>
#include <string>

#include "flowsr/model.hpp"

namespace flowsr {

struct CheckpointMeta {
    std::uint64_t rng_seed = 0;
    bool actnorm_initialized = false;
    std::string normalization = "per_volume_minmax_pm1";
};

/// Writes <path> (raw float64, little-endian, all state tensors concatenated)
/// and <path>.json (format version, model config, per-tensor name/shape/
/// offset table, training seed). Round-trips bit-exactly.
void save_checkpoint(const std::string& path, SrFlowModel& model, const CheckpointMeta& meta);

/// Model config stored in the manifest, for constructing a matching model.
ModelConfig read_checkpoint_config(const std::string& path);

/// Loads all state tensors into a model built from the stored config and
/// restores the actnorm-initialized flag.
CheckpointMeta load_checkpoint(const std::string& path, SrFlowModel& model);

}  // namespace flowsr
