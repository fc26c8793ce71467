#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "flowsr/model.hpp"
#include "flowsr/volume.hpp"

namespace flowsr {

struct UqConfig {
    int samples = 40;
    std::uint64_t seed = 0;
    int lr_pad = 2;  // halo width, in input voxels, around each tile
    int scale = 2;   // total upscale factor, a power of two
    int threads = 1;
    bool keep_samples = false;  // retain the final-pass per-sample volumes
    bool zero_eps = false;      // zero base noise: one deterministic path
};

struct SrResult {
    Volume mean;
    Volume sigma;
    std::vector<Volume> samples;
};

struct Tile {
    int origin[3];  // (d,h,w) of the tile core in the input grid
    int extent[3];
};

/// Partition of a [D,H,W] grid into cores of at most `core` per axis; the
/// trailing tile on an axis takes the remainder.
std::vector<Tile> plan_tiles(const int dims[3], int core);

/// Tile core plus a pad-wide halo from a [1,D,H,W] tensor, mirrored across
/// the domain boundary without duplicating the edge sample.
Tensor extract_padded_block(const Tensor& vol, const Tile& tile, int pad);

/// Applies fn to every padded tile and assembles the outputs scaled by
/// `scale` per axis, cropping the halo so each output voxel is written
/// exactly once. fn receives the padded block and the tile index.
Tensor stitch_tiles(const Tensor& vol, int core, int pad, int scale,
                    const std::function<Tensor(const Tensor&, std::size_t)>& fn);

/// Mean and population standard deviation (two passes, divisor n) over n
/// draws.
struct SampleStats {
    Tensor mean;
    Tensor sigma;
};
SampleStats sample_stats(const std::function<Tensor()>& draw, int n);

/// Tiled probabilistic super-resolution. The input is normalized to [-1,1]
/// by its own value range; each factor of two runs one tiled sampling pass
/// whose per-tile mean feeds the next pass; the voxelwise spread comes from
/// the final pass. Deterministic for a fixed seed regardless of threads.
SrResult super_resolve(const SrFlowModel& model, const Volume& input, const UqConfig& cfg);

}  // namespace flowsr
