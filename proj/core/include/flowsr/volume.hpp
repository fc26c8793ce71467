#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "flowsr/tensor.hpp"

namespace flowsr {

/// Scalar field on a regular grid. The data layout is x-fastest: index
/// (x,y,z) lives at (z * dims[1] + y) * dims[0] + x.
struct Volume {
    int dims[3] = {0, 0, 0};  // x, y, z extents
    std::vector<double> data;
    std::string name;
    double value_min = 0.0;
    double value_max = 0.0;

    std::int64_t voxel_count() const {
        return static_cast<std::int64_t>(dims[0]) * dims[1] * dims[2];
    }
    std::int64_t index(int x, int y, int z) const {
        return (static_cast<std::int64_t>(z) * dims[1] + y) * dims[0] + x;
    }
    double& at(int x, int y, int z) { return data[static_cast<std::size_t>(index(x, y, z))]; }
    double at(int x, int y, int z) const { return data[static_cast<std::size_t>(index(x, y, z))]; }
};

/// On disk a volume is <path> (raw float32, little-endian, x-fastest) plus
/// <path>.json describing dims, dtype and the value range.
Volume read_volume(const std::string& path);
/// Writes the raw data (cast to float32) and the sidecar; value_min/value_max
/// are recomputed from the rounded data so the sidecar matches the file.
void write_volume(const std::string& path, const Volume& vol);

struct ValueRange {
    double lo = 0.0;
    double hi = 0.0;
    double extent() const { return hi - lo; }
};
ValueRange volume_range(const Volume& vol);

/// Affine map of [lo,hi] onto [-1,1] in place. A degenerate range maps
/// everything to 0 so constant volumes stay usable.
void normalize_values(std::vector<double>& data, ValueRange range);
void denormalize_values(std::vector<double>& data, ValueRange range);

/// [1, z, y, x] tensor view of the volume (x-fastest matches the innermost
/// tensor axis, so this is a straight copy).
Tensor volume_to_tensor(const Volume& vol);
Volume tensor_to_volume(const Tensor& t, const std::string& name);

}  // namespace flowsr
