#pragma once

#include <cstdint>
#include <string>

#include "flowsr/volume.hpp"

namespace flowsr {

/// Deterministic test fields. "swirl" is a band-limited oscillatory product
/// with seeded phase and frequency jitter (the base frequency sets how hard
/// it is to super-resolve); "blobs" is a sum of random Gaussian bumps.
/// Values are rescaled to [0,1]; count == 0 blobs give an all-zero field.
struct SynthSpec {
    std::string kind = "swirl";  // "swirl" or "blobs"
    int dims[3] = {64, 64, 64};
    int count = 6;       // blob count
    double freq = 3.0;   // swirl base frequency, cycles per edge
    std::uint64_t seed = 0;
};

Volume make_synthetic(const SynthSpec& spec);

}  // namespace flowsr
