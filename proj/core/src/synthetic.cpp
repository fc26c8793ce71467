#include "flowsr/synthetic.hpp"

#include <cmath>

#include "flowsr/rng.hpp"

namespace flowsr {

namespace {

constexpr double two_pi = 6.283185307179586476925286766559;

void rescale_unit(std::vector<double>& data) {
    double lo = data[0], hi = data[0];
    for (double v : data) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    if (hi - lo <= 0.0) {
        std::fill(data.begin(), data.end(), 0.0);
        return;
    }
    const double s = 1.0 / (hi - lo);
    for (double& v : data) v = (v - lo) * s;
}

void fill_swirl(Volume& vol, const SynthSpec& spec) {
    Rng rng = Rng::stream(spec.seed, 11);
    const double f0 = spec.freq * rng.uniform(0.8, 1.2);
    const double f1 = spec.freq * rng.uniform(0.8, 1.2);
    const double f2 = spec.freq * rng.uniform(0.8, 1.2);
    const double f3 = 0.5 * spec.freq * rng.uniform(0.8, 1.2);
    const double p0 = rng.uniform(0.0, two_pi);
    const double p1 = rng.uniform(0.0, two_pi);
    const double p2 = rng.uniform(0.0, two_pi);
    const double p3 = rng.uniform(0.0, two_pi);
    const double warp = 0.35;
    for (int z = 0; z < vol.dims[2]; ++z) {
        const double w = (z + 0.5) / vol.dims[2];
        for (int y = 0; y < vol.dims[1]; ++y) {
            const double v = (y + 0.5) / vol.dims[1];
            for (int x = 0; x < vol.dims[0]; ++x) {
                const double u = (x + 0.5) / vol.dims[0];
                const double r = 2.0 * std::sqrt((u - 0.5) * (u - 0.5) + (v - 0.5) * (v - 0.5) +
                                                 (w - 0.5) * (w - 0.5));
                const double a = std::sin(two_pi * f1 * u + p1 + warp * std::sin(two_pi * f0 * w + p0));
                const double b = std::cos(two_pi * f2 * v + p2 + warp * std::cos(two_pi * f0 * u + p0));
                const double m = 0.6 + 0.4 * std::sin(two_pi * f3 * r + p3);
                vol.at(x, y, z) = a * b * m;
            }
        }
    }
}

void fill_blobs(Volume& vol, const SynthSpec& spec) {
    Rng rng = Rng::stream(spec.seed, 12);
    std::vector<double> cx, cy, cz, w2;
    for (int i = 0; i < spec.count; ++i) {
        cx.push_back(rng.uniform(0.15, 0.85));
        cy.push_back(rng.uniform(0.15, 0.85));
        cz.push_back(rng.uniform(0.15, 0.85));
        const double w = rng.uniform(0.08, 0.2);
        w2.push_back(w * w);
    }
    for (int z = 0; z < vol.dims[2]; ++z) {
        const double pz = (z + 0.5) / vol.dims[2];
        for (int y = 0; y < vol.dims[1]; ++y) {
            const double py = (y + 0.5) / vol.dims[1];
            for (int x = 0; x < vol.dims[0]; ++x) {
                const double px = (x + 0.5) / vol.dims[0];
                double acc = 0.0;
                for (std::size_t i = 0; i < w2.size(); ++i) {
                    const double dx = px - cx[i];
                    const double dy = py - cy[i];
                    const double dz = pz - cz[i];
                    acc += std::exp(-(dx * dx + dy * dy + dz * dz) / (2.0 * w2[i]));
                }
                vol.at(x, y, z) = acc;
            }
        }
    }
}

}  // namespace

Volume make_synthetic(const SynthSpec& spec) {
    require(spec.dims[0] > 0 && spec.dims[1] > 0 && spec.dims[2] > 0,
            "synthetic volume dims must be positive");
    require(spec.kind == "swirl" || spec.kind == "blobs",
            "unknown synthetic kind '" + spec.kind + "', expected swirl or blobs");
    require(spec.count >= 0, "blob count cannot be negative");
    require(spec.freq > 0.0, "swirl frequency must be positive");
    Volume vol;
    vol.dims[0] = spec.dims[0];
    vol.dims[1] = spec.dims[1];
    vol.dims[2] = spec.dims[2];
    vol.name = spec.kind;
    vol.data.assign(static_cast<std::size_t>(vol.voxel_count()), 0.0);
    if (spec.kind == "swirl") {
        fill_swirl(vol, spec);
    } else {
        fill_blobs(vol, spec);
    }
    rescale_unit(vol.data);
    const ValueRange r = volume_range(vol);
    vol.value_min = r.lo;
    vol.value_max = r.hi;
    return vol;
}

}  // namespace flowsr
