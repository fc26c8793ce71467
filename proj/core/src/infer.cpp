#include "flowsr/infer.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <thread>

namespace flowsr {

namespace {

constexpr int kTileCore = 8;  // tile edge in input voxels, matches training

int reflect_index(int i, int n) {
    if (n == 1) return 0;
    while (i < 0 || i >= n) {
        if (i < 0) i = -i;
        if (i >= n) i = 2 * n - 2 - i;
    }
    return i;
}

}  // namespace

std::vector<Tile> plan_tiles(const int dims[3], int core) {
    require(core >= 1, "tile core must be positive");
    for (int a = 0; a < 3; ++a)
        require(dims[a] >= 1, "grid extents must be positive");
    std::vector<int> starts[3];
    for (int a = 0; a < 3; ++a)
        for (int s = 0; s < dims[a]; s += core) starts[a].push_back(s);
    std::vector<Tile> tiles;
    tiles.reserve(starts[0].size() * starts[1].size() * starts[2].size());
    for (int sd : starts[0])
        for (int sh : starts[1])
            for (int sw : starts[2]) {
                Tile t;
                t.origin[0] = sd;
                t.origin[1] = sh;
                t.origin[2] = sw;
                t.extent[0] = std::min(core, dims[0] - sd);
                t.extent[1] = std::min(core, dims[1] - sh);
                t.extent[2] = std::min(core, dims[2] - sw);
                tiles.push_back(t);
            }
    return tiles;
}

Tensor extract_padded_block(const Tensor& vol, const Tile& tile, int pad) {
    require(vol.rank() == 4 && vol.dim(0) == 1,
            "extract_padded_block expects [1,D,H,W], got " + shape_str(vol.shape()));
    require(pad >= 0, "pad cannot be negative");
    for (int a = 0; a < 3; ++a) {
        require(tile.extent[a] >= 1, "tile extents must be positive");
        require(tile.origin[a] >= 0 && tile.origin[a] + tile.extent[a] <= vol.dim(a + 1),
                "tile does not fit inside the grid");
    }
    Tensor out({1, tile.extent[0] + 2 * pad, tile.extent[1] + 2 * pad, tile.extent[2] + 2 * pad});
    for (int d = 0; d < out.dim(1); ++d) {
        const int sd = reflect_index(tile.origin[0] - pad + d, vol.dim(1));
        for (int h = 0; h < out.dim(2); ++h) {
            const int sh = reflect_index(tile.origin[1] - pad + h, vol.dim(2));
            for (int w = 0; w < out.dim(3); ++w) {
                const int sw = reflect_index(tile.origin[2] - pad + w, vol.dim(3));
                out.at4(0, d, h, w) = vol.at4(0, sd, sh, sw);
            }
        }
    }
    return out;
}

namespace {

/// Writes the core region of a scaled tile output into the assembled grid.
void write_cropped(Tensor& dst, const Tensor& scaled, const Tile& tile, int pad, int scale) {
    const int off[3] = {pad * scale, pad * scale, pad * scale};
    const int ext[3] = {tile.extent[0] * scale, tile.extent[1] * scale, tile.extent[2] * scale};
    const int org[3] = {tile.origin[0] * scale, tile.origin[1] * scale, tile.origin[2] * scale};
    for (int d = 0; d < ext[0]; ++d)
        for (int h = 0; h < ext[1]; ++h) {
            const double* src = scaled.data() + scaled.index4(0, off[0] + d, off[1] + h, off[2]);
            double* out = dst.data() + dst.index4(0, org[0] + d, org[1] + h, org[2]);
            for (int w = 0; w < ext[2]; ++w) out[w] = src[w];
        }
}

}  // namespace

Tensor stitch_tiles(const Tensor& vol, int core, int pad, int scale,
                    const std::function<Tensor(const Tensor&, std::size_t)>& fn) {
    require(scale >= 1, "scale must be positive");
    const int dims[3] = {vol.dim(1), vol.dim(2), vol.dim(3)};
    const std::vector<Tile> tiles = plan_tiles(dims, core);
    Tensor out({1, dims[0] * scale, dims[1] * scale, dims[2] * scale});
    for (std::size_t i = 0; i < tiles.size(); ++i) {
        const Tensor block = extract_padded_block(vol, tiles[i], pad);
        const Tensor scaled = fn(block, i);
        require(scaled.rank() == 4 && scaled.dim(0) == 1 &&
                    scaled.dim(1) == block.dim(1) * scale &&
                    scaled.dim(2) == block.dim(2) * scale &&
                    scaled.dim(3) == block.dim(3) * scale,
                "tile output has shape " + shape_str(scaled.shape()) + ", expected the padded "
                    "block " + shape_str(block.shape()) + " scaled by " + std::to_string(scale));
        write_cropped(out, scaled, tiles[i], pad, scale);
    }
    return out;
}

SampleStats sample_stats(const std::function<Tensor()>& draw, int n) {
    require(n >= 1, "sample count must be positive");
    std::vector<Tensor> samples;
    samples.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) samples.push_back(draw());
    SampleStats st;
    st.mean = Tensor(samples[0].shape());
    for (const Tensor& s : samples) {
        require(s.same_shape(st.mean), "draws returned mismatched shapes");
        st.mean += s;
    }
    st.mean *= 1.0 / static_cast<double>(n);
    st.sigma = Tensor(samples[0].shape());
    for (const Tensor& s : samples)
        for (std::int64_t i = 0; i < s.size(); ++i) {
            const double d = s[i] - st.mean[i];
            st.sigma[i] += d * d;
        }
    for (std::int64_t i = 0; i < st.sigma.size(); ++i)
        st.sigma[i] = std::sqrt(st.sigma[i] / static_cast<double>(n));
    return st;
}

namespace {

/// One tile of one doubling pass for one sample: encode the conditioning
/// block, draw the innermost latent once and run the generative direction.
Tensor generate_tile(const SrFlowModel& model, const Tensor& y_block, Rng& rng, bool zero_eps) {
    Tensor z_lat = model.encode_lr(y_block);
    Tensor mu, logvar;
    model.predict_gaussian(z_lat, mu, logvar);
    Tensor z0 = mu;
    if (!zero_eps)
        for (std::int64_t k = 0; k < z0.size(); ++k)
            z0[k] += std::exp(0.5 * logvar[k]) * rng.normal();
    return model.from_latent(z0, z_lat);
}

}  // namespace

SrResult super_resolve(const SrFlowModel& model, const Volume& input, const UqConfig& cfg) {
    require(cfg.samples >= 1, "sample count must be positive");
    require(cfg.lr_pad >= 0, "lr_pad cannot be negative");
    require(cfg.scale >= 1 && (cfg.scale & (cfg.scale - 1)) == 0,
            "upscale factor must be a power of two, got " + std::to_string(cfg.scale));
    require(cfg.threads >= 1, "threads must be positive");
    require(input.voxel_count() > 0 &&
                static_cast<std::int64_t>(input.data.size()) == input.voxel_count(),
            "input volume is empty or inconsistent");

    const ValueRange range = volume_range(input);
    Volume normed = input;
    normalize_values(normed.data, range);
    Tensor current = volume_to_tensor(normed);

    int passes = 0;
    for (int s = cfg.scale; s > 1; s /= 2) ++passes;

    // Each sample is an independent end-to-end chain: fresh latent draws at
    // every doubling, with the sampled output (not an average) conditioning
    // the next pass. The spread over chains then carries the variance of
    // every stage, so uncertainty grows with the upscale factor.
    std::vector<Tensor> chain(static_cast<std::size_t>(cfg.samples), current);
    for (int pass = 0; pass < passes; ++pass) {
        const int dims[3] = {chain[0].dim(1), chain[0].dim(2), chain[0].dim(3)};
        const std::vector<Tile> tiles = plan_tiles(dims, kTileCore);

        std::vector<Tensor> grown;
        grown.reserve(chain.size());
        for (std::size_t s = 0; s < chain.size(); ++s)
            grown.emplace_back(Tensor({1, dims[0] * 2, dims[1] * 2, dims[2] * 2}));

        // work items are (sample, tile); streams keyed the same way keep the
        // result independent of scheduling and thread count
        const std::size_t total = chain.size() * tiles.size();
        std::atomic<std::size_t> cursor{0};
        auto worker = [&]() {
            for (;;) {
                const std::size_t w = cursor.fetch_add(1);
                if (w >= total) return;
                const std::size_t s = w / tiles.size();
                const std::size_t ti = w % tiles.size();
                const Tensor block = extract_padded_block(chain[s], tiles[ti], cfg.lr_pad);
                Rng rng = Rng::stream(cfg.seed, static_cast<std::uint64_t>(pass), s, ti);
                const Tensor out = generate_tile(model, block, rng, cfg.zero_eps);
                write_cropped(grown[s], out, tiles[ti], cfg.lr_pad, 2);
            }
        };
        if (cfg.threads == 1 || total == 1) {
            worker();
        } else {
            std::vector<std::thread> pool;
            const std::size_t nw = std::min<std::size_t>(static_cast<std::size_t>(cfg.threads), total);
            for (std::size_t t = 0; t < nw; ++t) pool.emplace_back(worker);
            for (std::thread& t : pool) t.join();
        }
        chain = std::move(grown);
    }

    Tensor sigma_norm;
    std::vector<Tensor> sample_norm;
    if (passes > 0) {
        Tensor mean_out(chain[0].shape());
        for (const Tensor& s : chain) mean_out += s;
        mean_out *= 1.0 / static_cast<double>(chain.size());
        sigma_norm = Tensor(mean_out.shape());
        for (const Tensor& s : chain)
            for (std::int64_t k = 0; k < s.size(); ++k) {
                const double d = s[k] - mean_out[k];
                sigma_norm[k] += d * d;
            }
        for (std::int64_t k = 0; k < sigma_norm.size(); ++k)
            sigma_norm[k] = std::sqrt(sigma_norm[k] / static_cast<double>(chain.size()));
        current = std::move(mean_out);
        if (cfg.keep_samples) sample_norm = std::move(chain);
    }

    SrResult res;
    res.mean = tensor_to_volume(current, input.name + "_mean");
    denormalize_values(res.mean.data, range);
    {
        const ValueRange r = volume_range(res.mean);
        res.mean.value_min = r.lo;
        res.mean.value_max = r.hi;
    }
    if (passes == 0) {
        sigma_norm = Tensor(current.shape());
    }
    res.sigma = tensor_to_volume(sigma_norm, input.name + "_sigma");
    const double sscale = range.extent() / 2.0;
    for (double& v : res.sigma.data) v *= sscale;
    {
        const ValueRange r = volume_range(res.sigma);
        res.sigma.value_min = r.lo;
        res.sigma.value_max = r.hi;
    }
    for (std::size_t i = 0; i < sample_norm.size(); ++i) {
        Volume s = tensor_to_volume(sample_norm[i], input.name + "_sample" + std::to_string(i));
        denormalize_values(s.data, range);
        const ValueRange r = volume_range(s);
        s.value_min = r.lo;
        s.value_max = r.hi;
        res.samples.push_back(std::move(s));
    }
    return res;
}

}  // namespace flowsr
