#include <doctest.h>

#include <cmath>
#include <stdexcept>
#include <vector>

#include "flowsr/infer.hpp"
#include "flowsr/synthetic.hpp"

using flowsr::ModelConfig;
using flowsr::Rng;
using flowsr::SrFlowModel;
using flowsr::Tensor;
using flowsr::Tile;
using flowsr::UqConfig;
using flowsr::Volume;

namespace {

ModelConfig small_config() {
    ModelConfig cfg;
    cfg.flow_steps_g = 1;
    cfg.flow_steps_h = 1;
    cfg.hr_block = 4;
    cfg.lr_channels = 4;
    cfg.encoder_channels = 4;
    cfg.encoder_blocks = 1;
    cfg.st_hidden = 4;
    return cfg;
}

Volume blob_volume(int edge, std::uint64_t seed) {
    flowsr::SynthSpec spec;
    spec.kind = "blobs";
    spec.dims[0] = spec.dims[1] = spec.dims[2] = edge;
    spec.count = 3;
    spec.seed = seed;
    return flowsr::make_synthetic(spec);
}

Tensor nn_upsample(const Tensor& x, int s) {
    Tensor out({1, x.dim(1) * s, x.dim(2) * s, x.dim(3) * s});
    for (std::int64_t d = 0; d < out.dim(1); ++d)
        for (std::int64_t h = 0; h < out.dim(2); ++h)
            for (std::int64_t w = 0; w < out.dim(3); ++w)
                out.at4(0, d, h, w) = x.at4(0, d / s, h / s, w / s);
    return out;
}

}  // namespace

TEST_CASE("tile plan partitions the grid with remainder tiles at the end") {
    const int dims[3] = {16, 12, 8};
    const std::vector<Tile> tiles = flowsr::plan_tiles(dims, 8);
    REQUIRE(tiles.size() == 4);  // 2 x 2 x 1

    // every voxel is covered by exactly one tile core
    std::vector<int> hits(16 * 12 * 8, 0);
    for (const Tile& t : tiles) {
        CHECK(t.extent[0] >= 1);
        for (int d = 0; d < t.extent[0]; ++d)
            for (int h = 0; h < t.extent[1]; ++h)
                for (int w = 0; w < t.extent[2]; ++w)
                    ++hits[((t.origin[0] + d) * 12 + t.origin[1] + h) * 8 + t.origin[2] + w];
    }
    for (const int h : hits) CHECK(h == 1);

    // second row tile on the h axis takes the remainder
    CHECK(tiles[1].origin[1] == 8);
    CHECK(tiles[1].extent[1] == 4);

    const int small[3] = {7, 7, 7};
    const std::vector<Tile> one = flowsr::plan_tiles(small, 8);
    REQUIRE(one.size() == 1);
    CHECK(one[0].extent[0] == 7);
}

TEST_CASE("padding mirrors across the boundary without repeating the edge") {
    Tensor vol({1, 1, 1, 4});
    for (int i = 0; i < 4; ++i) vol[i] = static_cast<double>(i);
    Tile tile{{0, 0, 0}, {1, 1, 4}};
    const Tensor padded = flowsr::extract_padded_block(vol, tile, 2);
    REQUIRE(padded.dim(3) == 8);
    const double expect[8] = {2, 1, 0, 1, 2, 3, 2, 1};
    for (int i = 0; i < 8; ++i) CHECK(padded.at4(0, 2, 2, i) == expect[i]);

    // a single-sample axis mirrors to itself: every padded d-slice repeats the row
    for (int d = 0; d < padded.dim(1); ++d)
        for (int i = 0; i < 8; ++i) CHECK(padded.at4(0, d, 2, i) == expect[i]);
}

TEST_CASE("interior tiles take their halo from the neighbors") {
    Tensor vol({1, 1, 1, 16});
    for (int i = 0; i < 16; ++i) vol[i] = static_cast<double>(i);
    Tile tile{{0, 0, 8}, {1, 1, 8}};
    const Tensor padded = flowsr::extract_padded_block(vol, tile, 2);
    CHECK(padded.at4(0, 2, 2, 0) == 6.0);
    CHECK(padded.at4(0, 2, 2, 1) == 7.0);
    CHECK(padded.at4(0, 2, 2, 2) == 8.0);
    CHECK(padded.at4(0, 2, 2, 9) == 15.0);
    CHECK(padded.at4(0, 2, 2, 10) == 14.0);  // mirrored tail
}

TEST_CASE("stitching crops the halo and writes every voxel once") {
    Rng rng(1);
    const Tensor vol = rng.normal_tensor({1, 10, 8, 12});

    SUBCASE("identity at scale 1") {
        const Tensor out = flowsr::stitch_tiles(
            vol, 4, 2, 1, [](const Tensor& block, std::size_t) { return block; });
        CHECK(flowsr::max_abs_diff(out, vol) == 0.0);
    }

    SUBCASE("pointwise upsampling matches the global result") {
        const Tensor out = flowsr::stitch_tiles(
            vol, 4, 2, 2, [](const Tensor& block, std::size_t) { return nn_upsample(block, 2); });
        CHECK(flowsr::max_abs_diff(out, nn_upsample(vol, 2)) == 0.0);
    }
}

TEST_CASE("sample statistics use the population formula") {
    std::vector<Tensor> draws;
    draws.push_back(Tensor::from_data({2}, {1.0, -2.0}));
    draws.push_back(Tensor::from_data({2}, {3.0, 0.0}));
    draws.push_back(Tensor::from_data({2}, {5.0, 2.0}));
    int k = 0;
    const flowsr::SampleStats st =
        flowsr::sample_stats([&]() { return draws[static_cast<std::size_t>(k++)]; }, 3);
    CHECK(st.mean[0] == 3.0);
    CHECK(st.mean[1] == 0.0);
    // population sigma, divisor n: sqrt(((1-3)^2 + 0 + (5-3)^2)/3)
    CHECK(st.sigma[0] == doctest::Approx(std::sqrt(8.0 / 3.0)).epsilon(1e-15));
    CHECK(st.sigma[1] == doctest::Approx(std::sqrt(8.0 / 3.0)).epsilon(1e-15));
}

TEST_CASE("super resolution doubles the grid per factor of two") {
    SrFlowModel model(small_config(), 5);
    model.set_actnorm_initialized(true);
    const Volume input = blob_volume(8, 6);

    UqConfig cfg;
    cfg.samples = 2;
    cfg.scale = 4;
    const flowsr::SrResult res = flowsr::super_resolve(model, input, cfg);
    CHECK(res.mean.dims[0] == 32);
    CHECK(res.mean.dims[1] == 32);
    CHECK(res.mean.dims[2] == 32);
    CHECK(res.sigma.dims[0] == 32);
    for (const double v : res.mean.data) CHECK(std::isfinite(v));
    CHECK(res.samples.empty());
}

TEST_CASE("scale one is a pass-through with zero spread") {
    SrFlowModel model(small_config(), 7);
    model.set_actnorm_initialized(true);
    const Volume input = blob_volume(8, 8);

    UqConfig cfg;
    cfg.scale = 1;
    cfg.samples = 3;
    const flowsr::SrResult res = flowsr::super_resolve(model, input, cfg);
    REQUIRE(res.mean.data.size() == input.data.size());
    for (std::size_t i = 0; i < input.data.size(); ++i)
        CHECK(res.mean.data[i] == doctest::Approx(input.data[i]).epsilon(1e-12));
    for (const double v : res.sigma.data) CHECK(v == 0.0);
}

TEST_CASE("sampling is deterministic and thread-count independent") {
    SrFlowModel model(small_config(), 9);
    model.set_actnorm_initialized(true);
    const Volume input = blob_volume(16, 10);

    UqConfig cfg;
    cfg.samples = 3;
    cfg.scale = 2;
    cfg.seed = 11;
    cfg.threads = 1;
    const flowsr::SrResult a = flowsr::super_resolve(model, input, cfg);
    cfg.threads = 4;
    const flowsr::SrResult b = flowsr::super_resolve(model, input, cfg);

    REQUIRE(a.mean.data.size() == b.mean.data.size());
    for (std::size_t i = 0; i < a.mean.data.size(); ++i) {
        CHECK(a.mean.data[i] == b.mean.data[i]);
        CHECK(a.sigma.data[i] == b.sigma.data[i]);
    }

    // a different seed must move the samples
    cfg.seed = 12;
    const flowsr::SrResult c = flowsr::super_resolve(model, input, cfg);
    double diff = 0.0;
    for (std::size_t i = 0; i < a.mean.data.size(); ++i)
        diff = std::max(diff, std::abs(a.mean.data[i] - c.mean.data[i]));
    CHECK(diff > 0.0);
}

TEST_CASE("kept samples reproduce the reported mean") {
    SrFlowModel model(small_config(), 13);
    model.set_actnorm_initialized(true);
    const Volume input = blob_volume(8, 14);

    UqConfig cfg;
    cfg.samples = 4;
    cfg.scale = 2;
    cfg.keep_samples = true;
    const flowsr::SrResult res = flowsr::super_resolve(model, input, cfg);
    REQUIRE(res.samples.size() == 4);
    for (std::size_t i = 0; i < res.mean.data.size(); ++i) {
        double acc = 0.0;
        for (const Volume& s : res.samples) acc += s.data[i];
        CHECK(res.mean.data[i] == doctest::Approx(acc / 4.0).epsilon(1e-12));
    }
}

TEST_CASE("zero noise collapses the spread") {
    SrFlowModel model(small_config(), 15);
    model.set_actnorm_initialized(true);
    const Volume input = blob_volume(8, 16);

    UqConfig cfg;
    cfg.samples = 1;
    cfg.scale = 2;
    cfg.zero_eps = true;
    const flowsr::SrResult res = flowsr::super_resolve(model, input, cfg);
    for (const double v : res.sigma.data) CHECK(v == 0.0);
}

TEST_CASE("the upscale factor must be a power of two") {
    SrFlowModel model(small_config(), 17);
    model.set_actnorm_initialized(true);
    const Volume input = blob_volume(8, 18);
    UqConfig cfg;
    cfg.scale = 3;
    CHECK_THROWS_AS(flowsr::super_resolve(model, input, cfg), std::invalid_argument);
    cfg.scale = 0;
    CHECK_THROWS_AS(flowsr::super_resolve(model, input, cfg), std::invalid_argument);
}
