#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "flowsr/model.hpp"

namespace flowsr {

struct TrainConfig {
    double lambda = 1.0;  // weight of the latent-mismatch loss
    double lr = 1e-4;
    int batch_size = 16;
    int epochs = 10;
    int pairs_per_level = 256;        // per volume and scale level
    std::vector<int> levels = {0, 1};  // level l trains on the volume downsampled l times
    std::uint64_t seed = 0;
    int checkpoint_every = 0;  // epochs between snapshots, 0 = caller decides
    int threads = 1;
};

struct BlockPair {
    Tensor hr;  // [1,B,B,B]
    Tensor lr;  // [1,B/2,B/2,B/2], exactly the mean-pooled hr
};

/// 2x2x2 arithmetic mean pooling of a [1,D,H,W] tensor; extents must be even.
Tensor downsample2(const Tensor& x);

/// Random training pairs from one volume at one scale level. Block offsets
/// are even so the low-resolution half is a slice of the pooled volume.
std::vector<BlockPair> sample_block_pairs(const Tensor& volume, int level, int count,
                                          int hr_edge, Rng& rng);

struct LossBreakdown {
    double total = 0.0;
    double sr = 0.0;
    double lat = 0.0;
};

/// Batch-mean losses: total = mean(loss_sr) + lambda * mean(loss_lat).
LossBreakdown total_loss(SrFlowModel& model, const std::vector<BlockPair>& batch, double lambda);
/// Same value, and parameter gradients of it accumulated into the model.
LossBreakdown total_loss_backward(SrFlowModel& model, const std::vector<BlockPair>& batch,
                                  double lambda, int threads = 1);

struct EpochStats {
    int epoch = 0;
    double loss_total = 0.0;
    double loss_sr = 0.0;
    double loss_lat = 0.0;
    double wall_seconds = 0.0;
};

using EpochCallback = std::function<void(const EpochStats&, SrFlowModel&)>;

/// Adam training over block pairs sampled from the given volumes at every
/// configured level. Runs actnorm init on the first batch when needed.
/// Bit-deterministic for a fixed config and seed, independent of threads.
std::vector<EpochStats> fit(SrFlowModel& model, const std::vector<Tensor>& volumes,
                            const TrainConfig& cfg, const EpochCallback& on_epoch = nullptr);

}  // namespace flowsr
