#include "flowsr/train.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <stdexcept>
#include <thread>

#include "flowsr/optim.hpp"

namespace flowsr {

Tensor downsample2(const Tensor& x) {
    require(x.rank() == 4 && x.dim(0) == 1,
            "downsample2 expects [1,D,H,W], got " + shape_str(x.shape()));
    const int D = x.dim(1), H = x.dim(2), W = x.dim(3);
    require(D % 2 == 0 && H % 2 == 0 && W % 2 == 0,
            "downsample2 needs even extents, got " + shape_str(x.shape()));
    Tensor out({1, D / 2, H / 2, W / 2});
    for (int d = 0; d < D / 2; ++d)
        for (int h = 0; h < H / 2; ++h)
            for (int w = 0; w < W / 2; ++w) {
                double acc = 0.0;
                for (int dz = 0; dz < 2; ++dz)
                    for (int dy = 0; dy < 2; ++dy)
                        for (int dx = 0; dx < 2; ++dx)
                            acc += x.at4(0, 2 * d + dz, 2 * h + dy, 2 * w + dx);
                out.at4(0, d, h, w) = acc / 8.0;
            }
    return out;
}

namespace {

Tensor crop_block(const Tensor& vol, int d0, int h0, int w0, int edge) {
    Tensor out({1, edge, edge, edge});
    for (int d = 0; d < edge; ++d)
        for (int h = 0; h < edge; ++h) {
            const double* src = vol.data() + vol.index4(0, d0 + d, h0 + h, w0);
            double* dst = out.data() + out.index4(0, d, h, 0);
            for (int w = 0; w < edge; ++w) dst[w] = src[w];
        }
    return out;
}

}  // namespace

std::vector<BlockPair> sample_block_pairs(const Tensor& volume, int level, int count,
                                          int hr_edge, Rng& rng) {
    require(level >= 0, "scale level cannot be negative");
    require(count >= 1, "pair count must be positive");
    require(hr_edge >= 2 && hr_edge % 2 == 0,
            "hr_edge must be even and at least 2, got " + std::to_string(hr_edge));
    Tensor vol = volume;
    for (int l = 0; l < level; ++l) {
        require(vol.dim(1) % 2 == 0 && vol.dim(2) % 2 == 0 && vol.dim(3) % 2 == 0,
                "volume extents " + shape_str(vol.shape()) +
                    " are not divisible by 2 at level " + std::to_string(l + 1));
        vol = downsample2(vol);
    }
    for (int a = 1; a <= 3; ++a)
        require(vol.dim(a) >= hr_edge && vol.dim(a) % 2 == 0,
                "volume is too small at level " + std::to_string(level) + ": needs even extents >= " +
                    std::to_string(hr_edge) + ", has " + shape_str(vol.shape()));
    const Tensor pooled = downsample2(vol);

    std::vector<BlockPair> pairs;
    pairs.reserve(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) {
        int off[3];
        for (int a = 0; a < 3; ++a) {
            const std::int64_t slots = (vol.dim(a + 1) - hr_edge) / 2 + 1;
            off[a] = 2 * static_cast<int>(rng.uniform_int(slots));
        }
        BlockPair p;
        p.hr = crop_block(vol, off[0], off[1], off[2], hr_edge);
        p.lr = crop_block(pooled, off[0] / 2, off[1] / 2, off[2] / 2, hr_edge / 2);
        pairs.push_back(std::move(p));
    }
    return pairs;
}

namespace {

LossBreakdown run_batch(SrFlowModel& model, const std::vector<const BlockPair*>& batch,
                        double lambda, int threads, bool with_grads) {
    const std::size_t n = batch.size();
    require(n > 0, "empty batch");
    const double w_sr = 1.0 / static_cast<double>(n);
    const double w_lat = lambda / static_cast<double>(n);
    LossBreakdown out;

    if (!with_grads) {
        for (const BlockPair* p : batch) {
            const SrFlowModel::PairLoss pl = model.forward_pair(p->hr, p->lr, nullptr);
            out.sr += pl.loss_sr;
            out.lat += pl.loss_lat;
        }
    } else if (threads <= 1 || n == 1) {
        for (const BlockPair* p : batch) {
            SrFlowModel::PairCache cache;
            const SrFlowModel::PairLoss pl = model.forward_pair(p->hr, p->lr, &cache);
            out.sr += pl.loss_sr;
            out.lat += pl.loss_lat;
            model.backward_pair(cache, w_sr, w_lat);
        }
    } else {
        // forward passes only read the parameters, so they can fan out;
        // gradient accumulation stays sequential and in batch order
        std::vector<SrFlowModel::PairCache> caches(n);
        std::vector<SrFlowModel::PairLoss> losses(n);
        std::atomic<std::size_t> next{0};
        auto worker = [&]() {
            for (;;) {
                const std::size_t i = next.fetch_add(1);
                if (i >= n) return;
                losses[i] = model.forward_pair(batch[i]->hr, batch[i]->lr, &caches[i]);
            }
        };
        std::vector<std::thread> pool;
        const std::size_t nw = std::min<std::size_t>(static_cast<std::size_t>(threads), n);
        pool.reserve(nw);
        for (std::size_t t = 0; t < nw; ++t) pool.emplace_back(worker);
        for (std::thread& t : pool) t.join();
        for (std::size_t i = 0; i < n; ++i) {
            out.sr += losses[i].loss_sr;
            out.lat += losses[i].loss_lat;
            model.backward_pair(caches[i], w_sr, w_lat);
        }
    }
    out.sr *= w_sr;
    out.lat /= static_cast<double>(n);
    out.total = out.sr + lambda * out.lat;
    return out;
}

}  // namespace

LossBreakdown total_loss(SrFlowModel& model, const std::vector<BlockPair>& batch, double lambda) {
    std::vector<const BlockPair*> ptrs;
    ptrs.reserve(batch.size());
    for (const BlockPair& p : batch) ptrs.push_back(&p);
    return run_batch(model, ptrs, lambda, 1, false);
}

LossBreakdown total_loss_backward(SrFlowModel& model, const std::vector<BlockPair>& batch,
                                  double lambda, int threads) {
    std::vector<const BlockPair*> ptrs;
    ptrs.reserve(batch.size());
    for (const BlockPair& p : batch) ptrs.push_back(&p);
    return run_batch(model, ptrs, lambda, threads, true);
}

std::vector<EpochStats> fit(SrFlowModel& model, const std::vector<Tensor>& volumes,
                            const TrainConfig& cfg, const EpochCallback& on_epoch) {
    require(!volumes.empty(), "training needs at least one volume");
    require(cfg.batch_size >= 1, "batch_size must be positive");
    require(cfg.epochs >= 1, "epochs must be positive");
    require(cfg.pairs_per_level >= 1, "pairs_per_level must be positive");
    require(!cfg.levels.empty(), "at least one scale level is required");
    require(cfg.lr > 0.0, "learning rate must be positive");
    require(cfg.lambda >= 0.0, "lambda cannot be negative");
    require(cfg.threads >= 1, "threads must be positive");

    const int hr_edge = model.config().hr_block;
    std::vector<BlockPair> pool;
    for (std::size_t vi = 0; vi < volumes.size(); ++vi)
        for (std::size_t li = 0; li < cfg.levels.size(); ++li) {
            Rng rng = Rng::stream(cfg.seed, 100 + vi, static_cast<std::uint64_t>(cfg.levels[li]));
            std::vector<BlockPair> pairs =
                sample_block_pairs(volumes[vi], cfg.levels[li], cfg.pairs_per_level, hr_edge, rng);
            for (BlockPair& p : pairs) pool.push_back(std::move(p));
        }

    if (!model.actnorm_initialized()) {
        std::vector<Tensor> init_blocks;
        const std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(cfg.batch_size),
                                                    pool.size());
        for (std::size_t i = 0; i < k; ++i) init_blocks.push_back(pool[i].hr);
        model.init_actnorm(init_blocks);
    }

    std::vector<Param*> params = model.parameters();
    std::vector<AdamState> states(params.size());
    for (AdamState& s : states) s.hyper.lr = cfg.lr;

    std::vector<std::size_t> order(pool.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    const auto t0 = std::chrono::steady_clock::now();
    std::vector<EpochStats> log;
    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        Rng shuffle_rng = Rng::stream(cfg.seed, 7, static_cast<std::uint64_t>(epoch));
        shuffle_rng.shuffle(order);

        double sum_sr = 0.0, sum_lat = 0.0;
        std::size_t batch_index = 0;
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
            std::vector<const BlockPair*> batch;
            batch.reserve(stop - start);
            for (std::size_t i = start; i < stop; ++i) batch.push_back(&pool[order[i]]);
            const LossBreakdown lb = run_batch(model, batch, cfg.lambda, cfg.threads, true);
            if (!std::isfinite(lb.total))
                throw std::runtime_error("training diverged: non-finite loss in epoch " +
                                         std::to_string(epoch) + ", batch " +
                                         std::to_string(batch_index));
            sum_sr += lb.sr * static_cast<double>(batch.size());
            sum_lat += lb.lat * static_cast<double>(batch.size());
            for (std::size_t pi = 0; pi < params.size(); ++pi) adam_step(*params[pi], states[pi]);
            ++batch_index;
        }

        EpochStats st;
        st.epoch = epoch;
        st.loss_sr = sum_sr / static_cast<double>(order.size());
        st.loss_lat = sum_lat / static_cast<double>(order.size());
        st.loss_total = st.loss_sr + cfg.lambda * st.loss_lat;
        st.wall_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        log.push_back(st);
        if (on_epoch) on_epoch(st, model);
    }
    return log;
}

}  // namespace flowsr
