#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "flowsr/rng.hpp"
#include "flowsr/tensor.hpp"

namespace flowsr {

/// Integer-factor trilinear interpolation of a [1,D,H,W] tensor, cell-center
/// aligned: output sample j reads source coordinate (j + 0.5)/factor - 0.5,
/// clamped at the boundary.
Tensor trilinear_upsample(const Tensor& x, int factor);

/// 10*log10(range^2 / mse) where range is the reference max - min. A perfect
/// match returns +infinity.
double psnr(const Tensor& pred, const Tensor& ref);

/// Mean structural similarity of two equally sized 2D images over every
/// fully interior 11x11 Gaussian window (sigma 1.5, K1 0.01, K2 0.03);
/// data_range scales the stabilizing constants.
double ssim2d(const std::vector<double>& a, const std::vector<double>& b, int rows, int cols,
              double data_range);

/// SSIM of two volumes: ssim2d on the central slice along each of the three
/// axes, averaged. The data range comes from the reference volume.
double ssim_volume(const Tensor& pred, const Tensor& ref);

/// Voxelwise gradient magnitude with central differences inside and
/// one-sided differences at the boundary (unit spacing).
Tensor gradient_magnitude(const Tensor& x);

struct BinStats {
    double lo = 0.0;
    double hi = 0.0;
    std::int64_t count = 0;
    double mean_sigma = 0.0;
    double mean_abs_err = 0.0;  // filled when an error field is supplied
};

/// Voxels binned by the gradient magnitude of `field` into equal-width bins
/// over [min, max]; per bin the mean of `sigma` (and of `abs_err`, when
/// given). A constant gradient field puts everything into bin 0.
std::vector<BinStats> gradient_uncertainty_bins(const Tensor& field, const Tensor& sigma,
                                                const Tensor* abs_err, int bins);

/// Spearman rank correlation with average ranks on ties.
double spearman(const std::vector<double>& x, const std::vector<double>& y);

/// Monte Carlo crossing probability for one cell: corner values are drawn
/// jointly from N(mean, cov) (8 corners, row-major covariance, a small ridge
/// is added before factoring) and a draw crosses when
/// min(corners) < isovalue < max(corners). Falls back to independent
/// per-corner normals when the factorization fails; *used_fallback reports it.
double cell_crossing_probability(const std::vector<double>& mean,
                                 const std::vector<double>& cov, double isovalue, int n_mc,
                                 Rng& rng, bool* used_fallback = nullptr);

struct CrossingField {
    Tensor prob;  // [1,D-1,H-1,W-1]
    std::int64_t fallback_cells = 0;
};

/// Per-cell crossing probability of an ensemble of equally shaped [1,D,H,W]
/// sample volumes: corner mean and sample covariance (divisor n-1) feed the
/// cell Monte Carlo above. Deterministic per cell for a fixed seed.
CrossingField level_crossing_probability(const std::vector<Tensor>& samples, double isovalue,
                                         int n_mc, std::uint64_t seed, int threads = 1);

/// |pred - ref| voxelwise.
Tensor error_map(const Tensor& pred, const Tensor& ref);

/// Writes one axis-aligned slice as a binary 8-bit PGM, values scaled from
/// [lo,hi] (the slice's own range when lo >= hi). axis: 0=D, 1=H, 2=W.
void export_slice(const Tensor& x, int axis, int index, const std::string& path, double lo = 0.0,
                  double hi = -1.0);

}  // namespace flowsr
