#include "flowsr/analysis.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <thread>

namespace flowsr {

namespace {

void check_volume4(const Tensor& t, const char* who) {
    require(t.rank() == 4 && t.dim(0) == 1,
            std::string(who) + " expects [1,D,H,W], got " + shape_str(t.shape()));
}

struct AxisLerp {
    std::vector<int> i0, i1;
    std::vector<double> t;
};

AxisLerp axis_lerp(int n_in, int factor) {
    AxisLerp a;
    const int n_out = n_in * factor;
    a.i0.resize(static_cast<std::size_t>(n_out));
    a.i1.resize(static_cast<std::size_t>(n_out));
    a.t.resize(static_cast<std::size_t>(n_out));
    for (int j = 0; j < n_out; ++j) {
        const double src = (j + 0.5) / factor - 0.5;
        double fl = std::floor(src);
        double frac = src - fl;
        int lo = static_cast<int>(fl);
        if (lo < 0) {
            lo = 0;
            frac = 0.0;
        }
        int hi = lo + 1;
        if (hi > n_in - 1) {
            hi = n_in - 1;
            frac = 0.0;
        }
        a.i0[static_cast<std::size_t>(j)] = lo;
        a.i1[static_cast<std::size_t>(j)] = hi;
        a.t[static_cast<std::size_t>(j)] = frac;
    }
    return a;
}

}  // namespace

Tensor trilinear_upsample(const Tensor& x, int factor) {
    check_volume4(x, "trilinear_upsample");
    require(factor >= 1, "upsample factor must be positive, got " + std::to_string(factor));
    if (factor == 1) return x;
    const int D = x.dim(1), H = x.dim(2), W = x.dim(3);
    const AxisLerp ad = axis_lerp(D, factor);
    const AxisLerp ah = axis_lerp(H, factor);
    const AxisLerp aw = axis_lerp(W, factor);
    Tensor out({1, D * factor, H * factor, W * factor});
    for (int d = 0; d < D * factor; ++d) {
        const int d0 = ad.i0[static_cast<std::size_t>(d)], d1 = ad.i1[static_cast<std::size_t>(d)];
        const double td = ad.t[static_cast<std::size_t>(d)];
        for (int h = 0; h < H * factor; ++h) {
            const int h0 = ah.i0[static_cast<std::size_t>(h)],
                      h1 = ah.i1[static_cast<std::size_t>(h)];
            const double th = ah.t[static_cast<std::size_t>(h)];
            for (int w = 0; w < W * factor; ++w) {
                const int w0 = aw.i0[static_cast<std::size_t>(w)],
                          w1 = aw.i1[static_cast<std::size_t>(w)];
                const double tw = aw.t[static_cast<std::size_t>(w)];
                const double c00 = x.at4(0, d0, h0, w0) * (1 - tw) + x.at4(0, d0, h0, w1) * tw;
                const double c01 = x.at4(0, d0, h1, w0) * (1 - tw) + x.at4(0, d0, h1, w1) * tw;
                const double c10 = x.at4(0, d1, h0, w0) * (1 - tw) + x.at4(0, d1, h0, w1) * tw;
                const double c11 = x.at4(0, d1, h1, w0) * (1 - tw) + x.at4(0, d1, h1, w1) * tw;
                const double c0 = c00 * (1 - th) + c01 * th;
                const double c1 = c10 * (1 - th) + c11 * th;
                out.at4(0, d, h, w) = c0 * (1 - td) + c1 * td;
            }
        }
    }
    return out;
}

double psnr(const Tensor& pred, const Tensor& ref) {
    require(pred.same_shape(ref), "psnr: shapes differ, " + shape_str(pred.shape()) + " vs " +
                                      shape_str(ref.shape()));
    require(ref.size() > 0, "psnr: empty tensors");
    double lo = ref[0], hi = ref[0], mse = 0.0;
    for (std::int64_t i = 0; i < ref.size(); ++i) {
        lo = std::min(lo, ref[i]);
        hi = std::max(hi, ref[i]);
        const double d = pred[i] - ref[i];
        mse += d * d;
    }
    mse /= static_cast<double>(ref.size());
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    const double range = hi - lo;
    return 10.0 * std::log10(range * range / mse);
}

double ssim2d(const std::vector<double>& a, const std::vector<double>& b, int rows, int cols,
              double data_range) {
    require(rows >= 11 && cols >= 11,
            "ssim needs images at least 11x11, got " + std::to_string(rows) + "x" +
                std::to_string(cols));
    require(a.size() == b.size() &&
                a.size() == static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols),
            "ssim: image buffers do not match rows*cols");
    require(data_range > 0.0, "ssim: data range must be positive");

    constexpr int win = 11;
    constexpr double sigma = 1.5;
    double kernel[win * win];
    double ksum = 0.0;
    for (int r = 0; r < win; ++r)
        for (int c = 0; c < win; ++c) {
            const double dr = r - (win - 1) / 2.0;
            const double dc = c - (win - 1) / 2.0;
            kernel[r * win + c] = std::exp(-(dr * dr + dc * dc) / (2.0 * sigma * sigma));
            ksum += kernel[r * win + c];
        }
    for (double& k : kernel) k /= ksum;

    const double c1 = (0.01 * data_range) * (0.01 * data_range);
    const double c2 = (0.03 * data_range) * (0.03 * data_range);

    double acc = 0.0;
    std::int64_t windows = 0;
    for (int r0 = 0; r0 + win <= rows; ++r0)
        for (int c0 = 0; c0 + win <= cols; ++c0) {
            double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
            for (int r = 0; r < win; ++r)
                for (int c = 0; c < win; ++c) {
                    const double k = kernel[r * win + c];
                    const double va = a[static_cast<std::size_t>((r0 + r) * cols + c0 + c)];
                    const double vb = b[static_cast<std::size_t>((r0 + r) * cols + c0 + c)];
                    ma += k * va;
                    mb += k * vb;
                    saa += k * va * va;
                    sbb += k * vb * vb;
                    sab += k * va * vb;
                }
            const double va = saa - ma * ma;
            const double vb = sbb - mb * mb;
            const double cab = sab - ma * mb;
            acc += ((2 * ma * mb + c1) * (2 * cab + c2)) /
                   ((ma * ma + mb * mb + c1) * (va + vb + c2));
            ++windows;
        }
    return acc / static_cast<double>(windows);
}

namespace {

std::vector<double> central_slice(const Tensor& t, int axis, int& rows, int& cols) {
    const int D = t.dim(1), H = t.dim(2), W = t.dim(3);
    std::vector<double> img;
    if (axis == 0) {
        rows = H;
        cols = W;
        img.resize(static_cast<std::size_t>(rows) * cols);
        const int d = D / 2;
        for (int h = 0; h < H; ++h)
            for (int w = 0; w < W; ++w) img[static_cast<std::size_t>(h * W + w)] = t.at4(0, d, h, w);
    } else if (axis == 1) {
        rows = D;
        cols = W;
        img.resize(static_cast<std::size_t>(rows) * cols);
        const int h = H / 2;
        for (int d = 0; d < D; ++d)
            for (int w = 0; w < W; ++w) img[static_cast<std::size_t>(d * W + w)] = t.at4(0, d, h, w);
    } else {
        rows = D;
        cols = H;
        img.resize(static_cast<std::size_t>(rows) * cols);
        const int w = W / 2;
        for (int d = 0; d < D; ++d)
            for (int h = 0; h < H; ++h) img[static_cast<std::size_t>(d * H + h)] = t.at4(0, d, h, w);
    }
    return img;
}

}  // namespace

double ssim_volume(const Tensor& pred, const Tensor& ref) {
    check_volume4(pred, "ssim_volume");
    require(pred.same_shape(ref), "ssim_volume: shapes differ");
    double lo = ref[0], hi = ref[0];
    for (std::int64_t i = 0; i < ref.size(); ++i) {
        lo = std::min(lo, ref[i]);
        hi = std::max(hi, ref[i]);
    }
    require(hi > lo, "ssim_volume: reference volume is constant");
    double acc = 0.0;
    for (int axis = 0; axis < 3; ++axis) {
        int rows = 0, cols = 0;
        const std::vector<double> a = central_slice(pred, axis, rows, cols);
        const std::vector<double> b = central_slice(ref, axis, rows, cols);
        acc += ssim2d(a, b, rows, cols, hi - lo);
    }
    return acc / 3.0;
}

Tensor gradient_magnitude(const Tensor& x) {
    check_volume4(x, "gradient_magnitude");
    const int D = x.dim(1), H = x.dim(2), W = x.dim(3);
    require(D >= 2 && H >= 2 && W >= 2, "gradient_magnitude needs at least 2 voxels per axis");
    Tensor out(x.shape());
    auto diff = [](double prev, double next, double spacing) { return (next - prev) / spacing; };
    for (int d = 0; d < D; ++d)
        for (int h = 0; h < H; ++h)
            for (int w = 0; w < W; ++w) {
                const double gd = (d == 0)       ? diff(x.at4(0, 0, h, w), x.at4(0, 1, h, w), 1.0)
                                  : (d == D - 1) ? diff(x.at4(0, D - 2, h, w), x.at4(0, D - 1, h, w), 1.0)
                                                 : diff(x.at4(0, d - 1, h, w), x.at4(0, d + 1, h, w), 2.0);
                const double gh = (h == 0)       ? diff(x.at4(0, d, 0, w), x.at4(0, d, 1, w), 1.0)
                                  : (h == H - 1) ? diff(x.at4(0, d, H - 2, w), x.at4(0, d, H - 1, w), 1.0)
                                                 : diff(x.at4(0, d, h - 1, w), x.at4(0, d, h + 1, w), 2.0);
                const double gw = (w == 0)       ? diff(x.at4(0, d, h, 0), x.at4(0, d, h, 1), 1.0)
                                  : (w == W - 1) ? diff(x.at4(0, d, h, W - 2), x.at4(0, d, h, W - 1), 1.0)
                                                 : diff(x.at4(0, d, h, w - 1), x.at4(0, d, h, w + 1), 2.0);
                out.at4(0, d, h, w) = std::sqrt(gd * gd + gh * gh + gw * gw);
            }
    return out;
}

std::vector<BinStats> gradient_uncertainty_bins(const Tensor& field, const Tensor& sigma,
                                                const Tensor* abs_err, int bins) {
    require(bins >= 1, "bin count must be positive");
    require(field.same_shape(sigma), "gradient bins: field and sigma shapes differ");
    if (abs_err) require(field.same_shape(*abs_err), "gradient bins: error field shape differs");
    const Tensor g = gradient_magnitude(field);
    double lo = g[0], hi = g[0];
    for (std::int64_t i = 0; i < g.size(); ++i) {
        lo = std::min(lo, g[i]);
        hi = std::max(hi, g[i]);
    }
    const double width = (hi - lo) / static_cast<double>(bins);
    std::vector<BinStats> out(static_cast<std::size_t>(bins));
    for (int b = 0; b < bins; ++b) {
        out[static_cast<std::size_t>(b)].lo = lo + b * width;
        out[static_cast<std::size_t>(b)].hi = (b == bins - 1) ? hi : lo + (b + 1) * width;
    }
    for (std::int64_t i = 0; i < g.size(); ++i) {
        int b = width > 0.0 ? static_cast<int>((g[i] - lo) / width) : 0;
        b = std::clamp(b, 0, bins - 1);
        BinStats& s = out[static_cast<std::size_t>(b)];
        s.count += 1;
        s.mean_sigma += sigma[i];
        if (abs_err) s.mean_abs_err += (*abs_err)[i];
    }
    for (BinStats& s : out) {
        if (s.count > 0) {
            s.mean_sigma /= static_cast<double>(s.count);
            s.mean_abs_err /= static_cast<double>(s.count);
        }
    }
    return out;
}

namespace {

std::vector<double> average_ranks(const std::vector<double>& v) {
    const std::size_t n = v.size();
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> rank(n, 0.0);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && v[idx[j + 1]] == v[idx[i]]) ++j;
        const double r = 0.5 * (static_cast<double>(i) + static_cast<double>(j)) + 1.0;
        for (std::size_t k = i; k <= j; ++k) rank[idx[k]] = r;
        i = j + 1;
    }
    return rank;
}

}  // namespace

double spearman(const std::vector<double>& x, const std::vector<double>& y) {
    require(x.size() == y.size() && x.size() >= 2,
            "spearman needs two equally sized series of at least 2 points");
    const std::vector<double> rx = average_ranks(x);
    const std::vector<double> ry = average_ranks(y);
    const double n = static_cast<double>(x.size());
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += rx[i];
        my += ry[i];
    }
    mx /= n;
    my /= n;
    double sxy = 0, sxx = 0, syy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dx = rx[i] - mx, dy = ry[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    require(sxx > 0.0 && syy > 0.0, "spearman: a series is constant");
    return sxy / std::sqrt(sxx * syy);
}

double cell_crossing_probability(const std::vector<double>& mean, const std::vector<double>& cov,
                                 double isovalue, int n_mc, Rng& rng, bool* used_fallback) {
    require(mean.size() == 8 && cov.size() == 64,
            "cell crossing needs 8 corner means and an 8x8 covariance");
    require(n_mc >= 1, "Monte Carlo draw count must be positive");

    Eigen::Matrix<double, 8, 8> c;
    for (int i = 0; i < 8; ++i)
        for (int j = 0; j < 8; ++j) c(i, j) = cov[static_cast<std::size_t>(i * 8 + j)];
    c += 1e-10 * Eigen::Matrix<double, 8, 8>::Identity();
    Eigen::LLT<Eigen::Matrix<double, 8, 8>> llt(c);
    const bool ok = llt.info() == Eigen::Success;
    if (used_fallback) *used_fallback = !ok;
    Eigen::Matrix<double, 8, 8> l = Eigen::Matrix<double, 8, 8>::Zero();
    if (ok) {
        l = llt.matrixL();
    } else {
        for (int i = 0; i < 8; ++i)
            l(i, i) = std::sqrt(std::max(0.0, cov[static_cast<std::size_t>(i * 8 + i)]) + 1e-10);
    }

    int crossings = 0;
    double eps[8], corner[8];
    for (int t = 0; t < n_mc; ++t) {
        for (double& e : eps) e = rng.normal();
        double mn = std::numeric_limits<double>::infinity();
        double mx = -mn;
        for (int i = 0; i < 8; ++i) {
            double v = mean[static_cast<std::size_t>(i)];
            for (int j = 0; j <= i; ++j) v += l(i, j) * eps[j];
            corner[i] = v;
            mn = std::min(mn, v);
            mx = std::max(mx, v);
        }
        (void)corner;
        if (mn < isovalue && isovalue < mx) ++crossings;
    }
    return static_cast<double>(crossings) / static_cast<double>(n_mc);
}

CrossingField level_crossing_probability(const std::vector<Tensor>& samples, double isovalue,
                                         int n_mc, std::uint64_t seed, int threads) {
    require(samples.size() >= 2,
            "crossing probability needs at least two sample volumes for a covariance");
    check_volume4(samples[0], "level_crossing_probability");
    const int D = samples[0].dim(1), H = samples[0].dim(2), W = samples[0].dim(3);
    require(D >= 2 && H >= 2 && W >= 2, "sample volumes need at least 2 voxels per axis");
    for (const Tensor& s : samples)
        require(s.same_shape(samples[0]), "sample volumes have mismatched shapes");
    require(threads >= 1, "threads must be positive");

    const int n = static_cast<int>(samples.size());
    CrossingField out;
    out.prob = Tensor({1, D - 1, H - 1, W - 1});
    const std::int64_t cells =
        static_cast<std::int64_t>(D - 1) * (H - 1) * (W - 1);
    std::atomic<std::int64_t> next{0};
    std::atomic<std::int64_t> fallbacks{0};

    auto worker = [&]() {
        std::vector<double> vals(static_cast<std::size_t>(n) * 8);
        std::vector<double> mean(8), cov(64);
        for (;;) {
            const std::int64_t ci = next.fetch_add(1);
            if (ci >= cells) return;
            const int d = static_cast<int>(ci / ((H - 1) * (W - 1)));
            const int rem = static_cast<int>(ci % ((H - 1) * (W - 1)));
            const int h = rem / (W - 1);
            const int w = rem % (W - 1);
            for (int s = 0; s < n; ++s)
                for (int k = 0; k < 8; ++k) {
                    const int dz = (k >> 2) & 1, dy = (k >> 1) & 1, dx = k & 1;
                    vals[static_cast<std::size_t>(s * 8 + k)] =
                        samples[static_cast<std::size_t>(s)].at4(0, d + dz, h + dy, w + dx);
                }
            for (int k = 0; k < 8; ++k) {
                double m = 0.0;
                for (int s = 0; s < n; ++s) m += vals[static_cast<std::size_t>(s * 8 + k)];
                mean[static_cast<std::size_t>(k)] = m / n;
            }
            for (int a = 0; a < 8; ++a)
                for (int b = 0; b < 8; ++b) {
                    double acc = 0.0;
                    for (int s = 0; s < n; ++s)
                        acc += (vals[static_cast<std::size_t>(s * 8 + a)] - mean[static_cast<std::size_t>(a)]) *
                               (vals[static_cast<std::size_t>(s * 8 + b)] - mean[static_cast<std::size_t>(b)]);
                    cov[static_cast<std::size_t>(a * 8 + b)] = acc / (n - 1);
                }
            Rng rng = Rng::stream(seed, 21, static_cast<std::uint64_t>(ci));
            bool fb = false;
            out.prob[ci] = cell_crossing_probability(mean, cov, isovalue, n_mc, rng, &fb);
            if (fb) fallbacks.fetch_add(1);
        }
    };
    if (threads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
        for (std::thread& t : pool) t.join();
    }
    out.fallback_cells = fallbacks.load();
    return out;
}

Tensor error_map(const Tensor& pred, const Tensor& ref) {
    require(pred.same_shape(ref), "error_map: shapes differ");
    Tensor out(pred.shape());
    for (std::int64_t i = 0; i < out.size(); ++i) out[i] = std::abs(pred[i] - ref[i]);
    return out;
}

void export_slice(const Tensor& x, int axis, int index, const std::string& path, double lo,
                  double hi) {
    check_volume4(x, "export_slice");
    require(axis >= 0 && axis <= 2, "slice axis must be 0, 1 or 2");
    require(index >= 0 && index < x.dim(axis + 1),
            "slice index " + std::to_string(index) + " outside axis extent " +
                std::to_string(x.dim(axis + 1)));
    int rows = 0, cols = 0;
    std::vector<double> img;
    const int D = x.dim(1), H = x.dim(2), W = x.dim(3);
    if (axis == 0) {
        rows = H;
        cols = W;
        img.resize(static_cast<std::size_t>(rows) * cols);
        for (int h = 0; h < H; ++h)
            for (int w = 0; w < W; ++w) img[static_cast<std::size_t>(h * W + w)] = x.at4(0, index, h, w);
    } else if (axis == 1) {
        rows = D;
        cols = W;
        img.resize(static_cast<std::size_t>(rows) * cols);
        for (int d = 0; d < D; ++d)
            for (int w = 0; w < W; ++w) img[static_cast<std::size_t>(d * W + w)] = x.at4(0, d, index, w);
    } else {
        rows = D;
        cols = H;
        img.resize(static_cast<std::size_t>(rows) * cols);
        for (int d = 0; d < D; ++d)
            for (int h = 0; h < H; ++h) img[static_cast<std::size_t>(d * H + h)] = x.at4(0, d, h, index);
    }
    if (hi <= lo) {
        lo = img[0];
        hi = img[0];
        for (double v : img) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
    }
    std::vector<unsigned char> bytes(img.size(), 0);
    if (hi > lo) {
        const double s = 255.0 / (hi - lo);
        for (std::size_t i = 0; i < img.size(); ++i) {
            const double v = std::clamp((img[i] - lo) * s, 0.0, 255.0);
            bytes[i] = static_cast<unsigned char>(std::lround(v));
        }
    }
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    require(f.good(), "cannot write slice image '" + path + "'");
    f << "P5\n" << cols << " " << rows << "\n255\n";
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    require(f.good(), "short write on slice image '" + path + "'");
}

}  // namespace flowsr
