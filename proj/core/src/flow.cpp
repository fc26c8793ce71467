#include "flowsr/flow.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>

#include "flowsr/ops.hpp"

namespace flowsr {

namespace {

void check_input(const Tensor& x, int channels, const char* who) {
    require(x.rank() == 4, std::string(who) + " expects a rank-4 [C,D,H,W] tensor, got " +
                               shape_str(x.shape()));
    require(x.dim(0) == channels, std::string(who) + " built for " + std::to_string(channels) +
                                      " channels, got " + shape_str(x.shape()));
}

std::int64_t spatial_size(const Tensor& x) {
    return static_cast<std::int64_t>(x.dim(1)) * x.dim(2) * x.dim(3);
}

}  // namespace

// ---------------------------------------------------------------- ActNorm

ActNorm::ActNorm(int channels)
    : log_s(Tensor({channels}), "log_s"), bias(Tensor({channels}), "bias") {
    require(channels > 0, "actnorm needs at least one channel");
}

void ActNorm::init_from_batch(const std::vector<Tensor>& batch) {
    require(!batch.empty(), "actnorm init needs a non-empty batch");
    const int C = channels();
    std::vector<double> mean(static_cast<std::size_t>(C), 0.0);
    std::vector<double> var(static_cast<std::size_t>(C), 0.0);
    std::int64_t count = 0;
    for (const Tensor& x : batch) {
        check_input(x, C, "actnorm init");
        const std::int64_t n = spatial_size(x);
        for (int c = 0; c < C; ++c) {
            const double* row = x.data() + c * n;
            for (std::int64_t i = 0; i < n; ++i) mean[static_cast<std::size_t>(c)] += row[i];
        }
        count += n;
    }
    for (int c = 0; c < C; ++c) mean[static_cast<std::size_t>(c)] /= static_cast<double>(count);
    for (const Tensor& x : batch) {
        const std::int64_t n = spatial_size(x);
        for (int c = 0; c < C; ++c) {
            const double* row = x.data() + c * n;
            const double m = mean[static_cast<std::size_t>(c)];
            double acc = 0.0;
            for (std::int64_t i = 0; i < n; ++i) {
                const double d = row[i] - m;
                acc += d * d;
            }
            var[static_cast<std::size_t>(c)] += acc;
        }
    }
    for (int c = 0; c < C; ++c) {
        const double v = var[static_cast<std::size_t>(c)] / static_cast<double>(count);
        require(v > 0.0, "actnorm init: channel " + std::to_string(c) +
                             " has zero variance across the batch; jitter the data or widen it");
        const double s = 1.0 / std::sqrt(v);
        log_s.value[c] = std::log(s);
        bias.value[c] = -mean[static_cast<std::size_t>(c)] * s;
    }
    initialized = true;
}

Tensor ActNorm::forward(const Tensor& x, double& logdet) const {
    const int C = channels();
    check_input(x, C, "actnorm");
    Tensor z(x.shape());
    const std::int64_t n = spatial_size(x);
    double ls_sum = 0.0;
    for (int c = 0; c < C; ++c) {
        const double s = std::exp(log_s.value[c]);
        const double b = bias.value[c];
        ls_sum += log_s.value[c];
        const double* in = x.data() + c * n;
        double* out = z.data() + c * n;
        for (std::int64_t i = 0; i < n; ++i) out[i] = s * in[i] + b;
    }
    logdet += static_cast<double>(n) * ls_sum;
    return z;
}

Tensor ActNorm::inverse(const Tensor& z) const {
    const int C = channels();
    check_input(z, C, "actnorm inverse");
    Tensor x(z.shape());
    const std::int64_t n = spatial_size(z);
    for (int c = 0; c < C; ++c) {
        const double inv_s = std::exp(-log_s.value[c]);
        const double b = bias.value[c];
        const double* in = z.data() + c * n;
        double* out = x.data() + c * n;
        for (std::int64_t i = 0; i < n; ++i) out[i] = (in[i] - b) * inv_s;
    }
    return x;
}

Tensor ActNorm::backward(const Tensor& grad_out, double grad_logdet, const Tensor& x_in) {
    const int C = channels();
    check_input(grad_out, C, "actnorm backward");
    require(grad_out.same_shape(x_in), "actnorm backward: gradient and input shapes differ");
    Tensor grad_in(x_in.shape());
    const std::int64_t n = spatial_size(x_in);
    for (int c = 0; c < C; ++c) {
        const double s = std::exp(log_s.value[c]);
        const double* g = grad_out.data() + c * n;
        const double* xi = x_in.data() + c * n;
        double* gi = grad_in.data() + c * n;
        double gb = 0.0;
        double gls = 0.0;
        for (std::int64_t i = 0; i < n; ++i) {
            gi[i] = g[i] * s;
            gb += g[i];
            gls += g[i] * s * xi[i];
        }
        bias.grad[c] += gb;
        log_s.grad[c] += gls + grad_logdet * static_cast<double>(n);
    }
    return grad_in;
}

void ActNorm::params(const std::string& prefix, std::vector<Param*>& out) {
    log_s.name = prefix + ".log_s";
    bias.name = prefix + ".bias";
    out.push_back(&log_s);
    out.push_back(&bias);
}

// ------------------------------------------------------------- InvConv1x1

InvConv1x1::InvConv1x1(int channels)
    : lower(Tensor({channels, channels}), "lower"),
      upper(Tensor({channels, channels}), "upper"),
      log_diag(Tensor({channels}), "log_diag"),
      perm(Tensor({channels})),
      sign(Tensor({channels}, 1.0)) {
    require(channels > 0, "channel mixing needs at least one channel");
    for (int i = 0; i < channels; ++i) perm[i] = i;
}

void InvConv1x1::randomize(Rng& rng) {
    const int C = channels();
    Eigen::MatrixXd noise(C, C);
    for (int i = 0; i < C; ++i)
        for (int j = 0; j < C; ++j) noise(i, j) = rng.normal();
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(noise);
    const Eigen::MatrixXd rot = qr.householderQ();
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(rot);
    const Eigen::MatrixXd lu_packed = lu.matrixLU();
    // Eigen factors P_e * rot = L * U, so the stored row gather is P_e^T.
    Eigen::MatrixXd pe = Eigen::MatrixXd::Identity(C, C);
    pe = lu.permutationP() * pe;
    for (int i = 0; i < C; ++i) {
        int idx = i;
        for (int j = 0; j < C; ++j)
            if (pe(j, i) > 0.5) idx = j;
        perm[i] = idx;
    }
    for (int i = 0; i < C; ++i) {
        for (int j = 0; j < C; ++j) {
            lower.value[i * C + j] = (i > j) ? lu_packed(i, j) : 0.0;
            upper.value[i * C + j] = (i < j) ? lu_packed(i, j) : 0.0;
        }
        const double d = lu_packed(i, i);
        sign[i] = (d < 0.0) ? -1.0 : 1.0;
        log_diag.value[i] = std::log(std::abs(d));
    }
}

std::vector<double> InvConv1x1::weight_matrix() const {
    const int C = channels();
    auto lv = [&](int i, int k) {
        return k == i ? 1.0 : (k < i ? lower.value[i * C + k] : 0.0);
    };
    auto uv = [&](int k, int j) {
        if (k == j) return sign[j] * std::exp(log_diag.value[j]);
        return k < j ? upper.value[k * C + j] : 0.0;
    };
    std::vector<double> lu(static_cast<std::size_t>(C) * C, 0.0);
    for (int i = 0; i < C; ++i)
        for (int j = 0; j < C; ++j) {
            double acc = 0.0;
            for (int k = 0; k <= std::min(i, j); ++k) acc += lv(i, k) * uv(k, j);
            lu[static_cast<std::size_t>(i) * C + j] = acc;
        }
    std::vector<double> w(static_cast<std::size_t>(C) * C, 0.0);
    for (int i = 0; i < C; ++i) {
        const int src = static_cast<int>(perm[i]);
        for (int j = 0; j < C; ++j)
            w[static_cast<std::size_t>(i) * C + j] = lu[static_cast<std::size_t>(src) * C + j];
    }
    return w;
}

Tensor InvConv1x1::forward(const Tensor& x, double& logdet) const {
    const int C = channels();
    check_input(x, C, "channel mixing");
    const std::vector<double> w = weight_matrix();
    Tensor z(x.shape());
    const std::int64_t n = spatial_size(x);
    for (int a = 0; a < C; ++a) {
        double* out = z.data() + a * n;
        for (int b = 0; b < C; ++b) {
            const double wv = w[static_cast<std::size_t>(a) * C + b];
            if (wv == 0.0) continue;
            const double* in = x.data() + b * n;
            for (std::int64_t i = 0; i < n; ++i) out[i] += wv * in[i];
        }
    }
    double ld = 0.0;
    for (int c = 0; c < C; ++c) ld += log_diag.value[c];
    logdet += static_cast<double>(n) * ld;
    return z;
}

Tensor InvConv1x1::inverse(const Tensor& z) const {
    const int C = channels();
    check_input(z, C, "channel mixing inverse");
    // Columns of W^{-1} from P L U x = e_j: permute, then two triangular solves.
    std::vector<double> winv(static_cast<std::size_t>(C) * C, 0.0);
    std::vector<double> t(static_cast<std::size_t>(C), 0.0);
    std::vector<double> xcol(static_cast<std::size_t>(C), 0.0);
    for (int j = 0; j < C; ++j) {
        const int pj = static_cast<int>(perm[j]);
        for (int i = 0; i < C; ++i) {
            double v = (i == pj) ? 1.0 : 0.0;
            for (int k = 0; k < i; ++k) v -= lower.value[i * C + k] * t[static_cast<std::size_t>(k)];
            t[static_cast<std::size_t>(i)] = v;
        }
        for (int i = C - 1; i >= 0; --i) {
            double v = t[static_cast<std::size_t>(i)];
            for (int k = i + 1; k < C; ++k)
                v -= upper.value[i * C + k] * xcol[static_cast<std::size_t>(k)];
            xcol[static_cast<std::size_t>(i)] = v / (sign[i] * std::exp(log_diag.value[i]));
        }
        for (int i = 0; i < C; ++i) winv[static_cast<std::size_t>(i) * C + j] = xcol[static_cast<std::size_t>(i)];
    }
    Tensor x(z.shape());
    const std::int64_t n = spatial_size(z);
    for (int a = 0; a < C; ++a) {
        double* out = x.data() + a * n;
        for (int b = 0; b < C; ++b) {
            const double wv = winv[static_cast<std::size_t>(a) * C + b];
            if (wv == 0.0) continue;
            const double* in = z.data() + b * n;
            for (std::int64_t i = 0; i < n; ++i) out[i] += wv * in[i];
        }
    }
    return x;
}

Tensor InvConv1x1::backward(const Tensor& grad_out, double grad_logdet, const Tensor& x_in) {
    const int C = channels();
    check_input(grad_out, C, "channel mixing backward");
    require(grad_out.same_shape(x_in), "channel mixing backward: gradient and input shapes differ");
    const std::vector<double> w = weight_matrix();
    const std::int64_t n = spatial_size(x_in);
    // G[a][b] = sum over voxels of grad_out[a] * x_in[b]; grad_in = W^T grad_out.
    std::vector<double> gmat(static_cast<std::size_t>(C) * C, 0.0);
    Tensor grad_in(x_in.shape());
    for (int a = 0; a < C; ++a) {
        const double* g = grad_out.data() + a * n;
        for (int b = 0; b < C; ++b) {
            const double* xi = x_in.data() + b * n;
            double acc = 0.0;
            for (std::int64_t i = 0; i < n; ++i) acc += g[i] * xi[i];
            gmat[static_cast<std::size_t>(a) * C + b] = acc;
            const double wv = w[static_cast<std::size_t>(a) * C + b];
            if (wv != 0.0) {
                double* gi = grad_in.data() + b * n;
                for (std::int64_t i = 0; i < n; ++i) gi[i] += wv * g[i];
            }
        }
    }
    // Chain through W = P L U: A = P^T G, dL = A U^T (strict lower), dU = L^T A.
    std::vector<double> a_mat(static_cast<std::size_t>(C) * C, 0.0);
    for (int k = 0; k < C; ++k) {
        const int r = static_cast<int>(perm[k]);
        for (int j = 0; j < C; ++j)
            a_mat[static_cast<std::size_t>(r) * C + j] = gmat[static_cast<std::size_t>(k) * C + j];
    }
    auto lv = [&](int i, int k) {
        return k == i ? 1.0 : (k < i ? lower.value[i * C + k] : 0.0);
    };
    auto uv = [&](int k, int j) {
        if (k == j) return sign[j] * std::exp(log_diag.value[j]);
        return k < j ? upper.value[k * C + j] : 0.0;
    };
    for (int i = 0; i < C; ++i)
        for (int j = 0; j < i; ++j) {
            double acc = 0.0;
            for (int k = 0; k < C; ++k) acc += a_mat[static_cast<std::size_t>(i) * C + k] * uv(j, k);
            lower.grad[i * C + j] += acc;
        }
    for (int i = 0; i < C; ++i) {
        for (int j = i; j < C; ++j) {
            double acc = 0.0;
            for (int k = 0; k < C; ++k) acc += lv(k, i) * a_mat[static_cast<std::size_t>(k) * C + j];
            if (j > i) {
                upper.grad[i * C + j] += acc;
            } else {
                log_diag.grad[i] += acc * sign[i] * std::exp(log_diag.value[i]) +
                                    grad_logdet * static_cast<double>(n);
            }
        }
    }
    return grad_in;
}

void InvConv1x1::params(const std::string& prefix, std::vector<Param*>& out) {
    lower.name = prefix + ".lower";
    upper.name = prefix + ".upper";
    log_diag.name = prefix + ".log_diag";
    out.push_back(&lower);
    out.push_back(&upper);
    out.push_back(&log_diag);
}

// --------------------------------------------------------------- ConvNet2

ConvNet2::ConvNet2(int in_channels, int hidden, int out_channels)
    : w1(Tensor({hidden, in_channels, 3, 3, 3}), "w1"),
      b1(Tensor({hidden}), "b1"),
      w2(Tensor({out_channels, hidden, 3, 3, 3}), "w2"),
      b2(Tensor({out_channels}), "b2") {
    require(in_channels > 0 && hidden > 0 && out_channels > 0,
            "conv net needs positive channel counts");
}

void ConvNet2::randomize(Rng& rng) {
    const double s = std::sqrt(2.0 / (static_cast<double>(in_channels()) * 27.0));
    for (double& v : w1.value.values()) v = s * rng.normal();
    b1.value.fill(0.0);
    w2.value.fill(0.0);
    b2.value.fill(0.0);
}

Tensor ConvNet2::forward(const Tensor& x, Cache* cache) const {
    Tensor pre = conv3d(x, w1.value, b1.value, 1);
    Tensor act = leaky_relu(pre);
    Tensor out = conv3d(act, w2.value, b2.value, 1);
    if (cache) {
        cache->x = x;
        cache->pre = std::move(pre);
        cache->act = std::move(act);
    }
    return out;
}

Tensor ConvNet2::backward(const Tensor& grad_out, const Cache& cache) {
    Conv3dGrads g2 = conv3d_backward(grad_out, cache.act, w2.value);
    w2.grad += g2.weight;
    b2.grad += g2.bias;
    Tensor gpre = leaky_relu_backward(g2.input, cache.pre);
    Conv3dGrads g1 = conv3d_backward(gpre, cache.x, w1.value);
    w1.grad += g1.weight;
    b1.grad += g1.bias;
    return std::move(g1.input);
}

void ConvNet2::params(const std::string& prefix, std::vector<Param*>& out) {
    w1.name = prefix + ".w1";
    b1.name = prefix + ".b1";
    w2.name = prefix + ".w2";
    b2.name = prefix + ".b2";
    out.push_back(&w1);
    out.push_back(&b1);
    out.push_back(&w2);
    out.push_back(&b2);
}

// --------------------------------------------------------------- Coupling

Coupling::Coupling(int channels_in, int cond_channels_in, int hidden, bool tf, double clamp_in)
    : net(channels_in - channels_in / 2 + cond_channels_in, hidden, 2 * (channels_in / 2)),
      channels(channels_in),
      cond_channels(cond_channels_in),
      d_keep(channels_in - channels_in / 2),
      d_trans(channels_in / 2),
      transform_first(tf),
      clamp(clamp_in) {
    require(channels >= 2,
            "coupling needs at least two channels to split, got " + std::to_string(channels));
    require(clamp > 0.0, "coupling clamp must be positive");
}

namespace {

void check_coupling_cond(const Tensor& x, const Tensor* cond, int cond_channels) {
    if (cond_channels == 0) {
        require(cond == nullptr, "coupling built without conditioning but got a conditioning tensor");
        return;
    }
    require(cond != nullptr, "coupling built for " + std::to_string(cond_channels) +
                                 " conditioning channels but got none");
    require(cond->rank() == 4 && cond->dim(0) == cond_channels,
            "conditioning tensor must be [" + std::to_string(cond_channels) +
                ",D,H,W], got " + shape_str(cond->shape()));
    require(cond->dim(1) == x.dim(1) && cond->dim(2) == x.dim(2) && cond->dim(3) == x.dim(3),
            "conditioning tensor spatial dims " + shape_str(cond->shape()) +
                " do not match the input " + shape_str(x.shape()));
}

}  // namespace

Tensor Coupling::forward(const Tensor& x, const Tensor* cond, double& logdet,
                         Cache* cache) const {
    check_input(x, channels, "coupling");
    check_coupling_cond(x, cond, cond_channels);
    const int k0 = transform_first ? d_trans : 0;
    const int t0 = transform_first ? 0 : d_keep;
    Tensor kept = slice_channels(x, k0, k0 + d_keep);
    Tensor u = cond ? concat_channels(kept, *cond) : std::move(kept);
    Tensor net_out = net.forward(u, cache ? &cache->net : nullptr);

    Tensor out = x;
    const std::int64_t n = spatial_size(x);
    double sig_sum = 0.0;
    for (int ct = 0; ct < d_trans; ++ct) {
        const double* sraw = net_out.data() + ct * n;
        const double* shift = net_out.data() + (static_cast<std::int64_t>(d_trans) + ct) * n;
        double* row = out.data() + (static_cast<std::int64_t>(t0) + ct) * n;
        for (std::int64_t i = 0; i < n; ++i) {
            const double sig = clamp * std::tanh(sraw[i] / clamp);
            sig_sum += sig;
            row[i] = row[i] * std::exp(sig) + shift[i];
        }
    }
    logdet += sig_sum;
    if (cache) {
        cache->x_in = x;
        cache->net_out = std::move(net_out);
    }
    return out;
}

Tensor Coupling::inverse(const Tensor& z, const Tensor* cond) const {
    check_input(z, channels, "coupling inverse");
    check_coupling_cond(z, cond, cond_channels);
    const int k0 = transform_first ? d_trans : 0;
    const int t0 = transform_first ? 0 : d_keep;
    Tensor kept = slice_channels(z, k0, k0 + d_keep);
    Tensor u = cond ? concat_channels(kept, *cond) : std::move(kept);
    const Tensor net_out = net.forward(u);

    Tensor out = z;
    const std::int64_t n = spatial_size(z);
    for (int ct = 0; ct < d_trans; ++ct) {
        const double* sraw = net_out.data() + ct * n;
        const double* shift = net_out.data() + (static_cast<std::int64_t>(d_trans) + ct) * n;
        double* row = out.data() + (static_cast<std::int64_t>(t0) + ct) * n;
        for (std::int64_t i = 0; i < n; ++i) {
            const double sig = clamp * std::tanh(sraw[i] / clamp);
            row[i] = (row[i] - shift[i]) * std::exp(-sig);
        }
    }
    return out;
}

Tensor Coupling::backward(const Tensor& grad_out, double grad_logdet, const Cache& cache,
                          Tensor* grad_cond) {
    const Tensor& x = cache.x_in;
    check_input(grad_out, channels, "coupling backward");
    require(grad_out.same_shape(x), "coupling backward: gradient and cached input shapes differ");
    const int k0 = transform_first ? d_trans : 0;
    const int t0 = transform_first ? 0 : d_keep;
    const std::int64_t n = spatial_size(x);

    Tensor grad_in(x.shape());
    Tensor grad_net(cache.net_out.shape());
    for (int ct = 0; ct < d_trans; ++ct) {
        const double* sraw = cache.net_out.data() + ct * n;
        const double* gt = grad_out.data() + (static_cast<std::int64_t>(t0) + ct) * n;
        const double* xt = x.data() + (static_cast<std::int64_t>(t0) + ct) * n;
        double* gs = grad_net.data() + ct * n;
        double* gshift = grad_net.data() + (static_cast<std::int64_t>(d_trans) + ct) * n;
        double* gx = grad_in.data() + (static_cast<std::int64_t>(t0) + ct) * n;
        for (std::int64_t i = 0; i < n; ++i) {
            const double th = std::tanh(sraw[i] / clamp);
            const double es = std::exp(clamp * th);
            const double gsig = gt[i] * xt[i] * es + grad_logdet;
            gs[i] = gsig * (1.0 - th * th);
            gshift[i] = gt[i];
            gx[i] = gt[i] * es;
        }
    }
    Tensor gu = net.backward(grad_net, cache.net);
    for (int ck = 0; ck < d_keep; ++ck) {
        const double* gk = grad_out.data() + (static_cast<std::int64_t>(k0) + ck) * n;
        const double* gun = gu.data() + ck * n;
        double* gi = grad_in.data() + (static_cast<std::int64_t>(k0) + ck) * n;
        for (std::int64_t i = 0; i < n; ++i) gi[i] = gk[i] + gun[i];
    }
    if (cond_channels > 0 && grad_cond != nullptr) {
        require(grad_cond->rank() == 4 && grad_cond->dim(0) == cond_channels &&
                    grad_cond->dim(1) == x.dim(1) && grad_cond->dim(2) == x.dim(2) &&
                    grad_cond->dim(3) == x.dim(3),
                "coupling backward: conditioning gradient has shape " +
                    shape_str(grad_cond->shape()) + ", expected [" +
                    std::to_string(cond_channels) + "," + std::to_string(x.dim(1)) + "," +
                    std::to_string(x.dim(2)) + "," + std::to_string(x.dim(3)) + "]");
        for (int cc = 0; cc < cond_channels; ++cc) {
            const double* gun = gu.data() + (static_cast<std::int64_t>(d_keep) + cc) * n;
            double* gc = grad_cond->data() + cc * n;
            for (std::int64_t i = 0; i < n; ++i) gc[i] += gun[i];
        }
    }
    return grad_in;
}

void Coupling::params(const std::string& prefix, std::vector<Param*>& out) {
    net.params(prefix + ".net", out);
}

// --------------------------------------------------------------- FlowStep

FlowStep::FlowStep(int channels, int cond_channels, int hidden, bool flip, double clamp)
    : actnorm(channels),
      invconv(channels),
      coupling(channels, cond_channels, hidden, flip, clamp) {}

Tensor FlowStep::forward(const Tensor& x, const Tensor* cond, double& logdet,
                         Cache* cache) const {
    Tensor a = actnorm.forward(x, logdet);
    Tensor b = invconv.forward(a, logdet);
    Tensor c = coupling.forward(b, cond, logdet, cache ? &cache->cpl : nullptr);
    if (cache) {
        cache->x_in = x;
        cache->x_an = std::move(a);
    }
    return c;
}

Tensor FlowStep::inverse(const Tensor& z, const Tensor* cond) const {
    return actnorm.inverse(invconv.inverse(coupling.inverse(z, cond)));
}

Tensor FlowStep::backward(const Tensor& grad_out, double grad_logdet, const Cache& cache,
                          Tensor* grad_cond) {
    Tensor g = coupling.backward(grad_out, grad_logdet, cache.cpl, grad_cond);
    g = invconv.backward(g, grad_logdet, cache.x_an);
    return actnorm.backward(g, grad_logdet, cache.x_in);
}

void FlowStep::params(const std::string& prefix, std::vector<Param*>& out) {
    actnorm.params(prefix + ".actnorm", out);
    invconv.params(prefix + ".mix", out);
    coupling.params(prefix + ".coupling", out);
}

// ----------------------------------------------------------- flow drivers

Tensor flow_forward(const std::vector<FlowStep>& steps, const Tensor& x, const Tensor* cond,
                    double& logdet, FlowCache* cache) {
    if (cache) cache->steps.resize(steps.size());
    Tensor z = x;
    for (std::size_t i = 0; i < steps.size(); ++i)
        z = steps[i].forward(z, cond, logdet, cache ? &cache->steps[i] : nullptr);
    return z;
}

Tensor flow_inverse(const std::vector<FlowStep>& steps, const Tensor& z, const Tensor* cond) {
    Tensor x = z;
    for (std::size_t i = steps.size(); i > 0; --i) x = steps[i - 1].inverse(x, cond);
    return x;
}

Tensor flow_backward(std::vector<FlowStep>& steps, const FlowCache& cache,
                     const Tensor& grad_out, double grad_logdet, const Tensor* cond,
                     Tensor* grad_cond) {
    require(cache.steps.size() == steps.size(), "flow backward: cache does not match the steps");
    if (grad_cond) {
        require(cond != nullptr,
                "flow backward: conditioning gradient requested without a conditioning tensor");
        *grad_cond = Tensor(cond->shape());
    }
    Tensor g = grad_out;
    for (std::size_t i = steps.size(); i > 0; --i)
        g = steps[i - 1].backward(g, grad_logdet, cache.steps[i - 1], grad_cond);
    return g;
}

std::vector<Tensor> flow_init_actnorm(std::vector<FlowStep>& steps, std::vector<Tensor> batch,
                                      const std::vector<Tensor>* cond_batch) {
    if (cond_batch)
        require(cond_batch->size() == batch.size(),
                "actnorm init: conditioning batch size does not match the input batch");
    for (FlowStep& step : steps) {
        step.actnorm.init_from_batch(batch);
        for (std::size_t i = 0; i < batch.size(); ++i) {
            double ld = 0.0;
            batch[i] = step.forward(batch[i], cond_batch ? &(*cond_batch)[i] : nullptr, ld);
        }
    }
    return batch;
}

void flow_params(std::vector<FlowStep>& steps, const std::string& prefix,
                 std::vector<Param*>& out) {
    for (std::size_t i = 0; i < steps.size(); ++i)
        steps[i].params(prefix + ".step" + std::to_string(i), out);
}

// ------------------------------------------------------ squeeze/unsqueeze

Tensor squeeze(const Tensor& x) {
    require(x.rank() == 4, "squeeze expects a rank-4 tensor, got " + shape_str(x.shape()));
    const int C = x.dim(0), D = x.dim(1), H = x.dim(2), W = x.dim(3);
    require(D % 2 == 0 && H % 2 == 0 && W % 2 == 0,
            "squeeze needs even spatial extents, got " + shape_str(x.shape()));
    Tensor z({C * 8, D / 2, H / 2, W / 2});
    for (int c = 0; c < C; ++c)
        for (int dz = 0; dz < 2; ++dz)
            for (int dy = 0; dy < 2; ++dy)
                for (int dx = 0; dx < 2; ++dx) {
                    const int co = c * 8 + dz * 4 + dy * 2 + dx;
                    for (int zz = 0; zz < D / 2; ++zz)
                        for (int yy = 0; yy < H / 2; ++yy)
                            for (int xx = 0; xx < W / 2; ++xx)
                                z.at4(co, zz, yy, xx) =
                                    x.at4(c, 2 * zz + dz, 2 * yy + dy, 2 * xx + dx);
                }
    return z;
}

Tensor unsqueeze(const Tensor& z) {
    require(z.rank() == 4, "unsqueeze expects a rank-4 tensor, got " + shape_str(z.shape()));
    const int C8 = z.dim(0), D = z.dim(1), H = z.dim(2), W = z.dim(3);
    require(C8 % 8 == 0, "unsqueeze needs a channel count divisible by 8, got " +
                             shape_str(z.shape()));
    const int C = C8 / 8;
    Tensor x({C, D * 2, H * 2, W * 2});
    for (int c = 0; c < C; ++c)
        for (int dz = 0; dz < 2; ++dz)
            for (int dy = 0; dy < 2; ++dy)
                for (int dx = 0; dx < 2; ++dx) {
                    const int ci = c * 8 + dz * 4 + dy * 2 + dx;
                    for (int zz = 0; zz < D; ++zz)
                        for (int yy = 0; yy < H; ++yy)
                            for (int xx = 0; xx < W; ++xx)
                                x.at4(c, 2 * zz + dz, 2 * yy + dy, 2 * xx + dx) =
                                    z.at4(ci, zz, yy, xx);
                }
    return x;
}

}  // namespace flowsr
