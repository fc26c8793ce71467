#include <doctest.h>

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <vector>

#include "flowsr/flow.hpp"
#include "flowsr/optim.hpp"
#include "flowsr/rng.hpp"

using flowsr::ActNorm;
using flowsr::ConvNet2;
using flowsr::Coupling;
using flowsr::FlowCache;
using flowsr::FlowStep;
using flowsr::InvConv1x1;
using flowsr::Param;
using flowsr::Rng;
using flowsr::Tensor;

namespace {

double dot(const Tensor& a, const Tensor& b) {
    REQUIRE(a.same_shape(b));
    double s = 0.0;
    for (std::int64_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

bool close(double a, double b, double rtol = 1e-3, double atol = 1e-7) {
    return std::abs(a - b) <= atol + rtol * std::max(std::abs(a), std::abs(b));
}

void check_grad(const Tensor& analytic, const Tensor& numeric, const char* label) {
    REQUIRE(analytic.same_shape(numeric));
    for (std::int64_t i = 0; i < analytic.size(); ++i) {
        INFO(label << " element " << i << ": " << analytic[i] << " vs " << numeric[i]);
        CHECK(close(analytic[i], numeric[i]));
    }
}

/// Central-difference gradient of `loss` with respect to one parameter tensor.
Tensor numeric_param_grad(Param& p, const std::function<double()>& loss) {
    const Tensor saved = p.value;
    Tensor g = flowsr::finite_diff_grad(
        [&](const Tensor& v) {
            p.value = v;
            return loss();
        },
        saved);
    p.value = saved;
    return g;
}

double logabsdet_numeric_jacobian(const std::function<Tensor(const Tensor&)>& f, const Tensor& x) {
    const std::int64_t n = x.size();
    Eigen::MatrixXd jac(n, n);
    const double h = 1e-5;
    Tensor xp = x;
    for (std::int64_t c = 0; c < n; ++c) {
        xp[c] = x[c] + h;
        const Tensor up = f(xp);
        xp[c] = x[c] - h;
        const Tensor um = f(xp);
        xp[c] = x[c];
        REQUIRE(up.size() == n);
        for (std::int64_t r = 0; r < n; ++r) jac(r, c) = (up[r] - um[r]) / (2.0 * h);
    }
    const Eigen::PartialPivLU<Eigen::MatrixXd> lu(jac);
    double ld = 0.0;
    for (std::int64_t i = 0; i < n; ++i) ld += std::log(std::abs(lu.matrixLU()(i, i)));
    return ld;
}

}  // namespace

TEST_CASE("squeeze places each 2x2x2 sub-lattice in its own channel") {
    Tensor x({1, 2, 2, 2});
    for (std::int64_t i = 0; i < 8; ++i) x[i] = static_cast<double>(i);
    const Tensor z = flowsr::squeeze(x);
    REQUIRE(z.dim(0) == 8);
    REQUIRE(z.dim(1) == 1);
    for (int dz = 0; dz < 2; ++dz)
        for (int dy = 0; dy < 2; ++dy)
            for (int dx = 0; dx < 2; ++dx)
                CHECK(z[dz * 4 + dy * 2 + dx] == x.at4(0, dz, dy, dx));
}

TEST_CASE("squeeze round trip and input validation") {
    Rng rng(1);
    const Tensor x = rng.normal_tensor({3, 4, 6, 2});
    const Tensor z = flowsr::squeeze(x);
    CHECK(z.dim(0) == 24);
    CHECK(z.dim(1) == 2);
    CHECK(z.dim(2) == 3);
    CHECK(z.dim(3) == 1);
    CHECK(flowsr::max_abs_diff(flowsr::unsqueeze(z), x) == 0.0);

    CHECK_THROWS_AS(flowsr::squeeze(Tensor({1, 3, 4, 4})), std::invalid_argument);
    CHECK_THROWS_AS(flowsr::unsqueeze(Tensor({4, 2, 2, 2})), std::invalid_argument);
}

TEST_CASE("actnorm data-dependent init whitens the batch") {
    Rng rng(2);
    std::vector<Tensor> batch;
    for (int i = 0; i < 4; ++i) {
        Tensor t = rng.normal_tensor({3, 2, 2, 2});
        t *= 2.5;
        for (std::int64_t j = 0; j < t.size(); ++j) t[j] += 1.0;
        batch.push_back(t);
    }
    ActNorm an(3);
    CHECK_FALSE(an.initialized);
    an.init_from_batch(batch);
    CHECK(an.initialized);

    // per-channel mean 0, variance 1 across the whole batch
    for (int c = 0; c < 3; ++c) {
        double mean = 0.0, sq = 0.0;
        std::int64_t n = 0;
        for (const Tensor& t : batch) {
            double ld = 0.0;
            const Tensor z = an.forward(t, ld);
            for (std::int64_t d = 0; d < 2; ++d)
                for (std::int64_t h = 0; h < 2; ++h)
                    for (std::int64_t w = 0; w < 2; ++w) {
                        const double v = z.at4(c, d, h, w);
                        mean += v;
                        sq += v * v;
                        ++n;
                    }
        }
        mean /= static_cast<double>(n);
        sq /= static_cast<double>(n);
        CHECK(std::abs(mean) < 1e-10);
        CHECK(std::abs(sq - mean * mean - 1.0) < 1e-9);
    }
}

TEST_CASE("actnorm rejects a constant channel") {
    std::vector<Tensor> batch{Tensor({2, 2, 2, 2}, 3.0)};
    ActNorm an(2);
    CHECK_THROWS_AS(an.init_from_batch(batch), std::invalid_argument);
}

TEST_CASE("actnorm round trip and logdet") {
    Rng rng(3);
    ActNorm an(4);
    an.log_s.value = rng.normal_tensor({4}, 0.4);
    an.bias.value = rng.normal_tensor({4}, 0.5);

    const Tensor x = rng.normal_tensor({4, 2, 3, 2});
    double ld = 0.0;
    const Tensor z = an.forward(x, ld);
    CHECK(flowsr::max_abs_diff(an.inverse(z), x) < 1e-12);
    CHECK(close(ld, 12.0 * flowsr::sum(an.log_s.value), 1e-12, 1e-12));
}

TEST_CASE("actnorm gradients match finite differences") {
    Rng rng(4);
    ActNorm an(3);
    an.log_s.value = rng.normal_tensor({3}, 0.3);
    an.bias.value = rng.normal_tensor({3}, 0.3);
    const Tensor x = rng.normal_tensor({3, 2, 2, 2});
    const Tensor w = rng.normal_tensor({3, 2, 2, 2});
    const double wl = 0.7;

    const auto loss = [&]() {
        double ld = 0.0;
        const Tensor z = an.forward(x, ld);
        return dot(z, w) + wl * ld;
    };

    an.log_s.zero_grad();
    an.bias.zero_grad();
    const Tensor gin = an.backward(w, wl, x);
    const Tensor g_log_s = an.log_s.grad;
    const Tensor g_bias = an.bias.grad;

    check_grad(g_log_s, numeric_param_grad(an.log_s, loss), "log_s");
    check_grad(g_bias, numeric_param_grad(an.bias, loss), "bias");
    const Tensor gin_num = flowsr::finite_diff_grad(
        [&](const Tensor& v) {
            double ld = 0.0;
            return dot(an.forward(v, ld), w) + wl * ld;
        },
        x);
    check_grad(gin, gin_num, "input");
}

TEST_CASE("channel mixing starts as the identity") {
    InvConv1x1 mix(5);
    Rng rng(5);
    const Tensor x = rng.normal_tensor({5, 2, 2, 2});
    double ld = 0.0;
    const Tensor z = mix.forward(x, ld);
    CHECK(flowsr::max_abs_diff(z, x) == 0.0);
    CHECK(ld == 0.0);
}

TEST_CASE("channel mixing round trip and factored logdet vs dense oracle") {
    Rng rng(6);
    InvConv1x1 mix(6);
    mix.randomize(rng);
    // push the factors off the rotation so |det| != 1
    for (std::int64_t i = 0; i < mix.log_diag.value.size(); ++i)
        mix.log_diag.value[i] += 0.2 * rng.normal();
    for (std::int64_t i = 0; i < mix.lower.value.size(); ++i)
        mix.lower.value[i] += 0.05 * rng.normal();
    for (std::int64_t i = 0; i < mix.upper.value.size(); ++i)
        mix.upper.value[i] += 0.05 * rng.normal();

    const Tensor x = rng.normal_tensor({6, 2, 2, 2});
    double ld = 0.0;
    const Tensor z = mix.forward(x, ld);
    CHECK(flowsr::max_abs_diff(mix.inverse(z), x) < 1e-10);

    const std::vector<double> wm = mix.weight_matrix();
    const Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>
        W(wm.data(), 6, 6);
    const Eigen::MatrixXd dense(W);
    const Eigen::PartialPivLU<Eigen::MatrixXd> lu(dense);
    double lad = 0.0;
    for (int i = 0; i < 6; ++i) lad += std::log(std::abs(lu.matrixLU()(i, i)));
    const double n_vox = 8.0;
    CHECK(close(ld, n_vox * lad, 1e-9, 1e-9));
}

TEST_CASE("channel mixing gradients match finite differences") {
    Rng rng(7);
    InvConv1x1 mix(4);
    mix.randomize(rng);
    for (std::int64_t i = 0; i < mix.log_diag.value.size(); ++i)
        mix.log_diag.value[i] += 0.1 * rng.normal();

    const Tensor x = rng.normal_tensor({4, 1, 2, 2});
    const Tensor w = rng.normal_tensor({4, 1, 2, 2});
    const double wl = -0.4;

    const auto loss = [&]() {
        double ld = 0.0;
        return dot(mix.forward(x, ld), w) + wl * ld;
    };

    mix.lower.zero_grad();
    mix.upper.zero_grad();
    mix.log_diag.zero_grad();
    const Tensor gin = mix.backward(w, wl, x);

    check_grad(mix.lower.grad, numeric_param_grad(mix.lower, loss), "lower");
    check_grad(mix.upper.grad, numeric_param_grad(mix.upper, loss), "upper");
    check_grad(mix.log_diag.grad, numeric_param_grad(mix.log_diag, loss), "log_diag");
    const Tensor gin_num = flowsr::finite_diff_grad(
        [&](const Tensor& v) {
            double ld = 0.0;
            return dot(mix.forward(v, ld), w) + wl * ld;
        },
        x);
    check_grad(gin, gin_num, "input");
}

TEST_CASE("conv net gradients match finite differences") {
    Rng rng(8);
    ConvNet2 net(2, 3, 4);
    net.randomize(rng);
    // jitter the zero-initialized last conv so its gradient path is exercised
    net.w2.value = rng.normal_tensor(net.w2.value.shape(), 0.1);
    net.b2.value = rng.normal_tensor(net.b2.value.shape(), 0.1);

    const Tensor x = rng.normal_tensor({2, 2, 2, 2});
    const Tensor w = rng.normal_tensor({4, 2, 2, 2});
    const auto loss = [&]() {
        ConvNet2::Cache c;
        return dot(net.forward(x, &c), w);
    };

    ConvNet2::Cache cache;
    net.forward(x, &cache);
    std::vector<Param*> ps;
    net.params("net", ps);
    for (Param* p : ps) p->zero_grad();
    const Tensor gin = net.backward(w, cache);

    for (Param* p : ps) check_grad(p->grad, numeric_param_grad(*p, loss), p->name.c_str());
    const Tensor gin_num = flowsr::finite_diff_grad(
        [&](const Tensor& v) {
            ConvNet2::Cache c;
            return dot(net.forward(v, &c), w);
        },
        x);
    check_grad(gin, gin_num, "input");
}

TEST_CASE("fresh coupling is the identity") {
    Coupling cpl(4, 2, 6, false);
    Rng rng(9);
    const Tensor x = rng.normal_tensor({4, 2, 2, 2});
    const Tensor cond = rng.normal_tensor({2, 2, 2, 2});
    double ld = 0.0;
    const Tensor z = cpl.forward(x, &cond, ld);
    CHECK(flowsr::max_abs_diff(z, x) == 0.0);
    CHECK(ld == 0.0);
}

TEST_CASE("coupling round trip with and without conditioning") {
    for (const bool flip : {false, true}) {
        CAPTURE(flip);
        Rng rng(10);
        Coupling cpl(5, 2, 6, flip);
        cpl.net.randomize(rng);
        cpl.net.w2.value = rng.normal_tensor(cpl.net.w2.value.shape(), 0.2);

        const Tensor x = rng.normal_tensor({5, 2, 2, 2});
        const Tensor cond = rng.normal_tensor({2, 2, 2, 2});
        double ld = 0.0;
        const Tensor z = cpl.forward(x, &cond, ld);
        CHECK(flowsr::max_abs_diff(cpl.inverse(z, &cond), x) < 1e-12);
        CHECK(ld != 0.0);

        Coupling uncond(4, 0, 6, flip);
        uncond.net.randomize(rng);
        uncond.net.w2.value = rng.normal_tensor(uncond.net.w2.value.shape(), 0.2);
        const Tensor x2 = rng.normal_tensor({4, 2, 2, 2});
        double ld2 = 0.0;
        const Tensor z2 = uncond.forward(x2, nullptr, ld2);
        CHECK(flowsr::max_abs_diff(uncond.inverse(z2, nullptr), x2) < 1e-12);
    }
}

TEST_CASE("coupling validates the conditioning tensor") {
    Coupling cpl(4, 2, 6, false);
    Rng rng(11);
    const Tensor x = rng.normal_tensor({4, 2, 2, 2});
    double ld = 0.0;
    CHECK_THROWS_AS(cpl.forward(x, nullptr, ld), std::invalid_argument);
    const Tensor bad = rng.normal_tensor({3, 2, 2, 2});
    CHECK_THROWS_AS(cpl.forward(x, &bad, ld), std::invalid_argument);
    Coupling uncond(4, 0, 6, false);
    const Tensor cond = rng.normal_tensor({2, 2, 2, 2});
    CHECK_THROWS_AS(uncond.forward(x, &cond, ld), std::invalid_argument);
}

TEST_CASE("coupling gradients match finite differences") {
    Rng rng(12);
    Coupling cpl(4, 2, 4, true);
    cpl.net.randomize(rng);
    cpl.net.w2.value = rng.normal_tensor(cpl.net.w2.value.shape(), 0.15);
    cpl.net.b2.value = rng.normal_tensor(cpl.net.b2.value.shape(), 0.1);

    const Tensor x = rng.normal_tensor({4, 1, 2, 2});
    const Tensor cond = rng.normal_tensor({2, 1, 2, 2});
    const Tensor w = rng.normal_tensor({4, 1, 2, 2});
    const double wl = 0.9;

    const auto loss = [&]() {
        double ld = 0.0;
        return dot(cpl.forward(x, &cond, ld), w) + wl * ld;
    };

    Coupling::Cache cache;
    double ld = 0.0;
    cpl.forward(x, &cond, ld, &cache);
    std::vector<Param*> ps;
    cpl.params("cpl", ps);
    for (Param* p : ps) p->zero_grad();
    Tensor grad_cond({2, 1, 2, 2});
    const Tensor gin = cpl.backward(w, wl, cache, &grad_cond);

    for (Param* p : ps) check_grad(p->grad, numeric_param_grad(*p, loss), p->name.c_str());
    const Tensor gin_num = flowsr::finite_diff_grad(
        [&](const Tensor& v) {
            double l = 0.0;
            return dot(cpl.forward(v, &cond, l), w) + wl * l;
        },
        x);
    check_grad(gin, gin_num, "input");
    const Tensor gcond_num = flowsr::finite_diff_grad(
        [&](const Tensor& v) {
            double l = 0.0;
            return dot(cpl.forward(x, &v, l), w) + wl * l;
        },
        cond);
    check_grad(grad_cond, gcond_num, "cond");
}

namespace {

std::vector<FlowStep> make_random_flow(int steps, int channels, int cond_channels, int hidden,
                                       Rng& rng) {
    std::vector<FlowStep> flow;
    for (int i = 0; i < steps; ++i) {
        flow.emplace_back(channels, cond_channels, hidden, i % 2 == 1, 2.0);
        flow.back().invconv.randomize(rng);
        flow.back().coupling.net.randomize(rng);
        // jitter every parameter so no gradient path hides behind a zero init
        std::vector<Param*> ps;
        flow.back().params("s", ps);
        for (Param* p : ps)
            for (std::int64_t j = 0; j < p->value.size(); ++j)
                p->value[j] += 0.05 * rng.normal();
    }
    return flow;
}

}  // namespace

TEST_CASE("multi-step flow round trip after actnorm init") {
    Rng rng(13);
    std::vector<FlowStep> flow = make_random_flow(3, 4, 2, 6, rng);

    std::vector<Tensor> batch, cond_batch;
    for (int i = 0; i < 3; ++i) {
        batch.push_back(rng.normal_tensor({4, 2, 2, 2}));
        cond_batch.push_back(rng.normal_tensor({2, 2, 2, 2}));
    }
    flowsr::flow_init_actnorm(flow, batch, &cond_batch);
    for (const FlowStep& s : flow) CHECK(s.actnorm.initialized);

    const Tensor x = rng.normal_tensor({4, 2, 2, 2});
    const Tensor cond = rng.normal_tensor({2, 2, 2, 2});
    double ld = 0.0;
    const Tensor z = flowsr::flow_forward(flow, x, &cond, ld);
    CHECK(flowsr::max_abs_diff(flowsr::flow_inverse(flow, z, &cond), x) < 1e-9);
}

TEST_CASE("actnorm init returns the transformed batch") {
    Rng rng(14);
    std::vector<FlowStep> flow = make_random_flow(2, 4, 0, 6, rng);
    std::vector<Tensor> batch;
    for (int i = 0; i < 2; ++i) batch.push_back(rng.normal_tensor({4, 2, 2, 2}));

    const std::vector<Tensor> out = flowsr::flow_init_actnorm(flow, batch, nullptr);
    REQUIRE(out.size() == batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i) {
        double ld = 0.0;
        const Tensor z = flowsr::flow_forward(flow, batch[i], nullptr, ld);
        CHECK(flowsr::max_abs_diff(out[i], z) < 1e-12);
    }
}

TEST_CASE("flow logdet matches a numerical Jacobian") {
    Rng rng(15);

    SUBCASE("unconditional") {
        std::vector<FlowStep> flow = make_random_flow(3, 4, 0, 4, rng);
        const Tensor x = rng.normal_tensor({4, 1, 2, 2});
        double ld = 0.0;
        flowsr::flow_forward(flow, x, nullptr, ld);
        const double ld_num = logabsdet_numeric_jacobian(
            [&](const Tensor& v) {
                double l = 0.0;
                return flowsr::flow_forward(flow, v, nullptr, l);
            },
            x);
        CHECK(close(ld, ld_num, 1e-4, 1e-6));
    }

    SUBCASE("conditional") {
        std::vector<FlowStep> flow = make_random_flow(3, 4, 2, 4, rng);
        const Tensor x = rng.normal_tensor({4, 1, 2, 2});
        const Tensor cond = rng.normal_tensor({2, 1, 2, 2});
        double ld = 0.0;
        flowsr::flow_forward(flow, x, &cond, ld);
        const double ld_num = logabsdet_numeric_jacobian(
            [&](const Tensor& v) {
                double l = 0.0;
                return flowsr::flow_forward(flow, v, &cond, l);
            },
            x);
        CHECK(close(ld, ld_num, 1e-4, 1e-6));
    }
}

TEST_CASE("flow backward matches finite differences end to end") {
    Rng rng(16);
    std::vector<FlowStep> flow = make_random_flow(2, 4, 2, 4, rng);

    const Tensor x = rng.normal_tensor({4, 1, 2, 2});
    const Tensor cond = rng.normal_tensor({2, 1, 2, 2});
    const Tensor w = rng.normal_tensor({4, 1, 2, 2});
    const double wl = 0.6;

    const auto loss = [&]() {
        double ld = 0.0;
        return dot(flowsr::flow_forward(flow, x, &cond, ld), w) + wl * ld;
    };

    FlowCache cache;
    double ld = 0.0;
    flowsr::flow_forward(flow, x, &cond, ld, &cache);
    std::vector<Param*> ps;
    flowsr::flow_params(flow, "f", ps);
    for (Param* p : ps) p->zero_grad();
    Tensor grad_cond;
    const Tensor gin = flowsr::flow_backward(flow, cache, w, wl, &cond, &grad_cond);

    for (Param* p : ps) check_grad(p->grad, numeric_param_grad(*p, loss), p->name.c_str());
    const Tensor gin_num = flowsr::finite_diff_grad(
        [&](const Tensor& v) {
            double l = 0.0;
            return dot(flowsr::flow_forward(flow, v, &cond, l), w) + wl * l;
        },
        x);
    check_grad(gin, gin_num, "input");
    const Tensor gcond_num = flowsr::finite_diff_grad(
        [&](const Tensor& v) {
            double l = 0.0;
            return dot(flowsr::flow_forward(flow, x, &v, l), w) + wl * l;
        },
        cond);
    check_grad(grad_cond, gcond_num, "cond");
}

TEST_CASE("flow parameter names are stable and unique") {
    Rng rng(17);
    std::vector<FlowStep> flow = make_random_flow(2, 4, 0, 4, rng);
    std::vector<Param*> ps;
    flowsr::flow_params(flow, "g", ps);
    REQUIRE_FALSE(ps.empty());
    std::vector<std::string> names;
    for (Param* p : ps) names.push_back(p->name);
    CHECK(names[0].rfind("g.step0.", 0) == 0);
    std::sort(names.begin(), names.end());
    CHECK(std::adjacent_find(names.begin(), names.end()) == names.end());
}
