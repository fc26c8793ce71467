#include "flowsr/ops.hpp"

#include <algorithm>

namespace flowsr {

namespace {

void check_conv_args(const Tensor& input, const Tensor& weight, int pad) {
    require(input.rank() == 4, "conv3d input must be rank-4 [C,D,H,W], got " + shape_str(input.shape()));
    require(weight.rank() == 5, "conv3d weight must be rank-5 [Cout,Cin,k,k,k], got " + shape_str(weight.shape()));
    const int k = weight.dim(2);
    require(weight.dim(3) == k && weight.dim(4) == k, "conv3d kernel must be cubic, got " + shape_str(weight.shape()));
    require(k % 2 == 1, "conv3d kernel size must be odd, got " + std::to_string(k));
    require(pad == (k - 1) / 2, "conv3d pad must be (k-1)/2 = " + std::to_string((k - 1) / 2) +
                                    ", got " + std::to_string(pad));
    require(weight.dim(1) == input.dim(0),
            "conv3d channel mismatch: input has " + std::to_string(input.dim(0)) + " channels, weight expects " +
                std::to_string(weight.dim(1)));
}

}  // namespace

Tensor conv3d(const Tensor& input, const Tensor& weight, const Tensor& bias, int pad) {
    check_conv_args(input, weight, pad);
    const int cout = weight.dim(0), cin = weight.dim(1), k = weight.dim(2);
    require(bias.rank() == 1 && bias.dim(0) == cout,
            "conv3d bias must be [Cout]=" + std::to_string(cout) + ", got " + shape_str(bias.shape()));

    const int D = input.dim(1), H = input.dim(2), W = input.dim(3);
    Tensor out({cout, D, H, W});

    const std::int64_t in_ch = static_cast<std::int64_t>(D) * H * W;
    const std::int64_t out_ch = in_ch;

    for (int co = 0; co < cout; ++co) {
        double* ob = out.data() + co * out_ch;
        const double bv = bias[co];
        for (std::int64_t i = 0; i < out_ch; ++i) ob[i] = bv;

        for (int ci = 0; ci < cin; ++ci) {
            const double* ib = input.data() + ci * in_ch;
            for (int kz = 0; kz < k; ++kz) {
                const int dz = kz - pad;
                const int z0 = std::max(0, -dz), z1 = std::min(D, D - dz);
                for (int ky = 0; ky < k; ++ky) {
                    const int dy = ky - pad;
                    const int y0 = std::max(0, -dy), y1 = std::min(H, H - dy);
                    for (int kx = 0; kx < k; ++kx) {
                        const int dx = kx - pad;
                        const int x0 = std::max(0, -dx), x1 = std::min(W, W - dx);
                        const double wv = weight[(((static_cast<std::int64_t>(co) * cin + ci) * k + kz) * k + ky) * k + kx];
                        for (int z = z0; z < z1; ++z) {
                            for (int y = y0; y < y1; ++y) {
                                double* orow = ob + (static_cast<std::int64_t>(z) * H + y) * W;
                                const double* irow = ib + (static_cast<std::int64_t>(z + dz) * H + (y + dy)) * W + dx;
                                for (int x = x0; x < x1; ++x) orow[x] += wv * irow[x];
                            }
                        }
                    }
                }
            }
        }
    }
    return out;
}

Conv3dGrads conv3d_backward(const Tensor& grad_out, const Tensor& input, const Tensor& weight) {
    const int k = weight.dim(2);
    const int pad = (k - 1) / 2;
    check_conv_args(input, weight, pad);
    const int cout = weight.dim(0), cin = weight.dim(1);
    const int D = input.dim(1), H = input.dim(2), W = input.dim(3);
    require(grad_out.rank() == 4 && grad_out.dim(0) == cout && grad_out.dim(1) == D && grad_out.dim(2) == H &&
                grad_out.dim(3) == W,
            "conv3d_backward grad_out shape " + shape_str(grad_out.shape()) + " does not match forward output");

    Conv3dGrads g;
    g.input = Tensor(input.shape());
    g.weight = Tensor(weight.shape());
    g.bias = Tensor({cout});

    const std::int64_t ch = static_cast<std::int64_t>(D) * H * W;

    for (int co = 0; co < cout; ++co) {
        const double* gb = grad_out.data() + co * ch;

        double bsum = 0.0;
        for (std::int64_t i = 0; i < ch; ++i) bsum += gb[i];
        g.bias[co] = bsum;

        for (int ci = 0; ci < cin; ++ci) {
            const double* ib = input.data() + ci * ch;
            double* gib = g.input.data() + ci * ch;
            for (int kz = 0; kz < k; ++kz) {
                const int dz = kz - pad;
                const int z0 = std::max(0, -dz), z1 = std::min(D, D - dz);
                for (int ky = 0; ky < k; ++ky) {
                    const int dy = ky - pad;
                    const int y0 = std::max(0, -dy), y1 = std::min(H, H - dy);
                    for (int kx = 0; kx < k; ++kx) {
                        const int dx = kx - pad;
                        const int x0 = std::max(0, -dx), x1 = std::min(W, W - dx);
                        const std::int64_t widx =
                            (((static_cast<std::int64_t>(co) * cin + ci) * k + kz) * k + ky) * k + kx;
                        const double wv = weight[widx];
                        double wsum = 0.0;
                        for (int z = z0; z < z1; ++z) {
                            for (int y = y0; y < y1; ++y) {
                                const double* grow = gb + (static_cast<std::int64_t>(z) * H + y) * W;
                                const double* irow = ib + (static_cast<std::int64_t>(z + dz) * H + (y + dy)) * W + dx;
                                double* girow = gib + (static_cast<std::int64_t>(z + dz) * H + (y + dy)) * W + dx;
                                for (int x = x0; x < x1; ++x) {
                                    wsum += grow[x] * irow[x];
                                    girow[x] += wv * grow[x];
                                }
                            }
                        }
                        g.weight[widx] = wsum;
                    }
                }
            }
        }
    }
    return g;
}

Tensor leaky_relu(const Tensor& x, double slope) {
    Tensor out(x.shape());
    for (std::int64_t i = 0; i < x.size(); ++i) out[i] = x[i] >= 0.0 ? x[i] : slope * x[i];
    return out;
}

Tensor leaky_relu_backward(const Tensor& grad_out, const Tensor& x, double slope) {
    require(grad_out.same_shape(x), "leaky_relu_backward shape mismatch");
    Tensor out(x.shape());
    for (std::int64_t i = 0; i < x.size(); ++i) out[i] = grad_out[i] * (x[i] >= 0.0 ? 1.0 : slope);
    return out;
}

}  // namespace flowsr
