#pragma once

#include <string>
#include <vector>

#include "flowsr/optim.hpp"
#include "flowsr/rng.hpp"
#include "flowsr/tensor.hpp"

namespace flowsr {

// All layers map rank-4 [C,D,H,W] tensors to same-shape tensors and accumulate
// log|det J| of the normalizing direction into a running scalar. backward()
// takes (dL/d_output, dL/d_logdet), adds parameter gradients in place, and
// returns dL/d_input.

/// Per-channel affine z = exp(log_s) * x + b with data-dependent init.
struct ActNorm {
    explicit ActNorm(int channels);

    /// Sets scale/bias so each channel of the batch maps to zero mean, unit
    /// variance. Marks the layer initialized.
    void init_from_batch(const std::vector<Tensor>& batch);

    Tensor forward(const Tensor& x, double& logdet) const;
    Tensor inverse(const Tensor& z) const;
    Tensor backward(const Tensor& grad_out, double grad_logdet, const Tensor& x_in);

    void params(const std::string& prefix, std::vector<Param*>& out);
    int channels() const { return log_s.value.dim(0); }

    bool initialized = false;
    Param log_s;
    Param bias;
};

/// Invertible per-voxel channel mixing. The matrix is kept factored as
/// W = P * L * U with P a frozen permutation, L unit lower triangular and
/// U strictly upper triangular plus diag(sign * exp(log_diag)), so the
/// log-determinant is a plain sum over log_diag.
struct InvConv1x1 {
    explicit InvConv1x1(int channels);  // identity weights

    /// Re-initializes from a random rotation (factored through PLU).
    void randomize(Rng& rng);

    Tensor forward(const Tensor& x, double& logdet) const;
    Tensor inverse(const Tensor& z) const;
    Tensor backward(const Tensor& grad_out, double grad_logdet, const Tensor& x_in);

    void params(const std::string& prefix, std::vector<Param*>& out);
    int channels() const { return static_cast<int>(perm.size()); }
    /// Dense row-major W, for tests and the inverse path.
    std::vector<double> weight_matrix() const;

    Param lower;     // [C,C], strict lower part used
    Param upper;     // [C,C], strict upper part used
    Param log_diag;  // [C]
    Tensor perm;     // [C] row indices of P: (P v)[i] = v[perm[i]]
    Tensor sign;     // [C] signs of the U diagonal
};

/// conv(3x3x3) -> leaky_relu -> conv(3x3x3). The last conv is zero-initialized
/// so a fresh coupling layer starts as the identity map.
struct ConvNet2 {
    ConvNet2(int in_channels, int hidden, int out_channels);

    void randomize(Rng& rng);  // He init on the first conv, last stays zero

    struct Cache {
        Tensor x;
        Tensor pre;  // first conv output, pre-activation
        Tensor act;
    };

    Tensor forward(const Tensor& x, Cache* cache = nullptr) const;
    Tensor backward(const Tensor& grad_out, const Cache& cache);

    void params(const std::string& prefix, std::vector<Param*>& out);
    int in_channels() const { return w1.value.dim(1); }
    int out_channels() const { return w2.value.dim(0); }

    Param w1, b1, w2, b2;
};

/// Affine coupling. One channel half passes through and (together with the
/// conditioning tensor, if any) drives scale and shift of the other half.
/// The log-scale is clamped smoothly: sigma = clamp * tanh(raw / clamp).
struct Coupling {
    Coupling(int channels, int cond_channels, int hidden, bool transform_first,
             double clamp = 2.0);

    struct Cache {
        Tensor x_in;
        ConvNet2::Cache net;
        Tensor net_out;  // [2*d_trans, ...]: scale logits first, shifts second
    };

    Tensor forward(const Tensor& x, const Tensor* cond, double& logdet,
                   Cache* cache = nullptr) const;
    Tensor inverse(const Tensor& z, const Tensor* cond) const;
    /// grad_cond, when non-null, must be zero-filled [cond_channels, ...] and
    /// receives the conditioning gradient added in place.
    Tensor backward(const Tensor& grad_out, double grad_logdet, const Cache& cache,
                    Tensor* grad_cond);

    void params(const std::string& prefix, std::vector<Param*>& out);

    ConvNet2 net;
    int channels = 0;
    int cond_channels = 0;
    int d_keep = 0;   // channels passed through (the net input half)
    int d_trans = 0;  // channels rescaled and shifted
    bool transform_first = false;  // transformed half sits in channels [0, d_trans)
    double clamp = 2.0;
};

/// actnorm -> invertible channel mixing -> coupling. Alternating steps flip
/// which channel half the coupling transforms.
struct FlowStep {
    FlowStep(int channels, int cond_channels, int hidden, bool flip, double clamp);

    struct Cache {
        Tensor x_in;  // actnorm input
        Tensor x_an;  // channel-mixing input (the coupling input lives in cpl)
        Coupling::Cache cpl;
    };

    Tensor forward(const Tensor& x, const Tensor* cond, double& logdet,
                   Cache* cache = nullptr) const;
    Tensor inverse(const Tensor& z, const Tensor* cond) const;
    Tensor backward(const Tensor& grad_out, double grad_logdet, const Cache& cache,
                    Tensor* grad_cond);

    void params(const std::string& prefix, std::vector<Param*>& out);

    ActNorm actnorm;
    InvConv1x1 invconv;
    Coupling coupling;
};

struct FlowCache {
    std::vector<FlowStep::Cache> steps;
};

Tensor flow_forward(const std::vector<FlowStep>& steps, const Tensor& x,
                    const Tensor* cond, double& logdet, FlowCache* cache = nullptr);
Tensor flow_inverse(const std::vector<FlowStep>& steps, const Tensor& z,
                    const Tensor* cond);
/// Reverse sweep over the cached forward pass. Returns dL/d_input; when
/// grad_cond is non-null it is resized/zeroed and receives the summed
/// conditioning gradient from every step.
Tensor flow_backward(std::vector<FlowStep>& steps, const FlowCache& cache,
                     const Tensor& grad_out, double grad_logdet,
                     const Tensor* cond, Tensor* grad_cond = nullptr);
/// Sequential data-dependent init: each step's actnorm sees the batch as
/// transformed by all the steps before it. Returns the fully transformed
/// batch so a downstream flow can initialize from it.
std::vector<Tensor> flow_init_actnorm(std::vector<FlowStep>& steps, std::vector<Tensor> batch,
                                      const std::vector<Tensor>* cond_batch);
void flow_params(std::vector<FlowStep>& steps, const std::string& prefix,
                 std::vector<Param*>& out);

/// [C,D,H,W] -> [8C, D/2, H/2, W/2]; output channel c*8 + (dz*4 + dy*2 + dx)
/// holds the (dz,dy,dx) sub-lattice of input channel c. Extents must be even.
Tensor squeeze(const Tensor& x);
Tensor unsqueeze(const Tensor& z);

}  // namespace flowsr
