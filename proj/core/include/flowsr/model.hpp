#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "flowsr/flow.hpp"

namespace flowsr {

/// Architecture and numeric knobs. A single-channel block squeezes to 8
/// latent channels; lr_channels of those form the low-resolution-aligned part
/// and the remaining 8 - lr_channels carry the conditional flow.
struct ModelConfig {
    int flow_steps_g = 5;  // steps operating on all 8 squeezed channels
    int flow_steps_h = 5;  // conditional steps on the high-frequency part
    int hr_block = 16;     // training block edge, must be even
    int lr_channels = 4;
    int encoder_channels = 32;
    int encoder_blocks = 3;
    int st_hidden = 32;  // hidden width of the coupling scale/shift nets
    double coupling_clamp = 2.0;
    double logvar_min = -10.0;
    double logvar_max = 4.0;

    int high_channels() const { return 8 - lr_channels; }
    void validate() const;
    std::string to_json() const;
    static ModelConfig from_json(const std::string& text);
};

/// Residual conv stack mapping a single-channel low-resolution block to the
/// lr_channels-wide latent estimate.
struct Encoder {
    Encoder(int width, int blocks, int out_channels);

    void randomize(Rng& rng);

    struct Cache {
        Tensor x, pre_in, act_in;
        std::vector<Tensor> blk_in, pre_a, act_a;
        Tensor h_out;
    };

    Tensor forward(const Tensor& x, Cache* cache = nullptr) const;
    /// Accumulates parameter gradients; the raw-input gradient is dropped.
    void backward(const Tensor& grad_out, const Cache& cache);
    void params(const std::string& prefix, std::vector<Param*>& out);

    Param w_in, b_in;
    std::vector<Param> wa, ba, wb, bb;
    Param w_out, b_out;
    int width = 0;
    int blocks = 0;
};

/// Two zero-initialized 3x3x3 convolutions mapping the low-frequency latent
/// to the base-distribution mean and (clamped) log-variance.
struct GaussianHeads {
    GaussianHeads(int in_channels, int out_channels);

    struct Cache {
        Tensor z_l;
        Tensor logvar_raw;  // pre-clamp, for the clamp mask
        double lv_min = 0.0;
        double lv_max = 0.0;
    };

    void forward(const Tensor& z_l, double lv_min, double lv_max, Tensor& mu, Tensor& logvar,
                 Cache* cache = nullptr) const;
    Tensor backward(const Tensor& grad_mu, const Tensor& grad_logvar, const Cache& cache);
    void params(const std::string& prefix, std::vector<Param*>& out);

    Param w_mu, b_mu, w_lv, b_lv;
};

/// Sum over elements of log N(z0; mu, diag(exp(logvar))).
double gaussian_logp(const Tensor& z0, const Tensor& mu, const Tensor& logvar);

/// z_l is the first lr_channels channels of the squeezed latent, z_h the rest.
void split_latent(const Tensor& z, int lr_channels, Tensor& z_l, Tensor& z_h);
Tensor merge_latent(const Tensor& z_l, const Tensor& z_h);

/// Conditional flow for block super-resolution: an unconditional flow over
/// squeezed high-resolution blocks, a channel split, a conditional flow over
/// the high-frequency part, a low-resolution encoder tied to the split by the
/// latent loss, and Gaussian heads giving the base density.
class SrFlowModel {
public:
    SrFlowModel(ModelConfig config, std::uint64_t init_seed);
    SrFlowModel(const SrFlowModel&) = delete;
    SrFlowModel& operator=(const SrFlowModel&) = delete;

    const ModelConfig& config() const { return config_; }

    Tensor encode_lr(const Tensor& y_lr) const;
    void predict_gaussian(const Tensor& z_l, Tensor& mu, Tensor& logvar) const;

    struct LatentState {
        Tensor z0, z_l, z_h, z_lat;
        double logdet_g = 0.0;
        double logdet_h = 0.0;
        double logp = 0.0;
    };
    /// Exact conditional log-likelihood of a high-resolution block given its
    /// low-resolution counterpart: Gaussian base term plus both flow
    /// log-determinants. The base parameters come from the flow's own z_l.
    LatentState conditional_logp(const Tensor& x_hr, const Tensor& y_lr) const;

    /// Normalizing direction only, no encoder involvement.
    LatentState to_latent(const Tensor& x_hr) const;
    /// Generative direction: z0 and z_l back to a high-resolution block.
    Tensor from_latent(const Tensor& z0, const Tensor& z_l) const;
    /// One super-resolved block; eps is the base-space noise (zeros give the
    /// distribution mode path).
    Tensor generate(const Tensor& y_lr, const Tensor& eps) const;

    struct PairCache {
        FlowCache g, h;
        Encoder::Cache enc;
        GaussianHeads::Cache heads;
        Tensor z_l, z0, mu, logvar, z_lat;
        std::int64_t hr_numel = 0;
    };
    struct PairLoss {
        double logp = 0.0;
        double loss_sr = 0.0;   // -logp per high-resolution voxel
        double loss_lat = 0.0;  // mean abs encoder/latent mismatch
    };
    PairLoss forward_pair(const Tensor& x_hr, const Tensor& y_lr, PairCache* cache);
    /// Accumulates d(w_sr * loss_sr + w_lat * loss_lat)/d(params).
    void backward_pair(const PairCache& cache, double w_sr, double w_lat);

    /// Data-dependent actnorm init over squeezed high-resolution blocks,
    /// sequential through both flows.
    void init_actnorm(const std::vector<Tensor>& hr_batch);
    bool actnorm_initialized() const;
    void set_actnorm_initialized(bool v);

    std::vector<Param*> parameters();
    void zero_grads();
    struct NamedTensor {
        std::string name;
        Tensor* tensor;
    };
    /// Trainable values plus the frozen mixing permutations and signs, in a
    /// stable order for serialization.
    std::vector<NamedTensor> state_tensors();

    std::vector<FlowStep>& flow_g() { return flow_g_; }
    std::vector<FlowStep>& flow_h() { return flow_h_; }
    Encoder& encoder() { return encoder_; }
    GaussianHeads& heads() { return heads_; }

private:
    ModelConfig config_;
    std::vector<FlowStep> flow_g_;
    std::vector<FlowStep> flow_h_;
    Encoder encoder_;
    GaussianHeads heads_;
};

}  // namespace flowsr
