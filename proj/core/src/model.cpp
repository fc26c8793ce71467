#include "flowsr/model.hpp"

#include <json.hpp>

#include <cmath>

#include "flowsr/ops.hpp"

namespace flowsr {

// -------------------------------------------------------------- ModelConfig

void ModelConfig::validate() const {
    require(flow_steps_g >= 1 && flow_steps_h >= 1, "flow step counts must be at least 1");
    require(hr_block >= 2 && hr_block % 2 == 0,
            "hr_block must be even and at least 2, got " + std::to_string(hr_block));
    require(lr_channels >= 1, "lr_channels must be at least 1");
    require(lr_channels <= 6, "lr_channels=" + std::to_string(lr_channels) +
                                  " leaves fewer than 2 of the 8 squeezed channels for the "
                                  "conditional flow; the maximum is 6");
    require(encoder_channels >= 1 && encoder_blocks >= 0, "encoder widths must be positive");
    require(st_hidden >= 1, "st_hidden must be at least 1");
    require(coupling_clamp > 0.0, "coupling_clamp must be positive");
    require(logvar_min < logvar_max, "logvar bounds must satisfy min < max");
}

std::string ModelConfig::to_json() const {
    nlohmann::json j;
    j["flow_steps_g"] = flow_steps_g;
    j["flow_steps_h"] = flow_steps_h;
    j["hr_block"] = hr_block;
    j["lr_channels"] = lr_channels;
    j["encoder_channels"] = encoder_channels;
    j["encoder_blocks"] = encoder_blocks;
    j["st_hidden"] = st_hidden;
    j["coupling_clamp"] = coupling_clamp;
    j["logvar_min"] = logvar_min;
    j["logvar_max"] = logvar_max;
    return j.dump();
}

ModelConfig ModelConfig::from_json(const std::string& text) {
    const nlohmann::json j = nlohmann::json::parse(text);
    ModelConfig c;
    c.flow_steps_g = j.value("flow_steps_g", c.flow_steps_g);
    c.flow_steps_h = j.value("flow_steps_h", c.flow_steps_h);
    c.hr_block = j.value("hr_block", c.hr_block);
    c.lr_channels = j.value("lr_channels", c.lr_channels);
    c.encoder_channels = j.value("encoder_channels", c.encoder_channels);
    c.encoder_blocks = j.value("encoder_blocks", c.encoder_blocks);
    c.st_hidden = j.value("st_hidden", c.st_hidden);
    c.coupling_clamp = j.value("coupling_clamp", c.coupling_clamp);
    c.logvar_min = j.value("logvar_min", c.logvar_min);
    c.logvar_max = j.value("logvar_max", c.logvar_max);
    c.validate();
    return c;
}

// ------------------------------------------------------------------ Encoder

Encoder::Encoder(int width_in, int blocks_in, int out_channels)
    : w_in(Tensor({width_in, 1, 3, 3, 3}), "w_in"),
      b_in(Tensor({width_in}), "b_in"),
      w_out(Tensor({out_channels, width_in, 3, 3, 3}), "w_out"),
      b_out(Tensor({out_channels}), "b_out"),
      width(width_in),
      blocks(blocks_in) {
    require(width >= 1 && out_channels >= 1, "encoder needs positive channel counts");
    require(blocks >= 0, "encoder block count cannot be negative");
    wa.reserve(static_cast<std::size_t>(blocks));
    ba.reserve(static_cast<std::size_t>(blocks));
    wb.reserve(static_cast<std::size_t>(blocks));
    bb.reserve(static_cast<std::size_t>(blocks));
    for (int i = 0; i < blocks; ++i) {
        wa.emplace_back(Tensor({width, width, 3, 3, 3}), "wa");
        ba.emplace_back(Tensor({width}), "ba");
        wb.emplace_back(Tensor({width, width, 3, 3, 3}), "wb");
        bb.emplace_back(Tensor({width}), "bb");
    }
}

void Encoder::randomize(Rng& rng) {
    const double s_in = std::sqrt(2.0 / 27.0);
    const double s_mid = std::sqrt(2.0 / (static_cast<double>(width) * 27.0));
    for (double& v : w_in.value.values()) v = s_in * rng.normal();
    for (int i = 0; i < blocks; ++i) {
        for (double& v : wa[static_cast<std::size_t>(i)].value.values()) v = s_mid * rng.normal();
        // second conv of each block stays zero so blocks start as identity
        wb[static_cast<std::size_t>(i)].value.fill(0.0);
    }
    for (double& v : w_out.value.values()) v = s_mid * rng.normal();
}

Tensor Encoder::forward(const Tensor& x, Cache* cache) const {
    require(x.rank() == 4 && x.dim(0) == 1,
            "encoder expects a single-channel [1,D,H,W] block, got " + shape_str(x.shape()));
    Tensor pre_in = conv3d(x, w_in.value, b_in.value, 1);
    Tensor h = leaky_relu(pre_in);
    if (cache) {
        cache->x = x;
        cache->pre_in = std::move(pre_in);
        cache->act_in = h;
        cache->blk_in.clear();
        cache->pre_a.clear();
        cache->act_a.clear();
    }
    for (int i = 0; i < blocks; ++i) {
        const std::size_t k = static_cast<std::size_t>(i);
        Tensor pre_a = conv3d(h, wa[k].value, ba[k].value, 1);
        Tensor act_a = leaky_relu(pre_a);
        Tensor t = conv3d(act_a, wb[k].value, bb[k].value, 1);
        if (cache) {
            cache->blk_in.push_back(h);
            cache->pre_a.push_back(std::move(pre_a));
            cache->act_a.push_back(std::move(act_a));
        }
        h += t;
    }
    if (cache) cache->h_out = h;
    return conv3d(h, w_out.value, b_out.value, 1);
}

void Encoder::backward(const Tensor& grad_out, const Cache& cache) {
    Conv3dGrads go = conv3d_backward(grad_out, cache.h_out, w_out.value);
    w_out.grad += go.weight;
    b_out.grad += go.bias;
    Tensor g = std::move(go.input);
    for (int i = blocks - 1; i >= 0; --i) {
        const std::size_t k = static_cast<std::size_t>(i);
        Conv3dGrads g2 = conv3d_backward(g, cache.act_a[k], wb[k].value);
        wb[k].grad += g2.weight;
        bb[k].grad += g2.bias;
        Tensor ga = leaky_relu_backward(g2.input, cache.pre_a[k]);
        Conv3dGrads g1 = conv3d_backward(ga, cache.blk_in[k], wa[k].value);
        wa[k].grad += g1.weight;
        ba[k].grad += g1.bias;
        g += g1.input;  // skip connection
    }
    Tensor gp = leaky_relu_backward(g, cache.pre_in);
    Conv3dGrads gi = conv3d_backward(gp, cache.x, w_in.value);
    w_in.grad += gi.weight;
    b_in.grad += gi.bias;
}

void Encoder::params(const std::string& prefix, std::vector<Param*>& out) {
    w_in.name = prefix + ".w_in";
    b_in.name = prefix + ".b_in";
    out.push_back(&w_in);
    out.push_back(&b_in);
    for (int i = 0; i < blocks; ++i) {
        const std::size_t k = static_cast<std::size_t>(i);
        const std::string bp = prefix + ".block" + std::to_string(i);
        wa[k].name = bp + ".wa";
        ba[k].name = bp + ".ba";
        wb[k].name = bp + ".wb";
        bb[k].name = bp + ".bb";
        out.push_back(&wa[k]);
        out.push_back(&ba[k]);
        out.push_back(&wb[k]);
        out.push_back(&bb[k]);
    }
    w_out.name = prefix + ".w_out";
    b_out.name = prefix + ".b_out";
    out.push_back(&w_out);
    out.push_back(&b_out);
}

// ------------------------------------------------------------ GaussianHeads

GaussianHeads::GaussianHeads(int in_channels, int out_channels)
    : w_mu(Tensor({out_channels, in_channels, 3, 3, 3}), "w_mu"),
      b_mu(Tensor({out_channels}), "b_mu"),
      w_lv(Tensor({out_channels, in_channels, 3, 3, 3}), "w_lv"),
      b_lv(Tensor({out_channels}), "b_lv") {
    require(in_channels >= 1 && out_channels >= 1, "gaussian heads need positive channel counts");
}

void GaussianHeads::forward(const Tensor& z_l, double lv_min, double lv_max, Tensor& mu,
                            Tensor& logvar, Cache* cache) const {
    mu = conv3d(z_l, w_mu.value, b_mu.value, 1);
    Tensor raw = conv3d(z_l, w_lv.value, b_lv.value, 1);
    logvar = raw;
    for (std::int64_t i = 0; i < logvar.size(); ++i)
        logvar[i] = std::min(std::max(logvar[i], lv_min), lv_max);
    if (cache) {
        cache->z_l = z_l;
        cache->logvar_raw = std::move(raw);
        cache->lv_min = lv_min;
        cache->lv_max = lv_max;
    }
}

Tensor GaussianHeads::backward(const Tensor& grad_mu, const Tensor& grad_logvar,
                               const Cache& cache) {
    Conv3dGrads gm = conv3d_backward(grad_mu, cache.z_l, w_mu.value);
    w_mu.grad += gm.weight;
    b_mu.grad += gm.bias;
    // clamp: zero gradient where the raw log-variance was clipped
    Tensor g_lv = grad_logvar;
    for (std::int64_t i = 0; i < g_lv.size(); ++i) {
        const double r = cache.logvar_raw[i];
        if (r <= cache.lv_min || r >= cache.lv_max) g_lv[i] = 0.0;
    }
    Conv3dGrads gl = conv3d_backward(g_lv, cache.z_l, w_lv.value);
    w_lv.grad += gl.weight;
    b_lv.grad += gl.bias;
    Tensor grad_zl = std::move(gm.input);
    grad_zl += gl.input;
    return grad_zl;
}

void GaussianHeads::params(const std::string& prefix, std::vector<Param*>& out) {
    w_mu.name = prefix + ".w_mu";
    b_mu.name = prefix + ".b_mu";
    w_lv.name = prefix + ".w_lv";
    b_lv.name = prefix + ".b_lv";
    out.push_back(&w_mu);
    out.push_back(&b_mu);
    out.push_back(&w_lv);
    out.push_back(&b_lv);
}

// ---------------------------------------------------------------- free fns

double gaussian_logp(const Tensor& z0, const Tensor& mu, const Tensor& logvar) {
    require(z0.same_shape(mu) && z0.same_shape(logvar),
            "gaussian_logp: value, mean and log-variance shapes must match");
    constexpr double log_2pi = 1.8378770664093454835606594728112;
    double acc = 0.0;
    for (std::int64_t i = 0; i < z0.size(); ++i) {
        const double d = z0[i] - mu[i];
        acc += -0.5 * (log_2pi + logvar[i] + d * d * std::exp(-logvar[i]));
    }
    return acc;
}

void split_latent(const Tensor& z, int lr_channels, Tensor& z_l, Tensor& z_h) {
    require(z.rank() == 4, "split_latent expects a rank-4 tensor, got " + shape_str(z.shape()));
    require(lr_channels >= 1 && lr_channels < z.dim(0),
            "split_latent: lr_channels=" + std::to_string(lr_channels) +
                " must leave at least one channel of " + std::to_string(z.dim(0)));
    z_l = slice_channels(z, 0, lr_channels);
    z_h = slice_channels(z, lr_channels, z.dim(0));
}

Tensor merge_latent(const Tensor& z_l, const Tensor& z_h) {
    return concat_channels(z_l, z_h);
}

// -------------------------------------------------------------- SrFlowModel

SrFlowModel::SrFlowModel(ModelConfig config, std::uint64_t init_seed)
    : config_(std::move(config)),
      encoder_(config_.encoder_channels, config_.encoder_blocks, config_.lr_channels),
      heads_(config_.lr_channels, config_.high_channels()) {
    config_.validate();
    flow_g_.reserve(static_cast<std::size_t>(config_.flow_steps_g));
    flow_h_.reserve(static_cast<std::size_t>(config_.flow_steps_h));
    for (int i = 0; i < config_.flow_steps_g; ++i)
        flow_g_.emplace_back(8, 0, config_.st_hidden, i % 2 == 1, config_.coupling_clamp);
    for (int i = 0; i < config_.flow_steps_h; ++i)
        flow_h_.emplace_back(config_.high_channels(), config_.lr_channels, config_.st_hidden,
                             i % 2 == 1, config_.coupling_clamp);
    for (int i = 0; i < config_.flow_steps_g; ++i) {
        Rng r = Rng::stream(init_seed, 1, static_cast<std::uint64_t>(i));
        flow_g_[static_cast<std::size_t>(i)].invconv.randomize(r);
        flow_g_[static_cast<std::size_t>(i)].coupling.net.randomize(r);
    }
    for (int i = 0; i < config_.flow_steps_h; ++i) {
        Rng r = Rng::stream(init_seed, 2, static_cast<std::uint64_t>(i));
        flow_h_[static_cast<std::size_t>(i)].invconv.randomize(r);
        flow_h_[static_cast<std::size_t>(i)].coupling.net.randomize(r);
    }
    Rng re = Rng::stream(init_seed, 3);
    encoder_.randomize(re);
    // heads stay zero: the base distribution starts as a standard normal
}

Tensor SrFlowModel::encode_lr(const Tensor& y_lr) const { return encoder_.forward(y_lr); }

void SrFlowModel::predict_gaussian(const Tensor& z_l, Tensor& mu, Tensor& logvar) const {
    heads_.forward(z_l, config_.logvar_min, config_.logvar_max, mu, logvar);
}

SrFlowModel::LatentState SrFlowModel::to_latent(const Tensor& x_hr) const {
    require(x_hr.rank() == 4 && x_hr.dim(0) == 1,
            "expected a single-channel [1,D,H,W] block, got " + shape_str(x_hr.shape()));
    LatentState st;
    Tensor zs = squeeze(x_hr);
    Tensor z = flow_forward(flow_g_, zs, nullptr, st.logdet_g);
    split_latent(z, config_.lr_channels, st.z_l, st.z_h);
    st.z0 = flow_forward(flow_h_, st.z_h, &st.z_l, st.logdet_h);
    return st;
}

SrFlowModel::LatentState SrFlowModel::conditional_logp(const Tensor& x_hr,
                                                       const Tensor& y_lr) const {
    LatentState st = to_latent(x_hr);
    st.z_lat = encoder_.forward(y_lr);
    Tensor mu, logvar;
    heads_.forward(st.z_l, config_.logvar_min, config_.logvar_max, mu, logvar);
    st.logp = gaussian_logp(st.z0, mu, logvar) + st.logdet_g + st.logdet_h;
    return st;
}

Tensor SrFlowModel::from_latent(const Tensor& z0, const Tensor& z_l) const {
    Tensor z_h = flow_inverse(flow_h_, z0, &z_l);
    Tensor z = merge_latent(z_l, z_h);
    return unsqueeze(flow_inverse(flow_g_, z, nullptr));
}

Tensor SrFlowModel::generate(const Tensor& y_lr, const Tensor& eps) const {
    Tensor z_lat = encoder_.forward(y_lr);
    Tensor mu, logvar;
    heads_.forward(z_lat, config_.logvar_min, config_.logvar_max, mu, logvar);
    require(eps.same_shape(mu), "noise tensor has shape " + shape_str(eps.shape()) +
                                    ", expected the base latent shape " + shape_str(mu.shape()));
    Tensor z0 = mu;
    for (std::int64_t i = 0; i < z0.size(); ++i) z0[i] += std::exp(0.5 * logvar[i]) * eps[i];
    return from_latent(z0, z_lat);
}

SrFlowModel::PairLoss SrFlowModel::forward_pair(const Tensor& x_hr, const Tensor& y_lr,
                                                PairCache* cache) {
    require(x_hr.rank() == 4 && x_hr.dim(0) == 1,
            "training block must be [1,D,H,W], got " + shape_str(x_hr.shape()));
    Tensor zs = squeeze(x_hr);
    double ldg = 0.0, ldh = 0.0;
    Tensor z = flow_forward(flow_g_, zs, nullptr, ldg, cache ? &cache->g : nullptr);
    Tensor z_l, z_h;
    split_latent(z, config_.lr_channels, z_l, z_h);
    Tensor z0 = flow_forward(flow_h_, z_h, &z_l, ldh, cache ? &cache->h : nullptr);
    Tensor mu, logvar;
    heads_.forward(z_l, config_.logvar_min, config_.logvar_max, mu, logvar,
                   cache ? &cache->heads : nullptr);
    Tensor z_lat = encoder_.forward(y_lr, cache ? &cache->enc : nullptr);
    require(z_lat.same_shape(z_l),
            "encoder output " + shape_str(z_lat.shape()) +
                " does not match the latent split " + shape_str(z_l.shape()) +
                "; the low-resolution block must be half the training block edge");

    PairLoss out;
    out.logp = gaussian_logp(z0, mu, logvar) + ldg + ldh;
    out.loss_sr = -out.logp / static_cast<double>(x_hr.size());
    double lat = 0.0;
    for (std::int64_t i = 0; i < z_l.size(); ++i) lat += std::abs(z_lat[i] - z_l[i]);
    out.loss_lat = lat / static_cast<double>(z_l.size());

    if (cache) {
        cache->z_l = std::move(z_l);
        cache->z0 = std::move(z0);
        cache->mu = std::move(mu);
        cache->logvar = std::move(logvar);
        cache->z_lat = std::move(z_lat);
        cache->hr_numel = x_hr.size();
    }
    return out;
}

void SrFlowModel::backward_pair(const PairCache& cache, double w_sr, double w_lat) {
    const double dlogp = -w_sr / static_cast<double>(cache.hr_numel);

    // Gaussian base term
    Tensor grad_z0(cache.z0.shape());
    Tensor grad_mu(cache.z0.shape());
    Tensor grad_logvar(cache.z0.shape());
    for (std::int64_t i = 0; i < grad_z0.size(); ++i) {
        const double diff = cache.z0[i] - cache.mu[i];
        const double e = std::exp(-cache.logvar[i]);
        grad_z0[i] = dlogp * (-diff * e);
        grad_mu[i] = dlogp * (diff * e);
        grad_logvar[i] = dlogp * (-0.5 * (1.0 - diff * diff * e));
    }
    Tensor grad_zl = heads_.backward(grad_mu, grad_logvar, cache.heads);

    // conditional flow, conditioning gradient folded into grad_zl
    Tensor grad_cond;
    Tensor grad_zh = flow_backward(flow_h_, cache.h, grad_z0, dlogp, &cache.z_l, &grad_cond);
    grad_zl += grad_cond;

    // latent mismatch: d mean|z_lat - z_l| goes to both the encoder and z_l
    const double inv_m = 1.0 / static_cast<double>(cache.z_l.size());
    Tensor grad_zlat(cache.z_lat.shape());
    for (std::int64_t i = 0; i < grad_zlat.size(); ++i) {
        const double d = cache.z_lat[i] - cache.z_l[i];
        const double s = d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0);
        grad_zlat[i] = w_lat * s * inv_m;
        grad_zl[i] -= w_lat * s * inv_m;
    }
    encoder_.backward(grad_zlat, cache.enc);

    Tensor grad_z = merge_latent(grad_zl, grad_zh);
    flow_backward(flow_g_, cache.g, grad_z, dlogp, nullptr, nullptr);
}

void SrFlowModel::init_actnorm(const std::vector<Tensor>& hr_batch) {
    require(!hr_batch.empty(), "actnorm init needs at least one block");
    std::vector<Tensor> sq;
    sq.reserve(hr_batch.size());
    for (const Tensor& x : hr_batch) sq.push_back(squeeze(x));
    std::vector<Tensor> z_batch = flow_init_actnorm(flow_g_, std::move(sq), nullptr);
    std::vector<Tensor> zl_batch, zh_batch;
    zl_batch.reserve(z_batch.size());
    zh_batch.reserve(z_batch.size());
    for (const Tensor& z : z_batch) {
        Tensor z_l, z_h;
        split_latent(z, config_.lr_channels, z_l, z_h);
        zl_batch.push_back(std::move(z_l));
        zh_batch.push_back(std::move(z_h));
    }
    flow_init_actnorm(flow_h_, std::move(zh_batch), &zl_batch);
}

bool SrFlowModel::actnorm_initialized() const {
    for (const FlowStep& s : flow_g_)
        if (!s.actnorm.initialized) return false;
    for (const FlowStep& s : flow_h_)
        if (!s.actnorm.initialized) return false;
    return true;
}

void SrFlowModel::set_actnorm_initialized(bool v) {
    for (FlowStep& s : flow_g_) s.actnorm.initialized = v;
    for (FlowStep& s : flow_h_) s.actnorm.initialized = v;
}

std::vector<Param*> SrFlowModel::parameters() {
    std::vector<Param*> out;
    flow_params(flow_g_, "g", out);
    flow_params(flow_h_, "h", out);
    encoder_.params("encoder", out);
    heads_.params("heads", out);
    return out;
}

void SrFlowModel::zero_grads() {
    for (Param* p : parameters()) p->zero_grad();
}

std::vector<SrFlowModel::NamedTensor> SrFlowModel::state_tensors() {
    std::vector<NamedTensor> out;
    for (Param* p : parameters()) out.push_back({p->name, &p->value});
    auto add_buffers = [&out](std::vector<FlowStep>& steps, const std::string& prefix) {
        for (std::size_t i = 0; i < steps.size(); ++i) {
            const std::string sp = prefix + ".step" + std::to_string(i) + ".mix.";
            out.push_back({sp + "perm", &steps[i].invconv.perm});
            out.push_back({sp + "sign", &steps[i].invconv.sign});
        }
    };
    add_buffers(flow_g_, "g");
    add_buffers(flow_h_, "h");
    return out;
}

}  // namespace flowsr
