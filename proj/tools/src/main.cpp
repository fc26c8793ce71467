// Command line front end: synthetic data generation, training, tiled
// super-resolution with uncertainty, crossing probability, metrics and a
// trilinear baseline. Exit codes: 0 ok, 2 usage error, 1 runtime failure.

#include <CLI11.hpp>
#include <json.hpp>

#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "flowsr/analysis.hpp"
#include "flowsr/checkpoint.hpp"
#include "flowsr/infer.hpp"
#include "flowsr/model.hpp"
#include "flowsr/synthetic.hpp"
#include "flowsr/train.hpp"
#include "flowsr/volume.hpp"

namespace {

using nlohmann::json;

std::string fmt_g(double v) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::uint64_t fnv1a64(const std::string& s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

std::string hex64(std::uint64_t v) {
    char buf[20];
    std::snprintf(buf, sizeof buf, "%016" PRIx64, v);
    return buf;
}

/// Every command that writes an artifact records how it was produced.
void write_provenance(const std::string& out_path, const std::vector<std::string>& argv_copy,
                      const json& effective, std::uint64_t seed) {
    json j;
    std::string cmd;
    for (std::size_t i = 0; i < argv_copy.size(); ++i) {
        if (i) cmd += " ";
        cmd += argv_copy[i];
    }
    j["command"] = cmd;
    j["config"] = effective;
    j["config_hash"] = hex64(fnv1a64(effective.dump()));
    j["seed"] = seed;
    j["versions"] = {{"flowsr", FLOWSR_VERSION},
                     {"checkpoint_format", 1},
                     {"volume_format", "f32le"}};
    std::ofstream f(out_path + ".prov.json", std::ios::trunc);
    flowsr::require(f.good(), "cannot write provenance '" + out_path + ".prov.json'");
    f << j.dump(2) << "\n";
}

json load_config_file(const std::string& path) {
    if (path.empty()) return json::object();
    std::ifstream f(path);
    flowsr::require(f.good(), "cannot open config file '" + path + "'");
    json j;
    try {
        f >> j;
    } catch (const json::exception& e) {
        throw std::invalid_argument("config file '" + path + "' is not valid JSON: " + e.what());
    }
    return j;
}

flowsr::ModelConfig model_config_from(const json& cfg) {
    if (cfg.contains("model")) return flowsr::ModelConfig::from_json(cfg.at("model").dump());
    flowsr::ModelConfig mc;
    mc.validate();
    return mc;
}

// ------------------------------------------------------------------ gen-data

struct GenArgs {
    std::string kind = "swirl";
    std::vector<int> dims = {64, 64, 64};
    int count = 6;
    double freq = 3.0;
    std::uint64_t seed = 0;
    std::string name;
    std::string out;
};

void run_gen(const GenArgs& a, const std::vector<std::string>& argv_copy) {
    flowsr::SynthSpec spec;
    spec.kind = a.kind;
    std::vector<int> dims = a.dims;
    if (dims.size() == 1) dims = {dims[0], dims[0], dims[0]};
    flowsr::require(dims.size() == 3, "--dims takes one or three extents");
    for (int i = 0; i < 3; ++i) spec.dims[i] = dims[static_cast<std::size_t>(i)];
    spec.count = a.count;
    spec.freq = a.freq;
    spec.seed = a.seed;
    flowsr::Volume vol = flowsr::make_synthetic(spec);
    if (!a.name.empty()) vol.name = a.name;
    flowsr::write_volume(a.out, vol);

    json eff = {{"kind", spec.kind},
                {"dims", {spec.dims[0], spec.dims[1], spec.dims[2]}},
                {"count", spec.count},
                {"freq", spec.freq},
                {"seed", spec.seed}};
    write_provenance(a.out, argv_copy, eff, a.seed);
}

// --------------------------------------------------------------------- train

struct TrainArgs {
    std::vector<std::string> data;
    std::string out;
    std::string config_path;
    std::string log_path;
    double lambda = 1.0;
    double lr = 1e-4;
    int batch_size = 16;
    int epochs = 10;
    int pairs_per_level = 256;
    std::vector<int> levels = {0, 1};
    std::uint64_t seed = 0;
    int checkpoint_every = 0;
    int threads = 1;
};

void run_train(const TrainArgs& a, const CLI::App* sub, const std::vector<std::string>& argv_copy) {
    const json cfg = load_config_file(a.config_path);
    flowsr::ModelConfig mc = model_config_from(cfg);

    flowsr::TrainConfig tc;
    if (cfg.contains("train")) {
        const json& t = cfg.at("train");
        tc.lambda = t.value("lambda", tc.lambda);
        tc.lr = t.value("lr", tc.lr);
        tc.batch_size = t.value("batch_size", tc.batch_size);
        tc.epochs = t.value("epochs", tc.epochs);
        tc.pairs_per_level = t.value("pairs_per_level", tc.pairs_per_level);
        tc.levels = t.value("levels", tc.levels);
        tc.seed = t.value("seed", tc.seed);
        tc.checkpoint_every = t.value("checkpoint_every", tc.checkpoint_every);
        tc.threads = t.value("threads", tc.threads);
    }
    // explicit flags win over the config file
    if (sub->count("--lambda")) tc.lambda = a.lambda;
    if (sub->count("--lr")) tc.lr = a.lr;
    if (sub->count("--batch-size")) tc.batch_size = a.batch_size;
    if (sub->count("--epochs")) tc.epochs = a.epochs;
    if (sub->count("--pairs-per-level")) tc.pairs_per_level = a.pairs_per_level;
    if (sub->count("--levels")) tc.levels = a.levels;
    if (sub->count("--seed")) tc.seed = a.seed;
    if (sub->count("--checkpoint-every")) tc.checkpoint_every = a.checkpoint_every;
    if (sub->count("--threads")) tc.threads = a.threads;

    std::vector<flowsr::Tensor> tensors;
    for (const std::string& path : a.data) {
        flowsr::Volume vol = flowsr::read_volume(path);
        const flowsr::ValueRange r = flowsr::volume_range(vol);
        flowsr::normalize_values(vol.data, r);
        tensors.push_back(flowsr::volume_to_tensor(vol));
    }

    flowsr::SrFlowModel model(mc, tc.seed);

    const std::string log_path = a.log_path.empty() ? a.out + ".train.csv" : a.log_path;
    std::ofstream log(log_path, std::ios::trunc);
    flowsr::require(log.good(), "cannot write training log '" + log_path + "'");
    log << "epoch,loss_total,loss_sr,loss_lat,wall_seconds\n";

    flowsr::CheckpointMeta meta;
    meta.rng_seed = tc.seed;
    const flowsr::EpochCallback on_epoch = [&](const flowsr::EpochStats& st,
                                               flowsr::SrFlowModel& m) {
        log << st.epoch << "," << fmt_g(st.loss_total) << "," << fmt_g(st.loss_sr) << ","
            << fmt_g(st.loss_lat) << "," << fmt_g(st.wall_seconds) << "\n";
        log.flush();
        std::cerr << "epoch " << st.epoch << " loss " << st.loss_total << " (sr " << st.loss_sr
                  << ", lat " << st.loss_lat << ")\n";
        if (tc.checkpoint_every > 0 && st.epoch % tc.checkpoint_every == 0) {
            meta.actnorm_initialized = m.actnorm_initialized();
            flowsr::save_checkpoint(a.out, m, meta);
        }
    };

    flowsr::fit(model, tensors, tc, on_epoch);
    meta.actnorm_initialized = model.actnorm_initialized();
    flowsr::save_checkpoint(a.out, model, meta);

    json eff = {{"model", json::parse(mc.to_json())},
                {"train",
                 {{"lambda", tc.lambda},
                  {"lr", tc.lr},
                  {"batch_size", tc.batch_size},
                  {"epochs", tc.epochs},
                  {"pairs_per_level", tc.pairs_per_level},
                  {"levels", tc.levels},
                  {"seed", tc.seed},
                  {"checkpoint_every", tc.checkpoint_every},
                  {"threads", tc.threads}}},
                {"data", a.data}};
    write_provenance(a.out, argv_copy, eff, tc.seed);
}

// ------------------------------------------------------------------- sr / uq

struct SrArgs {
    std::string model;
    std::string input;
    std::string out;
    std::string config_path;
    int scale = 2;
    int samples = 40;
    std::uint64_t seed = 0;
    int block_pad = 2;
    int threads = 1;
    bool keep_samples = false;
    std::string slice_out;
};

// The sr subcommand registers only a subset of the uq options, so look
// options up without throwing on the ones it lacks.
bool flag_given(const CLI::App* sub, const std::string& name) {
    const CLI::Option* opt = sub->get_option_no_throw(name);
    return opt != nullptr && opt->count() > 0;
}

flowsr::UqConfig uq_config_from(const SrArgs& a, const CLI::App* sub, bool deterministic) {
    const json cfg = load_config_file(a.config_path);
    flowsr::UqConfig uc;
    if (cfg.contains("uq")) {
        const json& u = cfg.at("uq");
        uc.samples = u.value("samples", uc.samples);
        uc.seed = u.value("seed", uc.seed);
        uc.lr_pad = u.value("lr_pad", uc.lr_pad);
        uc.scale = u.value("scale", uc.scale);
        uc.threads = u.value("threads", uc.threads);
    }
    if (flag_given(sub, "--samples")) uc.samples = a.samples;
    if (flag_given(sub, "--seed")) uc.seed = a.seed;
    if (flag_given(sub, "--block-pad")) uc.lr_pad = a.block_pad;
    if (flag_given(sub, "--scale")) uc.scale = a.scale;
    if (flag_given(sub, "--threads")) uc.threads = a.threads;
    if (deterministic) {
        uc.samples = 1;
        uc.zero_eps = true;
    }
    uc.keep_samples = a.keep_samples;
    return uc;
}

json uq_effective(const flowsr::UqConfig& uc, const flowsr::ModelConfig& mc) {
    return {{"model", json::parse(mc.to_json())},
            {"uq",
             {{"samples", uc.samples},
              {"seed", uc.seed},
              {"lr_pad", uc.lr_pad},
              {"scale", uc.scale},
              {"threads", uc.threads},
              {"zero_eps", uc.zero_eps},
              {"keep_samples", uc.keep_samples}}}};
}

void run_sr(const SrArgs& a, const CLI::App* sub, const std::vector<std::string>& argv_copy) {
    const flowsr::ModelConfig mc = flowsr::read_checkpoint_config(a.model);
    flowsr::SrFlowModel model(mc, 0);
    flowsr::load_checkpoint(a.model, model);
    const flowsr::Volume input = flowsr::read_volume(a.input);
    const flowsr::UqConfig uc = uq_config_from(a, sub, true);
    flowsr::SrResult res = flowsr::super_resolve(model, input, uc);
    res.mean.name = input.name + "_sr" + std::to_string(uc.scale) + "x";
    flowsr::write_volume(a.out, res.mean);
    write_provenance(a.out, argv_copy, uq_effective(uc, mc), uc.seed);
}

void run_uq(const SrArgs& a, const CLI::App* sub, const std::vector<std::string>& argv_copy) {
    const flowsr::ModelConfig mc = flowsr::read_checkpoint_config(a.model);
    flowsr::SrFlowModel model(mc, 0);
    flowsr::load_checkpoint(a.model, model);
    const flowsr::Volume input = flowsr::read_volume(a.input);
    const flowsr::UqConfig uc = uq_config_from(a, sub, false);
    flowsr::SrResult res = flowsr::super_resolve(model, input, uc);
    flowsr::write_volume(a.out + "_mean", res.mean);
    flowsr::write_volume(a.out + "_sigma", res.sigma);
    for (std::size_t i = 0; i < res.samples.size(); ++i)
        flowsr::write_volume(a.out + "_sample" + std::to_string(i), res.samples[i]);
    if (!a.slice_out.empty()) {
        const flowsr::Tensor mean_t = flowsr::volume_to_tensor(res.mean);
        const flowsr::Tensor sigma_t = flowsr::volume_to_tensor(res.sigma);
        flowsr::export_slice(mean_t, 0, mean_t.dim(1) / 2, a.slice_out + "_mean.pgm");
        flowsr::export_slice(sigma_t, 0, sigma_t.dim(1) / 2, a.slice_out + "_sigma.pgm");
    }
    write_provenance(a.out, argv_copy, uq_effective(uc, mc), uc.seed);
}

// ----------------------------------------------------------------------- pmc

struct PmcArgs {
    std::vector<std::string> inputs;
    std::string model;
    std::string input;
    std::string out;
    double isovalue = 0.0;
    int mc_draws = 500;
    int samples = 40;
    int scale = 2;
    int block_pad = 2;
    std::uint64_t seed = 0;
    int threads = 1;
};

void run_pmc(const PmcArgs& a, const std::vector<std::string>& argv_copy) {
    std::vector<flowsr::Tensor> samples;
    if (!a.inputs.empty()) {
        flowsr::require(a.model.empty() && a.input.empty(),
                        "--inputs cannot be combined with --model/--input");
        for (const std::string& p : a.inputs)
            samples.push_back(flowsr::volume_to_tensor(flowsr::read_volume(p)));
    } else {
        flowsr::require(!a.model.empty() && !a.input.empty(),
                        "pmc needs either --inputs or --model with --input");
        const flowsr::ModelConfig mc = flowsr::read_checkpoint_config(a.model);
        flowsr::SrFlowModel model(mc, 0);
        flowsr::load_checkpoint(a.model, model);
        const flowsr::Volume input = flowsr::read_volume(a.input);
        flowsr::UqConfig uc;
        uc.samples = a.samples;
        uc.seed = a.seed;
        uc.lr_pad = a.block_pad;
        uc.scale = a.scale;
        uc.threads = a.threads;
        uc.keep_samples = true;
        flowsr::SrResult res = flowsr::super_resolve(model, input, uc);
        for (const flowsr::Volume& v : res.samples)
            samples.push_back(flowsr::volume_to_tensor(v));
    }
    const flowsr::CrossingField field =
        flowsr::level_crossing_probability(samples, a.isovalue, a.mc_draws, a.seed, a.threads);
    if (field.fallback_cells > 0)
        std::cerr << field.fallback_cells
                  << " cells fell back to independent per-corner sampling\n";
    flowsr::Volume prob = flowsr::tensor_to_volume(field.prob, "crossing_probability");
    flowsr::write_volume(a.out, prob);

    json eff = {{"isovalue", a.isovalue},  {"mc_draws", a.mc_draws},
                {"samples", a.samples},    {"scale", a.scale},
                {"seed", a.seed},          {"inputs", a.inputs},
                {"fallback_cells", field.fallback_cells}};
    write_provenance(a.out, argv_copy, eff, a.seed);
}

// ------------------------------------------------------------------- metrics

struct MetricsArgs {
    std::string pred;
    std::string ref;
    std::string sigma;
    std::string out;
    std::string bins_out;
    int bins = 32;
};

void run_metrics(const MetricsArgs& a, const std::vector<std::string>& argv_copy) {
    const flowsr::Tensor pred = flowsr::volume_to_tensor(flowsr::read_volume(a.pred));
    const flowsr::Tensor ref = flowsr::volume_to_tensor(flowsr::read_volume(a.ref));
    flowsr::require(pred.same_shape(ref), "prediction and reference dims differ");

    double mse = 0.0;
    for (std::int64_t i = 0; i < pred.size(); ++i) {
        const double d = pred[i] - ref[i];
        mse += d * d;
    }
    mse /= static_cast<double>(pred.size());

    std::ofstream out(a.out, std::ios::trunc);
    flowsr::require(out.good(), "cannot write metrics file '" + a.out + "'");
    out << "metric,value\n";
    out << "mse," << fmt_g(mse) << "\n";
    out << "psnr," << fmt_g(flowsr::psnr(pred, ref)) << "\n";
    out << "ssim," << fmt_g(flowsr::ssim_volume(pred, ref)) << "\n";

    if (!a.sigma.empty()) {
        const flowsr::Tensor sigma = flowsr::volume_to_tensor(flowsr::read_volume(a.sigma));
        const flowsr::Tensor err = flowsr::error_map(pred, ref);
        const std::vector<flowsr::BinStats> bins =
            flowsr::gradient_uncertainty_bins(ref, sigma, &err, a.bins);
        const std::string bins_path = a.bins_out.empty() ? a.out + ".bins.csv" : a.bins_out;
        std::ofstream bf(bins_path, std::ios::trunc);
        flowsr::require(bf.good(), "cannot write bins file '" + bins_path + "'");
        bf << "bin,grad_lo,grad_hi,count,mean_sigma,mean_abs_err\n";
        for (std::size_t i = 0; i < bins.size(); ++i)
            bf << i << "," << fmt_g(bins[i].lo) << "," << fmt_g(bins[i].hi) << ","
               << bins[i].count << "," << fmt_g(bins[i].mean_sigma) << ","
               << fmt_g(bins[i].mean_abs_err) << "\n";
    }

    json eff = {{"pred", a.pred}, {"ref", a.ref}, {"sigma", a.sigma}, {"bins", a.bins}};
    write_provenance(a.out, argv_copy, eff, 0);
}

// ---------------------------------------------------------------------- lerp

struct LerpArgs {
    std::string input;
    std::string out;
    int scale = 2;
};

void run_lerp(const LerpArgs& a, const std::vector<std::string>& argv_copy) {
    const flowsr::Volume input = flowsr::read_volume(a.input);
    const flowsr::Tensor up = flowsr::trilinear_upsample(flowsr::volume_to_tensor(input), a.scale);
    flowsr::Volume out = flowsr::tensor_to_volume(up, input.name + "_lerp");
    flowsr::write_volume(a.out, out);
    json eff = {{"scale", a.scale}, {"input", a.input}};
    write_provenance(a.out, argv_copy, eff, 0);
}

// ---------------------------------------------------------------------- pool

struct PoolArgs {
    std::string input;
    std::string out;
    int levels = 1;
};

void run_pool(const PoolArgs& a, const std::vector<std::string>& argv_copy) {
    const flowsr::Volume input = flowsr::read_volume(a.input);
    flowsr::Tensor t = flowsr::volume_to_tensor(input);
    for (int l = 0; l < a.levels; ++l) t = flowsr::downsample2(t);
    flowsr::Volume out = flowsr::tensor_to_volume(t, input.name + "_lr");
    flowsr::write_volume(a.out, out);
    json eff = {{"levels", a.levels}, {"input", a.input}};
    write_provenance(a.out, argv_copy, eff, 0);
}

}  // namespace

int main(int argc, char** argv) {
    std::vector<std::string> argv_copy(argv, argv + argc);
    CLI::App app{"probabilistic super-resolution of volumetric scalar fields"};
    app.require_subcommand(1);

    GenArgs ga;
    CLI::App* gen = app.add_subcommand("gen-data", "generate a synthetic test volume");
    gen->add_option("--kind", ga.kind, "swirl or blobs");
    gen->add_option("--dims", ga.dims, "grid extents (one value or x y z)")->delimiter(',');
    gen->add_option("--count", ga.count, "blob count");
    gen->add_option("--freq", ga.freq, "swirl base frequency");
    gen->add_option("--seed", ga.seed, "generator seed");
    gen->add_option("--name", ga.name, "volume name in the sidecar");
    gen->add_option("--out", ga.out, "output volume path")->required();

    TrainArgs ta;
    CLI::App* train = app.add_subcommand("train", "train a model on one or more volumes");
    train->add_option("--data", ta.data, "training volume paths")->required()->delimiter(',');
    train->add_option("--out", ta.out, "checkpoint output path")->required();
    train->add_option("--config", ta.config_path, "JSON config (model/train sections)");
    train->add_option("--log", ta.log_path, "training log CSV (default <out>.train.csv)");
    train->add_option("--lambda", ta.lambda, "latent loss weight");
    train->add_option("--lr", ta.lr, "learning rate");
    train->add_option("--batch-size", ta.batch_size, "pairs per optimizer step");
    train->add_option("--epochs", ta.epochs, "training epochs");
    train->add_option("--pairs-per-level", ta.pairs_per_level, "pairs per volume and level");
    train->add_option("--levels", ta.levels, "scale levels, e.g. 0,1")->delimiter(',');
    train->add_option("--seed", ta.seed, "training seed");
    train->add_option("--checkpoint-every", ta.checkpoint_every, "snapshot every n epochs");
    train->add_option("--threads", ta.threads, "forward-pass worker threads");

    SrArgs sa;
    CLI::App* sr = app.add_subcommand("sr", "deterministic super-resolution of a volume");
    sr->add_option("--model", sa.model, "checkpoint path")->required();
    sr->add_option("--input", sa.input, "input volume")->required();
    sr->add_option("--out", sa.out, "output volume path")->required();
    sr->add_option("--config", sa.config_path, "JSON config (uq section)");
    sr->add_option("--scale", sa.scale, "upscale factor, power of two");
    sr->add_option("--block-pad", sa.block_pad, "tile halo in input voxels");
    sr->add_option("--threads", sa.threads, "tile worker threads");

    SrArgs ua;
    CLI::App* uq = app.add_subcommand("uq", "sampled super-resolution with uncertainty");
    uq->add_option("--model", ua.model, "checkpoint path")->required();
    uq->add_option("--input", ua.input, "input volume")->required();
    uq->add_option("--out", ua.out, "output prefix (_mean, _sigma, _sampleN)")->required();
    uq->add_option("--config", ua.config_path, "JSON config (uq section)");
    uq->add_option("--scale", ua.scale, "upscale factor, power of two");
    uq->add_option("--samples", ua.samples, "draws per tile");
    uq->add_option("--seed", ua.seed, "sampling seed");
    uq->add_option("--block-pad", ua.block_pad, "tile halo in input voxels");
    uq->add_option("--threads", ua.threads, "tile worker threads");
    uq->add_flag("--keep-samples", ua.keep_samples, "write the per-sample volumes");
    uq->add_option("--slice-out", ua.slice_out, "write center-slice PGMs with this prefix");

    PmcArgs pa;
    CLI::App* pmc = app.add_subcommand("pmc", "isosurface crossing probability per cell");
    pmc->add_option("--inputs", pa.inputs, "precomputed sample volumes")->delimiter(',');
    pmc->add_option("--model", pa.model, "checkpoint path (sampling route)");
    pmc->add_option("--input", pa.input, "input volume (sampling route)");
    pmc->add_option("--out", pa.out, "output probability volume")->required();
    pmc->add_option("--isovalue", pa.isovalue, "isosurface level")->required();
    pmc->add_option("--mc", pa.mc_draws, "Monte Carlo draws per cell");
    pmc->add_option("--samples", pa.samples, "draws per tile (sampling route)");
    pmc->add_option("--scale", pa.scale, "upscale factor (sampling route)");
    pmc->add_option("--block-pad", pa.block_pad, "tile halo (sampling route)");
    pmc->add_option("--seed", pa.seed, "sampling seed");
    pmc->add_option("--threads", pa.threads, "worker threads");

    MetricsArgs ma;
    CLI::App* metrics = app.add_subcommand("metrics", "fidelity metrics against a reference");
    metrics->add_option("--pred", ma.pred, "predicted volume")->required();
    metrics->add_option("--ref", ma.ref, "reference volume")->required();
    metrics->add_option("--sigma", ma.sigma, "uncertainty volume for gradient bins");
    metrics->add_option("--out", ma.out, "metrics CSV path")->required();
    metrics->add_option("--bins", ma.bins, "gradient bin count");
    metrics->add_option("--bins-out", ma.bins_out, "bins CSV path (default <out>.bins.csv)");

    LerpArgs la;
    CLI::App* lerp = app.add_subcommand("lerp", "trilinear upsampling baseline");
    lerp->add_option("--input", la.input, "input volume")->required();
    lerp->add_option("--out", la.out, "output volume path")->required();
    lerp->add_option("--scale", la.scale, "upscale factor");

    PoolArgs pa2;
    CLI::App* pool = app.add_subcommand("pool", "2x mean-pool downsampling");
    pool->add_option("--input", pa2.input, "input volume")->required();
    pool->add_option("--out", pa2.out, "output volume path")->required();
    pool->add_option("--levels", pa2.levels, "number of halvings");

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e);  // --help and friends
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (*gen) run_gen(ga, argv_copy);
        if (*train) run_train(ta, train, argv_copy);
        if (*sr) run_sr(sa, sr, argv_copy);
        if (*uq) run_uq(ua, uq, argv_copy);
        if (*pmc) run_pmc(pa, argv_copy);
        if (*metrics) run_metrics(ma, argv_copy);
        if (*lerp) run_lerp(la, argv_copy);
        if (*pool) run_pool(pa2, argv_copy);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
