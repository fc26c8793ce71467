#include <doctest.h>

#include <sys/wait.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "flowsr/checkpoint.hpp"
#include "flowsr/model.hpp"
#include "flowsr/rng.hpp"
#include "flowsr/volume.hpp"

namespace fs = std::filesystem;
using flowsr::ModelConfig;
using flowsr::Rng;
using flowsr::SrFlowModel;
using flowsr::Tensor;
using flowsr::Volume;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::path("tmp_" + name)) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string file(const std::string& n) const { return (path / n).string(); }
};

std::string read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    REQUIRE(f.good());
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

ModelConfig tiny_config() {
    ModelConfig cfg;
    cfg.flow_steps_g = 2;
    cfg.flow_steps_h = 1;
    cfg.hr_block = 4;
    cfg.lr_channels = 4;
    cfg.encoder_channels = 4;
    cfg.encoder_blocks = 1;
    cfg.st_hidden = 4;
    return cfg;
}

int run_cli(const std::string& args) {
    const std::string cmd = std::string(FLOWSR_CLI_PATH) + " " + args + " >/dev/null 2>&1";
    const int ret = std::system(cmd.c_str());
    REQUIRE(ret != -1);
    return WEXITSTATUS(ret);
}

}  // namespace

TEST_CASE("volumes survive a disk round trip at float precision") {
    TempDir dir("vol_roundtrip");
    Volume vol;
    vol.dims[0] = 3;
    vol.dims[1] = 4;
    vol.dims[2] = 2;
    vol.name = "testfield";
    Rng rng(1);
    vol.data.resize(static_cast<std::size_t>(vol.voxel_count()));
    for (double& v : vol.data) v = 10.0 * rng.normal();

    const std::string path = dir.file("vol.raw");
    flowsr::write_volume(path, vol);
    const Volume back = flowsr::read_volume(path);

    CHECK(back.dims[0] == 3);
    CHECK(back.dims[1] == 4);
    CHECK(back.dims[2] == 2);
    CHECK(back.name == "testfield");
    double lo = back.data[0], hi = back.data[0];
    for (std::size_t i = 0; i < vol.data.size(); ++i) {
        CHECK(back.data[i] == doctest::Approx(vol.data[i]).epsilon(1e-6));
        CHECK(back.data[i] == static_cast<double>(static_cast<float>(vol.data[i])));
        lo = std::min(lo, back.data[i]);
        hi = std::max(hi, back.data[i]);
    }
    // the sidecar range matches the rounded payload exactly
    CHECK(back.value_min == lo);
    CHECK(back.value_max == hi);

    // a second write of the same data is byte-identical
    const std::string copy = dir.file("vol2.raw");
    flowsr::write_volume(copy, back);
    CHECK(read_file(path) == read_file(copy));
}

TEST_CASE("volume reading validates sidecar and payload size") {
    TempDir dir("vol_errors");
    CHECK_THROWS_AS(flowsr::read_volume(dir.file("missing.raw")), std::runtime_error);

    Volume vol;
    vol.dims[0] = vol.dims[1] = vol.dims[2] = 2;
    vol.data.assign(8, 1.5);
    vol.data[3] = -0.5;
    const std::string path = dir.file("vol.raw");
    flowsr::write_volume(path, vol);

    // truncate the payload behind the sidecar's back
    fs::resize_file(path, 4 * 7);
    bool threw = false;
    try {
        flowsr::read_volume(path);
    } catch (const std::runtime_error& e) {
        threw = true;
        CHECK(std::string(e.what()).find("bytes") != std::string::npos);
    }
    CHECK(threw);
}

TEST_CASE("normalization maps the range onto [-1,1] and back") {
    std::vector<double> data{0.0, 5.0, 10.0};
    const flowsr::ValueRange r{0.0, 10.0};
    flowsr::normalize_values(data, r);
    CHECK(data[0] == -1.0);
    CHECK(data[1] == 0.0);
    CHECK(data[2] == 1.0);
    flowsr::denormalize_values(data, r);
    CHECK(data[0] == 0.0);
    CHECK(data[2] == 10.0);

    std::vector<double> flat{3.0, 3.0};
    flowsr::normalize_values(flat, flowsr::ValueRange{3.0, 3.0});
    CHECK(flat[0] == 0.0);
    flowsr::denormalize_values(flat, flowsr::ValueRange{3.0, 3.0});
    CHECK(flat[0] == 3.0);
}

TEST_CASE("volume and tensor views agree on the layout") {
    Volume vol;
    vol.dims[0] = 2;  // x
    vol.dims[1] = 3;  // y
    vol.dims[2] = 4;  // z
    vol.data.resize(24);
    for (std::size_t i = 0; i < 24; ++i) vol.data[i] = static_cast<double>(i);
    const Tensor t = flowsr::volume_to_tensor(vol);
    REQUIRE(t.dim(1) == 4);
    REQUIRE(t.dim(2) == 3);
    REQUIRE(t.dim(3) == 2);
    CHECK(t.at4(0, 3, 2, 1) == vol.at(1, 2, 3));
    const Volume back = flowsr::tensor_to_volume(t, "x");
    CHECK(back.dims[0] == 2);
    CHECK(back.dims[2] == 4);
    for (std::size_t i = 0; i < 24; ++i) CHECK(back.data[i] == vol.data[i]);
}

TEST_CASE("checkpoints round trip bit-exactly") {
    TempDir dir("ckpt_roundtrip");
    const ModelConfig cfg = tiny_config();
    SrFlowModel model(cfg, 99);
    Rng rng(2);
    for (flowsr::Param* p : model.parameters())
        for (std::int64_t i = 0; i < p->value.size(); ++i) p->value[i] += 0.01 * rng.normal();
    model.set_actnorm_initialized(true);

    flowsr::CheckpointMeta meta;
    meta.rng_seed = 1234;
    meta.actnorm_initialized = true;
    const std::string path = dir.file("model.ckpt");
    flowsr::save_checkpoint(path, model, meta);

    const ModelConfig stored = flowsr::read_checkpoint_config(path);
    CHECK(stored.flow_steps_g == cfg.flow_steps_g);
    CHECK(stored.st_hidden == cfg.st_hidden);

    SrFlowModel loaded(stored, 0);
    const flowsr::CheckpointMeta got = flowsr::load_checkpoint(path, loaded);
    CHECK(got.rng_seed == 1234);
    CHECK(loaded.actnorm_initialized());

    auto ta = model.state_tensors();
    auto tb = loaded.state_tensors();
    REQUIRE(ta.size() == tb.size());
    for (std::size_t i = 0; i < ta.size(); ++i) {
        INFO(ta[i].name);
        CHECK(flowsr::max_abs_diff(*ta[i].tensor, *tb[i].tensor) == 0.0);
    }

    // saving the loaded model reproduces both files byte for byte
    const std::string again = dir.file("again.ckpt");
    flowsr::save_checkpoint(again, loaded, got);
    CHECK(read_file(path) == read_file(again));
    CHECK(read_file(path + ".json") == read_file(again + ".json"));
}

TEST_CASE("checkpoints refuse a mismatched architecture") {
    TempDir dir("ckpt_mismatch");
    SrFlowModel model(tiny_config(), 1);
    flowsr::CheckpointMeta meta;
    const std::string path = dir.file("model.ckpt");
    flowsr::save_checkpoint(path, model, meta);

    ModelConfig other = tiny_config();
    other.st_hidden = 8;
    SrFlowModel wrong(other, 1);
    CHECK_THROWS(flowsr::load_checkpoint(path, wrong));

    // a corrupted payload size is caught before any tensor is touched
    fs::resize_file(path, fs::file_size(path) - 8);
    SrFlowModel same(tiny_config(), 1);
    CHECK_THROWS(flowsr::load_checkpoint(path, same));
}

TEST_CASE("cli reports usage errors and succeeds on help") {
    CHECK(run_cli("--help") == 0);
    CHECK(run_cli("") == 2);
    CHECK(run_cli("no-such-command") == 2);
    CHECK(run_cli("gen-data") == 2);          // missing required --out
    CHECK(run_cli("train --data x") == 2);    // missing required --out
    CHECK(run_cli("metrics --pred a --ref b --out c --bogus") == 2);
}

TEST_CASE("cli fails cleanly on a missing input file") {
    TempDir dir("cli_missing");
    CHECK(run_cli("lerp --input " + dir.file("nope.raw") + " --out " + dir.file("o.raw")) == 1);
    CHECK(run_cli("metrics --pred " + dir.file("nope.raw") + " --ref " + dir.file("nope.raw") +
                  " --out " + dir.file("m.csv")) == 1);
}

TEST_CASE("cli pipeline: generate, pool, train, super-resolve, analyze") {
    TempDir dir("cli_pipeline");
    const std::string vol = dir.file("field.raw");
    CHECK(run_cli("gen-data --kind blobs --dims 16 --count 3 --seed 5 --out " + vol) == 0);
    CHECK(fs::exists(vol));
    CHECK(fs::exists(vol + ".json"));
    CHECK(fs::exists(vol + ".prov.json"));

    // provenance carries a config hash that is stable across reruns
    const nlohmann::json prov1 = nlohmann::json::parse(read_file(vol + ".prov.json"));
    CHECK(run_cli("gen-data --kind blobs --dims 16 --count 3 --seed 5 --out " + vol) == 0);
    const nlohmann::json prov2 = nlohmann::json::parse(read_file(vol + ".prov.json"));
    CHECK(prov1.at("config_hash") == prov2.at("config_hash"));
    CHECK(prov1.at("versions").at("volume_format") == "f32le");

    const std::string lr = dir.file("field_lr.raw");
    CHECK(run_cli("pool --input " + vol + " --out " + lr) == 0);
    const Volume lr_vol = flowsr::read_volume(lr);
    CHECK(lr_vol.dims[0] == 8);

    // training config small enough for a smoke run
    const std::string cfg_path = dir.file("cfg.json");
    {
        std::ofstream f(cfg_path);
        f << "{\"model\": {\"flow_steps_g\": 1, \"flow_steps_h\": 1, \"hr_block\": 4, "
             "\"encoder_channels\": 4, \"encoder_blocks\": 1, \"st_hidden\": 4}, "
             "\"train\": {\"epochs\": 1, \"batch_size\": 2, \"pairs_per_level\": 4, "
             "\"levels\": [0], \"seed\": 3}}";
    }
    const std::string ckpt = dir.file("model.ckpt");
    CHECK(run_cli("train --data " + vol + " --out " + ckpt + " --config " + cfg_path) == 0);
    CHECK(fs::exists(ckpt));
    CHECK(fs::exists(ckpt + ".json"));

    // the training log has the expected header and one row per epoch
    const std::string log = read_file(ckpt + ".train.csv");
    CHECK(log.rfind("epoch,loss_total,loss_sr,loss_lat,wall_seconds\n", 0) == 0);
    CHECK(std::count(log.begin(), log.end(), '\n') == 2);

    const std::string sr = dir.file("sr.raw");
    CHECK(run_cli("sr --model " + ckpt + " --input " + lr + " --out " + sr + " --scale 2") == 0);
    CHECK(flowsr::read_volume(sr).dims[0] == 16);

    const std::string uq = dir.file("uq");
    CHECK(run_cli("uq --model " + ckpt + " --input " + lr + " --out " + uq +
                  " --scale 2 --samples 2 --seed 7 --keep-samples") == 0);
    CHECK(fs::exists(uq + "_mean"));
    CHECK(fs::exists(uq + "_sigma"));
    CHECK(fs::exists(uq + "_sample0"));
    CHECK(fs::exists(uq + "_sample1"));

    const std::string prob = dir.file("prob.raw");
    CHECK(run_cli("pmc --inputs " + uq + "_sample0," + uq + "_sample1 --isovalue 0.5 --mc 100 "
                  "--out " + prob) == 0);
    CHECK(flowsr::read_volume(prob).dims[0] == 15);

    const std::string lerp = dir.file("lerp.raw");
    CHECK(run_cli("lerp --input " + lr + " --scale 2 --out " + lerp) == 0);

    const std::string metrics = dir.file("m.csv");
    CHECK(run_cli("metrics --pred " + uq + "_mean --ref " + vol + " --sigma " + uq +
                  "_sigma --out " + metrics + " --bins 8") == 0);
    const std::string mtext = read_file(metrics);
    CHECK(mtext.rfind("metric,value\n", 0) == 0);
    CHECK(mtext.find("psnr,") != std::string::npos);
    CHECK(mtext.find("ssim,") != std::string::npos);
    CHECK(fs::exists(metrics + ".bins.csv"));

    const std::string btext = read_file(metrics + ".bins.csv");
    CHECK(btext.rfind("bin,grad_lo,grad_hi,count,mean_sigma,mean_abs_err\n", 0) == 0);
}
