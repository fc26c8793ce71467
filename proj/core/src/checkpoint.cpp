#include "flowsr/checkpoint.hpp"

#include <json.hpp>

#include <algorithm>
#include <bit>
#include <fstream>
#include <map>
#include <stdexcept>

namespace flowsr {

static_assert(std::endian::native == std::endian::little,
              "checkpoint io assumes a little-endian host");

namespace {

constexpr int kFormatVersion = 1;

// unreadable or corrupt files are runtime conditions, not caller bugs
void io_require(bool ok, const std::string& msg) {
    if (!ok) throw std::runtime_error(msg);
}

}  // namespace

void save_checkpoint(const std::string& path, SrFlowModel& model, const CheckpointMeta& meta) {
    const std::vector<SrFlowModel::NamedTensor> state = model.state_tensors();
    nlohmann::json params = nlohmann::json::array();
    std::int64_t offset = 0;
    for (const auto& nt : state) {
        nlohmann::json p;
        p["name"] = nt.name;
        p["shape"] = nt.tensor->shape();
        p["offset"] = offset;  // in float64 elements
        params.push_back(std::move(p));
        offset += nt.tensor->size();
    }
    nlohmann::json j;
    j["format_version"] = kFormatVersion;
    j["model_config"] = nlohmann::json::parse(model.config().to_json());
    j["params"] = std::move(params);
    j["normalization"] = meta.normalization;
    j["rng_seed"] = meta.rng_seed;
    j["actnorm_initialized"] = meta.actnorm_initialized;

    std::ofstream blob(path, std::ios::binary | std::ios::trunc);
    io_require(blob.good(), "cannot write checkpoint blob '" + path + "'");
    for (const auto& nt : state)
        blob.write(reinterpret_cast<const char*>(nt.tensor->data()),
                   static_cast<std::streamsize>(nt.tensor->size() * 8));
    io_require(blob.good(), "short write on checkpoint blob '" + path + "'");
    blob.close();

    std::ofstream side(path + ".json", std::ios::trunc);
    io_require(side.good(), "cannot write checkpoint manifest '" + path + ".json'");
    side << j.dump(2) << "\n";
    io_require(side.good(), "short write on checkpoint manifest '" + path + ".json'");
}

namespace {

nlohmann::json read_manifest(const std::string& path) {
    std::ifstream side(path + ".json");
    io_require(side.good(), "cannot open checkpoint manifest '" + path + ".json'");
    nlohmann::json j;
    try {
        side >> j;
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error("checkpoint manifest '" + path +
                                    ".json' is not valid JSON: " + e.what());
    }
    const int version = j.value("format_version", -1);
    io_require(version == kFormatVersion,
            "checkpoint '" + path + "' has format_version " + std::to_string(version) +
                ", this build reads version " + std::to_string(kFormatVersion));
    return j;
}

}  // namespace

ModelConfig read_checkpoint_config(const std::string& path) {
    const nlohmann::json j = read_manifest(path);
    io_require(j.contains("model_config"), "checkpoint '" + path + "' lacks model_config");
    return ModelConfig::from_json(j.at("model_config").dump());
}

CheckpointMeta load_checkpoint(const std::string& path, SrFlowModel& model) {
    const nlohmann::json j = read_manifest(path);
    io_require(j.contains("params") && j.at("params").is_array(),
            "checkpoint '" + path + "' lacks a params table");

    struct Entry {
        std::vector<int> shape;
        std::int64_t offset = 0;
    };
    std::map<std::string, Entry> table;
    std::int64_t total = 0;
    for (const auto& p : j.at("params")) {
        Entry e;
        const std::string name = p.at("name").get<std::string>();
        e.shape = p.at("shape").get<std::vector<int>>();
        e.offset = p.at("offset").get<std::int64_t>();
        io_require(e.offset >= 0, "checkpoint entry '" + name + "' has a negative offset");
        io_require(table.emplace(name, e).second,
                "checkpoint '" + path + "' lists parameter '" + name + "' twice");
        total = std::max(total, e.offset + shape_numel(e.shape));
    }

    std::ifstream blob(path, std::ios::binary);
    io_require(blob.good(), "cannot open checkpoint blob '" + path + "'");
    blob.seekg(0, std::ios::end);
    const std::int64_t bytes = static_cast<std::int64_t>(blob.tellg());
    io_require(bytes == total * 8, "checkpoint blob '" + path + "' holds " + std::to_string(bytes) +
                                    " bytes, the manifest implies " + std::to_string(total * 8));
    blob.seekg(0, std::ios::beg);
    std::vector<double> data(static_cast<std::size_t>(total));
    blob.read(reinterpret_cast<char*>(data.data()), bytes);
    io_require(blob.good(), "short read on checkpoint blob '" + path + "'");

    std::vector<SrFlowModel::NamedTensor> state = model.state_tensors();
    require(state.size() == table.size(),
            "checkpoint '" + path + "' holds " + std::to_string(table.size()) +
                " tensors but the model expects " + std::to_string(state.size()) +
                "; the model config does not match");
    for (auto& nt : state) {
        const auto it = table.find(nt.name);
        require(it != table.end(), "checkpoint '" + path + "' lacks parameter '" + nt.name + "'");
        require(it->second.shape == nt.tensor->shape(),
                "checkpoint parameter '" + nt.name + "' has shape " +
                    shape_str(it->second.shape) + ", the model expects " +
                    shape_str(nt.tensor->shape()));
        const double* src = data.data() + it->second.offset;
        std::copy(src, src + nt.tensor->size(), nt.tensor->data());
    }

    CheckpointMeta meta;
    meta.rng_seed = j.value("rng_seed", static_cast<std::uint64_t>(0));
    meta.actnorm_initialized = j.value("actnorm_initialized", false);
    meta.normalization = j.value("normalization", std::string("per_volume_minmax_pm1"));
    model.set_actnorm_initialized(meta.actnorm_initialized);
    return meta;
}

}  // namespace flowsr
