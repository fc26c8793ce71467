#include "flowsr/volume.hpp"

#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <limits>
#include <stdexcept>

namespace flowsr {

namespace {

// broken files and failed I/O are runtime conditions, not caller bugs
void io_require(bool ok, const std::string& msg) {
    if (!ok) throw std::runtime_error(msg);
}

void check_dims(const int dims[3], const std::string& path) {
    io_require(dims[0] > 0 && dims[1] > 0 && dims[2] > 0,
               "volume '" + path + "' has non-positive dims [" + std::to_string(dims[0]) + "," +
                   std::to_string(dims[1]) + "," + std::to_string(dims[2]) + "]");
}

}  // namespace

Volume read_volume(const std::string& path) {
    std::ifstream side(path + ".json");
    io_require(side.good(), "cannot open volume sidecar '" + path + ".json'");
    nlohmann::json j;
    try {
        side >> j;
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error("volume sidecar '" + path + ".json' is not valid JSON: " +
                                 e.what());
    }
    Volume vol;
    try {
        const auto dims = j.at("dims");
        io_require(dims.is_array() && dims.size() == 3, "sidecar 'dims' must be a 3-element array");
        for (int a = 0; a < 3; ++a) vol.dims[a] = dims.at(static_cast<std::size_t>(a)).get<int>();
        const std::string dtype = j.at("dtype").get<std::string>();
        io_require(dtype == "f32le", "volume '" + path + "' has unsupported dtype '" + dtype +
                                         "', expected f32le");
        vol.value_min = j.at("value_min").get<double>();
        vol.value_max = j.at("value_max").get<double>();
        vol.name = j.value("name", std::string());
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error("volume sidecar '" + path + ".json' is missing fields: " +
                                 e.what());
    }
    check_dims(vol.dims, path);

    std::ifstream raw(path, std::ios::binary);
    io_require(raw.good(), "cannot open volume data '" + path + "'");
    raw.seekg(0, std::ios::end);
    const std::int64_t actual = static_cast<std::int64_t>(raw.tellg());
    const std::int64_t expected = vol.voxel_count() * 4;
    io_require(actual == expected, "volume '" + path + "': expected " + std::to_string(expected) +
                                       " bytes for dims [" + std::to_string(vol.dims[0]) + "," +
                                       std::to_string(vol.dims[1]) + "," +
                                       std::to_string(vol.dims[2]) + "], file has " +
                                       std::to_string(actual));
    raw.seekg(0, std::ios::beg);
    std::vector<float> buf(static_cast<std::size_t>(vol.voxel_count()));
    raw.read(reinterpret_cast<char*>(buf.data()), expected);
    io_require(raw.good(), "short read on volume data '" + path + "'");
    vol.data.assign(buf.begin(), buf.end());
    return vol;
}

void write_volume(const std::string& path, const Volume& vol) {
    check_dims(vol.dims, path);
    require(static_cast<std::int64_t>(vol.data.size()) == vol.voxel_count(),
            "volume '" + path + "': data holds " + std::to_string(vol.data.size()) +
                " values but dims imply " + std::to_string(vol.voxel_count()));
    std::vector<float> buf(vol.data.size());
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < buf.size(); ++i) {
        buf[i] = static_cast<float>(vol.data[i]);
        lo = std::min(lo, static_cast<double>(buf[i]));
        hi = std::max(hi, static_cast<double>(buf[i]));
    }
    std::ofstream raw(path, std::ios::binary | std::ios::trunc);
    io_require(raw.good(), "cannot write volume data '" + path + "'");
    raw.write(reinterpret_cast<const char*>(buf.data()),
              static_cast<std::streamsize>(buf.size() * 4));
    io_require(raw.good(), "short write on volume data '" + path + "'");
    raw.close();

    nlohmann::json j;
    j["dims"] = {vol.dims[0], vol.dims[1], vol.dims[2]};
    j["dtype"] = "f32le";
    j["value_min"] = lo;
    j["value_max"] = hi;
    j["name"] = vol.name;
    std::ofstream side(path + ".json", std::ios::trunc);
    io_require(side.good(), "cannot write volume sidecar '" + path + ".json'");
    side << j.dump(2) << "\n";
    io_require(side.good(), "short write on volume sidecar '" + path + ".json'");
}

ValueRange volume_range(const Volume& vol) {
    require(!vol.data.empty(), "cannot take the value range of an empty volume");
    ValueRange r{vol.data[0], vol.data[0]};
    for (double v : vol.data) {
        r.lo = std::min(r.lo, v);
        r.hi = std::max(r.hi, v);
    }
    return r;
}

void normalize_values(std::vector<double>& data, ValueRange range) {
    const double ext = range.extent();
    if (ext <= 0.0) {
        std::fill(data.begin(), data.end(), 0.0);
        return;
    }
    const double scale = 2.0 / ext;
    for (double& v : data) v = (v - range.lo) * scale - 1.0;
}

void denormalize_values(std::vector<double>& data, ValueRange range) {
    const double ext = range.extent();
    if (ext <= 0.0) {
        std::fill(data.begin(), data.end(), range.lo);
        return;
    }
    const double scale = ext / 2.0;
    for (double& v : data) v = (v + 1.0) * scale + range.lo;
}

Tensor volume_to_tensor(const Volume& vol) {
    require(static_cast<std::int64_t>(vol.data.size()) == vol.voxel_count(),
            "volume data size does not match its dims");
    Tensor t({1, vol.dims[2], vol.dims[1], vol.dims[0]});
    std::copy(vol.data.begin(), vol.data.end(), t.values().begin());
    return t;
}

Volume tensor_to_volume(const Tensor& t, const std::string& name) {
    require(t.rank() == 4 && t.dim(0) == 1,
            "tensor_to_volume expects [1,D,H,W], got " + shape_str(t.shape()));
    Volume vol;
    vol.dims[0] = t.dim(3);
    vol.dims[1] = t.dim(2);
    vol.dims[2] = t.dim(1);
    vol.name = name;
    vol.data.assign(t.values().begin(), t.values().end());
    if (!vol.data.empty()) {
        const ValueRange r = volume_range(vol);
        vol.value_min = r.lo;
        vol.value_max = r.hi;
    }
    return vol;
}

}  // namespace flowsr
