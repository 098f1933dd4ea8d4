#include "bfe/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace bfe::nn {

namespace {

using nlohmann::json;

static_assert(sizeof(double) == 8, "checkpoint format requires 8-byte doubles");

void write_doubles_le(std::ofstream& out, const double* values, size_t count) {
    if constexpr (std::endian::native == std::endian::little) {
        out.write(reinterpret_cast<const char*>(values), static_cast<std::streamsize>(count * 8));
    } else {
        for (size_t i = 0; i < count; ++i) {
            uint64_t bits;
            std::memcpy(&bits, &values[i], 8);
            char buf[8];
            for (int b = 0; b < 8; ++b) buf[b] = static_cast<char>((bits >> (8 * b)) & 0xff);
            out.write(buf, 8);
        }
    }
}

void read_doubles_le(std::ifstream& in, double* values, size_t count) {
    if constexpr (std::endian::native == std::endian::little) {
        in.read(reinterpret_cast<char*>(values), static_cast<std::streamsize>(count * 8));
    } else {
        for (size_t i = 0; i < count; ++i) {
            char buf[8];
            in.read(buf, 8);
            uint64_t bits = 0;
            for (int b = 0; b < 8; ++b) bits |= static_cast<uint64_t>(static_cast<uint8_t>(buf[b])) << (8 * b);
            std::memcpy(&values[i], &bits, 8);
        }
    }
    if (!in) throw std::runtime_error("checkpoint: blob truncated");
}

}  // namespace

void save_tensors(const NamedTensors& tensors, const std::string& base_path,
                  const std::string& extra_json) {
    json manifest;
    manifest["format"] = "bfe-checkpoint-v1";
    manifest["dtype"] = "float64";
    manifest["byte_order"] = "little";
    if (!extra_json.empty()) manifest["extra"] = json::parse(extra_json);

    json entries = json::array();
    uint64_t offset = 0;
    for (const auto& [name, tensor] : tensors) {
        if (!tensor.defined()) throw std::invalid_argument("save_tensors: undefined tensor '" + name + "'");
        json e;
        e["name"] = name;
        e["shape"] = tensor.shape();
        e["offset"] = offset;
        e["count"] = tensor.numel();
        entries.push_back(std::move(e));
        offset += static_cast<uint64_t>(tensor.numel()) * 8;
    }
    manifest["tensors"] = std::move(entries);
    manifest["blob_bytes"] = offset;

    std::ofstream jf(base_path + ".json", std::ios::binary | std::ios::trunc);
    if (!jf) throw std::runtime_error("save_tensors: cannot open " + base_path + ".json");
    jf << manifest.dump(2) << "\n";

    std::ofstream bf(base_path + ".bin", std::ios::binary | std::ios::trunc);
    if (!bf) throw std::runtime_error("save_tensors: cannot open " + base_path + ".bin");
    for (const auto& [name, tensor] : tensors) {
        write_doubles_le(bf, tensor.data(), static_cast<size_t>(tensor.numel()));
    }
    if (!bf) throw std::runtime_error("save_tensors: write failed for " + base_path + ".bin");
}

LoadedCheckpoint load_tensors(const std::string& base_path) {
    std::ifstream jf(base_path + ".json", std::ios::binary);
    if (!jf) throw std::runtime_error("load_tensors: cannot open " + base_path + ".json");
    json manifest = json::parse(jf);
    if (manifest.value("format", "") != "bfe-checkpoint-v1") {
        throw std::runtime_error("load_tensors: unrecognized manifest format in " + base_path + ".json");
    }

    std::ifstream bf(base_path + ".bin", std::ios::binary);
    if (!bf) throw std::runtime_error("load_tensors: cannot open " + base_path + ".bin");

    LoadedCheckpoint result;
    if (manifest.contains("extra")) result.extra_json = manifest["extra"].dump();
    for (const auto& e : manifest.at("tensors")) {
        std::string name = e.at("name").get<std::string>();
        std::vector<int64_t> shape = e.at("shape").get<std::vector<int64_t>>();
        uint64_t offset = e.at("offset").get<uint64_t>();
        int64_t count = e.at("count").get<int64_t>();
        Tensor t = Tensor::zeros(shape);
        if (t.numel() != count) {
            throw std::runtime_error("load_tensors: count mismatch for tensor '" + name + "'");
        }
        bf.seekg(static_cast<std::streamoff>(offset));
        read_doubles_le(bf, t.data(), static_cast<size_t>(count));
        result.tensors.emplace_back(std::move(name), std::move(t));
    }
    return result;
}

}  // namespace bfe::nn
