#include "ban/checkpoint.hpp"

#include <openssl/evp.h>

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <json.hpp>
#include <memory>

#include "ban/error.hpp"

namespace ban::checkpoint {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

using json = nlohmann::json;

void save(const std::filesystem::path& path, const TensorMap& tensors, const Metadata& metadata) {
    json header = json::object();
    uint64_t offset = 0;
    for (const auto& [key, t] : tensors) {
        const uint64_t bytes = static_cast<uint64_t>(t.numel()) * sizeof(float);
        header[key] = {{"dtype", "F32"}, {"shape", t.shape()}, {"data_offsets", {offset, offset + bytes}}};
        offset += bytes;
    }
    if (!metadata.empty()) header["__metadata__"] = metadata;
    std::string text = header.dump();
    while (text.size() % 8 != 0) text.push_back(' ');

    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw CheckpointError("cannot write checkpoint " + path.string());
    const uint64_t len = text.size();
    out.write(reinterpret_cast<const char*>(&len), sizeof(len));
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& [key, t] : tensors) {
        out.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(t.numel() * sizeof(float)));
    }
    if (!out) throw CheckpointError("failed writing checkpoint " + path.string());
}

TensorMap load(const std::filesystem::path& path, Metadata* metadata) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
    uint64_t len = 0;
    in.read(reinterpret_cast<char*>(&len), sizeof(len));
    const auto file_size = std::filesystem::file_size(path);
    if (!in || len > file_size - sizeof(len)) throw CheckpointError(path.string() + ": bad header length");
    std::string text(len, '\0');
    in.read(text.data(), static_cast<std::streamsize>(len));
    json header;
    try {
        header = json::parse(text);
    } catch (const json::exception& e) {
        throw CheckpointError(path.string() + ": header is not valid JSON (" + e.what() + ")");
    }
    const uint64_t payload = file_size - sizeof(len) - len;
    std::vector<char> data(payload);
    in.read(data.data(), static_cast<std::streamsize>(payload));
    if (!in) throw CheckpointError(path.string() + ": truncated payload");

    TensorMap out;
    for (const auto& [key, entry] : header.items()) {
        if (key == "__metadata__") {
            if (metadata) *metadata = entry.get<Metadata>();
            continue;
        }
        if (entry.value("dtype", "") != "F32") throw CheckpointError(key + ": only F32 tensors are supported");
        Shape shape = entry.at("shape").get<Shape>();
        const auto offsets = entry.at("data_offsets").get<std::vector<uint64_t>>();
        const uint64_t bytes = static_cast<uint64_t>(shape_numel(shape)) * sizeof(float);
        if (offsets.size() != 2 || offsets[1] < offsets[0] || offsets[1] - offsets[0] != bytes ||
            offsets[1] > payload) {
            throw CheckpointError(key + ": data offsets do not match shape " + shape_str(shape));
        }
        std::vector<float> values(static_cast<size_t>(shape_numel(shape)));
        std::memcpy(values.data(), data.data() + offsets[0], bytes);
        out.emplace(key, Tensor(std::move(shape), std::move(values)));
    }
    return out;
}

TensorMap collect(const ParamList& params) {
    TensorMap out;
    for (const auto& p : params) out.emplace(p.name, p.var.value());
    return out;
}

LoadResult assign(const TensorMap& tensors, const ParamList& params) {
    std::string missing;
    for (const auto& p : params) {
        if (!tensors.count(p.name)) missing += (missing.empty() ? "" : ", ") + p.name;
    }
    if (!missing.empty()) throw CheckpointError("checkpoint is missing keys: " + missing);
    LoadResult result;
    std::map<std::string, const NamedParam*> by_name;
    for (const auto& p : params) by_name[p.name] = &p;
    for (const auto& [key, t] : tensors) {
        auto it = by_name.find(key);
        if (it == by_name.end()) {
            result.unused_keys.push_back(key);
            continue;
        }
        Var v = it->second->var;
        if (v.value().shape() != t.shape()) {
            throw CheckpointError(key + ": checkpoint shape " + shape_str(t.shape()) + " vs model " +
                                  shape_str(v.value().shape()));
        }
        v.mutable_value() = t;
    }
    return result;
}

std::string sha256_hex(const ParamList& params) {
    std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
    EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr);
    for (const auto& p : params) {
        EVP_DigestUpdate(ctx.get(), p.name.data(), p.name.size());
        const Shape& s = p.var.value().shape();
        EVP_DigestUpdate(ctx.get(), s.data(), s.size() * sizeof(int64_t));
        EVP_DigestUpdate(ctx.get(), p.var.value().data(), static_cast<size_t>(p.var.value().numel()) * sizeof(float));
    }
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int n = 0;
    EVP_DigestFinal_ex(ctx.get(), digest, &n);
    static const char* hex = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < n; ++i) {
        out.push_back(hex[digest[i] >> 4]);
        out.push_back(hex[digest[i] & 15]);
    }
    return out;
}

}  // namespace ban::checkpoint
