#include "randes/checkpoint.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "json.hpp"
#include "randes/errors.hpp"
#include "randes/sha256.hpp"

namespace randes {

using nlohmann::json;

static constexpr char kMagic[4] = {'R', 'D', 'C', 'K'};
static constexpr const char* kMetadataKey = "__metadata__";

static uint64_t align8(uint64_t n) { return (n + 7) & ~uint64_t{7}; }

std::vector<uint8_t> serialize_checkpoint(const TensorMap& map) {
    json header = json::object();
    if (!map.metadata.empty()) {
        header[kMetadataKey] = map.metadata;
    }
    uint64_t offset = 0;
    for (const auto& [name, t] : map.entries) {
        if (name == kMetadataKey) {
            throw StructuralMismatchError("tensor '" + name + "': reserved name");
        }
        header[name] = {{"dtype", "f32"}, {"shape", t.shape}, {"byte_offset", offset}};
        offset = align8(offset + static_cast<uint64_t>(t.numel()) * 4);
    }
    std::string header_str = header.dump();
    // pad the header so the payload lands on an 8-byte boundary
    while ((16 + header_str.size()) % 8 != 0) header_str.push_back(' ');

    std::vector<uint8_t> out;
    out.reserve(16 + header_str.size() + offset);
    out.insert(out.end(), kMagic, kMagic + 4);
    uint32_t version = kCheckpointFormatVersion;
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<uint8_t>(version >> (8 * i)));
    uint64_t hlen = header_str.size();
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<uint8_t>(hlen >> (8 * i)));
    out.insert(out.end(), header_str.begin(), header_str.end());

    size_t payload_base = out.size();
    out.resize(payload_base + offset, 0);
    uint64_t cursor = 0;
    for (const auto& [name, t] : map.entries) {
        std::memcpy(out.data() + payload_base + cursor, t.data.data(), t.data.size() * 4);
        cursor = align8(cursor + static_cast<uint64_t>(t.numel()) * 4);
    }
    return out;
}

TensorMap deserialize_checkpoint(const std::vector<uint8_t>& bytes, const std::string& origin) {
    auto corrupt = [&](const std::string& why) -> IntegrityError {
        return IntegrityError("checkpoint " + origin + ": " + why);
    };
    if (bytes.size() < 16 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
        throw corrupt("bad magic");
    }
    uint32_t version = 0;
    for (int i = 0; i < 4; ++i) version |= uint32_t(bytes[4 + i]) << (8 * i);
    if (version != kCheckpointFormatVersion) {
        throw corrupt("unsupported format version " + std::to_string(version));
    }
    uint64_t hlen = 0;
    for (int i = 0; i < 8; ++i) hlen |= uint64_t(bytes[8 + i]) << (8 * i);
    if (hlen > bytes.size() - 16) {
        throw corrupt("header length exceeds file size");
    }
    json header;
    try {
        header = json::parse(bytes.begin() + 16, bytes.begin() + 16 + static_cast<size_t>(hlen));
    } catch (const json::exception& e) {
        throw corrupt(std::string("header is not valid JSON: ") + e.what());
    }
    if (!header.is_object()) throw corrupt("header is not a JSON object");

    const size_t payload_base = 16 + static_cast<size_t>(hlen);
    const size_t payload_size = bytes.size() - payload_base;

    TensorMap map;
    for (const auto& [name, desc] : header.items()) {
        if (name == kMetadataKey) {
            if (!desc.is_object()) throw corrupt("__metadata__ is not an object");
            for (const auto& [k, v] : desc.items()) {
                if (!v.is_string()) throw corrupt("__metadata__ values must be strings");
                map.metadata[k] = v.get<std::string>();
            }
            continue;
        }
        if (!desc.is_object() || !desc.contains("dtype") || !desc.contains("shape") ||
            !desc.contains("byte_offset")) {
            throw corrupt("tensor '" + name + "': malformed descriptor");
        }
        if (desc["dtype"] != "f32") {
            throw corrupt("tensor '" + name + "': unsupported dtype");
        }
        std::vector<int64_t> shape;
        for (const auto& d : desc["shape"]) {
            if (!d.is_number_integer()) throw corrupt("tensor '" + name + "': bad shape");
            shape.push_back(d.get<int64_t>());
        }
        if (shape.empty() || shape.size() > 2) {
            throw StructuralMismatchError("checkpoint " + origin + ": tensor '" + name +
                                          "': rank " + std::to_string(shape.size()) +
                                          " unsupported, expected 1 or 2");
        }
        int64_t numel = 1;
        for (int64_t d : shape) {
            if (d <= 0) throw corrupt("tensor '" + name + "': non-positive dimension");
            numel *= d;
        }
        uint64_t off = desc["byte_offset"].get<uint64_t>();
        if (off % 8 != 0) throw corrupt("tensor '" + name + "': offset not 8-byte aligned");
        uint64_t len = static_cast<uint64_t>(numel) * 4;
        if (off > payload_size || len > payload_size - off) {
            throw corrupt("tensor '" + name + "': data out of bounds");
        }

        Tensor t;
        t.name = name;
        t.shape = std::move(shape);
        t.data.resize(static_cast<size_t>(numel));
        std::memcpy(t.data.data(), bytes.data() + payload_base + off,
                    static_cast<size_t>(numel) * 4);
        for (float v : t.data) {
            if (!std::isfinite(v)) throw corrupt("tensor '" + name + "': non-finite value");
        }
        map.entries.emplace(name, std::move(t));
    }
    return map;
}

std::vector<uint8_t> read_file_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
    in.seekg(0, std::ios::end);
    auto size = in.tellg();
    in.seekg(0, std::ios::beg);
    std::vector<uint8_t> bytes(static_cast<size_t>(size));
    if (size > 0) in.read(reinterpret_cast<char*>(bytes.data()), size);
    if (!in) throw IoError("failed reading '" + path.string() + "'");
    return bytes;
}

void write_file_bytes(const std::filesystem::path& path, const std::vector<uint8_t>& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("failed writing '" + path.string() + "'");
}

void write_checkpoint(const TensorMap& map, const std::filesystem::path& path) {
    write_file_bytes(path, serialize_checkpoint(map));
}

TensorMap read_checkpoint(const std::filesystem::path& path) {
    return deserialize_checkpoint(read_file_bytes(path), path.string());
}

std::string checkpoint_digest(const TensorMap& map) {
    auto bytes = serialize_checkpoint(map);
    return sha256_hex(std::span<const uint8_t>(bytes));
}

std::string file_digest(const std::filesystem::path& path) {
    auto bytes = read_file_bytes(path);
    return sha256_hex(std::span<const uint8_t>(bytes));
}

}  // namespace randes
