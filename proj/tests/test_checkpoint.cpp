#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <unistd.h>

#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "randes/checkpoint.hpp"
#include "randes/rng.hpp"
#include "randes/sha256.hpp"
#include "randes/tensor.hpp"

using namespace randes;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

TensorMap sample_map() {
    TensorMap m;
    Tensor a = Tensor::mat("blocks.1.mlp.fc", 2, 3);
    a.data = {1.0f, -2.0f, 0.5f, -0.0f, 3.25f, 1e-30f};
    m.insert(std::move(a));
    Tensor b = Tensor::vec("bias", 2);
    b.data = {-8.0f, 7.996f};
    m.insert(std::move(b));
    m.metadata["purpose"] = "test fixture";
    m.metadata["empty"] = "";
    return m;
}

struct RawFile {
    uint32_t version = 0;
    json header;
    size_t payload_start = 0;
    std::vector<uint8_t> bytes;
};

RawFile parse_raw(const std::vector<uint8_t>& bytes) {
    RawFile raw;
    raw.bytes = bytes;
    REQUIRE(bytes.size() >= 16);
    REQUIRE(std::memcmp(bytes.data(), "RDCK", 4) == 0);
    std::memcpy(&raw.version, bytes.data() + 4, 4);
    uint64_t header_len = 0;
    std::memcpy(&header_len, bytes.data() + 8, 8);
    REQUIRE(16 + header_len <= bytes.size());
    raw.header = json::parse(std::string(bytes.begin() + 16,
                                         bytes.begin() + 16 + static_cast<long>(header_len)));
    raw.payload_start = 16 + header_len;
    return raw;
}

// Reassembles a checkpoint from a (possibly mutated) header and payload.
std::vector<uint8_t> build_raw(const json& header, const std::vector<uint8_t>& payload,
                               uint32_t version = kCheckpointFormatVersion) {
    std::string h = header.dump();
    while ((16 + h.size()) % 8 != 0) h += ' ';
    std::vector<uint8_t> out;
    out.insert(out.end(), {'R', 'D', 'C', 'K'});
    out.resize(16);
    std::memcpy(out.data() + 4, &version, 4);
    uint64_t len = h.size();
    std::memcpy(out.data() + 8, &len, 8);
    out.insert(out.end(), h.begin(), h.end());
    out.insert(out.end(), payload.begin(), payload.end());
    return out;
}

std::vector<uint8_t> payload_of(const RawFile& raw) {
    return std::vector<uint8_t>(raw.bytes.begin() + static_cast<long>(raw.payload_start),
                                raw.bytes.end());
}

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("randes_ckpt_test_" + std::to_string(::getpid()));
        fs::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path, ec);
    }
};

}  // namespace

TEST_CASE("serialize then deserialize is the identity") {
    TensorMap m = sample_map();
    std::vector<uint8_t> bytes = serialize_checkpoint(m);
    TensorMap back = deserialize_checkpoint(bytes);
    CHECK(bit_equal(back, m));
    CHECK(back.metadata == m.metadata);

    TensorMap empty;
    CHECK(bit_equal(deserialize_checkpoint(serialize_checkpoint(empty)), empty));
}

TEST_CASE("serialization is canonical") {
    // same tensors inserted in a different order produce identical bytes
    TensorMap a = sample_map();
    TensorMap b;
    b.metadata = a.metadata;
    b.insert(a.at("bias"));
    b.insert(a.at("blocks.1.mlp.fc"));
    CHECK(serialize_checkpoint(a) == serialize_checkpoint(b));
    CHECK(checkpoint_digest(a) == checkpoint_digest(b));
    CHECK(checkpoint_digest(a).size() == 64);
}

TEST_CASE("layout obeys the documented framing") {
    TensorMap m = sample_map();
    RawFile raw = parse_raw(serialize_checkpoint(m));

    CHECK(raw.version == kCheckpointFormatVersion);
    CHECK(raw.payload_start % 8 == 0);

    std::vector<std::string> names;
    uint64_t expected_offset = 0;
    for (const auto& [key, desc] : raw.header.items()) {
        if (key == "__metadata__") {
            CHECK(desc.is_object());
            continue;
        }
        names.push_back(key);
        CHECK(desc.at("dtype") == "f32");
        uint64_t off = desc.at("byte_offset").get<uint64_t>();
        CHECK(off % 8 == 0);
        // names iterate sorted, and the payload is laid out in that order
        CHECK(off == expected_offset);
        uint64_t numel = 1;
        for (const auto& d : desc.at("shape")) numel *= d.get<uint64_t>();
        expected_offset = (off + numel * 4 + 7) / 8 * 8;
    }
    CHECK(names == std::vector<std::string>{"bias", "blocks.1.mlp.fc"});
    CHECK(raw.bytes.size() - raw.payload_start >= expected_offset - 7);
}

TEST_CASE("negative zero and denormals survive the round trip") {
    TensorMap m = sample_map();
    std::vector<uint8_t> bytes = serialize_checkpoint(m);
    TensorMap back = deserialize_checkpoint(bytes);
    CHECK(std::signbit(back.at("blocks.1.mlp.fc").data[3]));
    CHECK(back.at("blocks.1.mlp.fc").data[5] == 1e-30f);
}

TEST_CASE("file round trip and digests") {
    TempDir tmp;
    TensorMap m = sample_map();
    fs::path p = tmp.path / "model.rdck";
    write_checkpoint(m, p);
    CHECK(bit_equal(read_checkpoint(p), m));
    CHECK(file_digest(p) == checkpoint_digest(m));
    CHECK(read_file_bytes(p) == serialize_checkpoint(m));

    CHECK_THROWS_AS(read_checkpoint(tmp.path / "absent.rdck"), IoError);
    CHECK_THROWS_AS(file_digest(tmp.path / "absent.rdck"), IoError);
}

TEST_CASE("reserved metadata name cannot be a tensor") {
    TensorMap m;
    m.insert(Tensor::vec("__metadata__", 1));
    CHECK_THROWS_AS(serialize_checkpoint(m), StructuralMismatchError);
}

TEST_CASE("corrupt containers are refused") {
    TensorMap m = sample_map();
    std::vector<uint8_t> good = serialize_checkpoint(m);
    RawFile raw = parse_raw(good);
    std::vector<uint8_t> payload = payload_of(raw);

    SUBCASE("bad magic") {
        std::vector<uint8_t> bad = good;
        bad[0] = 'X';
        CHECK_THROWS_AS(deserialize_checkpoint(bad), IntegrityError);
    }
    SUBCASE("future version") {
        CHECK_THROWS_AS(deserialize_checkpoint(build_raw(raw.header, payload, 2)),
                        IntegrityError);
    }
    SUBCASE("truncated payload") {
        std::vector<uint8_t> bad = good;
        bad.resize(bad.size() - 4);
        CHECK_THROWS_AS(deserialize_checkpoint(bad), IntegrityError);
    }
    SUBCASE("truncated header") {
        std::vector<uint8_t> bad = good;
        bad.resize(20);
        CHECK_THROWS_AS(deserialize_checkpoint(bad), IntegrityError);
    }
    SUBCASE("header is not json") {
        std::vector<uint8_t> bad = good;
        bad[16] = '!';
        CHECK_THROWS_AS(deserialize_checkpoint(bad), IntegrityError);
    }
    SUBCASE("non-finite value") {
        std::vector<uint8_t> bad = good;
        float nan = std::nanf("");
        std::memcpy(bad.data() + raw.payload_start, &nan, 4);
        CHECK_THROWS_AS(deserialize_checkpoint(bad), IntegrityError);
    }
    SUBCASE("misaligned offset") {
        json h = raw.header;
        h["bias"]["byte_offset"] = 4;
        CHECK_THROWS_AS(deserialize_checkpoint(build_raw(h, payload)), IntegrityError);
    }
    SUBCASE("offset out of bounds") {
        json h = raw.header;
        h["bias"]["byte_offset"] = 1 << 20;
        CHECK_THROWS_AS(deserialize_checkpoint(build_raw(h, payload)), IntegrityError);
    }
    SUBCASE("unsupported dtype") {
        json h = raw.header;
        h["bias"]["dtype"] = "f64";
        CHECK_THROWS_AS(deserialize_checkpoint(build_raw(h, payload)), IntegrityError);
    }
    SUBCASE("rank three shape") {
        json h = raw.header;
        h["bias"]["shape"] = {1, 1, 2};
        CHECK_THROWS_AS(deserialize_checkpoint(build_raw(h, payload)), StructuralMismatchError);
    }
    SUBCASE("zero dimension") {
        json h = raw.header;
        h["bias"]["shape"] = {0};
        CHECK_THROWS_AS(deserialize_checkpoint(build_raw(h, payload)), IntegrityError);
    }
    SUBCASE("metadata holding a tensor descriptor") {
        json h = raw.header;
        h["__metadata__"] = {{"dtype", "f32"}, {"shape", {2}}, {"byte_offset", 0}};
        CHECK_THROWS_AS(deserialize_checkpoint(build_raw(h, payload)), IntegrityError);
    }
    SUBCASE("metadata with non-string values") {
        json h = raw.header;
        h["__metadata__"] = {{"k", 5}};
        CHECK_THROWS_AS(deserialize_checkpoint(build_raw(h, payload)), IntegrityError);
    }
    SUBCASE("descriptor missing a field") {
        json h = raw.header;
        h["bias"].erase("byte_offset");
        CHECK_THROWS_AS(deserialize_checkpoint(build_raw(h, payload)), IntegrityError);
    }

    // the original bytes still parse after all that mutation
    CHECK(bit_equal(deserialize_checkpoint(good), m));
}

TEST_CASE("large map keeps alignment for every tensor") {
    TensorMap m;
    SplitMix64 rng(77);
    for (int i = 0; i < 17; ++i) {
        // odd sizes stress the padding logic
        Tensor t = Tensor::vec("t" + std::to_string(i), 1 + static_cast<int64_t>(rng.next() % 9));
        for (auto& v : t.data) v = static_cast<float>(rng.next_normal());
        m.insert(std::move(t));
    }
    RawFile raw = parse_raw(serialize_checkpoint(m));
    for (const auto& [key, desc] : raw.header.items()) {
        if (key == "__metadata__") continue;
        CHECK(desc.at("byte_offset").get<uint64_t>() % 8 == 0);
    }
    CHECK(bit_equal(deserialize_checkpoint(raw.bytes), m));
}
