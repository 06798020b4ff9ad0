#pragma once

#include <cstdint>
#include <span>
#include <string>

namespace randes {

// Streaming SHA-256.
class Sha256 {
public:
    Sha256();
    void update(const void* data, size_t len);
    // Finalizes and returns the digest as 64 lowercase hex characters.
    std::string hex_digest();

private:
    void process_block(const uint8_t* block);

    uint32_t state_[8];
    uint64_t total_len_ = 0;
    uint8_t buffer_[64];
    size_t buffer_len_ = 0;
    bool finalized_ = false;
};

std::string sha256_hex(std::span<const uint8_t> bytes);
std::string sha256_hex(const std::string& bytes);

}  // namespace randes
