#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace multiqa {

// Streaming SHA-256 (FIPS 180-4). Persisted hashes (corpus content hash,
// stage cache keys, stub script keys) all go through this, so the digest
// must be stable across platforms.
class Sha256 {
public:
    Sha256();

    void update(std::string_view data);

    /// Finalizes and returns the digest as a 64-char lowercase hex string.
    /// The object must not be updated afterwards.
    std::string hex_digest();

    static std::string hash(std::string_view data);

private:
    void process_block(const uint8_t* block);

    uint32_t state_[8];
    uint64_t total_len_ = 0;
    uint8_t buffer_[64];
    size_t buffer_len_ = 0;
    bool finalized_ = false;
};

}  // namespace multiqa
