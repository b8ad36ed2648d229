#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>

namespace semtool {

// Incremental SHA-256 (OpenSSL backed).
class Sha256 {
public:
    Sha256();
    ~Sha256();
    Sha256(const Sha256&) = delete;
    Sha256& operator=(const Sha256&) = delete;

    void update(std::string_view bytes);
    std::array<std::uint8_t, 32> finish();

private:
    void* ctx_;
};

std::array<std::uint8_t, 32> sha256(std::string_view bytes);
std::string to_hex(const std::array<std::uint8_t, 32>& digest);

}  // namespace semtool
