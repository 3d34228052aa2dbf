#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>

namespace pal {

using Sha256Digest = std::array<std::uint8_t, 32>;

Sha256Digest sha256(std::span<const std::uint8_t> bytes);
Sha256Digest sha256(std::string_view bytes);

std::string to_hex(std::span<const std::uint8_t> bytes);

inline std::string sha256_hex(std::string_view bytes) {
    return to_hex(sha256(bytes));
}

// 128 bits from the OS entropy source, hex encoded.
std::string random_hex_id(std::size_t bytes = 16);

} // namespace pal
