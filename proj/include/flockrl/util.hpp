#pragma once

#include <charconv>
#include <cstdint>
#include <string>
#include <string_view>

namespace flockrl {

// Shortest round-trip decimal for a double (std::to_chars). Used by every
// CSV writer so identical runs produce identical bytes.
inline std::string fmt_double(double v) {
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, ptr);
}

// FNV-1a 64-bit, for artifact manifests (integrity, not security).
inline std::uint64_t fnv1a64(std::string_view data, std::uint64_t h = 0xcbf29ce484222325ULL) {
    for (unsigned char c : data) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::string hex64(std::uint64_t v) {
    static const char* digits = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i) {
        s[static_cast<size_t>(i)] = digits[v & 0xf];
        v >>= 4;
    }
    return s;
}

}  // namespace flockrl
