#pragma once

#include <cstdint>
#include <initializer_list>
#include <string>
#include <string_view>

namespace nliaudit {

// 64-bit FNV-1a. Used for content-derived ids and request cache keys, so it
// must stay stable across platforms and releases; do not swap for std::hash.
constexpr std::uint64_t fnv1a64(std::string_view data,
                                std::uint64_t seed = 0xcbf29ce484222325ull) {
    std::uint64_t h = seed;
    for (unsigned char c : data) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

// Hashes fields separated by 0x1f so ("ab","c") != ("a","bc").
inline std::uint64_t fnv1a64_fields(std::initializer_list<std::string_view> fields,
                                    std::uint64_t seed = 0xcbf29ce484222325ull) {
    std::uint64_t h = seed;
    for (auto f : fields) {
        h = fnv1a64(f, h);
        h ^= 0x1f;
        h *= 0x100000001b3ull;
    }
    return h;
}

inline std::string to_hex(std::uint64_t v) {
    static const char* digits = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[static_cast<size_t>(i)] = digits[v & 0xf];
        v >>= 4;
    }
    return out;
}

}  // namespace nliaudit
