#pragma once

#include <cstdint>
#include <cstdio>
#include <string>
#include <string_view>

namespace rsel {

// 64-bit FNV-1a. Used for content-addressed ids, not for security.
class Fnv1a {
public:
    Fnv1a& add(std::string_view bytes) {
        for (unsigned char c : bytes) {
            state_ ^= c;
            state_ *= 0x100000001b3ULL;
        }
        return *this;
    }

    // Field separator so that ("ab","c") and ("a","bc") hash differently.
    Fnv1a& field(std::string_view bytes) {
        add(bytes);
        return add(std::string_view("\x1f", 1));
    }

    std::uint64_t value() const { return state_; }

    std::string hex() const {
        char buf[17];
        std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(state_));
        return std::string(buf, 16);
    }

private:
    std::uint64_t state_ = 0xcbf29ce484222325ULL;
};

}  // namespace rsel
