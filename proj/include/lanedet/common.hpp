#pragma once

#include <cmath>
#include <cstdarg>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <istream>
#include <ostream>
#include <random>
#include <stdexcept>
#include <string>

namespace lanedet {

// Thrown when an attention score matrix would exceed the configured budget.
struct capacity_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline void require(bool cond, const std::string& msg) {
    if (!cond) throw std::invalid_argument(msg);
}

inline std::string str_printf(const char* fmt, ...) {
    va_list args;
    va_start(args, fmt);
    char buf[512];
    std::vsnprintf(buf, sizeof(buf), fmt, args);
    va_end(args);
    return std::string(buf);
}

// splitmix64, used to derive independent sub-seeds from one run seed.
inline uint64_t mix_seed(uint64_t seed, uint64_t stream) {
    uint64_t z = seed + 0x9e3779b97f4a7c15ull * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

// Deterministic RNG. mt19937 output is pinned by the standard; the float /
// normal derivations below are our own so streams are identical across
// standard library implementations.
class Rng {
public:
    explicit Rng(uint64_t seed) : eng_(static_cast<uint32_t>(mix_seed(seed, 0))) {}

    uint32_t next_u32() { return eng_(); }

    // [0, 1)
    float uniform() { return static_cast<float>(next_u32() >> 8) * (1.0f / 16777216.0f); }

    float uniform(float lo, float hi) { return lo + (hi - lo) * uniform(); }

    // inclusive bounds
    int uniform_int(int lo, int hi) {
        require(hi >= lo, "uniform_int: empty range");
        uint64_t span = static_cast<uint64_t>(hi) - static_cast<uint64_t>(lo) + 1;
        return lo + static_cast<int>(static_cast<uint64_t>(next_u32()) % span);
    }

    float normal(float mean = 0.0f, float stddev = 1.0f) {
        if (have_spare_) {
            have_spare_ = false;
            return mean + stddev * spare_;
        }
        // Box-Muller on doubles for a stable tail.
        double u1, u2;
        do {
            u1 = (next_u32() >> 8) * (1.0 / 16777216.0);
        } while (u1 <= 1e-12);
        u2 = (next_u32() >> 8) * (1.0 / 16777216.0);
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 2.0 * 3.14159265358979323846 * u2;
        spare_ = static_cast<float>(r * std::sin(a));
        have_spare_ = true;
        return mean + stddev * static_cast<float>(r * std::cos(a));
    }

private:
    std::mt19937 eng_;
    bool have_spare_ = false;
    float spare_ = 0.0f;
};

// Little-endian binary IO, independent of host byte order.
inline void write_le_u64(std::ostream& os, uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    os.write(reinterpret_cast<const char*>(b), 8);
}

inline uint64_t read_le_u64(std::istream& is) {
    unsigned char b[8];
    is.read(reinterpret_cast<char*>(b), 8);
    if (!is) throw std::runtime_error("read_le_u64: stream truncated");
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(b[i]) << (8 * i);
    return v;
}

inline void write_le_u32(std::ostream& os, uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    os.write(reinterpret_cast<const char*>(b), 4);
}

inline uint32_t read_le_u32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    if (!is) throw std::runtime_error("read_le_u32: stream truncated");
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(b[i]) << (8 * i);
    return v;
}

inline void write_le_f32(std::ostream& os, float f) {
    uint32_t v;
    std::memcpy(&v, &f, 4);
    write_le_u32(os, v);
}

inline float read_le_f32(std::istream& is) {
    uint32_t v = read_le_u32(is);
    float f;
    std::memcpy(&f, &v, 4);
    return f;
}

}  // namespace lanedet
