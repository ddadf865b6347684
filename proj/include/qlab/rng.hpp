#pragma once

#include <array>
#include <cmath>
#include <cstdint>

namespace qlab {

/// Philox4x32-10 block function: 4x32-bit counter, 2x32-bit key.
using PhiloxCounter = std::array<std::uint32_t, 4>;
using PhiloxKey = std::array<std::uint32_t, 2>;

PhiloxCounter philox4x32_10(PhiloxCounter ctr, PhiloxKey key);

/// 128-layer ziggurat tables for exp(-x^2/2); ratio[i] = x[i+1] / x[i].
struct ZigguratTables {
    double x[129];
    double ratio[128];
};
const ZigguratTables& ziggurat_tables();

/// Sequential stream of 32-bit words for one (seed, stream, path) triple.
/// The Philox counter is (path_lo, path_hi, stream, block); each block
/// yields four words, consumed in order. Blocks are generated kBatch at a
/// time; the word sequence does not depend on the batch size.
class CounterStream {
public:
    CounterStream(std::uint64_t seed, std::uint64_t path, std::uint32_t stream = 0)
        : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)},
          ctr_{static_cast<std::uint32_t>(path), static_cast<std::uint32_t>(path >> 32), stream, 0},
          zig_(&ziggurat_tables()) {}

    static constexpr int kBatch = 4;
    static constexpr int kWords = 4 * kBatch;

    std::uint32_t next_u32() {
        if (pos_ == kWords) refill();
        return buf_[pos_++];
    }

    /// Uniform in (0, 1) with 32-bit resolution, never 0 or 1.
    double uniform() { return (static_cast<double>(next_u32()) + 0.5) * 0x1.0p-32; }

    /// Standard normal via a 128-layer ziggurat; one word per draw on the fast path.
    double normal() {
        const std::uint32_t w = next_u32();
        const int i = static_cast<int>(w & 0x7F);
        // Bits 7..31 give a uniform on (-1, 1), disjoint from the layer bits.
        const double u = (static_cast<double>(w >> 7) + 0.5) * 0x1.0p-24 - 1.0;
        if (std::abs(u) < zig_->ratio[i]) return u * zig_->x[i];
        return normal_slow(i, u);
    }

private:
    void refill();
    double normal_slow(int layer, double u);
    PhiloxKey key_;
    PhiloxCounter ctr_;
    std::uint32_t buf_[kWords] = {};
    const ZigguratTables* zig_;
    int pos_ = kWords;
};

}  // namespace qlab
