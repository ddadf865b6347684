#include "qlab/rng.hpp"

#include <cmath>

#if defined(__SSE2__)
#include <emmintrin.h>
#endif

namespace qlab {

namespace {

constexpr std::uint32_t kM0 = 0xD2511F53u;
constexpr std::uint32_t kM1 = 0xCD9E8D57u;
constexpr std::uint32_t kW0 = 0x9E3779B9u;
constexpr std::uint32_t kW1 = 0xBB67AE85u;

inline void philox_round(std::uint32_t& c0, std::uint32_t& c1, std::uint32_t& c2, std::uint32_t& c3, std::uint32_t k0,
                         std::uint32_t k1) {
    const std::uint64_t p0 = static_cast<std::uint64_t>(kM0) * c0;
    const std::uint64_t p1 = static_cast<std::uint64_t>(kM1) * c2;
    const std::uint32_t n0 = static_cast<std::uint32_t>(p1 >> 32) ^ c1 ^ k0;
    const std::uint32_t n2 = static_cast<std::uint32_t>(p0 >> 32) ^ c3 ^ k1;
    c1 = static_cast<std::uint32_t>(p1);
    c3 = static_cast<std::uint32_t>(p0);
    c0 = n0;
    c2 = n2;
}

constexpr int kLayers = 128;
constexpr double kR = 3.442619855899;
constexpr double kV = 9.91256303526217e-3;

ZigguratTables build_tables() {
    ZigguratTables t;
    const double f = std::exp(-0.5 * kR * kR);
    t.x[0] = kV / f;
    t.x[1] = kR;
    t.x[kLayers] = 0.0;
    for (int i = 2; i < kLayers; ++i)
        t.x[i] = std::sqrt(-2.0 * std::log(kV / t.x[i - 1] + std::exp(-0.5 * t.x[i - 1] * t.x[i - 1])));
    for (int i = 0; i < kLayers; ++i) t.ratio[i] = t.x[i + 1] / t.x[i];
    return t;
}

}  // namespace

PhiloxCounter philox4x32_10(PhiloxCounter ctr, PhiloxKey key) {
    std::uint32_t c0 = ctr[0], c1 = ctr[1], c2 = ctr[2], c3 = ctr[3];
    std::uint32_t k0 = key[0], k1 = key[1];
    for (int r = 0; r < 10; ++r) {
        philox_round(c0, c1, c2, c3, k0, k1);
        k0 += kW0;
        k1 += kW1;
    }
    return {c0, c1, c2, c3};
}

namespace {

#if defined(__SSE2__)
// Four consecutive blocks in SSE2 lanes; 32x32->64 products split into
// even and odd lanes since _mm_mul_epu32 reads lanes 0 and 2 only.
inline void mulhilo4(__m128i a, __m128i m, __m128i& lo, __m128i& hi) {
    const __m128i even = _mm_mul_epu32(a, m);
    const __m128i odd = _mm_mul_epu32(_mm_srli_epi64(a, 32), m);
    const __m128i low_mask = _mm_set1_epi64x(0xFFFFFFFFll);
    lo = _mm_or_si128(_mm_and_si128(even, low_mask), _mm_slli_epi64(odd, 32));
    hi = _mm_or_si128(_mm_srli_epi64(even, 32), _mm_andnot_si128(low_mask, odd));
}

void philox_batch(const PhiloxCounter& ctr, const PhiloxKey& key, std::uint32_t* out) {
    static_assert(CounterStream::kBatch == 4);
    __m128i c0 = _mm_set1_epi32(static_cast<int>(ctr[0]));
    __m128i c1 = _mm_set1_epi32(static_cast<int>(ctr[1]));
    __m128i c2 = _mm_set1_epi32(static_cast<int>(ctr[2]));
    __m128i c3 = _mm_add_epi32(_mm_set1_epi32(static_cast<int>(ctr[3])), _mm_setr_epi32(0, 1, 2, 3));
    const __m128i m0 = _mm_set1_epi32(static_cast<int>(kM0));
    const __m128i m1 = _mm_set1_epi32(static_cast<int>(kM1));
    std::uint32_t k0 = key[0], k1 = key[1];
    for (int r = 0; r < 10; ++r) {
        __m128i lo0, hi0, lo1, hi1;
        mulhilo4(c0, m0, lo0, hi0);
        mulhilo4(c2, m1, lo1, hi1);
        const __m128i n0 = _mm_xor_si128(_mm_xor_si128(hi1, c1), _mm_set1_epi32(static_cast<int>(k0)));
        const __m128i n2 = _mm_xor_si128(_mm_xor_si128(hi0, c3), _mm_set1_epi32(static_cast<int>(k1)));
        c1 = lo1;
        c3 = lo0;
        c0 = n0;
        c2 = n2;
        k0 += kW0;
        k1 += kW1;
    }
    // Transpose lanes back to block-major word order.
    const __m128i t0 = _mm_unpacklo_epi32(c0, c1), t1 = _mm_unpacklo_epi32(c2, c3);
    const __m128i t2 = _mm_unpackhi_epi32(c0, c1), t3 = _mm_unpackhi_epi32(c2, c3);
    auto* o = reinterpret_cast<__m128i*>(out);
    _mm_storeu_si128(o + 0, _mm_unpacklo_epi64(t0, t1));
    _mm_storeu_si128(o + 1, _mm_unpackhi_epi64(t0, t1));
    _mm_storeu_si128(o + 2, _mm_unpacklo_epi64(t2, t3));
    _mm_storeu_si128(o + 3, _mm_unpackhi_epi64(t2, t3));
}
#else
void philox_batch(const PhiloxCounter& ctr, const PhiloxKey& key, std::uint32_t* out) {
    PhiloxCounter c = ctr;
    for (int l = 0; l < CounterStream::kBatch; ++l) {
        const PhiloxCounter w = philox4x32_10(c, key);
        for (int k = 0; k < 4; ++k) out[4 * l + k] = w[k];
        ++c[3];
    }
}
#endif

}  // namespace

void CounterStream::refill() {
    philox_batch(ctr_, key_, buf_);
    ctr_[3] += kBatch;
    pos_ = 0;
}

const ZigguratTables& ziggurat_tables() {
    static const ZigguratTables t = build_tables();
    return t;
}

double CounterStream::normal_slow(int i, double u) {
    const ZigguratTables& t = *zig_;
    for (;;) {
        if (i == 0) {
            double xt, yt;
            do {
                xt = std::log(uniform()) / kR;
                yt = std::log(uniform());
            } while (-2.0 * yt < xt * xt);
            return u < 0.0 ? xt - kR : kR - xt;
        }
        const double x = u * t.x[i];
        const double f0 = std::exp(-0.5 * (t.x[i] * t.x[i] - x * x));
        const double f1 = std::exp(-0.5 * (t.x[i + 1] * t.x[i + 1] - x * x));
        if (f1 + uniform() * (f0 - f1) < 1.0) return x;
        const std::uint32_t w = next_u32();
        i = static_cast<int>(w & 0x7F);
        u = (static_cast<double>(w >> 7) + 0.5) * 0x1.0p-24 - 1.0;
        if (std::abs(u) < t.ratio[i]) return u * t.x[i];
    }
}

}  // namespace qlab
