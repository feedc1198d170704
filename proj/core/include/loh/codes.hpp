#pragma once

#include <compare>
#include <cstdint>
#include <vector>

namespace loh {

using DocId = std::uint64_t;

// Pair of coarse quantizer cell indices, one per subspace half.
struct CoarseCodes {
    std::uint32_t c1 = 0;
    std::uint32_t c2 = 0;

    friend bool operator==(const CoarseCodes&, const CoarseCodes&) = default;
};

// The m sub-quantizer indices of a locally rotated residual.
struct FineCodes {
    std::vector<std::uint16_t> f;

    std::size_t size() const { return f.size(); }
    std::uint16_t operator[](std::size_t j) const { return f[j]; }

    friend bool operator==(const FineCodes&, const FineCodes&) = default;
};

// One flattened hash triplet: the governing coarse code, the position of
// the fine code within f, and the fine code itself. Equal triplets are
// exactly the unit of collision that all joins and groupings count.
struct LohCode {
    std::uint32_t coarse = 0;
    std::uint32_t position = 0;
    std::uint32_t fine = 0;

    // Packs into one ordered 64-bit key: coarse | position | fine.
    // Requires position < 2^16 and fine < 2^16, which holds for any
    // practical m and k <= 65536.
    std::uint64_t packed() const {
        return (static_cast<std::uint64_t>(coarse) << 32) |
               (static_cast<std::uint64_t>(position) << 16) |
               static_cast<std::uint64_t>(fine);
    }

    friend bool operator==(const LohCode&, const LohCode&) = default;
    friend auto operator<=>(const LohCode& a, const LohCode& b) {
        return a.packed() <=> b.packed();
    }
};

// A document after encoding: its multi-index cell (coarse pair) plus the
// m fine codes. Ids are opaque 64-bit handles chosen by the caller.
struct EncodedPoint {
    DocId id = 0;
    CoarseCodes coarse;
    FineCodes fine;

    friend bool operator==(const EncodedPoint&, const EncodedPoint&) = default;
};

struct LohCodeHash {
    std::size_t operator()(const LohCode& c) const {
        std::uint64_t x = c.packed();
        // splitmix64 finalizer
        x ^= x >> 30;
        x *= 0xbf58476d1ce4e5b9ULL;
        x ^= x >> 27;
        x *= 0x94d049bb133111ebULL;
        x ^= x >> 31;
        return static_cast<std::size_t>(x);
    }
};

}  // namespace loh
