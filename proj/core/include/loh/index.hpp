#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <queue>
#include <string>
#include <vector>

#include "loh/codes.hpp"
#include "loh/model.hpp"

namespace loh {

// Inverted multi-index: one list per populated coarse cell (c1,c2), points
// stored in insertion order. Immutable after build; concurrent searches on a
// shared index are safe.
struct MultiIndex {
    LohModel model;
    std::map<std::uint64_t, std::vector<EncodedPoint>> cells;  // key -> list
    std::uint64_t total_count = 0;

    static std::uint64_t cell_key(const CoarseCodes& c) {
        return (static_cast<std::uint64_t>(c.c1) << 32) | c.c2;
    }
    static CoarseCodes cell_codes(std::uint64_t key) {
        return {static_cast<std::uint32_t>(key >> 32),
                static_cast<std::uint32_t>(key & 0xffffffffu)};
    }
};

MultiIndex build_index(const LohModel& model,
                       const std::vector<EncodedPoint>& points);

struct CellCandidate {
    CoarseCodes cell;
    double d_c = 0.0;  // squared distance to the cell's coarse centroids
};

// Lazy ordered traversal of the cell lattice: emits every (c1,c2) exactly
// once in nondecreasing d_c = dists1[c1] + dists2[c2], ties broken by
// (c1,c2) lexicographic. Keeps a frontier priority queue seeded with the
// (argmin, argmin) cell.
class MultiSequence {
  public:
    MultiSequence(std::vector<double> dists1, std::vector<double> dists2);

    bool done() const { return frontier_.empty(); }
    CellCandidate next();

  private:
    struct Entry {
        double d;
        std::uint32_t c1, c2;  // centroid indices, for tie-breaking
        std::uint32_t r1, r2;  // rank-space coordinates
        bool operator>(const Entry& o) const {
            if (d != o.d) return d > o.d;
            if (c1 != o.c1) return c1 > o.c1;
            return c2 > o.c2;
        }
    };

    void push_rank(std::uint32_t r1, std::uint32_t r2);

    std::vector<double> dists1_, dists2_;
    std::vector<std::uint32_t> order1_, order2_;  // rank -> centroid index
    std::priority_queue<Entry, std::vector<Entry>, std::greater<>> frontier_;
    std::vector<bool> pushed_;  // rank-pair bitmap, r1 * |order2| + r2
};

struct SearchParams {
    std::uint64_t T = 1;  // stop once at least T points have been evaluated
    double beta = 1.0;    // weight gain
    // Weight scale. Unset means: mean d_c over the cells visited for the
    // query (1.0 if that mean is zero).
    std::optional<double> tau;
};

// w_c = beta * exp(-d_c / tau); params.tau must be set and positive here.
double cell_weight(double d_c, const SearchParams& params);

struct RankedHit {
    DocId id = 0;
    double score = 0.0;  // sigma_w = w_c + matches
    int matches = 0;     // sigma_h within the hit's cell
    CoarseCodes cell;
};

// Visits cells in multi-sequence order, scoring every point of each visited
// cell, until at least params.T points have been evaluated. Hits are sorted
// by score descending, ties by (matches descending, id ascending).
std::vector<RankedHit> search(const MultiIndex& index, const Vector& query,
                              const SearchParams& params);

void save_index(const MultiIndex& index, const std::string& path);
MultiIndex load_index(const std::string& path, const LohModel& model);

}  // namespace loh
