#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "loh/codes.hpp"
#include "loh/quantization.hpp"

namespace loh::testing {

// Near-duplicate corpus: num_groups groups of group_size jittered copies of
// a base vector, plus uniform-random decoys. The jitter is calibrated so
// the brute-force nearest neighbor of a group member is another member of
// the same group for at least 99% of members (asserted at build time).
struct DupFixture {
    Matrix data;             // (num_groups * group_size + decoys) x d
    std::vector<int> group;  // group index per row, -1 for decoys
    int num_groups = 0;
    int group_size = 0;
    int decoys = 0;
};

DupFixture make_dup_fixture(int num_groups, int group_size, int decoys, int d,
                            double sigma, std::uint64_t seed);

// The acceptance-criteria shape: 100 groups x 5 copies + 500 decoys, d=32.
DupFixture make_dup_fixture(std::uint64_t seed);

// Database and held-out queries drawn from one anisotropic Gaussian
// mixture: every component has its own random orientation and per-axis
// scales, so locally rotated quantizers have something real to gain.
std::pair<Matrix, Matrix> make_mixture(std::size_t n_db, std::size_t n_queries,
                                       int d, int components,
                                       std::uint64_t seed);

// Uniformly random code tuples in the given ranges, ids id_base + row.
std::vector<EncodedPoint> random_codes(std::size_t n, int K, int m, int k,
                                       std::uint64_t seed,
                                       std::uint64_t id_base = 0);

}  // namespace loh::testing
