#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "loh/codes.hpp"
#include "loh/quantization.hpp"

namespace loh {

// Standard ANN benchmark vector containers: each record is a little-endian
// 32-bit dimension header followed by that many elements.
enum class ElementKind { kFloat32, kUint8, kInt32 };

// .fvecs -> float32, .bvecs -> uint8, .ivecs -> int32.
ElementKind kind_from_extension(const std::string& path);

Matrix read_vectors(const std::string& path, ElementKind kind);
Matrix read_vectors(const std::string& path);
void write_vectors(const std::string& path, const Matrix& data,
                   ElementKind kind);
void write_vectors(const std::string& path, const Matrix& data);

// Exact top-R neighbors per query under squared Euclidean distance, ties by
// id ascending. Ids are database row numbers. R larger than the database is
// clamped with a warning on stderr.
struct GroundTruth {
    std::vector<std::vector<DocId>> neighbors;  // per query, distance order
};

GroundTruth brute_force_knn(const Matrix& queries, const Matrix& database,
                            int R, int threads = 1);

// Fraction of queries whose single true nearest neighbor appears in the top
// R of the ranked list, for each requested R.
std::vector<std::pair<int, double>> recall_at_r(
    const std::vector<std::vector<DocId>>& ranked, const GroundTruth& truth,
    const std::vector<int>& r_values);

struct PrPoint {
    double threshold = 0.0;
    double precision = 1.0;
    double recall = 0.0;
};

struct PrCurve {
    std::vector<PrPoint> points;
    // True when the labels contain no positives, making recall undefined
    // (reported as 0).
    bool no_positives = false;
};

// Precision/recall per threshold; a pair is predicted positive when its
// score is strictly greater than the threshold. With no predicted
// positives, precision is reported as 1.
PrCurve pr_curve(const std::vector<double>& scores,
                 const std::vector<bool>& labels,
                 const std::vector<double>& thresholds);

// Packed binary codes, one code of `bits` bits per vector.
struct BitCodes {
    int bits = 0;
    std::size_t count = 0;
    std::vector<std::uint64_t> words;  // row-major, words_per_code() each

    std::size_t words_per_code() const {
        return (static_cast<std::size_t>(bits) + 63) / 64;
    }
    std::span<const std::uint64_t> row(std::size_t i) const {
        return {words.data() + i * words_per_code(), words_per_code()};
    }
};

// Signs of seeded Gaussian random projections.
BitCodes lsh_codes(const Matrix& vectors, int bits, std::uint64_t seed);

// Signs of the top-`bits` mean-centered PCA projections.
BitCodes pca_e_codes(const Matrix& vectors, const PcaBasis& basis, int bits);

int hamming(std::span<const std::uint64_t> a, std::span<const std::uint64_t> b);

}  // namespace loh
