#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Core>

#include "loh/codes.hpp"

namespace loh {

// Points and centroids are stored as rows. All training math is double;
// trained models round their parameters to float32 before use so that
// serialization is lossless.
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct Codebook {
    Matrix centroids;  // count x dim

    int count() const { return static_cast<int>(centroids.rows()); }
    int dim() const { return static_cast<int>(centroids.cols()); }
};

struct KmeansResult {
    Codebook codebook;
    std::vector<int> assignments;       // per input point
    std::vector<double> distortion;     // total squared error after each assignment pass
};

// Lloyd iterations with distance-weighted (k-means++ style) seeding.
// Deterministic for a fixed seed and any thread count. Empty clusters are
// re-seeded from the point currently farthest from its centroid. Stops
// when the relative distortion improvement drops below 1e-4 or after
// max_iters assignment passes.
KmeansResult kmeans(const Matrix& data, int k, int max_iters,
                    std::uint64_t seed, int threads = 1);

struct PcaBasis {
    Vector mean;          // d
    Matrix eigenvectors;  // d x d, columns ordered by descending eigenvalue
    Vector eigenvalues;   // descending, clamped to >= 0
};

// Eigen-decomposition of the sample covariance of mean-centered data.
PcaBasis pca(const Matrix& data);

struct Allocation {
    // permutation[i] = output position of input dimension i
    std::vector<int> permutation;
    // buckets[b] = input dimensions assigned to bucket b, in assignment order
    std::vector<std::vector<int>> buckets;
};

// Greedy balanced assignment of eigenvalue-ranked dimensions to buckets:
// scan in descending order, give each dimension to the non-full bucket
// with the smallest log-product of variances (empty buckets first, ties to
// the lowest bucket index). Zero eigenvalues contribute log(1e-10).
Allocation eigenvalue_allocation(const Vector& eigenvalues, int num_buckets,
                                 int bucket_size);

// One k-centroid codebook per contiguous d/m-dimensional slice.
std::vector<Codebook> train_subquantizers(const Matrix& residuals, int m,
                                          int k, int max_iters,
                                          std::uint64_t seed, int threads = 1);

// Index of the nearest centroid by squared Euclidean distance, ties to the
// lowest index.
int quantize_subvector(const Vector& x, const Codebook& cb);

// Per-subspace k x k tables of squared distances between sub-centroids.
struct SdcTable {
    std::vector<Matrix> tables;

    int subspaces() const { return static_cast<int>(tables.size()); }
};

SdcTable build_sdc_table(const std::vector<Codebook>& subquantizers);

// Symmetric distance: sum over subspaces of the tabulated squared distance
// between the two sub-centroids.
double sdc_distance(const FineCodes& fx, const FineCodes& fy,
                    const SdcTable& table);

// Asymmetric distance: squared distance from raw vector y to the decoded
// centroid concatenation of fx.
double adc_distance(const Vector& y, const FineCodes& fx,
                    const std::vector<Codebook>& subquantizers);

}  // namespace loh
