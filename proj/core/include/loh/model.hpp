#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "loh/codes.hpp"
#include "loh/quantization.hpp"

namespace loh {

struct LohParams {
    int d = 0;                // vector dimension
    int K = 0;                // coarse centroids per subspace half
    int m = 0;                // fine subspaces (even)
    int k = 0;                // sub-centroids per fine subspace
    int kmeans_iters = 25;
    std::uint64_t seed = 0;

    void validate() const;  // throws InputError

    friend bool operator==(const LohParams&, const LohParams&) = default;
};

// Trained quantization state. Immutable after training; encode is pure and
// safe to call concurrently. All matrices hold float32-exact values so the
// on-disk model round-trips bit-for-bit.
struct LohModel {
    LohParams params;

    // variance-balancing preprocessing: x_tilde = rotation * (x - mean)
    Vector global_mean;
    Matrix global_rotation;  // d x d orthogonal

    Codebook coarse_codebooks[2];           // K x d/2 each
    std::vector<Matrix> local_rotations[2];  // K matrices, (d/2) x (d/2)
    std::vector<Codebook> subquantizers;     // m books, k x d/m

    int half_dim() const { return params.d / 2; }
    int sub_dim() const { return params.d / params.m; }

    bool operator==(const LohModel& other) const;
};

struct TrainOptions {
    bool local_rotations = true;  // false trains the identity-rotation ablation
    int threads = 1;
};

// Trains the two-subspace model: global PCA with variance-balancing
// allocation, per-half coarse k-means, per-cluster residual rotations, and
// m global sub-quantizers over the pooled rotated residuals.
LohModel train(const Matrix& data, const LohParams& params,
               const TrainOptions& options = {});

EncodedPoint encode(const LohModel& model, const Vector& x, DocId id = 0);

std::vector<EncodedPoint> encode_all(const LohModel& model, const Matrix& data,
                                     int threads = 1);

// The m flattened triplets of a point; the first m/2 carry c1, the rest c2.
std::vector<LohCode> flatten(const EncodedPoint& p);

// Rebuilds a point from its m triplets (any order); validates positions and
// per-half coarse consistency.
EncodedPoint unflatten(std::span<const LohCode> codes, DocId id);

// Collision count: positions where both the governing coarse code and the
// fine code agree. Equals |flatten(a) intersect flatten(b)|.
int loh_similarity(const EncodedPoint& a, const EncodedPoint& b);

// Locally rotated residual of x given its coarse assignment (the vector the
// fine codes quantize).
Vector rotated_residual(const LohModel& model, const Vector& x,
                        const CoarseCodes& coarse);

// Sum over points of the squared quantization error of their rotated
// residuals. Lower is better; used to compare training variants.
double total_quantization_distortion(const LohModel& model, const Matrix& data,
                                     int threads = 1);

void save_model(const LohModel& model, const std::string& path);
LohModel load_model(const std::string& path);
void save_model(const LohModel& model, std::ostream& out);
LohModel load_model(std::istream& in);

}  // namespace loh
