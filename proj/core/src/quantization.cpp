#include "loh/quantization.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include <Eigen/Eigenvalues>

#include "loh/error.hpp"
#include "loh/parallel.hpp"
#include "loh/rng.hpp"

namespace loh {

namespace {

constexpr double kKmeansRelTol = 1e-4;
constexpr double kAllocLogFloor = 1e-10;
constexpr std::size_t kChunk = 2048;

// Squared distance from row `p` of data to a centroid row.
inline double row_sqdist(const Matrix& data, Eigen::Index p,
                         const Matrix& centroids, Eigen::Index c) {
    return (data.row(p) - centroids.row(c)).squaredNorm();
}

// Nearest centroid for one point, ties to the lowest index.
inline int nearest_centroid(const Matrix& data, Eigen::Index p,
                            const Matrix& centroids, double* dist_out) {
    int best = 0;
    double best_d = row_sqdist(data, p, centroids, 0);
    for (Eigen::Index c = 1; c < centroids.rows(); ++c) {
        const double d = row_sqdist(data, p, centroids, c);
        if (d < best_d) {
            best_d = d;
            best = static_cast<int>(c);
        }
    }
    if (dist_out) *dist_out = best_d;
    return best;
}

Matrix kmeanspp_seed(const Matrix& data, int k, std::mt19937_64& gen) {
    const auto n = data.rows();
    Matrix centroids(k, data.cols());

    const auto first = static_cast<Eigen::Index>(
        uniform_index(gen, static_cast<std::uint64_t>(n)));
    centroids.row(0) = data.row(first);

    std::vector<double> d2(static_cast<std::size_t>(n));
    for (Eigen::Index p = 0; p < n; ++p)
        d2[static_cast<std::size_t>(p)] = row_sqdist(data, p, centroids, 0);

    for (int c = 1; c < k; ++c) {
        double total = 0.0;
        for (double v : d2) total += v;
        Eigen::Index chosen;
        if (total <= 0.0) {
            // all mass on existing centroids; fall back to uniform
            chosen = static_cast<Eigen::Index>(
                uniform_index(gen, static_cast<std::uint64_t>(n)));
        } else {
            const double target = uniform01(gen) * total;
            double acc = 0.0;
            chosen = n - 1;
            for (Eigen::Index p = 0; p < n; ++p) {
                acc += d2[static_cast<std::size_t>(p)];
                if (acc >= target) {
                    chosen = p;
                    break;
                }
            }
        }
        centroids.row(c) = data.row(chosen);
        for (Eigen::Index p = 0; p < n; ++p) {
            const double d = row_sqdist(data, p, centroids, c);
            auto& best = d2[static_cast<std::size_t>(p)];
            if (d < best) best = d;
        }
    }
    return centroids;
}

}  // namespace

KmeansResult kmeans(const Matrix& data, int k, int max_iters,
                    std::uint64_t seed, int threads) {
    const auto n = data.rows();
    const auto d = data.cols();
    if (n == 0) throw InputError("kmeans: data is empty");
    if (k < 1) throw InputError("kmeans: k must be >= 1");
    if (k > n)
        throw InputError("kmeans: k exceeds number of points (" +
                         std::to_string(k) + " > " + std::to_string(n) + ")");
    if (max_iters < 1) throw InputError("kmeans: max_iters must be >= 1");

    std::mt19937_64 gen(seed);
    Matrix centroids = kmeanspp_seed(data, k, gen);

    KmeansResult result;
    result.assignments.assign(static_cast<std::size_t>(n), 0);
    std::vector<double> point_dist(static_cast<std::size_t>(n), 0.0);

    const std::size_t chunks = num_chunks_for(static_cast<std::size_t>(n), kChunk);
    std::vector<double> chunk_distortion(chunks);

    for (int iter = 0; iter < max_iters; ++iter) {
        // assignment pass; per-chunk distortion partials are combined in
        // chunk order so the total is thread-count independent
        parallel_chunks(
            static_cast<std::size_t>(n), kChunk, threads,
            [&](std::size_t c, std::size_t begin, std::size_t end) {
                double acc = 0.0;
                for (std::size_t p = begin; p < end; ++p) {
                    double dist;
                    result.assignments[p] = nearest_centroid(
                        data, static_cast<Eigen::Index>(p), centroids, &dist);
                    point_dist[p] = dist;
                    acc += dist;
                }
                chunk_distortion[c] = acc;
            });
        double distortion = 0.0;
        for (std::size_t c = 0; c < chunks; ++c) distortion += chunk_distortion[c];
        result.distortion.push_back(distortion);

        if (result.distortion.size() >= 2) {
            const double prev = result.distortion[result.distortion.size() - 2];
            if (prev <= 0.0 || (prev - distortion) / prev < kKmeansRelTol) break;
        }
        if (iter + 1 == max_iters) break;

        // update pass
        Matrix sums = Matrix::Zero(k, d);
        std::vector<std::int64_t> counts(static_cast<std::size_t>(k), 0);
        for (Eigen::Index p = 0; p < n; ++p) {
            const int a = result.assignments[static_cast<std::size_t>(p)];
            sums.row(a) += data.row(p);
            ++counts[static_cast<std::size_t>(a)];
        }
        std::vector<char> taken(static_cast<std::size_t>(n), 0);
        for (int c = 0; c < k; ++c) {
            if (counts[static_cast<std::size_t>(c)] > 0) {
                centroids.row(c) =
                    sums.row(c) / static_cast<double>(counts[static_cast<std::size_t>(c)]);
            } else {
                // re-seed from the point farthest from its centroid; each
                // empty cluster (ascending index) takes a distinct point
                Eigen::Index far = -1;
                double far_d = -1.0;
                for (Eigen::Index p = 0; p < n; ++p) {
                    if (taken[static_cast<std::size_t>(p)]) continue;
                    if (point_dist[static_cast<std::size_t>(p)] > far_d) {
                        far_d = point_dist[static_cast<std::size_t>(p)];
                        far = p;
                    }
                }
                centroids.row(c) = data.row(far);
                taken[static_cast<std::size_t>(far)] = 1;
            }
        }
    }

    result.codebook.centroids = std::move(centroids);
    return result;
}

PcaBasis pca(const Matrix& data) {
    const auto n = data.rows();
    const auto d = data.cols();
    if (n < 2) throw InputError("pca: need at least 2 points");
    if (d < 1) throw InputError("pca: dimension must be >= 1");

    PcaBasis basis;
    basis.mean = data.colwise().mean();
    Matrix centered = data.rowwise() - basis.mean.transpose();
    Matrix cov = (centered.transpose() * centered) / static_cast<double>(n - 1);

    Eigen::SelfAdjointEigenSolver<Matrix> solver(cov);
    if (solver.info() != Eigen::Success)
        throw Error("pca: eigen-decomposition failed");

    // SelfAdjointEigenSolver returns ascending order; flip to descending.
    basis.eigenvalues = solver.eigenvalues().reverse();
    basis.eigenvectors = solver.eigenvectors().rowwise().reverse();
    for (Eigen::Index i = 0; i < d; ++i) {
        if (basis.eigenvalues(i) < 0.0) basis.eigenvalues(i) = 0.0;
    }
    return basis;
}

Allocation eigenvalue_allocation(const Vector& eigenvalues, int num_buckets,
                                 int bucket_size) {
    const auto d = eigenvalues.size();
    if (num_buckets < 1 || bucket_size < 1)
        throw InputError("eigenvalue_allocation: buckets and size must be >= 1");
    if (d != static_cast<Eigen::Index>(num_buckets) * bucket_size)
        throw InputError(
            "eigenvalue_allocation: need exactly num_buckets * bucket_size "
            "eigenvalues, got " + std::to_string(d));
    for (Eigen::Index i = 0; i < d; ++i) {
        if (eigenvalues(i) < 0.0)
            throw InputError("eigenvalue_allocation: eigenvalues must be >= 0");
        if (i > 0 && eigenvalues(i) > eigenvalues(i - 1))
            throw InputError("eigenvalue_allocation: eigenvalues must descend");
    }

    Allocation alloc;
    alloc.buckets.assign(static_cast<std::size_t>(num_buckets), {});
    alloc.permutation.assign(static_cast<std::size_t>(d), -1);

    std::vector<double> log_product(static_cast<std::size_t>(num_buckets), 0.0);
    for (Eigen::Index i = 0; i < d; ++i) {
        int chosen = -1;
        bool chosen_empty = false;
        double chosen_log = std::numeric_limits<double>::infinity();
        for (int b = 0; b < num_buckets; ++b) {
            const auto& bucket = alloc.buckets[static_cast<std::size_t>(b)];
            if (static_cast<int>(bucket.size()) == bucket_size) continue;
            const bool empty = bucket.empty();
            // an empty bucket always wins over a non-empty one
            if (chosen < 0 || (empty && !chosen_empty) ||
                (empty == chosen_empty && !empty &&
                 log_product[static_cast<std::size_t>(b)] < chosen_log)) {
                chosen = b;
                chosen_empty = empty;
                chosen_log = log_product[static_cast<std::size_t>(b)];
                if (empty) break;  // lowest-index empty bucket
            }
        }
        log_product[static_cast<std::size_t>(chosen)] +=
            std::log(std::max(eigenvalues(i), kAllocLogFloor));
        auto& bucket = alloc.buckets[static_cast<std::size_t>(chosen)];
        alloc.permutation[static_cast<std::size_t>(i)] =
            chosen * bucket_size + static_cast<int>(bucket.size());
        bucket.push_back(static_cast<int>(i));
    }
    return alloc;
}

std::vector<Codebook> train_subquantizers(const Matrix& residuals, int m,
                                          int k, int max_iters,
                                          std::uint64_t seed, int threads) {
    const auto d = residuals.cols();
    if (residuals.rows() == 0)
        throw InputError("train_subquantizers: residuals are empty");
    if (m < 1 || d % m != 0)
        throw InputError("train_subquantizers: dimension " + std::to_string(d) +
                         " not divisible by m=" + std::to_string(m));

    const auto sub_dim = d / m;
    std::vector<Codebook> books;
    books.reserve(static_cast<std::size_t>(m));
    for (int j = 0; j < m; ++j) {
        Matrix slice = residuals.middleCols(j * sub_dim, sub_dim);
        books.push_back(
            kmeans(slice, k, max_iters, seed + static_cast<std::uint64_t>(j),
                   threads)
                .codebook);
    }
    return books;
}

int quantize_subvector(const Vector& x, const Codebook& cb) {
    if (x.size() != cb.centroids.cols())
        throw InputError("quantize_subvector: dimension mismatch (" +
                         std::to_string(x.size()) + " vs " +
                         std::to_string(cb.centroids.cols()) + ")");
    int best = 0;
    double best_d = (x.transpose() - cb.centroids.row(0)).squaredNorm();
    for (Eigen::Index c = 1; c < cb.centroids.rows(); ++c) {
        const double dist = (x.transpose() - cb.centroids.row(c)).squaredNorm();
        if (dist < best_d) {
            best_d = dist;
            best = static_cast<int>(c);
        }
    }
    return best;
}

SdcTable build_sdc_table(const std::vector<Codebook>& subquantizers) {
    SdcTable table;
    table.tables.reserve(subquantizers.size());
    for (const auto& cb : subquantizers) {
        const int k = cb.count();
        Matrix t(k, k);
        for (int a = 0; a < k; ++a) {
            t(a, a) = 0.0;
            for (int b = a + 1; b < k; ++b) {
                const double d =
                    (cb.centroids.row(a) - cb.centroids.row(b)).squaredNorm();
                t(a, b) = d;
                t(b, a) = d;
            }
        }
        table.tables.push_back(std::move(t));
    }
    return table;
}

double sdc_distance(const FineCodes& fx, const FineCodes& fy,
                    const SdcTable& table) {
    const auto m = table.tables.size();
    if (fx.size() != m || fy.size() != m)
        throw InputError("sdc_distance: code length does not match table");
    double sum = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
        const auto& t = table.tables[j];
        if (fx[j] >= t.rows() || fy[j] >= t.rows())
            throw InputError("sdc_distance: code out of range in subspace " +
                             std::to_string(j));
        sum += t(fx[j], fy[j]);
    }
    return sum;
}

double adc_distance(const Vector& y, const FineCodes& fx,
                    const std::vector<Codebook>& subquantizers) {
    const auto m = subquantizers.size();
    if (fx.size() != m)
        throw InputError("adc_distance: code length does not match quantizers");
    Eigen::Index offset = 0;
    double sum = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
        const auto& cb = subquantizers[j];
        const auto sub_dim = cb.centroids.cols();
        if (offset + sub_dim > y.size())
            throw InputError("adc_distance: vector dimension mismatch");
        if (fx[j] >= cb.centroids.rows())
            throw InputError("adc_distance: code out of range in subspace " +
                             std::to_string(j));
        sum += (y.segment(offset, sub_dim).transpose() - cb.centroids.row(fx[j]))
                   .squaredNorm();
        offset += sub_dim;
    }
    if (offset != y.size())
        throw InputError("adc_distance: vector dimension mismatch");
    return sum;
}

}  // namespace loh
