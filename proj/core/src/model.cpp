#include "loh/model.hpp"

#include <cstring>
#include <fstream>
#include <sstream>
#include <utility>

#include "loh/error.hpp"
#include "loh/parallel.hpp"
#include "wire.hpp"

namespace loh {
namespace {

constexpr char kModelMagic[4] = {'L', 'O', 'H', 'M'};
constexpr std::uint32_t kModelVersion = 1;

// Rounds trained parameters through float32 so the model equals its own
// serialized form bit for bit.
void round_f32(Matrix& m) { m = m.cast<float>().cast<double>(); }
void round_f32(Vector& v) { v = v.cast<float>().cast<double>(); }

bool same(const Matrix& a, const Matrix& b) {
    return a.rows() == b.rows() && a.cols() == b.cols() &&
           (a.array() == b.array()).all();
}

bool same(const Vector& a, const Vector& b) {
    return a.size() == b.size() && (a.array() == b.array()).all();
}

// Builds the rotation that sends PCA component i to output row perm[i].
Matrix permuted_rotation(const Matrix& eigenvectors,
                         const std::vector<int>& perm) {
    const Eigen::Index d = eigenvectors.cols();
    Matrix rot = Matrix::Zero(d, d);
    for (Eigen::Index i = 0; i < d; ++i)
        rot.row(perm[static_cast<std::size_t>(i)]) =
            eigenvectors.col(i).transpose();
    return rot;
}

}  // namespace

void LohParams::validate() const {
    if (d < 2 || d % 2 != 0) throw InputError("d must be even and >= 2");
    if (m < 2 || m % 2 != 0) throw InputError("m must be even and >= 2");
    if ((d / 2) % (m / 2) != 0)
        throw InputError("d/2 must be divisible by m/2");
    if (K < 1) throw InputError("K must be >= 1");
    if (k < 1) throw InputError("k must be >= 1");
    if (k > 65536) throw InputError("k must be <= 65536 (fine codes are 16-bit)");
    if (kmeans_iters < 1) throw InputError("kmeans_iters must be >= 1");
}

bool LohModel::operator==(const LohModel& other) const {
    if (params != other.params) return false;
    if (!same(global_mean, other.global_mean) ||
        !same(global_rotation, other.global_rotation))
        return false;
    for (int j = 0; j < 2; ++j) {
        if (!same(coarse_codebooks[j].centroids,
                  other.coarse_codebooks[j].centroids))
            return false;
        if (local_rotations[j].size() != other.local_rotations[j].size())
            return false;
        for (std::size_t i = 0; i < local_rotations[j].size(); ++i)
            if (!same(local_rotations[j][i], other.local_rotations[j][i]))
                return false;
    }
    if (subquantizers.size() != other.subquantizers.size()) return false;
    for (std::size_t j = 0; j < subquantizers.size(); ++j)
        if (!same(subquantizers[j].centroids, other.subquantizers[j].centroids))
            return false;
    return true;
}

LohModel train(const Matrix& data, const LohParams& params,
               const TrainOptions& options) {
    params.validate();
    if (data.cols() != params.d)
        throw InputError("training data has dimension " +
                         std::to_string(data.cols()) + ", expected " +
                         std::to_string(params.d));
    const Eigen::Index n = data.rows();
    if (n < params.K || n < params.k)
        throw InputError("training needs at least max(K, k) points");

    const int d = params.d;
    const int half = d / 2;

    LohModel model;
    model.params = params;

    // 1. Global PCA, then split components into two equal-variance halves.
    {
        PcaBasis basis = pca(data);
        Allocation alloc = eigenvalue_allocation(basis.eigenvalues, 2, half);
        model.global_mean = basis.mean;
        model.global_rotation = permuted_rotation(basis.eigenvectors,
                                                  alloc.permutation);
        round_f32(model.global_mean);
        round_f32(model.global_rotation);
    }

    Matrix rotated = (data.rowwise() - model.global_mean.transpose()) *
                     model.global_rotation.transpose();

    // 2. One coarse codebook per half.
    std::vector<int> assign[2];
    for (int j = 0; j < 2; ++j) {
        KmeansResult km =
            kmeans(rotated.middleCols(j * half, half), params.K,
                   params.kmeans_iters, params.seed + 1 + j, options.threads);
        round_f32(km.codebook.centroids);
        model.coarse_codebooks[j] = std::move(km.codebook);
        assign[j] = std::move(km.assignments);
    }

    // 3. Per-cluster residual rotations, variance-balanced across the m/2
    //    sub-quantizer slices of the half. Clusters with fewer than two
    //    members keep the identity.
    for (int j = 0; j < 2; ++j) {
        model.local_rotations[j].assign(params.K,
                                        Matrix::Identity(half, half));
        if (!options.local_rotations) continue;
        for (int i = 0; i < params.K; ++i) {
            Eigen::Index members = 0;
            for (Eigen::Index p = 0; p < n; ++p)
                if (assign[j][static_cast<std::size_t>(p)] == i) ++members;
            if (members < 2) continue;
            Matrix residuals(members, half);
            Eigen::Index row = 0;
            for (Eigen::Index p = 0; p < n; ++p)
                if (assign[j][static_cast<std::size_t>(p)] == i)
                    residuals.row(row++) =
                        rotated.row(p).segment(j * half, half) -
                        model.coarse_codebooks[j].centroids.row(i);
            PcaBasis basis = pca(residuals);
            Allocation alloc = eigenvalue_allocation(basis.eigenvalues,
                                                     params.m / 2, d / params.m);
            Matrix rot = permuted_rotation(basis.eigenvectors,
                                           alloc.permutation);
            round_f32(rot);
            model.local_rotations[j][static_cast<std::size_t>(i)] =
                std::move(rot);
        }
    }

    // 4. Pool every locally rotated residual and train the m global
    //    sub-quantizers over the pooled set.
    Matrix pooled(n, d);
    for (Eigen::Index p = 0; p < n; ++p) {
        for (int j = 0; j < 2; ++j) {
            const int ci = assign[j][static_cast<std::size_t>(p)];
            Vector res = rotated.row(p).segment(j * half, half).transpose() -
                         model.coarse_codebooks[j]
                             .centroids.row(ci)
                             .transpose();
            pooled.row(p).segment(j * half, half) =
                (model.local_rotations[j][static_cast<std::size_t>(ci)] * res)
                    .transpose();
        }
    }
    model.subquantizers =
        train_subquantizers(pooled, params.m, params.k, params.kmeans_iters,
                            params.seed + 3, options.threads);
    for (auto& sq : model.subquantizers) round_f32(sq.centroids);

    return model;
}

Vector rotated_residual(const LohModel& model, const Vector& x,
                        const CoarseCodes& coarse) {
    const LohParams& p = model.params;
    if (x.size() != p.d)
        throw InputError("vector has dimension " + std::to_string(x.size()) +
                         ", expected " + std::to_string(p.d));
    if (coarse.c1 >= static_cast<std::uint32_t>(p.K) ||
        coarse.c2 >= static_cast<std::uint32_t>(p.K))
        throw InputError("coarse code out of range");
    const int half = p.d / 2;
    Vector xt = model.global_rotation * (x - model.global_mean);
    Vector r(p.d);
    const std::uint32_t c[2] = {coarse.c1, coarse.c2};
    for (int j = 0; j < 2; ++j) {
        Vector res = xt.segment(j * half, half) -
                     model.coarse_codebooks[j].centroids.row(c[j]).transpose();
        r.segment(j * half, half) = model.local_rotations[j][c[j]] * res;
    }
    return r;
}

EncodedPoint encode(const LohModel& model, const Vector& x, DocId id) {
    const LohParams& p = model.params;
    if (x.size() != p.d)
        throw InputError("vector has dimension " + std::to_string(x.size()) +
                         ", expected " + std::to_string(p.d));
    const int half = p.d / 2;
    Vector xt = model.global_rotation * (x - model.global_mean);

    EncodedPoint out;
    out.id = id;
    out.coarse.c1 = static_cast<std::uint32_t>(
        quantize_subvector(xt.head(half), model.coarse_codebooks[0]));
    out.coarse.c2 = static_cast<std::uint32_t>(
        quantize_subvector(xt.tail(half), model.coarse_codebooks[1]));

    Vector r = rotated_residual(model, x, out.coarse);
    const int sub = p.d / p.m;
    out.fine.f.resize(static_cast<std::size_t>(p.m));
    for (int j = 0; j < p.m; ++j)
        out.fine.f[static_cast<std::size_t>(j)] = static_cast<std::uint16_t>(
            quantize_subvector(r.segment(j * sub, sub),
                               model.subquantizers[static_cast<std::size_t>(j)]));
    return out;
}

std::vector<EncodedPoint> encode_all(const LohModel& model, const Matrix& data,
                                     int threads) {
    if (data.cols() != model.params.d)
        throw InputError("data has dimension " + std::to_string(data.cols()) +
                         ", expected " + std::to_string(model.params.d));
    std::vector<EncodedPoint> out(static_cast<std::size_t>(data.rows()));
    parallel_chunks(out.size(), 1024, threads,
                    [&](std::size_t, std::size_t begin, std::size_t end) {
                        for (std::size_t i = begin; i < end; ++i)
                            out[i] = encode(model,
                                            data.row(static_cast<Eigen::Index>(i))
                                                .transpose(),
                                            static_cast<DocId>(i));
                    });
    return out;
}

std::vector<LohCode> flatten(const EncodedPoint& p) {
    const std::size_t m = p.fine.size();
    std::vector<LohCode> codes(m);
    for (std::size_t j = 0; j < m; ++j) {
        codes[j].coarse = j < m / 2 ? p.coarse.c1 : p.coarse.c2;
        codes[j].position = static_cast<std::uint32_t>(j);
        codes[j].fine = p.fine[j];
    }
    return codes;
}

EncodedPoint unflatten(std::span<const LohCode> codes, DocId id) {
    const std::size_t m = codes.size();
    if (m < 2 || m % 2 != 0)
        throw InputError("code count must be even and >= 2");
    EncodedPoint p;
    p.id = id;
    p.fine.f.assign(m, 0);
    std::vector<bool> seen(m, false);
    bool have[2] = {false, false};
    std::uint32_t coarse[2] = {0, 0};
    for (const LohCode& c : codes) {
        if (c.position >= m) throw InputError("code position out of range");
        if (seen[c.position]) throw InputError("duplicate code position");
        seen[c.position] = true;
        p.fine.f[c.position] = static_cast<std::uint16_t>(c.fine);
        const int hj = c.position < m / 2 ? 0 : 1;
        if (have[hj] && coarse[hj] != c.coarse)
            throw InputError("inconsistent coarse code within a half");
        have[hj] = true;
        coarse[hj] = c.coarse;
    }
    p.coarse.c1 = coarse[0];
    p.coarse.c2 = coarse[1];
    return p;
}

int loh_similarity(const EncodedPoint& a, const EncodedPoint& b) {
    const std::size_t m = a.fine.size();
    if (m != b.fine.size())
        throw InputError("points have different code lengths");
    int matches = 0;
    for (std::size_t j = 0; j < m; ++j) {
        const bool shared = j < m / 2 ? a.coarse.c1 == b.coarse.c1
                                      : a.coarse.c2 == b.coarse.c2;
        if (shared && a.fine[j] == b.fine[j]) ++matches;
    }
    return matches;
}

double total_quantization_distortion(const LohModel& model, const Matrix& data,
                                     int threads) {
    if (data.cols() != model.params.d)
        throw InputError("data has dimension " + std::to_string(data.cols()) +
                         ", expected " + std::to_string(model.params.d));
    const std::size_t n = static_cast<std::size_t>(data.rows());
    const std::size_t chunk = 1024;
    std::vector<double> partial(num_chunks_for(n, chunk), 0.0);
    parallel_chunks(n, chunk, threads,
                    [&](std::size_t ci, std::size_t begin, std::size_t end) {
                        double sum = 0.0;
                        for (std::size_t i = begin; i < end; ++i) {
                            Vector x =
                                data.row(static_cast<Eigen::Index>(i)).transpose();
                            EncodedPoint p = encode(model, x);
                            Vector r = rotated_residual(model, x, p.coarse);
                            sum += adc_distance(r, p.fine, model.subquantizers);
                        }
                        partial[ci] = sum;
                    });
    double total = 0.0;
    for (double s : partial) total += s;  // fixed combine order
    return total;
}

void save_model(const LohModel& model, std::ostream& out) {
    const LohParams& p = model.params;
    wire::put_bytes(out, kModelMagic, sizeof kModelMagic);
    wire::put<std::uint32_t>(out, kModelVersion);
    wire::put<std::uint32_t>(out, static_cast<std::uint32_t>(p.d));
    wire::put<std::uint32_t>(out, static_cast<std::uint32_t>(p.K));
    wire::put<std::uint32_t>(out, static_cast<std::uint32_t>(p.m));
    wire::put<std::uint32_t>(out, static_cast<std::uint32_t>(p.k));
    wire::put<std::uint32_t>(out, static_cast<std::uint32_t>(p.kmeans_iters));
    wire::put<std::uint64_t>(out, p.seed);
    wire::put_vector_f32(out, model.global_mean);
    wire::put_matrix_f32(out, model.global_rotation);
    for (int j = 0; j < 2; ++j)
        wire::put_matrix_f32(out, model.coarse_codebooks[j].centroids);
    for (int j = 0; j < 2; ++j)
        for (const Matrix& rot : model.local_rotations[j])
            wire::put_matrix_f32(out, rot);
    for (const Codebook& sq : model.subquantizers)
        wire::put_matrix_f32(out, sq.centroids);
}

void save_model(const LohModel& model, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot open for writing: " + path);
    save_model(model, out);
    out.flush();
    if (!out) throw Error("write failed: " + path);
}

LohModel load_model(std::istream& in) {
    char magic[4];
    wire::take_bytes(in, magic, sizeof magic, "magic");
    if (std::memcmp(magic, kModelMagic, sizeof magic) != 0)
        throw FormatError("bad magic, expected \"LOHM\"");
    const auto version = wire::take<std::uint32_t>(in, "format version");
    if (version != kModelVersion)
        throw FormatError("unsupported model format version " +
                          std::to_string(version));

    LohModel model;
    LohParams& p = model.params;
    p.d = wire::take_int_field(in, "d");
    p.K = wire::take_int_field(in, "K");
    p.m = wire::take_int_field(in, "m");
    p.k = wire::take_int_field(in, "k");
    p.kmeans_iters = wire::take_int_field(in, "kmeans_iters");
    p.seed = wire::take<std::uint64_t>(in, "seed");
    try {
        p.validate();
    } catch (const InputError& e) {
        throw FormatError(std::string("invalid model parameters: ") + e.what());
    }

    const int half = p.d / 2;
    model.global_mean = wire::take_vector_f32(in, p.d, "global mean");
    model.global_rotation =
        wire::take_matrix_f32(in, p.d, p.d, "global rotation");
    for (int j = 0; j < 2; ++j)
        model.coarse_codebooks[j].centroids =
            wire::take_matrix_f32(in, p.K, half, "coarse codebook");
    for (int j = 0; j < 2; ++j) {
        model.local_rotations[j].resize(static_cast<std::size_t>(p.K));
        for (int i = 0; i < p.K; ++i)
            model.local_rotations[j][static_cast<std::size_t>(i)] =
                wire::take_matrix_f32(in, half, half, "local rotation");
    }
    model.subquantizers.resize(static_cast<std::size_t>(p.m));
    for (int j = 0; j < p.m; ++j)
        model.subquantizers[static_cast<std::size_t>(j)].centroids =
            wire::take_matrix_f32(in, p.k, p.d / p.m, "sub-quantizer");
    return model;
}

LohModel load_model(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open: " + path);
    LohModel model = load_model(in);
    in.peek();
    if (!in.eof()) throw FormatError("trailing bytes after model data");
    return model;
}

}  // namespace loh
