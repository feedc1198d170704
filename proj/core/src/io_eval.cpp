#include "loh/io_eval.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iostream>
#include <random>

#include "loh/error.hpp"
#include "loh/parallel.hpp"
#include "loh/rng.hpp"
#include "wire.hpp"

namespace loh {
namespace {

std::size_t element_size(ElementKind kind) {
    switch (kind) {
        case ElementKind::kFloat32: return 4;
        case ElementKind::kUint8: return 1;
        case ElementKind::kInt32: return 4;
    }
    throw InputError("unknown element kind");
}

double decode_element(ElementKind kind, const unsigned char* p) {
    switch (kind) {
        case ElementKind::kFloat32: {
            std::uint32_t u = 0;
            std::memcpy(&u, p, 4);
            return static_cast<double>(std::bit_cast<float>(u));
        }
        case ElementKind::kUint8:
            return static_cast<double>(*p);
        case ElementKind::kInt32: {
            std::int32_t v = 0;
            std::memcpy(&v, p, 4);
            return static_cast<double>(v);
        }
    }
    throw InputError("unknown element kind");
}

void encode_element(ElementKind kind, double v, unsigned char* p) {
    switch (kind) {
        case ElementKind::kFloat32: {
            const std::uint32_t u = std::bit_cast<std::uint32_t>(
                static_cast<float>(v));
            std::memcpy(p, &u, 4);
            return;
        }
        case ElementKind::kUint8: {
            if (v < 0 || v > 255 || v != std::floor(v))
                throw InputError("value " + std::to_string(v) +
                                 " is not representable as uint8");
            *p = static_cast<unsigned char>(v);
            return;
        }
        case ElementKind::kInt32: {
            if (v < -2147483648.0 || v > 2147483647.0 || v != std::floor(v))
                throw InputError("value " + std::to_string(v) +
                                 " is not representable as int32");
            const std::int32_t i = static_cast<std::int32_t>(v);
            std::memcpy(p, &i, 4);
            return;
        }
    }
    throw InputError("unknown element kind");
}

}  // namespace

ElementKind kind_from_extension(const std::string& path) {
    const std::size_t dot = path.rfind('.');
    const std::string ext = dot == std::string::npos ? "" : path.substr(dot);
    if (ext == ".fvecs") return ElementKind::kFloat32;
    if (ext == ".bvecs") return ElementKind::kUint8;
    if (ext == ".ivecs") return ElementKind::kInt32;
    throw InputError("cannot infer vector format from '" + path +
                     "' (expected .fvecs, .bvecs, or .ivecs)");
}

Matrix read_vectors(const std::string& path, ElementKind kind) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open: " + path);

    const std::size_t esize = element_size(kind);
    std::vector<std::vector<double>> rows;
    std::uint64_t offset = 0;
    Eigen::Index dim = -1;
    std::vector<unsigned char> buf;
    for (;;) {
        std::int32_t header = 0;
        in.read(reinterpret_cast<char*>(&header), 4);
        if (in.gcount() == 0) break;  // clean end of file
        if (in.gcount() != 4)
            throw FormatError(path + ": truncated record header at byte offset " +
                              std::to_string(offset));
        if (header < 1)
            throw FormatError(path + ": bad dimension " +
                              std::to_string(header) + " at byte offset " +
                              std::to_string(offset));
        if (dim == -1) dim = header;
        if (header != dim)
            throw FormatError(path + ": dimension " + std::to_string(header) +
                              " does not match first record's " +
                              std::to_string(dim) + " at byte offset " +
                              std::to_string(offset));
        offset += 4;
        buf.resize(static_cast<std::size_t>(dim) * esize);
        in.read(reinterpret_cast<char*>(buf.data()),
                static_cast<std::streamsize>(buf.size()));
        if (static_cast<std::size_t>(in.gcount()) != buf.size())
            throw FormatError(path + ": truncated record payload at byte offset " +
                              std::to_string(offset));
        std::vector<double> row(static_cast<std::size_t>(dim));
        for (Eigen::Index j = 0; j < dim; ++j)
            row[static_cast<std::size_t>(j)] =
                decode_element(kind, buf.data() + static_cast<std::size_t>(j) * esize);
        rows.push_back(std::move(row));
        offset += buf.size();
    }

    Matrix data(static_cast<Eigen::Index>(rows.size()), dim == -1 ? 0 : dim);
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (Eigen::Index j = 0; j < data.cols(); ++j)
            data(static_cast<Eigen::Index>(i), j) =
                rows[i][static_cast<std::size_t>(j)];
    return data;
}

Matrix read_vectors(const std::string& path) {
    return read_vectors(path, kind_from_extension(path));
}

void write_vectors(const std::string& path, const Matrix& data,
                   ElementKind kind) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot open for writing: " + path);
    const std::size_t esize = element_size(kind);
    const std::int32_t dim = static_cast<std::int32_t>(data.cols());
    std::vector<unsigned char> buf(static_cast<std::size_t>(data.cols()) * esize);
    for (Eigen::Index i = 0; i < data.rows(); ++i) {
        wire::put<std::int32_t>(out, dim);
        for (Eigen::Index j = 0; j < data.cols(); ++j)
            encode_element(kind, data(i, j),
                           buf.data() + static_cast<std::size_t>(j) * esize);
        wire::put_bytes(out, buf.data(), buf.size());
    }
    out.flush();
    if (!out) throw Error("write failed: " + path);
}

void write_vectors(const std::string& path, const Matrix& data) {
    write_vectors(path, data, kind_from_extension(path));
}

GroundTruth brute_force_knn(const Matrix& queries, const Matrix& database,
                            int R, int threads) {
    if (queries.cols() != database.cols())
        throw InputError("query dimension " + std::to_string(queries.cols()) +
                         " does not match database dimension " +
                         std::to_string(database.cols()));
    if (R < 1) throw InputError("R must be >= 1");
    if (R > database.rows()) {
        std::cerr << "warning: R=" << R << " clamped to database size "
                  << database.rows() << "\n";
        R = static_cast<int>(database.rows());
    }

    GroundTruth truth;
    truth.neighbors.resize(static_cast<std::size_t>(queries.rows()));
    parallel_chunks(
        truth.neighbors.size(), 16, threads,
        [&](std::size_t, std::size_t begin, std::size_t end) {
            std::vector<std::pair<double, DocId>> dists(
                static_cast<std::size_t>(database.rows()));
            for (std::size_t q = begin; q < end; ++q) {
                for (Eigen::Index i = 0; i < database.rows(); ++i)
                    dists[static_cast<std::size_t>(i)] = {
                        (database.row(i) -
                         queries.row(static_cast<Eigen::Index>(q)))
                            .squaredNorm(),
                        static_cast<DocId>(i)};
                std::partial_sort(dists.begin(), dists.begin() + R, dists.end());
                auto& out = truth.neighbors[q];
                out.resize(static_cast<std::size_t>(R));
                for (int r = 0; r < R; ++r)
                    out[static_cast<std::size_t>(r)] =
                        dists[static_cast<std::size_t>(r)].second;
            }
        });
    return truth;
}

std::vector<std::pair<int, double>> recall_at_r(
    const std::vector<std::vector<DocId>>& ranked, const GroundTruth& truth,
    const std::vector<int>& r_values) {
    if (ranked.size() != truth.neighbors.size())
        throw InputError("ranked list count does not match ground truth");
    for (const auto& n : truth.neighbors)
        if (n.empty()) throw InputError("ground truth query with no neighbors");

    std::vector<std::pair<int, double>> table;
    table.reserve(r_values.size());
    for (int R : r_values) {
        if (R < 1) throw InputError("R must be >= 1");
        std::size_t found = 0;
        for (std::size_t q = 0; q < ranked.size(); ++q) {
            const DocId nn = truth.neighbors[q][0];
            const auto& list = ranked[q];
            const std::size_t top =
                std::min(list.size(), static_cast<std::size_t>(R));
            for (std::size_t r = 0; r < top; ++r)
                if (list[r] == nn) {
                    ++found;
                    break;
                }
        }
        table.emplace_back(
            R, ranked.empty() ? 0.0
                              : static_cast<double>(found) /
                                    static_cast<double>(ranked.size()));
    }
    return table;
}

PrCurve pr_curve(const std::vector<double>& scores,
                 const std::vector<bool>& labels,
                 const std::vector<double>& thresholds) {
    if (scores.size() != labels.size())
        throw InputError("one label is required per scored pair");
    std::size_t positives = 0;
    for (bool l : labels) positives += l ? 1 : 0;

    PrCurve curve;
    curve.no_positives = positives == 0;
    curve.points.reserve(thresholds.size());
    for (double t : thresholds) {
        std::size_t tp = 0, fp = 0;
        for (std::size_t i = 0; i < scores.size(); ++i) {
            if (scores[i] > t) {
                if (labels[i]) ++tp;
                else ++fp;
            }
        }
        PrPoint point;
        point.threshold = t;
        point.precision =
            tp + fp == 0 ? 1.0
                         : static_cast<double>(tp) / static_cast<double>(tp + fp);
        point.recall = positives == 0
                           ? 0.0
                           : static_cast<double>(tp) /
                                 static_cast<double>(positives);
        curve.points.push_back(point);
    }
    return curve;
}

BitCodes lsh_codes(const Matrix& vectors, int bits, std::uint64_t seed) {
    if (bits < 1 || bits > 8192)
        throw InputError("bits must be in [1, 8192]");
    const Eigen::Index d = vectors.cols();
    if (d < 1) throw InputError("vectors must have at least one dimension");

    Matrix projections(bits, d);
    std::mt19937_64 gen(seed);
    for (int b = 0; b < bits; ++b)
        for (Eigen::Index j = 0; j < d; ++j) projections(b, j) = normal01(gen);

    BitCodes codes;
    codes.bits = bits;
    codes.count = static_cast<std::size_t>(vectors.rows());
    codes.words.assign(codes.count * codes.words_per_code(), 0);
    for (Eigen::Index i = 0; i < vectors.rows(); ++i) {
        const Vector p = projections * vectors.row(i).transpose();
        for (int b = 0; b < bits; ++b)
            if (p[b] >= 0)
                codes.words[static_cast<std::size_t>(i) * codes.words_per_code() +
                            static_cast<std::size_t>(b) / 64] |=
                    1ull << (b % 64);
    }
    return codes;
}

BitCodes pca_e_codes(const Matrix& vectors, const PcaBasis& basis, int bits) {
    if (bits < 1 || bits > 8192)
        throw InputError("bits must be in [1, 8192]");
    if (bits > basis.eigenvectors.cols())
        throw InputError("bits must not exceed the basis dimension");
    if (vectors.cols() != basis.mean.size())
        throw InputError("vector dimension does not match the basis");

    BitCodes codes;
    codes.bits = bits;
    codes.count = static_cast<std::size_t>(vectors.rows());
    codes.words.assign(codes.count * codes.words_per_code(), 0);
    for (Eigen::Index i = 0; i < vectors.rows(); ++i) {
        const Vector centered = vectors.row(i).transpose() - basis.mean;
        for (int b = 0; b < bits; ++b)
            if (basis.eigenvectors.col(b).dot(centered) >= 0)
                codes.words[static_cast<std::size_t>(i) * codes.words_per_code() +
                            static_cast<std::size_t>(b) / 64] |=
                    1ull << (b % 64);
    }
    return codes;
}

int hamming(std::span<const std::uint64_t> a, std::span<const std::uint64_t> b) {
    if (a.size() != b.size()) throw InputError("codes have different widths");
    int distance = 0;
    for (std::size_t w = 0; w < a.size(); ++w)
        distance += std::popcount(a[w] ^ b[w]);
    return distance;
}

}  // namespace loh
