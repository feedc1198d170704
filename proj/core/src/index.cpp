#include "loh/index.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <unordered_set>

#include "loh/error.hpp"
#include "wire.hpp"

namespace loh {
namespace {

constexpr char kIndexMagic[4] = {'L', 'O', 'H', 'I'};
constexpr std::uint32_t kIndexVersion = 1;

void validate_point(const LohParams& p, const EncodedPoint& pt) {
    if (pt.coarse.c1 >= static_cast<std::uint32_t>(p.K) ||
        pt.coarse.c2 >= static_cast<std::uint32_t>(p.K))
        throw InputError("point " + std::to_string(pt.id) +
                         ": coarse code out of range");
    if (pt.fine.size() != static_cast<std::size_t>(p.m))
        throw InputError("point " + std::to_string(pt.id) +
                         ": expected " + std::to_string(p.m) + " fine codes");
    for (std::size_t j = 0; j < pt.fine.size(); ++j)
        if (pt.fine[j] >= p.k)
            throw InputError("point " + std::to_string(pt.id) +
                             ": fine code out of range");
}

// Squared distances from one half of the rotated query to every coarse
// centroid of that half.
std::vector<double> coarse_distances(const Vector& half,
                                     const Codebook& codebook) {
    std::vector<double> d(static_cast<std::size_t>(codebook.count()));
    for (int c = 0; c < codebook.count(); ++c)
        d[static_cast<std::size_t>(c)] =
            (codebook.centroids.row(c).transpose() - half).squaredNorm();
    return d;
}

}  // namespace

MultiIndex build_index(const LohModel& model,
                       const std::vector<EncodedPoint>& points) {
    MultiIndex index;
    index.model = model;
    index.total_count = points.size();
    std::unordered_set<DocId> ids;
    ids.reserve(points.size());
    for (const EncodedPoint& pt : points) {
        validate_point(model.params, pt);
        if (!ids.insert(pt.id).second)
            throw InputError("duplicate id " + std::to_string(pt.id));
        index.cells[MultiIndex::cell_key(pt.coarse)].push_back(pt);
    }
    return index;
}

MultiSequence::MultiSequence(std::vector<double> dists1,
                             std::vector<double> dists2)
    : dists1_(std::move(dists1)), dists2_(std::move(dists2)) {
    const auto rank_order = [](const std::vector<double>& d) {
        std::vector<std::uint32_t> order(d.size());
        std::iota(order.begin(), order.end(), 0u);
        std::sort(order.begin(), order.end(),
                  [&](std::uint32_t a, std::uint32_t b) {
                      if (d[a] != d[b]) return d[a] < d[b];
                      return a < b;
                  });
        return order;
    };
    order1_ = rank_order(dists1_);
    order2_ = rank_order(dists2_);
    pushed_.assign(order1_.size() * order2_.size(), false);
    if (!order1_.empty() && !order2_.empty()) push_rank(0, 0);
}

void MultiSequence::push_rank(std::uint32_t r1, std::uint32_t r2) {
    const std::size_t at = static_cast<std::size_t>(r1) * order2_.size() + r2;
    if (pushed_[at]) return;
    pushed_[at] = true;
    const std::uint32_t c1 = order1_[r1];
    const std::uint32_t c2 = order2_[r2];
    frontier_.push(Entry{dists1_[c1] + dists2_[c2], c1, c2, r1, r2});
}

CellCandidate MultiSequence::next() {
    if (frontier_.empty()) throw Error("multi-sequence stream exhausted");
    const Entry top = frontier_.top();
    frontier_.pop();
    if (top.r1 + 1 < order1_.size())
        push_rank(top.r1 + 1, top.r2);
    if (top.r2 + 1 < order2_.size())
        push_rank(top.r1, top.r2 + 1);
    return CellCandidate{{top.c1, top.c2}, top.d};
}

double cell_weight(double d_c, const SearchParams& params) {
    if (d_c < 0) throw InputError("d_c must be nonnegative");
    if (params.beta < 0) throw InputError("beta must be nonnegative");
    if (!params.tau.has_value() || *params.tau <= 0)
        throw InputError("tau must be positive");
    return params.beta * std::exp(-d_c / *params.tau);
}

std::vector<RankedHit> search(const MultiIndex& index, const Vector& query,
                              const SearchParams& params) {
    const LohModel& model = index.model;
    const LohParams& p = model.params;
    if (query.size() != p.d)
        throw InputError("query has dimension " + std::to_string(query.size()) +
                         ", expected " + std::to_string(p.d));
    if (params.T < 1) throw InputError("T must be >= 1");
    if (params.beta < 0) throw InputError("beta must be nonnegative");
    if (params.tau.has_value() && *params.tau <= 0)
        throw InputError("tau must be positive");

    const int half = p.d / 2;
    const int sub = p.d / p.m;
    const Vector xt = model.global_rotation * (query - model.global_mean);

    // Pass 1: enumerate cells in multi-sequence order until the point quota
    // is met. Every emitted cell, populated or not, counts as visited.
    MultiSequence stream(coarse_distances(xt.head(half), model.coarse_codebooks[0]),
                         coarse_distances(xt.tail(half), model.coarse_codebooks[1]));
    std::vector<CellCandidate> visited;
    std::uint64_t evaluated = 0;
    while (!stream.done() && evaluated < params.T) {
        CellCandidate cand = stream.next();
        visited.push_back(cand);
        auto it = index.cells.find(MultiIndex::cell_key(cand.cell));
        if (it != index.cells.end()) evaluated += it->second.size();
    }

    SearchParams weight_params = params;
    if (!weight_params.tau.has_value()) {
        double sum = 0.0;
        for (const CellCandidate& c : visited) sum += c.d_c;
        const double mean = visited.empty() ? 0.0 : sum / double(visited.size());
        weight_params.tau = mean > 0 ? mean : 1.0;
    }

    // Per-half fine codes of the query, conditioned on that half's coarse
    // assignment; lazily filled per distinct centroid index.
    std::vector<std::vector<std::uint16_t>> half_fine[2];
    half_fine[0].resize(static_cast<std::size_t>(p.K));
    half_fine[1].resize(static_cast<std::size_t>(p.K));
    const auto fine_for = [&](int hj, std::uint32_t c)
        -> const std::vector<std::uint16_t>& {
        auto& slot = half_fine[hj][c];
        if (slot.empty()) {
            Vector res = xt.segment(hj * half, half) -
                         model.coarse_codebooks[hj].centroids.row(c).transpose();
            Vector rot = model.local_rotations[hj][c] * res;
            const int base = hj * (p.m / 2);
            slot.resize(static_cast<std::size_t>(p.m / 2));
            for (int j = 0; j < p.m / 2; ++j)
                slot[static_cast<std::size_t>(j)] = static_cast<std::uint16_t>(
                    quantize_subvector(rot.segment(j * sub, sub),
                                       model.subquantizers[static_cast<std::size_t>(base + j)]));
        }
        return slot;
    };

    // Pass 2: score every point of every visited cell.
    std::vector<RankedHit> hits;
    for (const CellCandidate& cand : visited) {
        auto it = index.cells.find(MultiIndex::cell_key(cand.cell));
        if (it == index.cells.end()) continue;
        const double w = cell_weight(cand.d_c, weight_params);
        const auto& fine1 = fine_for(0, cand.cell.c1);
        const auto& fine2 = fine_for(1, cand.cell.c2);
        for (const EncodedPoint& pt : it->second) {
            int matches = 0;
            for (int j = 0; j < p.m / 2; ++j)
                if (pt.fine[static_cast<std::size_t>(j)] ==
                    fine1[static_cast<std::size_t>(j)])
                    ++matches;
            for (int j = 0; j < p.m / 2; ++j)
                if (pt.fine[static_cast<std::size_t>(p.m / 2 + j)] ==
                    fine2[static_cast<std::size_t>(j)])
                    ++matches;
            hits.push_back(RankedHit{pt.id, w + matches, matches, cand.cell});
        }
    }

    std::sort(hits.begin(), hits.end(), [](const RankedHit& a, const RankedHit& b) {
        if (a.score != b.score) return a.score > b.score;
        if (a.matches != b.matches) return a.matches > b.matches;
        return a.id < b.id;
    });
    return hits;
}

void save_index(const MultiIndex& index, std::ostream& out) {
    const LohParams& p = index.model.params;
    const bool wide = p.k > 256;
    wire::put_bytes(out, kIndexMagic, sizeof kIndexMagic);
    wire::put<std::uint32_t>(out, kIndexVersion);
    wire::put<std::uint32_t>(out, static_cast<std::uint32_t>(p.d));
    wire::put<std::uint32_t>(out, static_cast<std::uint32_t>(p.K));
    wire::put<std::uint32_t>(out, static_cast<std::uint32_t>(p.m));
    wire::put<std::uint32_t>(out, static_cast<std::uint32_t>(p.k));
    wire::put<std::uint64_t>(out, index.total_count);
    wire::put<std::uint64_t>(out, index.cells.size());
    const std::size_t record_size =
        8 + static_cast<std::size_t>(p.m) * (wide ? 2 : 1);
    std::uint64_t offset = 0;
    for (const auto& [key, list] : index.cells) {
        wire::put<std::uint64_t>(out, key);
        wire::put<std::uint64_t>(out, offset);
        wire::put<std::uint64_t>(out, list.size());
        offset += list.size() * record_size;
    }
    for (const auto& [key, list] : index.cells) {
        for (const EncodedPoint& pt : list) {
            wire::put<std::uint64_t>(out, pt.id);
            for (std::size_t j = 0; j < pt.fine.size(); ++j) {
                if (wide)
                    wire::put<std::uint16_t>(out, pt.fine[j]);
                else
                    wire::put<std::uint8_t>(out,
                                            static_cast<std::uint8_t>(pt.fine[j]));
            }
        }
    }
}

void save_index(const MultiIndex& index, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot open for writing: " + path);
    save_index(index, out);
    out.flush();
    if (!out) throw Error("write failed: " + path);
}

MultiIndex load_index(const std::string& path, const LohModel& model) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open: " + path);

    char magic[4];
    wire::take_bytes(in, magic, sizeof magic, "magic");
    if (std::memcmp(magic, kIndexMagic, sizeof magic) != 0)
        throw FormatError("bad magic, expected \"LOHI\"");
    const auto version = wire::take<std::uint32_t>(in, "format version");
    if (version != kIndexVersion)
        throw FormatError("unsupported index format version " +
                          std::to_string(version));

    const int d = wire::take_int_field(in, "d");
    const int K = wire::take_int_field(in, "K");
    const int m = wire::take_int_field(in, "m");
    const int k = wire::take_int_field(in, "k");
    const LohParams& p = model.params;
    if (d != p.d || K != p.K || m != p.m || k != p.k)
        throw InputError("index was built with different parameters (d=" +
                         std::to_string(d) + " K=" + std::to_string(K) +
                         " m=" + std::to_string(m) + " k=" + std::to_string(k) +
                         ")");

    MultiIndex index;
    index.model = model;
    index.total_count = wire::take<std::uint64_t>(in, "total count");
    const auto cell_count = wire::take<std::uint64_t>(in, "cell count");

    struct DirEntry {
        std::uint64_t key, offset, count;
    };
    std::vector<DirEntry> dir(cell_count);
    for (auto& e : dir) {
        e.key = wire::take<std::uint64_t>(in, "cell directory");
        e.offset = wire::take<std::uint64_t>(in, "cell directory");
        e.count = wire::take<std::uint64_t>(in, "cell directory");
    }

    const bool wide = k > 256;
    const std::uint64_t record_size =
        8 + static_cast<std::uint64_t>(m) * (wide ? 2 : 1);
    std::uint64_t expected_offset = 0;
    std::uint64_t points = 0;
    for (const DirEntry& e : dir) {
        const CoarseCodes cc = MultiIndex::cell_codes(e.key);
        if (cc.c1 >= static_cast<std::uint32_t>(K) ||
            cc.c2 >= static_cast<std::uint32_t>(K))
            throw FormatError("cell key out of range");
        if (e.offset != expected_offset)
            throw FormatError("cell directory offsets are inconsistent");
        expected_offset += e.count * record_size;

        auto& list = index.cells[e.key];
        list.resize(e.count);
        for (std::uint64_t i = 0; i < e.count; ++i) {
            EncodedPoint& pt = list[i];
            pt.id = wire::take<std::uint64_t>(in, "point record");
            pt.coarse = cc;
            pt.fine.f.resize(static_cast<std::size_t>(m));
            for (int j = 0; j < m; ++j) {
                const std::uint16_t f =
                    wide ? wire::take<std::uint16_t>(in, "point record")
                         : wire::take<std::uint8_t>(in, "point record");
                if (f >= k) throw FormatError("fine code out of range");
                pt.fine.f[static_cast<std::size_t>(j)] = f;
            }
        }
        points += e.count;
    }
    if (points != index.total_count)
        throw FormatError("cell counts do not sum to the stored total");
    in.peek();
    if (!in.eof()) throw FormatError("trailing bytes after index data");
    return index;
}

}  // namespace loh
