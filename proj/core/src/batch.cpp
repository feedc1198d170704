#include "loh/batch.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "loh/error.hpp"
#include "loh/model.hpp"
#include "loh/parallel.hpp"

namespace loh {
namespace {

constexpr std::size_t kMapChunk = 4096;

std::uint64_t parse_field(std::string_view field, std::uint64_t max_value,
                          std::size_t line, const char* what) {
    std::uint64_t value = 0;
    const auto [end, ec] =
        std::from_chars(field.data(), field.data() + field.size(), value);
    if (ec != std::errc() || end != field.data() + field.size())
        throw InputError("line " + std::to_string(line) + ": bad " + what +
                         " '" + std::string(field) + "'");
    if (value > max_value)
        throw InputError("line " + std::to_string(line) + ": " + what +
                         " out of range");
    return value;
}

}  // namespace

void QuerySet::validate() const {
    if (members.empty()) throw InputError("query set must be non-empty");
    std::unordered_set<DocId> ids;
    for (const EncodedPoint& p : members)
        if (!ids.insert(p.id).second)
            throw InputError("duplicate member id " + std::to_string(p.id) +
                             " in query set " + std::to_string(set_id));
}

std::vector<FlatRecord> flatten_query_set(const QuerySet& set) {
    set.validate();
    std::vector<FlatRecord> records;
    records.reserve(set.members.size() * (set.members.empty()
                                              ? 0
                                              : set.members[0].fine.size()));
    for (const EncodedPoint& p : set.members)
        for (const LohCode& code : flatten(p))
            records.push_back(FlatRecord{set.set_id, p.id, code});
    return records;
}

std::vector<FlatRecord> flatten_documents(const std::vector<EncodedPoint>& docs) {
    std::vector<FlatRecord> records;
    for (const EncodedPoint& p : docs)
        for (const LohCode& code : flatten(p))
            records.push_back(FlatRecord{p.id, p.id, code});
    return records;
}

void write_flat_records(const std::vector<FlatRecord>& records,
                        std::ostream& out) {
    for (const FlatRecord& r : records)
        out << r.owner << '\t' << r.member << '\t' << r.code.coarse << '\t'
            << r.code.position << '\t' << r.code.fine << '\n';
    if (!out) throw Error("write failed");
}

void write_flat_records(const std::vector<FlatRecord>& records,
                        const std::string& path) {
    std::ofstream out(path, std::ios::binary);  // keep LF line endings
    if (!out) throw InputError("cannot open for writing: " + path);
    write_flat_records(records, out);
}

std::vector<FlatRecord> read_flat_records(std::istream& in) {
    std::vector<FlatRecord> records;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        std::string_view rest = line;
        std::string_view fields[5];
        for (int f = 0; f < 5; ++f) {
            const std::size_t tab = rest.find('\t');
            if (f < 4) {
                if (tab == std::string_view::npos)
                    throw InputError("line " + std::to_string(lineno) +
                                     ": expected 5 tab-separated fields");
                fields[f] = rest.substr(0, tab);
                rest = rest.substr(tab + 1);
            } else {
                if (tab != std::string_view::npos)
                    throw InputError("line " + std::to_string(lineno) +
                                     ": expected 5 tab-separated fields");
                fields[f] = rest;
            }
        }
        FlatRecord r;
        r.owner = parse_field(fields[0], ~0ull, lineno, "owner id");
        r.member = parse_field(fields[1], ~0ull, lineno, "member id");
        r.code.coarse = static_cast<std::uint32_t>(
            parse_field(fields[2], 0xffffffffull, lineno, "coarse code"));
        r.code.position = static_cast<std::uint32_t>(
            parse_field(fields[3], 0xffffull, lineno, "position"));
        r.code.fine = static_cast<std::uint32_t>(
            parse_field(fields[4], 0xffffull, lineno, "fine code"));
        records.push_back(r);
    }
    return records;
}

std::vector<FlatRecord> read_flat_records(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open: " + path);
    try {
        return read_flat_records(in);
    } catch (const InputError& e) {
        throw InputError(path + ": " + e.what());
    }
}

std::vector<Row> run_stages(std::vector<Row> input,
                            const std::vector<Stage>& plan, int parallelism) {
    if (parallelism < 1) throw InputError("parallelism must be >= 1");
    std::vector<Row> rows = std::move(input);
    for (const Stage& stage : plan) {
        try {
            // Map. Per-chunk outputs are concatenated in chunk order, so the
            // emission sequence does not depend on the worker count.
            std::vector<std::vector<std::pair<Row, Row>>> chunk_out(
                num_chunks_for(rows.size(), kMapChunk));
            parallel_chunks(rows.size(), kMapChunk, parallelism,
                            [&](std::size_t ci, std::size_t begin,
                                std::size_t end) {
                                auto& out = chunk_out[ci];
                                for (std::size_t i = begin; i < end; ++i)
                                    for (auto& kv : stage.map(rows[i]))
                                        out.push_back(std::move(kv));
                            });
            std::vector<std::pair<Row, Row>> emitted;
            for (auto& chunk : chunk_out)
                for (auto& kv : chunk) emitted.push_back(std::move(kv));

            // Shuffle: total order on keys, stable so values keep emission
            // order within a key.
            std::stable_sort(
                emitted.begin(), emitted.end(),
                [](const auto& a, const auto& b) { return a.first < b.first; });

            // Group boundaries.
            std::vector<std::pair<std::size_t, std::size_t>> groups;
            for (std::size_t i = 0; i < emitted.size();) {
                std::size_t j = i + 1;
                while (j < emitted.size() && emitted[j].first == emitted[i].first)
                    ++j;
                groups.emplace_back(i, j);
                i = j;
            }

            // Reduce each group; group outputs are concatenated in key order.
            std::vector<std::vector<Row>> group_out(groups.size());
            parallel_chunks(
                groups.size(), 64, parallelism,
                [&](std::size_t, std::size_t begin, std::size_t end) {
                    std::vector<Row> values;
                    for (std::size_t g = begin; g < end; ++g) {
                        const auto [lo, hi] = groups[g];
                        values.clear();
                        values.reserve(hi - lo);
                        for (std::size_t i = lo; i < hi; ++i)
                            values.push_back(std::move(emitted[i].second));
                        group_out[g] = stage.reduce(emitted[lo].first, values);
                    }
                });

            rows.clear();
            for (auto& out : group_out)
                for (auto& row : out) rows.push_back(std::move(row));
        } catch (const std::exception& e) {
            throw Error("stage '" + stage.name + "' failed: " + e.what());
        }
    }
    return rows;
}

PooledScores pool(const std::map<DocId, std::map<DocId, double>>& per_member_scores,
                  PoolMode mode, std::uint64_t set_id) {
    if (mode != PoolMode::kSum && mode != PoolMode::kMax)
        throw InputError("unknown pool mode");
    std::map<DocId, double> combined;
    for (const auto& [member, scores] : per_member_scores) {
        (void)member;
        for (const auto& [doc, score] : scores) {
            auto [it, inserted] = combined.emplace(doc, score);
            if (inserted) continue;
            if (mode == PoolMode::kSum)
                it->second += score;
            else
                it->second = std::max(it->second, score);
        }
    }
    PooledScores pooled;
    pooled.set_id = set_id;
    pooled.entries.assign(combined.begin(), combined.end());
    std::sort(pooled.entries.begin(), pooled.entries.end(),
              [](const auto& a, const auto& b) {
                  if (a.second != b.second) return a.second > b.second;
                  return a.first < b.first;
              });
    return pooled;
}

Stoplist build_stoplist_from_records(const std::vector<FlatRecord>& documents,
                                     int min_count, int max_count) {
    if (min_count > max_count)
        throw InputError("min_count must be <= max_count");
    std::unordered_map<LohCode, std::int64_t, LohCodeHash> freq;
    for (const FlatRecord& r : documents) ++freq[r.code];
    Stoplist stoplist;
    stoplist.min_count = min_count;
    stoplist.max_count = max_count;
    for (const auto& [code, count] : freq)
        if (count < min_count || count > max_count) stoplist.banned.insert(code);
    return stoplist;
}

std::vector<PooledScores> batch_search(const std::vector<FlatRecord>& queries,
                                       const std::vector<FlatRecord>& documents,
                                       int parallelism,
                                       std::optional<std::size_t> top_n,
                                       const Stoplist* stoplist) {
    // Tagged input rows: {tag, owner, member, packed triplet}. Queries come
    // before documents, so reducers see query values first within a key.
    const auto keep = [&](const FlatRecord& r) {
        return !stoplist || !stoplist->contains(r.code);
    };
    std::vector<Row> rows;
    rows.reserve(queries.size() + documents.size());
    for (const FlatRecord& r : queries)
        if (keep(r)) rows.push_back(Row{0, r.owner, r.member, r.code.packed()});
    for (const FlatRecord& r : documents)
        if (keep(r)) rows.push_back(Row{1, r.owner, r.member, r.code.packed()});

    Stage join;
    join.name = "join";
    join.map = [](const Row& row) {
        return std::vector<std::pair<Row, Row>>{
            {Row{row[3]}, Row{row[0], row[1], row[2]}}};
    };
    join.reduce = [](const Row&, const std::vector<Row>& values) {
        std::vector<Row> out;
        std::vector<std::pair<std::uint64_t, std::uint64_t>> query_side;
        for (const Row& v : values)
            if (v[0] == 0) query_side.emplace_back(v[1], v[2]);
        for (const Row& v : values) {
            if (v[0] != 1) continue;
            for (const auto& [set, member] : query_side)
                out.push_back(Row{set, member, v[1]});
        }
        return out;
    };

    Stage count;
    count.name = "group-count";
    count.map = [](const Row& row) {
        return std::vector<std::pair<Row, Row>>{{Row{row[0], row[2]}, Row{}}};
    };
    count.reduce = [](const Row& key, const std::vector<Row>& values) {
        return std::vector<Row>{Row{key[0], key[1], values.size()}};
    };

    const std::vector<Row> counted =
        run_stages(std::move(rows), {join, count}, parallelism);

    // Rows arrive keyed (set asc, doc asc); regroup per set and order
    // entries by count descending, doc ascending.
    std::vector<PooledScores> out;
    for (std::size_t i = 0; i < counted.size();) {
        std::size_t j = i;
        while (j < counted.size() && counted[j][0] == counted[i][0]) ++j;
        PooledScores scores;
        scores.set_id = counted[i][0];
        scores.entries.reserve(j - i);
        for (std::size_t r = i; r < j; ++r)
            scores.entries.emplace_back(counted[r][1],
                                        static_cast<double>(counted[r][2]));
        std::sort(scores.entries.begin(), scores.entries.end(),
                  [](const auto& a, const auto& b) {
                      if (a.second != b.second) return a.second > b.second;
                      return a.first < b.first;
                  });
        if (top_n && scores.entries.size() > *top_n)
            scores.entries.resize(*top_n);
        out.push_back(std::move(scores));
        i = j;
    }
    return out;
}

}  // namespace loh
