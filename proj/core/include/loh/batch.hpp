#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "loh/cluster.hpp"
#include "loh/codes.hpp"

namespace loh {

// A group of already-encoded query vectors scored together (one user, one
// image group, ...).
struct QuerySet {
    std::uint64_t set_id = 0;
    std::vector<EncodedPoint> members;

    void validate() const;  // non-empty, unique member ids
};

// One row of the flattened-triplet pipeline: a query-set or document owner,
// the member that produced the triplet, and the triplet itself. Document
// streams carry owner == member == the document id.
struct FlatRecord {
    std::uint64_t owner = 0;
    std::uint64_t member = 0;
    LohCode code;

    friend bool operator==(const FlatRecord&, const FlatRecord&) = default;
};

std::vector<FlatRecord> flatten_query_set(const QuerySet& set);
std::vector<FlatRecord> flatten_documents(const std::vector<EncodedPoint>& docs);

// TSV: owner \t member \t coarse \t position \t fine, one record per line.
void write_flat_records(const std::vector<FlatRecord>& records,
                        std::ostream& out);
void write_flat_records(const std::vector<FlatRecord>& records,
                        const std::string& path);
std::vector<FlatRecord> read_flat_records(std::istream& in);
std::vector<FlatRecord> read_flat_records(const std::string& path);

// ---------------------------------------------------------------------------
// Deterministic local map/group/reduce runner. Each stage maps rows to
// (key, value) pairs, groups them by key in total key order (values keep
// map-emission order), and reduces one group at a time. Output is identical
// for any parallelism level.

using Row = std::vector<std::uint64_t>;

struct Stage {
    std::string name;
    std::function<std::vector<std::pair<Row, Row>>(const Row&)> map;
    std::function<std::vector<Row>(const Row& key, const std::vector<Row>& values)>
        reduce;
};

std::vector<Row> run_stages(std::vector<Row> input,
                            const std::vector<Stage>& plan, int parallelism);

// ---------------------------------------------------------------------------

// Ranked documents for one query set: entries sorted by score descending,
// ties by doc id ascending.
struct PooledScores {
    std::uint64_t set_id = 0;
    std::vector<std::pair<DocId, double>> entries;
};

enum class PoolMode { kSum, kMax };

// Combines per-member document scores into one ranking. Docs missing from a
// member's map contribute 0 to SUM and are skipped for MAX.
PooledScores pool(const std::map<DocId, std::map<DocId, double>>& per_member_scores,
                  PoolMode mode, std::uint64_t set_id = 0);

// Frequency stoplist computed over a document record stream (each record
// is one triplet occurrence).
Stoplist build_stoplist_from_records(const std::vector<FlatRecord>& documents,
                                     int min_count, int max_count);

// The flattened-triplet batch pipeline: join query and document records on
// the full triplet, group by (set, doc), count. Scores are unweighted
// collision counts, i.e. score(set, doc) = sum over members of the
// member/doc similarity. Output is ordered by set id ascending; entries per
// set by count descending, ties by doc id ascending. A stoplist drops
// banned triplets from both streams before the join, so it can only lower
// counts.
std::vector<PooledScores> batch_search(const std::vector<FlatRecord>& queries,
                                       const std::vector<FlatRecord>& documents,
                                       int parallelism = 1,
                                       std::optional<std::size_t> top_n = {},
                                       const Stoplist* stoplist = nullptr);

}  // namespace loh
