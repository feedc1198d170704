#pragma once

#include <cstdint>
#include <iosfwd>
#include <limits>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "loh/codes.hpp"

namespace loh {

// Disjoint-set forest with path compression and union by size.
class UnionFind {
  public:
    explicit UnionFind(std::size_t n) : parent_(n), size_(n, 1) {
        for (std::size_t i = 0; i < n; ++i) parent_[i] = i;
    }

    std::size_t find(std::size_t x) {
        while (parent_[x] != x) {
            parent_[x] = parent_[parent_[x]];
            x = parent_[x];
        }
        return x;
    }

    void unite(std::size_t a, std::size_t b) {
        a = find(a);
        b = find(b);
        if (a == b) return;
        if (size_[a] < size_[b]) std::swap(a, b);
        parent_[b] = a;
        size_[a] += size_[b];
    }

  private:
    std::vector<std::size_t> parent_;
    std::vector<std::size_t> size_;
};

// Triplets banned from grouping: those whose corpus frequency falls outside
// [min_count, max_count].
struct Stoplist {
    std::unordered_set<LohCode, LohCodeHash> banned;
    int min_count = 0;
    int max_count = std::numeric_limits<int>::max();

    bool contains(const LohCode& code) const {
        return banned.find(code) != banned.end();
    }
};

Stoplist build_stoplist(const std::vector<EncodedPoint>& docs, int min_count,
                        int max_count);

// Document pairs whose triplet co-occurrence count exceeds the threshold.
struct MatchGraph {
    std::vector<DocId> nodes;                    // sorted ascending
    std::vector<std::pair<DocId, DocId>> edges;  // first < second, sorted
};

// Groups documents by non-banned triplet, counts unordered pairs per group,
// and keeps pairs with count strictly greater than t. Triplet groups larger
// than max_group are skipped with a warning on stderr.
MatchGraph build_match_graph(const std::vector<EncodedPoint>& docs, int t,
                             const Stoplist* stoplist = nullptr,
                             std::size_t max_group = 10000);

// Partition of nodes into disjoint clusters. Each component is sorted
// ascending; components are ordered by their smallest member, which serves
// as the cluster's canonical label.
struct Clustering {
    std::vector<std::vector<DocId>> components;

    friend bool operator==(const Clustering&, const Clustering&) = default;
};

Clustering connected_components(const std::vector<DocId>& nodes,
                                const std::vector<std::pair<DocId, DocId>>& edges);

// Full clustering pass: match graph at threshold t (strict >), then
// connected components. Singletons stay as size-1 clusters.
Clustering loh_cluster(const std::vector<EncodedPoint>& docs, int t,
                       const Stoplist* stoplist = nullptr,
                       std::size_t max_group = 10000);

// Small-set deduplication for ranked hit lists.
struct DedupResult {
    Clustering clustering;
    // One id per cluster: the first member in input order, listed in the
    // order their clusters first appear in the input.
    std::vector<DocId> representatives;
};

DedupResult dedup(const std::vector<EncodedPoint>& hits, int t,
                  std::size_t max_points = 100000);

// TSV: cluster_id \t doc_id, sorted by (cluster_id, doc_id); the cluster id
// is the smallest member id.
void write_clusters(const Clustering& clustering, std::ostream& out);
void write_clusters(const Clustering& clustering, const std::string& path);

}  // namespace loh
