#include "loh/cluster.hpp"

#include <algorithm>
#include <fstream>
#include <iostream>
#include <unordered_map>

#include "loh/error.hpp"
#include "loh/model.hpp"

namespace loh {
namespace {

// Triplet -> positions (input indices) of the documents carrying it, in
// input order, keyed and ordered by the packed triplet value.
std::vector<std::pair<std::uint64_t, std::vector<std::uint32_t>>>
group_by_triplet(const std::vector<EncodedPoint>& docs,
                 const Stoplist* stoplist) {
    if (docs.size() > 0xffffffffull)
        throw InputError("too many documents");
    std::unordered_map<std::uint64_t, std::vector<std::uint32_t>> groups;
    for (std::size_t i = 0; i < docs.size(); ++i)
        for (const LohCode& code : flatten(docs[i])) {
            if (stoplist && stoplist->contains(code)) continue;
            groups[code.packed()].push_back(static_cast<std::uint32_t>(i));
        }
    std::vector<std::pair<std::uint64_t, std::vector<std::uint32_t>>> ordered(
        groups.begin(), groups.end());
    std::sort(ordered.begin(), ordered.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    return ordered;
}

}  // namespace

Stoplist build_stoplist(const std::vector<EncodedPoint>& docs, int min_count,
                        int max_count) {
    if (min_count > max_count)
        throw InputError("min_count must be <= max_count");
    std::unordered_map<LohCode, std::int64_t, LohCodeHash> freq;
    for (const EncodedPoint& p : docs)
        for (const LohCode& code : flatten(p)) ++freq[code];
    Stoplist stoplist;
    stoplist.min_count = min_count;
    stoplist.max_count = max_count;
    for (const auto& [code, count] : freq)
        if (count < min_count || count > max_count) stoplist.banned.insert(code);
    return stoplist;
}

MatchGraph build_match_graph(const std::vector<EncodedPoint>& docs, int t,
                             const Stoplist* stoplist, std::size_t max_group) {
    if (t < 0) throw InputError("threshold must be >= 0");

    MatchGraph graph;
    graph.nodes.reserve(docs.size());
    for (const EncodedPoint& p : docs) graph.nodes.push_back(p.id);
    std::sort(graph.nodes.begin(), graph.nodes.end());
    if (std::adjacent_find(graph.nodes.begin(), graph.nodes.end()) !=
        graph.nodes.end())
        throw InputError("duplicate document id");

    // Count every unordered pair co-occurring in a triplet group; a pair
    // sharing g triplets is counted g times, which is exactly its collision
    // count over the non-banned triplets.
    std::unordered_map<std::uint64_t, int> pair_counts;
    for (const auto& [packed, members] : group_by_triplet(docs, stoplist)) {
        if (members.size() > max_group) {
            const LohCode code{static_cast<std::uint32_t>(packed >> 32),
                               static_cast<std::uint32_t>((packed >> 16) & 0xffff),
                               static_cast<std::uint32_t>(packed & 0xffff)};
            std::cerr << "warning: skipping triplet (" << code.coarse << ","
                      << code.position << "," << code.fine << ") shared by "
                      << members.size() << " documents (max group " << max_group
                      << ")\n";
            continue;
        }
        for (std::size_t a = 0; a < members.size(); ++a)
            for (std::size_t b = a + 1; b < members.size(); ++b) {
                const std::uint64_t key =
                    (static_cast<std::uint64_t>(members[a]) << 32) | members[b];
                ++pair_counts[key];
            }
    }

    for (const auto& [key, count] : pair_counts) {
        if (count <= t) continue;
        DocId x = docs[key >> 32].id;
        DocId y = docs[key & 0xffffffffull].id;
        if (y < x) std::swap(x, y);
        graph.edges.emplace_back(x, y);
    }
    std::sort(graph.edges.begin(), graph.edges.end());
    return graph;
}

Clustering connected_components(
    const std::vector<DocId>& nodes,
    const std::vector<std::pair<DocId, DocId>>& edges) {
    std::vector<DocId> sorted = nodes;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
        throw InputError("duplicate node id");

    std::unordered_map<DocId, std::size_t> slot;
    slot.reserve(sorted.size());
    for (std::size_t i = 0; i < sorted.size(); ++i) slot.emplace(sorted[i], i);

    UnionFind uf(sorted.size());
    for (const auto& [a, b] : edges) {
        const auto ia = slot.find(a);
        const auto ib = slot.find(b);
        if (ia == slot.end() || ib == slot.end())
            throw InputError("edge references unknown node");
        uf.unite(ia->second, ib->second);
    }

    // Nodes are scanned in ascending id order, so each component's members
    // come out sorted and components are ordered by smallest member.
    Clustering clustering;
    std::unordered_map<std::size_t, std::size_t> root_to_component;
    for (std::size_t i = 0; i < sorted.size(); ++i) {
        const std::size_t root = uf.find(i);
        auto [it, inserted] =
            root_to_component.emplace(root, clustering.components.size());
        if (inserted) clustering.components.emplace_back();
        clustering.components[it->second].push_back(sorted[i]);
    }
    return clustering;
}

Clustering loh_cluster(const std::vector<EncodedPoint>& docs, int t,
                       const Stoplist* stoplist, std::size_t max_group) {
    MatchGraph graph = build_match_graph(docs, t, stoplist, max_group);
    return connected_components(graph.nodes, graph.edges);
}

DedupResult dedup(const std::vector<EncodedPoint>& hits, int t,
                  std::size_t max_points) {
    if (hits.size() > max_points)
        throw InputError("dedup is for small sets (got " +
                         std::to_string(hits.size()) + " points, bound " +
                         std::to_string(max_points) +
                         "); use loh_cluster for full corpora");
    DedupResult result;
    result.clustering = loh_cluster(hits, t);

    std::unordered_map<DocId, std::size_t> component_of;
    for (std::size_t c = 0; c < result.clustering.components.size(); ++c)
        for (DocId id : result.clustering.components[c]) component_of[id] = c;

    std::vector<bool> seen(result.clustering.components.size(), false);
    for (const EncodedPoint& hit : hits) {
        const std::size_t c = component_of.at(hit.id);
        if (seen[c]) continue;
        seen[c] = true;
        result.representatives.push_back(hit.id);
    }
    return result;
}

void write_clusters(const Clustering& clustering, std::ostream& out) {
    for (const auto& component : clustering.components) {
        if (component.empty()) continue;
        const DocId label = component.front();
        for (DocId id : component) out << label << '\t' << id << '\n';
    }
    if (!out) throw Error("write failed");
}

void write_clusters(const Clustering& clustering, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot open for writing: " + path);
    write_clusters(clustering, out);
}

}  // namespace loh
