// Command-line front end: train, encode, index, search, batch, cluster,
// dedup, eval, truth. Every command is a thin adapter over one library
// operation; outputs are byte-deterministic for a fixed seed and any
// --threads value.

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "loh/batch.hpp"
#include "loh/cluster.hpp"
#include "loh/error.hpp"
#include "loh/index.hpp"
#include "loh/io_eval.hpp"
#include "loh/model.hpp"
#include "loh/parallel.hpp"

namespace {

std::string fmt_double(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

std::ofstream open_output(const std::string& path) {
    std::ofstream out(path, std::ios::binary);  // keep LF line endings
    if (!out) throw loh::InputError("cannot open for writing: " + path);
    return out;
}

std::uint64_t parse_u64(std::string_view field, std::size_t line,
                        const std::string& path, const char* what) {
    std::uint64_t value = 0;
    const auto [end, ec] =
        std::from_chars(field.data(), field.data() + field.size(), value);
    if (ec != std::errc() || end != field.data() + field.size())
        throw loh::InputError(path + ": line " + std::to_string(line) +
                              ": bad " + what + " '" + std::string(field) + "'");
    return value;
}

// Reconstructs encoded points from a flat-record file. Points keep the
// order in which their member id first appears; all points must carry the
// same number of codes (expected_m, or the first member's count when 0).
std::vector<loh::EncodedPoint> read_encoded_points(const std::string& path,
                                                   std::size_t expected_m) {
    const std::vector<loh::FlatRecord> records = loh::read_flat_records(path);
    std::vector<std::uint64_t> order;
    std::map<std::uint64_t, std::vector<loh::LohCode>> codes;
    for (const loh::FlatRecord& r : records) {
        auto [it, inserted] = codes.try_emplace(r.member);
        if (inserted) order.push_back(r.member);
        it->second.push_back(r.code);
    }
    std::vector<loh::EncodedPoint> points;
    points.reserve(order.size());
    for (std::uint64_t member : order) {
        const auto& member_codes = codes[member];
        if (expected_m == 0) expected_m = member_codes.size();
        if (member_codes.size() != expected_m)
            throw loh::InputError(path + ": member " + std::to_string(member) +
                                  " has " + std::to_string(member_codes.size()) +
                                  " codes, expected " +
                                  std::to_string(expected_m));
        try {
            points.push_back(loh::unflatten(member_codes, member));
        } catch (const loh::InputError& e) {
            throw loh::InputError(path + ": member " + std::to_string(member) +
                                  ": " + e.what());
        }
    }
    return points;
}

struct CommonOpts {
    std::uint64_t seed = 0;
    int threads = 1;
};

void add_common(CLI::App* sub, CommonOpts& opts) {
    sub->add_option("--seed", opts.seed, "RNG seed for stochastic stages")
        ->capture_default_str();
    sub->add_option("--threads", opts.threads,
                    "Worker threads (never changes output bytes)")
        ->envname("LOH_THREADS")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
}

// --- train -----------------------------------------------------------------

struct TrainOpts {
    CommonOpts common;
    std::string vectors, output;
    int K = 16, m = 8, k = 16, kmeans_iters = 25;
    bool no_local_rotations = false;
};

void run_train(const TrainOpts& o) {
    const loh::Matrix data = loh::read_vectors(o.vectors);
    loh::LohParams params;
    params.d = static_cast<int>(data.cols());
    params.K = o.K;
    params.m = o.m;
    params.k = o.k;
    params.kmeans_iters = o.kmeans_iters;
    params.seed = o.common.seed;
    loh::TrainOptions train_opts;
    train_opts.local_rotations = !o.no_local_rotations;
    train_opts.threads = o.common.threads;
    const loh::LohModel model = loh::train(data, params, train_opts);
    loh::save_model(model, o.output);
}

// --- encode ----------------------------------------------------------------

struct EncodeOpts {
    CommonOpts common;
    std::string model, vectors, output, owner_map;
    std::uint64_t id_base = 0;
};

std::map<std::uint64_t, std::uint64_t> read_owner_map(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw loh::InputError("cannot open: " + path);
    std::map<std::uint64_t, std::uint64_t> owners;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        const std::size_t tab = line.find('\t');
        if (tab == std::string::npos)
            throw loh::InputError(path + ": line " + std::to_string(lineno) +
                                  ": expected 'member<TAB>owner'");
        const std::uint64_t member =
            parse_u64(std::string_view(line).substr(0, tab), lineno, path,
                      "member id");
        const std::uint64_t owner =
            parse_u64(std::string_view(line).substr(tab + 1), lineno, path,
                      "owner id");
        if (!owners.emplace(member, owner).second)
            throw loh::InputError(path + ": line " + std::to_string(lineno) +
                                  ": duplicate member id");
    }
    return owners;
}

void run_encode(const EncodeOpts& o) {
    const loh::LohModel model = loh::load_model(o.model);
    const loh::Matrix data = loh::read_vectors(o.vectors);
    std::vector<loh::EncodedPoint> points =
        loh::encode_all(model, data, o.common.threads);
    for (loh::EncodedPoint& p : points) p.id += o.id_base;

    std::vector<loh::FlatRecord> records;
    records.reserve(points.size() * static_cast<std::size_t>(model.params.m));
    if (o.owner_map.empty()) {
        for (const loh::EncodedPoint& p : points)
            for (const loh::LohCode& code : loh::flatten(p))
                records.push_back(loh::FlatRecord{p.id, p.id, code});
    } else {
        const auto owners = read_owner_map(o.owner_map);
        for (const loh::EncodedPoint& p : points) {
            const auto it = owners.find(p.id);
            if (it == owners.end())
                throw loh::InputError(o.owner_map + ": member " +
                                      std::to_string(p.id) + " has no owner");
            for (const loh::LohCode& code : loh::flatten(p))
                records.push_back(loh::FlatRecord{it->second, p.id, code});
        }
    }
    loh::write_flat_records(records, o.output);
}

// --- index -----------------------------------------------------------------

struct IndexOpts {
    CommonOpts common;
    std::string model, codes, output;
};

void run_index(const IndexOpts& o) {
    const loh::LohModel model = loh::load_model(o.model);
    const auto points = read_encoded_points(
        o.codes, static_cast<std::size_t>(model.params.m));
    const loh::MultiIndex index = loh::build_index(model, points);
    loh::save_index(index, o.output);
}

// --- search ----------------------------------------------------------------

struct SearchOpts {
    CommonOpts common;
    std::string model, index, queries, output;
    std::uint64_t quota = 1000;
    double beta = 1.0;
    std::optional<double> tau;
    std::optional<std::size_t> top;
};

void run_search(const SearchOpts& o) {
    const loh::LohModel model = loh::load_model(o.model);
    const loh::MultiIndex index = loh::load_index(o.index, model);
    const loh::Matrix queries = loh::read_vectors(o.queries);

    loh::SearchParams params;
    params.T = o.quota;
    params.beta = o.beta;
    params.tau = o.tau;

    const std::size_t nq = static_cast<std::size_t>(queries.rows());
    std::vector<std::string> blocks(nq);
    loh::parallel_chunks(nq, 16, o.common.threads,
                         [&](std::size_t, std::size_t begin, std::size_t end) {
                             for (std::size_t q = begin; q < end; ++q) {
                                 auto hits = loh::search(
                                     index,
                                     queries.row(static_cast<Eigen::Index>(q))
                                         .transpose(),
                                     params);
                                 if (o.top && hits.size() > *o.top)
                                     hits.resize(*o.top);
                                 std::string block;
                                 for (std::size_t r = 0; r < hits.size(); ++r) {
                                     const loh::RankedHit& h = hits[r];
                                     block += std::to_string(q);
                                     block += ',';
                                     block += std::to_string(r);
                                     block += ',';
                                     block += std::to_string(h.id);
                                     block += ',';
                                     block += fmt_double(h.score);
                                     block += ',';
                                     block += std::to_string(h.matches);
                                     block += ',';
                                     block += std::to_string(h.cell.c1);
                                     block += ',';
                                     block += std::to_string(h.cell.c2);
                                     block += '\n';
                                 }
                                 blocks[q] = std::move(block);
                             }
                         });

    std::ofstream out = open_output(o.output);
    out << "query_id,rank,doc_id,score,matches,c1,c2\n";
    for (const std::string& block : blocks) out << block;
    out.flush();
    if (!out) throw loh::Error("write failed: " + o.output);
}

// --- batch -----------------------------------------------------------------

struct BatchOpts {
    CommonOpts common;
    std::string queries, docs, output;
    std::optional<std::size_t> top;
    int stoplist_min = 0;
    int stoplist_max = std::numeric_limits<int>::max();
};

void run_batch(const BatchOpts& o) {
    const auto queries = loh::read_flat_records(o.queries);
    const auto docs = loh::read_flat_records(o.docs);
    const loh::Stoplist stoplist =
        loh::build_stoplist_from_records(docs, o.stoplist_min, o.stoplist_max);
    const auto pooled =
        loh::batch_search(queries, docs, o.common.threads, o.top, &stoplist);

    std::ofstream out = open_output(o.output);
    out << "set_id,doc_id,matches\n";
    for (const loh::PooledScores& scores : pooled)
        for (const auto& [doc, count] : scores.entries)
            out << scores.set_id << ',' << doc << ','
                << static_cast<std::uint64_t>(count) << '\n';
    out.flush();
    if (!out) throw loh::Error("write failed: " + o.output);
}

// --- cluster ---------------------------------------------------------------

struct ClusterOpts {
    CommonOpts common;
    std::string codes, output;
    int threshold = 3;
    int stoplist_min = 0;
    int stoplist_max = std::numeric_limits<int>::max();
    std::size_t max_group = 10000;
};

void run_cluster(const ClusterOpts& o) {
    const auto points = read_encoded_points(o.codes, 0);
    const loh::Stoplist stoplist =
        loh::build_stoplist(points, o.stoplist_min, o.stoplist_max);
    const loh::Clustering clustering =
        loh::loh_cluster(points, o.threshold, &stoplist, o.max_group);
    loh::write_clusters(clustering, o.output);
}

// --- dedup -----------------------------------------------------------------

struct DedupOpts {
    CommonOpts common;
    std::string codes, output;
    int threshold = 3;
    std::size_t max_points = 100000;
};

void run_dedup(const DedupOpts& o) {
    const auto points = read_encoded_points(o.codes, 0);
    const loh::DedupResult result =
        loh::dedup(points, o.threshold, o.max_points);

    std::map<loh::DocId, std::size_t> cluster_size;
    for (const auto& component : result.clustering.components)
        for (loh::DocId id : component) cluster_size[id] = component.size();

    std::ofstream out = open_output(o.output);
    for (loh::DocId rep : result.representatives)
        out << rep << '\t' << cluster_size.at(rep) << '\n';
    out.flush();
    if (!out) throw loh::Error("write failed: " + o.output);
}

// --- eval ------------------------------------------------------------------

struct EvalOpts {
    CommonOpts common;
    std::string hits, truth, output;
    std::vector<int> r_values = {1, 10, 100, 1000};
};

std::vector<std::vector<loh::DocId>> read_hits_csv(const std::string& path,
                                                   std::size_t num_queries) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw loh::InputError("cannot open: " + path);
    std::string line;
    std::size_t lineno = 0;
    if (!std::getline(in, line))
        throw loh::InputError(path + ": empty hits file");
    ++lineno;
    if (line.rfind("query_id,", 0) != 0)
        throw loh::InputError(path + ": missing hits CSV header");

    struct Hit {
        std::uint64_t query, rank, doc;
    };
    std::vector<Hit> hits;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        std::string_view rest = line;
        std::uint64_t fields[3];
        for (int f = 0; f < 3; ++f) {
            const std::size_t comma = rest.find(',');
            if (comma == std::string_view::npos)
                throw loh::InputError(path + ": line " + std::to_string(lineno) +
                                      ": expected query_id,rank,doc_id,...");
            fields[f] = parse_u64(rest.substr(0, comma), lineno, path, "field");
            rest = rest.substr(comma + 1);
        }
        hits.push_back(Hit{fields[0], fields[1], fields[2]});
    }

    std::stable_sort(hits.begin(), hits.end(), [](const Hit& a, const Hit& b) {
        if (a.query != b.query) return a.query < b.query;
        return a.rank < b.rank;
    });
    std::vector<std::vector<loh::DocId>> ranked(num_queries);
    for (const Hit& h : hits) {
        if (h.query >= num_queries)
            throw loh::InputError(path + ": query id " +
                                  std::to_string(h.query) +
                                  " out of range for the ground truth");
        ranked[h.query].push_back(h.doc);
    }
    return ranked;
}

loh::GroundTruth read_truth_ivecs(const std::string& path) {
    const loh::Matrix rows = loh::read_vectors(path, loh::ElementKind::kInt32);
    loh::GroundTruth truth;
    truth.neighbors.resize(static_cast<std::size_t>(rows.rows()));
    for (Eigen::Index q = 0; q < rows.rows(); ++q) {
        auto& list = truth.neighbors[static_cast<std::size_t>(q)];
        list.resize(static_cast<std::size_t>(rows.cols()));
        for (Eigen::Index r = 0; r < rows.cols(); ++r) {
            const double v = rows(q, r);
            if (v < 0)
                throw loh::FormatError(path + ": negative id in ground truth");
            list[static_cast<std::size_t>(r)] = static_cast<loh::DocId>(v);
        }
    }
    return truth;
}

void run_eval(const EvalOpts& o) {
    const loh::GroundTruth truth = read_truth_ivecs(o.truth);
    const auto ranked = read_hits_csv(o.hits, truth.neighbors.size());
    const auto table = loh::recall_at_r(ranked, truth, o.r_values);

    std::ofstream out = open_output(o.output);
    out << "R,recall\n";
    for (const auto& [R, recall] : table)
        out << R << ',' << fmt_double(recall) << '\n';
    out.flush();
    if (!out) throw loh::Error("write failed: " + o.output);
}

// --- truth -----------------------------------------------------------------

struct TruthOpts {
    CommonOpts common;
    std::string database, queries, output;
    int R = 100;
};

void run_truth(const TruthOpts& o) {
    const loh::Matrix database = loh::read_vectors(o.database);
    const loh::Matrix queries = loh::read_vectors(o.queries);
    const loh::GroundTruth truth =
        loh::brute_force_knn(queries, database, o.R, o.common.threads);

    loh::Matrix ids(static_cast<Eigen::Index>(truth.neighbors.size()),
                    truth.neighbors.empty()
                        ? 0
                        : static_cast<Eigen::Index>(truth.neighbors[0].size()));
    for (Eigen::Index q = 0; q < ids.rows(); ++q)
        for (Eigen::Index r = 0; r < ids.cols(); ++r) {
            const loh::DocId id =
                truth.neighbors[static_cast<std::size_t>(q)]
                               [static_cast<std::size_t>(r)];
            if (id > 0x7fffffffull)
                throw loh::InputError("id " + std::to_string(id) +
                                      " does not fit the ivecs ground-truth "
                                      "format");
            ids(q, r) = static_cast<double>(id);
        }
    loh::write_vectors(o.output, ids, loh::ElementKind::kInt32);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Locally optimized hashing: train, encode, index, search, "
                 "batch, cluster"};
    app.require_subcommand(1);
    app.set_config("--config", "",
                   "Read options from a config file (flags win over the file)");

    TrainOpts train_opts;
    auto* train = app.add_subcommand(
        "train", "Train a quantization model from a vector file");
    train->add_option("--vectors", train_opts.vectors, "Input .fvecs/.bvecs/.ivecs")
        ->required();
    train->add_option("--output", train_opts.output, "Output model file")
        ->required();
    train->add_option("-K,--coarse-centroids", train_opts.K,
                      "Coarse centroids per subspace half")
        ->capture_default_str();
    train->add_option("-m,--subspaces", train_opts.m,
                      "Fine subspaces (even)")
        ->capture_default_str();
    train->add_option("-k,--sub-centroids", train_opts.k,
                      "Centroids per fine subspace")
        ->capture_default_str();
    train->add_option("--kmeans-iters", train_opts.kmeans_iters,
                      "Max k-means iterations")
        ->capture_default_str();
    train->add_flag("--no-local-rotations", train_opts.no_local_rotations,
                    "Ablation: keep per-cluster rotations at identity");
    add_common(train, train_opts.common);

    EncodeOpts encode_opts;
    auto* encode = app.add_subcommand(
        "encode", "Encode vectors into flat hash-code records (TSV)");
    encode->add_option("--model", encode_opts.model, "Model file")->required();
    encode->add_option("--vectors", encode_opts.vectors, "Input vector file")
        ->required();
    encode->add_option("--output", encode_opts.output, "Output flat TSV")
        ->required();
    encode->add_option("--owner-map", encode_opts.owner_map,
                       "TSV member<TAB>owner mapping points to query sets");
    encode->add_option("--id-base", encode_opts.id_base,
                       "First assigned point id")
        ->capture_default_str();
    add_common(encode, encode_opts.common);

    IndexOpts index_opts;
    auto* index = app.add_subcommand(
        "index", "Build an inverted multi-index from encoded records");
    index->add_option("--model", index_opts.model, "Model file")->required();
    index->add_option("--codes", index_opts.codes, "Flat TSV of documents")
        ->required();
    index->add_option("--output", index_opts.output, "Output index file")
        ->required();
    add_common(index, index_opts.common);

    SearchOpts search_opts;
    auto* search = app.add_subcommand(
        "search", "Rank indexed documents for each query vector");
    search->add_option("--model", search_opts.model, "Model file")->required();
    search->add_option("--index", search_opts.index, "Index file")->required();
    search->add_option("--queries", search_opts.queries, "Query vector file")
        ->required();
    search->add_option("--output", search_opts.output, "Output CSV")
        ->required();
    search->add_option("-T,--quota", search_opts.quota,
                       "Stop once at least this many points were evaluated")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    search->add_option("--beta", search_opts.beta, "Cell weight gain")
        ->capture_default_str();
    search->add_option("--tau", search_opts.tau,
                       "Cell weight scale (default: mean distance over the "
                       "visited cells)");
    search->add_option("--top", search_opts.top, "Keep only the best N hits");
    add_common(search, search_opts.common);

    BatchOpts batch_opts;
    auto* batch = app.add_subcommand(
        "batch", "Join query-set and document records, count collisions");
    batch->add_option("--queries", batch_opts.queries, "Query flat TSV")
        ->required();
    batch->add_option("--docs", batch_opts.docs, "Document flat TSV")
        ->required();
    batch->add_option("--output", batch_opts.output, "Output CSV")->required();
    batch->add_option("--top", batch_opts.top, "Keep only the best N per set");
    batch->add_option("--stoplist-min", batch_opts.stoplist_min,
                      "Ban triplets seen fewer times than this in the docs")
        ->capture_default_str();
    batch->add_option("--stoplist-max", batch_opts.stoplist_max,
                      "Ban triplets seen more times than this in the docs");
    add_common(batch, batch_opts.common);

    ClusterOpts cluster_opts;
    auto* cluster = app.add_subcommand(
        "cluster", "Cluster documents by thresholded collision counts");
    cluster->add_option("--codes", cluster_opts.codes, "Flat TSV of documents")
        ->required();
    cluster->add_option("--output", cluster_opts.output, "Output clusters TSV")
        ->required();
    cluster->add_option("-t,--threshold", cluster_opts.threshold,
                        "Connect pairs with strictly more matches than this")
        ->capture_default_str();
    cluster->add_option("--stoplist-min", cluster_opts.stoplist_min,
                        "Ban triplets seen fewer times than this")
        ->capture_default_str();
    cluster->add_option("--stoplist-max", cluster_opts.stoplist_max,
                        "Ban triplets seen more times than this");
    cluster->add_option("--max-group", cluster_opts.max_group,
                        "Skip triplet groups larger than this")
        ->capture_default_str();
    add_common(cluster, cluster_opts.common);

    DedupOpts dedup_opts;
    auto* dedup = app.add_subcommand(
        "dedup", "Deduplicate a small hit list; prints one representative "
                 "per cluster");
    dedup->add_option("--codes", dedup_opts.codes, "Flat TSV of ranked hits")
        ->required();
    dedup->add_option("--output", dedup_opts.output,
                      "Output TSV: representative<TAB>cluster size")
        ->required();
    dedup->add_option("-t,--threshold", dedup_opts.threshold,
                      "Connect pairs with strictly more matches than this")
        ->capture_default_str();
    dedup->add_option("--max-points", dedup_opts.max_points,
                      "Refuse inputs larger than this")
        ->capture_default_str();
    add_common(dedup, dedup_opts.common);

    EvalOpts eval_opts;
    auto* eval = app.add_subcommand(
        "eval", "Recall of a search run against brute-force ground truth");
    eval->add_option("--hits", eval_opts.hits, "Search output CSV")->required();
    eval->add_option("--truth", eval_opts.truth, "Ground-truth .ivecs")
        ->required();
    eval->add_option("--output", eval_opts.output, "Output metrics CSV")
        ->required();
    eval->add_option("--r-values", eval_opts.r_values,
                     "Comma-separated recall depths")
        ->delimiter(',')
        ->capture_default_str();
    add_common(eval, eval_opts.common);

    TruthOpts truth_opts;
    auto* truth = app.add_subcommand(
        "truth", "Brute-force nearest neighbors as .ivecs ground truth");
    truth->add_option("--database", truth_opts.database, "Database vector file")
        ->required();
    truth->add_option("--queries", truth_opts.queries, "Query vector file")
        ->required();
    truth->add_option("--output", truth_opts.output, "Output .ivecs")
        ->required();
    truth->add_option("-R,--neighbors", truth_opts.R,
                      "Neighbors to keep per query")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    add_common(truth, truth_opts.common);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help and friends
        app.exit(e);
        return 2;
    }

    try {
        if (train->parsed()) run_train(train_opts);
        if (encode->parsed()) run_encode(encode_opts);
        if (index->parsed()) run_index(index_opts);
        if (search->parsed()) run_search(search_opts);
        if (batch->parsed()) run_batch(batch_opts);
        if (cluster->parsed()) run_cluster(cluster_opts);
        if (dedup->parsed()) run_dedup(dedup_opts);
        if (eval->parsed()) run_eval(eval_opts);
        if (truth->parsed()) run_truth(truth_opts);
    } catch (const std::exception& e) {
        std::cerr << "loh: error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
