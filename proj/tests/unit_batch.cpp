#include <algorithm>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "fixtures.hpp"
#include "loh/batch.hpp"
#include "loh/error.hpp"
#include "oracles.hpp"

using loh::DocId;
using loh::EncodedPoint;
using loh::FlatRecord;
using loh::LohCode;
using loh::PooledScores;
using loh::PoolMode;
using loh::QuerySet;
using loh::Row;
using loh::Stage;

namespace {

EncodedPoint make_point(DocId id, std::uint32_t c1, std::uint32_t c2,
                        std::vector<std::uint16_t> fine) {
    EncodedPoint p;
    p.id = id;
    p.coarse = {c1, c2};
    p.fine.f = std::move(fine);
    return p;
}

std::map<std::pair<std::uint64_t, DocId>, long long> to_score_map(
    const std::vector<PooledScores>& pooled) {
    std::map<std::pair<std::uint64_t, DocId>, long long> out;
    for (const auto& set : pooled)
        for (const auto& [doc, score] : set.entries)
            out[{set.set_id, doc}] = static_cast<long long>(score);
    return out;
}

}  // namespace

TEST_CASE("query set validation") {
    QuerySet set;
    set.set_id = 1;
    CHECK_THROWS_AS(set.validate(), loh::InputError);

    set.members.push_back(make_point(1, 0, 0, {0, 0}));
    CHECK_NOTHROW(set.validate());

    set.members.push_back(make_point(1, 1, 1, {1, 1}));  // duplicate member id
    CHECK_THROWS_AS(set.validate(), loh::InputError);
}

TEST_CASE("flatten_query_set emits owner/member tagged triplets") {
    QuerySet set;
    set.set_id = 77;
    set.members.push_back(make_point(5, 7, 9, {1, 2, 3, 4}));
    const auto records = loh::flatten_query_set(set);
    REQUIRE(records.size() == 4);
    for (const auto& r : records) {
        CHECK(r.owner == 77);
        CHECK(r.member == 5);
    }
    CHECK(records[0].code == LohCode{7, 0, 1});
    CHECK(records[3].code == LohCode{9, 3, 4});

    const auto docs =
        loh::flatten_documents({make_point(5, 7, 9, {1, 2, 3, 4})});
    REQUIRE(docs.size() == 4);
    CHECK(docs[0].owner == 5);
    CHECK(docs[0].member == 5);
    CHECK(docs[0].code == records[0].code);
}

TEST_CASE("flat record TSV round trip") {
    const auto points = loh::testing::random_codes(40, 16, 8, 16, 3);
    std::vector<FlatRecord> records;
    for (std::size_t i = 0; i < points.size(); ++i) {
        QuerySet set;
        set.set_id = i % 5;
        set.members.push_back(points[i]);
        const auto flat = loh::flatten_query_set(set);
        records.insert(records.end(), flat.begin(), flat.end());
    }

    std::ostringstream out;
    loh::write_flat_records(records, out);
    std::istringstream in(out.str());
    const auto back = loh::read_flat_records(in);
    CHECK(back == records);

    // Lines end with LF only.
    CHECK(out.str().find('\r') == std::string::npos);
}

TEST_CASE("flat record reader reports the offending line") {
    const auto expect_line = [](const std::string& text, const char* needle) {
        std::istringstream in(text);
        try {
            loh::read_flat_records(in);
            FAIL("expected InputError for: ", text);
        } catch (const loh::InputError& e) {
            CHECK(std::string(e.what()).find(needle) != std::string::npos);
        }
    };

    expect_line("1\t2\t3\t4\n", "line 1");                 // missing field
    expect_line("1\t2\t3\t4\t5\n1\t2\tx\t4\t5\n", "line 2");  // non-numeric
    expect_line("1\t2\t3\t4\t5\t6\n", "line 1");            // extra field
    expect_line("1\t2\t3\t70000\t5\n", "line 1");           // position > u16
    expect_line("1\t2\t3\t4\t70000\n", "line 1");           // fine > u16
    expect_line("1\t2\t4294967296\t0\t5\n", "line 1");      // coarse > u32

    // Trailing CR (a CRLF file) is tolerated.
    std::istringstream crlf("1\t2\t3\t4\t5\r\n");
    const auto records = loh::read_flat_records(crlf);
    REQUIRE(records.size() == 1);
    CHECK(records[0].code == LohCode{3, 4, 5});
}

TEST_CASE("run_stages output is independent of parallelism") {
    // Map each x to key x%7, value x; reduce sums values per key.
    Stage stage;
    stage.name = "mod-sum";
    stage.map = [](const Row& row) {
        return std::vector<std::pair<Row, Row>>{
            {Row{row[0] % 7}, Row{row[0]}}};
    };
    stage.reduce = [](const Row& key, const std::vector<Row>& values) {
        std::uint64_t sum = 0;
        for (const auto& v : values) sum += v[0];
        return std::vector<Row>{Row{key[0], sum}};
    };

    std::vector<Row> input;
    for (std::uint64_t x = 0; x < 10000; ++x) input.push_back(Row{x * 37 % 991});

    const auto a = loh::run_stages(input, {stage}, 1);
    const auto b = loh::run_stages(input, {stage}, 8);
    CHECK(a == b);
    REQUIRE(a.size() == 7);
    // Keys come out in total order.
    for (std::size_t i = 1; i < a.size(); ++i) CHECK(a[i - 1][0] < a[i][0]);

    CHECK(loh::run_stages({}, {stage}, 4).empty());
    CHECK_THROWS_AS(loh::run_stages(input, {stage}, 0), loh::InputError);
}

TEST_CASE("run_stages preserves map-emission order within a group") {
    Stage stage;
    stage.name = "collect";
    stage.map = [](const Row& row) {
        return std::vector<std::pair<Row, Row>>{{Row{row[0]}, Row{row[1]}}};
    };
    stage.reduce = [](const Row& key, const std::vector<Row>& values) {
        std::vector<Row> out;
        for (const auto& v : values) out.push_back(Row{key[0], v[0]});
        return out;
    };

    // All rows share key 0; values must appear in input order because maps
    // are chunked in input order and concatenated chunk-by-chunk.
    std::vector<Row> input;
    for (std::uint64_t x = 0; x < 9000; ++x) input.push_back(Row{0, x});
    for (int parallelism : {1, 3, 8}) {
        const auto out = loh::run_stages(input, {stage}, parallelism);
        REQUIRE(out.size() == 9000);
        for (std::uint64_t x = 0; x < 9000; ++x)
            CHECK(out[static_cast<std::size_t>(x)] == Row{0, x});
    }
}

TEST_CASE("run_stages join stage reproduces a hand-computed fixture") {
    // Tagged rows: {stream, id, key}. The join keys rows by `key` and emits
    // every (left id, right id) pair per key.
    const std::vector<Row> input = {
        {0, 10, 100}, {0, 11, 100}, {0, 12, 200},  // left stream
        {1, 20, 100}, {1, 21, 300},                // right stream
    };
    Stage join;
    join.name = "join";
    join.map = [](const Row& row) {
        return std::vector<std::pair<Row, Row>>{
            {Row{row[2]}, Row{row[0], row[1]}}};
    };
    join.reduce = [](const Row& key, const std::vector<Row>& values) {
        std::vector<Row> out;
        for (const auto& l : values) {
            if (l[0] != 0) continue;
            for (const auto& r : values) {
                if (r[0] != 1) continue;
                out.push_back(Row{l[1], r[1], key[0]});
            }
        }
        return out;
    };

    const auto out = loh::run_stages(input, {join}, 2);
    // Key order 100 < 200 < 300; key 200 and 300 have no counterpart.
    const std::vector<Row> want = {{10, 20, 100}, {11, 20, 100}};
    CHECK(out == want);
}

TEST_CASE("run_stages wraps stage failures with the stage name") {
    Stage boom;
    boom.name = "exploder";
    boom.map = [](const Row&) -> std::vector<std::pair<Row, Row>> {
        throw std::runtime_error("bad row");
    };
    boom.reduce = [](const Row&, const std::vector<Row>&) {
        return std::vector<Row>{};
    };
    try {
        loh::run_stages({Row{1}}, {boom}, 2);
        FAIL("expected Error");
    } catch (const loh::Error& e) {
        const std::string what = e.what();
        CHECK(what.find("exploder") != std::string::npos);
        CHECK(what.find("bad row") != std::string::npos);
    }
}

TEST_CASE("pool combines member scores per the documented examples") {
    std::map<DocId, std::map<DocId, double>> scores;
    scores[1] = {{100, 2.0}};
    scores[2] = {{100, 3.0}, {200, 1.5}};

    const auto sum = loh::pool(scores, PoolMode::kSum, 9);
    CHECK(sum.set_id == 9);
    REQUIRE(sum.entries.size() == 2);
    CHECK(sum.entries[0] == std::pair<DocId, double>{100, 5.0});
    CHECK(sum.entries[1] == std::pair<DocId, double>{200, 1.5});

    const auto mx = loh::pool(scores, PoolMode::kMax, 9);
    REQUIRE(mx.entries.size() == 2);
    CHECK(mx.entries[0] == std::pair<DocId, double>{100, 3.0});
    CHECK(mx.entries[1] == std::pair<DocId, double>{200, 1.5});

    SUBCASE("single member pools to itself under both modes") {
        std::map<DocId, std::map<DocId, double>> solo;
        solo[7] = {{100, 2.5}, {200, 0.5}, {300, 2.5}};
        const auto s = loh::pool(solo, PoolMode::kSum);
        const auto m = loh::pool(solo, PoolMode::kMax);
        CHECK(s.entries == m.entries);
        REQUIRE(s.entries.size() == 3);
        // Ties by doc id ascending: 100 before 300.
        CHECK(s.entries[0].first == 100);
        CHECK(s.entries[1].first == 300);
        CHECK(s.entries[2].first == 200);
    }
}

TEST_CASE("sum pooling equals a dense transpose-and-sum oracle") {
    std::mt19937_64 gen(5);
    std::map<DocId, std::map<DocId, double>> scores;
    std::map<DocId, double> want;
    for (DocId member = 0; member < 5; ++member) {
        for (DocId doc = 0; doc < 100; ++doc) {
            if (gen() % 3 == 0) continue;  // sparse: missing docs add 0
            const double s =
                static_cast<double>(gen() % 1000) / 100.0;
            scores[member][doc] = s;
            want[doc] += s;
        }
    }
    const auto pooled = loh::pool(scores, PoolMode::kSum);
    CHECK(pooled.entries.size() == want.size());
    for (const auto& [doc, score] : pooled.entries)
        CHECK(score == doctest::Approx(want.at(doc)));
    // Descending scores.
    for (std::size_t i = 1; i < pooled.entries.size(); ++i)
        CHECK(pooled.entries[i].second <= pooled.entries[i - 1].second);
}

TEST_CASE("batch_search counts full-triplet matches") {
    // One member whose codes equal one document's codes exactly, m=8.
    const auto doc = make_point(500, 3, 4, {0, 1, 2, 3, 4, 5, 6, 7});
    QuerySet set;
    set.set_id = 1;
    auto member = doc;
    member.id = 9;
    set.members.push_back(member);

    const auto queries = loh::flatten_query_set(set);
    const auto docs = loh::flatten_documents({doc});
    const auto pooled = loh::batch_search(queries, docs);
    REQUIRE(pooled.size() == 1);
    CHECK(pooled[0].set_id == 1);
    REQUIRE(pooled[0].entries.size() == 1);
    CHECK(pooled[0].entries[0] == std::pair<DocId, double>{500, 8.0});
}

TEST_CASE("batch_search with disjoint coarse codes is empty") {
    QuerySet set;
    set.set_id = 1;
    set.members.push_back(make_point(1, 0, 1, {0, 0, 0, 0}));
    const auto docs =
        loh::flatten_documents({make_point(2, 2, 3, {0, 0, 0, 0})});
    const auto pooled =
        loh::batch_search(loh::flatten_query_set(set), docs);
    CHECK(pooled.empty());
}

TEST_CASE("single-member batch_search equals pairwise similarity") {
    const auto points = loh::testing::random_codes(120, 4, 4, 4, 7);
    const std::vector<EncodedPoint> docs(points.begin(), points.begin() + 100);
    for (int q = 100; q < 120; ++q) {
        QuerySet set;
        set.set_id = static_cast<std::uint64_t>(q);
        set.members.push_back(points[static_cast<std::size_t>(q)]);
        const auto pooled = loh::batch_search(loh::flatten_query_set(set),
                                              loh::flatten_documents(docs));
        std::map<DocId, long long> got;
        if (!pooled.empty())
            for (const auto& [doc, score] : pooled[0].entries)
                got[doc] = static_cast<long long>(score);
        for (const auto& d : docs) {
            const int sim =
                loh::loh_similarity(points[static_cast<std::size_t>(q)], d);
            if (sim > 0)
                CHECK(got.at(d.id) == sim);
            else
                CHECK(got.count(d.id) == 0);
        }
    }
}

TEST_CASE("batch_search equals the quadratic oracle on random sets") {
    const auto all = loh::testing::random_codes(260, 4, 4, 4, 8);
    std::vector<EncodedPoint> docs(all.begin(), all.begin() + 200);
    std::vector<QuerySet> sets;
    for (int s = 0; s < 6; ++s) {
        QuerySet set;
        set.set_id = static_cast<std::uint64_t>(s);
        for (int j = 0; j < 10; ++j)
            set.members.push_back(
                all[static_cast<std::size_t>(200 + s * 10 + j)]);
        sets.push_back(set);
    }
    std::vector<FlatRecord> queries;
    for (const auto& set : sets) {
        const auto flat = loh::flatten_query_set(set);
        queries.insert(queries.end(), flat.begin(), flat.end());
    }

    const auto pooled =
        loh::batch_search(queries, loh::flatten_documents(docs), 4);
    const auto got = to_score_map(pooled);
    const auto want = loh::testing::batch_oracle(sets, docs);
    CHECK(got == want);

    SUBCASE("output ordering is set asc, count desc, doc asc") {
        for (std::size_t i = 1; i < pooled.size(); ++i)
            CHECK(pooled[i - 1].set_id < pooled[i].set_id);
        for (const auto& set : pooled)
            for (std::size_t i = 1; i < set.entries.size(); ++i) {
                const auto& a = set.entries[i - 1];
                const auto& b = set.entries[i];
                CHECK((a.second > b.second ||
                       (a.second == b.second && a.first < b.first)));
            }
    }

    SUBCASE("parallelism does not change results") {
        const auto serial =
            loh::batch_search(queries, loh::flatten_documents(docs), 1);
        const auto wide =
            loh::batch_search(queries, loh::flatten_documents(docs), 8);
        REQUIRE(serial.size() == wide.size());
        for (std::size_t i = 0; i < serial.size(); ++i) {
            CHECK(serial[i].set_id == wide[i].set_id);
            CHECK(serial[i].entries == wide[i].entries);
        }
        CHECK(to_score_map(serial) == want);
    }

    SUBCASE("top_n keeps the first n of each set's full ordering") {
        const auto full =
            loh::batch_search(queries, loh::flatten_documents(docs), 2);
        const auto top =
            loh::batch_search(queries, loh::flatten_documents(docs), 2, 3);
        REQUIRE(top.size() == full.size());
        for (std::size_t i = 0; i < top.size(); ++i) {
            const std::size_t n = std::min<std::size_t>(3, full[i].entries.size());
            REQUIRE(top[i].entries.size() == n);
            for (std::size_t j = 0; j < n; ++j)
                CHECK(top[i].entries[j] == full[i].entries[j]);
        }
    }
}

TEST_CASE("a stoplist never increases batch counts") {
    const auto all = loh::testing::random_codes(150, 2, 4, 2, 9);
    const std::vector<EncodedPoint> docs(all.begin(), all.begin() + 130);
    QuerySet set;
    set.set_id = 0;
    for (int j = 130; j < 150; ++j)
        set.members.push_back(all[static_cast<std::size_t>(j)]);
    const auto queries = loh::flatten_query_set(set);
    const auto doc_records = loh::flatten_documents(docs);

    const auto plain = to_score_map(loh::batch_search(queries, doc_records));
    // Ban everything that appears in more than 20 documents.
    const auto stoplist =
        loh::build_stoplist_from_records(doc_records, 0, 20);
    const auto filtered = to_score_map(
        loh::batch_search(queries, doc_records, 1, {}, &stoplist));

    CHECK(!stoplist.banned.empty());  // k=2/K=2 guarantee hot triplets
    for (const auto& [key, count] : filtered) {
        CHECK(plain.count(key) == 1);
        CHECK(count <= plain.at(key));
    }

    // And the filtered counts match an oracle that skips banned triplets.
    std::set<loh::testing::Triplet> banned;
    for (const auto& code : stoplist.banned)
        banned.insert({code.coarse, code.position, code.fine});
    for (const auto& d : docs) {
        const long long want = [&] {
            long long total = 0;
            for (const auto& member : set.members)
                total += loh::testing::similarity_oracle(member, d, &banned);
            return total;
        }();
        const auto it = filtered.find({0, d.id});
        const long long got = it == filtered.end() ? 0 : it->second;
        CHECK(got == want);
    }
}
