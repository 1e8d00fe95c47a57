#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>

#include "sfgnn/evaluator.hpp"
#include "sfgnn/graph.hpp"
#include "sfgnn/rng.hpp"

using namespace sfgnn;

namespace {

KnowledgeGraph kg_from_triples(std::size_t entities, std::size_t relations,
                               const std::vector<Triple>& train, const std::vector<Triple>& valid,
                               const std::vector<Triple>& test) {
    KnowledgeGraph kg;
    for (std::size_t i = 0; i < entities; ++i) kg.intern_entity("e" + std::to_string(i));
    for (std::size_t j = 0; j < relations; ++j) kg.intern_relation("r" + std::to_string(j));
    kg.train = train;
    kg.valid = valid;
    kg.test = test;
    kg.validate();
    kg.build_indexes();
    return kg;
}

/// Independent ranking oracle: enumerate every entity, drop known substitutes
/// by scanning the raw splits, sort by score with equal scores placed ahead
/// of the answer, and locate the answer.
std::size_t brute_force_rank(const KnowledgeGraph& kg, const TripleScorer& score, const Triple& t,
                             RankDirection dir) {
    auto known = [&kg](const Triple& q) {
        for (const auto* split : {&kg.train, &kg.valid, &kg.test}) {
            for (const Triple& s : *split) {
                if (s == q) return true;
            }
        }
        return false;
    };
    std::size_t answer = dir == RankDirection::Head ? t.head : t.tail;
    struct Cand {
        double score;
        bool is_answer;
    };
    std::vector<Cand> cands;
    for (std::size_t e = 0; e < kg.num_entities(); ++e) {
        Triple q = t;
        (dir == RankDirection::Head ? q.head : q.tail) = e;
        if (e != answer && known(q)) continue;
        cands.push_back({score(q), e == answer});
    }
    std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.is_answer < b.is_answer;  // pessimistic: ties ahead of the answer
    });
    for (std::size_t i = 0; i < cands.size(); ++i) {
        if (cands[i].is_answer) return i + 1;
    }
    return cands.size();
}

std::uint64_t mix3(std::uint64_t a, std::uint64_t b, std::uint64_t c, std::uint64_t salt) {
    RngStream s(a * 1000003 + b * 1009 + c + salt * 0x9e3779b97f4a7c15ULL);
    return s.next_u64();
}

}  // namespace

TEST_CASE("rank_triple") {
    SECTION("a strictly best triple ranks first in both directions") {
        KnowledgeGraph kg = kg_from_triples(4, 1, {{0, 0, 1}}, {}, {{2, 0, 3}});
        TripleScorer score = [](const Triple& t) {
            return (t.head == 2 && t.rel == 0 && t.tail == 3) ? 10.0 : -1.0;
        };
        RankRecord rec = rank_triple(score, {2, 0, 3}, kg);
        CHECK(rec.head_rank == 1);
        CHECK(rec.tail_rank == 1);
        CHECK(rec.final_rank == 1.0);
    }
    SECTION("hand-set scores on a 3-entity KG match the sort oracle") {
        KnowledgeGraph kg = kg_from_triples(3, 1, {{0, 0, 1}}, {}, {{0, 0, 2}});
        TripleScorer score = [](const Triple& t) {
            return static_cast<double>(t.head) * 1.5 - static_cast<double>(t.tail);
        };
        RankRecord rec = rank_triple(score, {0, 0, 2}, kg);
        CHECK(rec.head_rank == brute_force_rank(kg, score, {0, 0, 2}, RankDirection::Head));
        CHECK(rec.tail_rank == brute_force_rank(kg, score, {0, 0, 2}, RankDirection::Tail));
    }
    SECTION("all-equal scores rank the answer last (pessimistic ties)") {
        KnowledgeGraph kg = kg_from_triples(5, 1, {}, {}, {{0, 0, 1}});
        TripleScorer score = [](const Triple&) { return 0.7; };
        RankRecord rec = rank_triple(score, {0, 0, 1}, kg);
        CHECK(rec.head_rank == 5);  // nothing filtered: all 5 entities compete
        CHECK(rec.tail_rank == 5);
        CHECK(rec.final_rank == 5.0);
    }
    SECTION("25 randomized KGs with tie-heavy scorers match the oracle exactly") {
        RngStream rng(77);
        for (int trial = 0; trial < 25; ++trial) {
            std::size_t n = 5 + rng.next_index(46);   // <= 50 entities
            std::size_t nr = 1 + rng.next_index(5);   // <= 5 relations
            auto draw = [&](std::size_t bound) { return rng.next_index(bound); };
            std::vector<Triple> train, valid, test;
            for (std::size_t i = 0; i < 4 * n; ++i) train.push_back({draw(n), draw(nr), draw(n)});
            for (std::size_t i = 0; i < n / 3 + 1; ++i)
                valid.push_back({draw(n), draw(nr), draw(n)});
            for (std::size_t i = 0; i < n / 3 + 1; ++i) test.push_back({draw(n), draw(nr), draw(n)});
            KnowledgeGraph kg = kg_from_triples(n, nr, train, valid, test);

            // quantized hash scores: levels 3 / 17 / huge control tie density
            std::uint64_t levels = trial % 3 == 0 ? 3 : (trial % 3 == 1 ? 17 : 1u << 30);
            std::uint64_t salt = static_cast<std::uint64_t>(trial);
            TripleScorer score = [levels, salt](const Triple& t) {
                return static_cast<double>(mix3(t.head, t.rel, t.tail, salt) % levels);
            };
            for (const Triple& t : test) {
                RankRecord rec = rank_triple(score, t, kg);
                CHECK(rec.head_rank == brute_force_rank(kg, score, t, RankDirection::Head));
                CHECK(rec.tail_rank == brute_force_rank(kg, score, t, RankDirection::Tail));
                CHECK(rec.final_rank ==
                      (static_cast<double>(rec.head_rank) + static_cast<double>(rec.tail_rank)) /
                          2.0);
            }
        }
    }
    SECTION("out-of-vocabulary triples are rejected") {
        KnowledgeGraph kg = kg_from_triples(3, 1, {{0, 0, 1}}, {}, {});
        TripleScorer score = [](const Triple&) { return 0.0; };
        CHECK_THROWS_AS(rank_triple(score, {9, 0, 1}, kg), std::out_of_range);
    }
}

TEST_CASE("compute_metrics") {
    SECTION("reference values for ranks 1, 2, 4") {
        std::vector<RankRecord> recs(3);
        recs[0].final_rank = 1.0;
        recs[1].final_rank = 2.0;
        recs[2].final_rank = 4.0;
        MetricsReport m = compute_metrics(recs);
        CHECK(m.mrr == Catch::Approx((1.0 + 0.5 + 0.25) / 3.0).margin(1e-9));
        CHECK(m.hit1 == Catch::Approx(1.0 / 3.0).margin(1e-9));
        CHECK(m.hit3 == Catch::Approx(2.0 / 3.0).margin(1e-9));
        CHECK(m.hit10 == 1.0);
    }
    SECTION("perfect ranks give all-ones metrics") {
        std::vector<RankRecord> recs(4);
        for (auto& r : recs) r.final_rank = 1.0;
        MetricsReport m = compute_metrics(recs);
        CHECK(m.mrr == 1.0);
        CHECK(m.hit1 == 1.0);
        CHECK(m.hit10 == 1.0);
    }
    SECTION("hit monotonicity on 1000 random rank lists") {
        RngStream rng(91);
        for (int trial = 0; trial < 1000; ++trial) {
            std::size_t n = 1 + rng.next_index(20);
            std::vector<RankRecord> recs(n);
            for (auto& r : recs) {
                r.head_rank = 1 + rng.next_index(30);
                r.tail_rank = 1 + rng.next_index(30);
                r.final_rank =
                    (static_cast<double>(r.head_rank) + static_cast<double>(r.tail_rank)) / 2.0;
            }
            MetricsReport m = compute_metrics(recs);
            CHECK(m.hit1 <= m.hit3);
            CHECK(m.hit3 <= m.hit10);
            CHECK(m.mrr >= 0.0);
            CHECK(m.mrr <= 1.0);
        }
    }
    SECTION("empty input rejected") {
        CHECK_THROWS_AS(compute_metrics({}), std::invalid_argument);
    }
}

TEST_CASE("accuracy") {
    DenseMatrix pred = DenseMatrix::from_rows({{0.9, 0.1}, {0.2, 0.8}, {0.6, 0.4}});
    SECTION("all correct / all wrong") {
        CHECK(accuracy(pred, {0, 1, 0}, {0, 1, 2}) == 1.0);
        CHECK(accuracy(pred, {1, 0, 1}, {0, 1, 2}) == 0.0);
    }
    SECTION("masked subset only") {
        CHECK(accuracy(pred, {0, 0, 0}, {0, 2}) == 1.0);
        CHECK(accuracy(pred, {0, 0, 0}, {0, 1}) == 0.5);
    }
    SECTION("empty mask rejected") {
        CHECK_THROWS_AS(accuracy(pred, {0, 0, 0}, {}), std::invalid_argument);
    }
}

TEST_CASE("sfm category analysis") {
    KnowledgeGraph kg = kg_from_triples(6, 1, {{0, 0, 1}, {1, 0, 2}, {2, 0, 3}}, {},
                                        {{0, 0, 2}, {0, 0, 3}, {4, 0, 5}});

    SECTION("atr is the mean final rank of the entity's test triples") {
        std::vector<RankRecord> recs(3);
        recs[0].triple = {0, 0, 2};
        recs[0].final_rank = 2.0;
        recs[1].triple = {0, 0, 3};
        recs[1].final_rank = 4.0;
        recs[2].triple = {4, 0, 5};
        recs[2].final_rank = 1.0;
        std::vector<DenseMatrix> trace = {DenseMatrix(6, 1, 1.0)};
        auto rows = sfm_category_analysis(trace, recs, kg);
        REQUIRE(rows.size() == 2);  // categories 0 and 1
        const CategoryRow& c1 = rows[1];
        CHECK(c1.count == 5);  // test entities 0, 2, 3, 4, 5 all passed the single gate
        // entity 0's atr = mean(2, 4) = 3
        double expected = (1.0 / 3.0 + 1.0 / 2.0 + 1.0 / 4.0 + 1.0 + 1.0) / 5.0;
        CHECK(c1.mrr == Catch::Approx(expected).margin(1e-12));
    }
    SECTION("all-ones trace over 5 layers puts everyone in C5") {
        std::vector<DenseMatrix> trace(5, DenseMatrix(6, 1, 1.0));
        std::vector<RankRecord> recs(1);
        recs[0].triple = {0, 0, 2};
        recs[0].final_rank = 2.0;
        auto rows = sfm_category_analysis(trace, recs, kg);
        REQUIRE(rows.size() == 6);
        CHECK(rows[5].count == 2);  // entities 0 and 2
        CHECK(rows[5].percent == Catch::Approx(100.0));
        for (std::size_t i = 0; i < 5; ++i) CHECK(rows[i].count == 0);
    }
    SECTION("percentages sum to 100 and categories partition the test entities") {
        RngStream rng(17);
        std::vector<DenseMatrix> trace;
        for (int l = 0; l < 3; ++l) {
            DenseMatrix bits(6, 1, 0.0);
            for (std::size_t v = 0; v < 6; ++v) bits(v, 0) = rng.next_coin() ? 1.0 : 0.0;
            trace.push_back(bits);
        }
        std::vector<RankRecord> recs(3);
        recs[0].triple = {0, 0, 2};
        recs[0].final_rank = 2.0;
        recs[1].triple = {0, 0, 3};
        recs[1].final_rank = 7.0;
        recs[2].triple = {4, 0, 5};
        recs[2].final_rank = 12.0;
        auto rows = sfm_category_analysis(trace, recs, kg);
        double pct = 0.0;
        std::size_t count = 0;
        for (const auto& r : rows) {
            pct += r.percent;
            count += r.count;
        }
        CHECK(pct == Catch::Approx(100.0).margin(1e-9));
        CHECK(count == 5);  // entities 0,2,3,4,5 appear in test triples
    }
    SECTION("count-weighted category MRR equals the global entity-level mean") {
        RngStream rng(19);
        std::vector<DenseMatrix> trace;
        for (int l = 0; l < 4; ++l) {
            DenseMatrix bits(6, 1, 0.0);
            for (std::size_t v = 0; v < 6; ++v) bits(v, 0) = rng.next_coin() ? 1.0 : 0.0;
            trace.push_back(bits);
        }
        std::vector<RankRecord> recs(3);
        recs[0].triple = {0, 0, 2};
        recs[0].final_rank = 2.5;
        recs[1].triple = {0, 0, 3};
        recs[1].final_rank = 6.0;
        recs[2].triple = {4, 0, 5};
        recs[2].final_rank = 3.0;
        auto rows = sfm_category_analysis(trace, recs, kg);
        double weighted = 0.0;
        std::size_t total = 0;
        for (const auto& r : rows) {
            weighted += r.mrr * static_cast<double>(r.count);
            total += r.count;
        }
        weighted /= static_cast<double>(total);
        double global = (1.0 / 4.25 + 1.0 / 2.5 + 1.0 / 6.0 + 1.0 / 3.0 + 1.0 / 3.0) / 5.0;
        CHECK(weighted == Catch::Approx(global).margin(1e-12));
    }
    SECTION("trace must cover the graph") {
        std::vector<DenseMatrix> trace = {DenseMatrix(4, 1, 1.0)};  // wrong size
        std::vector<RankRecord> recs(1);
        recs[0].triple = {0, 0, 2};
        recs[0].final_rank = 1.0;
        CHECK_THROWS_AS(sfm_category_analysis(trace, recs, kg), std::invalid_argument);
        CHECK_THROWS_AS(sfm_category_analysis({}, recs, kg), std::invalid_argument);
    }
}

TEST_CASE("category CSV mirrors the table layout") {
    std::vector<CategoryRow> rows(2);
    rows[0].category = 0;
    rows[0].count = 3;
    rows[0].percent = 60.0;
    rows[0].mrr = 0.5;
    rows[1].category = 1;
    rows[1].count = 2;
    rows[1].percent = 40.0;
    std::string csv = category_table_csv(rows);
    CHECK(csv.find("category,count,percent,MRR,H@10,H@3,H@1") == 0);
    CHECK(csv.find("C0,3,60.000000,0.500000") != std::string::npos);
    CHECK(csv.find("C1,2,40.000000") != std::string::npos);
}
