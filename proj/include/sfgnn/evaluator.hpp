#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>
#include <vector>

#include <json.hpp>

#include "sfgnn/graph.hpp"
#include "sfgnn/matrix.hpp"

namespace sfgnn {

/// Scores an arbitrary candidate triple under the trained model.
using TripleScorer = std::function<double(const Triple&)>;

struct RankRecord {
    Triple triple;
    std::size_t head_rank = 1;
    std::size_t tail_rank = 1;
    double final_rank = 1.0;  // (head_rank + tail_rank) / 2
};

/// Filtered rank of one test triple in both directions. Ties are pessimistic:
/// a candidate scoring equal to the true answer ranks ahead of it.
inline RankRecord rank_triple(const TripleScorer& score, const Triple& t,
                              const KnowledgeGraph& kg) {
    RankRecord rec;
    rec.triple = t;
    double true_score = score(t);
    for (RankDirection dir : {RankDirection::Head, RankDirection::Tail}) {
        CandidateSet cs = filtered_candidates(kg, t, dir);
        std::size_t answer = dir == RankDirection::Head ? t.head : t.tail;
        std::size_t rank = 1;
        for (std::size_t e : cs.entities) {
            if (e == answer) continue;
            Triple cand = t;
            (dir == RankDirection::Head ? cand.head : cand.tail) = e;
            if (score(cand) >= true_score) ++rank;
        }
        (dir == RankDirection::Head ? rec.head_rank : rec.tail_rank) = rank;
    }
    rec.final_rank = (static_cast<double>(rec.head_rank) + static_cast<double>(rec.tail_rank)) / 2.0;
    return rec;
}

struct CategoryRow {
    std::size_t category = 0;  // gate-pass count i
    std::size_t count = 0;     // entities in C_i
    double percent = 0.0;
    double mrr = 0.0;
    double hit10 = 0.0;
    double hit3 = 0.0;
    double hit1 = 0.0;
};

struct MetricsReport {
    double mrr = 0.0;
    double hit1 = 0.0;
    double hit3 = 0.0;
    double hit10 = 0.0;
    std::size_t count = 0;
};

inline MetricsReport compute_metrics(const std::vector<RankRecord>& records) {
    if (records.empty()) throw std::invalid_argument("compute_metrics: empty record list");
    MetricsReport m;
    m.count = records.size();
    for (const RankRecord& r : records) {
        m.mrr += 1.0 / r.final_rank;
        if (r.final_rank <= 1.0) m.hit1 += 1.0;
        if (r.final_rank <= 3.0) m.hit3 += 1.0;
        if (r.final_rank <= 10.0) m.hit10 += 1.0;
    }
    double n = static_cast<double>(records.size());
    m.mrr /= n;
    m.hit1 /= n;
    m.hit3 /= n;
    m.hit10 /= n;
    return m;
}

/// Fraction of masked nodes whose argmax prediction matches the label.
inline double accuracy(const DenseMatrix& predictions, const std::vector<std::size_t>& labels,
                       const std::vector<std::size_t>& mask) {
    if (mask.empty()) throw std::invalid_argument("accuracy: empty mask");
    std::size_t correct = 0;
    for (std::size_t v : mask) {
        std::size_t arg = 0;
        for (std::size_t j = 1; j < predictions.cols(); ++j) {
            if (predictions(v, j) > predictions(v, arg)) arg = j;
        }
        if (arg == labels[v]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(mask.size());
}

/// Per-entity gate-pass analysis: partition the test entities by how many
/// layers passed their representation through the gate (t_v), compute each
/// entity's average final rank over its test triples (atr_v), and report per
/// category the entity count, share, MRR over 1/atr_v, and Hit@k over atr_v.
inline std::vector<CategoryRow> sfm_category_analysis(
    const std::vector<DenseMatrix>& gate_trace, const std::vector<RankRecord>& records,
    const KnowledgeGraph& kg) {
    if (gate_trace.empty()) throw std::invalid_argument("sfm_category_analysis: no gate trace");
    std::size_t layers = gate_trace.size();
    std::size_t n = kg.num_entities();
    for (const DenseMatrix& g : gate_trace) {
        if (g.rows() != n || g.cols() != 1) {
            throw std::invalid_argument("sfm_category_analysis: trace shape " + g.shape_str() +
                                        " does not cover " + std::to_string(n) + " entities");
        }
    }

    std::map<std::size_t, std::vector<double>> entity_ranks;  // entity -> final ranks
    for (const RankRecord& r : records) {
        entity_ranks[r.triple.head].push_back(r.final_rank);
        if (r.triple.tail != r.triple.head) entity_ranks[r.triple.tail].push_back(r.final_rank);
    }

    std::vector<CategoryRow> rows(layers + 1);
    for (std::size_t i = 0; i <= layers; ++i) rows[i].category = i;
    std::size_t total = 0;
    for (const auto& [v, ranks] : entity_ranks) {
        std::size_t passes = 0;
        for (const DenseMatrix& g : gate_trace) {
            if (g(v, 0) != 0.0) ++passes;
        }
        double atr = 0.0;
        for (double r : ranks) atr += r;
        atr /= static_cast<double>(ranks.size());
        CategoryRow& row = rows[passes];
        ++row.count;
        ++total;
        row.mrr += 1.0 / atr;
        if (atr <= 1.0) row.hit1 += 1.0;
        if (atr <= 3.0) row.hit3 += 1.0;
        if (atr <= 10.0) row.hit10 += 1.0;
    }
    for (CategoryRow& row : rows) {
        if (row.count > 0) {
            double c = static_cast<double>(row.count);
            row.mrr /= c;
            row.hit1 /= c;
            row.hit3 /= c;
            row.hit10 /= c;
        }
        row.percent = total == 0 ? 0.0 : 100.0 * static_cast<double>(row.count) / static_cast<double>(total);
    }
    return rows;
}

inline nlohmann::ordered_json metrics_to_json(const MetricsReport& m) {
    return nlohmann::ordered_json{{"MRR", m.mrr},
                                  {"Hit@10", m.hit10},
                                  {"Hit@3", m.hit3},
                                  {"Hit@1", m.hit1},
                                  {"count", m.count}};
}

inline nlohmann::ordered_json category_table_json(const std::vector<CategoryRow>& rows) {
    nlohmann::ordered_json arr = nlohmann::ordered_json::array();
    for (const CategoryRow& r : rows) {
        arr.push_back(nlohmann::ordered_json{{"category", r.category},
                                             {"count", r.count},
                                             {"percent", r.percent},
                                             {"MRR", r.mrr},
                                             {"Hit@10", r.hit10},
                                             {"Hit@3", r.hit3},
                                             {"Hit@1", r.hit1}});
    }
    return arr;
}

inline std::string category_table_csv(const std::vector<CategoryRow>& rows) {
    std::ostringstream out;
    out << "category,count,percent,MRR,H@10,H@3,H@1\n";
    char buf[64];
    for (const CategoryRow& r : rows) {
        out << "C" << r.category << "," << r.count;
        for (double v : {r.percent, r.mrr, r.hit10, r.hit3, r.hit1}) {
            std::snprintf(buf, sizeof(buf), "%.6f", v);
            out << "," << buf;
        }
        out << "\n";
    }
    return out.str();
}

}  // namespace sfgnn
