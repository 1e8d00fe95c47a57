#pragma once

#include <cstddef>
#include <stdexcept>
#include <vector>

#include "sfgnn/graph.hpp"
#include "sfgnn/tape.hpp"

namespace sfgnn {

enum class ScorerKind { TransE, DistMult };

/// Two-layer MLP classifier head (d -> hidden -> classes), relu in between.
struct ClassifierHeadIds {
    ValueId W1 = 0;
    ValueId b1 = 0;
    ValueId W2 = 0;
    ValueId b2 = 0;
};

inline ValueId classifier_logits(Tape& t, const ClassifierHeadIds& head, ValueId h) {
    ValueId hidden = t.relu(t.add(t.matmul(h, head.W1), head.b1));
    return t.add(t.matmul(hidden, head.W2), head.b2);
}

/// Class distribution per node (softmax rows of the MLP logits).
inline ValueId classify(Tape& t, const ClassifierHeadIds& head, ValueId h) {
    return t.softmax_rows(classifier_logits(t, head, h));
}

/// Batched triple scoring on already-gathered representation rows.
/// TransE: -||h_u + h_r - h_v||; DistMult: sum_i u_i r_i v_i.
inline ValueId score_triples(Tape& t, ScorerKind kind, ValueId heads, ValueId rels, ValueId tails) {
    if (kind == ScorerKind::TransE) {
        return t.scalar_mul(t.l2norm_rows(t.sub(t.add(heads, rels), tails)), -1.0);
    }
    return t.row_sum(t.mul(t.mul(heads, rels), tails));
}

/// Gather rows for a triple batch from entity/relation tables, then score.
inline ValueId score_triples(Tape& t, ScorerKind kind, ValueId entity_reprs, ValueId relation_reprs,
                             const std::vector<Triple>& triples) {
    std::vector<std::size_t> h, r, v;
    h.reserve(triples.size());
    r.reserve(triples.size());
    v.reserve(triples.size());
    for (const Triple& tp : triples) {
        h.push_back(tp.head);
        r.push_back(tp.rel);
        v.push_back(tp.tail);
    }
    return score_triples(t, kind, t.row_gather(entity_reprs, h), t.row_gather(relation_reprs, r),
                         t.row_gather(entity_reprs, v));
}

/// Plain (off-tape) score of one triple given materialized representation
/// matrices. Matches the tape path arithmetic exactly.
inline double score_triple_value(ScorerKind kind, const DenseMatrix& entity_reprs,
                                 const DenseMatrix& relation_reprs, const Triple& t) {
    const double* u = entity_reprs.row(t.head);
    const double* r = relation_reprs.row(t.rel);
    const double* v = entity_reprs.row(t.tail);
    std::size_t d = entity_reprs.cols();
    double acc = 0.0;
    if (kind == ScorerKind::TransE) {
        for (std::size_t j = 0; j < d; ++j) {
            double e = u[j] + r[j] - v[j];
            acc += e * e;
        }
        return -std::sqrt(acc);
    }
    for (std::size_t j = 0; j < d; ++j) acc += u[j] * r[j] * v[j];
    return acc;
}

/// Mean binary cross-entropy of sigmoid(scores) against {0,1} labels.
inline ValueId bce_loss(Tape& t, ValueId scores, std::vector<double> labels) {
    return t.bce_with_logits(scores, std::move(labels));
}

/// Mean negative log-probability of the true class over masked nodes, taken
/// from an already-normalized distribution matrix.
inline ValueId ce_loss(Tape& t, ValueId distributions, const std::vector<std::size_t>& labels,
                       const std::vector<std::size_t>& mask) {
    if (mask.empty()) throw std::invalid_argument("ce_loss: empty mask");
    ValueId picked = t.row_select(distributions, labels);
    ValueId masked = t.row_gather(picked, mask);
    return t.scalar_mul(t.mean(t.log(masked)), -1.0);
}

}  // namespace sfgnn
