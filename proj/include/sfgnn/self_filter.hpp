#pragma once

#include <cstddef>
#include <stdexcept>
#include <vector>

#include "sfgnn/decoders.hpp"
#include "sfgnn/graph.hpp"
#include "sfgnn/rng.hpp"
#include "sfgnn/tape.hpp"

namespace sfgnn {

enum class QualityNcMode { MaxProb, TrueClassOnTrain };

/// Self-filter configuration for one model: the per-layer scalers w^(l) live
/// in the parameter map; this struct carries the remaining knobs.
struct GateConfig {
    double temperature = 1.0;
    bool detach_quality = false;   // cut gradients flowing into the quality score
    bool eval_sampled = false;     // eval-mode policy: sample instead of argmax
    std::size_t quality_cap = 32;  // triples sampled per entity per layer
    bool quality_raw_scores = false;  // skip the sigmoid on triple scores
    QualityNcMode nc_mode = QualityNcMode::MaxProb;
};

/// Node-classification quality: re-run the classifier decoder on the
/// intermediate representations and read, per node, the maximum softmax
/// probability (or the true-class probability on train nodes when that mode
/// is on).
inline ValueId quality_nc(Tape& t, const ClassifierHeadIds& head, ValueId h_l,
                          const GateConfig& cfg,
                          const std::vector<std::size_t>* labels = nullptr,
                          const std::vector<std::size_t>* train_nodes = nullptr) {
    ValueId input = cfg.detach_quality ? t.detach(h_l) : h_l;
    ValueId probs = classify(t, head, input);
    ValueId max_prob = t.row_max(probs);
    if (cfg.nc_mode == QualityNcMode::MaxProb) return max_prob;
    if (labels == nullptr || train_nodes == nullptr) {
        throw std::invalid_argument("quality_nc: true-class mode needs labels and train mask");
    }
    ValueId true_prob = t.row_select(probs, *labels);
    std::size_t n = t.value(h_l).rows();
    DenseMatrix mask(n, 1, 0.0);
    for (std::size_t v : *train_nodes) mask(v, 0) = 1.0;
    ValueId m = t.constant(mask);
    return t.add(t.mul(true_prob, m), t.mul(max_prob, t.scalar_mul(t.sub(m, t.scalar(1.0)), -1.0)));
}

/// Knowledge-graph quality: per entity, the mean decoder confidence over up
/// to cap of its train triples, scored with the layer-l representations.
/// Scores pass through a sigmoid before averaging (unless raw mode is on);
/// entities with no train triples get a neutral 0.5.
inline ValueId quality_kg(Tape& t, ScorerKind kind, ValueId entity_reprs, ValueId relation_reprs,
                          const KnowledgeGraph& kg, const GateConfig& cfg, RngStream& rng) {
    if (cfg.quality_cap < 1) throw std::invalid_argument("quality_kg: cap must be >= 1");
    std::size_t n = kg.num_entities();
    std::vector<Triple> sampled;
    std::vector<std::size_t> owners;
    DenseMatrix inv_counts(n, 1, 0.0);
    DenseMatrix empty_base(n, 1, 0.0);
    for (std::size_t x = 0; x < n; ++x) {
        const auto& tri = kg.entity_triples(x);
        if (tri.empty()) {
            empty_base(x, 0) = 0.5;
            continue;
        }
        std::size_t take = std::min(cfg.quality_cap, tri.size());
        inv_counts(x, 0) = 1.0 / static_cast<double>(take);
        if (take == tri.size()) {
            for (std::size_t i : tri) {
                sampled.push_back(kg.train[i]);
                owners.push_back(x);
            }
        } else {
            // Partial Fisher-Yates over a copy: cap distinct triples.
            std::vector<std::size_t> pool(tri);
            for (std::size_t i = 0; i < take; ++i) {
                std::size_t j = i + rng.next_index(pool.size() - i);
                std::swap(pool[i], pool[j]);
                sampled.push_back(kg.train[pool[i]]);
                owners.push_back(x);
            }
        }
    }
    ValueId ent = cfg.detach_quality ? t.detach(entity_reprs) : entity_reprs;
    ValueId rel = cfg.detach_quality ? t.detach(relation_reprs) : relation_reprs;
    if (sampled.empty()) {
        return t.constant(std::move(empty_base));
    }
    ValueId scores = score_triples(t, kind, ent, rel, sampled);
    ValueId conf = cfg.quality_raw_scores ? scores : t.sigmoid(scores);
    ValueId sums = t.segment_sum(conf, owners, n);
    return t.add(t.mul(sums, t.constant(std::move(inv_counts))), t.constant(std::move(empty_base)));
}

/// Train-mode gate: per node, hard straight-through Gumbel-softmax over the
/// two logits (w * qual, 0); the returned n x 1 value holds the first
/// category ("keep") and is exactly 0 or 1 in the forward pass.
inline ValueId gate_train(Tape& t, ValueId qual, ValueId w, double temperature, RngStream& rng) {
    ValueId keep_logit = t.mul(qual, w);
    std::size_t n = t.value(qual).rows();
    ValueId logits = t.concat_cols(keep_logit, t.constant(DenseMatrix(n, 1, 0.0)));
    ValueId sample = t.gumbel_softmax(logits, temperature, /*hard=*/true, rng);
    return t.slice_cols(sample, 0, 1);
}

/// Eval-mode gate (default policy): deterministic argmax of the noiseless
/// logits, i.e. keep iff w * qual >= 0 (ties keep).
inline DenseMatrix gate_eval(double w, const DenseMatrix& qual) {
    DenseMatrix bits(qual.rows(), 1);
    for (std::size_t i = 0; i < qual.rows(); ++i) {
        bits(i, 0) = (w * qual(i, 0) >= 0.0) ? 1.0 : 0.0;
    }
    return bits;
}

/// Eval-mode gate with the sampled policy: one hard Gumbel draw, off-tape.
inline DenseMatrix gate_eval_sampled(double w, const DenseMatrix& qual, double temperature,
                                     RngStream& rng) {
    Tape t;
    ValueId q = t.constant(qual);
    ValueId wc = t.scalar(w);
    ValueId g = gate_train(t, q, wc, temperature, rng);
    return t.value(g);
}

}  // namespace sfgnn
