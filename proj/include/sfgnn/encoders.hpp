#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "sfgnn/graph.hpp"
#include "sfgnn/tape.hpp"

namespace sfgnn {

enum class Activation { Identity, Relu, Tanh };
enum class Composition { Subtraction, Multiplication };

inline ValueId activate(Tape& t, Activation a, ValueId x) {
    switch (a) {
        case Activation::Identity: return x;
        case Activation::Relu: return t.relu(x);
        case Activation::Tanh: return t.tanh(x);
    }
    throw std::logic_error("activate: bad activation");
}

/// Flattened neighbor index for batched message passing. One entry per
/// (node, neighbor, relation, direction) tuple, sorted by destination so
/// segment sums accumulate in per-node order.
struct EdgeIndex {
    std::size_t num_nodes = 0;
    std::vector<std::size_t> dst;
    std::vector<std::size_t> src;
    std::vector<std::size_t> rel;
    std::vector<EdgeDir> dir;

    std::vector<double> mean_inv_degree;         // per node: 1/|N_v|, 0 if isolated
    std::vector<double> rgcn_coeff;              // per entry: 1/c_{dst,rel}
    std::vector<std::vector<std::size_t>> rel_groups;  // entry ids per relation
    std::vector<std::size_t> in_entries, out_entries;  // entry ids per direction

    std::size_t num_entries() const { return dst.size(); }

    void finalize(std::size_t n_nodes, std::size_t n_relations) {
        num_nodes = n_nodes;
        mean_inv_degree.assign(n_nodes, 0.0);
        std::vector<std::size_t> degree(n_nodes, 0);
        for (std::size_t v : dst) ++degree[v];
        for (std::size_t v = 0; v < n_nodes; ++v) {
            if (degree[v] > 0) mean_inv_degree[v] = 1.0 / static_cast<double>(degree[v]);
        }
        std::vector<std::size_t> per_rel_count(n_nodes * n_relations, 0);
        for (std::size_t i = 0; i < num_entries(); ++i) {
            ++per_rel_count[dst[i] * n_relations + rel[i]];
        }
        rgcn_coeff.resize(num_entries());
        rel_groups.assign(n_relations, {});
        for (std::size_t i = 0; i < num_entries(); ++i) {
            rgcn_coeff[i] = 1.0 / static_cast<double>(per_rel_count[dst[i] * n_relations + rel[i]]);
            rel_groups[rel[i]].push_back(i);
            (dir[i] == EdgeDir::In ? in_entries : out_entries).push_back(i);
        }
    }
};

inline EdgeIndex build_edge_index(const KnowledgeGraph& kg) {
    EdgeIndex e;
    for (std::size_t v = 0; v < kg.num_entities(); ++v) {
        for (const NeighborEntry& ne : kg.neighbors(v)) {
            e.dst.push_back(v);
            e.src.push_back(ne.node);
            e.rel.push_back(ne.rel);
            e.dir.push_back(ne.dir);
        }
    }
    e.finalize(kg.num_entities(), kg.num_relations());
    return e;
}

inline EdgeIndex build_edge_index(const HomogeneousGraph& g) {
    EdgeIndex e;
    for (std::size_t v = 0; v < g.num_nodes(); ++v) {
        for (std::size_t u : g.adjacency[v]) {
            e.dst.push_back(v);
            e.src.push_back(u);
            e.rel.push_back(0);
            e.dir.push_back(EdgeDir::In);
        }
    }
    e.finalize(g.num_nodes(), 1);
    return e;
}

// ---------------------------------------------------------------------------
// Layer parameter handles (tape value ids)
// ---------------------------------------------------------------------------

struct HomoMeanParams {
    ValueId W_self = 0;
    ValueId W_neigh = 0;
};

struct RgcnParams {
    ValueId W_ent = 0;
    std::vector<ValueId> W_rel;  // one matrix per relation id
};

struct CompGcnParams {
    ValueId W_in = 0;
    ValueId W_out = 0;
    ValueId W_self = 0;
    ValueId W_rel = 0;
    ValueId h_loop = 0;  // 1 x d learned self-loop relation vector
    Composition comp = Composition::Subtraction;
};

struct EncoderLayer {
    Activation act = Activation::Identity;
    std::variant<HomoMeanParams, RgcnParams, CompGcnParams> params;
};

/// Per-layer pair of node (H) and message (M) representation ids plus the
/// relation representation id (0x0 constant for homogeneous graphs).
struct TapeDualState {
    ValueId H = 0;
    ValueId M = 0;
    ValueId R = 0;
};

namespace enc_detail {

inline ValueId compose(Tape& t, Composition c, ValueId ent, ValueId rel) {
    return c == Composition::Subtraction ? t.sub(ent, rel) : t.mul(ent, rel);
}

inline std::vector<std::size_t> pick(const std::vector<std::size_t>& v,
                                     const std::vector<std::size_t>& ids) {
    std::vector<std::size_t> out;
    out.reserve(ids.size());
    for (std::size_t i : ids) out.push_back(v[i]);
    return out;
}

}  // namespace enc_detail

/// Pre-activation neighbor aggregate: the part of a layer that depends only
/// on the incoming message representations (and relations), never on the
/// node's own representation. Shared between the node and message passes.
inline ValueId neighbor_term(Tape& t, const EncoderLayer& layer, ValueId neigh, ValueId relations,
                             const EdgeIndex& g) {
    std::size_t n = g.num_nodes;
    if (const auto* hp = std::get_if<HomoMeanParams>(&layer.params)) {
        std::size_t d_out = t.value(hp->W_neigh).cols();
        if (g.num_entries() == 0) {
            return t.constant(DenseMatrix(n, d_out, 0.0));
        }
        ValueId gathered = t.row_gather(neigh, g.src);
        ValueId summed = t.segment_sum(gathered, g.dst, n);
        DenseMatrix inv(n, 1);
        for (std::size_t v = 0; v < n; ++v) inv(v, 0) = g.mean_inv_degree[v];
        ValueId mean = t.mul(summed, t.constant(std::move(inv)));
        return t.matmul(mean, hp->W_neigh);
    }
    if (const auto* rp = std::get_if<RgcnParams>(&layer.params)) {
        std::size_t d_out = t.value(rp->W_ent).cols();
        ValueId acc = t.constant(DenseMatrix(n, d_out, 0.0));
        for (std::size_t r = 0; r < rp->W_rel.size(); ++r) {
            const auto& group = g.rel_groups[r];
            if (group.empty()) continue;
            ValueId gathered = t.row_gather(neigh, enc_detail::pick(g.src, group));
            DenseMatrix coeff(group.size(), 1);
            for (std::size_t i = 0; i < group.size(); ++i) coeff(i, 0) = g.rgcn_coeff[group[i]];
            ValueId scaled = t.mul(gathered, t.constant(std::move(coeff)));
            ValueId transformed = t.matmul(scaled, rp->W_rel[r]);
            acc = t.add(acc, t.segment_sum(transformed, enc_detail::pick(g.dst, group), n));
        }
        return acc;
    }
    const auto& cp = std::get<CompGcnParams>(layer.params);
    std::size_t d_out = t.value(cp.W_in).cols();
    ValueId acc = t.constant(DenseMatrix(n, d_out, 0.0));
    const std::pair<const std::vector<std::size_t>*, ValueId> buckets[] = {
        {&g.in_entries, cp.W_in},
        {&g.out_entries, cp.W_out},
    };
    for (const auto& [entries, W] : buckets) {
        if (entries->empty()) continue;
        ValueId ent = t.row_gather(neigh, enc_detail::pick(g.src, *entries));
        ValueId rel = t.row_gather(relations, enc_detail::pick(g.rel, *entries));
        ValueId phi = enc_detail::compose(t, cp.comp, ent, rel);
        ValueId transformed = t.matmul(phi, W);
        acc = t.add(acc, t.segment_sum(transformed, enc_detail::pick(g.dst, *entries), n));
    }
    return acc;
}

/// Pre-activation self contribution for the given self representation rows.
inline ValueId self_term(Tape& t, const EncoderLayer& layer, ValueId self) {
    if (const auto* hp = std::get_if<HomoMeanParams>(&layer.params)) {
        return t.matmul(self, hp->W_self);
    }
    if (const auto* rp = std::get_if<RgcnParams>(&layer.params)) {
        return t.matmul(self, rp->W_ent);
    }
    const auto& cp = std::get<CompGcnParams>(layer.params);
    return t.matmul(enc_detail::compose(t, cp.comp, self, cp.h_loop), cp.W_self);
}

/// Per-layer relation representation update (identity except for CompGCN).
inline ValueId relation_update(Tape& t, const EncoderLayer& layer, ValueId relations) {
    if (const auto* cp = std::get_if<CompGcnParams>(&layer.params)) {
        return t.matmul(relations, cp->W_rel);
    }
    return relations;
}

/// Single-stream update (the plain GNN layer): act(neighbor + self).
inline ValueId apply_layer(Tape& t, const EncoderLayer& layer, ValueId self, ValueId neigh,
                           ValueId relations, const EdgeIndex& g) {
    ValueId agg = neighbor_term(t, layer, neigh, relations, g);
    return activate(t, layer.act, t.add(agg, self_term(t, layer, self)));
}

/// Dual-representation update. The node stream always fuses the node's own
/// representation; the message stream multiplies it by the per-node gate
/// first. Neighbor aggregation is computed once and shared, and both streams
/// use the same layer parameters, so an all-ones gate makes both outputs
/// bitwise identical.
inline TapeDualState dual_propagate(Tape& t, const EncoderLayer& layer, const TapeDualState& s,
                                    ValueId gates, const EdgeIndex& g) {
    const DenseMatrix& gv = t.value(gates);
    if (gv.rows() != g.num_nodes || gv.cols() != 1) {
        throw std::invalid_argument("dual_propagate: gate vector shape " + gv.shape_str() +
                                    " != " + std::to_string(g.num_nodes) + "x1");
    }
    ValueId agg = neighbor_term(t, layer, s.M, s.R, g);
    ValueId h_new = activate(t, layer.act, t.add(agg, self_term(t, layer, s.H)));
    ValueId gated = t.mul(s.H, gates);
    ValueId m_new = activate(t, layer.act, t.add(agg, self_term(t, layer, gated)));
    return {h_new, m_new, relation_update(t, layer, s.R)};
}

/// Base-variant step: no gate, message stream tracks the node stream.
inline TapeDualState base_propagate(Tape& t, const EncoderLayer& layer, const TapeDualState& s,
                                    const EdgeIndex& g) {
    ValueId agg = neighbor_term(t, layer, s.M, s.R, g);
    ValueId h_new = activate(t, layer.act, t.add(agg, self_term(t, layer, s.H)));
    return {h_new, h_new, relation_update(t, layer, s.R)};
}

// ---------------------------------------------------------------------------
// Layer-0 state
// ---------------------------------------------------------------------------

enum class InitMode { KgEmbedding, NcProjection };

struct DualStateMatrices {
    DenseMatrix H, M, R;
};

inline DenseMatrix uniform_matrix(std::size_t rows, std::size_t cols, double lo, double hi,
                                  RngStream& rng) {
    DenseMatrix m(rows, cols);
    for (double& v : m.values()) v = rng.next_uniform(lo, hi);
    return m;
}

inline DenseMatrix glorot_matrix(std::size_t fan_in, std::size_t fan_out, RngStream& rng) {
    double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    return uniform_matrix(fan_in, fan_out, -limit, limit, rng);
}

/// Materialized layer-0 state per the initialization contract: H is the
/// embedding table (KG) or X W0 (node classification), M is a copy of H, and
/// R is uniform in [-1/sqrt(d), 1/sqrt(d)].
inline DualStateMatrices init_representations(std::size_t d, std::size_t num_nodes,
                                              std::size_t num_relations, RngStream& rng,
                                              InitMode mode,
                                              const DenseMatrix* features = nullptr) {
    if (d < 1) throw std::invalid_argument("init_representations: dims must be >= 1");
    double b = 1.0 / std::sqrt(static_cast<double>(d));
    DualStateMatrices s;
    if (mode == InitMode::KgEmbedding) {
        s.H = uniform_matrix(num_nodes, d, -b, b, rng);
    } else {
        if (features == nullptr) {
            throw std::invalid_argument("init_representations: NC mode needs features");
        }
        DenseMatrix W0 = glorot_matrix(features->cols(), d, rng);
        Tape t;
        s.H = t.value(t.matmul(t.constant(*features), t.constant(std::move(W0))));
    }
    s.M = s.H;
    s.R = uniform_matrix(num_relations, d, -b, b, rng);
    return s;
}

}  // namespace sfgnn
