#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "sfgnn/matrix.hpp"
#include "sfgnn/rng.hpp"

namespace sfgnn {

struct Triple {
    std::size_t head = 0;
    std::size_t rel = 0;
    std::size_t tail = 0;

    bool operator==(const Triple& o) const {
        return head == o.head && rel == o.rel && tail == o.tail;
    }
};

enum class EdgeDir { In, Out };

/// One entry of the neighbor index N_v: neighbor node, connecting relation,
/// and whether the underlying train edge points into or out of v.
struct NeighborEntry {
    std::size_t node = 0;
    std::size_t rel = 0;
    EdgeDir dir = EdgeDir::In;
};

namespace detail {

inline std::vector<std::string> split(const std::string& line, char sep) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        std::size_t pos = line.find(sep, start);
        if (pos == std::string::npos) {
            out.push_back(line.substr(start));
            break;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    return out;
}

inline std::string strip_cr(std::string s) {
    if (!s.empty() && s.back() == '\r') s.pop_back();
    return s;
}

inline std::size_t parse_index(const std::string& s, const std::string& where) {
    try {
        std::size_t pos = 0;
        long long v = std::stoll(s, &pos);
        if (pos != s.size() || v < 0) throw std::invalid_argument(s);
        return static_cast<std::size_t>(v);
    } catch (const std::exception&) {
        throw std::runtime_error(where + ": expected non-negative integer, got '" + s + "'");
    }
}

}  // namespace detail

/// Candidate membership index for the filtered ranking protocol: which
/// substituted triples are known true across train + valid + test.
class FilterIndex {
public:
    void add(const Triple& t, std::size_t num_relations) {
        tails_[key(t.head, t.rel, num_relations)].push_back(t.tail);
        heads_[key(t.tail, t.rel, num_relations)].push_back(t.head);
        num_relations_ = num_relations;
    }

    void finalize() {
        for (auto& [k, v] : tails_) sort_unique(v);
        for (auto& [k, v] : heads_) sort_unique(v);
    }

    /// Is (u, r, x) a known triple for some x = tail?
    bool known_tail(std::size_t u, std::size_t r, std::size_t tail) const {
        return contains(tails_, key(u, r, num_relations_), tail);
    }

    /// Is (x, r, v) a known triple for some x = head?
    bool known_head(std::size_t head, std::size_t r, std::size_t v) const {
        return contains(heads_, key(v, r, num_relations_), head);
    }

    bool operator==(const FilterIndex& o) const {
        return tails_ == o.tails_ && heads_ == o.heads_;
    }

private:
    static std::uint64_t key(std::size_t node, std::size_t rel, std::size_t num_relations) {
        return static_cast<std::uint64_t>(node) * num_relations + rel;
    }

    static void sort_unique(std::vector<std::size_t>& v) {
        std::sort(v.begin(), v.end());
        v.erase(std::unique(v.begin(), v.end()), v.end());
    }

    static bool contains(const std::unordered_map<std::uint64_t, std::vector<std::size_t>>& m,
                         std::uint64_t k, std::size_t x) {
        auto it = m.find(k);
        if (it == m.end()) return false;
        return std::binary_search(it->second.begin(), it->second.end(), x);
    }

    std::unordered_map<std::uint64_t, std::vector<std::size_t>> tails_;
    std::unordered_map<std::uint64_t, std::vector<std::size_t>> heads_;
    std::size_t num_relations_ = 1;
};

/// Entity/relation vocabularies, triple splits, and the derived indexes the
/// encoders and the evaluator need (neighbor lists, per-entity triples,
/// filtered-candidate membership).
class KnowledgeGraph {
public:
    std::vector<std::string> entity_names;
    std::vector<std::string> relation_names;
    std::vector<Triple> train, valid, test;

    std::size_t num_entities() const { return entity_names.size(); }
    std::size_t num_relations() const { return relation_names.size(); }

    std::size_t entity_id(const std::string& name) const { return lookup(entity_ids_, name, "entity"); }
    std::size_t relation_id(const std::string& name) const { return lookup(relation_ids_, name, "relation"); }

    /// N_v over train triples, one entry per incident edge per direction.
    const std::vector<NeighborEntry>& neighbors(std::size_t v) const { return neighbors_.at(v); }
    /// Indices into train of the triples containing entity x.
    const std::vector<std::size_t>& entity_triples(std::size_t x) const { return entity_triples_.at(x); }
    const FilterIndex& filter() const { return filter_; }

    std::size_t intern_entity(const std::string& name) {
        auto [it, inserted] = entity_ids_.try_emplace(name, entity_names.size());
        if (inserted) entity_names.push_back(name);
        return it->second;
    }

    std::size_t intern_relation(const std::string& name) {
        auto [it, inserted] = relation_ids_.try_emplace(name, relation_names.size());
        if (inserted) relation_names.push_back(name);
        return it->second;
    }

    /// Build neighbor, per-entity-triple, and filter indexes from the splits.
    /// Deterministic given the split contents, so rebuilding is idempotent.
    void build_indexes() {
        neighbors_.assign(num_entities(), {});
        entity_triples_.assign(num_entities(), {});
        filter_ = FilterIndex();
        for (std::size_t i = 0; i < train.size(); ++i) {
            const Triple& t = train[i];
            neighbors_[t.tail].push_back({t.head, t.rel, EdgeDir::In});
            neighbors_[t.head].push_back({t.tail, t.rel, EdgeDir::Out});
            entity_triples_[t.head].push_back(i);
            if (t.tail != t.head) entity_triples_[t.tail].push_back(i);
        }
        for (const auto* split : {&train, &valid, &test}) {
            for (const Triple& t : *split) filter_.add(t, num_relations());
        }
        filter_.finalize();
    }

    void validate() const {
        for (const auto* split : {&train, &valid, &test}) {
            for (const Triple& t : *split) {
                if (t.head >= num_entities() || t.tail >= num_entities() ||
                    t.rel >= num_relations()) {
                    throw std::runtime_error("KnowledgeGraph: triple component out of vocabulary");
                }
            }
        }
    }

private:
    static std::size_t lookup(const std::unordered_map<std::string, std::size_t>& m,
                              const std::string& name, const char* what) {
        auto it = m.find(name);
        if (it == m.end()) {
            throw std::out_of_range(std::string("unknown ") + what + " '" + name + "'");
        }
        return it->second;
    }

    std::unordered_map<std::string, std::size_t> entity_ids_;
    std::unordered_map<std::string, std::size_t> relation_ids_;
    std::vector<std::vector<NeighborEntry>> neighbors_;
    std::vector<std::vector<std::size_t>> entity_triples_;
    FilterIndex filter_;
};

/// Load a knowledge graph from a directory holding train.txt / valid.txt /
/// test.txt with one `head<TAB>relation<TAB>tail` triple per line.
/// Vocabularies are the union of all splits in encounter order.
inline KnowledgeGraph load_kg(const std::filesystem::path& dir) {
    KnowledgeGraph kg;
    const std::pair<const char*, std::vector<Triple> KnowledgeGraph::*> files[] = {
        {"train.txt", &KnowledgeGraph::train},
        {"valid.txt", &KnowledgeGraph::valid},
        {"test.txt", &KnowledgeGraph::test},
    };
    for (const auto& [fname, member] : files) {
        std::filesystem::path p = dir / fname;
        std::ifstream in(p);
        if (!in) throw std::runtime_error("load_kg: cannot open " + p.string());
        std::string line;
        std::size_t lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            line = detail::strip_cr(line);
            if (line.empty()) continue;
            auto parts = detail::split(line, '\t');
            if (parts.size() != 3) {
                throw std::runtime_error("load_kg: " + p.string() + ":" + std::to_string(lineno) +
                                         ": expected 3 tab-separated fields, got " +
                                         std::to_string(parts.size()));
            }
            Triple t;
            t.head = kg.intern_entity(parts[0]);
            t.rel = kg.intern_relation(parts[1]);
            t.tail = kg.intern_entity(parts[2]);
            (kg.*member).push_back(t);
        }
    }
    kg.validate();
    kg.build_indexes();
    return kg;
}

inline void save_kg(const KnowledgeGraph& kg, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    const std::pair<const char*, const std::vector<Triple>*> files[] = {
        {"train.txt", &kg.train},
        {"valid.txt", &kg.valid},
        {"test.txt", &kg.test},
    };
    for (const auto& [fname, split] : files) {
        std::ofstream out(dir / fname, std::ios::binary);
        if (!out) throw std::runtime_error("save_kg: cannot write " + (dir / fname).string());
        for (const Triple& t : *split) {
            out << kg.entity_names[t.head] << '\t' << kg.relation_names[t.rel] << '\t'
                << kg.entity_names[t.tail] << '\n';
        }
    }
}

// ---------------------------------------------------------------------------
// Homogeneous node-classification graphs
// ---------------------------------------------------------------------------

struct HomogeneousGraph {
    std::size_t num_classes = 0;
    DenseMatrix features;                                    // n x d0
    std::vector<std::size_t> labels;                         // per node
    std::vector<std::pair<std::size_t, std::size_t>> edges;  // undirected, deduplicated
    std::vector<std::size_t> train_nodes, valid_nodes, test_nodes;
    std::vector<std::vector<std::size_t>> adjacency;

    std::size_t num_nodes() const { return labels.size(); }

    void build_adjacency() {
        adjacency.assign(num_nodes(), {});
        for (const auto& [a, b] : edges) {
            adjacency[a].push_back(b);
            if (b != a) adjacency[b].push_back(a);
        }
    }

    void validate() const {
        std::size_t n = num_nodes();
        for (const auto& [a, b] : edges) {
            if (a >= n || b >= n) throw std::runtime_error("HomogeneousGraph: edge endpoint out of range");
        }
        for (std::size_t y : labels) {
            if (y >= num_classes) throw std::runtime_error("HomogeneousGraph: label out of range");
        }
        if (!features.all_finite()) throw std::runtime_error("HomogeneousGraph: non-finite feature");
        std::vector<int> seen(n, 0);
        for (const auto* split : {&train_nodes, &valid_nodes, &test_nodes}) {
            if (split->empty()) throw std::runtime_error("HomogeneousGraph: empty split");
            for (std::size_t v : *split) {
                if (v >= n) throw std::runtime_error("HomogeneousGraph: split node out of range");
                if (seen[v]++) throw std::runtime_error("HomogeneousGraph: split masks overlap");
            }
        }
    }
};

/// Load nodes.tsv (`id<TAB>label<TAB>f1,f2,...`), edges.tsv (`src<TAB>dst`)
/// and splits.tsv (`id<TAB>{train|valid|test}`). Duplicate edges collapse,
/// self loops survive. When expected_classes is given, labels must be below
/// it; otherwise the class count is inferred as max label + 1.
inline HomogeneousGraph load_homogeneous(const std::filesystem::path& nodes_path,
                                         const std::filesystem::path& edges_path,
                                         const std::filesystem::path& splits_path,
                                         std::optional<std::size_t> expected_classes = {}) {
    HomogeneousGraph g;

    std::ifstream nodes_in(nodes_path);
    if (!nodes_in) throw std::runtime_error("load_homogeneous: cannot open " + nodes_path.string());
    std::vector<std::vector<double>> feats;
    std::string line;
    std::size_t lineno = 0;
    std::size_t max_label = 0;
    std::vector<std::pair<std::size_t, std::size_t>> id_label;  // (id, label)
    while (std::getline(nodes_in, line)) {
        ++lineno;
        line = detail::strip_cr(line);
        if (line.empty()) continue;
        std::string where = nodes_path.string() + ":" + std::to_string(lineno);
        auto parts = detail::split(line, '\t');
        if (parts.size() != 3) {
            throw std::runtime_error(where + ": expected id<TAB>label<TAB>features, got " +
                                     std::to_string(parts.size()) + " fields");
        }
        std::size_t id = detail::parse_index(parts[0], where);
        std::size_t label = detail::parse_index(parts[1], where);
        if (expected_classes && label >= *expected_classes) {
            throw std::runtime_error(where + ": label out of range (" + parts[1] + " >= " +
                                     std::to_string(*expected_classes) + ")");
        }
        max_label = std::max(max_label, label);
        std::vector<double> row;
        for (const std::string& f : detail::split(parts[2], ',')) {
            try {
                row.push_back(std::stod(f));
            } catch (const std::exception&) {
                throw std::runtime_error(where + ": bad feature value '" + f + "'");
            }
        }
        if (!feats.empty() && row.size() != feats[0].size()) {
            throw std::runtime_error(where + ": feature arity mismatch (" +
                                     std::to_string(row.size()) + " vs " +
                                     std::to_string(feats[0].size()) + ")");
        }
        id_label.emplace_back(id, label);
        feats.push_back(std::move(row));
    }
    std::size_t n = id_label.size();
    g.labels.assign(n, 0);
    g.features = DenseMatrix(n, feats.empty() ? 0 : feats[0].size());
    std::vector<int> have(n, 0);
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t id = id_label[i].first;
        if (id >= n || have[id]++) {
            throw std::runtime_error(nodes_path.string() + ": node ids must be 0.." +
                                     std::to_string(n - 1) + " without repeats");
        }
        g.labels[id] = id_label[i].second;
        for (std::size_t j = 0; j < feats[i].size(); ++j) g.features(id, j) = feats[i][j];
    }
    g.num_classes = expected_classes ? *expected_classes : (n == 0 ? 0 : max_label + 1);

    std::ifstream edges_in(edges_path);
    if (!edges_in) throw std::runtime_error("load_homogeneous: cannot open " + edges_path.string());
    std::vector<std::pair<std::size_t, std::size_t>> raw;
    lineno = 0;
    while (std::getline(edges_in, line)) {
        ++lineno;
        line = detail::strip_cr(line);
        if (line.empty()) continue;
        std::string where = edges_path.string() + ":" + std::to_string(lineno);
        auto parts = detail::split(line, '\t');
        if (parts.size() != 2) {
            throw std::runtime_error(where + ": expected src<TAB>dst");
        }
        std::size_t a = detail::parse_index(parts[0], where);
        std::size_t b = detail::parse_index(parts[1], where);
        if (a >= n || b >= n) throw std::runtime_error(where + ": edge endpoint out of range");
        if (a > b) std::swap(a, b);  // undirected canonical form
        raw.emplace_back(a, b);
    }
    std::sort(raw.begin(), raw.end());
    raw.erase(std::unique(raw.begin(), raw.end()), raw.end());
    g.edges = std::move(raw);

    std::ifstream splits_in(splits_path);
    if (!splits_in) throw std::runtime_error("load_homogeneous: cannot open " + splits_path.string());
    lineno = 0;
    while (std::getline(splits_in, line)) {
        ++lineno;
        line = detail::strip_cr(line);
        if (line.empty()) continue;
        std::string where = splits_path.string() + ":" + std::to_string(lineno);
        auto parts = detail::split(line, '\t');
        if (parts.size() != 2) throw std::runtime_error(where + ": expected id<TAB>split");
        std::size_t id = detail::parse_index(parts[0], where);
        if (parts[1] == "train") g.train_nodes.push_back(id);
        else if (parts[1] == "valid") g.valid_nodes.push_back(id);
        else if (parts[1] == "test") g.test_nodes.push_back(id);
        else throw std::runtime_error(where + ": unknown split '" + parts[1] + "'");
    }
    g.validate();
    g.build_adjacency();
    return g;
}

inline HomogeneousGraph load_homogeneous(const std::filesystem::path& dir,
                                         std::optional<std::size_t> expected_classes = {}) {
    return load_homogeneous(dir / "nodes.tsv", dir / "edges.tsv", dir / "splits.tsv",
                            expected_classes);
}

inline void save_homogeneous(const HomogeneousGraph& g, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    {
        std::ofstream out(dir / "nodes.tsv", std::ios::binary);
        if (!out) throw std::runtime_error("save_homogeneous: cannot write nodes.tsv");
        char buf[64];
        for (std::size_t i = 0; i < g.num_nodes(); ++i) {
            out << i << '\t' << g.labels[i] << '\t';
            for (std::size_t j = 0; j < g.features.cols(); ++j) {
                std::snprintf(buf, sizeof(buf), "%.17g", g.features(i, j));
                out << (j ? "," : "") << buf;
            }
            out << '\n';
        }
    }
    {
        std::ofstream out(dir / "edges.tsv", std::ios::binary);
        for (const auto& [a, b] : g.edges) out << a << '\t' << b << '\n';
    }
    {
        std::ofstream out(dir / "splits.tsv", std::ios::binary);
        for (std::size_t v : g.train_nodes) out << v << "\ttrain\n";
        for (std::size_t v : g.valid_nodes) out << v << "\tvalid\n";
        for (std::size_t v : g.test_nodes) out << v << "\ttest\n";
    }
}

// ---------------------------------------------------------------------------
// Negative sampling
// ---------------------------------------------------------------------------

/// Positives followed by their corruptions, label-aligned. Corruption block i
/// holds k triples derived from positive i.
struct NegativeBatch {
    std::vector<Triple> triples;
    std::vector<double> labels;
    std::size_t num_positives = 0;
    std::size_t k = 0;
};

/// Corrupt each positive k times: fair coin between head and tail slot,
/// replacement uniform over the other entities. The corrupted triple always
/// differs from its positive in exactly the chosen slot.
inline NegativeBatch sample_negatives(const std::vector<Triple>& positives, std::size_t k,
                                      std::size_t num_entities, RngStream& rng) {
    if (k < 1) throw std::invalid_argument("sample_negatives: k must be >= 1");
    if (num_entities < 2) throw std::invalid_argument("sample_negatives: need at least 2 entities");
    NegativeBatch batch;
    batch.num_positives = positives.size();
    batch.k = k;
    batch.triples = positives;
    batch.labels.assign(positives.size(), 1.0);
    batch.triples.reserve(positives.size() * (k + 1));
    for (const Triple& pos : positives) {
        for (std::size_t c = 0; c < k; ++c) {
            Triple neg = pos;
            bool corrupt_head = rng.next_coin();
            std::size_t original = corrupt_head ? pos.head : pos.tail;
            std::size_t repl = rng.next_index(num_entities - 1);
            if (repl >= original) ++repl;
            (corrupt_head ? neg.head : neg.tail) = repl;
            batch.triples.push_back(neg);
            batch.labels.push_back(0.0);
        }
    }
    return batch;
}

// ---------------------------------------------------------------------------
// Filtered candidates
// ---------------------------------------------------------------------------

enum class RankDirection { Head, Tail };

struct CandidateSet {
    std::vector<std::size_t> entities;  // ascending entity id
    std::size_t answer_pos = 0;         // position of the true answer within entities
};

/// All entities that survive the filtered protocol for ranking one slot of a
/// triple: every candidate whose substituted triple is known true (in any
/// split) is removed, except the true answer, which always stays.
inline CandidateSet filtered_candidates(const KnowledgeGraph& kg, const Triple& t,
                                        RankDirection dir) {
    if (t.head >= kg.num_entities() || t.tail >= kg.num_entities() ||
        t.rel >= kg.num_relations()) {
        throw std::out_of_range("filtered_candidates: triple outside vocabulary");
    }
    CandidateSet cs;
    std::size_t answer = dir == RankDirection::Head ? t.head : t.tail;
    for (std::size_t e = 0; e < kg.num_entities(); ++e) {
        if (e != answer) {
            bool known = dir == RankDirection::Head ? kg.filter().known_head(e, t.rel, t.tail)
                                                    : kg.filter().known_tail(t.head, t.rel, e);
            if (known) continue;
        }
        if (e == answer) cs.answer_pos = cs.entities.size();
        cs.entities.push_back(e);
    }
    return cs;
}

}  // namespace sfgnn
