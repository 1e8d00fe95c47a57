#pragma once

#include <algorithm>
#include <numeric>
#include <set>
#include <stdexcept>
#include <vector>

#include "sfgnn/graph.hpp"
#include "sfgnn/rng.hpp"

namespace sfgnn {

struct SyntheticNcParams {
    std::size_t nodes = 600;
    std::size_t classes = 4;
    double homophily = 0.8;        // fraction of edges drawn intra-class
    double noise_fraction = 0.3;   // fraction of nodes given class-independent features
    std::size_t feature_dim = 16;
    double avg_degree = 10.0;
    double within_class_sigma = 0.5;
};

/// Stochastic-block-model graph with class-conditioned Gaussian features.
/// A noise_fraction subset of nodes gets pure-noise features: planted
/// low-quality intermediaries for the filtering experiments. Splits are
/// 60/20/20 stratified by class.
inline HomogeneousGraph gen_synthetic_nc(const SyntheticNcParams& p, RngStream rng) {
    if (p.classes < 2) throw std::invalid_argument("gen_synthetic_nc: classes must be >= 2");
    if (p.nodes < p.classes) throw std::invalid_argument("gen_synthetic_nc: nodes < classes");
    if (p.homophily < 0.0 || p.homophily > 1.0 || p.noise_fraction < 0.0 ||
        p.noise_fraction > 1.0) {
        throw std::invalid_argument("gen_synthetic_nc: homophily and noise_fraction must be in [0,1]");
    }
    if (p.feature_dim < 1) throw std::invalid_argument("gen_synthetic_nc: feature_dim must be >= 1");

    HomogeneousGraph g;
    g.num_classes = p.classes;

    // Balanced labels on a shuffled node order.
    std::vector<std::size_t> order(p.nodes);
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t i = p.nodes; i > 1; --i) {
        std::swap(order[i - 1], order[rng.next_index(i)]);
    }
    g.labels.assign(p.nodes, 0);
    std::vector<std::vector<std::size_t>> members(p.classes);
    for (std::size_t i = 0; i < p.nodes; ++i) {
        std::size_t c = i % p.classes;
        g.labels[order[i]] = c;
        members[c].push_back(order[i]);
    }

    // Edges: each drawn intra-class with probability homophily and
    // inter-class otherwise, deduplicated.
    std::size_t target = static_cast<std::size_t>(p.nodes * p.avg_degree / 2.0);
    std::set<std::pair<std::size_t, std::size_t>> edges;
    std::size_t attempts = 0;
    std::size_t max_attempts = 200 * (target + 1);
    while (edges.size() < target) {
        if (++attempts > max_attempts) {
            throw std::invalid_argument("gen_synthetic_nc: degenerate params (cannot place edges)");
        }
        std::size_t a, b;
        if (rng.next_uniform() < p.homophily) {
            std::size_t c = rng.next_index(p.classes);
            if (members[c].size() < 2) continue;
            a = members[c][rng.next_index(members[c].size())];
            b = members[c][rng.next_index(members[c].size())];
            if (a == b) continue;
        } else {
            a = rng.next_index(p.nodes);
            b = rng.next_index(p.nodes);
            if (g.labels[a] == g.labels[b]) continue;
        }
        if (a > b) std::swap(a, b);
        edges.insert({a, b});
    }
    g.edges.assign(edges.begin(), edges.end());

    // Class centers, then features; noise nodes ignore their class center.
    DenseMatrix centers(p.classes, p.feature_dim);
    for (double& v : centers.values()) v = rng.next_gaussian();
    std::vector<int> noisy(p.nodes, 0);
    {
        std::vector<std::size_t> shuffled(order);
        for (std::size_t i = p.nodes; i > 1; --i) {
            std::swap(shuffled[i - 1], shuffled[rng.next_index(i)]);
        }
        std::size_t n_noise = static_cast<std::size_t>(p.noise_fraction * p.nodes);
        for (std::size_t i = 0; i < n_noise; ++i) noisy[shuffled[i]] = 1;
    }
    g.features = DenseMatrix(p.nodes, p.feature_dim);
    for (std::size_t v = 0; v < p.nodes; ++v) {
        for (std::size_t j = 0; j < p.feature_dim; ++j) {
            g.features(v, j) = noisy[v]
                                   ? rng.next_gaussian()
                                   : centers(g.labels[v], j) + p.within_class_sigma * rng.next_gaussian();
        }
    }

    // 60/20/20 stratified splits.
    for (std::size_t c = 0; c < p.classes; ++c) {
        auto& m = members[c];
        for (std::size_t i = m.size(); i > 1; --i) std::swap(m[i - 1], m[rng.next_index(i)]);
        std::size_t n_train = std::max<std::size_t>(1, static_cast<std::size_t>(m.size() * 0.6));
        std::size_t n_valid = std::max<std::size_t>(1, static_cast<std::size_t>(m.size() * 0.2));
        if (n_train + n_valid >= m.size()) {
            n_train = m.size() > 2 ? m.size() - 2 : 1;
            n_valid = m.size() > 1 ? 1 : 0;
        }
        for (std::size_t i = 0; i < m.size(); ++i) {
            if (i < n_train) g.train_nodes.push_back(m[i]);
            else if (i < n_train + n_valid) g.valid_nodes.push_back(m[i]);
            else g.test_nodes.push_back(m[i]);
        }
    }
    std::sort(g.train_nodes.begin(), g.train_nodes.end());
    std::sort(g.valid_nodes.begin(), g.valid_nodes.end());
    std::sort(g.test_nodes.begin(), g.test_nodes.end());

    g.validate();
    g.build_adjacency();
    return g;
}

struct SyntheticKgParams {
    std::size_t entities = 120;
    std::size_t relations = 4;
    std::string pattern = "ring";  // relation j steps j+1 positions around a ring
    double noise_fraction = 0.0;   // extra random train triples, as a fraction of train size
};

/// Ring knowledge graph with compositional relations: relation j connects
/// entity i to entity (i + j + 1) mod n, so relation j is the (j+1)-fold
/// composition of relation 0 and held-out triples stay derivable from the
/// training structure. Splits 80/10/10 with every entity and relation kept
/// in train. noise_fraction plants additional uniformly random triples in
/// train only (the low-quality intermediaries the filtering experiments
/// need); valid and test stay rule-derived.
inline KnowledgeGraph gen_synthetic_kg(const SyntheticKgParams& p, RngStream rng) {
    if (p.entities < 10) throw std::invalid_argument("gen_synthetic_kg: entities must be >= 10");
    if (p.relations < 2) throw std::invalid_argument("gen_synthetic_kg: relations must be >= 2");
    if (p.pattern != "ring") {
        throw std::invalid_argument("gen_synthetic_kg: unknown pattern '" + p.pattern + "'");
    }
    if (p.noise_fraction < 0.0 || p.noise_fraction > 1.0) {
        throw std::invalid_argument("gen_synthetic_kg: noise_fraction must be in [0,1]");
    }

    KnowledgeGraph kg;
    for (std::size_t i = 0; i < p.entities; ++i) kg.intern_entity("e" + std::to_string(i));
    for (std::size_t j = 0; j < p.relations; ++j) kg.intern_relation("r" + std::to_string(j));

    std::vector<Triple> all;
    for (std::size_t j = 0; j < p.relations; ++j) {
        std::size_t step = j + 1;
        for (std::size_t i = 0; i < p.entities; ++i) {
            all.push_back({i, j, (i + step) % p.entities});
        }
    }
    if (all.size() < 10) throw std::invalid_argument("gen_synthetic_kg: rule set produces < 10 triples");

    for (std::size_t i = all.size(); i > 1; --i) {
        std::swap(all[i - 1], all[rng.next_index(i)]);
    }

    // Move ~10% each into valid/test, but only when removal keeps every
    // entity and relation covered by train.
    std::size_t quota = all.size() / 10;
    std::vector<std::size_t> ent_cover(p.entities, 0), rel_cover(p.relations, 0);
    for (const Triple& t : all) {
        ++ent_cover[t.head];
        ++ent_cover[t.tail];
        ++rel_cover[t.rel];
    }
    auto removable = [&](const Triple& t) {
        std::size_t need_head = t.head == t.tail ? 2 : 1;
        return ent_cover[t.head] > need_head && ent_cover[t.tail] > 1 && rel_cover[t.rel] > 1;
    };
    auto remove_cover = [&](const Triple& t) {
        --ent_cover[t.head];
        --ent_cover[t.tail];
        --rel_cover[t.rel];
    };
    std::vector<int> assigned(all.size(), 0);  // 0 train, 1 valid, 2 test
    for (int split = 1; split <= 2; ++split) {
        std::size_t taken = 0;
        for (std::size_t i = 0; i < all.size() && taken < quota; ++i) {
            if (assigned[i] == 0 && removable(all[i])) {
                assigned[i] = split;
                remove_cover(all[i]);
                ++taken;
            }
        }
    }
    for (std::size_t i = 0; i < all.size(); ++i) {
        (assigned[i] == 0 ? kg.train : assigned[i] == 1 ? kg.valid : kg.test).push_back(all[i]);
    }
    std::size_t n_noise = static_cast<std::size_t>(p.noise_fraction * kg.train.size());
    for (std::size_t i = 0; i < n_noise; ++i) {
        kg.train.push_back({rng.next_index(p.entities), rng.next_index(p.relations),
                            rng.next_index(p.entities)});
    }
    kg.validate();
    kg.build_indexes();
    return kg;
}

}  // namespace sfgnn
