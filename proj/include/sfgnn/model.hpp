#pragma once

#include <map>
#include <string>
#include <vector>

#include "sfgnn/config.hpp"
#include "sfgnn/decoders.hpp"
#include "sfgnn/encoders.hpp"
#include "sfgnn/graph.hpp"
#include "sfgnn/optim.hpp"
#include "sfgnn/self_filter.hpp"
#include "sfgnn/tape.hpp"

namespace sfgnn {

/// The graph a model runs on; exactly one of kg / nc is set.
struct DatasetRef {
    const KnowledgeGraph* kg = nullptr;
    const HomogeneousGraph* nc = nullptr;
    const EdgeIndex* edges = nullptr;

    std::size_t num_nodes() const { return kg ? kg->num_entities() : nc->num_nodes(); }
};

inline std::string layer_prefix(std::size_t l) { return "layer" + std::to_string(l) + "."; }
inline std::string gate_w_name(std::size_t l) { return "gate_w." + std::to_string(l); }

/// Create every parameter block for a run: layer-0 representations, one
/// weight set per layer, the decoder head, and (sfgnn) per-layer gate
/// scalers. Creation order is fixed so a seed pins all values.
inline ParamMap init_model_params(const RunConfig& cfg, const DatasetRef& data, RngStream rng) {
    validate_config(cfg);
    ParamMap params;
    TaskKind task = task_kind(cfg);
    EncoderKind enc = encoder_kind(cfg);
    std::size_t d = cfg.dim;
    double b = 1.0 / std::sqrt(static_cast<double>(d));

    if (task == TaskKind::LinkPrediction) {
        params.emplace("entity_embed", uniform_matrix(data.kg->num_entities(), d, -b, b, rng));
        params.emplace("relation_embed", uniform_matrix(data.kg->num_relations(), d, -b, b, rng));
    } else {
        params.emplace("input_proj", glorot_matrix(data.nc->features.cols(), d, rng));
    }

    for (std::size_t l = 0; l < cfg.layers; ++l) {
        std::string p = layer_prefix(l);
        switch (enc) {
            case EncoderKind::HomoMean:
                params.emplace(p + "W_self", glorot_matrix(d, d, rng));
                params.emplace(p + "W_neigh", glorot_matrix(d, d, rng));
                break;
            case EncoderKind::Rgcn:
                params.emplace(p + "W_ent", glorot_matrix(d, d, rng));
                for (std::size_t r = 0; r < data.kg->num_relations(); ++r) {
                    params.emplace(p + "rel" + std::to_string(r), glorot_matrix(d, d, rng));
                }
                break;
            case EncoderKind::CompGcn:
                params.emplace(p + "W_in", glorot_matrix(d, d, rng));
                params.emplace(p + "W_out", glorot_matrix(d, d, rng));
                params.emplace(p + "W_self", glorot_matrix(d, d, rng));
                params.emplace(p + "W_rel", glorot_matrix(d, d, rng));
                params.emplace(p + "h_loop", uniform_matrix(1, d, -b, b, rng));
                break;
        }
    }

    if (task == TaskKind::NodeClassification) {
        std::size_t classes = data.nc->num_classes;
        params.emplace("head.W1", glorot_matrix(d, d, rng));
        params.emplace("head.b1", DenseMatrix(1, d, 0.0));
        params.emplace("head.W2", glorot_matrix(d, classes, rng));
        params.emplace("head.b2", DenseMatrix(1, classes, 0.0));
    }

    if (variant_kind(cfg) == Variant::SfGnn) {
        for (std::size_t l = 0; l < cfg.layers; ++l) {
            params.emplace(gate_w_name(l), DenseMatrix::scalar(cfg.gate_w_init));
        }
    }
    return params;
}

enum class ForwardMode { Train, Eval };

struct ForwardResult {
    ValueId H_final = 0;
    ValueId R_decoder = 0;               // relation stream the decoder consumes (LP)
    ValueId nc_logits = 0;               // classifier logits (NC)
    std::vector<DenseMatrix> gate_bits;  // eval-mode per-layer gate trace (sfgnn)
};

namespace model_detail {

inline EncoderLayer make_layer(const RunConfig& cfg, const std::map<std::string, ValueId>& ids,
                               std::size_t l, std::size_t num_relations) {
    EncoderLayer layer;
    EncoderKind enc = encoder_kind(cfg);
    layer.act = default_activation(enc);
    std::string p = layer_prefix(l);
    switch (enc) {
        case EncoderKind::HomoMean:
            layer.params = HomoMeanParams{ids.at(p + "W_self"), ids.at(p + "W_neigh")};
            break;
        case EncoderKind::Rgcn: {
            RgcnParams rp;
            rp.W_ent = ids.at(p + "W_ent");
            for (std::size_t r = 0; r < num_relations; ++r) {
                rp.W_rel.push_back(ids.at(p + "rel" + std::to_string(r)));
            }
            layer.params = std::move(rp);
            break;
        }
        case EncoderKind::CompGcn: {
            CompGcnParams cp;
            cp.W_in = ids.at(p + "W_in");
            cp.W_out = ids.at(p + "W_out");
            cp.W_self = ids.at(p + "W_self");
            cp.W_rel = ids.at(p + "W_rel");
            cp.h_loop = ids.at(p + "h_loop");
            cp.comp = composition_for(decoder_kind(cfg));
            layer.params = cp;
            break;
        }
    }
    return layer;
}

}  // namespace model_detail

/// Place every parameter on the tape and run the L-layer forward pass.
///
/// Train mode samples hard straight-through gates per layer; eval mode uses
/// the deterministic argmax gate and records the per-layer bits. The base
/// variant runs the single-stream update with no gate machinery at all; the
/// pin_gates debug flag runs the dual machinery with constant all-ones gates.
inline ForwardResult model_forward(Tape& t, const RunConfig& cfg, const ParamMap& params,
                                   const DatasetRef& data, ForwardMode mode, RngStream& rng,
                                   double temperature_now = -1.0) {
    TaskKind task = task_kind(cfg);
    EncoderKind enc = encoder_kind(cfg);

    std::map<std::string, ValueId> ids;
    for (const auto& [name, value] : params) ids.emplace(name, t.param(name, value));

    TapeDualState state;
    ValueId relation_0 = 0;
    if (task == TaskKind::LinkPrediction) {
        state.H = ids.at("entity_embed");
        state.R = relation_0 = ids.at("relation_embed");
    } else {
        state.H = t.matmul(t.constant(data.nc->features), ids.at("input_proj"));
        state.R = t.constant(DenseMatrix(0, 0));
    }
    state.M = state.H;

    ClassifierHeadIds head;
    if (task == TaskKind::NodeClassification) {
        head = {ids.at("head.W1"), ids.at("head.b1"), ids.at("head.W2"), ids.at("head.b2")};
    }

    GateConfig gate_cfg = gate_config(cfg);
    if (temperature_now > 0.0) gate_cfg.temperature = temperature_now;
    Variant variant = variant_kind(cfg);
    std::size_t n = data.num_nodes();

    ForwardResult res;
    for (std::size_t l = 0; l < cfg.layers; ++l) {
        EncoderLayer layer = model_detail::make_layer(
            cfg, ids, l, task == TaskKind::LinkPrediction ? data.kg->num_relations() : 0);
        if (variant == Variant::Base) {
            state = base_propagate(t, layer, state, *data.edges);
            continue;
        }
        ValueId gates;
        if (cfg.pin_gates) {
            gates = t.constant(DenseMatrix(n, 1, 1.0));
        } else {
            ValueId qual;
            if (task == TaskKind::NodeClassification) {
                qual = quality_nc(t, head, state.H, gate_cfg, &data.nc->labels,
                                  &data.nc->train_nodes);
            } else {
                ValueId rel_for_quality = enc == EncoderKind::Rgcn ? relation_0 : state.R;
                qual = quality_kg(t, scorer_kind(decoder_kind(cfg)), state.H, rel_for_quality,
                                  *data.kg, gate_cfg, rng);
            }
            if (mode == ForwardMode::Train) {
                gates = gate_train(t, qual, ids.at(gate_w_name(l)), gate_cfg.temperature, rng);
            } else {
                double w = t.value(ids.at(gate_w_name(l))).item();
                DenseMatrix bits = gate_cfg.eval_sampled
                                       ? gate_eval_sampled(w, t.value(qual), gate_cfg.temperature, rng)
                                       : gate_eval(w, t.value(qual));
                res.gate_bits.push_back(bits);
                gates = t.constant(std::move(bits));
            }
        }
        state = dual_propagate(t, layer, state, gates, *data.edges);
    }

    res.H_final = state.H;
    if (task == TaskKind::LinkPrediction) {
        res.R_decoder = enc == EncoderKind::Rgcn ? relation_0 : state.R;
    } else {
        res.nc_logits = classifier_logits(t, head, state.H);
    }
    return res;
}

}  // namespace sfgnn
