#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "sfgnn/decoders.hpp"
#include "sfgnn/encoders.hpp"
#include "sfgnn/self_filter.hpp"

namespace sfgnn {

/// Usage/config problems (CLI exit code 2), as opposed to runtime failures.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class TaskKind { NodeClassification, LinkPrediction };
enum class EncoderKind { HomoMean, Rgcn, CompGcn };
enum class DecoderKind { Classifier, TransE, DistMult };
enum class Variant { Base, SfGnn };

struct RunConfig {
    std::string task = "link_prediction";  // link_prediction | node_classification
    std::string encoder = "compgcn";       // homo_mean | rgcn | compgcn
    std::string decoder = "distmult";      // transe | distmult | classifier
    std::size_t layers = 2;
    std::size_t dim = 32;
    std::string variant = "base";          // base | sfgnn
    std::size_t epochs = 200;
    std::size_t batch_size = 1024;
    double base_lr = 0.001;
    std::size_t negatives = 10;
    double temperature = 1.0;
    double temperature_final = -1.0;       // < 0: keep constant; else linear anneal target
    std::uint64_t seed = 1;
    std::string dataset;
    bool detach_quality = false;
    std::size_t quality_cap = 32;
    std::string quality_mode = "max_prob";  // max_prob | true_class_train
    bool quality_raw_scores = false;
    bool eval_gate_sampled = false;        // eval-mode gate policy: sample instead of argmax
    bool pin_gates = false;                // debug: sfgnn machinery, gates forced 1
    double gate_w_init = 1.0;
    double grad_clip = 10.0;
    std::size_t valid_every = 1;
};

inline TaskKind task_kind(const RunConfig& c) {
    if (c.task == "link_prediction") return TaskKind::LinkPrediction;
    if (c.task == "node_classification") return TaskKind::NodeClassification;
    throw ConfigError("config field 'task': unknown value '" + c.task + "'");
}

inline EncoderKind encoder_kind(const RunConfig& c) {
    if (c.encoder == "homo_mean") return EncoderKind::HomoMean;
    if (c.encoder == "rgcn") return EncoderKind::Rgcn;
    if (c.encoder == "compgcn") return EncoderKind::CompGcn;
    throw ConfigError("config field 'encoder': unknown value '" + c.encoder + "'");
}

inline DecoderKind decoder_kind(const RunConfig& c) {
    if (c.decoder == "classifier") return DecoderKind::Classifier;
    if (c.decoder == "transe") return DecoderKind::TransE;
    if (c.decoder == "distmult") return DecoderKind::DistMult;
    throw ConfigError("config field 'decoder': unknown value '" + c.decoder + "'");
}

inline Variant variant_kind(const RunConfig& c) {
    if (c.variant == "base") return Variant::Base;
    if (c.variant == "sfgnn") return Variant::SfGnn;
    throw ConfigError("config field 'variant': unknown value '" + c.variant + "'");
}

inline QualityNcMode quality_nc_mode(const RunConfig& c) {
    if (c.quality_mode == "max_prob") return QualityNcMode::MaxProb;
    if (c.quality_mode == "true_class_train") return QualityNcMode::TrueClassOnTrain;
    throw ConfigError("config field 'quality_mode': unknown value '" + c.quality_mode + "'");
}

inline void validate_config(const RunConfig& c) {
    TaskKind task = task_kind(c);
    EncoderKind enc = encoder_kind(c);
    DecoderKind dec = decoder_kind(c);
    variant_kind(c);
    quality_nc_mode(c);
    if (c.dataset.empty()) throw ConfigError("config field 'dataset': missing dataset path");
    if (c.layers < 1) throw ConfigError("config field 'layers': must be >= 1");
    if (c.dim < 1) throw ConfigError("config field 'dim': must be >= 1");
    if (c.epochs < 1) throw ConfigError("config field 'epochs': must be >= 1");
    if (!(c.temperature > 0.0)) throw ConfigError("config field 'temperature': must be > 0");
    if (c.quality_cap < 1) throw ConfigError("config field 'quality_cap': must be >= 1");
    if (task == TaskKind::LinkPrediction) {
        if (c.negatives < 1) throw ConfigError("config field 'negatives': must be >= 1 for link prediction");
        if (c.batch_size < 1) throw ConfigError("config field 'batch_size': must be >= 1");
        if (enc == EncoderKind::HomoMean) {
            throw ConfigError("config field 'encoder': homo_mean is a node-classification encoder");
        }
        if (dec == DecoderKind::Classifier) {
            throw ConfigError("config field 'decoder': link prediction needs transe or distmult");
        }
    } else {
        if (enc != EncoderKind::HomoMean) {
            throw ConfigError("config field 'encoder': node classification uses homo_mean");
        }
        if (dec != DecoderKind::Classifier) {
            throw ConfigError("config field 'decoder': node classification uses classifier");
        }
    }
}

/// Default activation per encoder: tanh for CompGCN, relu otherwise.
inline Activation default_activation(EncoderKind k) {
    return k == EncoderKind::CompGcn ? Activation::Tanh : Activation::Relu;
}

/// CompGCN composition matched to the decoder family: subtraction for TransE,
/// multiplication for DistMult.
inline Composition composition_for(DecoderKind d) {
    return d == DecoderKind::TransE ? Composition::Subtraction : Composition::Multiplication;
}

inline ScorerKind scorer_kind(DecoderKind d) {
    if (d == DecoderKind::TransE) return ScorerKind::TransE;
    if (d == DecoderKind::DistMult) return ScorerKind::DistMult;
    throw ConfigError("scorer_kind: classifier decoder has no triple scorer");
}

inline GateConfig gate_config(const RunConfig& c) {
    GateConfig g;
    g.temperature = c.temperature;
    g.detach_quality = c.detach_quality;
    g.quality_cap = c.quality_cap;
    g.quality_raw_scores = c.quality_raw_scores;
    g.eval_sampled = c.eval_gate_sampled;
    g.nc_mode = quality_nc_mode(c);
    return g;
}

// ---- JSON binding ----------------------------------------------------------

inline void to_json(nlohmann::ordered_json& j, const RunConfig& c) {
    j = nlohmann::ordered_json{{"task", c.task},
                               {"encoder", c.encoder},
                               {"decoder", c.decoder},
                               {"layers", c.layers},
                               {"dim", c.dim},
                               {"variant", c.variant},
                               {"epochs", c.epochs},
                               {"batch_size", c.batch_size},
                               {"base_lr", c.base_lr},
                               {"negatives", c.negatives},
                               {"temperature", c.temperature},
                               {"temperature_final", c.temperature_final},
                               {"seed", c.seed},
                               {"dataset", c.dataset},
                               {"detach_quality", c.detach_quality},
                               {"quality_cap", c.quality_cap},
                               {"quality_mode", c.quality_mode},
                               {"quality_raw_scores", c.quality_raw_scores},
                               {"eval_gate_sampled", c.eval_gate_sampled},
                               {"pin_gates", c.pin_gates},
                               {"gate_w_init", c.gate_w_init},
                               {"grad_clip", c.grad_clip},
                               {"valid_every", c.valid_every}};
}

inline void from_json(const nlohmann::ordered_json& j, RunConfig& c) {
    RunConfig defaults;
    c = defaults;
    for (const auto& [key, value] : j.items()) {
        try {
            if (key == "task") value.get_to(c.task);
            else if (key == "encoder") value.get_to(c.encoder);
            else if (key == "decoder") value.get_to(c.decoder);
            else if (key == "layers") value.get_to(c.layers);
            else if (key == "dim") value.get_to(c.dim);
            else if (key == "variant") value.get_to(c.variant);
            else if (key == "epochs") value.get_to(c.epochs);
            else if (key == "batch_size") value.get_to(c.batch_size);
            else if (key == "base_lr") value.get_to(c.base_lr);
            else if (key == "negatives") value.get_to(c.negatives);
            else if (key == "temperature") value.get_to(c.temperature);
            else if (key == "temperature_final") value.get_to(c.temperature_final);
            else if (key == "seed") value.get_to(c.seed);
            else if (key == "dataset") value.get_to(c.dataset);
            else if (key == "detach_quality") value.get_to(c.detach_quality);
            else if (key == "quality_cap") value.get_to(c.quality_cap);
            else if (key == "quality_mode") value.get_to(c.quality_mode);
            else if (key == "quality_raw_scores") value.get_to(c.quality_raw_scores);
            else if (key == "eval_gate_sampled") value.get_to(c.eval_gate_sampled);
            else if (key == "pin_gates") value.get_to(c.pin_gates);
            else if (key == "gate_w_init") value.get_to(c.gate_w_init);
            else if (key == "grad_clip") value.get_to(c.grad_clip);
            else if (key == "valid_every") value.get_to(c.valid_every);
            else throw ConfigError("config: unknown field '" + key + "'");
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError("config field '" + key + "': " + e.what());
        }
    }
}

}  // namespace sfgnn
