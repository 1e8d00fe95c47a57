#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include <json.hpp>

#include "sfgnn/config.hpp"
#include "sfgnn/evaluator.hpp"
#include "sfgnn/model.hpp"
#include "sfgnn/optim.hpp"
#include "sfgnn/synthetic.hpp"

namespace sfgnn {

/// Owning dataset bundle resolved from a RunConfig.
struct Dataset {
    TaskKind task = TaskKind::LinkPrediction;
    KnowledgeGraph kg;
    HomogeneousGraph nc;
    EdgeIndex edges;

    DatasetRef ref() const {
        DatasetRef r;
        if (task == TaskKind::LinkPrediction) r.kg = &kg;
        else r.nc = &nc;
        r.edges = &edges;
        return r;
    }
};

inline Dataset load_dataset(const RunConfig& cfg) {
    Dataset ds;
    ds.task = task_kind(cfg);
    std::filesystem::path dir(cfg.dataset);
    if (!std::filesystem::exists(dir)) {
        throw ConfigError("config field 'dataset': path does not exist: " + cfg.dataset);
    }
    if (ds.task == TaskKind::LinkPrediction) {
        ds.kg = load_kg(dir);
        ds.edges = build_edge_index(ds.kg);
    } else {
        std::optional<std::size_t> classes;
        std::filesystem::path meta = dir / "meta.json";
        if (std::filesystem::exists(meta)) {
            std::ifstream in(meta);
            nlohmann::json j;
            in >> j;
            if (j.contains("classes")) classes = j["classes"].get<std::size_t>();
        }
        ds.nc = load_homogeneous(dir, classes);
        ds.edges = build_edge_index(ds.nc);
    }
    return ds;
}

// ---------------------------------------------------------------------------
// Evaluation glue
// ---------------------------------------------------------------------------

struct EvalOutput {
    MetricsReport metrics;               // link prediction
    double accuracy = 0.0;               // node classification
    double metric = 0.0;                 // the model-selection value (MRR or accuracy)
    std::vector<RankRecord> records;
    std::vector<DenseMatrix> gate_bits;  // deterministic eval-mode trace
};

/// Run a deterministic eval-mode forward pass and score the given split:
/// filtered ranking for link prediction, argmax accuracy for classification.
inline EvalOutput evaluate_model(const RunConfig& cfg, const ParamMap& params,
                                 const DatasetRef& data, const std::vector<Triple>& lp_split,
                                 const std::vector<std::size_t>& nc_split) {
    EvalOutput out;
    Tape t;
    RngStream eval_rng = RngStream(cfg.seed).substream(0xe7a1);
    ForwardResult fwd = model_forward(t, cfg, params, data, ForwardMode::Eval, eval_rng);
    out.gate_bits = fwd.gate_bits;
    if (task_kind(cfg) == TaskKind::LinkPrediction) {
        const DenseMatrix& H = t.value(fwd.H_final);
        const DenseMatrix& R = t.value(fwd.R_decoder);
        ScorerKind kind = scorer_kind(decoder_kind(cfg));
        TripleScorer scorer = [&H, &R, kind](const Triple& tri) {
            return score_triple_value(kind, H, R, tri);
        };
        out.records.reserve(lp_split.size());
        for (const Triple& tri : lp_split) {
            out.records.push_back(rank_triple(scorer, tri, *data.kg));
        }
        out.metrics = compute_metrics(out.records);
        out.metric = out.metrics.mrr;
    } else {
        out.accuracy = accuracy(t.value(fwd.nc_logits), data.nc->labels, nc_split);
        out.metric = out.accuracy;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

struct Checkpoint {
    std::uint32_t version = 1;
    RunConfig config;
    ParamMap params;
    std::vector<DenseMatrix> gate_trace;  // per layer, num_nodes x 1 (sfgnn)
    std::uint64_t rng_seed = 0;
    std::uint64_t rng_counter = 0;
    std::size_t epoch = 0;
    double best_valid_metric = 0.0;
};

namespace ckpt_detail {

constexpr char magic[8] = {'S', 'F', 'G', 'N', 'N', 'C', 'K', 'P'};

inline std::uint64_t fnv1a64(const unsigned char* p, std::size_t n) {
    std::uint64_t h = 1469598103934665603ULL;
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 1099511628211ULL;
    }
    return h;
}

inline void write_u64le(std::ostream& out, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    out.write(reinterpret_cast<const char*>(b), 8);
}

inline std::uint64_t read_u64le(std::istream& in) {
    unsigned char b[8];
    in.read(reinterpret_cast<char*>(b), 8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}

inline std::string hex64(std::uint64_t v) {
    static const char* digits = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i) {
        s[i] = digits[v & 0xf];
        v >>= 4;
    }
    return s;
}

}  // namespace ckpt_detail

/// Versioned container: 8-byte magic, little-endian header length, JSON
/// header (names, shapes, config echo, payload checksum), then the raw
/// little-endian 64-bit float arrays in header order. Round-trips are
/// bit-exact.
inline void save_checkpoint(const Checkpoint& c, const std::filesystem::path& path) {
    std::vector<unsigned char> payload;
    nlohmann::ordered_json arrays = nlohmann::ordered_json::array();
    auto append = [&payload](const DenseMatrix& m) {
        const unsigned char* p = reinterpret_cast<const unsigned char*>(m.data());
        payload.insert(payload.end(), p, p + m.size() * sizeof(double));
    };
    for (const auto& [name, m] : c.params) {
        arrays.push_back({{"name", name}, {"rows", m.rows()}, {"cols", m.cols()}, {"kind", "param"}});
        append(m);
    }
    for (std::size_t l = 0; l < c.gate_trace.size(); ++l) {
        const DenseMatrix& m = c.gate_trace[l];
        arrays.push_back({{"name", "gate_trace." + std::to_string(l)},
                          {"rows", m.rows()},
                          {"cols", m.cols()},
                          {"kind", "gate"}});
        append(m);
    }
    nlohmann::ordered_json header;
    header["version"] = c.version;
    header["config"] = c.config;
    header["epoch"] = c.epoch;
    header["best_valid_metric"] = c.best_valid_metric;
    header["rng"] = {{"seed", c.rng_seed}, {"counter", c.rng_counter}};
    header["arrays"] = std::move(arrays);
    header["checksum"] =
        ckpt_detail::hex64(ckpt_detail::fnv1a64(payload.data(), payload.size()));
    std::string header_str = header.dump();

    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("save_checkpoint: cannot write " + path.string());
    out.write(ckpt_detail::magic, 8);
    ckpt_detail::write_u64le(out, header_str.size());
    out.write(header_str.data(), static_cast<std::streamsize>(header_str.size()));
    out.write(reinterpret_cast<const char*>(payload.data()),
              static_cast<std::streamsize>(payload.size()));
    if (!out) throw std::runtime_error("save_checkpoint: write failed for " + path.string());
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("load_checkpoint: cannot open " + path.string());
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, ckpt_detail::magic, 8) != 0) {
        throw std::runtime_error("load_checkpoint: not a checkpoint file: " + path.string());
    }
    std::uint64_t header_len = ckpt_detail::read_u64le(in);
    std::string header_str(header_len, '\0');
    in.read(header_str.data(), static_cast<std::streamsize>(header_len));
    if (!in) throw std::runtime_error("load_checkpoint: truncated header in " + path.string());
    nlohmann::ordered_json header = nlohmann::ordered_json::parse(header_str);

    Checkpoint c;
    c.version = header.at("version").get<std::uint32_t>();
    if (c.version != 1) {
        throw std::runtime_error("load_checkpoint: unsupported checkpoint version " +
                                 std::to_string(c.version));
    }
    c.config = header.at("config").get<RunConfig>();
    c.epoch = header.at("epoch").get<std::size_t>();
    c.best_valid_metric = header.at("best_valid_metric").get<double>();
    c.rng_seed = header.at("rng").at("seed").get<std::uint64_t>();
    c.rng_counter = header.at("rng").at("counter").get<std::uint64_t>();

    std::size_t total = 0;
    for (const auto& a : header.at("arrays")) {
        total += a.at("rows").get<std::size_t>() * a.at("cols").get<std::size_t>();
    }
    std::vector<unsigned char> payload(total * sizeof(double));
    in.read(reinterpret_cast<char*>(payload.data()), static_cast<std::streamsize>(payload.size()));
    if (static_cast<std::size_t>(in.gcount()) != payload.size()) {
        throw std::runtime_error("load_checkpoint: truncated payload in " + path.string());
    }
    std::string want = header.at("checksum").get<std::string>();
    std::string got = ckpt_detail::hex64(ckpt_detail::fnv1a64(payload.data(), payload.size()));
    if (want != got) {
        throw std::runtime_error("load_checkpoint: checksum mismatch in " + path.string());
    }

    std::size_t offset = 0;
    for (const auto& a : header.at("arrays")) {
        std::size_t rows = a.at("rows").get<std::size_t>();
        std::size_t cols = a.at("cols").get<std::size_t>();
        DenseMatrix m(rows, cols);
        std::memcpy(m.data(), payload.data() + offset, rows * cols * sizeof(double));
        offset += rows * cols * sizeof(double);
        if (a.at("kind").get<std::string>() == "param") {
            c.params.emplace(a.at("name").get<std::string>(), std::move(m));
        } else {
            c.gate_trace.push_back(std::move(m));
        }
    }
    return c;
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

struct EpochRecord {
    std::size_t epoch = 0;
    double loss = 0.0;
    double valid_metric = -1.0;  // -1 when validation was skipped this epoch
    double lr = 0.0;
};

struct TrainResult {
    Checkpoint checkpoint;
    std::vector<EpochRecord> log;
    bool diverged = false;
};

inline double temperature_at(const RunConfig& cfg, std::size_t epoch) {
    if (cfg.temperature_final <= 0.0 || cfg.epochs <= 1) return cfg.temperature;
    double f = static_cast<double>(epoch) / static_cast<double>(cfg.epochs - 1);
    return cfg.temperature + f * (cfg.temperature_final - cfg.temperature);
}

/// Full training run: per-epoch linear-decay Adam steps, per-epoch validation,
/// best-validation model selection. A non-finite loss aborts the run and
/// returns the best checkpoint seen so far with the divergence flagged.
inline TrainResult train(const RunConfig& cfg, const Dataset& ds) {
    validate_config(cfg);
    DatasetRef data = ds.ref();
    TaskKind task = ds.task;

    RngStream root(cfg.seed);
    RngStream init_rng = root.substream(1);
    RngStream train_rng = root.substream(2);

    ParamMap params = init_model_params(cfg, data, init_rng);
    AdamOptimizer adam;

    TrainResult result;
    ParamMap best_params = params;
    std::vector<DenseMatrix> best_trace;
    double best_metric = -std::numeric_limits<double>::infinity();
    std::size_t best_epoch = 0;

    std::vector<std::size_t> order;
    if (task == TaskKind::LinkPrediction) {
        order.resize(ds.kg.train.size());
        std::iota(order.begin(), order.end(), 0);
    }

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        double lr = linear_decay_lr(epoch, cfg.epochs, cfg.base_lr);
        double tau = temperature_at(cfg, epoch);
        double epoch_loss = 0.0;
        std::size_t steps = 0;
        try {
            if (task == TaskKind::LinkPrediction) {
                for (std::size_t i = order.size(); i > 1; --i) {
                    std::swap(order[i - 1], order[train_rng.next_index(i)]);
                }
                for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
                    std::size_t end = std::min(order.size(), start + cfg.batch_size);
                    std::vector<Triple> positives;
                    positives.reserve(end - start);
                    for (std::size_t i = start; i < end; ++i) positives.push_back(ds.kg.train[order[i]]);
                    NegativeBatch nb =
                        sample_negatives(positives, cfg.negatives, ds.kg.num_entities(), train_rng);
                    Tape t;
                    ForwardResult fwd =
                        model_forward(t, cfg, params, data, ForwardMode::Train, train_rng, tau);
                    ValueId scores = score_triples(t, scorer_kind(decoder_kind(cfg)), fwd.H_final,
                                                   fwd.R_decoder, nb.triples);
                    ValueId loss = bce_loss(t, scores, nb.labels);
                    epoch_loss += t.value(loss).item();
                    ++steps;
                    GradMap grads = t.backward(loss);
                    clip_global_norm(grads, cfg.grad_clip);
                    adam.step(params, grads, lr);
                }
            } else {
                Tape t;
                ForwardResult fwd =
                    model_forward(t, cfg, params, data, ForwardMode::Train, train_rng, tau);
                ValueId loss =
                    t.masked_ce_with_logits(fwd.nc_logits, ds.nc.labels, ds.nc.train_nodes);
                epoch_loss += t.value(loss).item();
                ++steps;
                GradMap grads = t.backward(loss);
                clip_global_norm(grads, cfg.grad_clip);
                adam.step(params, grads, lr);
            }
        } catch (const std::domain_error&) {
            result.diverged = true;
        }

        EpochRecord rec;
        rec.epoch = epoch;
        rec.loss = steps > 0 ? epoch_loss / static_cast<double>(steps) : std::nan("");
        rec.lr = lr;
        if (result.diverged) {
            result.log.push_back(rec);
            break;
        }
        bool do_valid = ((epoch + 1) % cfg.valid_every == 0) || (epoch + 1 == cfg.epochs);
        if (do_valid) {
            EvalOutput ev = evaluate_model(cfg, params, data, ds.kg.valid, ds.nc.valid_nodes);
            rec.valid_metric = ev.metric;
            if (ev.metric > best_metric) {
                best_metric = ev.metric;
                best_params = params;
                best_trace = ev.gate_bits;
                best_epoch = epoch;
            }
        }
        result.log.push_back(rec);
    }

    Checkpoint& c = result.checkpoint;
    c.config = cfg;
    c.params = std::move(best_params);
    c.gate_trace = std::move(best_trace);
    c.epoch = best_epoch;
    c.best_valid_metric = std::isfinite(best_metric) ? best_metric : 0.0;
    c.rng_seed = train_rng.seed();
    c.rng_counter = train_rng.counter();
    return result;
}

inline TrainResult train(const RunConfig& cfg) {
    Dataset ds = load_dataset(cfg);
    return train(cfg, ds);
}

inline void write_metric_log(const std::vector<EpochRecord>& log,
                             const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("write_metric_log: cannot write " + path.string());
    for (const EpochRecord& r : log) {
        nlohmann::ordered_json j;
        j["epoch"] = r.epoch;
        if (std::isfinite(r.loss)) j["loss"] = r.loss;
        else j["loss"] = nullptr;
        if (r.valid_metric >= 0.0) j["valid_metric"] = r.valid_metric;
        else j["valid_metric"] = nullptr;
        j["lr"] = r.lr;
        out << j.dump() << "\n";
    }
}

}  // namespace sfgnn
