#pragma once

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "sfgnn/config.hpp"
#include "sfgnn/synthetic.hpp"
#include "sfgnn/trainer.hpp"

namespace sfgnn {
namespace cli {

/// Read a JSON config file, apply `--set key=value` overrides (dotted keys
/// navigate nested objects), then an optional seed override.
inline RunConfig load_config(const std::filesystem::path& path,
                             const std::vector<std::string>& sets,
                             std::optional<std::uint64_t> seed_override) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path.string());
    nlohmann::ordered_json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config parse error in " + path.string() + ": " + e.what());
    }
    for (const std::string& s : sets) {
        std::size_t eq = s.find('=');
        if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + s + "'");
        std::string key = s.substr(0, eq);
        std::string raw = s.substr(eq + 1);
        nlohmann::ordered_json value;
        try {
            value = nlohmann::ordered_json::parse(raw);
        } catch (const nlohmann::json::exception&) {
            value = raw;  // not valid JSON: treat as string
        }
        nlohmann::ordered_json* node = &j;
        std::size_t start = 0;
        while (true) {
            std::size_t dot = key.find('.', start);
            std::string part = key.substr(start, dot - start);
            if (part.empty()) throw ConfigError("--set: empty key segment in '" + key + "'");
            if (dot == std::string::npos) {
                (*node)[part] = value;
                break;
            }
            node = &(*node)[part];
            start = dot + 1;
        }
    }
    RunConfig cfg = j.get<RunConfig>();
    if (seed_override) cfg.seed = *seed_override;
    return cfg;
}

inline std::optional<std::uint64_t> env_seed_override() {
    const char* v = std::getenv("SELFGATE_SEED");
    if (v == nullptr || *v == '\0') return std::nullopt;
    try {
        return static_cast<std::uint64_t>(std::stoull(v));
    } catch (const std::exception&) {
        throw ConfigError(std::string("SELFGATE_SEED: not an integer: ") + v);
    }
}

// ---------------------------------------------------------------------------
// gen
// ---------------------------------------------------------------------------

struct GenArgs {
    std::string kind;  // "nc" | "kg"
    std::filesystem::path out;
    std::uint64_t seed = 1;
    SyntheticNcParams nc;
    SyntheticKgParams kg;
};

inline int cmd_gen(const GenArgs& args) {
    std::filesystem::create_directories(args.out);
    nlohmann::ordered_json meta;
    meta["seed"] = args.seed;
    RngStream rng(args.seed);
    if (args.kind == "kg") {
        KnowledgeGraph g = gen_synthetic_kg(args.kg, rng);
        save_kg(g, args.out);
        meta["kind"] = "kg";
        meta["entities"] = args.kg.entities;
        meta["relations"] = args.kg.relations;
        meta["pattern"] = args.kg.pattern;
        meta["triples"] = {{"train", g.train.size()}, {"valid", g.valid.size()}, {"test", g.test.size()}};
    } else if (args.kind == "nc") {
        HomogeneousGraph g = gen_synthetic_nc(args.nc, rng);
        save_homogeneous(g, args.out);
        meta["kind"] = "nc";
        meta["nodes"] = args.nc.nodes;
        meta["classes"] = args.nc.classes;
        meta["homophily"] = args.nc.homophily;
        meta["noise_fraction"] = args.nc.noise_fraction;
        meta["feature_dim"] = args.nc.feature_dim;
        meta["avg_degree"] = args.nc.avg_degree;
        meta["within_class_sigma"] = args.nc.within_class_sigma;
        meta["edges"] = g.edges.size();
    } else {
        throw ConfigError("gen: kind must be 'nc' or 'kg', got '" + args.kind + "'");
    }
    std::ofstream out(args.out / "meta.json", std::ios::binary);
    out << meta.dump(2) << "\n";
    std::cout << "wrote dataset to " << args.out.string() << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

struct TrainArgs {
    std::filesystem::path config_path;
    std::vector<std::string> sets;
    std::filesystem::path out_dir = ".";
};

inline int cmd_train(const TrainArgs& args) {
    RunConfig cfg = load_config(args.config_path, args.sets, env_seed_override());
    validate_config(cfg);
    std::filesystem::create_directories(args.out_dir);
    TrainResult res = train(cfg);
    save_checkpoint(res.checkpoint, args.out_dir / "checkpoint.sfgnn");
    write_metric_log(res.log, args.out_dir / "metrics.jsonl");
    std::cout << "best_valid_metric=" << res.checkpoint.best_valid_metric
              << " epoch=" << res.checkpoint.epoch << (res.diverged ? " (diverged)" : "") << "\n";
    return res.diverged ? 1 : 0;
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

struct EvalArgs {
    std::filesystem::path checkpoint;
    std::string dataset_override;  // empty: use the checkpoint's dataset
    std::string split = "test";    // test | valid
    std::filesystem::path out_json;  // empty: print only
};

inline int cmd_eval(const EvalArgs& args) {
    Checkpoint ckpt = load_checkpoint(args.checkpoint);
    RunConfig cfg = ckpt.config;
    if (!args.dataset_override.empty()) cfg.dataset = args.dataset_override;
    if (args.split != "test" && args.split != "valid") {
        throw ConfigError("eval: split must be 'test' or 'valid'");
    }
    Dataset ds = load_dataset(cfg);
    nlohmann::ordered_json report;
    report["split"] = args.split;
    if (ds.task == TaskKind::LinkPrediction) {
        const auto& split = args.split == "test" ? ds.kg.test : ds.kg.valid;
        EvalOutput ev = evaluate_model(cfg, ckpt.params, ds.ref(), split, {});
        report["metrics"] = metrics_to_json(ev.metrics);
    } else {
        const auto& split = args.split == "test" ? ds.nc.test_nodes : ds.nc.valid_nodes;
        EvalOutput ev = evaluate_model(cfg, ckpt.params, ds.ref(), {}, split);
        report["metrics"] = {{"accuracy", ev.accuracy}, {"count", split.size()}};
    }
    std::string text = report.dump(2) + "\n";
    if (!args.out_json.empty()) {
        std::ofstream out(args.out_json, std::ios::binary);
        out << text;
    }
    std::cout << text;
    return 0;
}

// ---------------------------------------------------------------------------
// sweep
// ---------------------------------------------------------------------------

struct SweepArgs {
    std::filesystem::path config_path;
    std::vector<std::string> sets;
    std::vector<std::size_t> layers;
    std::vector<std::string> variants;
    std::vector<std::uint64_t> seeds;
    std::filesystem::path out_dir = ".";
    std::size_t jobs = 1;
};

struct SweepRow {
    std::size_t layers = 0;
    std::string variant;
    std::uint64_t seed = 0;
    bool ok = false;
    std::string error;
    MetricsReport lp;
    double accuracy = 0.0;
};

/// One training + test evaluation per (layers, variant, seed) cell.
inline SweepRow run_sweep_cell(RunConfig cfg, const Dataset& ds, std::size_t layers,
                               const std::string& variant, std::uint64_t seed) {
    SweepRow row;
    row.layers = layers;
    row.variant = variant;
    row.seed = seed;
    cfg.layers = layers;
    cfg.variant = variant;
    cfg.seed = seed;
    try {
        TrainResult res = train(cfg, ds);
        if (ds.task == TaskKind::LinkPrediction) {
            EvalOutput ev = evaluate_model(cfg, res.checkpoint.params, ds.ref(), ds.kg.test, {});
            row.lp = ev.metrics;
        } else {
            EvalOutput ev = evaluate_model(cfg, res.checkpoint.params, ds.ref(), {}, ds.nc.test_nodes);
            row.accuracy = ev.accuracy;
        }
        row.ok = true;
    } catch (const std::exception& e) {
        row.error = e.what();
    }
    return row;
}

inline std::string format_metric(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return buf;
}

inline std::string sweep_csv(const std::vector<SweepRow>& rows, TaskKind task) {
    std::ostringstream out;
    bool lp = task == TaskKind::LinkPrediction;
    out << (lp ? "layers,variant,seed,MRR,H@10,H@3,H@1\n" : "layers,variant,seed,accuracy\n");
    auto metric_cells = [&](const SweepRow& r) -> std::string {
        if (!r.ok) return lp ? "nan,nan,nan,nan" : "nan";
        if (lp) {
            return format_metric(r.lp.mrr) + "," + format_metric(r.lp.hit10) + "," +
                   format_metric(r.lp.hit3) + "," + format_metric(r.lp.hit1);
        }
        return format_metric(r.accuracy);
    };
    for (const SweepRow& r : rows) {
        out << r.layers << "," << r.variant << "," << r.seed << "," << metric_cells(r) << "\n";
    }
    // Aggregate mean/std per (layers, variant) over the successful seeds,
    // in first-appearance order.
    std::vector<std::pair<std::size_t, std::string>> groups;
    for (const SweepRow& r : rows) {
        std::pair<std::size_t, std::string> g{r.layers, r.variant};
        bool seen = false;
        for (const auto& have : groups) seen = seen || have == g;
        if (!seen) groups.push_back(g);
    }
    for (const auto& [layers, variant] : groups) {
        std::vector<std::vector<double>> cols(lp ? 4 : 1);
        for (const SweepRow& r : rows) {
            if (!r.ok || r.layers != layers || r.variant != variant) continue;
            if (lp) {
                cols[0].push_back(r.lp.mrr);
                cols[1].push_back(r.lp.hit10);
                cols[2].push_back(r.lp.hit3);
                cols[3].push_back(r.lp.hit1);
            } else {
                cols[0].push_back(r.accuracy);
            }
        }
        if (cols[0].empty()) continue;
        auto mean = [](const std::vector<double>& v) {
            double s = 0.0;
            for (double x : v) s += x;
            return s / static_cast<double>(v.size());
        };
        auto stddev = [&mean](const std::vector<double>& v) {
            if (v.size() < 2) return 0.0;
            double m = mean(v);
            double s = 0.0;
            for (double x : v) s += (x - m) * (x - m);
            return std::sqrt(s / static_cast<double>(v.size()));
        };
        for (const char* stat : {"mean", "std"}) {
            out << layers << "," << variant << "," << stat;
            for (const auto& col : cols) {
                out << "," << format_metric(stat == std::string("mean") ? mean(col) : stddev(col));
            }
            out << "\n";
        }
    }
    return out.str();
}

inline int cmd_sweep(const SweepArgs& args) {
    RunConfig base = load_config(args.config_path, args.sets, env_seed_override());
    if (args.layers.empty() || args.variants.empty() || args.seeds.empty()) {
        throw ConfigError("sweep: layers, variants, and seeds must be non-empty");
    }
    for (std::size_t l : args.layers) {
        if (l < 1) throw ConfigError("sweep: layer values must be >= 1");
    }
    validate_config(base);
    Dataset ds = load_dataset(base);

    struct Cell {
        std::size_t layers;
        std::string variant;
        std::uint64_t seed;
    };
    std::vector<Cell> cells;
    for (std::size_t l : args.layers)
        for (const std::string& v : args.variants)
            for (std::uint64_t s : args.seeds) cells.push_back({l, v, s});

    std::vector<SweepRow> rows(cells.size());
    std::size_t jobs = std::max<std::size_t>(1, args.jobs);
    if (jobs == 1) {
        for (std::size_t i = 0; i < cells.size(); ++i) {
            rows[i] = run_sweep_cell(base, ds, cells[i].layers, cells[i].variant, cells[i].seed);
        }
    } else {
        std::atomic<std::size_t> next{0};
        auto worker = [&]() {
            while (true) {
                std::size_t i = next.fetch_add(1);
                if (i >= cells.size()) return;
                rows[i] = run_sweep_cell(base, ds, cells[i].layers, cells[i].variant, cells[i].seed);
            }
        };
        std::vector<std::thread> pool;
        for (std::size_t j = 0; j < std::min(jobs, cells.size()); ++j) pool.emplace_back(worker);
        for (std::thread& th : pool) th.join();
    }

    std::filesystem::create_directories(args.out_dir);
    std::string csv = sweep_csv(rows, ds.task);
    std::ofstream out(args.out_dir / "sweep.csv", std::ios::binary);
    out << csv;
    std::cout << csv;
    for (const SweepRow& r : rows) {
        if (!r.ok) {
            std::cerr << "sweep cell failed (layers=" << r.layers << " variant=" << r.variant
                      << " seed=" << r.seed << "): " << r.error << "\n";
        }
    }
    return 0;
}

// ---------------------------------------------------------------------------
// analyze-sfm
// ---------------------------------------------------------------------------

struct AnalyzeArgs {
    std::filesystem::path checkpoint;
    std::string dataset_override;
    std::filesystem::path out_prefix;  // writes <prefix>.csv and <prefix>.json
};

inline int cmd_analyze_sfm(const AnalyzeArgs& args) {
    Checkpoint ckpt = load_checkpoint(args.checkpoint);
    if (ckpt.gate_trace.empty()) {
        throw ConfigError("analyze-sfm: checkpoint has no gate trace (base-variant model?)");
    }
    RunConfig cfg = ckpt.config;
    if (!args.dataset_override.empty()) cfg.dataset = args.dataset_override;
    if (task_kind(cfg) != TaskKind::LinkPrediction) {
        throw ConfigError("analyze-sfm: needs a link-prediction checkpoint");
    }
    Dataset ds = load_dataset(cfg);
    EvalOutput ev = evaluate_model(cfg, ckpt.params, ds.ref(), ds.kg.test, {});
    std::vector<CategoryRow> table = sfm_category_analysis(ckpt.gate_trace, ev.records, ds.kg);

    std::string csv = category_table_csv(table);
    nlohmann::ordered_json j;
    j["categories"] = category_table_json(table);
    j["total"] = metrics_to_json(ev.metrics);
    if (!args.out_prefix.empty()) {
        std::filesystem::path csv_path = args.out_prefix;
        csv_path += ".csv";
        std::filesystem::path json_path = args.out_prefix;
        json_path += ".json";
        if (auto dir = csv_path.parent_path(); !dir.empty()) std::filesystem::create_directories(dir);
        std::ofstream(csv_path, std::ios::binary) << csv;
        std::ofstream(json_path, std::ios::binary) << j.dump(2) << "\n";
    }
    std::cout << csv;
    return 0;
}

}  // namespace cli
}  // namespace sfgnn
