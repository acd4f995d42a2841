#pragma once

// Staged batch pipeline: synth -> associate -> consensus -> keyframe ->
// train -> eval. Every stage reads its inputs from and writes its outputs
// to a run directory, and is skipped when its outputs already exist.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "trackvote/association.hpp"
#include "trackvote/consensus.hpp"
#include "trackvote/dataset.hpp"
#include "trackvote/error.hpp"
#include "trackvote/eval.hpp"
#include "trackvote/keyframe.hpp"
#include "trackvote/synth.hpp"
#include "trackvote/train.hpp"

#ifndef TRACKVOTE_VERSION
#define TRACKVOTE_VERSION "0.0.0"
#endif

namespace trackvote {

inline constexpr double kDefaultTauSem = 0.85;

struct AssociationStageConfig {
    std::string mode = "import";  ///< import | greedy
    AssociationParams params;
};

struct PipelineConfig {
    SynthConfig synth;
    AssociationStageConfig assoc;
    double tau_sem = kDefaultTauSem;
    KeyframeParams keyframe;
    TrainConfig train;
    std::uint32_t holdout_every = 5;
};

inline json pipeline_config_to_json(const PipelineConfig& c) {
    return json{{"synth", synth_config_to_json(c.synth)},
                {"assoc",
                 {{"mode", c.assoc.mode},
                  {"alpha", c.assoc.params.iou_weight},
                  {"theta", c.assoc.params.match_threshold},
                  {"max_gap", c.assoc.params.max_gap}}},
                {"consensus", {{"tau_sem", c.tau_sem}}},
                {"keyframe", {{"strategy", to_string(c.keyframe.strategy)}, {"sigma", c.keyframe.sigma}, {"seed", c.keyframe.seed}}},
                {"train", train_config_to_json(c.train)},
                {"eval", {{"holdout_every", c.holdout_every}}}};
}

/// Sections and keys are optional. A top-level "seed" overrides the seed of
/// every stage.
inline PipelineConfig pipeline_config_from_json(const json& j) {
    if (!j.is_object()) throw SchemaError("pipeline config must be a JSON object");
    PipelineConfig c;
    try {
        if (j.contains("synth")) c.synth = synth_config_from_json(j.at("synth"));
        if (j.contains("assoc")) {
            const json& a = j.at("assoc");
            c.assoc.mode = a.value("mode", c.assoc.mode);
            c.assoc.params.iou_weight = a.value("alpha", c.assoc.params.iou_weight);
            c.assoc.params.match_threshold = a.value("theta", c.assoc.params.match_threshold);
            c.assoc.params.max_gap = a.value("max_gap", c.assoc.params.max_gap);
            if (c.assoc.mode != "import" && c.assoc.mode != "greedy") throw SchemaError("assoc.mode must be import or greedy");
            c.assoc.params.validate();
        }
        if (j.contains("consensus")) c.tau_sem = j.at("consensus").value("tau_sem", c.tau_sem);
        if (j.contains("keyframe")) {
            const json& k = j.at("keyframe");
            c.keyframe.strategy = parse_strategy(k.value("strategy", std::string("weighting")));
            c.keyframe.sigma = k.value("sigma", c.keyframe.sigma);
            c.keyframe.seed = k.value("seed", c.keyframe.seed);
        }
        if (j.contains("train")) c.train = train_config_from_json(j.at("train"));
        if (j.contains("eval")) c.holdout_every = j.at("eval").value("holdout_every", c.holdout_every);
        if (j.contains("seed")) {
            const auto seed = j.at("seed").get<std::uint64_t>();
            c.synth.seed = seed;
            c.keyframe.seed = seed;
            c.train.seed = seed;
        }
    } catch (const json::exception& e) {
        throw SchemaError(std::string("pipeline config: ") + e.what());
    }
    if (!(c.tau_sem > 0.0 && c.tau_sem < 1.0)) throw DataError("consensus.tau_sem must be in (0,1)");
    if (!(c.keyframe.sigma > 0.0)) throw NumericError("keyframe.sigma must be positive");
    return c;
}

inline void set_seed(PipelineConfig& c, std::uint64_t seed) {
    c.synth.seed = seed;
    c.keyframe.seed = seed;
    c.train.seed = seed;
}

inline json seeds_json(const PipelineConfig& c) {
    return json{{"synth", c.synth.seed}, {"keyframe", c.keyframe.seed}, {"train", c.train.seed}};
}

// ---------------------------------------------------------------------------
// Stage bodies, shared by the CLI subcommands and the full pipeline

/// Generates and corrupts a scene; the result carries its ground truth.
inline SceneDataset synth_stage(const SynthConfig& cfg) {
    SyntheticScene scene = generate_scene(cfg);
    SceneDataset noisy = corrupt(scene.dataset, scene.truth, cfg);
    noisy.ground_truth = scene.truth;
    return noisy;
}

inline std::vector<Trajectory> associate_stage(const SceneDataset& ds, const AssociationStageConfig& cfg) {
    std::vector<Trajectory> tracks = cfg.mode == "greedy" ? associate_greedy(ds, cfg.params) : import_tracks(ds);
    validate_partition(ds, tracks);
    return tracks;
}

struct ConsensusMetrics {
    std::size_t cluster_count = 0;
    ConsensusAccuracy accuracy;
};

inline ConsensusMetrics consensus_metrics(const SceneDataset& resolved, double tau_sem) {
    ConsensusMetrics m;
    const SynonymClustering c = cluster_synonyms(scene_labels(resolved), resolved.embeddings, tau_sem);
    m.cluster_count = c.cluster_count();
    if (resolved.ground_truth) m.accuracy = consensus_accuracy(resolved, c, *resolved.ground_truth);
    return m;
}

/// One row per tau_sem: cluster count and label accuracies.
inline std::string sweep_tau_sem(const SceneDataset& ds, const std::vector<Trajectory>& tracks, const std::vector<double>& values) {
    std::vector<std::vector<std::string>> rows;
    for (double tau : values) {
        const ConsensusResult r = run_consensus(ds, tracks, tau);
        const SceneDataset resolved = propagate(ds, r.tracks);
        const ConsensusMetrics m = consensus_metrics(resolved, tau);
        rows.push_back({format_real(tau), std::to_string(m.cluster_count), format_real(m.accuracy.per_view_acc),
                        format_real(m.accuracy.tscm_acc)});
    }
    return to_csv({"tau_sem", "clusters", "per_view_acc", "tscm_acc"}, rows);
}

/// One row per keyframe setting: how far the chosen keyframes sit from the
/// median area, averaged over tracks.
inline std::string sweep_keyframe(const SceneDataset& ds, const std::vector<TrackConsensus>& tracks,
                                  const std::vector<std::pair<std::string, KeyframeParams>>& settings) {
    std::vector<std::vector<std::string>> rows;
    for (const auto& [name, params] : settings) {
        double ratio = 0, log_dev = 0;
        for (const auto& t : tracks) {
            const auto areas = member_areas(ds, t.members);
            const KeyframeChoice c = select_keyframe(t.track_id, areas, params.strategy, params.sigma, params.seed);
            double a = 0;
            for (const auto& m : areas) {
                if (m.view == c.keyframe) a = static_cast<double>(m.area);
            }
            const double r = c.median > 0 ? a / c.median : 1.0;
            ratio += r;
            log_dev += r > 0 ? std::abs(std::log(r)) : 0.0;
        }
        const double n = tracks.empty() ? 1.0 : static_cast<double>(tracks.size());
        rows.push_back({name, format_real(ratio / n), format_real(log_dev / n)});
    }
    return to_csv({"setting", "mean_area_over_median", "mean_abs_log_ratio"}, rows);
}

// ---------------------------------------------------------------------------
// Full pipeline

struct StageStatus {
    std::string name;
    bool ran = false;
};

struct PipelineResult {
    std::filesystem::path dir;
    std::vector<StageStatus> stages;
    Report report;
};

namespace detail {

/// Re-throws `e` with the stage name prefixed, keeping its category.
[[noreturn]] inline void rethrow_in_stage(const std::string& stage) {
    try {
        throw;
    } catch (const NumericError& e) {
        throw NumericError("stage " + stage + ": " + e.what());
    } catch (const DataError& e) {
        throw DataError("stage " + stage + ": " + e.what());
    } catch (const std::exception& e) {
        throw Error("stage " + stage + ": " + e.what());
    }
}

}  // namespace detail

struct RunPaths {
    std::filesystem::path dir;

    std::filesystem::path dataset() const { return dir / "synth" / "manifest.json"; }
    std::filesystem::path tracks() const { return dir / "tracks.jsonl"; }
    std::filesystem::path consensus() const { return dir / "consensus.jsonl"; }
    std::filesystem::path resolved() const { return dir / "resolved" / "manifest.json"; }
    std::filesystem::path descriptions() const { return dir / "descriptions.jsonl"; }
    std::filesystem::path model() const { return dir / "model.json"; }
    std::filesystem::path curve() const { return dir / "loss_curve.csv"; }
    std::filesystem::path report() const { return dir / "report.json"; }
    std::filesystem::path run_manifest() const { return dir / "run.json"; }
};

inline Report evaluation_report(const PipelineConfig& cfg, const SceneDataset& resolved, const ReferringField& field) {
    Report r;
    r.config = pipeline_config_to_json(cfg);
    r.seeds = seeds_json(cfg);
    const ConsensusMetrics cm = consensus_metrics(resolved, cfg.tau_sem);
    r.metrics["cluster_count"] = cm.cluster_count;
    r.metrics["detections"] = cm.accuracy.detections;
    r.metrics["per_view_acc"] = cm.accuracy.per_view_acc;
    r.metrics["tscm_acc"] = cm.accuracy.tscm_acc;
    if (resolved.ground_truth) {
        const auto views = holdout_views(resolved.n_views, cfg.holdout_every);
        const FieldEvaluation fe = evaluate_field(field, resolved, *resolved.ground_truth, views);
        r.metrics["eval_views"] = views;
        r.metrics["short_miou"] = fe.short_queries.overall;
        r.metrics["long_miou"] = fe.long_queries.overall;
        r.metrics["short_per_query"] = fe.short_queries.per_query;
        r.metrics["long_per_query"] = fe.long_queries.per_query;
    }
    return r;
}

/// Runs every stage into `dir`. Stages whose outputs exist are skipped unless
/// `force`. All artifacts except run.json (which records a timestamp) are a
/// pure function of the config.
inline PipelineResult run_pipeline(const PipelineConfig& cfg, const std::filesystem::path& dir, bool force = false) {
    const RunPaths paths{dir};
    PipelineResult result{dir, {}, {}};
    auto stage = [&](const std::string& name, const std::vector<std::filesystem::path>& outputs, const std::function<void()>& body) {
        const bool done = std::all_of(outputs.begin(), outputs.end(), [](const auto& p) { return std::filesystem::exists(p); });
        if (done && !force) {
            result.stages.push_back({name, false});
            return;
        }
        try {
            body();
        } catch (...) {
            detail::rethrow_in_stage(name);
        }
        result.stages.push_back({name, true});
    };

    std::filesystem::create_directories(dir);
    stage("synth", {paths.dataset()}, [&] { save_dataset(synth_stage(cfg.synth), paths.dataset()); });
    stage("associate", {paths.tracks()}, [&] { write_tracks(associate_stage(load_dataset(paths.dataset()), cfg.assoc), paths.tracks()); });
    stage("consensus", {paths.consensus(), paths.resolved()}, [&] {
        const SceneDataset ds = load_dataset(paths.dataset());
        const ConsensusResult r = run_consensus(ds, read_tracks(paths.tracks()), cfg.tau_sem);
        write_consensus(r.tracks, paths.consensus());
        save_dataset(propagate(ds, r.tracks), paths.resolved());
    });
    stage("keyframe", {paths.descriptions()}, [&] {
        const SceneDataset ds = load_dataset(paths.resolved());
        write_descriptions(describe_tracks(ds, read_consensus(paths.consensus()), cfg.keyframe), paths.descriptions());
    });
    stage("train", {paths.model(), paths.curve()}, [&] {
        const SceneDataset ds = load_dataset(paths.resolved());
        const auto tracks = read_consensus(paths.consensus());
        const auto desc = read_descriptions(paths.descriptions(), ds.embeddings, ds.dim);
        TrainConfig tc = cfg.train;
        tc.eval_views = holdout_views(ds.n_views, cfg.holdout_every);
        TrainResult tr = train(build_field(ds, tracks, tc.spread, tc.seed, tc.init_scale), ds, tracks, desc, tc);
        write_text_file(paths.model(), field_to_json(tr.field).dump() + "\n");
        write_text_file(paths.curve(), loss_curve_csv(tr.curve));
    });
    stage("eval", {paths.report()}, [&] {
        const SceneDataset ds = load_dataset(paths.resolved());
        emit_report(evaluation_report(cfg, ds, field_from_json(read_json_file(paths.model()))), paths.report());
    });
    result.report = load_report(paths.report());

    json stages = json::array();
    for (const auto& s : result.stages) stages.push_back(json{{"name", s.name}, {"status", s.ran ? "ran" : "skipped"}});
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    char stamp[32];
    std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
    const json run{{"version", TRACKVOTE_VERSION},
                   {"config_hash", config_hash(pipeline_config_to_json(cfg))},
                   {"seeds", seeds_json(cfg)},
                   {"stages", stages},
                   {"timestamp", stamp}};
    write_text_file(paths.run_manifest(), run.dump(2) + "\n");
    return result;
}

}  // namespace trackvote
