// trackvote command line: one subcommand per pipeline stage plus `run`.
//
// Exit codes: 0 ok, 1 usage, 2 data or schema error, 3 numeric error.

#include <cstdlib>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "trackvote/trackvote.hpp"

namespace fs = std::filesystem;
using namespace trackvote;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumeric = 3;
constexpr const char* kOutEnv = "TRACKVOTE_OUT";

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Common {
    std::optional<std::uint64_t> seed;
    std::string config;
    std::string out;
    unsigned threads = 1;
};

void add_common(CLI::App* cmd, Common& c, const std::string& out_help) {
    cmd->add_option("--seed", c.seed, "Seed; overrides the seeds in --config");
    cmd->add_option("--config", c.config, "JSON config file")->check(CLI::ExistingFile);
    cmd->add_option("--out", c.out, out_help + " (default: $" + std::string(kOutEnv) + "/...)");
    cmd->add_option("--threads", c.threads, "Worker cap; 1 is the reference path")->check(CLI::PositiveNumber);
}

/// --out, else $TRACKVOTE_OUT/<name>.
fs::path output_path(const Common& c, const std::string& name) {
    if (!c.out.empty()) return c.out;
    if (const char* root = std::getenv(kOutEnv); root && *root) return fs::path(root) / name;
    throw UsageError("--out is required when " + std::string(kOutEnv) + " is unset");
}

PipelineConfig load_config(const Common& c) {
    PipelineConfig cfg = c.config.empty() ? PipelineConfig{} : pipeline_config_from_json(read_json_file(c.config));
    if (c.seed) set_seed(cfg, *c.seed);
    return cfg;
}

/// Consensus tracks from --consensus, or computed on the fly from the
/// dataset's own track ids.
std::vector<TrackConsensus> consensus_tracks(const SceneDataset& ds, const std::string& consensus_path, double tau) {
    if (!consensus_path.empty()) return read_consensus(consensus_path);
    return run_consensus(ds, ds.tracks ? *ds.tracks : import_tracks(ds), tau).tracks;
}

std::vector<double> parse_reals(const std::string& csv) {
    std::vector<double> out;
    std::stringstream ss(csv);
    for (std::string item; std::getline(ss, item, ',');) {
        try {
            std::size_t used = 0;
            out.push_back(std::stod(item, &used));
            if (used != item.size()) throw std::invalid_argument(item);
        } catch (const std::exception&) {
            throw UsageError("not a number: \"" + item + "\"");
        }
    }
    if (out.empty()) throw UsageError("--values is empty");
    return out;
}

std::vector<std::string> split(const std::string& csv) {
    std::vector<std::string> out;
    std::stringstream ss(csv);
    for (std::string item; std::getline(ss, item, ',');) out.push_back(item);
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Multi-view label consensus and referring-field toolkit"};
    app.set_version_flag("--version", std::string(TRACKVOTE_VERSION));
    app.require_subcommand(1);

    Common common;
    std::string manifest, tracks_path, consensus_path, descriptions_path, model_path, curve_path;
    std::string mode = "import", strategy = "weighting", param = "tau_sem", values;
    std::optional<double> alpha, theta, tau_sem, sigma;
    std::optional<std::size_t> max_gap;
    std::optional<std::uint32_t> holdout_every;
    bool long_only = false, force = false;

    auto* synth = app.add_subcommand("synth", "Generate a noisy synthetic scene with ground truth");
    add_common(synth, common, "Output dataset directory");

    auto* assoc = app.add_subcommand("associate", "Group detections into trajectories");
    add_common(assoc, common, "Output tracks.jsonl");
    assoc->add_option("--manifest", manifest, "Dataset manifest")->required()->check(CLI::ExistingFile);
    assoc->add_option("--mode", mode, "import | greedy")->check(CLI::IsMember({"import", "greedy"}));
    assoc->add_option("--alpha", alpha, "IoU weight of the match score");
    assoc->add_option("--theta", theta, "Minimum match score");
    assoc->add_option("--max-gap", max_gap, "Views a trajectory may skip");

    auto* cons = app.add_subcommand("consensus", "Cluster synonyms and vote one identity per trajectory");
    add_common(cons, common, "Output consensus.jsonl");
    cons->add_option("--manifest", manifest, "Dataset manifest")->required()->check(CLI::ExistingFile);
    cons->add_option("--tracks", tracks_path, "tracks.jsonl (default: dataset track ids)")->check(CLI::ExistingFile);
    cons->add_option("--tau-sem", tau_sem, "Cosine similarity threshold for synonym merging");

    auto* key = app.add_subcommand("keyframe", "Pick a keyframe per trajectory and attach descriptions");
    add_common(key, common, "Output descriptions.jsonl");
    key->add_option("--manifest", manifest, "Dataset manifest")->required()->check(CLI::ExistingFile);
    key->add_option("--consensus", consensus_path, "consensus.jsonl")->check(CLI::ExistingFile);
    key->add_option("--strategy", strategy, "weighting | maximum | minimum | random | medium")
        ->check(CLI::IsMember({"weighting", "maximum", "minimum", "random", "medium"}));
    key->add_option("--sigma", sigma, "Visibility score bandwidth in pixels");
    key->add_option("--captions", descriptions_path, "Offline captions {track, view, texts, vecs}")->check(CLI::ExistingFile);

    auto* tr = app.add_subcommand("train", "Fit the referring field");
    add_common(tr, common, "Output model.json");
    tr->add_option("--manifest", manifest, "Dataset manifest")->required()->check(CLI::ExistingFile);
    tr->add_option("--consensus", consensus_path, "consensus.jsonl")->check(CLI::ExistingFile);
    tr->add_option("--descriptions", descriptions_path, "descriptions.jsonl (default: the manifest's)")->check(CLI::ExistingFile);
    tr->add_option("--curve", curve_path, "Loss curve CSV (default: loss_curve.csv next to --out)");
    tr->add_option("--holdout-every", holdout_every, "Hold out view v when (v+1) % N == 0");
    tr->add_flag("--long-only", long_only, "Train on referral texts only");

    auto* ev = app.add_subcommand("eval", "Score consensus and segmentation against ground truth");
    add_common(ev, common, "Output report.json");
    ev->add_option("--manifest", manifest, "Resolved dataset manifest")->required()->check(CLI::ExistingFile);
    ev->add_option("--model", model_path, "model.json")->check(CLI::ExistingFile);
    ev->add_option("--tau-sem", tau_sem, "Cosine similarity threshold used for consensus");
    ev->add_option("--holdout-every", holdout_every, "Hold out view v when (v+1) % N == 0");

    auto* sweep = app.add_subcommand("sweep", "Sweep tau_sem, sigma or keyframe strategy");
    add_common(sweep, common, "Output CSV");
    sweep->add_option("--manifest", manifest, "Dataset manifest")->required()->check(CLI::ExistingFile);
    sweep->add_option("--param", param, "tau_sem | sigma | strategy")->check(CLI::IsMember({"tau_sem", "sigma", "strategy"}));
    sweep->add_option("--values", values, "Comma-separated values")->required();

    auto* run = app.add_subcommand("run", "Run every stage into one directory");
    add_common(run, common, "Run directory");
    run->add_flag("--force", force, "Recompute stages whose outputs exist");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        std::cerr << "\n" << app.help();
        return kExitUsage;
    }

    try {
        PipelineConfig cfg = load_config(common);
        if (alpha) cfg.assoc.params.iou_weight = *alpha;
        if (theta) cfg.assoc.params.match_threshold = *theta;
        if (max_gap) cfg.assoc.params.max_gap = *max_gap;
        if (tau_sem) cfg.tau_sem = *tau_sem;
        if (sigma) cfg.keyframe.sigma = *sigma;
        if (holdout_every) cfg.holdout_every = *holdout_every;

        if (*synth) {
            cfg.synth.validate();
            save_dataset(synth_stage(cfg.synth), output_path(common, "synth") / "manifest.json");
        } else if (*assoc) {
            cfg.assoc.mode = mode;
            cfg.assoc.params.validate();
            write_tracks(associate_stage(load_dataset(manifest), cfg.assoc), output_path(common, "tracks.jsonl"));
        } else if (*cons) {
            const SceneDataset ds = load_dataset(manifest);
            const auto tracks = !tracks_path.empty() ? read_tracks(tracks_path) : ds.tracks ? *ds.tracks : import_tracks(ds);
            write_consensus(run_consensus(ds, tracks, cfg.tau_sem).tracks, output_path(common, "consensus.jsonl"));
        } else if (*key) {
            if (key->count("--strategy")) cfg.keyframe.strategy = parse_strategy(strategy);
            const SceneDataset ds = load_dataset(manifest);
            const auto tracks = consensus_tracks(ds, consensus_path, cfg.tau_sem);
            std::optional<ExternalDescriptions> external;
            if (!descriptions_path.empty()) external = ExternalDescriptions::load(descriptions_path, ds.dim);
            write_descriptions(describe_tracks(ds, tracks, cfg.keyframe, external ? &*external : nullptr),
                               output_path(common, "descriptions.jsonl"));
        } else if (*tr) {
            const SceneDataset ds = load_dataset(manifest);
            const auto tracks = consensus_tracks(ds, consensus_path, cfg.tau_sem);
            if (descriptions_path.empty() && !ds.descriptions) throw DataError("train: no --descriptions and none in the manifest");
            const auto desc = descriptions_path.empty() ? *ds.descriptions : read_descriptions(descriptions_path, ds.embeddings, ds.dim);
            TrainConfig tc = cfg.train;
            tc.long_only = tc.long_only || long_only;
            tc.eval_views = holdout_views(ds.n_views, cfg.holdout_every);
            const fs::path out = output_path(common, "model.json");
            const TrainResult r = train(build_field(ds, tracks, tc.spread, tc.seed, tc.init_scale), ds, tracks, desc, tc);
            write_text_file(out, field_to_json(r.field).dump() + "\n");
            write_text_file(curve_path.empty() ? out.parent_path() / "loss_curve.csv" : fs::path(curve_path), loss_curve_csv(r.curve));
        } else if (*ev) {
            const SceneDataset ds = load_dataset(manifest);
            if (model_path.empty()) {
                // Consensus metrics only.
                Report r;
                r.config = pipeline_config_to_json(cfg);
                r.seeds = seeds_json(cfg);
                const ConsensusMetrics m = consensus_metrics(ds, cfg.tau_sem);
                r.metrics = json{{"cluster_count", m.cluster_count}, {"detections", m.accuracy.detections},
                                 {"per_view_acc", m.accuracy.per_view_acc}, {"tscm_acc", m.accuracy.tscm_acc}};
                emit_report(r, output_path(common, "report.json"));
            } else {
                emit_report(evaluation_report(cfg, ds, field_from_json(read_json_file(model_path))), output_path(common, "report.json"));
            }
        } else if (*sweep) {
            const SceneDataset ds = load_dataset(manifest);
            const auto tracks = ds.tracks ? *ds.tracks : import_tracks(ds);
            std::string csv;
            if (param == "tau_sem") {
                csv = sweep_tau_sem(ds, tracks, parse_reals(values));
            } else {
                const auto cons_tracks = run_consensus(ds, tracks, cfg.tau_sem).tracks;
                std::vector<std::pair<std::string, KeyframeParams>> settings;
                if (param == "sigma") {
                    for (double s : parse_reals(values)) {
                        KeyframeParams p = cfg.keyframe;
                        p.strategy = KeyframeStrategy::weighting;
                        p.sigma = s;
                        settings.emplace_back("sigma=" + format_real(s), p);
                    }
                } else {
                    for (const auto& s : split(values)) {
                        KeyframeParams p = cfg.keyframe;
                        p.strategy = parse_strategy(s);
                        settings.emplace_back(s, p);
                    }
                }
                csv = sweep_keyframe(ds, cons_tracks, settings);
            }
            write_text_file(output_path(common, "sweep.csv"), csv);
        } else if (*run) {
            const PipelineResult r = run_pipeline(cfg, output_path(common, "run"), force);
            for (const auto& s : r.stages) std::cout << s.name << ": " << (s.ran ? "ran" : "skipped") << "\n";
            std::cout << r.report.metrics.dump() << "\n";
        }
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    }
    return 0;
}
