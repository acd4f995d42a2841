// Builds a small noisy scene in memory, resolves one label per trajectory and
// prints what each track voted for, then the keyframe and captions chosen.

#include <iostream>

#include "trackvote/trackvote.hpp"

int main() {
    using namespace trackvote;

    SynthConfig cfg;
    cfg.seed = 3;
    cfg.n_views = 7;
    cfg.n_objects = 4;
    cfg.noise.synonym_rate = 0.4;
    cfg.noise.wrong_label_rate = 0.15;
    const SyntheticScene clean = generate_scene(cfg);
    const SceneDataset ds = corrupt(clean.dataset, clean.truth, cfg);

    const ConsensusResult r = run_consensus(ds, import_tracks(ds), 0.85);
    std::cout << r.clustering.cluster_count() << " label clusters\n";
    for (const auto& t : r.tracks) {
        std::cout << "track " << t.track_id << " -> " << t.canonical << "  (";
        for (const auto& [id, n] : t.votes) std::cout << ' ' << id << ':' << n;
        std::cout << " )  truth: " << clean.truth.objects[*ds.at(t.members.front()).gt_object].identity << '\n';
    }

    const auto acc = consensus_accuracy(propagate(ds, r.tracks), r.clustering, clean.truth);
    std::cout << "per-view accuracy " << format_real(acc.per_view_acc) << ", after voting " << format_real(acc.tscm_acc)
              << "\n\n";

    for (const auto& d : describe_tracks(ds, r.tracks, {})) {
        std::cout << "track " << d.track_id << " keyframe view " << (d.keyframe ? std::to_string(*d.keyframe) : "-") << '\n';
        for (const auto& ref : d.referrals) std::cout << "  " << ref.text << '\n';
    }
}
