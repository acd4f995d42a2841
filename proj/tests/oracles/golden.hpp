#pragma once

// Consensus output computed from the oracles alone: tracks grouped by hand,
// labels clustered by brute-force linkage, votes by sorting.

#include <map>
#include <set>
#include <string>

#include "oracles/oracles.hpp"
#include "trackvote/dataset.hpp"

namespace oracle {

inline std::string consensus_jsonl(const trackvote::SceneDataset& ds, double tau) {
    std::set<std::string> label_set;
    for (const auto& view : ds.views) {
        for (const auto& d : view) label_set.insert(d.raw_label);
    }
    const std::vector<std::string> labels(label_set.begin(), label_set.end());
    std::vector<std::vector<double>> vecs;
    for (const auto& l : labels) vecs.push_back(ds.embeddings.at(l));
    const Clusters c = agglomerate(labels, vecs, tau);

    struct Member {
        std::uint32_t view, index;
        std::string identity;
        std::uint64_t area;
    };
    std::map<std::uint64_t, std::vector<Member>> tracks;
    for (std::uint32_t v = 0; v < ds.views.size(); ++v) {
        for (std::uint32_t i = 0; i < ds.views[v].size(); ++i) {
            const auto& d = ds.views[v][i];
            tracks[*d.track_id].push_back({v, i, c.label_to_canonical.at(d.raw_label),
                                           pixel_count(to_grid(trackvote::rle_decode(d.mask)))});
        }
    }

    std::string out;
    for (const auto& [id, members] : tracks) {
        std::vector<std::string> ids;
        std::vector<std::uint64_t> areas;
        trackvote::json m = trackvote::json::array();
        for (const auto& x : members) {
            ids.push_back(x.identity);
            areas.push_back(x.area);
            m.push_back({x.view, x.index});
        }
        const VoteOracle v = vote(ids, areas);
        trackvote::json votes = trackvote::json::object();
        for (const auto& [k, n] : v.counts) votes[k] = n;
        out += trackvote::json{{"track", id}, {"canonical", v.winner}, {"votes", votes}, {"members", m}}.dump() + "\n";
    }
    return out;
}

}  // namespace oracle
