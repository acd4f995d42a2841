#pragma once

// Trajectory-level semantic consensus: synonym clustering of raw labels
// (average-linkage agglomeration over cosine distance) followed by a per-track
// majority vote whose winner is written back to every member detection.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <limits>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "trackvote/dataset.hpp"
#include "trackvote/error.hpp"
#include "trackvote/mask.hpp"

namespace trackvote {

/// Linkage distances closer than this are treated as equal, both for merge
/// ordering and for the threshold cut.
inline constexpr double kLinkageTolerance = 1e-12;

using DistanceMatrix = std::vector<std::vector<double>>;

/// d[i][j] = 1 - e_i . e_j, clamped to [0, 2], zero diagonal.
inline DistanceMatrix cosine_distance_matrix(const std::vector<LabelEmbedding>& embeddings) {
    const std::size_t n = embeddings.size();
    DistanceMatrix d(n, std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < n; ++i) {
        if (embeddings[i].vector.size() != embeddings.front().vector.size()) {
            throw DataError("cosine_distance_matrix: \"" + embeddings[i].label + "\" has dimension " +
                            std::to_string(embeddings[i].vector.size()) + ", expected " +
                            std::to_string(embeddings.front().vector.size()));
        }
    }
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            const double dist = std::clamp(1.0 - dot(embeddings[i].vector, embeddings[j].vector), 0.0, 2.0);
            d[i][j] = dist;
            d[j][i] = dist;
        }
    }
    return d;
}

/// Number of Unicode code points in a UTF-8 string.
inline std::size_t surface_length(const std::string& s) {
    return static_cast<std::size_t>(
        std::count_if(s.begin(), s.end(), [](char c) { return (static_cast<unsigned char>(c) & 0xC0U) != 0x80U; }));
}

/// True when `a` is the preferred canonical form over `b`: shorter, then
/// lexicographically smaller.
inline bool shorter_surface(const std::string& a, const std::string& b) {
    const auto la = surface_length(a), lb = surface_length(b);
    return la != lb ? la < lb : a < b;
}

struct SynonymClustering {
    double tau_sem = 0.85;
    std::vector<std::string> labels;                 ///< input order
    std::vector<std::size_t> label_cluster;          ///< cluster of labels[i]
    std::map<std::string, std::size_t> assignment;   ///< label -> cluster
    std::vector<std::string> canonical;              ///< cluster -> surface form
    std::vector<std::vector<std::size_t>> members;   ///< cluster -> label indices, ascending
    std::vector<double> merge_heights;               ///< linkage distance of each accepted merge

    std::size_t cluster_count() const { return canonical.size(); }
};

/// Agglomerative clustering with average linkage, stopped once the closest
/// pair of clusters is farther apart than 1 - tau_sem. Among equally close
/// pairs the one with the smallest (lowest member index, lowest member index)
/// is merged first. Clusters are numbered by their lowest member index.
inline SynonymClustering cluster_synonyms(const std::vector<std::string>& labels,
                                          const std::map<std::string, Vector>& embeddings, double tau_sem) {
    if (!(tau_sem > 0.0 && tau_sem < 1.0)) throw DataError("cluster_synonyms: tau_sem must be in (0,1)");
    std::vector<LabelEmbedding> embs;
    embs.reserve(labels.size());
    for (const auto& l : labels) {
        auto it = embeddings.find(l);
        if (it == embeddings.end()) throw DataError("cluster_synonyms: no embedding for label \"" + l + "\"");
        embs.push_back({l, it->second});
    }
    if (std::set<std::string>(labels.begin(), labels.end()).size() != labels.size()) {
        throw DataError("cluster_synonyms: labels must be distinct");
    }

    const std::size_t n = labels.size();
    const double cut = 1.0 - tau_sem;
    // Slot k holds the cluster whose lowest member is label k.
    DistanceMatrix dist = cosine_distance_matrix(embs);
    std::vector<std::size_t> size(n, 1);
    std::vector<bool> active(n, true);
    std::vector<std::size_t> parent(n);
    for (std::size_t i = 0; i < n; ++i) parent[i] = i;

    SynonymClustering out;
    out.tau_sem = tau_sem;
    out.labels = labels;

    for (std::size_t remaining = n; remaining > 1; --remaining) {
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t a = 0; a < n; ++a) {
            if (!active[a]) continue;
            for (std::size_t b = a + 1; b < n; ++b) {
                if (active[b]) best = std::min(best, dist[a][b]);
            }
        }
        if (best > cut + kLinkageTolerance) break;

        std::size_t ma = n, mb = n;
        for (std::size_t a = 0; a < n && ma == n; ++a) {
            if (!active[a]) continue;
            for (std::size_t b = a + 1; b < n; ++b) {
                if (active[b] && dist[a][b] <= best + kLinkageTolerance) {
                    ma = a;
                    mb = b;
                    break;
                }
            }
        }
        out.merge_heights.push_back(best);

        // Lance-Williams update for average linkage.
        const double wa = static_cast<double>(size[ma]), wb = static_cast<double>(size[mb]);
        for (std::size_t k = 0; k < n; ++k) {
            if (!active[k] || k == ma || k == mb) continue;
            const double d = (wa * dist[ma][k] + wb * dist[mb][k]) / (wa + wb);
            dist[ma][k] = d;
            dist[k][ma] = d;
        }
        size[ma] += size[mb];
        active[mb] = false;
        parent[mb] = ma;
    }

    auto root = [&](std::size_t i) {
        while (parent[i] != i) i = parent[i];
        return i;
    };
    std::map<std::size_t, std::size_t> slot_to_cluster;
    out.label_cluster.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t r = root(i);
        auto [it, inserted] = slot_to_cluster.emplace(r, out.canonical.size());
        if (inserted) {
            out.canonical.push_back(labels[i]);
            out.members.emplace_back();
        }
        const std::size_t c = it->second;
        out.label_cluster[i] = c;
        out.members[c].push_back(i);
        out.assignment[labels[i]] = c;
        if (shorter_surface(labels[i], out.canonical[c])) out.canonical[c] = labels[i];
    }
    return out;
}

struct ClusteredIdentity {
    static constexpr std::size_t kUnseen = std::numeric_limits<std::size_t>::max();

    std::size_t cluster = kUnseen;
    std::string canonical;

    bool unseen() const { return cluster == kUnseen; }
};

/// Maps a raw label to its clustered identity. Labels outside the clustered
/// set pass through as their own singleton, with a warning.
inline ClusteredIdentity apply_phi(const SynonymClustering& c, const std::string& label, std::ostream* log = &std::clog) {
    auto it = c.assignment.find(label);
    if (it == c.assignment.end()) {
        if (log != nullptr) *log << "warning: label \"" << label << "\" was not clustered; using it as a singleton\n";
        return {ClusteredIdentity::kUnseen, label};
    }
    return {it->second, c.canonical[it->second]};
}

/// One member's ballot: its clustered identity and its mask area.
struct Ballot {
    std::string identity;
    std::uint64_t area = 0;
};

struct VoteResult {
    std::string winner;
    std::map<std::string, std::size_t> counts;
};

/// Plurality vote, one ballot per member view. Ties go to the identity with
/// the larger summed mask area, then to the lexicographically smallest form.
inline VoteResult vote_trajectory(const std::vector<Ballot>& ballots) {
    if (ballots.empty()) throw DataError("vote_trajectory: empty trajectory");
    VoteResult r;
    std::map<std::string, std::uint64_t> area;
    for (const auto& b : ballots) {
        ++r.counts[b.identity];
        area[b.identity] += b.area;
    }
    // std::map iterates in lexicographic order, so strict comparisons keep the
    // smallest form among full ties.
    bool first = true;
    std::size_t best_count = 0;
    std::uint64_t best_area = 0;
    for (const auto& [id, count] : r.counts) {
        if (first || count > best_count || (count == best_count && area[id] > best_area)) {
            first = false;
            r.winner = id;
            best_count = count;
            best_area = area[id];
        }
    }
    return r;
}

struct TrackConsensus {
    TrackId track_id = 0;
    std::string canonical;
    std::map<std::string, std::size_t> votes;
    std::vector<DetectionRef> members;

    friend bool operator==(const TrackConsensus&, const TrackConsensus&) = default;
};

struct ConsensusResult {
    SynonymClustering clustering;
    std::vector<TrackConsensus> tracks;
};

/// Sorted union of raw labels over all detections.
inline std::vector<std::string> scene_labels(const SceneDataset& ds) {
    std::set<std::string> labels;
    for (const auto& view : ds.views) {
        for (const auto& d : view) labels.insert(d.raw_label);
    }
    return {labels.begin(), labels.end()};
}

inline std::vector<Ballot> ballots_for(const SceneDataset& ds, const Trajectory& t, const SynonymClustering& c) {
    std::vector<Ballot> ballots;
    ballots.reserve(t.members.size());
    for (const auto& m : t.members) {
        const Detection& d = ds.at(m);
        ballots.push_back({apply_phi(c, d.raw_label).canonical, mask_area(d.mask)});
    }
    return ballots;
}

/// Clusters the scene's labels once, then votes every trajectory.
inline ConsensusResult run_consensus(const SceneDataset& ds, const std::vector<Trajectory>& tracks, double tau_sem) {
    ConsensusResult out;
    out.clustering = cluster_synonyms(scene_labels(ds), ds.embeddings, tau_sem);
    out.tracks.reserve(tracks.size());
    for (const auto& t : tracks) {
        VoteResult v = vote_trajectory(ballots_for(ds, t, out.clustering));
        out.tracks.push_back({t.track_id, std::move(v.winner), std::move(v.counts), t.members});
    }
    return out;
}

/// Writes each track's winning identity into its members' resolved labels.
inline SceneDataset propagate(SceneDataset ds, const std::vector<TrackConsensus>& tracks) {
    for (const auto& t : tracks) {
        for (const auto& m : t.members) ds.at(m).resolved_label = t.canonical;
    }
    return ds;
}

inline json consensus_to_json(const TrackConsensus& t) {
    json members = json::array();
    for (const auto& m : t.members) members.push_back(json::array({m.view, m.index}));
    json votes = json::object();
    for (const auto& [id, n] : t.votes) votes[id] = n;
    return json{{"track", t.track_id}, {"canonical", t.canonical}, {"votes", votes}, {"members", members}};
}

inline TrackConsensus consensus_from_json(const json& j, std::size_t line = 0) {
    const Trajectory t = trajectory_from_json(j, line);
    TrackConsensus c{t.track_id, detail::require_string(j, "canonical", line), {}, t.members};
    const json& votes = detail::require(j, "votes", line);
    if (!votes.is_object()) throw SchemaError("votes must be an object", line);
    for (const auto& [id, n] : votes.items()) {
        if (!n.is_number_integer() || n.get<std::int64_t>() < 0) throw SchemaError("vote counts must be nonnegative integers", line);
        c.votes[id] = n.get<std::size_t>();
    }
    return c;
}

inline void write_consensus(const std::vector<TrackConsensus>& tracks, const std::filesystem::path& path) {
    std::vector<json> recs;
    for (const auto& t : tracks) recs.push_back(consensus_to_json(t));
    write_text_file(path, to_jsonl(recs));
}

inline std::vector<TrackConsensus> read_consensus(const std::filesystem::path& path) {
    std::vector<TrackConsensus> out;
    for_each_json_line(path, [&](const json& j, std::size_t line) { out.push_back(consensus_from_json(j, line)); });
    return out;
}

}  // namespace trackvote
