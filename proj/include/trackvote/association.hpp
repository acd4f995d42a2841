#pragma once

// Grouping per-view detections into trajectories: either from track IDs the
// detections already carry, or with a greedy frame-to-frame associator.

#include <algorithm>
#include <map>
#include <string>
#include <tuple>
#include <vector>

#include "trackvote/dataset.hpp"
#include "trackvote/error.hpp"
#include "trackvote/mask.hpp"

namespace trackvote {

/// Partitions the detections by their track_id.
inline std::vector<Trajectory> import_tracks(const SceneDataset& ds) {
    std::map<TrackId, Trajectory> by_id;
    for (ViewIndex v = 0; v < ds.views.size(); ++v) {
        for (std::uint32_t i = 0; i < ds.views[v].size(); ++i) {
            const Detection& d = ds.views[v][i];
            if (!d.track_id) {
                throw DataError("import_tracks: detection " + std::to_string(i) + " in view " + std::to_string(v) +
                                " has no track id");
            }
            Trajectory& t = by_id[*d.track_id];
            t.track_id = *d.track_id;
            if (!t.members.empty() && t.members.back().view == v) {
                throw DataError("import_tracks: track " + std::to_string(*d.track_id) + " has two detections in view " +
                                std::to_string(v));
            }
            t.members.push_back({v, i});
        }
    }
    std::vector<Trajectory> out;
    out.reserve(by_id.size());
    for (auto& [id, t] : by_id) out.push_back(std::move(t));
    return out;
}

struct AssociationParams {
    double iou_weight = 0.7;       ///< alpha: weight of mask IoU against label similarity
    double match_threshold = 0.3;  ///< theta: minimum score for a match
    std::uint32_t max_gap = 5;     ///< views a track may go unobserved and still be extended

    void validate() const {
        if (!(iou_weight >= 0.0 && iou_weight <= 1.0)) throw DataError("association: iou_weight must be in [0,1]");
        if (!(match_threshold >= 0.0 && match_threshold <= 1.0)) {
            throw DataError("association: match_threshold must be in [0,1]");
        }
    }
};

/// Score of appending detection `d` to a track whose latest detection is `last`.
inline double association_score(const SceneDataset& ds, const Detection& d, const Detection& last,
                                const AssociationParams& p) {
    const double iou = mask_iou(d.mask, last.mask);
    const double cos = dot(ds.embedding(d.raw_label), ds.embedding(last.raw_label));
    return p.iou_weight * iou + (1.0 - p.iou_weight) * cos;
}

/// Greedy cross-view association. Views are processed in order; in each view
/// every (detection, eligible track) pair scoring at least `match_threshold`
/// is a candidate, and candidates are accepted in descending score. Equal
/// scores go to the track last seen in the earlier view, then the lower
/// detection index, then the lower track id. Unmatched detections start new
/// tracks, numbered in creation order.
inline std::vector<Trajectory> associate_greedy(const SceneDataset& ds, const AssociationParams& params) {
    params.validate();
    for (const auto& view : ds.views) {
        for (const auto& d : view) (void)ds.embedding(d.raw_label);
    }

    std::vector<Trajectory> tracks;
    struct Candidate {
        double score;
        ViewIndex last_view;
        std::uint32_t det;
        std::size_t track;
    };

    for (ViewIndex v = 0; v < ds.views.size(); ++v) {
        const auto& dets = ds.views[v];
        std::vector<Candidate> cands;
        for (std::size_t t = 0; t < tracks.size(); ++t) {
            const DetectionRef last = tracks[t].members.back();
            if (v - last.view - 1 > params.max_gap) continue;
            const Detection& prev = ds.at(last);
            for (std::uint32_t i = 0; i < dets.size(); ++i) {
                const double s = association_score(ds, dets[i], prev, params);
                if (s >= params.match_threshold) cands.push_back({s, last.view, i, t});
            }
        }
        std::sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) {
            if (a.score != b.score) return a.score > b.score;
            return std::tie(a.last_view, a.det, a.track) < std::tie(b.last_view, b.det, b.track);
        });

        std::vector<bool> det_used(dets.size(), false);
        std::vector<bool> track_used(tracks.size(), false);
        for (const auto& c : cands) {
            if (det_used[c.det] || track_used[c.track]) continue;
            det_used[c.det] = true;
            track_used[c.track] = true;
            tracks[c.track].members.push_back({v, c.det});
        }
        for (std::uint32_t i = 0; i < dets.size(); ++i) {
            if (det_used[i]) continue;
            Trajectory t;
            t.track_id = static_cast<TrackId>(tracks.size());
            t.members.push_back({v, i});
            tracks.push_back(std::move(t));
        }
    }
    return tracks;
}

/// Checks that `tracks` partitions every detection of `ds` and that each
/// trajectory is strictly increasing in view. Throws DataError otherwise.
inline void validate_partition(const SceneDataset& ds, const std::vector<Trajectory>& tracks) {
    std::vector<std::vector<int>> seen(ds.views.size());
    for (ViewIndex v = 0; v < ds.views.size(); ++v) seen[v].assign(ds.views[v].size(), 0);
    for (const auto& t : tracks) {
        if (t.members.empty()) throw DataError("track " + std::to_string(t.track_id) + " is empty");
        for (std::size_t k = 0; k < t.members.size(); ++k) {
            const auto& m = t.members[k];
            if (m.view >= ds.views.size() || m.index >= ds.views[m.view].size()) {
                throw DataError("track " + std::to_string(t.track_id) + " references a missing detection");
            }
            if (k > 0 && t.members[k - 1].view >= m.view) {
                throw DataError("track " + std::to_string(t.track_id) + " is not strictly increasing in view");
            }
            ++seen[m.view][m.index];
        }
    }
    for (ViewIndex v = 0; v < seen.size(); ++v) {
        for (std::size_t i = 0; i < seen[v].size(); ++i) {
            if (seen[v][i] != 1) {
                throw DataError("detection " + std::to_string(i) + " in view " + std::to_string(v) + " appears in " +
                                std::to_string(seen[v][i]) + " tracks");
            }
        }
    }
}

}  // namespace trackvote
