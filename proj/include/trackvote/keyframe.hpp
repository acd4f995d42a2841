#pragma once

// Visibility-aware keyframe selection and attachment of referring
// descriptions generated against the chosen keyframe.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "trackvote/consensus.hpp"
#include "trackvote/dataset.hpp"
#include "trackvote/error.hpp"
#include "trackvote/mask.hpp"
#include "trackvote/random.hpp"

namespace trackvote {

inline constexpr double kDefaultSigma = 100.0;

/// Median of a non-empty list; mean of the two middle values for even sizes.
inline double median_area(std::span<const std::uint64_t> areas) {
    if (areas.empty()) throw DataError("median_area: empty list");
    std::vector<std::uint64_t> sorted(areas.begin(), areas.end());
    std::sort(sorted.begin(), sorted.end());
    const std::size_t mid = sorted.size() / 2;
    if (sorted.size() % 2 == 1) return static_cast<double>(sorted[mid]);
    return 0.5 * (static_cast<double>(sorted[mid - 1]) + static_cast<double>(sorted[mid]));
}

/// v = A * exp(-(sqrt(A) - sqrt(A_med))^2 / (2 sigma^2)); sigma is in sqrt-area
/// units (pixels).
inline double visibility_score(double area, double median, double sigma) {
    if (!(sigma > 0.0)) throw NumericError("visibility_score: sigma must be positive");
    if (!(area >= 0.0) || !(median >= 0.0)) throw NumericError("visibility_score: areas must be nonnegative");
    const double delta = std::sqrt(area) - std::sqrt(median);
    return area * std::exp(-(delta * delta) / (2.0 * sigma * sigma));
}

enum class KeyframeStrategy { weighting, maximum, minimum, random, medium };

inline std::string to_string(KeyframeStrategy s) {
    switch (s) {
        case KeyframeStrategy::weighting: return "weighting";
        case KeyframeStrategy::maximum: return "maximum";
        case KeyframeStrategy::minimum: return "minimum";
        case KeyframeStrategy::random: return "random";
        case KeyframeStrategy::medium: return "medium";
    }
    return "weighting";
}

inline KeyframeStrategy parse_strategy(const std::string& s) {
    if (s == "weighting") return KeyframeStrategy::weighting;
    if (s == "maximum") return KeyframeStrategy::maximum;
    if (s == "minimum") return KeyframeStrategy::minimum;
    if (s == "random") return KeyframeStrategy::random;
    if (s == "medium") return KeyframeStrategy::medium;
    throw DataError("unknown keyframe strategy \"" + s + "\"");
}

struct MemberArea {
    ViewIndex view = 0;
    std::uint64_t area = 0;
};

struct KeyframeChoice {
    TrackId track_id = 0;
    ViewIndex keyframe = 0;
    std::vector<std::pair<ViewIndex, double>> scores;  ///< visibility score per member view
    double median = 0.0;
    double sigma = kDefaultSigma;
};

/// Picks the view descriptions are generated against. Every strategy breaks
/// ties toward the earliest view; `random` draws from a stream derived from
/// (seed, track id).
inline KeyframeChoice select_keyframe(TrackId track, std::span<const MemberArea> members, KeyframeStrategy strategy,
                                      double sigma = kDefaultSigma, std::uint64_t seed = 0) {
    if (members.empty()) throw DataError("select_keyframe: empty trajectory");
    std::vector<std::uint64_t> areas;
    for (const auto& m : members) areas.push_back(m.area);

    KeyframeChoice c;
    c.track_id = track;
    c.sigma = sigma;
    c.median = median_area(areas);
    for (const auto& m : members) c.scores.emplace_back(m.view, visibility_score(static_cast<double>(m.area), c.median, sigma));

    // Members may arrive in any order; "earliest" is by view index.
    auto better = [&](std::size_t i, std::size_t best, auto key) {
        const double ki = key(i), kb = key(best);
        return ki > kb || (ki == kb && members[i].view < members[best].view);
    };
    auto argbest = [&](auto key) {
        std::size_t best = 0;
        for (std::size_t i = 1; i < members.size(); ++i) {
            if (better(i, best, key)) best = i;
        }
        return best;
    };

    std::size_t pick = 0;
    switch (strategy) {
        case KeyframeStrategy::weighting:
            pick = argbest([&](std::size_t i) { return c.scores[i].second; });
            break;
        case KeyframeStrategy::maximum:
            pick = argbest([&](std::size_t i) { return static_cast<double>(members[i].area); });
            break;
        case KeyframeStrategy::minimum:
            pick = argbest([&](std::size_t i) { return -static_cast<double>(members[i].area); });
            break;
        case KeyframeStrategy::medium:
            pick = argbest([&](std::size_t i) { return -std::abs(static_cast<double>(members[i].area) - c.median); });
            break;
        case KeyframeStrategy::random: {
            Rng rng(mix_seed(seed, track));
            pick = static_cast<std::size_t>(rng.index(members.size()));
            break;
        }
    }
    c.keyframe = members[pick].view;
    return c;
}

inline std::vector<MemberArea> member_areas(const SceneDataset& ds, const std::vector<DetectionRef>& members) {
    std::vector<MemberArea> out;
    out.reserve(members.size());
    for (const auto& m : members) out.push_back({m.view, mask_area(ds.at(m).mask)});
    return out;
}

// ---------------------------------------------------------------------------
// Description sources

/// Offline captions keyed by (track, view).
class ExternalDescriptions {
public:
    void add(TrackId track, ViewIndex view, std::vector<TextEmbedding> texts) {
        entries_[{track, view}] = std::move(texts);
    }

    const std::vector<TextEmbedding>& at(TrackId track, ViewIndex view) const {
        auto it = entries_.find({track, view});
        if (it == entries_.end()) {
            throw DataError("no external description for track " + std::to_string(track) + " at view " +
                            std::to_string(view));
        }
        return it->second;
    }

    /// Lines of {track, view, texts:[...], vecs:[[...],...]}.
    static ExternalDescriptions load(const std::filesystem::path& path, std::uint32_t dim) {
        ExternalDescriptions out;
        for_each_json_line(path, [&](const json& j, std::size_t line) {
            const auto track = static_cast<TrackId>(detail::require_int(j, "track", line));
            const auto view = static_cast<ViewIndex>(detail::require_int(j, "view", line));
            const json& texts = detail::require(j, "texts", line);
            const json& vecs = detail::require(j, "vecs", line);
            if (!texts.is_array() || !vecs.is_array() || texts.size() != vecs.size() || texts.empty()) {
                throw SchemaError("texts and vecs must be non-empty arrays of equal length", line);
            }
            std::vector<TextEmbedding> items;
            for (std::size_t k = 0; k < texts.size(); ++k) {
                if (!texts[k].is_string()) throw SchemaError("texts must be strings", line);
                TextEmbedding t{texts[k].get<std::string>(), detail::to_vector(vecs[k], line, "vecs")};
                detail::check_embedding(t.vec, dim, line, "text \"" + t.text + "\"");
                items.push_back(std::move(t));
            }
            out.add(track, view, std::move(items));
        });
        return out;
    }

private:
    std::map<std::pair<TrackId, ViewIndex>, std::vector<TextEmbedding>> entries_;
};

/// Spatial relation of an object to its nearest neighbour in a view.
struct Relation {
    std::string direction;  ///< left | right | above | below
    std::string anchor;     ///< the neighbour's category

    std::string phrase() const {
        if (direction == "left" || direction == "right") return "to the " + direction + " of the " + anchor;
        return direction + " the " + anchor;
    }
};

/// Deterministic bag-of-concepts text embedder used for synthetic captions.
/// A caption vector mixes the category embedding with pseudo-random token
/// directions for its attribute and relation.
class TemplateEmbedder {
public:
    struct Weights {
        double category = 0.0;
        double attribute = 0.0;
        double relation = 0.0;
    };

    explicit TemplateEmbedder(std::uint32_t dim, Weights short_form = {0.35, 0.9, 0.0},
                              Weights long_form = {0.3, 0.7, 0.65})
        : dim_(dim), short_(short_form), long_(long_form) {}

    Vector token(const std::string& t) const {
        Rng rng(fnv1a64(t));
        Vector v(dim_);
        for (double& x : v) x = rng.normal();
        return normalized(std::move(v));
    }

    Vector embed(const Vector& category, const std::string& attribute, const std::optional<Relation>& rel,
                 bool long_form) const {
        const Weights& w = long_form ? long_ : short_;
        Vector v(dim_, 0.0);
        auto add = [&](const Vector& u, double s) {
            for (std::size_t i = 0; i < dim_; ++i) v[i] += s * u[i];
        };
        add(category, w.category);
        if (!attribute.empty()) add(token("attr:" + attribute), w.attribute);
        if (long_form && rel) {
            add(token("dir:" + rel->direction), w.relation * std::sqrt(0.5));
            add(token("anchor:" + rel->anchor), w.relation * std::sqrt(0.5));
        }
        return normalized(std::move(v));
    }

    std::uint32_t dim() const { return dim_; }

private:
    std::uint32_t dim_;
    Weights short_, long_;
};

/// "the blue cup", "the blue cup to the left of the plate".
inline std::string referral_text(const std::string& category, const std::string& attribute,
                                 const std::optional<Relation>& rel) {
    std::string s = "the ";
    if (!attribute.empty()) s += attribute + " ";
    s += category;
    if (rel) s += " " + rel->phrase();
    return s;
}

inline DescriptionSet attach_external(const KeyframeChoice& choice, const std::string& category, const Vector& category_vec,
                                      const ExternalDescriptions& source) {
    DescriptionSet d{choice.track_id, category, category_vec, source.at(choice.track_id, choice.keyframe), choice.keyframe};
    return d;
}

/// Two referrals: a short attribute form and a long attribute+relation form.
/// Without a relation the long form is omitted.
inline DescriptionSet attach_template(const KeyframeChoice& choice, const std::string& category, const Vector& category_vec,
                                      const std::string& attribute, const std::optional<Relation>& rel,
                                      const TemplateEmbedder& embedder) {
    DescriptionSet d{choice.track_id, category, category_vec, {}, choice.keyframe};
    d.referrals.push_back({referral_text(category, attribute, std::nullopt),
                           embedder.embed(category_vec, attribute, std::nullopt, false)});
    if (rel) d.referrals.push_back({referral_text(category, attribute, rel), embedder.embed(category_vec, attribute, rel, true)});
    return d;
}

using Centroid = std::pair<double, double>;

/// Relation of `self` to the nearest of `others` (name, centroid), using the
/// dominant axis of the offset. Equidistant neighbours resolve to the first.
inline std::optional<Relation> nearest_relation(const Centroid& self, const std::vector<std::pair<std::string, Centroid>>& others) {
    std::optional<Relation> best;
    double best_d2 = 0;
    for (const auto& [name, c] : others) {
        const double dx = self.first - c.first, dy = self.second - c.second;
        const double d2 = dx * dx + dy * dy;
        if (best && d2 >= best_d2) continue;
        best_d2 = d2;
        std::string dir = std::abs(dx) >= std::abs(dy) ? (dx < 0 ? "left" : "right") : (dy < 0 ? "above" : "below");
        best = Relation{std::move(dir), name};
    }
    return best;
}

/// Relation of `track` to the nearest other track (by mask centroid) in `view`.
inline std::optional<Relation> relation_at(const SceneDataset& ds, const std::vector<TrackConsensus>& tracks, TrackId track,
                                           ViewIndex view) {
    auto centroid_in_view = [&](const TrackConsensus& t) -> std::optional<Centroid> {
        for (const auto& m : t.members) {
            if (m.view == view) return mask_centroid(ds.at(m).mask);
        }
        return std::nullopt;
    };
    std::optional<Centroid> self;
    std::vector<std::pair<std::string, Centroid>> others;
    for (const auto& t : tracks) {
        auto c = centroid_in_view(t);
        if (!c) continue;
        if (t.track_id == track) {
            self = c;
        } else {
            others.emplace_back(t.canonical, *c);
        }
    }
    if (!self) return std::nullopt;
    return nearest_relation(*self, others);
}

/// Attribute of the ground-truth object most members of the track came from;
/// empty without ground truth.
inline std::string track_attribute(const SceneDataset& ds, const TrackConsensus& t) {
    if (!ds.ground_truth) return {};
    std::map<std::uint32_t, std::size_t> votes;
    for (const auto& m : t.members) {
        if (auto o = ds.at(m).gt_object) ++votes[*o];
    }
    std::optional<std::uint32_t> best;
    for (const auto& [o, n] : votes) {
        if (!best || n > votes[*best]) best = o;
    }
    if (!best) return {};
    for (const auto& o : ds.ground_truth->objects) {
        if (o.id == *best) return o.attribute;
    }
    return {};
}

struct KeyframeParams {
    KeyframeStrategy strategy = KeyframeStrategy::weighting;
    double sigma = kDefaultSigma;
    std::uint64_t seed = 0;
};

/// Selects a keyframe for every consensus track and attaches descriptions,
/// from `external` when given, otherwise from the template synthesizer.
inline std::vector<DescriptionSet> describe_tracks(const SceneDataset& ds, const std::vector<TrackConsensus>& tracks,
                                                   const KeyframeParams& params,
                                                   const ExternalDescriptions* external = nullptr) {
    const TemplateEmbedder embedder(ds.dim);
    std::vector<DescriptionSet> out;
    out.reserve(tracks.size());
    for (const auto& t : tracks) {
        const auto areas = member_areas(ds, t.members);
        const KeyframeChoice choice = select_keyframe(t.track_id, areas, params.strategy, params.sigma, params.seed);
        const Vector& cat = ds.embedding(t.canonical);
        if (external != nullptr) {
            out.push_back(attach_external(choice, t.canonical, cat, *external));
        } else {
            out.push_back(attach_template(choice, t.canonical, cat, track_attribute(ds, t),
                                          relation_at(ds, tracks, t.track_id, choice.keyframe), embedder));
        }
    }
    return out;
}

}  // namespace trackvote
