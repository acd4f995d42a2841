#pragma once

// Scene records (detections, trajectories, embeddings, descriptions, ground
// truth) and their on-disk form: a JSON manifest pointing at line-delimited
// record files.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "trackvote/error.hpp"
#include "trackvote/mask.hpp"

namespace trackvote {

using json = nlohmann::json;
using ViewIndex = std::uint32_t;
using TrackId = std::uint32_t;
using Vector = std::vector<double>;

inline constexpr double kUnitNormTolerance = 1e-6;

/// Position of a detection: view and index within that view's list.
struct DetectionRef {
    ViewIndex view = 0;
    std::uint32_t index = 0;

    friend auto operator<=>(const DetectionRef&, const DetectionRef&) = default;
};

struct Detection {
    ViewIndex view = 0;
    RleMask mask;
    std::string raw_label;
    double confidence = 1.0;
    std::optional<TrackId> track_id;
    /// Set by consensus propagation; raw_label is kept untouched.
    std::optional<std::string> resolved_label;
    /// Synthetic scenes only: the generating object.
    std::optional<std::uint32_t> gt_object;

    friend bool operator==(const Detection&, const Detection&) = default;
};

/// Detections of one physical object, strictly increasing by view.
struct Trajectory {
    TrackId track_id = 0;
    std::vector<DetectionRef> members;

    friend bool operator==(const Trajectory&, const Trajectory&) = default;
};

struct LabelEmbedding {
    std::string label;
    Vector vector;
};

struct TextEmbedding {
    std::string text;
    Vector vec;

    friend bool operator==(const TextEmbedding&, const TextEmbedding&) = default;
};

/// Category plus referring texts of increasing length for one track.
struct DescriptionSet {
    TrackId track_id = 0;
    std::string category;
    Vector category_vec;
    std::vector<TextEmbedding> referrals;
    std::optional<ViewIndex> keyframe;

    friend bool operator==(const DescriptionSet&, const DescriptionSet&) = default;
};

struct GroundTruthObject {
    std::uint32_t id = 0;
    std::string identity;
    std::string attribute;
    /// One entry per view; nullopt where the object is not visible.
    std::vector<std::optional<RleMask>> masks;

    bool visible(ViewIndex v) const { return v < masks.size() && masks[v].has_value(); }

    friend bool operator==(const GroundTruthObject&, const GroundTruthObject&) = default;
};

struct GroundTruth {
    std::vector<GroundTruthObject> objects;

    friend bool operator==(const GroundTruth&, const GroundTruth&) = default;
};

struct SceneDataset {
    std::uint32_t n_views = 0;
    int height = 1;
    int width = 1;
    std::uint32_t dim = 32;
    /// views[v] holds the detections of view v in index order.
    std::vector<std::vector<Detection>> views;
    std::map<std::string, Vector> embeddings;
    std::optional<std::vector<DescriptionSet>> descriptions;
    std::optional<std::vector<Trajectory>> tracks;
    std::optional<GroundTruth> ground_truth;

    const Detection& at(DetectionRef r) const { return views.at(r.view).at(r.index); }
    Detection& at(DetectionRef r) { return views.at(r.view).at(r.index); }

    std::size_t detection_count() const {
        std::size_t n = 0;
        for (const auto& v : views) n += v.size();
        return n;
    }

    const Vector& embedding(const std::string& label) const {
        auto it = embeddings.find(label);
        if (it == embeddings.end()) throw DataError("no embedding for label \"" + label + "\"");
        return it->second;
    }
    friend bool operator==(const SceneDataset&, const SceneDataset&) = default;
};

inline double norm(const Vector& v) {
    double s = 0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

inline double dot(const Vector& a, const Vector& b) {
    double s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline Vector normalized(Vector v) {
    const double n = norm(v);
    if (!(n > 0)) throw NumericError("cannot normalize a zero vector");
    for (double& x : v) x /= n;
    return v;
}

inline bool is_unit(const Vector& v) { return std::abs(norm(v) - 1.0) <= kUnitNormTolerance; }

// ---------------------------------------------------------------------------
// File helpers

inline std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + path.string());
    out << text;
    if (!out) throw Error("write failed for " + path.string());
}

inline json parse_json(const std::string& text, const std::string& what, std::size_t line = 0) {
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        throw SchemaError(what + ": invalid JSON (" + e.what() + ")", line);
    }
}

inline json read_json_file(const std::filesystem::path& path) {
    return parse_json(read_text_file(path), path.string());
}

/// Calls f(json, line_number) for every non-blank line.
template <typename F>
void for_each_json_line(const std::filesystem::path& path, F&& f) {
    std::istringstream in(read_text_file(path));
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
        ++n;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        f(parse_json(line, path.string(), n), n);
    }
}

inline std::string to_jsonl(const std::vector<json>& records) {
    std::string out;
    for (const auto& r : records) {
        out += r.dump();
        out += '\n';
    }
    return out;
}

namespace detail {

inline const json& require(const json& obj, const char* key, std::size_t line) {
    if (!obj.is_object()) throw SchemaError("expected a JSON object", line);
    auto it = obj.find(key);
    if (it == obj.end()) throw SchemaError(std::string("missing key \"") + key + "\"", line);
    return *it;
}

inline std::int64_t require_int(const json& obj, const char* key, std::size_t line, std::int64_t min = 0) {
    const json& v = require(obj, key, line);
    if (!v.is_number_integer()) throw SchemaError(std::string("\"") + key + "\" must be an integer", line);
    const auto x = v.get<std::int64_t>();
    if (x < min) throw SchemaError(std::string("\"") + key + "\" must be >= " + std::to_string(min), line);
    return x;
}

inline double require_real(const json& obj, const char* key, std::size_t line) {
    const json& v = require(obj, key, line);
    if (!v.is_number()) throw SchemaError(std::string("\"") + key + "\" must be a number", line);
    return v.get<double>();
}

inline std::string require_string(const json& obj, const char* key, std::size_t line) {
    const json& v = require(obj, key, line);
    if (!v.is_string()) throw SchemaError(std::string("\"") + key + "\" must be a string", line);
    return v.get<std::string>();
}

inline Vector to_vector(const json& v, std::size_t line, const std::string& what) {
    if (!v.is_array()) throw SchemaError(what + ": expected an array of numbers", line);
    Vector out;
    out.reserve(v.size());
    for (const auto& x : v) {
        if (!x.is_number()) throw SchemaError(what + ": expected an array of numbers", line);
        out.push_back(x.get<double>());
    }
    return out;
}

inline void check_embedding(const Vector& v, std::uint32_t dim, std::size_t line, const std::string& what) {
    if (v.size() != dim) {
        throw SchemaError(what + ": embedding has dimension " + std::to_string(v.size()) + ", expected " +
                              std::to_string(dim),
                          line);
    }
    if (!is_unit(v)) throw SchemaError(what + ": embedding is not unit norm (" + std::to_string(norm(v)) + ")", line);
}

inline std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
    std::filesystem::path path(p);
    return path.is_absolute() ? path : base / path;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Record <-> JSON

inline json mask_to_json(const RleMask& m) { return json{{"h", m.height}, {"w", m.width}, {"counts", m.counts}}; }

inline RleMask mask_from_json(const json& j, std::size_t line = 0) {
    RleMask m;
    m.height = static_cast<int>(detail::require_int(j, "h", line, 1));
    m.width = static_cast<int>(detail::require_int(j, "w", line, 1));
    const json& counts = detail::require(j, "counts", line);
    if (!counts.is_array()) throw SchemaError("mask counts must be an array", line);
    for (const auto& c : counts) {
        if (!c.is_number_unsigned() && !(c.is_number_integer() && c.get<std::int64_t>() >= 0)) {
            throw SchemaError("mask counts must be nonnegative integers", line);
        }
        m.counts.push_back(c.get<std::uint64_t>());
    }
    try {
        m.validate();
    } catch (const FormatError& e) {
        throw SchemaError(e.what(), line);
    }
    return m;
}

inline json detection_to_json(const Detection& d) {
    json j{{"view", d.view}, {"label", d.raw_label}, {"conf", d.confidence}, {"mask", mask_to_json(d.mask)}};
    if (d.track_id) j["track"] = *d.track_id;
    if (d.resolved_label) j["resolved"] = *d.resolved_label;
    if (d.gt_object) j["gt"] = *d.gt_object;
    return j;
}

inline Detection detection_from_json(const json& j, std::size_t line = 0) {
    Detection d;
    d.view = static_cast<ViewIndex>(detail::require_int(j, "view", line));
    d.raw_label = detail::require_string(j, "label", line);
    if (d.raw_label.empty()) throw SchemaError("label must be non-empty", line);
    d.confidence = detail::require_real(j, "conf", line);
    if (!(d.confidence >= 0.0 && d.confidence <= 1.0)) {
        throw SchemaError("confidence " + std::to_string(d.confidence) + " outside [0,1]", line);
    }
    d.mask = mask_from_json(detail::require(j, "mask", line), line);
    if (j.contains("track") && !j["track"].is_null()) d.track_id = static_cast<TrackId>(detail::require_int(j, "track", line));
    if (j.contains("resolved")) d.resolved_label = detail::require_string(j, "resolved", line);
    if (j.contains("gt")) d.gt_object = static_cast<std::uint32_t>(detail::require_int(j, "gt", line));
    return d;
}

inline json trajectory_to_json(const Trajectory& t) {
    json members = json::array();
    for (const auto& m : t.members) members.push_back(json::array({m.view, m.index}));
    return json{{"track", t.track_id}, {"members", members}};
}

inline Trajectory trajectory_from_json(const json& j, std::size_t line = 0) {
    Trajectory t;
    t.track_id = static_cast<TrackId>(detail::require_int(j, "track", line));
    const json& members = detail::require(j, "members", line);
    if (!members.is_array()) throw SchemaError("members must be an array", line);
    for (const auto& m : members) {
        if (!m.is_array() || m.size() != 2 || !m[0].is_number_integer() || !m[1].is_number_integer() ||
            m[0].get<std::int64_t>() < 0 || m[1].get<std::int64_t>() < 0) {
            throw SchemaError("member must be [view, det] with nonnegative integers", line);
        }
        t.members.push_back({m[0].get<ViewIndex>(), m[1].get<std::uint32_t>()});
    }
    return t;
}

inline json description_to_json(const DescriptionSet& d) {
    json refs = json::array();
    for (const auto& r : d.referrals) refs.push_back(json{{"text", r.text}, {"vec", r.vec}});
    json j{{"track", d.track_id}, {"category", d.category}, {"referrals", refs}};
    if (d.keyframe) j["keyframe"] = *d.keyframe;
    return j;
}

/// Category vectors are not stored in the file; they come from `embeddings`.
inline DescriptionSet description_from_json(const json& j, const std::map<std::string, Vector>& embeddings,
                                            std::uint32_t dim, std::size_t line = 0) {
    DescriptionSet d;
    d.track_id = static_cast<TrackId>(detail::require_int(j, "track", line));
    d.category = detail::require_string(j, "category", line);
    auto it = embeddings.find(d.category);
    if (it == embeddings.end()) throw SchemaError("no embedding for category \"" + d.category + "\"", line);
    d.category_vec = it->second;
    const json& refs = detail::require(j, "referrals", line);
    if (!refs.is_array()) throw SchemaError("referrals must be an array", line);
    for (const auto& r : refs) {
        TextEmbedding t{detail::require_string(r, "text", line), detail::to_vector(detail::require(r, "vec", line), line, "referral")};
        detail::check_embedding(t.vec, dim, line, "referral \"" + t.text + "\"");
        d.referrals.push_back(std::move(t));
    }
    if (j.contains("keyframe")) d.keyframe = static_cast<ViewIndex>(detail::require_int(j, "keyframe", line));
    return d;
}

inline json ground_truth_to_json(const GroundTruth& gt) {
    json objects = json::array();
    for (const auto& o : gt.objects) {
        json masks = json::array();
        for (const auto& m : o.masks) masks.push_back(m ? mask_to_json(*m) : json(nullptr));
        objects.push_back(json{{"id", o.id}, {"identity", o.identity}, {"attribute", o.attribute}, {"masks", masks}});
    }
    return json{{"objects", objects}};
}

inline GroundTruth ground_truth_from_json(const json& j) {
    GroundTruth gt;
    const json& objects = detail::require(j, "objects", 0);
    if (!objects.is_array()) throw SchemaError("ground truth objects must be an array");
    for (const auto& o : objects) {
        GroundTruthObject g;
        g.id = static_cast<std::uint32_t>(detail::require_int(o, "id", 0));
        g.identity = detail::require_string(o, "identity", 0);
        if (o.contains("attribute")) g.attribute = detail::require_string(o, "attribute", 0);
        for (const auto& m : detail::require(o, "masks", 0)) {
            if (m.is_null()) {
                g.masks.emplace_back();
            } else {
                g.masks.emplace_back(mask_from_json(m));
            }
        }
        gt.objects.push_back(std::move(g));
    }
    return gt;
}

// ---------------------------------------------------------------------------
// Sidecar files

inline void write_tracks(const std::vector<Trajectory>& tracks, const std::filesystem::path& path) {
    std::vector<json> recs;
    for (const auto& t : tracks) recs.push_back(trajectory_to_json(t));
    write_text_file(path, to_jsonl(recs));
}

inline std::vector<Trajectory> read_tracks(const std::filesystem::path& path) {
    std::vector<Trajectory> out;
    for_each_json_line(path, [&](const json& j, std::size_t line) { out.push_back(trajectory_from_json(j, line)); });
    return out;
}

inline void write_descriptions(const std::vector<DescriptionSet>& ds, const std::filesystem::path& path) {
    std::vector<json> recs;
    for (const auto& d : ds) recs.push_back(description_to_json(d));
    write_text_file(path, to_jsonl(recs));
}

inline std::vector<DescriptionSet> read_descriptions(const std::filesystem::path& path,
                                                     const std::map<std::string, Vector>& embeddings,
                                                     std::uint32_t dim) {
    std::vector<DescriptionSet> out;
    for_each_json_line(path, [&](const json& j, std::size_t line) {
        out.push_back(description_from_json(j, embeddings, dim, line));
    });
    return out;
}

// ---------------------------------------------------------------------------
// Dataset persistence

/// Writes `manifest_path` plus sibling record files. Output is canonical:
/// saving a loaded dataset reproduces the same bytes.
inline void save_dataset(const SceneDataset& ds, const std::filesystem::path& manifest_path) {
    const auto dir = manifest_path.parent_path();
    json manifest{{"n_views", ds.n_views}, {"h", ds.height}, {"w", ds.width}, {"dim", ds.dim},
                  {"detections", "detections.jsonl"}, {"embeddings", "embeddings.json"}};

    std::vector<json> dets;
    for (const auto& view : ds.views) {
        for (const auto& d : view) dets.push_back(detection_to_json(d));
    }
    write_text_file(dir / "detections.jsonl", to_jsonl(dets));

    json emb = json::object();
    for (const auto& [label, vec] : ds.embeddings) emb[label] = vec;
    write_text_file(dir / "embeddings.json", emb.dump() + "\n");

    if (ds.descriptions) {
        manifest["descriptions"] = "descriptions.jsonl";
        write_descriptions(*ds.descriptions, dir / "descriptions.jsonl");
    }
    if (ds.tracks) {
        manifest["tracks"] = "tracks.jsonl";
        write_tracks(*ds.tracks, dir / "tracks.jsonl");
    }
    if (ds.ground_truth) {
        manifest["ground_truth"] = "ground_truth.json";
        write_text_file(dir / "ground_truth.json", ground_truth_to_json(*ds.ground_truth).dump() + "\n");
    }
    write_text_file(manifest_path, manifest.dump(2) + "\n");
}

inline SceneDataset load_dataset(const std::filesystem::path& manifest_path) {
    const json manifest = read_json_file(manifest_path);
    const auto dir = manifest_path.parent_path();
    SceneDataset ds;
    ds.n_views = static_cast<std::uint32_t>(detail::require_int(manifest, "n_views", 0));
    ds.height = static_cast<int>(detail::require_int(manifest, "h", 0, 1));
    ds.width = static_cast<int>(detail::require_int(manifest, "w", 0, 1));
    ds.dim = static_cast<std::uint32_t>(detail::require_int(manifest, "dim", 0, 1));
    ds.views.resize(ds.n_views);

    const auto emb_path = detail::resolve(dir, detail::require_string(manifest, "embeddings", 0));
    const json emb = read_json_file(emb_path);
    if (!emb.is_object()) throw SchemaError(emb_path.string() + ": expected a label -> vector map");
    for (const auto& [label, vec] : emb.items()) {
        Vector v = detail::to_vector(vec, 0, "embedding \"" + label + "\"");
        detail::check_embedding(v, ds.dim, 0, emb_path.string() + ": label \"" + label + "\"");
        ds.embeddings.emplace(label, std::move(v));
    }

    const auto det_path = detail::resolve(dir, detail::require_string(manifest, "detections", 0));
    for_each_json_line(det_path, [&](const json& j, std::size_t line) {
        Detection d = detection_from_json(j, line);
        if (d.view >= ds.n_views) {
            throw SchemaError("view " + std::to_string(d.view) + " out of range (n_views=" + std::to_string(ds.n_views) + ")",
                              line);
        }
        if (d.mask.height != ds.height || d.mask.width != ds.width) {
            throw SchemaError("mask is " + std::to_string(d.mask.height) + "x" + std::to_string(d.mask.width) +
                                  ", dataset is " + std::to_string(ds.height) + "x" + std::to_string(ds.width),
                              line);
        }
        ds.views[d.view].push_back(std::move(d));
    });

    if (manifest.contains("descriptions")) {
        ds.descriptions = read_descriptions(detail::resolve(dir, detail::require_string(manifest, "descriptions", 0)),
                                            ds.embeddings, ds.dim);
    }
    if (manifest.contains("tracks")) {
        ds.tracks = read_tracks(detail::resolve(dir, detail::require_string(manifest, "tracks", 0)));
    }
    if (manifest.contains("ground_truth")) {
        ds.ground_truth = ground_truth_from_json(
            read_json_file(detail::resolve(dir, detail::require_string(manifest, "ground_truth", 0))));
    }
    return ds;
}

}  // namespace trackvote
