#pragma once

// Metrics: query mIoU, consensus label accuracy, JSON reports and CSV sweep
// tables.

#include <charconv>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "trackvote/consensus.hpp"
#include "trackvote/dataset.hpp"
#include "trackvote/error.hpp"
#include "trackvote/mask.hpp"
#include "trackvote/random.hpp"

namespace trackvote {

struct QueryViewKey {
    std::string query;
    ViewIndex view = 0;

    friend auto operator<=>(const QueryViewKey&, const QueryViewKey&) = default;
};

struct MiouResult {
    std::map<std::string, double> per_query;  ///< mean IoU over the query's views
    double overall = 0.0;                     ///< mean of per-query values
};

/// Predictions must already be binarized. Every prediction needs a ground
/// truth mask for the same (query, view).
inline MiouResult miou(const std::map<QueryViewKey, RleMask>& predictions, const std::map<QueryViewKey, RleMask>& truth) {
    std::map<std::string, std::pair<double, std::size_t>> acc;
    for (const auto& [key, pred] : predictions) {
        auto it = truth.find(key);
        if (it == truth.end()) {
            throw DataError("miou: no ground truth for query \"" + key.query + "\" at view " + std::to_string(key.view));
        }
        auto& [sum, n] = acc[key.query];
        sum += mask_iou(pred, it->second);
        ++n;
    }
    MiouResult r;
    double total = 0;
    for (const auto& [q, sn] : acc) {
        const double mean = sn.first / static_cast<double>(sn.second);
        r.per_query[q] = mean;
        total += mean;
    }
    if (!r.per_query.empty()) r.overall = total / static_cast<double>(r.per_query.size());
    return r;
}

/// Category-level ground truth: union of every instance of `category`
/// visible in `view`. Empty when none is visible there.
inline RleMask short_query_union(const GroundTruth& gt, const std::string& category, ViewIndex view, int height, int width) {
    bool known = false;
    RleMask out = empty_mask(height, width);
    for (const auto& o : gt.objects) {
        if (o.identity != category) continue;
        known = true;
        if (o.visible(view)) out = mask_union(out, *o.masks[view]);
    }
    if (!known) throw DataError("short_query_union: unknown category \"" + category + "\"");
    return out;
}

struct ConsensusAccuracy {
    double per_view_acc = 1.0;  ///< clustered raw label matches the true identity
    double tscm_acc = 1.0;      ///< propagated track identity matches the true identity
    std::size_t detections = 0;
};

/// Detections without a ground-truth object are skipped. Detections without
/// a resolved label count as wrong for the trajectory-level score.
inline ConsensusAccuracy consensus_accuracy(const SceneDataset& ds, const SynonymClustering& clustering, const GroundTruth& gt) {
    std::size_t n = 0, per_view = 0, tscm = 0;
    for (const auto& view : ds.views) {
        for (const auto& d : view) {
            if (!d.gt_object || *d.gt_object >= gt.objects.size()) continue;
            const std::string& truth = gt.objects[*d.gt_object].identity;
            ++n;
            if (apply_phi(clustering, d.raw_label, nullptr).canonical == truth) ++per_view;
            if (d.resolved_label && *d.resolved_label == truth) ++tscm;
        }
    }
    ConsensusAccuracy a;
    a.detections = n;
    if (n > 0) {
        a.per_view_acc = static_cast<double>(per_view) / static_cast<double>(n);
        a.tscm_acc = static_cast<double>(tscm) / static_cast<double>(n);
    }
    return a;
}

// ---------------------------------------------------------------------------
// Reports

inline std::string hex64(std::uint64_t x) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(x));
    return buf;
}

/// Hash of the canonical (sorted-key, compact) serialization.
inline std::string config_hash(const json& config) { return hex64(fnv1a64(config.dump())); }

struct Report {
    json config = json::object();
    json seeds = json::object();
    json metrics = json::object();

    friend bool operator==(const Report&, const Report&) = default;
};

inline json report_to_json(const Report& r) {
    return json{{"config_hash", config_hash(r.config)}, {"config", r.config}, {"seeds", r.seeds}, {"metrics", r.metrics}};
}

inline void emit_report(const Report& r, const std::filesystem::path& path) {
    write_text_file(path, report_to_json(r).dump(2) + "\n");
}

inline Report load_report(const std::filesystem::path& path) {
    const json j = read_json_file(path);
    Report r{detail::require(j, "config", 0), detail::require(j, "seeds", 0), detail::require(j, "metrics", 0)};
    if (detail::require_string(j, "config_hash", 0) != config_hash(r.config)) {
        throw SchemaError(path.string() + ": config_hash does not match the stored config");
    }
    return r;
}

/// Shortest decimal text that parses back to the same double.
inline std::string format_real(double x) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, x);
    return std::string(buf, res.ptr);
}

/// Sweep table: one row per parameter value, one column per metric.
inline std::string to_csv(const std::vector<std::string>& header, const std::vector<std::vector<std::string>>& rows) {
    auto line = [](const std::vector<std::string>& cells) {
        std::string s;
        for (std::size_t i = 0; i < cells.size(); ++i) {
            if (i > 0) s += ',';
            s += cells[i];
        }
        return s + "\n";
    };
    std::string out = line(header);
    for (const auto& r : rows) out += line(r);
    return out;
}

}  // namespace trackvote
