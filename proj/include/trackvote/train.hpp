#pragma once

// Training the toy referring field with the hybrid objective
//   L = L_seg + lambda * r(iter) * L_con,
// where r is the ratio-decay multiplier, and evaluation of a trained field
// on held-out views.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "trackvote/consensus.hpp"
#include "trackvote/dataset.hpp"
#include "trackvote/error.hpp"
#include "trackvote/eval.hpp"
#include "trackvote/field.hpp"
#include "trackvote/keyframe.hpp"
#include "trackvote/random.hpp"

namespace trackvote {

enum class SelectionMode {
    pseudo_mask,    ///< Gaussians whose center pixel is inside the pseudo mask
    rendered_mask,  ///< Gaussians whose center pixel renders with prob >= 0.5
};

struct RatioDecay {
    double start = 0.1;
    double factor = 0.6;
    std::uint32_t interval = 2000;

    double at(std::size_t iter) const {
        return start * std::pow(factor, static_cast<double>(interval == 0 ? 0 : iter / interval));
    }
};

struct TrainConfig {
    double lambda = 0.1;
    double tau = 0.1;
    std::uint32_t epochs = 5;
    double feature_lr = 2.5e-3;
    double mlp_lr = 1e-4;  ///< reserved; the toy field has no MLP
    RatioDecay ratio_decay;
    std::uint64_t seed = 0;
    double spread = 8.0;
    double init_scale = 0.01;
    /// Views excluded from supervision.
    std::vector<ViewIndex> eval_views;
    /// Train on referral texts only (category excluded from the positives).
    bool long_only = false;
    SelectionMode selection = SelectionMode::pseudo_mask;
    /// Caps the total number of optimizer steps when set.
    std::optional<std::size_t> max_steps;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;

    void validate() const {
        if (!(lambda >= 0.0)) throw NumericError("train: lambda must be nonnegative");
        if (!(tau > 0.0)) throw NumericError("train: tau must be positive");
        if (!(feature_lr > 0.0)) throw NumericError("train: feature_lr must be positive");
        if (!(spread > 0.0)) throw NumericError("train: spread must be positive");
    }
};

/// Relative Gaussian placements inside a track's box, in box-size units.
inline const std::vector<Point>& gaussian_offsets() {
    static const std::vector<Point> offsets{{-0.3, -0.3}, {0.0, -0.3}, {0.3, -0.3}, {-0.3, 0.0}, {0.0, 0.0},
                                            {0.3, 0.0},   {-0.3, 0.3}, {0.0, 0.3}, {0.3, 0.3}};
    return offsets;
}

/// One Gaussian per offset per track, positioned in each view from the
/// bounding box of the track's detection there. Features start as seeded
/// N(0, init_scale^2) draws.
inline ReferringField build_field(const SceneDataset& ds, const std::vector<TrackConsensus>& tracks, double spread,
                                  std::uint64_t seed, double init_scale) {
    ReferringField field(ds.height, ds.width, ds.dim, spread);
    Rng rng(mix_seed(seed, 0xF1E1D));
    for (const auto& t : tracks) {
        std::vector<std::optional<Box>> boxes(ds.n_views);
        for (const auto& m : t.members) boxes.at(m.view) = mask_bbox(ds.at(m).mask);
        for (const Point& off : gaussian_offsets()) {
            ToyGaussian g{static_cast<std::uint32_t>(field.size()), t.track_id, {}};
            for (const auto& b : boxes) {
                if (!b) {
                    g.centers.emplace_back();
                    continue;
                }
                g.centers.push_back(Point{b->center_x() + off.x * b->width(), b->center_y() + off.y * b->height()});
            }
            Vector f(ds.dim);
            for (double& x : f) x = init_scale * rng.normal();
            field.add(std::move(g), std::move(f));
        }
    }
    return field;
}

/// Segmentation supervision for one query: render with `query`, compare to `target`.
struct SegItem {
    std::string text;
    Vector query;
    Bitmap target;
};

/// Everything one optimizer step needs for a (view, track) pair.
struct StepProblem {
    ViewIndex view = 0;
    TrackId track = 0;
    std::vector<SegItem> seg;
    std::vector<Vector> pool;              ///< D: positives of every co-visible track
    std::vector<std::size_t> positives;    ///< P: indices of this track's texts in the pool
    Bitmap pseudo_mask;                    ///< this track's mask in this view
};

struct StepEval {
    double seg = 0.0;
    double con = 0.0;
    double total = 0.0;
    std::vector<double> grad;  ///< with respect to field.features()
};

inline std::vector<std::size_t> selected_gaussians(const ReferringField& field, std::span<const Footprint> fps,
                                                   const StepProblem& p, SelectionMode mode) {
    if (mode == SelectionMode::pseudo_mask) return select_gaussians(field, p.view, p.pseudo_mask).ids;
    const Grid prob = to_probabilities(render_logits(field, fps, p.seg.front().query));
    std::vector<std::size_t> ids;
    for (const auto& fp : fps) {
        const Point c = *field.gaussian(fp.gaussian).centers[p.view];
        const auto x = static_cast<int>(std::floor(c.x)), y = static_cast<int>(std::floor(c.y));
        if (x < 0 || y < 0 || x >= field.width() || y >= field.height()) continue;
        if (prob.values[static_cast<std::size_t>(y) * field.width() + x] >= 0.5) ids.push_back(fp.gaussian);
    }
    if (ids.empty()) throw DataError("select_gaussians: rendered mask selects no Gaussian");
    return ids;
}

/// Loss and gradient of one step:
///   seg  = mean over the track's queries of BCE(render(query), target)
///   con  = contrastive loss of the mean selected feature
///   total = seg + con_weight * con
/// `selection` is held fixed (it is piecewise constant in the features).
inline StepEval evaluate_step(const ReferringField& field, std::span<const Footprint> fps, const StepProblem& p,
                              std::span<const std::size_t> selection, double tau, double con_weight) {
    StepEval out;
    out.grad.assign(field.features().size(), 0.0);
    const std::size_t dim = field.dim();
    const double inv_items = 1.0 / static_cast<double>(p.seg.size());

    for (const auto& item : p.seg) {
        const Grid prob = to_probabilities(render_logits(field, fps, item.query));
        const LossGrad bce = seg_loss(prob, item.target);
        out.seg += bce.loss * inv_items;
        for (const auto& fp : fps) {
            double a = 0;
            for (std::size_t k = 0; k < fp.pixels.size(); ++k) a += bce.grad[fp.pixels[k]] * fp.weights[k];
            a *= inv_items;
            double* g = out.grad.data() + fp.gaussian * dim;
            for (std::size_t i = 0; i < dim; ++i) g[i] += a * item.query[i];
        }
    }

    const GaussianSelection sel = mean_feature(field, {selection.begin(), selection.end()});
    const LossGrad con = contrastive_loss(sel.mean, p.positives, p.pool, tau);
    out.con = con.loss;
    out.total = total_loss(out.seg, out.con, con_weight);
    const double share = con_weight / static_cast<double>(selection.size());
    for (std::size_t gidx : selection) {
        double* g = out.grad.data() + gidx * dim;
        for (std::size_t i = 0; i < dim; ++i) g[i] += share * con.grad[i];
    }
    return out;
}

/// Texts treated as positives for a track under the given mode.
inline std::vector<TextEmbedding> positive_texts(const DescriptionSet& d, bool long_only) {
    std::vector<TextEmbedding> out;
    if (!long_only) out.push_back({d.category, d.category_vec});
    out.insert(out.end(), d.referrals.begin(), d.referrals.end());
    if (out.empty()) {
        throw DataError("train: track " + std::to_string(d.track_id) + " has an empty positive set (no referrals)");
    }
    return out;
}

/// One problem per (training view, described track visible in it). The
/// segmentation target of a text is the union of the pseudo masks of every
/// co-visible track that has that text among its positives, so a shared
/// category covers all of its instances.
inline std::vector<StepProblem> build_problems(const SceneDataset& ds, const std::vector<TrackConsensus>& tracks,
                                               const std::vector<DescriptionSet>& descriptions, const TrainConfig& cfg) {
    std::map<TrackId, const DescriptionSet*> desc;
    for (const auto& d : descriptions) desc[d.track_id] = &d;
    const std::set<ViewIndex> held_out(cfg.eval_views.begin(), cfg.eval_views.end());

    struct Visible {
        TrackId track;
        std::vector<TextEmbedding> texts;
        Bitmap mask;
    };
    std::vector<StepProblem> problems;
    for (ViewIndex v = 0; v < ds.n_views; ++v) {
        if (held_out.count(v) != 0) continue;
        std::vector<Visible> visible;
        for (const auto& t : tracks) {
            auto d = desc.find(t.track_id);
            if (d == desc.end()) continue;
            for (const auto& m : t.members) {
                if (m.view == v) visible.push_back({t.track_id, positive_texts(*d->second, cfg.long_only), rle_decode(ds.at(m).mask)});
            }
        }
        std::vector<Vector> pool;
        std::vector<std::size_t> first;
        for (const auto& vt : visible) {
            first.push_back(pool.size());
            for (const auto& t : vt.texts) pool.push_back(t.vec);
        }
        for (std::size_t i = 0; i < visible.size(); ++i) {
            StepProblem p;
            p.view = v;
            p.track = visible[i].track;
            p.pool = pool;
            p.pseudo_mask = visible[i].mask;
            for (std::size_t k = 0; k < visible[i].texts.size(); ++k) {
                const auto& text = visible[i].texts[k];
                p.positives.push_back(first[i] + k);
                Bitmap target(ds.height, ds.width);
                for (const auto& other : visible) {
                    const bool shares = std::any_of(other.texts.begin(), other.texts.end(),
                                                    [&](const TextEmbedding& o) { return o.text == text.text; });
                    if (!shares) continue;
                    for (std::size_t px = 0; px < target.pixels.size(); ++px) target.pixels[px] |= other.mask.pixels[px];
                }
                p.seg.push_back({text.text, text.vec, std::move(target)});
            }
            problems.push_back(std::move(p));
        }
    }
    return problems;
}

struct LossRecord {
    std::size_t iter = 0;
    double seg = 0.0;
    double con = 0.0;
    double total = 0.0;

    friend bool operator==(const LossRecord&, const LossRecord&) = default;
};

struct TrainResult {
    ReferringField field;
    std::vector<LossRecord> curve;
};

/// Adam on the feature vectors over `epochs` passes of the (view, track)
/// problems, shuffled per epoch with a seeded stream. Fully sequential, so a
/// fixed seed reproduces the loss curve bit for bit.
inline TrainResult train(ReferringField field, const SceneDataset& ds, const std::vector<TrackConsensus>& tracks,
                         const std::vector<DescriptionSet>& descriptions, const TrainConfig& cfg) {
    cfg.validate();
    const std::vector<StepProblem> problems = build_problems(ds, tracks, descriptions, cfg);
    std::vector<std::vector<Footprint>> footprints(ds.n_views);
    for (ViewIndex v = 0; v < ds.n_views; ++v) footprints[v] = view_footprints(field, v);

    TrainResult out;
    std::vector<double> m(field.features().size(), 0.0), s(field.features().size(), 0.0);
    std::size_t iter = 0;
    const std::size_t limit = cfg.max_steps.value_or(std::numeric_limits<std::size_t>::max());
    for (std::uint32_t epoch = 0; epoch < cfg.epochs && iter < limit && !problems.empty(); ++epoch) {
        std::vector<std::size_t> order(problems.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        Rng rng(mix_seed(cfg.seed, epoch));
        rng.shuffle(order);

        for (std::size_t idx : order) {
            if (iter >= limit) break;
            const StepProblem& p = problems[idx];
            const auto& fps = footprints[p.view];
            const std::vector<std::size_t> sel = selected_gaussians(field, fps, p, cfg.selection);
            const double con_weight = cfg.lambda * cfg.ratio_decay.at(iter);
            const StepEval e = evaluate_step(field, fps, p, sel, cfg.tau, con_weight);
            if (!std::isfinite(e.total)) throw NumericError("train: non-finite loss at iteration " + std::to_string(iter));
            out.curve.push_back({iter, e.seg, e.con, e.total});

            ++iter;
            const double c1 = 1.0 - std::pow(cfg.adam_beta1, static_cast<double>(iter));
            const double c2 = 1.0 - std::pow(cfg.adam_beta2, static_cast<double>(iter));
            auto& f = field.features();
            for (std::size_t i = 0; i < f.size(); ++i) {
                m[i] = cfg.adam_beta1 * m[i] + (1.0 - cfg.adam_beta1) * e.grad[i];
                s[i] = cfg.adam_beta2 * s[i] + (1.0 - cfg.adam_beta2) * e.grad[i] * e.grad[i];
                f[i] -= cfg.feature_lr * (m[i] / c1) / (std::sqrt(s[i] / c2) + cfg.adam_eps);
            }
        }
    }
    out.field = std::move(field);
    return out;
}

/// Same as train() with categories removed from the positive sets, i.e.
/// supervision from referring descriptions alone.
inline TrainResult long_only_baseline(ReferringField field, const SceneDataset& ds, const std::vector<TrackConsensus>& tracks,
                                      const std::vector<DescriptionSet>& descriptions, TrainConfig cfg) {
    cfg.long_only = true;
    return train(std::move(field), ds, tracks, descriptions, cfg);
}

// ---------------------------------------------------------------------------
// Evaluation on held-out views (synthetic scenes with ground truth)

struct FieldEvaluation {
    MiouResult short_queries;
    MiouResult long_queries;
};

/// Short queries are ground-truth categories scored against the union of
/// their instances. Long queries are per-object template captions built from
/// ground truth in each evaluation view, scored against the object's mask.
inline FieldEvaluation evaluate_field(const ReferringField& field, const SceneDataset& ds, const GroundTruth& gt,
                                      const std::vector<ViewIndex>& views) {
    const TemplateEmbedder embedder(ds.dim);
    std::map<QueryViewKey, RleMask> short_pred, short_truth, long_pred, long_truth;
    std::set<std::string> categories;
    for (const auto& o : gt.objects) categories.insert(o.identity);

    for (ViewIndex v : views) {
        const auto fps = view_footprints(field, v);
        for (const auto& c : categories) {
            const QueryViewKey key{c, v};
            short_pred[key] = binarize(to_probabilities(render_logits(field, fps, ds.embedding(c))));
            short_truth[key] = short_query_union(gt, c, v, ds.height, ds.width);
        }
        for (const auto& o : gt.objects) {
            if (!o.visible(v)) continue;
            std::vector<std::pair<std::string, Centroid>> others;
            for (const auto& q : gt.objects) {
                if (q.id != o.id && q.visible(v)) others.emplace_back(q.identity, *mask_centroid(*q.masks[v]));
            }
            const auto rel = nearest_relation(*mask_centroid(*o.masks[v]), others);
            const Vector& cat = ds.embedding(o.identity);
            const QueryViewKey key{referral_text(o.identity, o.attribute, rel), v};
            long_pred[key] = binarize(to_probabilities(render_logits(field, fps, embedder.embed(cat, o.attribute, rel, true))));
            long_truth[key] = *o.masks[v];
        }
    }
    return {miou(short_pred, short_truth), miou(long_pred, long_truth)};
}

/// Every `every`-th view (1-based), e.g. 4, 9, 14 for every = 5.
inline std::vector<ViewIndex> holdout_views(std::uint32_t n_views, std::uint32_t every) {
    std::vector<ViewIndex> out;
    if (every == 0) return out;
    for (ViewIndex v = 0; v < n_views; ++v) {
        if ((v + 1) % every == 0) out.push_back(v);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Model and loss-curve files

inline json field_to_json(const ReferringField& f) {
    json gs = json::array();
    for (std::size_t g = 0; g < f.size(); ++g) {
        const auto& gauss = f.gaussian(g);
        json centers = json::array();
        for (ViewIndex v = 0; v < gauss.centers.size(); ++v) {
            if (gauss.centers[v]) centers.push_back(json::array({v, gauss.centers[v]->x, gauss.centers[v]->y}));
        }
        auto feat = f.feature(g);
        gs.push_back(json{{"id", gauss.id}, {"track", gauss.track}, {"centers", centers},
                          {"feature", std::vector<double>(feat.begin(), feat.end())}});
    }
    std::uint32_t n_views = 0;
    for (const auto& g : f.gaussians()) n_views = std::max<std::uint32_t>(n_views, static_cast<std::uint32_t>(g.centers.size()));
    return json{{"h", f.height()}, {"w", f.width()}, {"dim", f.dim()}, {"spread", f.spread()}, {"n_views", n_views},
                {"gaussians", gs}};
}

inline ReferringField field_from_json(const json& j) {
    using detail::require;
    using detail::require_int;
    ReferringField f(static_cast<int>(require_int(j, "h", 0, 1)), static_cast<int>(require_int(j, "w", 0, 1)),
                     static_cast<std::uint32_t>(require_int(j, "dim", 0, 1)), detail::require_real(j, "spread", 0));
    const auto n_views = static_cast<std::size_t>(require_int(j, "n_views", 0));
    for (const auto& g : require(j, "gaussians", 0)) {
        ToyGaussian t{static_cast<std::uint32_t>(require_int(g, "id", 0)), static_cast<TrackId>(require_int(g, "track", 0)),
                      std::vector<std::optional<Point>>(n_views)};
        for (const auto& c : require(g, "centers", 0)) {
            if (!c.is_array() || c.size() != 3) throw SchemaError("model: center must be [view, x, y]");
            const auto v = c[0].get<std::size_t>();
            if (v >= n_views) throw SchemaError("model: center view out of range");
            t.centers[v] = Point{c[1].get<double>(), c[2].get<double>()};
        }
        f.add(std::move(t), detail::to_vector(require(g, "feature", 0), 0, "feature"));
    }
    return f;
}

inline std::string loss_curve_csv(const std::vector<LossRecord>& curve) {
    std::vector<std::vector<std::string>> rows;
    for (const auto& r : curve) rows.push_back({std::to_string(r.iter), format_real(r.seg), format_real(r.con), format_real(r.total)});
    return to_csv({"iter", "L_seg", "L_con", "L"}, rows);
}

inline json train_config_to_json(const TrainConfig& c) {
    json j{{"lambda", c.lambda},
           {"tau", c.tau},
           {"epochs", c.epochs},
           {"feature_lr", c.feature_lr},
           {"mlp_lr", c.mlp_lr},
           {"ratio_decay", {{"start", c.ratio_decay.start}, {"factor", c.ratio_decay.factor}, {"interval", c.ratio_decay.interval}}},
           {"seed", c.seed},
           {"spread", c.spread},
           {"init_scale", c.init_scale},
           {"eval_views", c.eval_views},
           {"long_only", c.long_only},
           {"selection", c.selection == SelectionMode::pseudo_mask ? "pseudo" : "rendered"}};
    if (c.max_steps) j["max_steps"] = *c.max_steps;
    return j;
}

/// Missing keys keep their defaults.
inline TrainConfig train_config_from_json(const json& j) {
    TrainConfig c;
    if (!j.is_object()) throw SchemaError("train config must be a JSON object");
    try {
        c.lambda = j.value("lambda", c.lambda);
        c.tau = j.value("tau", c.tau);
        c.epochs = j.value("epochs", c.epochs);
        c.feature_lr = j.value("feature_lr", c.feature_lr);
        c.mlp_lr = j.value("mlp_lr", c.mlp_lr);
        if (j.contains("ratio_decay")) {
            const json& r = j.at("ratio_decay");
            c.ratio_decay.start = r.value("start", c.ratio_decay.start);
            c.ratio_decay.factor = r.value("factor", c.ratio_decay.factor);
            c.ratio_decay.interval = r.value("interval", c.ratio_decay.interval);
        }
        c.seed = j.value("seed", c.seed);
        c.spread = j.value("spread", c.spread);
        c.init_scale = j.value("init_scale", c.init_scale);
        c.eval_views = j.value("eval_views", c.eval_views);
        c.long_only = j.value("long_only", c.long_only);
        const std::string sel = j.value("selection", std::string("pseudo"));
        if (sel == "pseudo") {
            c.selection = SelectionMode::pseudo_mask;
        } else if (sel == "rendered") {
            c.selection = SelectionMode::rendered_mask;
        } else {
            throw SchemaError("train config: selection must be \"pseudo\" or \"rendered\"");
        }
        if (j.contains("max_steps")) c.max_steps = j.at("max_steps").get<std::size_t>();
    } catch (const json::exception& e) {
        throw SchemaError(std::string("train config: ") + e.what());
    }
    c.validate();
    return c;
}

}  // namespace trackvote
