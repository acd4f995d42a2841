#pragma once

// Seeded synthetic multi-view scenes with ground truth, and a corruption
// model for per-view detector failures: synonym drift, wrong labels,
// occlusion dropout and mask boundary jitter.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numbers>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "trackvote/consensus.hpp"
#include "trackvote/dataset.hpp"
#include "trackvote/error.hpp"
#include "trackvote/mask.hpp"
#include "trackvote/random.hpp"

namespace trackvote {

struct SynonymGroup {
    std::string canonical;
    std::vector<std::string> synonyms;

    std::vector<std::string> words() const {
        std::vector<std::string> w{canonical};
        w.insert(w.end(), synonyms.begin(), synonyms.end());
        return w;
    }
};

inline std::vector<SynonymGroup> default_vocabulary() {
    return {
        {"cup", {"mug", "teacup", "coffee cup"}},
        {"plate", {"dinner plate", "side plate"}},
        {"ramen", {"ramen bowl", "noodle soup", "ramen noodles"}},
        {"bowl", {"soup bowl", "serving bowl"}},
        {"bottle", {"water bottle", "drink bottle"}},
        {"coffee maker", {"coffee machine", "espresso machine"}},
        {"knife", {"table knife", "kitchen knife"}},
        {"spoon", {"soup spoon", "table spoon"}},
    };
}

struct NoiseConfig {
    double synonym_rate = 0.0;
    double wrong_label_rate = 0.0;
    double dropout_rate = 0.0;
    int mask_jitter = 0;
    bool strip_tracks = false;
};

struct SynthConfig {
    std::uint32_t n_views = 10;
    int height = 64;
    int width = 64;
    std::uint32_t n_objects = 3;
    std::vector<SynonymGroup> vocabulary = default_vocabulary();
    /// Optional canonical word per object; drawn from the vocabulary if empty.
    std::vector<std::string> object_groups;
    std::uint32_t dim = 32;
    NoiseConfig noise;
    std::uint64_t seed = 0;

    void validate() const {
        auto rate = [](double r, const char* name) {
            if (!(r >= 0.0 && r <= 1.0)) throw DataError(std::string("synth: ") + name + " must be in [0,1]");
        };
        rate(noise.synonym_rate, "synonym_rate");
        rate(noise.wrong_label_rate, "wrong_label_rate");
        rate(noise.dropout_rate, "dropout_rate");
        if (noise.mask_jitter < 0) throw DataError("synth: mask_jitter must be nonnegative");
        if (height <= 0 || width <= 0) throw DataError("synth: image dimensions must be positive");
        if (vocabulary.empty()) throw DataError("synth: empty vocabulary");
        if (vocabulary.size() > dim) throw DataError("synth: vocabulary has more groups than embedding dimensions");
        std::set<std::string> seen;
        for (const auto& g : vocabulary) {
            for (const auto& w : g.words()) {
                if (!seen.insert(w).second) throw DataError("synth: word \"" + w + "\" appears twice in the vocabulary");
                if (w != g.canonical && !shorter_surface(g.canonical, w)) {
                    throw DataError("synth: canonical \"" + g.canonical + "\" must be the shortest form of its group");
                }
            }
        }
        if (!object_groups.empty() && object_groups.size() != n_objects) {
            throw DataError("synth: object_groups must list one group per object");
        }
        for (const auto& c : object_groups) {
            if (std::none_of(vocabulary.begin(), vocabulary.end(), [&](const SynonymGroup& g) { return g.canonical == c; })) {
                throw DataError("synth: object group \"" + c + "\" is not in the vocabulary");
            }
        }
    }
};

inline const std::vector<std::string>& attribute_words() {
    static const std::vector<std::string> words{"red", "blue", "green", "yellow", "white", "black", "orange", "purple"};
    return words;
}

/// Unit embeddings with group structure: groups get orthonormal base
/// directions and each word sits at a small angle (0.05 to 0.2 rad) from its
/// base, so in-group cosine is at least cos(0.4) and cross-group cosine is
/// at most 0.45.
inline std::map<std::string, Vector> vocabulary_embeddings(const std::vector<SynonymGroup>& vocab, std::uint32_t dim,
                                                           std::uint64_t seed) {
    Rng rng(mix_seed(seed, 0xE3B));
    auto gaussian = [&] {
        Vector v(dim);
        for (double& x : v) x = rng.normal();
        return v;
    };
    auto remove_component = [](Vector& v, const Vector& b) {
        const double p = dot(v, b);
        for (std::size_t i = 0; i < v.size(); ++i) v[i] -= p * b[i];
    };

    std::vector<Vector> bases;
    for (std::size_t g = 0; g < vocab.size(); ++g) {
        Vector v = gaussian();
        for (const auto& b : bases) remove_component(v, b);
        bases.push_back(normalized(std::move(v)));
    }
    std::map<std::string, Vector> out;
    for (std::size_t g = 0; g < vocab.size(); ++g) {
        for (const auto& w : vocab[g].words()) {
            Vector u = gaussian();
            remove_component(u, bases[g]);
            u = normalized(std::move(u));
            const double theta = rng.uniform(0.05, 0.2);
            Vector e(dim);
            for (std::size_t i = 0; i < dim; ++i) e[i] = std::cos(theta) * bases[g][i] + std::sin(theta) * u[i];
            out[w] = normalized(std::move(e));
        }
    }
    return out;
}

struct SyntheticScene {
    SceneDataset dataset;
    GroundTruth truth;
};

namespace detail {

inline Bitmap rasterize(int h, int w, bool ellipse, double cx, double cy, double rx, double ry) {
    Bitmap b(h, w);
    const int y0 = std::max(0, static_cast<int>(std::floor(cy - ry))), y1 = std::min(h - 1, static_cast<int>(std::ceil(cy + ry)));
    const int x0 = std::max(0, static_cast<int>(std::floor(cx - rx))), x1 = std::min(w - 1, static_cast<int>(std::ceil(cx + rx)));
    for (int y = y0; y <= y1; ++y) {
        for (int x = x0; x <= x1; ++x) {
            const double dx = (x + 0.5 - cx) / rx, dy = (y + 0.5 - cy) / ry;
            const bool inside = ellipse ? dx * dx + dy * dy <= 1.0 : std::abs(dx) <= 1.0 && std::abs(dy) <= 1.0;
            if (inside) b.set(y, x, true);
        }
    }
    return b;
}

/// Square-neighbourhood dilation (radius > 0) or erosion (radius < 0).
inline Bitmap morph(const Bitmap& in, int radius) {
    if (radius == 0) return in;
    const bool dilate = radius > 0;
    const int r = std::abs(radius);
    auto pass = [&](const Bitmap& src, bool horizontal) {
        Bitmap dst(src.height, src.width);
        for (int y = 0; y < src.height; ++y) {
            for (int x = 0; x < src.width; ++x) {
                bool acc = !dilate;
                for (int k = -r; k <= r; ++k) {
                    const int yy = horizontal ? y : y + k, xx = horizontal ? x + k : x;
                    // Outside the image counts as background.
                    const bool v = yy >= 0 && yy < src.height && xx >= 0 && xx < src.width && src.at(yy, xx);
                    acc = dilate ? (acc || v) : (acc && v);
                }
                dst.set(y, x, acc);
            }
        }
        return dst;
    };
    return pass(pass(in, true), false);
}

}  // namespace detail

/// Objects are ellipses or rectangles drifting across the image while their
/// scale oscillates, so mask areas vary over the trajectory. Detections start
/// out clean: true canonical label, confidence 1, track id = object id.
inline SyntheticScene generate_scene(const SynthConfig& cfg) {
    cfg.validate();
    Rng rng(mix_seed(cfg.seed, 0x5CE));
    SyntheticScene scene;
    SceneDataset& ds = scene.dataset;
    ds.n_views = cfg.n_views;
    ds.height = cfg.height;
    ds.width = cfg.width;
    ds.dim = cfg.dim;
    ds.views.resize(cfg.n_views);
    ds.embeddings = vocabulary_embeddings(cfg.vocabulary, cfg.dim, cfg.seed);

    std::vector<std::string> colors = attribute_words();
    rng.shuffle(colors);

    const double h = cfg.height, w = cfg.width, side = std::min(h, w);
    for (std::uint32_t o = 0; o < cfg.n_objects; ++o) {
        GroundTruthObject obj;
        obj.id = o;
        obj.identity = cfg.object_groups.empty() ? cfg.vocabulary[rng.index(cfg.vocabulary.size())].canonical
                                                 : cfg.object_groups[o];
        obj.attribute = colors[o % colors.size()];
        const bool ellipse = rng.bernoulli(0.5);
        const double rx = rng.uniform(0.08, 0.15) * side, ry = rng.uniform(0.08, 0.15) * side;
        const double sx = rng.uniform(0.2, 0.8) * w, sy = rng.uniform(0.2, 0.8) * h;
        const double ex = rng.uniform(0.2, 0.8) * w, ey = rng.uniform(0.2, 0.8) * h;
        const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
        const double wobble = 0.03 * side;

        for (ViewIndex v = 0; v < cfg.n_views; ++v) {
            const double p = cfg.n_views > 1 ? static_cast<double>(v) / (cfg.n_views - 1) : 0.0;
            const double cx = sx + (ex - sx) * p + wobble * std::sin(2.0 * std::numbers::pi * p + phase);
            const double cy = sy + (ey - sy) * p + wobble * std::cos(2.0 * std::numbers::pi * p + phase);
            const double scale = 1.0 + 0.5 * std::sin(2.0 * std::numbers::pi * p + 2.0 * phase);
            const Bitmap bm = detail::rasterize(cfg.height, cfg.width, ellipse, cx, cy, rx * scale, ry * scale);
            if (std::none_of(bm.pixels.begin(), bm.pixels.end(), [](std::uint8_t px) { return px != 0; })) {
                obj.masks.emplace_back();
                continue;
            }
            obj.masks.emplace_back(rle_encode(bm));
        }
        if (std::none_of(obj.masks.begin(), obj.masks.end(), [](const auto& m) { return m.has_value(); })) {
            throw DataError("synth: object " + std::to_string(o) + " never appears; enlarge the image or add views");
        }
        scene.truth.objects.push_back(std::move(obj));
    }

    for (ViewIndex v = 0; v < cfg.n_views; ++v) {
        for (const auto& obj : scene.truth.objects) {
            if (!obj.visible(v)) continue;
            Detection d;
            d.view = v;
            d.mask = *obj.masks[v];
            d.raw_label = obj.identity;
            d.confidence = 1.0;
            d.track_id = obj.id;
            d.gt_object = obj.id;
            ds.views[v].push_back(std::move(d));
        }
    }
    ds.ground_truth = scene.truth;
    return scene;
}

/// Applies the noise model independently to each detection. Every detection
/// consumes the same number of draws whatever the rates, so changing one rate
/// does not reshuffle the others' outcomes.
inline SceneDataset corrupt(const SceneDataset& ds, const GroundTruth& gt, const SynthConfig& cfg) {
    cfg.validate();
    Rng rng(mix_seed(cfg.seed, 0xC0B));
    const auto& vocab = cfg.vocabulary;
    auto group_of = [&](const std::string& canonical) -> std::size_t {
        for (std::size_t g = 0; g < vocab.size(); ++g) {
            if (vocab[g].canonical == canonical) return g;
        }
        throw DataError("corrupt: identity \"" + canonical + "\" is not in the vocabulary");
    };

    SceneDataset out = ds;
    for (auto& view : out.views) {
        std::vector<Detection> kept;
        for (Detection& d : view) {
            const double u_drop = rng.uniform();
            const double u_label = rng.uniform();
            const double u_pick1 = rng.uniform();
            const double u_pick2 = rng.uniform();
            const auto jitter = static_cast<int>(rng.index(2 * static_cast<std::uint64_t>(cfg.noise.mask_jitter) + 1)) -
                                cfg.noise.mask_jitter;
            if (u_drop < cfg.noise.dropout_rate) continue;

            const std::string identity =
                d.gt_object && *d.gt_object < gt.objects.size() ? gt.objects[*d.gt_object].identity : d.raw_label;
            const std::size_t g = group_of(identity);
            auto pick = [](const std::vector<std::string>& words, double u) {
                return words[std::min(words.size() - 1, static_cast<std::size_t>(u * static_cast<double>(words.size())))];
            };
            if (u_label < cfg.noise.wrong_label_rate && vocab.size() > 1) {
                std::size_t other = std::min(vocab.size() - 2, static_cast<std::size_t>(u_pick1 * static_cast<double>(vocab.size() - 1)));
                if (other >= g) ++other;
                d.raw_label = pick(vocab[other].words(), u_pick2);
            } else if (u_label < cfg.noise.wrong_label_rate + cfg.noise.synonym_rate && !vocab[g].synonyms.empty()) {
                d.raw_label = pick(vocab[g].synonyms, u_pick1);
            }

            if (jitter != 0) {
                const RleMask m = rle_encode(detail::morph(rle_decode(d.mask), jitter));
                if (mask_area(m) > 0) d.mask = m;
            }
            if (cfg.noise.strip_tracks) d.track_id.reset();
            kept.push_back(std::move(d));
        }
        view = std::move(kept);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Config <-> JSON

inline json synth_config_to_json(const SynthConfig& c) {
    json vocab = json::array();
    for (const auto& g : c.vocabulary) vocab.push_back(json{{"canonical", g.canonical}, {"synonyms", g.synonyms}});
    return json{{"n_views", c.n_views},
                {"h", c.height},
                {"w", c.width},
                {"n_objects", c.n_objects},
                {"vocabulary", vocab},
                {"object_groups", c.object_groups},
                {"dim", c.dim},
                {"noise",
                 {{"synonym_rate", c.noise.synonym_rate},
                  {"wrong_label_rate", c.noise.wrong_label_rate},
                  {"dropout_rate", c.noise.dropout_rate},
                  {"mask_jitter", c.noise.mask_jitter},
                  {"strip_tracks", c.noise.strip_tracks}}},
                {"seed", c.seed}};
}

/// Missing keys keep their defaults.
inline SynthConfig synth_config_from_json(const json& j) {
    SynthConfig c;
    if (!j.is_object()) throw SchemaError("synth config must be a JSON object");
    try {
        c.n_views = j.value("n_views", c.n_views);
        c.height = j.value("h", c.height);
        c.width = j.value("w", c.width);
        c.n_objects = j.value("n_objects", c.n_objects);
        c.dim = j.value("dim", c.dim);
        c.seed = j.value("seed", c.seed);
        c.object_groups = j.value("object_groups", c.object_groups);
        if (j.contains("vocabulary")) {
            c.vocabulary.clear();
            for (const auto& g : j.at("vocabulary")) {
                c.vocabulary.push_back({g.at("canonical").get<std::string>(), g.value("synonyms", std::vector<std::string>{})});
            }
        }
        if (j.contains("noise")) {
            const json& n = j.at("noise");
            c.noise.synonym_rate = n.value("synonym_rate", 0.0);
            c.noise.wrong_label_rate = n.value("wrong_label_rate", 0.0);
            c.noise.dropout_rate = n.value("dropout_rate", 0.0);
            c.noise.mask_jitter = n.value("mask_jitter", 0);
            c.noise.strip_tracks = n.value("strip_tracks", false);
        }
    } catch (const json::exception& e) {
        throw SchemaError(std::string("synth config: ") + e.what());
    }
    c.validate();
    return c;
}

}  // namespace trackvote
