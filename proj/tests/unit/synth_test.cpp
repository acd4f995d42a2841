#include <gtest/gtest.h>

#include "trackvote/synth.hpp"

using namespace trackvote;

TEST(GenerateScene, OneObjectThreeViews) {
    SynthConfig cfg;
    cfg.n_objects = 1;
    cfg.n_views = 3;
    const auto s = generate_scene(cfg);
    ASSERT_EQ(s.dataset.detection_count(), 3u);
    for (const auto& view : s.dataset.views) {
        ASSERT_EQ(view.size(), 1u);
        EXPECT_EQ(view[0].raw_label, s.truth.objects[0].identity);
        EXPECT_EQ(view[0].track_id, TrackId{0});
        EXPECT_EQ(view[0].confidence, 1.0);
    }
}

TEST(GenerateScene, Deterministic) {
    SynthConfig cfg;
    cfg.seed = 42;
    cfg.noise = {0.3, 0.1, 0.2, 2, false};
    const auto a = generate_scene(cfg), b = generate_scene(cfg);
    EXPECT_EQ(a.dataset, b.dataset);
    EXPECT_EQ(a.truth, b.truth);
    EXPECT_EQ(corrupt(a.dataset, a.truth, cfg), corrupt(b.dataset, b.truth, cfg));
    cfg.seed = 43;
    EXPECT_NE(generate_scene(cfg).dataset, a.dataset);
}

TEST(GenerateScene, ConstructionBound) {
    SynthConfig cfg;
    cfg.n_objects = 5;
    cfg.n_views = 20;
    const auto s = generate_scene(cfg);
    EXPECT_EQ(s.truth.objects.size(), 5u);
    EXPECT_LE(s.dataset.detection_count(), 100u);
    for (const auto& o : s.truth.objects) {
        bool in_vocab = false;
        for (const auto& g : cfg.vocabulary) in_vocab |= g.canonical == o.identity;
        EXPECT_TRUE(in_vocab);
    }
}

TEST(GenerateScene, RejectsInvisibleObjectsAndBadConfig) {
    SynthConfig cfg;
    cfg.n_views = 0;
    EXPECT_THROW(generate_scene(cfg), DataError);

    SynthConfig bad;
    bad.noise.synonym_rate = 1.5;
    EXPECT_THROW(generate_scene(bad), DataError);
    bad = {};
    bad.object_groups = {"cup"};
    EXPECT_THROW(generate_scene(bad), DataError);
    bad = {};
    bad.vocabulary = {{"mug", {"cup"}}};
    EXPECT_THROW(generate_scene(bad), DataError);
}

TEST(Vocabulary, CosineStructure) {
    const auto vocab = default_vocabulary();
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto emb = vocabulary_embeddings(vocab, 32, seed);
        for (std::size_t g = 0; g < vocab.size(); ++g) {
            for (std::size_t h = 0; h < vocab.size(); ++h) {
                for (const auto& a : vocab[g].words()) {
                    ASSERT_TRUE(is_unit(emb.at(a)));
                    for (const auto& b : vocab[h].words()) {
                        if (a == b) continue;
                        const double c = dot(emb.at(a), emb.at(b));
                        if (g == h) {
                            ASSERT_GE(c, 0.9) << a << " / " << b;
                        } else {
                            ASSERT_LE(c, 0.5) << a << " / " << b;
                        }
                    }
                }
            }
        }
    }
}

TEST(Corrupt, ZeroNoiseIsIdentity) {
    SynthConfig cfg;
    cfg.seed = 5;
    const auto s = generate_scene(cfg);
    EXPECT_EQ(corrupt(s.dataset, s.truth, cfg), s.dataset);
}

TEST(Corrupt, FullDropoutEmptiesTheScene) {
    SynthConfig cfg;
    cfg.noise.dropout_rate = 1.0;
    const auto s = generate_scene(cfg);
    EXPECT_EQ(corrupt(s.dataset, s.truth, cfg).detection_count(), 0u);
}

TEST(Corrupt, SynonymRateConcentrates) {
    SynthConfig cfg;
    cfg.n_views = 100;
    cfg.n_objects = 100;
    cfg.height = 48;
    cfg.width = 48;
    cfg.seed = 17;
    cfg.noise.synonym_rate = 0.3;
    const auto s = generate_scene(cfg);
    const auto noisy = corrupt(s.dataset, s.truth, cfg);
    std::size_t n = 0, replaced = 0;
    for (const auto& view : noisy.views) {
        for (const auto& d : view) {
            ++n;
            replaced += d.raw_label != s.truth.objects[*d.gt_object].identity;
        }
    }
    ASSERT_GE(n, 9000u);
    EXPECT_NEAR(static_cast<double>(replaced) / static_cast<double>(n), 0.3, 0.02);
}

TEST(Corrupt, KeepsViewsAndObjectsAndLabelsStayInVocabulary) {
    SynthConfig cfg;
    cfg.seed = 8;
    cfg.n_objects = 6;
    cfg.noise = {0.4, 0.3, 0.25, 2, true};
    const auto s = generate_scene(cfg);
    const auto noisy = corrupt(s.dataset, s.truth, cfg);
    for (ViewIndex v = 0; v < noisy.views.size(); ++v) {
        for (const auto& d : noisy.views[v]) {
            EXPECT_EQ(d.view, v);
            ASSERT_TRUE(d.gt_object);
            EXPECT_TRUE(s.truth.objects[*d.gt_object].visible(v));
            EXPECT_FALSE(d.track_id);
            EXPECT_TRUE(noisy.embeddings.count(d.raw_label));
            EXPECT_GT(mask_area(d.mask), 0u);
        }
    }
}

TEST(SynthConfigJson, RoundTrip) {
    SynthConfig cfg;
    cfg.n_views = 7;
    cfg.object_groups = {"cup", "plate", "cup"};
    cfg.noise = {0.25, 0.05, 0.1, 1, true};
    cfg.seed = 99;
    const json j = synth_config_to_json(cfg);
    EXPECT_EQ(synth_config_to_json(synth_config_from_json(j)), j);
    EXPECT_EQ(synth_config_from_json(json::object()).n_views, SynthConfig{}.n_views);
}
