#include <gtest/gtest.h>

#include <numbers>
#include <sstream>

#include "oracles/golden.hpp"
#include "oracles/oracles.hpp"
#include "support/tempdir.hpp"
#include "support/generators.hpp"
#include "trackvote/association.hpp"
#include "trackvote/consensus.hpp"
#include "trackvote/synth.hpp"

using namespace trackvote;

namespace {

/// Two unit vectors in the plane with the given cosine.
std::map<std::string, Vector> pair_with_cos(const std::string& a, const std::string& b, double c) {
    return {{a, {1.0, 0.0}}, {b, {c, std::sqrt(1.0 - c * c)}}};
}

std::vector<Ballot> ballots(std::initializer_list<std::pair<const char*, std::uint64_t>> items) {
    std::vector<Ballot> out;
    for (const auto& [id, area] : items) out.push_back({id, area});
    return out;
}

}  // namespace

TEST(CosineDistance, Examples) {
    const Vector e{0.6, 0.8}, o{-0.8, 0.6}, n{-0.6, -0.8};
    const auto d = cosine_distance_matrix({{"a", e}, {"b", e}, {"c", o}, {"d", n}});
    EXPECT_DOUBLE_EQ(d[0][1], 0.0);
    EXPECT_NEAR(d[0][2], 1.0, 1e-15);
    EXPECT_DOUBLE_EQ(d[0][3], 2.0);
    for (std::size_t i = 0; i < 4; ++i) {
        EXPECT_EQ(d[i][i], 0.0);
        for (std::size_t j = 0; j < 4; ++j) EXPECT_EQ(d[i][j], d[j][i]);
    }
}

TEST(CosineDistance, DimensionMismatch) {
    EXPECT_THROW(cosine_distance_matrix({{"a", {1.0, 0.0}}, {"b", {1.0}}}), DataError);
}

TEST(ClusterSynonyms, IdenticalEmbeddingsMerge) {
    const std::map<std::string, Vector> emb{{"a", {1.0, 0.0}}, {"b", {1.0, 0.0}}};
    for (double tau : {0.05, 0.5, 0.99}) EXPECT_EQ(cluster_synonyms({"a", "b"}, emb, tau).cluster_count(), 1u);
}

TEST(ClusterSynonyms, ThresholdComparison) {
    const auto emb = pair_with_cos("x", "y", 0.80);
    EXPECT_EQ(cluster_synonyms({"x", "y"}, emb, 0.85).cluster_count(), 2u);
    EXPECT_EQ(cluster_synonyms({"x", "y"}, emb, 0.75).cluster_count(), 1u);
}

TEST(ClusterSynonyms, ShortestSurfaceForm) {
    const auto emb = pair_with_cos("coffee machine", "coffee maker", 0.95);
    const auto c = cluster_synonyms({"coffee machine", "coffee maker"}, emb, 0.85);
    ASSERT_EQ(c.cluster_count(), 1u);
    EXPECT_EQ(c.canonical[0], "coffee maker");
}

TEST(ClusterSynonyms, LengthCountsCodePoints) {
    // "café" is 4 code points but 5 bytes; it beats the 5-letter "cafes".
    const auto emb = pair_with_cos("cafes", "caf\xc3\xa9", 0.99);
    const auto c = cluster_synonyms({"cafes", "caf\xc3\xa9"}, emb, 0.85);
    EXPECT_EQ(c.canonical[0], "caf\xc3\xa9");
}

TEST(ClusterSynonyms, Errors) {
    const auto emb = pair_with_cos("x", "y", 0.5);
    EXPECT_THROW(cluster_synonyms({"x", "z"}, emb, 0.85), DataError);
    EXPECT_THROW(cluster_synonyms({"x", "x"}, emb, 0.85), DataError);
    EXPECT_THROW(cluster_synonyms({"x", "y"}, emb, 0.0), DataError);
    EXPECT_THROW(cluster_synonyms({"x", "y"}, emb, 1.0), DataError);
}

TEST(ClusterSynonyms, MatchesBruteForceOracle) {
    Rng rng(31337);
    for (int k = 0; k < 300; ++k) {
        const std::size_t n = 1 + rng.index(12);
        const auto set = gen::label_set(rng, n, 1 + rng.index(6));
        const double tau = rng.uniform(0.3, 0.98);
        const auto c = cluster_synonyms(set.labels, set.embeddings, tau);
        std::vector<Vector> vecs;
        for (const auto& l : set.labels) vecs.push_back(set.embeddings.at(l));
        const auto o = oracle::agglomerate(set.labels, vecs, tau);
        ASSERT_EQ(c.members, o.groups) << "instance " << k;
        ASSERT_EQ(c.canonical, o.canonical) << "instance " << k;
    }
}

TEST(ClusterSynonyms, EveryLabelHasOneClusterWithMinimalCanonical) {
    Rng rng(4);
    for (int k = 0; k < 100; ++k) {
        const auto set = gen::label_set(rng, 1 + rng.index(12), 4);
        const auto c = cluster_synonyms(set.labels, set.embeddings, rng.uniform(0.5, 0.95));
        std::vector<int> hits(set.labels.size(), 0);
        for (std::size_t k2 = 0; k2 < c.cluster_count(); ++k2) {
            for (auto i : c.members[k2]) {
                ++hits[i];
                EXPECT_FALSE(shorter_surface(set.labels[i], c.canonical[k2]));
            }
        }
        for (int h : hits) EXPECT_EQ(h, 1);
    }
}

TEST(ClusterSynonyms, CountNondecreasingInTau) {
    Rng rng(8);
    for (int k = 0; k < 100; ++k) {
        const auto set = gen::label_set(rng, 2 + rng.index(11), 5);
        std::size_t prev = 0;
        for (double tau = 0.05; tau < 1.0; tau += 0.05) {
            const std::size_t n = cluster_synonyms(set.labels, set.embeddings, tau).cluster_count();
            ASSERT_GE(n, prev);
            prev = n;
        }
    }
}

TEST(ApplyPhi, Examples) {
    std::map<std::string, Vector> emb = pair_with_cos("ramen", "ramen bowl", 0.97);
    emb["pot"] = {0.0, -1.0};
    const auto c = cluster_synonyms({"pot", "ramen", "ramen bowl"}, emb, 0.85);
    std::ostringstream log;
    EXPECT_EQ(apply_phi(c, "pot", &log).canonical, "pot");
    EXPECT_EQ(apply_phi(c, "ramen", &log).canonical, "ramen");
    EXPECT_EQ(apply_phi(c, "ramen bowl", &log).canonical, "ramen");
    EXPECT_TRUE(log.str().empty());
    const auto z = apply_phi(c, "zebra", &log);
    EXPECT_EQ(z.canonical, "zebra");
    EXPECT_TRUE(z.unseen());
    EXPECT_NE(log.str().find("zebra"), std::string::npos);
}

TEST(VoteTrajectory, Examples) {
    EXPECT_EQ(vote_trajectory(ballots({{"pot", 5}})).winner, "pot");
    const auto r = vote_trajectory(ballots({{"ramen", 1}, {"bowl", 1}, {"ramen", 1}, {"food", 1}, {"bowl", 1}, {"ramen", 1}}));
    EXPECT_EQ(r.winner, "ramen");
    EXPECT_EQ(r.counts, (std::map<std::string, std::size_t>{{"bowl", 2}, {"food", 1}, {"ramen", 3}}));
    EXPECT_EQ(vote_trajectory(ballots({{"mug", 200}, {"cup", 450}, {"mug", 200}, {"cup", 450}})).winner, "cup");
    EXPECT_EQ(vote_trajectory(ballots({{"mug", 300}, {"cup", 300}})).winner, "cup");
    EXPECT_THROW(vote_trajectory({}), DataError);
}

TEST(VoteTrajectory, MatchesCountingOracle) {
    Rng rng(77);
    const std::vector<std::string> alphabet{"a", "b", "bb", "c", "cup", "mug"};
    for (int k = 0; k < 1000; ++k) {
        const std::size_t n = 1 + rng.index(50);
        std::vector<Ballot> b;
        std::vector<std::string> ids;
        std::vector<std::uint64_t> areas;
        const std::size_t width = 1 + rng.index(alphabet.size());
        for (std::size_t i = 0; i < n; ++i) {
            ids.push_back(alphabet[rng.index(width)]);
            areas.push_back(rng.index(3) * 100);
            b.push_back({ids.back(), areas.back()});
        }
        const auto got = vote_trajectory(b);
        const auto want = oracle::vote(ids, areas);
        ASSERT_EQ(got.winner, want.winner);
        ASSERT_EQ(got.counts, want.counts);
        rng.shuffle(b);
        ASSERT_EQ(vote_trajectory(b).winner, want.winner) << "permutation changed the winner";
    }
}

TEST(VoteTrajectory, StrictMajorityAlwaysWins) {
    Rng rng(12);
    for (int k = 0; k < 500; ++k) {
        const std::size_t n = 1 + rng.index(30);
        const std::size_t majority = n / 2 + 1;
        std::vector<Ballot> b;
        for (std::size_t i = 0; i < majority; ++i) b.push_back({"x", 1});
        for (std::size_t i = majority; i < n; ++i) b.push_back({rng.bernoulli(0.5) ? "a" : "zz", 1000000});
        rng.shuffle(b);
        ASSERT_EQ(vote_trajectory(b).winner, "x");
    }
}

TEST(Propagate, ConsistentIdempotentAndDisjoint) {
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        SynthConfig cfg;
        cfg.seed = seed;
        cfg.n_objects = 4;
        cfg.noise = {0.3, 0.2, 0.1, 0, false};
        const auto scene = generate_scene(cfg);
        const SceneDataset ds = corrupt(scene.dataset, scene.truth, cfg);
        const auto tracks = import_tracks(ds);
        const auto r = run_consensus(ds, tracks, 0.85);
        const SceneDataset once = propagate(ds, r.tracks);
        EXPECT_EQ(propagate(once, r.tracks), once);
        for (const auto& t : r.tracks) {
            std::set<std::string> resolved;
            for (const auto& m : t.members) {
                resolved.insert(*once.at(m).resolved_label);
                EXPECT_EQ(once.at(m).raw_label, ds.at(m).raw_label);
            }
            EXPECT_EQ(resolved, std::set<std::string>{t.canonical});
        }
    }
}

TEST(Consensus, JsonRoundTrip) {
    const TrackConsensus t{3, "cup", {{"cup", 2}, {"plate", 1}}, {{0, 1}, {1, 0}, {4, 2}}};
    EXPECT_EQ(consensus_from_json(consensus_to_json(t)), t);
    EXPECT_THROW(consensus_from_json(json{{"track", 1}, {"members", json::array()}}), SchemaError);
}

TEST(GoldenConsensus, OracleAndLibraryReproduceFixture) {
    const std::filesystem::path dir = std::filesystem::path(TRACKVOTE_TEST_DATA) / "golden";
    const SceneDataset ds = load_dataset(dir / "manifest.json");
    const std::string golden = read_text_file(dir / "consensus.jsonl");
    EXPECT_EQ(oracle::consensus_jsonl(ds, 0.85), golden);

    TempDir tmp;
    write_consensus(run_consensus(ds, import_tracks(ds), 0.85).tracks, tmp / "c.jsonl");
    EXPECT_EQ(read_text_file(tmp / "c.jsonl"), golden);
}
