#include <gtest/gtest.h>

#include "oracles/oracles.hpp"
#include "support/generators.hpp"
#include "trackvote/mask.hpp"

using namespace trackvote;

namespace {

RleMask row(std::initializer_list<bool> bits) {
    return rle_encode(std::vector<std::vector<bool>>{std::vector<bool>(bits)});
}

}  // namespace

TEST(RleEncode, AllBackground) {
    EXPECT_EQ(rle_encode(Bitmap(2, 2, false)).counts, (std::vector<std::uint64_t>{4}));
}

TEST(RleEncode, AllForeground) {
    EXPECT_EQ(rle_encode(Bitmap(2, 2, true)).counts, (std::vector<std::uint64_t>{0, 4}));
}

TEST(RleEncode, MixedRow) {
    EXPECT_EQ(row({false, true, true, false}).counts, (std::vector<std::uint64_t>{1, 2, 1}));
}

TEST(RleEncode, RaggedGridIsFormatError) {
    std::vector<std::vector<bool>> g{{true, false}, {true}};
    EXPECT_THROW(rle_encode(g), FormatError);
}

TEST(RleEncode, EmptyGridIsFormatError) {
    EXPECT_THROW(rle_encode(std::vector<std::vector<bool>>{}), FormatError);
}

TEST(RleDecode, Trivial) {
    EXPECT_EQ(rle_decode(RleMask{2, 2, {4}}), Bitmap(2, 2, false));
    EXPECT_EQ(rle_decode(RleMask{2, 2, {0, 4}}), Bitmap(2, 2, true));
}

TEST(RleDecode, RejectsBadCounts) {
    EXPECT_THROW(rle_decode(RleMask{2, 2, {3}}), FormatError);
    EXPECT_THROW(rle_decode(RleMask{2, 2, {1, 0, 3}}), FormatError);
    EXPECT_THROW(rle_decode(RleMask{0, 2, {0}}), FormatError);
}

TEST(RleRoundTrip, Random64) {
    Rng rng(7);
    const Bitmap b = gen::bitmap(rng, 64, 64);
    EXPECT_EQ(rle_decode(rle_encode(b)), b);
}

TEST(RleRoundTrip, ThousandRandomGridsUpTo128) {
    Rng rng(2024);
    for (int k = 0; k < 1000; ++k) {
        const int h = 1 + static_cast<int>(rng.index(128)), w = 1 + static_cast<int>(rng.index(128));
        const Bitmap b = gen::bitmap(rng, h, w);
        const RleMask m = rle_encode(b);
        ASSERT_NO_THROW(m.validate());
        ASSERT_EQ(rle_decode(m), b) << "grid " << k;
        ASSERT_EQ(mask_area(m), oracle::pixel_count(oracle::to_grid(b)));
    }
}

TEST(MaskArea, Examples) {
    EXPECT_EQ(mask_area(RleMask{2, 2, {4}}), 0u);
    EXPECT_EQ(mask_area(RleMask{2, 2, {0, 4}}), 4u);
    EXPECT_EQ(mask_area(RleMask{1, 4, {1, 2, 1}}), 2u);
}

TEST(MaskIou, Examples) {
    const RleMask a = row({false, true, true, false});
    const RleMask b = row({false, false, true, true});
    EXPECT_DOUBLE_EQ(mask_iou(a, a), 1.0);
    EXPECT_DOUBLE_EQ(mask_iou(row({true, false}), row({false, true})), 0.0);
    EXPECT_DOUBLE_EQ(mask_iou(a, b), 1.0 / 3.0);
    EXPECT_DOUBLE_EQ(mask_iou(empty_mask(3, 3), empty_mask(3, 3)), 1.0);
}

TEST(MaskIou, DimensionMismatch) {
    EXPECT_THROW(mask_iou(empty_mask(2, 3), empty_mask(3, 2)), DataError);
}

TEST(MaskIou, MatchesPixelEnumeration) {
    Rng rng(99);
    for (int k = 0; k < 300; ++k) {
        const int h = 1 + static_cast<int>(rng.index(40)), w = 1 + static_cast<int>(rng.index(40));
        const Bitmap a = gen::bitmap(rng, h, w), b = gen::bitmap(rng, h, w);
        const RleMask ma = rle_encode(a), mb = rle_encode(b);
        const double iou = mask_iou(ma, mb);
        ASSERT_NEAR(iou, oracle::pixel_iou(oracle::to_grid(a), oracle::to_grid(b)), 1e-15);
        ASSERT_EQ(iou, mask_iou(mb, ma));
        ASSERT_GE(iou, 0.0);
        ASSERT_LE(iou, 1.0);
        if (mask_area(ma) > 0) {
            ASSERT_EQ(mask_iou(ma, ma), 1.0);
        }
    }
}

TEST(MaskUnion, MatchesPixelOr) {
    Rng rng(5);
    for (int k = 0; k < 100; ++k) {
        const Bitmap a = gen::bitmap(rng, 17, 23), b = gen::bitmap(rng, 17, 23);
        Bitmap want(17, 23);
        for (int y = 0; y < 17; ++y) {
            for (int x = 0; x < 23; ++x) want.set(y, x, a.at(y, x) || b.at(y, x));
        }
        ASSERT_EQ(rle_decode(mask_union(rle_encode(a), rle_encode(b))), want);
    }
}

TEST(MaskBbox, HalfOpen) {
    Bitmap b(5, 6);
    b.set(1, 2, true);
    b.set(3, 4, true);
    const auto box = mask_bbox(rle_encode(b));
    ASSERT_TRUE(box);
    EXPECT_EQ(*box, (Box{2, 1, 5, 4}));
    EXPECT_FALSE(mask_bbox(empty_mask(4, 4)));
}

TEST(MaskCentroid, PixelCentres) {
    Bitmap b(4, 4);
    b.set(0, 0, true);
    b.set(0, 1, true);
    const auto c = mask_centroid(rle_encode(b));
    ASSERT_TRUE(c);
    EXPECT_DOUBLE_EQ(c->first, 1.0);
    EXPECT_DOUBLE_EQ(c->second, 0.5);
}
