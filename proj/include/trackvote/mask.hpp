#pragma once

// Binary masks stored as row-major run-length encodings.
//
// Runs alternate background/foreground and always start with a background run,
// which may be empty. Every later run is non-empty.

#include <algorithm>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "trackvote/error.hpp"

namespace trackvote {

/// Dense row-major binary image.
struct Bitmap {
    int height = 0;
    int width = 0;
    std::vector<std::uint8_t> pixels;

    Bitmap() = default;
    Bitmap(int h, int w, bool fill = false)
        : height(h), width(w), pixels(static_cast<std::size_t>(h) * static_cast<std::size_t>(w), fill ? 1 : 0) {}

    bool at(int y, int x) const { return pixels[index(y, x)] != 0; }
    void set(int y, int x, bool v) { pixels[index(y, x)] = v ? 1 : 0; }
    std::size_t size() const { return pixels.size(); }

    friend bool operator==(const Bitmap&, const Bitmap&) = default;

private:
    std::size_t index(int y, int x) const {
        return static_cast<std::size_t>(y) * static_cast<std::size_t>(width) + static_cast<std::size_t>(x);
    }
};

/// Half-open pixel rectangle [x0, x1) x [y0, y1).
struct Box {
    int x0 = 0, y0 = 0, x1 = 0, y1 = 0;

    int width() const { return x1 - x0; }
    int height() const { return y1 - y0; }
    double center_x() const { return 0.5 * (x0 + x1); }
    double center_y() const { return 0.5 * (y0 + y1); }

    friend bool operator==(const Box&, const Box&) = default;
};

struct RleMask {
    int height = 0;
    int width = 0;
    std::vector<std::uint64_t> counts;

    std::uint64_t pixel_count() const {
        return static_cast<std::uint64_t>(height) * static_cast<std::uint64_t>(width);
    }

    /// Throws FormatError when any representation invariant is broken.
    void validate() const {
        if (height <= 0 || width <= 0) {
            throw FormatError("rle mask: dimensions must be positive, got " + std::to_string(height) + "x" +
                              std::to_string(width));
        }
        if (counts.empty()) throw FormatError("rle mask: empty counts");
        std::uint64_t sum = 0;
        for (std::size_t i = 0; i < counts.size(); ++i) {
            if (i > 0 && counts[i] == 0) {
                throw FormatError("rle mask: zero-length run at position " + std::to_string(i));
            }
            sum += counts[i];
        }
        if (sum != pixel_count()) {
            throw FormatError("rle mask: run lengths sum to " + std::to_string(sum) + ", expected " +
                              std::to_string(pixel_count()));
        }
    }

    friend bool operator==(const RleMask&, const RleMask&) = default;
};

inline RleMask rle_encode(const Bitmap& bitmap) {
    if (bitmap.height <= 0 || bitmap.width <= 0) throw FormatError("rle_encode: empty grid");
    if (bitmap.size() != static_cast<std::size_t>(bitmap.height) * static_cast<std::size_t>(bitmap.width)) {
        throw FormatError("rle_encode: pixel buffer does not match dimensions");
    }
    RleMask m{bitmap.height, bitmap.width, {}};
    bool current = false;
    std::uint64_t run = 0;
    for (std::uint8_t p : bitmap.pixels) {
        const bool v = p != 0;
        if (v != current) {
            m.counts.push_back(run);
            run = 0;
            current = v;
        }
        ++run;
    }
    m.counts.push_back(run);
    return m;
}

/// Encodes a nested grid; rows must all have the same length.
inline RleMask rle_encode(const std::vector<std::vector<bool>>& grid) {
    if (grid.empty() || grid.front().empty()) throw FormatError("rle_encode: empty grid");
    const std::size_t w = grid.front().size();
    Bitmap b(static_cast<int>(grid.size()), static_cast<int>(w));
    for (std::size_t y = 0; y < grid.size(); ++y) {
        if (grid[y].size() != w) {
            throw FormatError("rle_encode: ragged grid, row " + std::to_string(y) + " has " +
                              std::to_string(grid[y].size()) + " columns, expected " + std::to_string(w));
        }
        for (std::size_t x = 0; x < w; ++x) b.set(static_cast<int>(y), static_cast<int>(x), grid[y][x]);
    }
    return rle_encode(b);
}

inline Bitmap rle_decode(const RleMask& m) {
    m.validate();
    Bitmap b(m.height, m.width);
    std::size_t pos = 0;
    bool fg = false;
    for (std::uint64_t run : m.counts) {
        if (fg) std::fill_n(b.pixels.begin() + static_cast<std::ptrdiff_t>(pos), run, std::uint8_t{1});
        pos += run;
        fg = !fg;
    }
    return b;
}

inline std::uint64_t mask_area(const RleMask& m) {
    std::uint64_t area = 0;
    for (std::size_t i = 1; i < m.counts.size(); i += 2) area += m.counts[i];
    return area;
}

namespace detail {

// Walks two run sequences in lockstep, calling f(length, a_fg, b_fg) per segment.
template <typename F>
void merge_runs(const RleMask& a, const RleMask& b, F&& f) {
    std::size_t ia = 0, ib = 0;
    std::uint64_t ra = a.counts.empty() ? 0 : a.counts[0];
    std::uint64_t rb = b.counts.empty() ? 0 : b.counts[0];
    while (ia < a.counts.size() && ib < b.counts.size()) {
        if (ra == 0) {
            if (++ia < a.counts.size()) ra = a.counts[ia];
            continue;
        }
        if (rb == 0) {
            if (++ib < b.counts.size()) rb = b.counts[ib];
            continue;
        }
        const std::uint64_t step = std::min(ra, rb);
        f(step, (ia & 1U) != 0, (ib & 1U) != 0);
        ra -= step;
        rb -= step;
    }
}

}  // namespace detail

inline std::uint64_t mask_intersection(const RleMask& a, const RleMask& b) {
    std::uint64_t inter = 0;
    detail::merge_runs(a, b, [&](std::uint64_t n, bool fa, bool fb) {
        if (fa && fb) inter += n;
    });
    return inter;
}

/// Intersection over union. Two empty masks agree perfectly, so their IoU is 1.
inline double mask_iou(const RleMask& a, const RleMask& b) {
    if (a.height != b.height || a.width != b.width) {
        throw DataError("mask_iou: dimension mismatch " + std::to_string(a.height) + "x" + std::to_string(a.width) +
                        " vs " + std::to_string(b.height) + "x" + std::to_string(b.width));
    }
    const std::uint64_t inter = mask_intersection(a, b);
    const std::uint64_t uni = mask_area(a) + mask_area(b) - inter;
    if (uni == 0) return 1.0;
    return static_cast<double>(inter) / static_cast<double>(uni);
}

inline std::optional<Box> mask_bbox(const RleMask& m) {
    std::optional<Box> box;
    std::uint64_t pos = 0;
    const auto w = static_cast<std::uint64_t>(m.width);
    for (std::size_t i = 0; i < m.counts.size(); ++i) {
        const std::uint64_t run = m.counts[i];
        if ((i & 1U) != 0 && run > 0) {
            const std::uint64_t first = pos, last = pos + run - 1;
            const int y0 = static_cast<int>(first / w), y1 = static_cast<int>(last / w);
            // A run spanning several rows covers whole columns in between.
            const int x0 = y1 > y0 ? 0 : static_cast<int>(first % w);
            const int x1 = y1 > y0 ? m.width - 1 : static_cast<int>(last % w);
            if (!box) {
                box = Box{x0, y0, x1 + 1, y1 + 1};
            } else {
                box->x0 = std::min(box->x0, x0);
                box->y0 = std::min(box->y0, y0);
                box->x1 = std::max(box->x1, x1 + 1);
                box->y1 = std::max(box->y1, y1 + 1);
            }
        }
        pos += run;
    }
    return box;
}

inline RleMask mask_union(const RleMask& a, const RleMask& b) {
    if (a.height != b.height || a.width != b.width) throw DataError("mask_union: dimension mismatch");
    Bitmap out(a.height, a.width);
    std::size_t pos = 0;
    detail::merge_runs(a, b, [&](std::uint64_t n, bool fa, bool fb) {
        if (fa || fb) std::fill_n(out.pixels.begin() + static_cast<std::ptrdiff_t>(pos), n, std::uint8_t{1});
        pos += n;
    });
    return rle_encode(out);
}

inline RleMask empty_mask(int height, int width) {
    return RleMask{height, width, {static_cast<std::uint64_t>(height) * static_cast<std::uint64_t>(width)}};
}

/// Centroid of the foreground, (x, y) in pixel-center coordinates.
inline std::optional<std::pair<double, double>> mask_centroid(const RleMask& m) {
    double sx = 0, sy = 0;
    std::uint64_t n = 0, pos = 0;
    const auto w = static_cast<std::uint64_t>(m.width);
    for (std::size_t i = 0; i < m.counts.size(); ++i) {
        if ((i & 1U) != 0) {
            for (std::uint64_t p = pos; p < pos + m.counts[i]; ++p) {
                sx += static_cast<double>(p % w) + 0.5;
                sy += static_cast<double>(p / w) + 0.5;
            }
            n += m.counts[i];
        }
        pos += m.counts[i];
    }
    if (n == 0) return std::nullopt;
    return std::pair{sx / static_cast<double>(n), sy / static_cast<double>(n)};
}

}  // namespace trackvote
