#pragma once

// Seeded generators for property tests.

#include <cmath>
#include <string>
#include <vector>

#include "trackvote/dataset.hpp"
#include "trackvote/mask.hpp"
#include "trackvote/random.hpp"

namespace gen {

using trackvote::Rng;

/// Random grid. Half the time pixels are i.i.d., otherwise the grid is a few
/// filled rectangles, so long runs and row-spanning runs both show up.
inline trackvote::Bitmap bitmap(Rng& rng, int h, int w) {
    trackvote::Bitmap b(h, w);
    if (rng.bernoulli(0.5)) {
        const double p = rng.uniform();
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) b.set(y, x, rng.bernoulli(p));
        }
    } else {
        const auto n = rng.index(4);
        for (std::uint64_t k = 0; k < n; ++k) {
            const int x0 = static_cast<int>(rng.index(w)), y0 = static_cast<int>(rng.index(h));
            const int x1 = x0 + 1 + static_cast<int>(rng.index(w - x0));
            const int y1 = y0 + 1 + static_cast<int>(rng.index(h - y0));
            for (int y = y0; y < y1; ++y) {
                for (int x = x0; x < x1; ++x) b.set(y, x, true);
            }
        }
    }
    return b;
}

inline trackvote::Vector unit(Rng& rng, std::size_t dim) {
    trackvote::Vector v(dim);
    for (auto& x : v) x = rng.normal();
    return trackvote::normalized(v);
}

inline trackvote::Vector perturbed(Rng& rng, const trackvote::Vector& base, double scale) {
    trackvote::Vector v = base;
    for (auto& x : v) x += scale * rng.normal();
    return trackvote::normalized(v);
}

inline std::string word(Rng& rng, std::size_t max_len = 8) {
    const std::size_t len = 1 + rng.index(max_len);
    std::string s;
    for (std::size_t k = 0; k < len; ++k) s += static_cast<char>('a' + rng.index(4));
    return s;
}

struct LabelSet {
    std::vector<std::string> labels;
    std::map<std::string, trackvote::Vector> embeddings;
};

/// Distinct labels drawn around a handful of centres, with occasional exact
/// duplicate vectors so linkage ties occur.
inline LabelSet label_set(Rng& rng, std::size_t n, std::size_t dim) {
    LabelSet out;
    std::vector<trackvote::Vector> centres;
    const auto n_centres = 1 + rng.index(4);
    for (std::uint64_t c = 0; c < n_centres; ++c) centres.push_back(unit(rng, dim));
    std::vector<trackvote::Vector> made;
    while (out.labels.size() < n) {
        std::string w = word(rng);
        if (out.embeddings.count(w)) continue;
        trackvote::Vector v;
        if (!made.empty() && rng.bernoulli(0.15)) {
            v = made[rng.index(made.size())];
        } else {
            v = perturbed(rng, centres[rng.index(centres.size())], 0.05 + 0.3 * rng.uniform());
        }
        made.push_back(v);
        out.labels.push_back(w);
        out.embeddings[w] = v;
    }
    return out;
}

}  // namespace gen
