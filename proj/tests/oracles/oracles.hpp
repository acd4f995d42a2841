#pragma once

// Brute-force reference implementations. They share no code with the library
// beyond plain data types, and favour obviousness over speed.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "trackvote/mask.hpp"

namespace oracle {

using Grid = std::vector<std::vector<bool>>;

inline Grid to_grid(const trackvote::Bitmap& b) {
    Grid g(b.height, std::vector<bool>(b.width));
    for (int y = 0; y < b.height; ++y) {
        for (int x = 0; x < b.width; ++x) g[y][x] = b.at(y, x);
    }
    return g;
}

inline std::uint64_t pixel_count(const Grid& g) {
    std::uint64_t n = 0;
    for (const auto& row : g) n += static_cast<std::uint64_t>(std::count(row.begin(), row.end(), true));
    return n;
}

inline double pixel_iou(const Grid& a, const Grid& b) {
    std::uint64_t inter = 0, uni = 0;
    for (std::size_t y = 0; y < a.size(); ++y) {
        for (std::size_t x = 0; x < a[y].size(); ++x) {
            inter += a[y][x] && b[y][x];
            uni += a[y][x] || b[y][x];
        }
    }
    return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

// ---------------------------------------------------------------------------
// Average-linkage clustering, O(n^3) per merge: every candidate distance is
// recomputed from the member vectors.

inline double cos_dist(const std::vector<double>& a, const std::vector<double>& b) {
    double d = 0;
    for (std::size_t k = 0; k < a.size(); ++k) d += a[k] * b[k];
    return std::clamp(1.0 - d, 0.0, 2.0);
}

struct Clusters {
    std::vector<std::vector<std::size_t>> groups;  ///< each sorted, ordered by first member
    std::vector<std::string> canonical;            ///< per group
    std::map<std::string, std::string> label_to_canonical;
};

inline std::size_t code_points(const std::string& s) {
    std::size_t n = 0;
    for (unsigned char c : s) n += (c & 0xC0) != 0x80;
    return n;
}

inline Clusters agglomerate(const std::vector<std::string>& labels, const std::vector<std::vector<double>>& vecs,
                            double tau, double tol = 1e-12) {
    std::vector<std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < labels.size(); ++i) groups.push_back({i});

    auto linkage = [&](const std::vector<std::size_t>& a, const std::vector<std::size_t>& b) {
        double s = 0;
        for (auto i : a) {
            for (auto j : b) s += cos_dist(vecs[i], vecs[j]);
        }
        return s / static_cast<double>(a.size() * b.size());
    };

    while (groups.size() > 1) {
        double best = 1e300;
        for (std::size_t i = 0; i < groups.size(); ++i) {
            for (std::size_t j = i + 1; j < groups.size(); ++j) best = std::min(best, linkage(groups[i], groups[j]));
        }
        if (best > 1.0 - tau + tol) break;
        // Candidates within tolerance of the minimum; smallest (first member,
        // first member) wins.
        std::pair<std::size_t, std::size_t> pick{SIZE_MAX, SIZE_MAX};
        std::pair<std::size_t, std::size_t> key{SIZE_MAX, SIZE_MAX};
        for (std::size_t i = 0; i < groups.size(); ++i) {
            for (std::size_t j = 0; j < groups.size(); ++j) {
                if (i == j || linkage(groups[i], groups[j]) > best + tol) continue;
                std::pair<std::size_t, std::size_t> k{std::min(groups[i][0], groups[j][0]), std::max(groups[i][0], groups[j][0])};
                if (k < key) {
                    key = k;
                    pick = {i, j};
                }
            }
        }
        auto merged = groups[pick.first];
        merged.insert(merged.end(), groups[pick.second].begin(), groups[pick.second].end());
        std::sort(merged.begin(), merged.end());
        std::vector<std::vector<std::size_t>> next;
        for (std::size_t i = 0; i < groups.size(); ++i) {
            if (i != pick.first && i != pick.second) next.push_back(groups[i]);
        }
        next.push_back(merged);
        groups = next;
    }
    std::sort(groups.begin(), groups.end());

    Clusters out;
    out.groups = groups;
    for (const auto& g : groups) {
        std::vector<std::string> forms;
        for (auto i : g) forms.push_back(labels[i]);
        std::sort(forms.begin(), forms.end(), [](const std::string& a, const std::string& b) {
            return code_points(a) < code_points(b) || (code_points(a) == code_points(b) && a < b);
        });
        out.canonical.push_back(forms.front());
        for (auto i : g) out.label_to_canonical[labels[i]] = forms.front();
    }
    return out;
}

// ---------------------------------------------------------------------------
// Plurality vote by explicit counting and a full sort of the candidates.

struct VoteOracle {
    std::string winner;
    std::map<std::string, std::size_t> counts;
};

inline VoteOracle vote(const std::vector<std::string>& identities, const std::vector<std::uint64_t>& areas) {
    std::vector<std::string> distinct = identities;
    std::sort(distinct.begin(), distinct.end());
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());

    struct Cand {
        std::size_t count;
        std::uint64_t area;
        std::string id;
    };
    std::vector<Cand> cands;
    VoteOracle out;
    for (const auto& id : distinct) {
        Cand c{0, 0, id};
        for (std::size_t k = 0; k < identities.size(); ++k) {
            if (identities[k] == id) {
                ++c.count;
                c.area += areas[k];
            }
        }
        out.counts[id] = c.count;
        cands.push_back(c);
    }
    std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
        if (a.count != b.count) return a.count > b.count;
        if (a.area != b.area) return a.area > b.area;
        return a.id < b.id;
    });
    out.winner = cands.front().id;
    return out;
}

// ---------------------------------------------------------------------------
// Visibility score, written out term by term.

inline double visibility(double area, double median, double sigma) {
    const double diff = std::sqrt(area) - std::sqrt(median);
    const double exponent = -(diff * diff) / (2.0 * sigma * sigma);
    return area * std::exp(exponent);
}

/// Probability that Bin(n, p) exceeds n/2.
inline double strict_majority(unsigned n, double p) {
    double total = 0;
    for (unsigned k = n / 2 + 1; k <= n; ++k) {
        double log_c = std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0);
        total += std::exp(log_c + k * std::log(p) + (n - k) * std::log1p(-p));
    }
    return total;
}

}  // namespace oracle
