#pragma once

// Toy referring field: 2D Gaussians with fixed per-view centers and
// learnable feature vectors. A text query renders a probability mask through
// word-to-Gaussian similarity; the segmentation and multi-positive
// contrastive losses come with analytic gradients.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "trackvote/dataset.hpp"
#include "trackvote/error.hpp"
#include "trackvote/mask.hpp"

namespace trackvote {

struct Point {
    double x = 0.0;
    double y = 0.0;

    friend bool operator==(const Point&, const Point&) = default;
};

struct ToyGaussian {
    std::uint32_t id = 0;
    TrackId track = 0;  ///< track whose pseudo masks placed this Gaussian
    /// Center per view in pixel coordinates; nullopt where not visible.
    std::vector<std::optional<Point>> centers;

    friend bool operator==(const ToyGaussian&, const ToyGaussian&) = default;
};

class ReferringField {
public:
    ReferringField() = default;
    ReferringField(int height, int width, std::uint32_t feature_dim, double spread)
        : height_(height), width_(width), dim_(feature_dim), spread_(spread) {
        if (height <= 0 || width <= 0) throw DataError("field: image dimensions must be positive");
        if (!(spread > 0.0)) throw NumericError("field: spread must be positive");
        if (feature_dim == 0) throw DataError("field: feature dimension must be positive");
    }

    std::size_t add(ToyGaussian g, Vector feature = {}) {
        if (feature.empty()) feature.assign(dim_, 0.0);
        if (feature.size() != dim_) throw DataError("field: feature has the wrong dimension");
        gaussians_.push_back(std::move(g));
        features_.insert(features_.end(), feature.begin(), feature.end());
        return gaussians_.size() - 1;
    }

    int height() const { return height_; }
    int width() const { return width_; }
    std::uint32_t dim() const { return dim_; }
    double spread() const { return spread_; }
    std::size_t size() const { return gaussians_.size(); }

    const std::vector<ToyGaussian>& gaussians() const { return gaussians_; }
    const ToyGaussian& gaussian(std::size_t g) const { return gaussians_.at(g); }

    std::span<double> feature(std::size_t g) { return {features_.data() + g * dim_, dim_}; }
    std::span<const double> feature(std::size_t g) const { return {features_.data() + g * dim_, dim_}; }

    /// All features, row-major (gaussian, component).
    std::vector<double>& features() { return features_; }
    const std::vector<double>& features() const { return features_; }

    friend bool operator==(const ReferringField&, const ReferringField&) = default;

private:
    int height_ = 1;
    int width_ = 1;
    std::uint32_t dim_ = 1;
    double spread_ = 8.0;
    std::vector<ToyGaussian> gaussians_;
    std::vector<double> features_;
};

inline double span_dot(std::span<const double> a, std::span<const double> b) {
    double s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double logistic(double z) {
    if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

/// Pixel weights of one Gaussian in one view: exp(-r^2 / (2 s^2)) at pixel
/// centers, zero beyond 3s.
struct Footprint {
    std::size_t gaussian = 0;
    std::vector<std::uint32_t> pixels;
    std::vector<double> weights;
};

inline std::vector<Footprint> view_footprints(const ReferringField& field, ViewIndex view) {
    std::vector<Footprint> out;
    const double s = field.spread(), cutoff = 3.0 * s, inv = 1.0 / (2.0 * s * s);
    for (std::size_t g = 0; g < field.size(); ++g) {
        const auto& centers = field.gaussian(g).centers;
        if (view >= centers.size() || !centers[view]) continue;
        const Point c = *centers[view];
        Footprint fp{g, {}, {}};
        const int y0 = std::max(0, static_cast<int>(std::floor(c.y - cutoff)));
        const int y1 = std::min(field.height() - 1, static_cast<int>(std::ceil(c.y + cutoff)));
        const int x0 = std::max(0, static_cast<int>(std::floor(c.x - cutoff)));
        const int x1 = std::min(field.width() - 1, static_cast<int>(std::ceil(c.x + cutoff)));
        for (int y = y0; y <= y1; ++y) {
            for (int x = x0; x <= x1; ++x) {
                const double dx = x + 0.5 - c.x, dy = y + 0.5 - c.y;
                const double r2 = dx * dx + dy * dy;
                if (r2 > cutoff * cutoff) continue;
                fp.pixels.push_back(static_cast<std::uint32_t>(y * field.width() + x));
                fp.weights.push_back(std::exp(-r2 * inv));
            }
        }
        out.push_back(std::move(fp));
    }
    return out;
}

/// Row-major real image.
struct Grid {
    int height = 0;
    int width = 0;
    std::vector<double> values;

    friend bool operator==(const Grid&, const Grid&) = default;
};

inline Grid render_logits(const ReferringField& field, std::span<const Footprint> footprints, std::span<const double> query) {
    if (query.size() != field.dim()) throw DataError("render: query dimension does not match the field");
    Grid z{field.height(), field.width(), std::vector<double>(static_cast<std::size_t>(field.height()) * field.width(), 0.0)};
    for (const auto& fp : footprints) {
        const double sim = span_dot(field.feature(fp.gaussian), query);
        if (sim == 0.0) continue;
        for (std::size_t k = 0; k < fp.pixels.size(); ++k) z.values[fp.pixels[k]] += fp.weights[k] * sim;
    }
    return z;
}

inline Grid to_probabilities(Grid logits) {
    for (double& v : logits.values) v = logistic(v);
    return logits;
}

/// prob(p) = logistic(sum_g w_g(p) * (feature_g . query)).
inline Grid render_mask(const ReferringField& field, ViewIndex view, std::span<const double> query) {
    const auto fps = view_footprints(field, view);
    return to_probabilities(render_logits(field, fps, query));
}

/// Foreground where probability exceeds the threshold. Pixels no Gaussian
/// reaches sit at exactly 0.5 and stay background.
inline RleMask binarize(const Grid& prob, double threshold = 0.5) {
    Bitmap b(prob.height, prob.width);
    for (std::size_t i = 0; i < prob.values.size(); ++i) b.pixels[i] = prob.values[i] > threshold ? 1 : 0;
    return rle_encode(b);
}

struct GaussianSelection {
    std::vector<std::size_t> ids;
    Vector mean;  ///< f_g: arithmetic mean of the selected features
};

inline GaussianSelection mean_feature(const ReferringField& field, std::vector<std::size_t> ids) {
    if (ids.empty()) throw DataError("select_gaussians: no Gaussian inside the mask");
    GaussianSelection s{std::move(ids), Vector(field.dim(), 0.0)};
    for (std::size_t g : s.ids) {
        auto f = field.feature(g);
        for (std::size_t i = 0; i < f.size(); ++i) s.mean[i] += f[i];
    }
    for (double& x : s.mean) x /= static_cast<double>(s.ids.size());
    return s;
}

/// Gaussians visible in `view` whose center pixel lies inside `mask`.
inline GaussianSelection select_gaussians(const ReferringField& field, ViewIndex view, const Bitmap& mask) {
    if (mask.height != field.height() || mask.width != field.width()) {
        throw DataError("select_gaussians: mask dimensions do not match the field");
    }
    std::vector<std::size_t> ids;
    for (std::size_t g = 0; g < field.size(); ++g) {
        const auto& centers = field.gaussian(g).centers;
        if (view >= centers.size() || !centers[view]) continue;
        const auto x = static_cast<int>(std::floor(centers[view]->x)), y = static_cast<int>(std::floor(centers[view]->y));
        if (x < 0 || y < 0 || x >= mask.width || y >= mask.height) continue;
        if (mask.at(y, x)) ids.push_back(g);
    }
    return mean_feature(field, std::move(ids));
}

inline GaussianSelection select_gaussians(const ReferringField& field, ViewIndex view, const RleMask& mask) {
    return select_gaussians(field, view, rle_decode(mask));
}

struct LossGrad {
    double loss = 0.0;
    Vector grad;
};

/// Multi-positive contrastive loss
///   L = -(1/|P|) sum_{p in P} log( exp(f.d_p / tau) / sum_{k in D} exp(f.d_k / tau) )
///     = logsumexp_k(f.d_k / tau) - mean_p(f.d_p / tau),
/// with `positives` given as distinct indices into `pool`. Gradient is with
/// respect to f.
inline LossGrad contrastive_loss(std::span<const double> f, std::span<const std::size_t> positives,
                                 std::span<const Vector> pool, double tau) {
    if (!(tau > 0.0)) throw NumericError("contrastive_loss: temperature must be positive");
    if (positives.empty()) throw DataError("contrastive_loss: empty positive set");
    std::vector<bool> seen(pool.size(), false);
    for (std::size_t p : positives) {
        if (p >= pool.size()) throw DataError("contrastive_loss: positive is not in the pool");
        if (seen[p]) throw DataError("contrastive_loss: duplicate positive");
        seen[p] = true;
    }
    std::vector<double> logits(pool.size());
    double max_logit = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < pool.size(); ++k) {
        if (pool[k].size() != f.size()) throw DataError("contrastive_loss: dimension mismatch");
        logits[k] = span_dot(f, pool[k]) / tau;
        max_logit = std::max(max_logit, logits[k]);
    }
    double z = 0;
    for (double l : logits) z += std::exp(l - max_logit);
    const double lse = max_logit + std::log(z);

    LossGrad out{0.0, Vector(f.size(), 0.0)};
    const double inv_p = 1.0 / static_cast<double>(positives.size());
    for (std::size_t p : positives) out.loss += lse - logits[p];
    out.loss *= inv_p;
    for (std::size_t k = 0; k < pool.size(); ++k) {
        const double w = std::exp(logits[k] - lse) - (seen[k] ? inv_p : 0.0);
        for (std::size_t i = 0; i < f.size(); ++i) out.grad[i] += w * pool[k][i] / tau;
    }
    if (!std::isfinite(out.loss)) throw NumericError("contrastive_loss: non-finite loss");
    return out;
}

/// Overload taking positive vectors; each must appear (exactly) in the pool.
inline LossGrad contrastive_loss(std::span<const double> f, std::span<const Vector> positives, std::span<const Vector> pool,
                                 double tau) {
    std::vector<std::size_t> idx;
    for (const auto& p : positives) {
        auto it = std::find(pool.begin(), pool.end(), p);
        if (it == pool.end()) throw DataError("contrastive_loss: positive is not in the pool");
        idx.push_back(static_cast<std::size_t>(it - pool.begin()));
    }
    return contrastive_loss(f, idx, pool, tau);
}

inline constexpr double kBceEpsilon = 1e-7;

/// Mean binary cross-entropy of probabilities against a binary target, with
/// p clamped to [eps, 1 - eps]. The gradient is with respect to the logits
/// that produced `prob`: (p - y) / N, zero where the clamp is active.
inline LossGrad seg_loss(const Grid& prob, const Bitmap& target) {
    if (prob.height != target.height || prob.width != target.width) throw DataError("seg_loss: dimension mismatch");
    const std::size_t n = prob.values.size();
    LossGrad out{0.0, Vector(n, 0.0)};
    const double inv_n = 1.0 / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double raw = prob.values[i];
        const double p = std::clamp(raw, kBceEpsilon, 1.0 - kBceEpsilon);
        const bool y = target.pixels[i] != 0;
        out.loss -= y ? std::log(p) : std::log(1.0 - p);
        if (raw == p) out.grad[i] = ((y ? -1.0 : 0.0) + p) * inv_n;
    }
    out.loss *= inv_n;
    return out;
}

inline LossGrad seg_loss(const Grid& prob, const RleMask& target) { return seg_loss(prob, rle_decode(target)); }

/// L = L_seg + lambda * L_con.
inline double total_loss(double seg, double con, double lambda) {
    if (!(lambda >= 0.0)) throw NumericError("total_loss: lambda must be nonnegative");
    return seg + lambda * con;
}

/// Largest per-component relative error between `analytic` and central
/// differences of `fn` at `point`:
///   |a - n| / max(|a|, |n|, floor).
/// The floor keeps components whose true gradient is ~0 from dominating.
inline double grad_check(const std::function<double(const Vector&)>& fn, const Vector& point, const Vector& analytic,
                         double step = 1e-5, double floor = 1e-6) {
    if (!(step > 0.0)) throw NumericError("grad_check: step must be positive");
    if (analytic.size() != point.size()) throw DataError("grad_check: gradient size does not match the point");
    Vector x = point;
    double worst = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double orig = x[i];
        x[i] = orig + step;
        const double up = fn(x);
        x[i] = orig - step;
        const double down = fn(x);
        x[i] = orig;
        const double numeric = (up - down) / (2.0 * step);
        const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), floor});
        worst = std::max(worst, std::abs(analytic[i] - numeric) / denom);
    }
    return worst;
}

}  // namespace trackvote
