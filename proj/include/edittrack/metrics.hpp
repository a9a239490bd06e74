#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include "edittrack/backends/backend.hpp"
#include "edittrack/error.hpp"
#include "edittrack/image.hpp"

namespace edittrack {

// Canonical metric order. "First k metrics" ablations slice this prefix.
enum class MetricId { Bhattacharyya = 0, Intersection, Lpips, ClipScore, Phash, Structural };

inline constexpr int kMetricCount = 6;

inline constexpr std::array<const char*, kMetricCount> kMetricNames = {
    "bhattacharyya", "intersection", "lpips", "clip", "phash", "structural"};

// True when a larger value means "more similar".
inline constexpr bool higher_is_similar(MetricId m) {
    return m == MetricId::Intersection || m == MetricId::ClipScore;
}

// Value each metric takes on identical inputs.
inline constexpr std::array<double, kMetricCount> kPerfectScores = {0.0, 1.0, 0.0, 1.0, 0.0, 0.0};

using MetricScores = std::array<double, kMetricCount>;

// ---------------------------------------------------------------------------
// Pixel-value similarity

inline constexpr int kHistogramBins = 64;

struct Histogram {
    std::array<double, 3 * kHistogramBins> bins{};
};

// Per-channel 64-bin histogram (bin = v / 4), jointly normalized to sum 1.
inline Histogram histogram(const ImageBuffer& img) {
    Histogram h;
    std::array<std::uint64_t, 3 * kHistogramBins> counts{};
    auto data = img.data();
    for (std::size_t i = 0; i < img.pixel_count(); ++i)
        for (int c = 0; c < 3; ++c) ++counts[c * kHistogramBins + data[3 * i + c] / 4];
    const double total = 3.0 * static_cast<double>(img.pixel_count());
    for (std::size_t i = 0; i < counts.size(); ++i) h.bins[i] = counts[i] / total;
    return h;
}

// Hellinger form sqrt(1 - BC), bounded in [0,1]. For unit-mass histograms
// 1 - BC = sum (sqrt a - sqrt b)^2 / 2, which is exactly 0 for identical
// inputs where the direct form leaves rounding residue.
inline double bhattacharyya_distance(const Histogram& a, const Histogram& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.bins.size(); ++i) {
        const double d = std::sqrt(a.bins[i]) - std::sqrt(b.bins[i]);
        s += d * d;
    }
    return std::sqrt(std::min(0.5 * s, 1.0));
}

inline double intersection_score(const Histogram& a, const Histogram& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.bins.size(); ++i) s += std::min(a.bins[i], b.bins[i]);
    return std::min(s, 1.0);
}

// ---------------------------------------------------------------------------
// Perceptual hash

namespace detail {

inline double dct_ortho_scale(int k, int n) { return k == 0 ? std::sqrt(1.0 / n) : std::sqrt(2.0 / n); }

}  // namespace detail

// Top-left 8x8 block of the orthonormal 2-D DCT-II of a square plane, row-major
// (index = vertical_freq * 8 + horizontal_freq).
inline std::array<double, 64> dct_low_block(const Plane& p) {
    const int n = p.width;
    std::vector<double> basis(8 * static_cast<std::size_t>(n));
    for (int k = 0; k < 8; ++k)
        for (int i = 0; i < n; ++i)
            basis[k * n + i] = detail::dct_ortho_scale(k, n) *
                               std::cos(std::numbers::pi * (2.0 * i + 1.0) * k / (2.0 * n));
    // rows first: tmp[y][v] = sum_x p[y][x] * basis[v][x]
    std::vector<double> tmp(static_cast<std::size_t>(n) * 8, 0.0);
    for (int y = 0; y < n; ++y)
        for (int v = 0; v < 8; ++v) {
            double s = 0.0;
            for (int x = 0; x < n; ++x) s += p.at(x, y) * basis[v * n + x];
            tmp[y * 8 + v] = s;
        }
    std::array<double, 64> out{};
    for (int u = 0; u < 8; ++u)
        for (int v = 0; v < 8; ++v) {
            double s = 0.0;
            for (int y = 0; y < n; ++y) s += tmp[y * 8 + v] * basis[u * n + y];
            out[u * 8 + v] = s;
        }
    return out;
}

// 64-bit perceptual hash: BT.601 luma, bilinear 32x32, DCT-II, 8x8 low block,
// bit k = coefficient k > median of the 63 non-DC coefficients, bit 0 = 0.
inline std::uint64_t phash(const ImageBuffer& img) {
    const Plane small = resize_bilinear(to_luma(img), 32, 32);
    auto coeffs = dct_low_block(small);
    // Rounding residue of an exactly-zero coefficient is snapped to zero so
    // flat images hash to all zeros.
    const double snap = 1e-9 * (std::abs(coeffs[0]) + 1.0);
    for (auto& c : coeffs)
        if (std::abs(c) < snap) c = 0.0;
    std::array<double, 63> ac;
    std::copy(coeffs.begin() + 1, coeffs.end(), ac.begin());
    std::nth_element(ac.begin(), ac.begin() + 31, ac.end());
    const double median = ac[31];
    std::uint64_t hash = 0;
    for (int k = 1; k < 64; ++k)
        if (coeffs[k] > median) hash |= (std::uint64_t{1} << k);
    return hash;
}

inline double phash_distance(std::uint64_t a, std::uint64_t b) { return std::popcount(a ^ b) / 64.0; }

// ---------------------------------------------------------------------------
// Structural distance over patch self-similarity

struct PatchDescriptorGrid {
    int grid = 0;  // P; the grid holds P*P descriptors in row-major order
    int dim = 0;
    std::vector<double> values;  // P*P*dim, each descriptor unit-norm

    const double* descriptor(int i) const { return values.data() + static_cast<std::size_t>(i) * dim; }
};

class PatchExtractor {
public:
    virtual ~PatchExtractor() = default;
    virtual PatchDescriptorGrid extract(const ImageBuffer& img) const = 0;
};

// Default offline extractor: per cell, an 8-bin magnitude-weighted gradient
// orientation histogram (unit L2) plus the cell's mean color scaled by
// `color_weight`, the whole descriptor renormalized to unit length.
class OrientationPatchExtractor final : public PatchExtractor {
public:
    static constexpr int kOrientationBins = 8;
    static constexpr int kDim = kOrientationBins + 3;

    explicit OrientationPatchExtractor(int grid = 14, double color_weight = 0.5)
        : grid_(grid), color_weight_(color_weight) {}

    PatchDescriptorGrid extract(const ImageBuffer& img) const override {
        const int w = img.width(), h = img.height();
        if (w < grid_ || h < grid_) throw PreconditionError("image smaller than the patch grid");
        const Plane luma = to_luma(img);
        const int cells = grid_ * grid_;
        std::vector<double> orient(static_cast<std::size_t>(cells) * kOrientationBins, 0.0);
        std::vector<double> color(static_cast<std::size_t>(cells) * 3, 0.0);
        std::vector<int> count(cells, 0);
        std::vector<int> cell_x(w), cell_y(h);
        for (int x = 0; x < w; ++x) cell_x[x] = std::min(grid_ - 1, static_cast<int>(static_cast<long long>(x) * grid_ / w));
        for (int y = 0; y < h; ++y) cell_y[y] = std::min(grid_ - 1, static_cast<int>(static_cast<long long>(y) * grid_ / h));
        constexpr double bin_width = 2.0 * std::numbers::pi / kOrientationBins;
        for (int y = 0; y < h; ++y) {
            const int ym = std::max(y - 1, 0), yp = std::min(y + 1, h - 1);
            for (int x = 0; x < w; ++x) {
                const int xm = std::max(x - 1, 0), xp = std::min(x + 1, w - 1);
                const double gx = luma.at(xp, y) - luma.at(xm, y);
                const double gy = luma.at(x, yp) - luma.at(x, ym);
                const int cell = cell_y[y] * grid_ + cell_x[x];
                const double mag = std::sqrt(gx * gx + gy * gy);
                if (mag > 0.0) {
                    int bin = static_cast<int>(std::floor((std::atan2(gy, gx) + std::numbers::pi) / bin_width));
                    bin = ((bin % kOrientationBins) + kOrientationBins) % kOrientationBins;
                    orient[static_cast<std::size_t>(cell) * kOrientationBins + bin] += mag;
                }
                for (int c = 0; c < 3; ++c) color[cell * 3 + c] += img.at(x, y, c);
                ++count[cell];
            }
        }
        PatchDescriptorGrid out{grid_, kDim, std::vector<double>(static_cast<std::size_t>(cells) * kDim)};
        for (int cell = 0; cell < cells; ++cell) {
            double* d = out.values.data() + static_cast<std::size_t>(cell) * kDim;
            const double* o = orient.data() + static_cast<std::size_t>(cell) * kOrientationBins;
            double on = 0.0;
            for (int b = 0; b < kOrientationBins; ++b) on += o[b] * o[b];
            on = std::sqrt(on);
            for (int b = 0; b < kOrientationBins; ++b)
                d[b] = on > 1e-12 ? o[b] / on : 1.0 / std::sqrt(double(kOrientationBins));
            for (int c = 0; c < 3; ++c) d[kOrientationBins + c] = color_weight_ * color[cell * 3 + c] / (255.0 * count[cell]);
            double n = 0.0;
            for (int k = 0; k < kDim; ++k) n += d[k] * d[k];
            n = std::sqrt(n);
            for (int k = 0; k < kDim; ++k) d[k] /= n;
        }
        return out;
    }

private:
    int grid_;
    double color_weight_;
};

// Cosine self-similarity matrix, (P*P) x (P*P) row-major.
inline std::vector<double> self_similarity(const PatchDescriptorGrid& g) {
    const int m = g.grid * g.grid;
    std::vector<double> s(static_cast<std::size_t>(m) * m);
    for (int u = 0; u < m; ++u) {
        const double* du = g.descriptor(u);
        for (int v = u; v < m; ++v) {
            const double* dv = g.descriptor(v);
            double dot = 0.0, nu = 0.0, nv = 0.0;
            for (int k = 0; k < g.dim; ++k) {
                dot += du[k] * dv[k];
                nu += du[k] * du[k];
                nv += dv[k] * dv[k];
            }
            const double denom = std::sqrt(nu * nv);
            const double c = denom > 0.0 ? dot / denom : 0.0;
            s[static_cast<std::size_t>(u) * m + v] = c;
            s[static_cast<std::size_t>(v) * m + u] = c;
        }
    }
    return s;
}

// (1/P^2) * ||S_a - S_b||_F over precomputed self-similarity matrices.
inline double structural_distance_from_ssm(const std::vector<double>& sa, const std::vector<double>& sb, int grid) {
    if (sa.size() != sb.size()) throw ExtractorMismatch("self-similarity matrices differ in shape");
    double acc = 0.0;
    for (std::size_t i = 0; i < sa.size(); ++i) {
        const double d = sa[i] - sb[i];
        acc += d * d;
    }
    return std::sqrt(acc) / (static_cast<double>(grid) * grid);
}

inline double structural_distance(const ImageBuffer& a, const ImageBuffer& b, const PatchExtractor& extractor) {
    const auto ga = extractor.extract(a);
    const auto gb = extractor.extract(b);
    if (ga.grid != gb.grid || ga.dim != gb.dim)
        throw ExtractorMismatch("patch grids differ: " + std::to_string(ga.grid) + "x" + std::to_string(ga.dim) +
                                " vs " + std::to_string(gb.grid) + "x" + std::to_string(gb.dim));
    return structural_distance_from_ssm(self_similarity(ga), self_similarity(gb), ga.grid);
}

// ---------------------------------------------------------------------------
// Semantic / perceptual metrics over embedder vectors

inline double cosine_similarity(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) throw DimensionMismatch("embedding dimensions differ");
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0.0 || nb == 0.0) return na == nb ? 1.0 : 0.0;
    return std::clamp(dot / std::sqrt(na * nb), -1.0, 1.0);
}

inline double mean_squared_difference(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) throw DimensionMismatch("embedding dimensions differ");
    if (a.empty()) return 0.0;
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        acc += d * d;
    }
    return acc / static_cast<double>(a.size());
}

inline double clip_score(const ImageBuffer& a, const ImageBuffer& b, const Embedder& embedder) {
    return cosine_similarity(embedder.embed(a, EmbeddingSpace::Semantic).values,
                             embedder.embed(b, EmbeddingSpace::Semantic).values);
}

// Mean squared difference of perceptual embeddings. Embedders are expected to
// pre-weight their feature blocks so that this equals their intended distance.
inline double lpips_distance(const ImageBuffer& a, const ImageBuffer& b, const Embedder& embedder) {
    return mean_squared_difference(embedder.embed(a, EmbeddingSpace::Perceptual).values,
                                   embedder.embed(b, EmbeddingSpace::Perceptual).values);
}

// Offline perceptual features: a 3-level Laplacian pyramid of luma in [0,1]
// (2x2 box down, nearest up; last level is the low-pass residual), split into
// 8x8 tiles (partial at borders), each tile divided by sqrt(|t|^2 + eps^2).
// Levels are scaled so the plain mean squared difference of two vectors is the
// average of the per-level mean squared differences.
struct PyramidOptions {
    int levels = 3;
    int tile = 8;
    double tile_eps = 0.1;
};

namespace detail {

inline Plane box_down2(const Plane& p) {
    Plane out((p.width + 1) / 2, (p.height + 1) / 2);
    for (int y = 0; y < out.height; ++y)
        for (int x = 0; x < out.width; ++x) {
            double s = 0.0;
            int n = 0;
            for (int dy = 0; dy < 2; ++dy)
                for (int dx = 0; dx < 2; ++dx) {
                    const int sx = 2 * x + dx, sy = 2 * y + dy;
                    if (sx < p.width && sy < p.height) {
                        s += p.at(sx, sy);
                        ++n;
                    }
                }
            out.at(x, y) = s / n;
        }
    return out;
}

}  // namespace detail

inline std::vector<Plane> laplacian_pyramid(const Plane& base, int levels) {
    std::vector<Plane> gauss{base};
    for (int l = 1; l < levels; ++l) gauss.push_back(detail::box_down2(gauss.back()));
    std::vector<Plane> lap;
    for (int l = 0; l + 1 < levels; ++l) {
        Plane band = gauss[l];
        const Plane& coarse = gauss[l + 1];
        for (int y = 0; y < band.height; ++y)
            for (int x = 0; x < band.width; ++x) band.at(x, y) -= coarse.at(x / 2, y / 2);
        lap.push_back(std::move(band));
    }
    lap.push_back(gauss.back());
    return lap;
}

inline std::vector<double> pyramid_features(const ImageBuffer& img, const PyramidOptions& opt = {}) {
    Plane luma = to_luma(img);
    for (auto& v : luma.values) v /= 255.0;
    const auto levels = laplacian_pyramid(luma, opt.levels);
    std::size_t total = 0;
    for (const auto& l : levels) total += l.values.size();
    std::vector<double> out;
    out.reserve(total);
    for (const auto& l : levels) {
        const double weight = std::sqrt(static_cast<double>(total) / (opt.levels * static_cast<double>(l.values.size())));
        for (int ty = 0; ty < l.height; ty += opt.tile)
            for (int tx = 0; tx < l.width; tx += opt.tile) {
                const int ye = std::min(ty + opt.tile, l.height), xe = std::min(tx + opt.tile, l.width);
                double n2 = 0.0;
                for (int y = ty; y < ye; ++y)
                    for (int x = tx; x < xe; ++x) n2 += l.at(x, y) * l.at(x, y);
                const double scale = weight / std::sqrt(n2 + opt.tile_eps * opt.tile_eps);
                for (int y = ty; y < ye; ++y)
                    for (int x = tx; x < xe; ++x) out.push_back(l.at(x, y) * scale);
            }
    }
    return out;
}

// ---------------------------------------------------------------------------
// All six metrics

struct MetricBackends {
    const Embedder& embedder;
    const PatchExtractor& extractor;
    int side = kCanonicalSide;
};

// Everything about one image that the six metrics need; lets a suspicious
// image be compared against 2n re-edits without recomputation.
struct ImageSignature {
    Histogram hist;
    std::uint64_t hash = 0;
    std::vector<double> semantic;
    std::vector<double> perceptual;
    std::vector<double> ssm;
    int grid = 0;
};

inline ImageSignature image_signature(const ImageBuffer& img, const MetricBackends& backends) {
    const ImageBuffer canon = resize_canonical(img, backends.side);
    ImageSignature s;
    s.hist = histogram(canon);
    s.hash = phash(canon);
    s.semantic = backends.embedder.embed(canon, EmbeddingSpace::Semantic).values;
    s.perceptual = backends.embedder.embed(canon, EmbeddingSpace::Perceptual).values;
    const auto grid = backends.extractor.extract(canon);
    s.grid = grid.grid;
    s.ssm = self_similarity(grid);
    return s;
}

inline MetricScores compare_signatures(const ImageSignature& a, const ImageSignature& b) {
    if (a.grid != b.grid) throw ExtractorMismatch("patch grids differ in shape");
    return {bhattacharyya_distance(a.hist, b.hist),
            intersection_score(a.hist, b.hist),
            mean_squared_difference(a.perceptual, b.perceptual),
            cosine_similarity(a.semantic, b.semantic),
            phash_distance(a.hash, b.hash),
            structural_distance_from_ssm(a.ssm, b.ssm, a.grid)};
}

// [bhattacharyya, intersection, lpips, clip, phash, structural] after resizing
// both images to the canonical resolution.
inline MetricScores compute_all(const ImageBuffer& a, const ImageBuffer& b, const MetricBackends& backends) {
    return compare_signatures(image_signature(a, backends), image_signature(b, backends));
}

}  // namespace edittrack
