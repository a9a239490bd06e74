#pragma once

// Procedural base/suspicious pairs for desk-scale experiments: positives are
// produced by the registry's simulated editors; negatives come in four modes
// (shared content, shared style, near-duplicate frame, unrelated edit).

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "edittrack/backends/registry.hpp"
#include "edittrack/backends/simulated.hpp"
#include "edittrack/image_io.hpp"
#include "edittrack/manifest.hpp"
#include "edittrack/util.hpp"

namespace edittrack::sim {

// Deterministic stream of uniform variates keyed by a seed.
class HashStream {
public:
    explicit HashStream(std::uint64_t seed) : seed_(seed) {}
    double uniform() { return hash_unit(mix64(seed_, counter_++)); }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    int index(int n) { return std::min(n - 1, static_cast<int>(uniform() * n)); }
    std::uint64_t next() { return mix64(seed_, counter_++); }

private:
    std::uint64_t seed_;
    std::uint64_t counter_ = 0;
};

// Smooth lattice noise in [-1,1] with the given cell spacing in pixels.
inline double value_noise(std::uint64_t seed, double x, double y, double spacing) {
    const double gx = x / spacing, gy = y / spacing;
    const auto ix = static_cast<long long>(std::floor(gx)), iy = static_cast<long long>(std::floor(gy));
    const double fx = gx - ix, fy = gy - iy;
    auto lattice = [seed](long long a, long long b) {
        return 2.0 * hash_unit(mix64(seed, (static_cast<std::uint64_t>(a) << 32) ^ static_cast<std::uint64_t>(b))) - 1.0;
    };
    const double sx = fx * fx * (3 - 2 * fx), sy = fy * fy * (3 - 2 * fy);
    const double top = lattice(ix, iy) * (1 - sx) + lattice(ix + 1, iy) * sx;
    const double bot = lattice(ix, iy + 1) * (1 - sx) + lattice(ix + 1, iy + 1) * sx;
    return top * (1 - sy) + bot * sy;
}

inline Rgb random_color(HashStream& rng, double lo = 20, double hi = 235) {
    return {rng.uniform(lo, hi), rng.uniform(lo, hi), rng.uniform(lo, hi)};
}

// Float canvas; converted to bytes once at the end.
struct Canvas {
    int side;
    std::vector<double> px;
    explicit Canvas(int s) : side(s), px(static_cast<std::size_t>(s) * s * 3, 0.0) {}
    double* at(int x, int y) { return &px[(static_cast<std::size_t>(y) * side + x) * 3]; }
    ImageBuffer to_image() const {
        ImageBuffer img(side, side);
        auto d = img.data();
        for (std::size_t i = 0; i < px.size(); ++i) d[i] = clamp_to_byte(px[i]);
        return img;
    }
};

inline void add_photo_texture(Canvas& cv, std::uint64_t seed, double amplitude) {
    for (int y = 0; y < cv.side; ++y)
        for (int x = 0; x < cv.side; ++x) {
            const double n = 0.55 * value_noise(seed, x, y, 24.0) + 0.3 * value_noise(seed + 1, x, y, 6.0) +
                             0.15 * value_noise(seed + 2, x, y, 1.7);
            double* p = cv.at(x, y);
            for (int c = 0; c < 3; ++c) p[c] += amplitude * n;
        }
}

// Natural-photo analog: graded sky/ground, a handful of solid shapes, and
// multi-octave luminance texture.
inline ImageBuffer photo_scene(std::uint64_t seed, int side) {
    HashStream rng(mix64(seed, 0x9407ULL));
    Canvas cv(side);
    const Rgb top = random_color(rng), bottom = random_color(rng);
    const double horizon = rng.uniform(0.3, 0.7);
    const Rgb ground = random_color(rng);
    for (int y = 0; y < side; ++y) {
        const double t = static_cast<double>(y) / side;
        for (int x = 0; x < side; ++x) {
            double* p = cv.at(x, y);
            for (int c = 0; c < 3; ++c)
                p[c] = t < horizon ? top[c] + (bottom[c] - top[c]) * t / horizon
                                   : ground[c] * (0.85 + 0.3 * (t - horizon));
        }
    }
    const int shapes = 3 + rng.index(4);
    for (int s = 0; s < shapes; ++s) {
        const Rgb col = random_color(rng);
        const double cx = rng.uniform(0.1, 0.9) * side, cy = rng.uniform(0.1, 0.9) * side;
        const double rx = rng.uniform(0.05, 0.2) * side, ry = rng.uniform(0.05, 0.2) * side;
        const bool ellipse = rng.uniform() < 0.6;
        for (int y = std::max(0, int(cy - ry)); y < std::min(side, int(cy + ry) + 1); ++y)
            for (int x = std::max(0, int(cx - rx)); x < std::min(side, int(cx + rx) + 1); ++x) {
                const double nx = (x - cx) / rx, ny = (y - cy) / ry;
                if (ellipse && nx * nx + ny * ny > 1.0) continue;
                if (!ellipse && (std::abs(nx) > 1.0 || std::abs(ny) > 1.0)) continue;
                double* p = cv.at(x, y);
                const double shade = 1.0 - 0.15 * ny;
                for (int c = 0; c < 3; ++c) p[c] = col[c] * shade;
            }
    }
    add_photo_texture(cv, rng.next(), 16.0);
    return cv.to_image();
}

struct ArtStyle {
    std::vector<Rgb> palette;
    double stroke_angle = 0.0;
    double stroke_wavelength = 6.0;
};

inline ArtStyle art_style(std::uint64_t seed) {
    HashStream rng(mix64(seed, 0xa27ULL));
    ArtStyle s;
    for (int i = 0; i < 5; ++i) s.palette.push_back(random_color(rng, 10, 245));
    s.stroke_angle = rng.uniform(0.0, std::numbers::pi);
    s.stroke_wavelength = rng.uniform(4.0, 9.0);
    return s;
}

// Painting analog: palette-colored Voronoi regions with directional strokes.
inline ImageBuffer art_scene(std::uint64_t layout_seed, const ArtStyle& style, int side) {
    HashStream rng(mix64(layout_seed, 0xa28ULL));
    const int regions = 8 + rng.index(7);
    std::vector<std::array<double, 2>> sites;
    std::vector<int> colors;
    for (int i = 0; i < regions; ++i) {
        sites.push_back({rng.uniform(0, side), rng.uniform(0, side)});
        colors.push_back(rng.index(static_cast<int>(style.palette.size())));
    }
    const std::uint64_t tex = rng.next();
    Canvas cv(side);
    const double ca = std::cos(style.stroke_angle), sa = std::sin(style.stroke_angle);
    for (int y = 0; y < side; ++y)
        for (int x = 0; x < side; ++x) {
            int best = 0;
            double bd = 1e300;
            for (int i = 0; i < regions; ++i) {
                const double dx = x - sites[i][0], dy = y - sites[i][1];
                const double d = dx * dx + dy * dy;
                if (d < bd) {
                    bd = d;
                    best = i;
                }
            }
            const Rgb& col = style.palette[colors[best]];
            const double along = -x * sa + y * ca;
            const double stroke = std::sin(2.0 * std::numbers::pi * along / style.stroke_wavelength +
                                           3.0 * value_noise(tex, x, y, 20.0));
            const double grain = value_noise(tex + 7, x, y, 3.0);
            double* p = cv.at(x, y);
            for (int c = 0; c < 3; ++c) p[c] = col[c] + 10.0 * stroke + 6.0 * grain;
        }
    return cv.to_image();
}

// Paints a token set's regions at pixel resolution, as an object that is
// natively part of the scene (not an edit): jittered colors, kept texture.
inline ImageBuffer paint_tokens(const ImageBuffer& scene, const std::vector<std::string>& tokens, std::uint64_t seed) {
    HashStream rng(mix64(seed, 0x9a1ULL));
    ImageBuffer out = scene;
    const int w = out.width(), h = out.height();
    for (const auto& tok : tokens) {
        const TokenSpec t = token_spec(tok);
        const Rgb jitter{rng.uniform(-12, 12), rng.uniform(-12, 12), rng.uniform(-12, 12)};
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                const double fx = (x + 0.5) / w, fy = (y + 0.5) / h;
                const double nx = t.band ? (fx - 0.5) * 2.0 : (fx - t.cx) / t.rx;
                const double ny = (fy - t.cy) / t.ry;
                const bool inside = t.band ? std::abs(ny) <= 1.0 : nx * nx + ny * ny <= 1.0;
                if (!inside) continue;
                const double shade = 1.0 + 0.18 * nx - 0.22 * ny;
                const double lum = bt601_luma(scene.at(x, y, 0), scene.at(x, y, 1), scene.at(x, y, 2));
                const double detail = 0.25 * (lum - 128.0);
                for (int c = 0; c < 3; ++c)
                    out.at(x, y, c) = clamp_to_byte(t.color[c] * shade + jitter[c] + detail);
            }
    }
    return out;
}

// Near-duplicate frame: small translation, exposure change, fresh sensor noise.
inline ImageBuffer next_frame(const ImageBuffer& img, std::uint64_t seed) {
    HashStream rng(mix64(seed, 0xf4aULL));
    const int dx = (rng.uniform() < 0.5 ? -1 : 1) * rng.index(2);
    const int dy = (rng.uniform() < 0.5 ? -1 : 1) * rng.index(2);
    const double gain = rng.uniform(0.97, 1.03), bias = rng.uniform(-4, 4);
    const std::uint64_t noise = rng.next();
    ImageBuffer out(img.width(), img.height());
    for (int y = 0; y < img.height(); ++y)
        for (int x = 0; x < img.width(); ++x) {
            const int sx = std::clamp(x - dx, 0, img.width() - 1), sy = std::clamp(y - dy, 0, img.height() - 1);
            for (int c = 0; c < 3; ++c) {
                const double n = 3.0 * (2.0 * hash_unit(mix64(noise, (static_cast<std::uint64_t>(y) * img.width() + x) * 3 + c)) - 1.0);
                out.at(x, y, c) = clamp_to_byte(img.at(sx, sy, c) * gain + bias + n);
            }
        }
    return out;
}

// Free-text editing prompt for a token set, using synonyms and filler words.
inline std::string phrase_prompt(const std::vector<std::string>& tokens, HashStream& rng) {
    std::vector<std::string> words;
    for (const auto& t : tokens) {
        std::vector<std::string> options{t};
        for (const auto& [syn, canon] : synonyms())
            if (canon == t) options.push_back(syn);
        words.push_back(options[rng.index(static_cast<int>(options.size()))]);
    }
    static const std::vector<std::string> fillers = {"turn it into a", "add a", "make there be a", "replace with a"};
    std::string s = fillers[rng.index(static_cast<int>(fillers.size()))];
    for (std::size_t i = 0; i < words.size(); ++i) s += (i == 0 ? " " : (i + 1 == words.size() ? " and a " : ", a ")) + words[i];
    return s;
}

enum class NegativeMode { Content, Style, Frame, Unrelated };

inline std::string to_string(NegativeMode m) {
    switch (m) {
        case NegativeMode::Content: return "content";
        case NegativeMode::Style: return "style";
        case NegativeMode::Frame: return "frame";
        case NegativeMode::Unrelated: return "unrelated";
    }
    return "?";
}

inline NegativeMode parse_negative_mode(const std::string& s) {
    if (s == "content") return NegativeMode::Content;
    if (s == "style") return NegativeMode::Style;
    if (s == "frame") return NegativeMode::Frame;
    if (s == "unrelated") return NegativeMode::Unrelated;
    throw ConfigError("unknown negative mode '" + s + "'");
}

struct SimulationSpec {
    int positives_per_model = 10;  // split evenly over positive_sources
    int negatives_per_mode = 20;
    std::vector<NegativeMode> negative_modes{NegativeMode::Content, NegativeMode::Style, NegativeMode::Frame,
                                             NegativeMode::Unrelated};
    std::vector<std::string> positive_sources{"photo", "art"};
    // 1-based generator indices whose positives are labeled `unseen`; the rest
    // are relabeled 1..k in order and define the manifest's registry.
    std::set<int> unseen_editors;
    std::uint64_t seed = 1;
    int side = kCanonicalSide;
    // Probability that a positive prompt names one extra object the
    // captioner will not recover.
    double extra_token_rate = 0.25;
};

struct SimulatedPair {
    PairRecord record;
    ImageBuffer base;
    ImageBuffer suspicious;
    std::string prompt;  // generating prompt (positives only)
};

inline const std::vector<std::string>& object_tokens() {
    static const std::vector<std::string> v = {"cat", "dog", "bird", "car", "boat", "house", "tree", "flower", "horse", "person"};
    return v;
}

inline ImageBuffer source_scene(const std::string& source, std::uint64_t seed, int side) {
    if (source == "art") return art_scene(seed, art_style(mix64(seed, 3)), side);
    return photo_scene(seed, side);
}

// One positive: base scene edited by `editor` with a pattern prompt.
inline SimulatedPair simulate_positive(const Editor& editor, const std::string& source, std::uint64_t seed, int side,
                                       double extra_token_rate) {
    HashStream rng(mix64(seed, 0x905ULL));
    SimulatedPair p;
    p.base = source_scene(source, rng.next(), side);
    const auto& patterns = known_patterns();
    auto tokens = patterns[rng.index(static_cast<int>(patterns.size()))].tokens;
    if (rng.uniform() < extra_token_rate) {
        const auto& extra = object_tokens()[rng.index(static_cast<int>(object_tokens().size()))];
        if (std::find(tokens.begin(), tokens.end(), extra) == tokens.end()) tokens.push_back(extra);
    }
    p.prompt = phrase_prompt(tokens, rng);
    p.suspicious = editor.edit(p.base, p.prompt, rng.next());
    return p;
}

inline SimulatedPair simulate_negative(NegativeMode mode, const BackendRegistry& generators, std::uint64_t seed, int side) {
    HashStream rng(mix64(seed, 0x4e6ULL));
    SimulatedPair p;
    switch (mode) {
        case NegativeMode::Content: {
            const auto& patterns = known_patterns();
            const auto& tokens = patterns[rng.index(static_cast<int>(patterns.size()))].tokens;
            p.base = paint_tokens(photo_scene(rng.next(), side), tokens, rng.next());
            p.suspicious = paint_tokens(photo_scene(rng.next(), side), tokens, rng.next());
            break;
        }
        case NegativeMode::Style: {
            const ArtStyle style = art_style(rng.next());
            p.base = art_scene(rng.next(), style, side);
            p.suspicious = art_scene(rng.next(), style, side);
            break;
        }
        case NegativeMode::Frame: {
            const std::string source = rng.uniform() < 0.5 ? "photo" : "art";
            p.base = source_scene(source, rng.next(), side);
            p.suspicious = next_frame(p.base, rng.next());
            break;
        }
        case NegativeMode::Unrelated: {
            const std::string source = rng.uniform() < 0.5 ? "photo" : "art";
            p.base = source_scene(source, rng.next(), side);
            const int gen = 1 + rng.index(generators.size());
            const std::string other = rng.uniform() < 0.5 ? "photo" : "art";
            p.suspicious = simulate_positive(generators.editor(gen), other, rng.next(), side, 0.25).suspicious;
            break;
        }
    }
    return p;
}

// Generates every pair of a dataset in memory, in manifest order.
inline std::vector<SimulatedPair> simulate_pairs(const BackendRegistry& generators, const SimulationSpec& spec) {
    if (spec.positives_per_model < 0 || spec.negatives_per_mode < 0) throw PreconditionError("counts must be >= 0");
    std::vector<SimulatedPair> out;
    int next_label = 0;
    for (int m = 1; m <= generators.size(); ++m) {
        const bool unseen = spec.unseen_editors.contains(m);
        const int label = unseen ? kUnseenLabel : ++next_label;
        for (int k = 0; k < spec.positives_per_model; ++k) {
            const std::string& source = spec.positive_sources[k % spec.positive_sources.size()];
            const std::uint64_t seed = mix64(spec.seed, Fnv1a().update("pos").update_u64(m).update_u64(k).digest());
            auto p = simulate_positive(generators.editor(m), source, seed, spec.side, spec.extra_token_rate);
            p.record = {"pos-" + generators.editor(m).info().name + "-" + std::to_string(k), "", "", label, source};
            out.push_back(std::move(p));
        }
    }
    for (const auto mode : spec.negative_modes)
        for (int k = 0; k < spec.negatives_per_mode; ++k) {
            const std::uint64_t seed =
                mix64(spec.seed, Fnv1a().update("neg").update(to_string(mode)).update_u64(k).digest());
            auto p = simulate_negative(mode, generators, seed, spec.side);
            p.record = {"neg-" + to_string(mode) + "-" + std::to_string(k), "", "", 0, to_string(mode)};
            out.push_back(std::move(p));
        }
    return out;
}

// Registry the manifest labels refer to: generators minus the unseen ones.
inline BackendRegistry labeling_registry(const BackendRegistry& generators, const std::set<int>& unseen) {
    std::vector<int> seen;
    for (int m = 1; m <= generators.size(); ++m)
        if (!unseen.contains(m)) seen.push_back(m);
    return generators.subset(seen);
}

// Writes images under `outdir/images/` and returns the manifest (also saved
// as `outdir/manifest.tsv`).
inline Manifest write_simulated_dataset(const BackendRegistry& generators, const SimulationSpec& spec,
                                        const std::filesystem::path& outdir) {
    std::filesystem::create_directories(outdir / "images");
    auto pairs = simulate_pairs(generators, spec);
    Manifest m;
    m.registry_fingerprint = labeling_registry(generators, spec.unseen_editors).fingerprint();
    m.comments.emplace_back(0, "# simulated dataset seed=" + std::to_string(spec.seed) + " side=" + std::to_string(spec.side));
    m.base_dir = outdir;
    for (auto& p : pairs) {
        p.record.base_path = "images/" + p.record.pair_id + "_b.png";
        p.record.suspicious_path = "images/" + p.record.pair_id + "_s.png";
        save_png(p.base, outdir / p.record.base_path);
        save_png(p.suspicious, outdir / p.record.suspicious_path);
        m.records.push_back(p.record);
    }
    save_manifest(m, outdir / "manifest.tsv");
    return m;
}

}  // namespace edittrack::sim
