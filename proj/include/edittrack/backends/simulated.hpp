#pragma once

// Deterministic in-process stand-ins for editing models, a captioner and an
// embedder. A simulated edit is
//
//   out = render(blend(grid(img), target(tokens), contraction)) + detail
//         + strength * (texture(model_id) + cast(model_id)) + noise(seed)
//
// where grid() is the block-mean color summary of the input, target() paints
// the prompt tokens' regions, blend() moves the masked cells a fraction
// (1 - contraction) of the way toward the model-tinted target colors, and the
// high-frequency detail of the input is kept outside the edited region after
// projecting out the model's own texture. Consequences:
//   * similar token sets produce similar targets, hence similar outputs;
//   * re-editing an output moves its edited cells by only `contraction` of
//     the first edit (the cast does stack);
//   * different model ids differ in tint, global cast and texture;
//   * content outside the edited region comes from the input, so an unrelated
//     image cannot be reproduced from a foreign base.

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <map>
#include <numbers>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "edittrack/backends/backend.hpp"
#include "edittrack/metrics.hpp"
#include "edittrack/util.hpp"

namespace edittrack::sim {

using Rgb = std::array<double, 3>;

// ---------------------------------------------------------------------------
// Prompt vocabulary

struct TokenSpec {
    std::string name;
    bool band = false;  // horizontal band spanning the width; otherwise an ellipse
    double cx = 0.5, cy = 0.5, rx = 0.1, ry = 0.1;  // normalized image coordinates
    Rgb color{128, 128, 128};
};

inline const std::vector<TokenSpec>& vocabulary() {
    static const std::vector<TokenSpec> v = {
        {"cat", false, 0.30, 0.45, 0.14, 0.12, {230, 140, 40}},
        {"dog", false, 0.65, 0.50, 0.15, 0.13, {125, 80, 45}},
        {"bird", false, 0.25, 0.22, 0.11, 0.08, {40, 90, 220}},
        {"car", false, 0.55, 0.70, 0.20, 0.08, {205, 30, 40}},
        {"boat", false, 0.45, 0.62, 0.18, 0.07, {240, 240, 230}},
        {"house", false, 0.72, 0.32, 0.14, 0.16, {170, 60, 60}},
        {"tree", false, 0.15, 0.50, 0.09, 0.22, {30, 120, 40}},
        {"flower", false, 0.80, 0.72, 0.09, 0.09, {220, 60, 180}},
        {"horse", false, 0.50, 0.42, 0.17, 0.12, {90, 55, 35}},
        {"person", false, 0.40, 0.40, 0.07, 0.20, {240, 200, 170}},
        {"meadow", true, 0.5, 0.91, 0.5, 0.09, {70, 160, 60}},
        {"beach", true, 0.5, 0.91, 0.5, 0.09, {230, 210, 150}},
        {"snow", true, 0.5, 0.91, 0.5, 0.09, {245, 245, 250}},
        {"sunset", true, 0.5, 0.09, 0.5, 0.09, {250, 120, 60}},
        {"night", true, 0.5, 0.09, 0.5, 0.09, {20, 20, 70}},
    };
    return v;
}

inline const std::map<std::string, std::string>& synonyms() {
    static const std::map<std::string, std::string> m = {
        {"kitten", "cat"},  {"kitty", "cat"},       {"puppy", "dog"},     {"hound", "dog"},
        {"sparrow", "bird"}, {"automobile", "car"}, {"vehicle", "car"},   {"ship", "boat"},
        {"sailboat", "boat"}, {"cottage", "house"}, {"home", "house"},   {"oak", "tree"},
        {"blossom", "flower"}, {"rose", "flower"},  {"pony", "horse"},   {"man", "person"},
        {"woman", "person"}, {"grass", "meadow"},   {"field", "meadow"}, {"shore", "beach"},
        {"sand", "beach"},  {"winter", "snow"},     {"dusk", "sunset"},  {"evening", "sunset"},
        {"midnight", "night"},
    };
    return m;
}

inline const std::set<std::string>& stop_words() {
    static const std::set<std::string> s = {
        "a",     "an",      "the",    "of",     "on",    "in",     "at",     "with", "and",    "to",
        "into",  "it",      "its",    "is",     "by",    "do",     "make",   "turn", "change", "add",
        "replace", "image", "editing", "task",  "original", "prompt", "unknown", "scene", "photo",
        "picture", "please", "some",  "there",  "this",  "that",   "under",  "near",
    };
    return s;
}

// Lowercased, synonym-mapped, stop-word-free, sorted, deduplicated tokens.
inline std::vector<std::string> canonical_tokens(std::string_view text) {
    std::set<std::string> out;
    std::string cur;
    auto flush = [&] {
        if (cur.empty()) return;
        auto it = synonyms().find(cur);
        std::string tok = it == synonyms().end() ? cur : it->second;
        if (!stop_words().contains(tok)) out.insert(std::move(tok));
        cur.clear();
    };
    for (char ch : text) {
        const auto c = static_cast<unsigned char>(ch);
        if (std::isalnum(c))
            cur += static_cast<char>(std::tolower(c));
        else
            flush();
    }
    flush();
    return {out.begin(), out.end()};
}

// Tokens a simulated editor acts on. For a proxy prompt ("...original prompt:
// X, editing prompt: Y") these are the tokens of Y not already in X; any
// other prompt is taken whole.
inline std::vector<std::string> edit_tokens_from_prompt(std::string_view prompt) {
    constexpr std::string_view orig_key = "original prompt:";
    constexpr std::string_view edit_key = "editing prompt:";
    const auto e = prompt.rfind(edit_key);
    if (e == std::string_view::npos) return canonical_tokens(prompt);
    const auto target = canonical_tokens(prompt.substr(e + edit_key.size()));
    std::vector<std::string> source;
    if (const auto o = prompt.find(orig_key); o != std::string_view::npos && o < e)
        source = canonical_tokens(prompt.substr(o + orig_key.size(), e - o - orig_key.size()));
    std::vector<std::string> diff;
    std::set_difference(target.begin(), target.end(), source.begin(), source.end(), std::back_inserter(diff));
    return diff;
}

inline TokenSpec token_spec(const std::string& token) {
    for (const auto& t : vocabulary())
        if (t.name == token) return t;
    // Out-of-vocabulary tokens get a hashed, stable blob.
    const std::uint64_t h = Fnv1a().update(token).digest();
    TokenSpec t;
    t.name = token;
    t.cx = 0.2 + 0.6 * hash_unit(mix64(h, 1));
    t.cy = 0.2 + 0.6 * hash_unit(mix64(h, 2));
    t.rx = 0.06 + 0.08 * hash_unit(mix64(h, 3));
    t.ry = 0.06 + 0.08 * hash_unit(mix64(h, 4));
    for (int c = 0; c < 3; ++c) t.color[c] = 30.0 + 200.0 * hash_unit(mix64(h, 5 + c));
    return t;
}

// ---------------------------------------------------------------------------
// Grid-level target

struct TargetField {
    int grid = 0;
    std::vector<std::uint8_t> mask;  // grid*grid, 1 = cell is edited
    std::vector<Rgb> color;          // grid*grid, valid where mask == 1

    std::size_t masked_cells() const { return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), 1)); }
};

inline TargetField target_field(const std::vector<std::string>& tokens, int grid) {
    TargetField f{grid, std::vector<std::uint8_t>(static_cast<std::size_t>(grid) * grid, 0),
                  std::vector<Rgb>(static_cast<std::size_t>(grid) * grid, Rgb{0, 0, 0})};
    for (const auto& tok : tokens) {
        const TokenSpec t = token_spec(tok);
        for (int i = 0; i < grid; ++i)
            for (int j = 0; j < grid; ++j) {
                const double x = (j + 0.5) / grid, y = (i + 0.5) / grid;
                const double nx = t.band ? (x - 0.5) * 2.0 : (x - t.cx) / t.rx;
                const double ny = (y - t.cy) / t.ry;
                const bool inside = t.band ? std::abs(ny) <= 1.0 : nx * nx + ny * ny <= 1.0;
                if (!inside) continue;
                // Diagonal shading gives every region internal structure.
                const double shade = 1.0 + 0.18 * nx - 0.22 * ny;
                const std::size_t k = static_cast<std::size_t>(i) * grid + j;
                f.mask[k] = 1;
                for (int c = 0; c < 3; ++c) f.color[k][c] = std::clamp(t.color[c] * shade, 0.0, 255.0);
            }
    }
    return f;
}

// Cell boundaries: cell k covers [floor(k*n/grid), floor((k+1)*n/grid)).
inline std::vector<int> cell_index(int n, int grid) {
    std::vector<int> idx(n);
    for (int p = 0; p < n; ++p) idx[p] = std::min(grid - 1, static_cast<int>(static_cast<long long>(p) * grid / n));
    return idx;
}

inline std::vector<Rgb> content_grid(const ImageBuffer& img, int grid) {
    const auto cx = cell_index(img.width(), grid), cy = cell_index(img.height(), grid);
    std::vector<Rgb> sum(static_cast<std::size_t>(grid) * grid, Rgb{0, 0, 0});
    std::vector<int> count(static_cast<std::size_t>(grid) * grid, 0);
    for (int y = 0; y < img.height(); ++y)
        for (int x = 0; x < img.width(); ++x) {
            const std::size_t k = static_cast<std::size_t>(cy[y]) * grid + cx[x];
            for (int c = 0; c < 3; ++c) sum[k][c] += img.at(x, y, c);
            ++count[k];
        }
    for (std::size_t k = 0; k < sum.size(); ++k)
        for (int c = 0; c < 3; ++c) sum[k][c] = count[k] ? sum[k][c] / count[k] : 0.0;
    return sum;
}

// ---------------------------------------------------------------------------
// Simulated editor

struct SimEditorParams {
    std::uint64_t model_id = 1;
    double fingerprint_strength = 1.0;  // (0,1]; 0 disables tint and texture
    int content_grid_size = 16;
    double contraction_factor = 0.15;   // (0,1)
    double noise_amplitude = 2.0;       // per-pixel sampler noise, in gray levels

    std::string describe() const {
        std::ostringstream os;
        os << "sim/v1 model_id=" << model_id << " strength=" << format_g9(fingerprint_strength)
           << " contraction=" << format_g9(contraction_factor) << " grid=" << content_grid_size
           << " noise=" << format_g9(noise_amplitude);
        return os.str();
    }
};

// Per-model tint applied to target colors: t + s * (M (t - 128) + offset).
struct ModelTint {
    std::array<std::array<double, 3>, 3> mix{};
    Rgb offset{};

    Rgb apply(const Rgb& t, double strength) const {
        Rgb out;
        for (int r = 0; r < 3; ++r) {
            double d = offset[r];
            for (int c = 0; c < 3; ++c) d += mix[r][c] * (t[c] - 128.0);
            out[r] = std::clamp(t[r] + strength * d, 0.0, 255.0);
        }
        return out;
    }
};

inline ModelTint model_tint(std::uint64_t model_id) {
    ModelTint m;
    const std::uint64_t h = mix64(0x7417ULL, model_id);
    for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < 3; ++c) m.mix[r][c] = 0.24 * (hash_unit(mix64(h, 10 + r * 3 + c)) - 0.5);
    }
    // Offset directions follow a spherical golden-angle spiral so that small
    // ids get well separated color casts.
    const double id = static_cast<double>(model_id);
    const double z = 1.0 - 2.0 * std::fmod((id + 0.5) * 0.6180339887498949, 1.0);
    const double rho = std::sqrt(std::max(0.0, 1.0 - z * z)), phi = id * 2.39996322972865332;
    const double radius = 18.0;
    m.offset = {radius * rho * std::cos(phi), radius * rho * std::sin(phi), radius * z};
    return m;
}

// Oriented sinusoidal grating with per-channel gains; amplitude in gray levels
// at strength 1.
struct ModelTexture {
    double angle = 0.0;
    double wavelength = 8.0;
    double phase = 0.0;
    Rgb gain{1, 1, 1};
    double amplitude = 9.0;

    double value(int x, int y) const {
        const double u = x * std::cos(angle) + y * std::sin(angle);
        return std::sin(2.0 * std::numbers::pi * u / wavelength + phase);
    }
};

inline ModelTexture model_texture(std::uint64_t model_id) {
    ModelTexture t;
    const std::uint64_t h = mix64(0x7e47ULL, model_id);
    // Spread orientations by the golden angle so small ids stay well apart.
    t.angle = std::fmod(static_cast<double>(model_id) * 2.39996322972865332 + 0.3 * hash_unit(mix64(h, 1)), std::numbers::pi);
    t.wavelength = 5.0 + 7.0 * hash_unit(mix64(h, 2));
    t.phase = 2.0 * std::numbers::pi * hash_unit(mix64(h, 3));
    for (int c = 0; c < 3; ++c) t.gain[c] = 0.5 + hash_unit(mix64(h, 4 + c));
    return t;
}

inline constexpr double kGlobalCast = 2.0 / 3.0;

// Global color cast, a fixed fraction of the tint offset.
inline Rgb global_cast(const SimEditorParams& params) {
    const ModelTint tint = model_tint(params.model_id);
    Rgb cast;
    for (int c = 0; c < 3; ++c) cast[c] = kGlobalCast * params.fingerprint_strength * tint.offset[c];
    return cast;
}

inline ImageBuffer sim_edit(const SimEditorParams& params, const ImageBuffer& img,
                            const std::vector<std::string>& tokens, std::uint64_t seed) {
    const int w = img.width(), h = img.height();
    const int grid = std::min({params.content_grid_size, w, h});
    const double strength = params.fingerprint_strength;
    const auto cx = cell_index(w, grid), cy = cell_index(h, grid);
    const auto cells = content_grid(img, grid);
    const auto target = target_field(tokens, grid);
    const ModelTint tint = model_tint(params.model_id);
    const ModelTexture tex = model_texture(params.model_id);

    std::vector<Rgb> blended = cells;
    for (std::size_t k = 0; k < cells.size(); ++k) {
        if (!target.mask[k]) continue;
        const Rgb t = tint.apply(target.color[k], strength);
        for (int c = 0; c < 3; ++c) blended[k][c] = cells[k][c] + (1.0 - params.contraction_factor) * (t[c] - cells[k][c]);
    }

    // Detail = input minus its block means; kept outside the edited cells.
    // The texture is centered per cell so it never moves a cell mean.
    const std::size_t n = img.pixel_count();
    std::vector<Rgb> tex_mean(cells.size(), Rgb{});
    std::vector<int> cell_pixels(cells.size(), 0);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const std::size_t k = static_cast<std::size_t>(cy[y]) * grid + cx[x];
            const double tv = tex.value(x, y);
            for (int c = 0; c < 3; ++c) tex_mean[k][c] += tex.gain[c] * tv;
            ++cell_pixels[k];
        }
    for (std::size_t k = 0; k < cells.size(); ++k)
        for (int c = 0; c < 3; ++c) tex_mean[k][c] /= std::max(cell_pixels[k], 1);

    std::vector<double> detail(n * 3, 0.0);
    std::vector<double> texture(n * 3, 0.0);
    double dot = 0.0, tex_norm2 = 0.0;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const std::size_t k = static_cast<std::size_t>(cy[y]) * grid + cx[x];
            const std::size_t p = static_cast<std::size_t>(y) * w + x;
            const double tv = tex.value(x, y);
            for (int c = 0; c < 3; ++c) {
                const double f = tex.gain[c] * tv - tex_mean[k][c];
                texture[3 * p + c] = f;
                if (target.mask[k]) continue;
                const double d = img.at(x, y, c) - cells[k][c];
                detail[3 * p + c] = d;
                dot += d * f;
                tex_norm2 += f * f;
            }
        }
    // Project the model's own texture out of the kept detail so repeated
    // edits do not stack it.
    const double coef = strength > 0.0 && tex_norm2 > 0.0 ? dot / tex_norm2 : 0.0;
    const double amp = strength * tex.amplitude;
    // An input that already carries this model's texture has converged; the
    // cast is only applied for the share of the texture still missing.
    const double carried = amp > 0.0 ? std::clamp(coef / amp, 0.0, 1.0) : 0.0;
    Rgb cast = global_cast(params);
    for (double& c : cast) c *= 1.0 - carried;

    ImageBuffer out(w, h);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const std::size_t k = static_cast<std::size_t>(cy[y]) * grid + cx[x];
            const std::size_t p = static_cast<std::size_t>(y) * w + x;
            for (int c = 0; c < 3; ++c) {
                const double noise =
                    params.noise_amplitude * (2.0 * hash_unit(mix64(seed, (p << 2) | static_cast<std::uint64_t>(c))) - 1.0);
                const double v = blended[k][c] + detail[3 * p + c] - coef * texture[3 * p + c] +
                                 amp * texture[3 * p + c] + noise + cast[c];
                out.at(x, y, c) = clamp_to_byte(v);
            }
        }
    return out;
}

class SimulatedEditor final : public Editor {
public:
    SimulatedEditor(std::string name, SimEditorParams params)
        : params_(params), info_{std::move(name), BackendKind::Simulated, params.describe()} {
        if (params_.fingerprint_strength < 0.0 || params_.fingerprint_strength > 1.0)
            throw ConfigError("fingerprint_strength must be in [0,1]");
        if (params_.contraction_factor <= 0.0 || params_.contraction_factor >= 1.0)
            throw ConfigError("contraction_factor must be in (0,1)");
        if (params_.content_grid_size < 1) throw ConfigError("content_grid_size must be >= 1");
    }

    const BackendInfo& info() const override { return info_; }
    const SimEditorParams& params() const { return params_; }

    ImageBuffer edit(const ImageBuffer& img, const std::string& prompt, std::uint64_t seed) const override {
        if (trim(prompt).empty()) throw PromptError("empty prompt");
        return sim_edit(params_, img, edit_tokens_from_prompt(prompt), seed);
    }

private:
    SimEditorParams params_;
    BackendInfo info_;
};

// ---------------------------------------------------------------------------
// Simulated captioner

struct KnownPattern {
    std::vector<std::string> tokens;  // canonical order

    std::string caption() const {
        std::string s;
        for (const auto& t : tokens) s += (s.empty() ? "" : ", ") + t;
        return s;
    }
};

inline const std::vector<KnownPattern>& known_patterns() {
    static const std::vector<KnownPattern> p = [] {
        const std::vector<std::string> raw = {
            "cat meadow",  "dog beach",   "bird sunset", "car night",   "boat beach",  "house snow",
            "tree sunset", "flower meadow", "horse snow", "person night", "cat snow",  "dog meadow",
        };
        std::vector<KnownPattern> out;
        for (const auto& r : raw) out.push_back({canonical_tokens(r)});
        return out;
    }();
    return p;
}

inline constexpr const char* kUnknownCaption = "unknown scene";

struct PatternMatch {
    double correlation = 0.0;   // cosine of mid-gray-centered colors over the pattern cells
    double mean_abs_error = 0.0;
    double score() const { return correlation - mean_abs_error / 128.0; }
};

inline PatternMatch match_pattern(const std::vector<Rgb>& cells, const TargetField& t) {
    double dot = 0.0, na = 0.0, nb = 0.0, err = 0.0;
    std::size_t count = 0;
    for (std::size_t k = 0; k < cells.size(); ++k) {
        if (!t.mask[k]) continue;
        for (int c = 0; c < 3; ++c) {
            const double a = cells[k][c] - 128.0, b = t.color[k][c] - 128.0;
            dot += a * b;
            na += a * a;
            nb += b * b;
            err += std::abs(cells[k][c] - t.color[k][c]);
        }
        ++count;
    }
    PatternMatch m;
    if (count == 0) return m;
    m.correlation = na > 0.0 && nb > 0.0 ? dot / std::sqrt(na * nb) : 0.0;
    m.mean_abs_error = err / (3.0 * count);
    return m;
}

class SimulatedCaptioner final : public Captioner {
public:
    // Score threshold below which the caption is "unknown scene".
    static constexpr double kDefaultThreshold = 0.55;

    explicit SimulatedCaptioner(std::string name = "sim-captioner", double threshold = kDefaultThreshold,
                                int grid = 16)
        : info_{std::move(name), BackendKind::Simulated,
                "sim/v1 threshold=" + format_g9(threshold) + " grid=" + std::to_string(grid)},
          threshold_(threshold),
          grid_(grid) {}

    const BackendInfo& info() const override { return info_; }

    // Best-scoring known pattern (ties go to the earlier pattern).
    std::pair<const KnownPattern*, double> best_match(const ImageBuffer& img) const {
        const int grid = std::min({grid_, img.width(), img.height()});
        const auto cells = content_grid(img, grid);
        const KnownPattern* best = nullptr;
        double best_score = -1e300;
        for (const auto& p : known_patterns()) {
            const double s = match_pattern(cells, target_field(p.tokens, grid)).score();
            if (s > best_score) {
                best_score = s;
                best = &p;
            }
        }
        return {best, best_score};
    }

    std::string caption(const ImageBuffer& img) const override {
        const auto [p, score] = best_match(img);
        return p != nullptr && score >= threshold_ ? p->caption() : kUnknownCaption;
    }

private:
    BackendInfo info_;
    double threshold_;
    int grid_;
};

// ---------------------------------------------------------------------------
// Simulated embedder

// Semantic space: 4x4 luma grid followed by the 4x4 grid of RGB means, all
// mapped to [-1,1], L2-normalized (64 dims). Perceptual space: the offline
// Laplacian-pyramid tile features.
inline std::vector<double> semantic_embedding(const ImageBuffer& img) {
    constexpr int g = 4;
    const auto cells = content_grid(img, std::min({g, img.width(), img.height()}));
    std::vector<double> v(64, 0.0);
    const int m = static_cast<int>(std::lround(std::sqrt(static_cast<double>(cells.size()))));
    for (int i = 0; i < m * m; ++i) {
        const Rgb& c = cells[i];
        v[i] = (bt601_luma(c[0], c[1], c[2]) - 127.5) / 127.5;
        for (int ch = 0; ch < 3; ++ch) v[16 + 3 * i + ch] = (c[ch] - 127.5) / 127.5;
    }
    double n = 0.0;
    for (double x : v) n += x * x;
    n = std::sqrt(n);
    if (n > 1e-12) {
        for (double& x : v) x /= n;
    } else {
        std::fill(v.begin(), v.end(), 0.0);
        v[0] = 1.0;
    }
    return v;
}

class SimulatedEmbedder final : public Embedder {
public:
    explicit SimulatedEmbedder(std::string name = "sim-embedder")
        : info_{std::move(name), BackendKind::Simulated, "sim/v1 semantic=grid4 perceptual=lap3"} {}

    const BackendInfo& info() const override { return info_; }

    EmbeddingVector embed(const ImageBuffer& img, EmbeddingSpace space) const override {
        if (space == EmbeddingSpace::Semantic) return {semantic_embedding(img), space};
        return {pyramid_features(img), space};
    }

private:
    BackendInfo info_;
};

}  // namespace edittrack::sim
