#pragma once

// Re-editing and the 12n feature layout. For editor i the block is
//   [6 metrics(I_rb^i vs I_s), 6 metrics(I_rs^i vs I_s)]
// with metrics in canonical order, blocks in registry order.

#include <atomic>
#include <exception>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <shared_mutex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "edittrack/backends/registry.hpp"
#include "edittrack/image_io.hpp"
#include "edittrack/manifest.hpp"
#include "edittrack/metrics.hpp"
#include "edittrack/util.hpp"

namespace edittrack {

inline constexpr int kBlockWidth = 2 * kMetricCount;

struct ProxyPrompt {
    std::string base_caption;
    std::string suspicious_caption;
    std::string rendered;
};

inline ProxyPrompt build_proxy_prompt(const std::string& base_caption, const std::string& suspicious_caption) {
    if (base_caption.empty() || suspicious_caption.empty()) throw EmptyCaption("captions must be non-empty");
    return {base_caption, suspicious_caption,
            "Do the image editing task; original prompt: " + base_caption + ", editing prompt: " + suspicious_caption};
}

// The 2n re-edited images of one pair; index i-1 holds editor i.
struct ReEdits {
    ProxyPrompt prompt;
    std::vector<ImageBuffer> from_base;
    std::vector<ImageBuffer> from_suspicious;
};

inline std::uint64_t image_digest(const ImageBuffer& img) {
    return Fnv1a().update_u64(static_cast<std::uint64_t>(img.width())).update_u64(static_cast<std::uint64_t>(img.height()))
        .update(img.data()).digest();
}

// Re-edit cache keyed by (pair id, registry fingerprint, seed, image content).
// Always in memory; mirrored to `dir` when one is given. Concurrent readers,
// exclusive writers; disk entries are published by an atomic rename.
class ReEditCache {
public:
    ReEditCache() = default;
    explicit ReEditCache(std::filesystem::path dir) : dir_(std::move(dir)) { std::filesystem::create_directories(dir_); }

    static std::string key(const std::string& pair_id, const std::string& fingerprint, std::uint64_t seed,
                           const ImageBuffer& base, const ImageBuffer& suspicious) {
        return Fnv1a().update(pair_id).update("|").update(fingerprint).update_u64(seed)
            .update_u64(image_digest(base)).update_u64(image_digest(suspicious)).hex();
    }

    std::optional<ReEdits> get(const std::string& k, int n) const {
        {
            std::shared_lock lock(mutex_);
            if (auto it = memory_.find(k); it != memory_.end()) return it->second;
        }
        if (dir_.empty()) return std::nullopt;
        auto loaded = load_entry(dir_ / k, n);
        if (loaded) {
            std::unique_lock lock(mutex_);
            memory_.emplace(k, *loaded);
        }
        return loaded;
    }

    void put(const std::string& k, const ReEdits& r) {
        {
            std::unique_lock lock(mutex_);
            memory_.insert_or_assign(k, r);
        }
        if (!dir_.empty()) store_entry(k, r);
    }

    std::size_t size() const {
        std::shared_lock lock(mutex_);
        return memory_.size();
    }

private:
    static std::optional<ReEdits> load_entry(const std::filesystem::path& d, int n) {
        if (!std::filesystem::is_directory(d)) return std::nullopt;
        try {
            ReEdits r;
            std::ifstream in(d / "prompt.txt");
            std::string pb, ps;
            if (!std::getline(in, pb) || !std::getline(in, ps)) return std::nullopt;
            r.prompt = build_proxy_prompt(pb, ps);
            for (int i = 1; i <= n; ++i) {
                r.from_base.push_back(load_image(d / ("rb_" + std::to_string(i) + ".png")));
                r.from_suspicious.push_back(load_image(d / ("rs_" + std::to_string(i) + ".png")));
            }
            return r;
        } catch (const Error&) {
            return std::nullopt;  // unreadable entries are recomputed
        }
    }

    void store_entry(const std::string& k, const ReEdits& r) const {
        std::unique_lock lock(disk_mutex_);
        const auto final_dir = dir_ / k;
        if (std::filesystem::exists(final_dir)) return;
        const auto tmp = dir_ / (k + ".tmp");
        std::filesystem::remove_all(tmp);
        std::filesystem::create_directories(tmp);
        {
            std::ofstream out(tmp / "prompt.txt");
            out << r.prompt.base_caption << "\n" << r.prompt.suspicious_caption << "\n";
        }
        for (std::size_t i = 0; i < r.from_base.size(); ++i) {
            save_png(r.from_base[i], tmp / ("rb_" + std::to_string(i + 1) + ".png"));
            save_png(r.from_suspicious[i], tmp / ("rs_" + std::to_string(i + 1) + ".png"));
        }
        std::filesystem::rename(tmp, final_dir);
    }

    std::filesystem::path dir_;
    mutable std::shared_mutex mutex_;
    mutable std::mutex disk_mutex_;
    mutable std::map<std::string, ReEdits> memory_;
};

struct ExtractionOptions {
    std::uint64_t seed = 0;
    int side = kCanonicalSide;
    int jobs = 1;
    ReEditCache* cache = nullptr;
    const PatchExtractor* extractor = nullptr;  // default: orientation descriptors
};

namespace detail {

template <typename F>
auto with_editor_name(const std::string& name, F&& f) -> decltype(f()) {
    try {
        return f();
    } catch (const Error& e) {
        e.rethrow_with_prefix("editor '" + name + "': ");
        throw;  // not reached; the virtual call hides [[noreturn]] from the compiler
    }
}

}  // namespace detail

// Captions both images, builds the proxy prompt and re-edits both images
// with every editor. Either all 2n images are returned or an error is thrown.
inline ReEdits re_edit_images(const ImageBuffer& base, const ImageBuffer& suspicious, const BackendRegistry& registry,
                              std::uint64_t seed) {
    ReEdits r;
    r.prompt = build_proxy_prompt(registry.captioner().caption(base), registry.captioner().caption(suspicious));
    for (int i = 1; i <= registry.size(); ++i) {
        const Editor& e = registry.editor(i);
        detail::with_editor_name(e.info().name, [&] {
            r.from_base.push_back(e.edit(base, r.prompt.rendered, seed));
            r.from_suspicious.push_back(e.edit(suspicious, r.prompt.rendered, seed));
        });
    }
    return r;
}

inline ReEdits re_edit_pair(const std::string& pair_id, const ImageBuffer& base, const ImageBuffer& suspicious,
                            const BackendRegistry& registry, std::uint64_t seed, ReEditCache* cache = nullptr) {
    std::string k;
    if (cache) {
        k = ReEditCache::key(pair_id, registry.fingerprint(), seed, base, suspicious);
        if (auto hit = cache->get(k, registry.size())) return *hit;
    }
    auto r = re_edit_images(base, suspicious, registry, seed);
    if (cache) cache->put(k, r);
    return r;
}

using FeatureVector = std::vector<double>;

// Values are kept at float precision so that the 9-digit text form
// round-trips exactly.
inline double feature_precision(double v) { return static_cast<double>(static_cast<float>(v)); }

inline FeatureVector features_from_reedits(const ReEdits& r, const ImageBuffer& suspicious, const MetricBackends& mb) {
    const ImageSignature s = image_signature(suspicious, mb);
    FeatureVector v;
    v.reserve(r.from_base.size() * kBlockWidth);
    for (std::size_t i = 0; i < r.from_base.size(); ++i) {
        for (const auto* img : {&r.from_base[i], &r.from_suspicious[i]}) {
            const auto scores = compare_signatures(image_signature(*img, mb), s);
            for (double x : scores) {
                if (!std::isfinite(x)) throw BackendError("non-finite metric value");
                v.push_back(feature_precision(x));
            }
        }
    }
    return v;
}

inline FeatureVector extract_features(const std::string& pair_id, const ImageBuffer& base, const ImageBuffer& suspicious,
                                      const BackendRegistry& registry, const ExtractionOptions& opt = {}) {
    const OrientationPatchExtractor default_extractor;
    const MetricBackends mb{registry.embedder(), opt.extractor ? *opt.extractor : default_extractor, opt.side};
    const auto r = re_edit_pair(pair_id, base, suspicious, registry, opt.seed, opt.cache);
    return features_from_reedits(r, suspicious, mb);
}

struct FeatureRow {
    std::string pair_id;
    int label = 0;
    FeatureVector values;

    friend bool operator==(const FeatureRow&, const FeatureRow&) = default;
};

struct FeatureTable {
    std::string registry_fingerprint;
    int n = 0;
    std::uint64_t seed = 0;
    std::vector<FeatureRow> rows;

    int width() const { return n * kBlockWidth; }

    friend bool operator==(const FeatureTable&, const FeatureTable&) = default;
};

inline FeatureTable build_feature_table(const Manifest& manifest, const BackendRegistry& registry,
                                        const ExtractionOptions& opt = {}) {
    if (manifest.registry_fingerprint != registry.fingerprint())
        throw FingerprintMismatch("manifest registry " + manifest.registry_fingerprint + " != registry " +
                                  registry.fingerprint());
    FeatureTable table{registry.fingerprint(), registry.size(), opt.seed, {}};
    const std::size_t count = manifest.records.size();
    std::vector<FeatureVector> values(count);
    std::vector<std::exception_ptr> errors(count);
    std::atomic<std::size_t> next{0};
    std::atomic<bool> failed{false};
    auto worker = [&] {
        for (std::size_t i; !failed.load() && (i = next.fetch_add(1)) < count;) {
            const auto& rec = manifest.records[i];
            try {
                const auto base = load_image(manifest.resolve(rec.base_path));
                const auto susp = load_image(manifest.resolve(rec.suspicious_path));
                values[i] = extract_features(rec.pair_id, base, susp, registry, opt);
            } catch (...) {
                errors[i] = std::current_exception();
                failed.store(true);
            }
        }
    };
    const int jobs = std::max(1, std::min<int>(opt.jobs, static_cast<int>(std::max<std::size_t>(count, 1))));
    if (jobs == 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (int j = 0; j < jobs; ++j) pool.emplace_back(worker);
    }
    for (std::size_t i = 0; i < count; ++i) {
        if (!errors[i]) continue;
        try {
            std::rethrow_exception(errors[i]);
        } catch (const Error& e) {
            e.rethrow_with_prefix("pair '" + manifest.records[i].pair_id + "': ");
        }
    }
    for (std::size_t i = 0; i < count; ++i) {
        const auto& rec = manifest.records[i];
        table.rows.push_back({rec.pair_id, rec.label, std::move(values[i])});
    }
    return table;
}

// ---------------------------------------------------------------------------
// Slicing for ablations

enum class FeatureGroup { BaseOnly, SuspiciousOnly, Combined };

inline FeatureGroup parse_feature_group(const std::string& s) {
    if (s == "base") return FeatureGroup::BaseOnly;
    if (s == "suspicious") return FeatureGroup::SuspiciousOnly;
    if (s == "combined") return FeatureGroup::Combined;
    throw ConfigError("unknown feature group '" + s + "' (expected combined|base|suspicious)");
}

inline std::string to_string(FeatureGroup g) {
    switch (g) {
        case FeatureGroup::BaseOnly: return "base";
        case FeatureGroup::SuspiciousOnly: return "suspicious";
        case FeatureGroup::Combined: return "combined";
    }
    return "?";
}

inline int sliced_width(int n, FeatureGroup g, int k) { return n * k * (g == FeatureGroup::Combined ? 2 : 1); }

inline FeatureVector slice_features(const FeatureVector& v, FeatureGroup g, int k) {
    if (k < 1 || k > kMetricCount) throw PreconditionError("metrics-k must be in 1..6");
    if (v.size() % kBlockWidth != 0) throw DimensionMismatch("feature length is not a multiple of 12");
    FeatureVector out;
    for (std::size_t b = 0; b < v.size(); b += kBlockWidth) {
        if (g != FeatureGroup::SuspiciousOnly)
            for (int j = 0; j < k; ++j) out.push_back(v[b + j]);
        if (g != FeatureGroup::BaseOnly)
            for (int j = 0; j < k; ++j) out.push_back(v[b + kMetricCount + j]);
    }
    return out;
}

// Block i (1-based) of a full-layout vector.
inline FeatureVector feature_block(const FeatureVector& v, int i) {
    const auto start = static_cast<std::ptrdiff_t>(i - 1) * kBlockWidth;
    if (i < 1 || start + kBlockWidth > static_cast<std::ptrdiff_t>(v.size())) throw DimensionMismatch("no block " + std::to_string(i));
    return {v.begin() + start, v.begin() + start + kBlockWidth};
}

// ---------------------------------------------------------------------------
// Text form

inline void write_feature_table(std::ostream& out, const FeatureTable& t) {
    out << "!features registry=" << t.registry_fingerprint << " n=" << t.n << " k=6 layout=v1\n";
    out << "# seed=" << t.seed << "\n";
    for (const auto& r : t.rows) {
        out << r.pair_id << ',' << label_to_string(r.label);
        for (double x : r.values) out << ',' << format_g9(x);
        out << '\n';
    }
}

inline FeatureTable parse_feature_table(std::istream& in) {
    FeatureTable t;
    std::string line;
    std::size_t lineno = 0;
    bool header = false;
    std::set<std::string> ids;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (line.front() == '#') {
            if (line.starts_with("# seed="))
                if (auto s = parse_int(std::string_view(line).substr(7))) t.seed = static_cast<std::uint64_t>(*s);
            continue;
        }
        if (!header) {
            if (!line.starts_with("!features ")) throw ParseError(lineno, "expected '!features' header");
            std::map<std::string, std::string> kv;
            for (auto tok : split(std::string_view(line).substr(10), ' ')) {
                if (tok.empty()) continue;
                const auto eq = tok.find('=');
                if (eq == std::string_view::npos) throw ParseError(lineno, "malformed header field");
                kv[std::string(tok.substr(0, eq))] = std::string(tok.substr(eq + 1));
            }
            if (kv["layout"] != "v1" || kv["k"] != "6") throw ParseError(lineno, "unsupported feature layout");
            const auto n = parse_int(kv["n"]);
            if (!n || *n < 1) throw ParseError(lineno, "bad n in header");
            t.n = static_cast<int>(*n);
            t.registry_fingerprint = kv["registry"];
            if (t.registry_fingerprint.empty()) throw ParseError(lineno, "header lacks registry");
            header = true;
            continue;
        }
        const auto fields = split(line, ',');
        if (fields.size() != static_cast<std::size_t>(2 + t.width()))
            throw ParseError(lineno, "expected " + std::to_string(2 + t.width()) + " fields, got " + std::to_string(fields.size()));
        FeatureRow r;
        r.pair_id = std::string(fields[0]);
        if (r.pair_id.empty()) throw ParseError(lineno, "empty pair_id");
        if (!ids.insert(r.pair_id).second) throw ParseError(lineno, "duplicate pair_id '" + r.pair_id + "'");
        if (fields[1] == "unseen") {
            r.label = kUnseenLabel;
        } else {
            const auto l = parse_int(fields[1]);
            if (!l || *l < 0 || *l > t.n) throw ParseError(lineno, "label out of range");
            r.label = static_cast<int>(*l);
        }
        for (std::size_t j = 2; j < fields.size(); ++j) {
            const auto v = parse_double(fields[j]);
            if (!v || !std::isfinite(*v)) throw ParseError(lineno, "bad feature value");
            r.values.push_back(feature_precision(*v));
        }
        t.rows.push_back(std::move(r));
    }
    if (!header) throw ParseError(0, "empty feature table");
    return t;
}

inline void save_feature_table(const FeatureTable& t, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    write_feature_table(out, t);
    if (!out) throw IoError("write failed: " + path.string());
}

inline FeatureTable load_feature_table(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open feature table " + path.string());
    return parse_feature_table(in);
}

}  // namespace edittrack
