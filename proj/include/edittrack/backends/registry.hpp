#pragma once

// Ordered set of candidate editors plus the captioner and embedder. The
// editor order fixes the feature layout, so it is part of the fingerprint.
//
// Config file format (one `[section]` per handle, `key = value` lines,
// `#` comments):
//
//   [editor]
//   name = sim-1
//   kind = simulated            # or: remote
//   model_id = 1                # simulated only
//   fingerprint_strength = 1.0
//   contraction_factor = 0.15
//   content_grid_size = 16
//   noise_amplitude = 2
//
//   [editor]
//   name = step-edit
//   kind = remote
//   endpoint = http://127.0.0.1:8080
//   version = 2025-01
//   retries = 2
//   timeout_ms = 60000
//   max_in_flight = 4
//
//   [captioner]   (same keys; simulated accepts `threshold`)
//   [embedder]

#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "edittrack/backends/backend.hpp"
#include "edittrack/backends/remote.hpp"
#include "edittrack/backends/simulated.hpp"
#include "edittrack/util.hpp"

namespace edittrack {

class BackendRegistry {
public:
    BackendRegistry(std::vector<std::shared_ptr<const Editor>> editors, std::shared_ptr<const Captioner> captioner,
                    std::shared_ptr<const Embedder> embedder)
        : editors_(std::move(editors)), captioner_(std::move(captioner)), embedder_(std::move(embedder)) {
        if (editors_.empty()) throw ConfigError("registry needs at least one editor");
        if (!captioner_ || !embedder_) throw ConfigError("registry needs a captioner and an embedder");
        std::set<std::string> names;
        for (const auto& e : editors_)
            if (!names.insert(e->info().name).second) throw ConfigError("duplicate editor name '" + e->info().name + "'");
        fingerprint_ = compute_fingerprint();
    }

    int size() const { return static_cast<int>(editors_.size()); }
    // 1-based, matching manifest labels.
    const Editor& editor(int index) const { return *editors_.at(static_cast<std::size_t>(index - 1)); }
    const std::vector<std::shared_ptr<const Editor>>& editors() const { return editors_; }
    const Captioner& captioner() const { return *captioner_; }
    const Embedder& embedder() const { return *embedder_; }
    const std::string& fingerprint() const { return fingerprint_; }

    // Registry with only the listed 1-based editors, in the given order.
    BackendRegistry subset(const std::vector<int>& indices) const {
        std::vector<std::shared_ptr<const Editor>> picked;
        for (int i : indices) picked.push_back(editors_.at(static_cast<std::size_t>(i - 1)));
        return BackendRegistry(std::move(picked), captioner_, embedder_);
    }

private:
    std::string compute_fingerprint() const {
        Fnv1a h;
        auto add = [&h](const char* role, const BackendInfo& info) {
            h.update(role).update("|").update(info.name).update("|");
            h.update(info.kind == BackendKind::Remote ? "remote" : "simulated").update("|");
            h.update(info.version).update("\n");
        };
        for (const auto& e : editors_) add("editor", e->info());
        add("captioner", captioner_->info());
        add("embedder", embedder_->info());
        return h.hex();
    }

    std::vector<std::shared_ptr<const Editor>> editors_;
    std::shared_ptr<const Captioner> captioner_;
    std::shared_ptr<const Embedder> embedder_;
    std::string fingerprint_;
};

struct RegistrySection {
    std::string role;  // editor | captioner | embedder
    std::size_t line = 0;
    std::map<std::string, std::string> values;

    bool has(const std::string& k) const { return values.contains(k); }
    std::string get(const std::string& k, const std::string& def = "") const {
        auto it = values.find(k);
        return it == values.end() ? def : it->second;
    }
    double number(const std::string& k, double def) const {
        if (!has(k)) return def;
        auto v = parse_double(values.at(k));
        if (!v) throw ParseError(line, "key '" + k + "' is not a number");
        return *v;
    }
    long long integer(const std::string& k, long long def) const {
        if (!has(k)) return def;
        auto v = parse_int(values.at(k));
        if (!v) throw ParseError(line, "key '" + k + "' is not an integer");
        return *v;
    }
};

inline std::vector<RegistrySection> parse_registry_sections(std::istream& in) {
    std::vector<RegistrySection> out;
    std::string raw;
    std::size_t lineno = 0;
    while (std::getline(in, raw)) {
        ++lineno;
        std::string_view line = trim(raw);
        if (const auto hash = line.find('#'); hash != std::string_view::npos) line = trim(line.substr(0, hash));
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') throw ParseError(lineno, "unterminated section header");
            std::string role(trim(line.substr(1, line.size() - 2)));
            if (role != "editor" && role != "captioner" && role != "embedder")
                throw ParseError(lineno, "unknown section '" + role + "'");
            out.push_back({role, lineno, {}});
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) throw ParseError(lineno, "expected key = value");
        if (out.empty()) throw ParseError(lineno, "key outside of a section");
        std::string key(trim(line.substr(0, eq)));
        std::string value(trim(line.substr(eq + 1)));
        if (key.empty()) throw ParseError(lineno, "empty key");
        if (!out.back().values.emplace(key, value).second) throw ParseError(lineno, "duplicate key '" + key + "'");
    }
    return out;
}

inline void write_registry_sections(std::ostream& out, const std::vector<RegistrySection>& sections) {
    for (std::size_t i = 0; i < sections.size(); ++i) {
        out << (i ? "\n" : "") << '[' << sections[i].role << "]\n";
        for (const auto& [k, v] : sections[i].values) out << k << " = " << v << "\n";
    }
}

namespace detail {

inline BackendInfo section_info(const RegistrySection& s, BackendKind kind) {
    BackendInfo info{s.get("name"), kind, s.get("version", "unversioned")};
    if (info.name.empty()) throw ParseError(s.line, s.role + " section needs a name");
    return info;
}

inline RemoteConfig section_remote(const RegistrySection& s) {
    RemoteConfig cfg;
    cfg.endpoint = s.get("endpoint");
    if (cfg.endpoint.empty()) throw ParseError(s.line, "remote " + s.role + " needs an endpoint");
    cfg.retries = static_cast<int>(s.integer("retries", cfg.retries));
    cfg.timeout_ms = static_cast<int>(s.integer("timeout_ms", cfg.timeout_ms));
    cfg.max_in_flight = static_cast<int>(s.integer("max_in_flight", cfg.max_in_flight));
    return cfg;
}

inline BackendKind section_kind(const RegistrySection& s) {
    const auto k = s.get("kind", "simulated");
    if (k == "simulated") return BackendKind::Simulated;
    if (k == "remote") return BackendKind::Remote;
    throw ParseError(s.line, "unknown kind '" + k + "'");
}

}  // namespace detail

inline BackendRegistry build_registry(const std::vector<RegistrySection>& sections) {
    std::vector<std::shared_ptr<const Editor>> editors;
    std::shared_ptr<const Captioner> captioner;
    std::shared_ptr<const Embedder> embedder;
    for (const auto& s : sections) {
        const auto kind = detail::section_kind(s);
        try {
            if (s.role == "editor") {
                if (kind == BackendKind::Remote) {
                    editors.push_back(std::make_shared<RemoteEditor>(detail::section_info(s, kind), detail::section_remote(s)));
                } else {
                    sim::SimEditorParams p;
                    p.model_id = static_cast<std::uint64_t>(s.integer("model_id", static_cast<long long>(editors.size() + 1)));
                    p.fingerprint_strength = s.number("fingerprint_strength", p.fingerprint_strength);
                    p.contraction_factor = s.number("contraction_factor", p.contraction_factor);
                    p.content_grid_size = static_cast<int>(s.integer("content_grid_size", p.content_grid_size));
                    p.noise_amplitude = s.number("noise_amplitude", p.noise_amplitude);
                    editors.push_back(std::make_shared<sim::SimulatedEditor>(detail::section_info(s, kind).name, p));
                }
            } else if (s.role == "captioner") {
                if (captioner) throw ParseError(s.line, "more than one captioner");
                if (kind == BackendKind::Remote)
                    captioner = std::make_shared<RemoteCaptioner>(detail::section_info(s, kind), detail::section_remote(s));
                else
                    captioner = std::make_shared<sim::SimulatedCaptioner>(
                        detail::section_info(s, kind).name, s.number("threshold", sim::SimulatedCaptioner::kDefaultThreshold));
            } else {
                if (embedder) throw ParseError(s.line, "more than one embedder");
                if (kind == BackendKind::Remote)
                    embedder = std::make_shared<RemoteEmbedder>(detail::section_info(s, kind), detail::section_remote(s));
                else
                    embedder = std::make_shared<sim::SimulatedEmbedder>(detail::section_info(s, kind).name);
            }
        } catch (const ConfigError& e) {
            throw ParseError(s.line, e.what());
        }
    }
    if (!captioner) captioner = std::make_shared<sim::SimulatedCaptioner>();
    if (!embedder) embedder = std::make_shared<sim::SimulatedEmbedder>();
    return BackendRegistry(std::move(editors), std::move(captioner), std::move(embedder));
}

inline BackendRegistry load_registry(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open registry config " + path.string());
    return build_registry(parse_registry_sections(in));
}

inline BackendRegistry parse_registry(const std::string& text) {
    std::istringstream in(text);
    return build_registry(parse_registry_sections(in));
}

// Five simulated editors with heterogeneous strength, convergence and
// sampler noise.
inline std::vector<std::pair<std::string, sim::SimEditorParams>> default_sim_editors() {
    return {
        {"sim-1", {1, 1.00, 16, 0.10, 2.0}},
        {"sim-2", {2, 0.85, 16, 0.15, 3.0}},
        {"sim-3", {3, 0.90, 16, 0.20, 4.0}},
        {"sim-4", {4, 0.90, 16, 0.12, 6.0}},
        {"sim-5", {5, 0.80, 16, 0.25, 2.0}},
    };
}

inline std::string sim_registry_config(const std::vector<std::pair<std::string, sim::SimEditorParams>>& editors) {
    std::ostringstream os;
    os << "# simulated backend registry\n";
    for (const auto& [name, p] : editors) {
        os << "\n[editor]\nname = " << name << "\nkind = simulated\nmodel_id = " << p.model_id
           << "\nfingerprint_strength = " << format_g9(p.fingerprint_strength)
           << "\ncontraction_factor = " << format_g9(p.contraction_factor)
           << "\ncontent_grid_size = " << p.content_grid_size << "\nnoise_amplitude = " << format_g9(p.noise_amplitude)
           << "\n";
    }
    os << "\n[captioner]\nname = sim-captioner\nkind = simulated\n";
    os << "\n[embedder]\nname = sim-embedder\nkind = simulated\n";
    return os.str();
}

inline BackendRegistry default_sim_registry(int n = 5) {
    auto all = default_sim_editors();
    if (n < 1 || n > static_cast<int>(all.size())) throw ConfigError("default registry supports 1..5 editors");
    all.resize(static_cast<std::size_t>(n));
    return parse_registry(sim_registry_config(all));
}

}  // namespace edittrack
