#pragma once

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "edittrack/error.hpp"
#include "edittrack/util.hpp"

namespace edittrack {

// Label for positives produced by an editor outside the registry. Only valid
// in evaluation manifests; training rejects it.
inline constexpr int kUnseenLabel = -1;

struct PairRecord {
    std::string pair_id;
    std::string base_path;
    std::string suspicious_path;
    int label = 0;  // 0 = not edited, i in 1..n = edited by editor i
    std::string source_tag;

    bool is_positive() const { return label != 0; }

    friend bool operator==(const PairRecord&, const PairRecord&) = default;
};

inline std::string label_to_string(int label) {
    return label == kUnseenLabel ? std::string("unseen") : std::to_string(label);
}

struct Manifest {
    std::vector<PairRecord> records;
    std::string registry_fingerprint;
    // Comment lines, each anchored before the record with the given index.
    std::vector<std::pair<std::size_t, std::string>> comments;
    // Directory relative paths are resolved against; not serialized.
    std::filesystem::path base_dir;

    std::filesystem::path resolve(const std::string& p) const {
        std::filesystem::path path(p);
        return path.is_absolute() || base_dir.empty() ? path : base_dir / path;
    }

    bool operator==(const Manifest& o) const {
        return records == o.records && registry_fingerprint == o.registry_fingerprint &&
               comments == o.comments;
    }
};

struct ManifestOptions {
    // Highest label accepted (the registry's n); negative disables the check.
    int max_label = -1;
    bool allow_unseen = true;
    bool check_files = true;
};

inline Manifest parse_manifest(std::istream& in, const ManifestOptions& opt = {}) {
    Manifest m;
    std::string line;
    std::size_t lineno = 0;
    bool have_registry = false;
    std::set<std::string> ids;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (line[0] == '#') {
            m.comments.emplace_back(m.records.size(), line);
            continue;
        }
        if (!have_registry) {
            constexpr std::string_view key = "!registry=";
            if (line.rfind(key, 0) != 0) throw ParseError(lineno, "expected '!registry=<fingerprint>'");
            m.registry_fingerprint = line.substr(key.size());
            if (m.registry_fingerprint.empty()) throw ParseError(lineno, "empty registry fingerprint");
            have_registry = true;
            continue;
        }
        const auto fields = split(line, '\t');
        if (fields.size() != 5)
            throw ParseError(lineno, "expected 5 tab-separated fields, got " + std::to_string(fields.size()));
        PairRecord r;
        r.pair_id = fields[0];
        r.base_path = fields[1];
        r.suspicious_path = fields[2];
        r.source_tag = fields[4];
        if (r.pair_id.empty()) throw ParseError(lineno, "empty pair_id");
        if (r.base_path.empty() || r.suspicious_path.empty()) throw ParseError(lineno, "empty image path");
        if (fields[3] == "unseen") {
            if (!opt.allow_unseen) throw ParseError(lineno, "label 'unseen' not allowed here");
            r.label = kUnseenLabel;
        } else {
            const auto v = parse_int(fields[3]);
            if (!v || *v < 0) throw ParseError(lineno, "invalid label '" + std::string(fields[3]) + "'");
            if (opt.max_label >= 0 && *v > opt.max_label)
                throw ParseError(lineno, "label " + std::to_string(*v) + " exceeds registry size " +
                                             std::to_string(opt.max_label));
            r.label = static_cast<int>(*v);
        }
        if (!ids.insert(r.pair_id).second) throw ParseError(lineno, "duplicate pair_id '" + r.pair_id + "'");
        m.records.push_back(std::move(r));
    }
    if (!have_registry && m.records.empty()) throw ParseError(0, "empty manifest");
    if (m.records.empty()) throw ParseError(0, "empty manifest");
    return m;
}

inline Manifest load_manifest(const std::filesystem::path& path, const ManifestOptions& opt = {}) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open manifest " + path.string());
    Manifest m = parse_manifest(in, opt);
    m.base_dir = path.parent_path();
    if (opt.check_files) {
        std::string missing;
        for (const auto& r : m.records)
            for (const auto* p : {&r.base_path, &r.suspicious_path})
                if (!std::filesystem::exists(m.resolve(*p))) missing += (missing.empty() ? "" : ", ") + *p;
        if (!missing.empty()) throw MissingFileError("missing image files: " + missing);
    }
    return m;
}

inline void write_manifest(std::ostream& out, const Manifest& m) {
    std::size_t ci = 0;
    // Comments anchored before the first record precede the registry line.
    while (ci < m.comments.size() && m.comments[ci].first == 0) out << m.comments[ci++].second << '\n';
    out << "!registry=" << m.registry_fingerprint << '\n';
    for (std::size_t i = 0; i < m.records.size(); ++i) {
        while (ci < m.comments.size() && m.comments[ci].first == i) out << m.comments[ci++].second << '\n';
        const auto& r = m.records[i];
        out << r.pair_id << '\t' << r.base_path << '\t' << r.suspicious_path << '\t' << label_to_string(r.label)
            << '\t' << r.source_tag << '\n';
    }
    for (; ci < m.comments.size(); ++ci) out << m.comments[ci].second << '\n';
}

inline void save_manifest(const Manifest& m, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write manifest " + path.string());
    write_manifest(out, m);
}

}  // namespace edittrack
