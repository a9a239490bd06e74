#pragma once

// Accuracy measures, confusion matrices, the four-group re-editing
// distribution report and feature-group / metric-count ablations.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "edittrack/classifier.hpp"
#include "edittrack/features.hpp"
#include "edittrack/verdict.hpp"

namespace edittrack {

inline void check_lengths(std::size_t a, std::size_t b) {
    if (a != b) throw LengthMismatch(std::to_string(a) + " verdicts vs " + std::to_string(b) + " labels");
}

// Detection treats EditedBy and EditedByUnseen alike.
inline bool detection_correct(const Verdict& v, int label) { return v.is_edited() == (label != 0); }

// Exact label match: NonEdited for negatives, EditedBy(i) for editor i,
// EditedByUnseen for positives of an editor outside the registry.
inline bool attribution_correct(const Verdict& v, int label) { return v.label() == label; }

inline double detection_accuracy(const std::vector<Verdict>& verdicts, const std::vector<int>& labels) {
    check_lengths(verdicts.size(), labels.size());
    if (verdicts.empty()) return 0.0;
    std::size_t ok = 0;
    for (std::size_t i = 0; i < verdicts.size(); ++i) ok += detection_correct(verdicts[i], labels[i]);
    return static_cast<double>(ok) / static_cast<double>(verdicts.size());
}

inline double attribution_accuracy(const std::vector<Verdict>& verdicts, const std::vector<int>& labels) {
    check_lengths(verdicts.size(), labels.size());
    for (int l : labels)
        if (l == 0) throw ContainsNegatives("attribution accuracy is defined over positive pairs only");
    if (verdicts.empty()) return 0.0;
    std::size_t ok = 0;
    for (std::size_t i = 0; i < verdicts.size(); ++i) ok += attribution_correct(verdicts[i], labels[i]);
    return static_cast<double>(ok) / static_cast<double>(verdicts.size());
}

// Unweighted mean over pairs.
inline double overall_accuracy(const std::vector<bool>& correct) {
    if (correct.empty()) return 0.0;
    return static_cast<double>(std::count(correct.begin(), correct.end(), true)) / static_cast<double>(correct.size());
}

// ---------------------------------------------------------------------------
// Confusion matrix

struct ConfusionMatrix {
    // Class order for rows and columns: non-edited, editor 1..n, [unseen].
    std::vector<int> classes;
    std::vector<std::vector<std::size_t>> counts;

    std::size_t index_of(int label) const {
        auto it = std::find(classes.begin(), classes.end(), label);
        if (it == classes.end()) throw PreconditionError("label " + label_to_string(label) + " not in confusion classes");
        return static_cast<std::size_t>(it - classes.begin());
    }

    std::size_t row_total(std::size_t r) const {
        std::size_t s = 0;
        for (auto c : counts[r]) s += c;
        return s;
    }

    // Row-normalized; rows without pairs stay zero.
    std::vector<std::vector<double>> fractions() const {
        std::vector<std::vector<double>> f(counts.size(), std::vector<double>(classes.size(), 0.0));
        for (std::size_t r = 0; r < counts.size(); ++r) {
            const auto t = row_total(r);
            if (t == 0) continue;
            for (std::size_t c = 0; c < classes.size(); ++c) f[r][c] = static_cast<double>(counts[r][c]) / static_cast<double>(t);
        }
        return f;
    }
};

inline ConfusionMatrix confusion_matrix(const std::vector<Verdict>& verdicts, const std::vector<int>& labels, int n,
                                        bool include_unseen) {
    check_lengths(verdicts.size(), labels.size());
    ConfusionMatrix m;
    for (int i = 0; i <= n; ++i) m.classes.push_back(i);
    if (include_unseen) m.classes.push_back(kUnseenLabel);
    m.counts.assign(m.classes.size(), std::vector<std::size_t>(m.classes.size(), 0));
    for (std::size_t i = 0; i < verdicts.size(); ++i) {
        const int pred = verdicts[i].label();
        if (!include_unseen && (labels[i] == kUnseenLabel || pred == kUnseenLabel))
            throw PreconditionError("unseen labels or verdicts need include_unseen");
        ++m.counts[m.index_of(labels[i])][m.index_of(pred)];
    }
    return m;
}

// ---------------------------------------------------------------------------
// Evaluation of a model over a feature table

struct EvalReport {
    struct Dataset {
        std::string name;
        std::size_t pairs = 0;
        std::size_t positives = 0;
        double detection = 0.0;
        double attribution = 0.0;  // exact-label accuracy over all pairs of the dataset
    };
    std::vector<Dataset> datasets;  // sorted by name
    double overall_detection = 0.0;
    double overall_attribution = 0.0;
    double positive_attribution = 0.0;  // over positive pairs only
    ConfusionMatrix confusion;
    std::vector<std::string> pair_ids;
    std::vector<int> labels;
    std::vector<Verdict> verdicts;
};

inline EvalReport evaluate_verdicts(const std::vector<std::string>& pair_ids, const std::vector<int>& labels,
                                    const std::vector<std::string>& datasets, std::vector<Verdict> verdicts, int n) {
    check_lengths(verdicts.size(), labels.size());
    check_lengths(datasets.size(), labels.size());
    EvalReport r;
    r.pair_ids = pair_ids;
    r.labels = labels;
    bool unseen = false;
    for (std::size_t i = 0; i < labels.size(); ++i) unseen = unseen || labels[i] == kUnseenLabel || verdicts[i].label() == kUnseenLabel;
    std::vector<bool> det, att, pos_att;
    std::map<std::string, std::vector<std::size_t>> by_set;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        det.push_back(detection_correct(verdicts[i], labels[i]));
        att.push_back(attribution_correct(verdicts[i], labels[i]));
        if (labels[i] != 0) pos_att.push_back(att.back());
        by_set[datasets[i]].push_back(i);
    }
    for (const auto& [name, idx] : by_set) {
        EvalReport::Dataset d{name, idx.size(), 0, 0.0, 0.0};
        std::vector<bool> dd, aa;
        for (auto i : idx) {
            dd.push_back(det[i]);
            aa.push_back(att[i]);
            d.positives += labels[i] != 0;
        }
        d.detection = overall_accuracy(dd);
        d.attribution = overall_accuracy(aa);
        r.datasets.push_back(d);
    }
    r.overall_detection = overall_accuracy(det);
    r.overall_attribution = overall_accuracy(att);
    r.positive_attribution = overall_accuracy(pos_att);
    r.confusion = confusion_matrix(verdicts, labels, n, unseen);
    r.verdicts = std::move(verdicts);
    return r;
}

// `datasets` maps pair_id to a dataset name; pairs not listed fall into
// "positive"/"negative".
inline EvalReport evaluate_bundle(const ModelBundle& b, const FeatureTable& t,
                                  const std::map<std::string, std::string>& datasets = {}) {
    if (t.registry_fingerprint != b.registry_fingerprint)
        throw FingerprintMismatch("feature table registry " + t.registry_fingerprint + " != model registry " + b.registry_fingerprint);
    if (t.n != b.n) throw DimensionMismatch("feature table n differs from model n");
    std::vector<std::string> ids, sets;
    std::vector<int> labels;
    std::vector<Verdict> verdicts;
    for (const auto& row : t.rows) {
        ids.push_back(row.pair_id);
        labels.push_back(row.label);
        auto it = datasets.find(row.pair_id);
        sets.push_back(it != datasets.end() ? it->second : (row.label == 0 ? "negative" : "positive"));
        verdicts.push_back(predict_bundle(b, row.values));
    }
    return evaluate_verdicts(ids, labels, sets, std::move(verdicts), t.n);
}

// ---------------------------------------------------------------------------
// Re-editing distribution report (four groups)

inline constexpr std::array<const char*, 4> kGroupNames = {"Positive-Base-Same", "Positive-Suspicious-Same",
                                                           "Positive-Base-Other", "Negative-Base-Same"};

struct ImagePair {
    std::string pair_id;
    ImageBuffer base;
    ImageBuffer suspicious;
};

struct DistributionReport {
    // groups[g][pair] = six metric values against the suspicious image.
    std::array<std::vector<MetricScores>, 4> groups;

    std::size_t size(int g) const { return groups[static_cast<std::size_t>(g)].size(); }

    double mean(int g, MetricId m) const {
        const auto& v = groups[static_cast<std::size_t>(g)];
        if (v.empty()) return 0.0;
        double s = 0.0;
        for (const auto& x : v) s += x[static_cast<std::size_t>(m)];
        return s / static_cast<double>(v.size());
    }

    double stddev(int g, MetricId m) const {
        const auto& v = groups[static_cast<std::size_t>(g)];
        if (v.size() < 2) return 0.0;
        const double mu = mean(g, m);
        double s = 0.0;
        for (const auto& x : v) s += (x[static_cast<std::size_t>(m)] - mu) * (x[static_cast<std::size_t>(m)] - mu);
        return std::sqrt(s / static_cast<double>(v.size() - 1));
    }

    // Same-model re-edits of base and suspicious are both more similar than
    // the other-model re-edit, which is more similar than the negative group.
    bool strictly_ordered(MetricId m) const {
        const double sign = higher_is_similar(m) ? 1.0 : -1.0;
        const double g1 = sign * mean(0, m), g2 = sign * mean(1, m), g3 = sign * mean(2, m), g4 = sign * mean(3, m);
        return std::min(g1, g2) > g3 && g3 > g4;
    }
};

// Re-edits with the proxy prompt p' (built from the two captions) for all
// four groups.
inline DistributionReport observation_report(const std::vector<ImagePair>& positives, const std::vector<ImagePair>& negatives,
                                             const BackendRegistry& registry, int same_model_index, int other_model_index,
                                             std::uint64_t seed, int side = kCanonicalSide) {
    const Editor& same = registry.editor(same_model_index);
    const Editor& other = registry.editor(other_model_index);
    const OrientationPatchExtractor extractor;
    const MetricBackends mb{registry.embedder(), extractor, side};
    auto prompt = [&](const ImagePair& p) {
        return build_proxy_prompt(registry.captioner().caption(p.base), registry.captioner().caption(p.suspicious)).rendered;
    };
    DistributionReport r;
    for (const auto& p : positives) {
        const auto pe = prompt(p);
        const auto s = image_signature(p.suspicious, mb);
        auto score = [&](const Editor& e, const ImageBuffer& img) {
            return detail::with_editor_name(e.info().name, [&] { return compare_signatures(image_signature(e.edit(img, pe, seed), mb), s); });
        };
        r.groups[0].push_back(score(same, p.base));
        r.groups[1].push_back(score(same, p.suspicious));
        r.groups[2].push_back(score(other, p.base));
    }
    for (const auto& p : negatives) {
        const auto pe = prompt(p);
        const auto s = image_signature(p.suspicious, mb);
        r.groups[3].push_back(detail::with_editor_name(same.info().name, [&] {
            return compare_signatures(image_signature(same.edit(p.base, pe, seed), mb), s);
        }));
    }
    return r;
}

// ---------------------------------------------------------------------------
// Ablations

struct AblationConfig {
    FeatureGroup group = FeatureGroup::Combined;
    int k = kMetricCount;
};

struct AblationRow {
    AblationConfig config;
    double overall_detection = 0.0;
    double overall_attribution = 0.0;
};

// Group sweep at k=6 followed by the metric-count sweep k=1..6 on the
// combined group.
inline std::vector<AblationConfig> default_ablation_grid() {
    std::vector<AblationConfig> g{{FeatureGroup::BaseOnly, 6}, {FeatureGroup::SuspiciousOnly, 6}};
    for (int k = 1; k <= kMetricCount; ++k) g.push_back({FeatureGroup::Combined, k});
    return g;
}

inline std::vector<AblationRow> ablation_run(const FeatureTable& train, const FeatureTable& test,
                                             const std::vector<AblationConfig>& grid, const TrainConfig& cfg) {
    std::vector<AblationRow> out;
    for (const auto& c : grid) {
        TrainOptions opt;
        opt.variant = Variant::Multiclass;
        opt.group = c.group;
        opt.k = c.k;
        opt.cfg = cfg;
        const auto bundle = train_bundle(train, opt);
        const auto rep = evaluate_bundle(bundle, test);
        out.push_back({c, rep.overall_detection, rep.overall_attribution});
    }
    return out;
}

// ---------------------------------------------------------------------------
// Report files

inline std::string class_name(int label) { return label == 0 ? "non-edited" : label_to_string(label); }

inline void write_confusion_csv(std::ostream& out, const ConfusionMatrix& m) {
    out << "true_label,pairs";
    for (int c : m.classes) out << ",pred_" << class_name(c);
    out << "\n";
    const auto f = m.fractions();
    for (std::size_t r = 0; r < m.classes.size(); ++r) {
        out << class_name(m.classes[r]) << ',' << m.row_total(r);
        for (double x : f[r]) out << ',' << format_g9(x);
        out << "\n";
    }
}

inline void write_predictions_csv(std::ostream& out, const EvalReport& r) {
    out << "pair_id,label,decision";
    const std::size_t width = r.verdicts.empty() ? 0 : r.verdicts.front().probabilities.size();
    for (std::size_t i = 0; i < width; ++i) out << ",p" << i;
    out << "\n";
    for (std::size_t i = 0; i < r.verdicts.size(); ++i) {
        out << r.pair_ids[i] << ',' << label_to_string(r.labels[i]) << ',' << r.verdicts[i].to_string();
        for (double p : r.verdicts[i].probabilities) out << ',' << format_g9(p);
        out << "\n";
    }
}

inline void write_eval_text(std::ostream& out, const EvalReport& r, const std::string& header) {
    out << header;
    out << "\n[datasets]\n";
    out << "dataset pairs positives detection attribution\n";
    for (const auto& d : r.datasets)
        out << d.name << ' ' << d.pairs << ' ' << d.positives << ' ' << format_g9(d.detection) << ' ' << format_g9(d.attribution)
            << "\n";
    out << "\n[overall]\n";
    out << "detection " << format_g9(r.overall_detection) << "\n";
    out << "attribution " << format_g9(r.overall_attribution) << "\n";
    out << "positive_attribution " << format_g9(r.positive_attribution) << "\n";
    out << "\n[confusion]\n";
    write_confusion_csv(out, r.confusion);
}

inline void write_distributions_csv(std::ostream& out, const DistributionReport& r) {
    out << "group,pair_index,metric,value\n";
    for (std::size_t g = 0; g < 4; ++g)
        for (std::size_t i = 0; i < r.groups[g].size(); ++i)
            for (int m = 0; m < kMetricCount; ++m)
                out << kGroupNames[g] << ',' << i << ',' << kMetricNames[static_cast<std::size_t>(m)] << ','
                    << format_g9(r.groups[g][i][static_cast<std::size_t>(m)]) << "\n";
}

inline void write_distribution_text(std::ostream& out, const DistributionReport& r) {
    out << "[distributions]\n";
    out << "metric group count mean std\n";
    for (int m = 0; m < kMetricCount; ++m)
        for (int g = 0; g < 4; ++g)
            out << kMetricNames[static_cast<std::size_t>(m)] << ' ' << kGroupNames[static_cast<std::size_t>(g)] << ' ' << r.size(g)
                << ' ' << format_g9(r.mean(g, static_cast<MetricId>(m))) << ' ' << format_g9(r.stddev(g, static_cast<MetricId>(m)))
                << "\n";
    out << "\n[ordering]\n";
    for (int m = 0; m < kMetricCount; ++m)
        out << kMetricNames[static_cast<std::size_t>(m)] << ' '
            << (r.strictly_ordered(static_cast<MetricId>(m)) ? "strict" : "not-strict") << "\n";
}

inline void write_ablation_csv(std::ostream& out, const std::vector<AblationRow>& rows) {
    out << "group,k,overall_detection,overall_attribution\n";
    for (const auto& r : rows)
        out << to_string(r.config.group) << ',' << r.config.k << ',' << format_g9(r.overall_detection) << ','
            << format_g9(r.overall_attribution) << "\n";
}

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out << text;
    if (!out) throw IoError("write failed: " + path.string());
}

template <typename F>
void write_with(const std::filesystem::path& path, F&& f) {
    std::ostringstream os;
    f(os);
    write_text_file(path, os.str());
}

}  // namespace edittrack
