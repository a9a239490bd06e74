#pragma once

// Pipeline stages behind the CLI. Each stage writes one artifact and appends
// a line to `run.log` next to it.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "edittrack/classifier.hpp"
#include "edittrack/eval.hpp"
#include "edittrack/features.hpp"
#include "edittrack/simulate.hpp"

namespace edittrack {

inline constexpr const char* kToolVersion = "edittrack 0.1.0";

inline std::string file_digest(const std::filesystem::path& p) {
    if (!std::filesystem::exists(p)) throw IoError("missing input " + p.string());
    const auto bytes = read_file_bytes(p);
    return Fnv1a().update(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size())).hex();
}

struct RunLogEntry {
    std::string command;
    std::uint64_t seed = 0;
    std::string registry;
    std::vector<std::filesystem::path> inputs;
    std::filesystem::path artifact;
};

inline void append_run_log(const RunLogEntry& e) {
    const auto dir = e.artifact.has_parent_path() ? e.artifact.parent_path() : std::filesystem::path(".");
    std::ofstream log(dir / "run.log", std::ios::app | std::ios::binary);
    if (!log) throw IoError("cannot append to " + (dir / "run.log").string());
    log << kToolVersion << " cmd=" << e.command << " seed=" << e.seed << " registry=" << (e.registry.empty() ? "-" : e.registry);
    log << " inputs=";
    for (std::size_t i = 0; i < e.inputs.size(); ++i)
        log << (i ? "," : "") << e.inputs[i].filename().string() << ':' << file_digest(e.inputs[i]);
    if (e.inputs.empty()) log << '-';
    log << " artifact=" << e.artifact.string() << "\n";
}

inline void ensure_parent(const std::filesystem::path& p) {
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
}

inline std::string artifact_stamp(const std::string& registry, std::uint64_t seed) {
    return "# registry=" + registry + " seed=" + std::to_string(seed) + "\n";
}

// ---------------------------------------------------------------------------
// simulate

struct SimulateArgs {
    std::optional<std::filesystem::path> registry;  // generators; default: five simulated editors
    std::filesystem::path out;
    sim::SimulationSpec spec;
};

// Writes images, manifest.tsv and registry.cfg (the editors the labels
// refer to, i.e. the generators minus the unseen ones).
inline Manifest cmd_simulate(const SimulateArgs& a) {
    if (a.spec.positives_per_model < 1 || a.spec.negatives_per_mode < 1) throw PreconditionError("counts must be >= 1");
    std::string text;
    if (a.registry) {
        std::ifstream in(*a.registry);
        if (!in) throw IoError("cannot open registry config " + a.registry->string());
        std::ostringstream os;
        os << in.rdbuf();
        text = os.str();
    } else {
        text = sim_registry_config(default_sim_editors());
    }
    std::istringstream in(text);
    const auto sections = parse_registry_sections(in);
    const auto generators = build_registry(sections);
    for (int u : a.spec.unseen_editors)
        if (u < 1 || u > generators.size()) throw PreconditionError("unseen editor index out of range");
    if (static_cast<int>(a.spec.unseen_editors.size()) >= generators.size())
        throw PreconditionError("at least one editor must stay seen");

    std::vector<RegistrySection> seen;
    int editor = 0;
    for (const auto& s : sections) {
        if (s.role == "editor" && a.spec.unseen_editors.contains(++editor)) continue;
        seen.push_back(s);
    }
    std::filesystem::create_directories(a.out);
    write_with(a.out / "registry.cfg", [&](std::ostream& os) { write_registry_sections(os, seen); });

    auto m = sim::write_simulated_dataset(generators, a.spec, a.out);
    append_run_log({"simulate", a.spec.seed, m.registry_fingerprint, {}, a.out / "manifest.tsv"});
    return m;
}

// ---------------------------------------------------------------------------
// extract

struct ExtractArgs {
    std::filesystem::path registry;
    std::filesystem::path manifest;
    std::filesystem::path out;
    std::optional<std::filesystem::path> cache_dir;
    std::uint64_t seed = 0;
    int jobs = 1;
    int side = kCanonicalSide;
};

inline FeatureTable cmd_extract(const ExtractArgs& a) {
    const auto registry = load_registry(a.registry);
    const auto manifest = load_manifest(a.manifest, {.max_label = registry.size()});
    std::optional<ReEditCache> cache;
    if (a.cache_dir) cache.emplace(*a.cache_dir);
    ExtractionOptions opt;
    opt.seed = a.seed;
    opt.side = a.side;
    opt.jobs = a.jobs;
    opt.cache = cache ? &*cache : nullptr;
    auto table = build_feature_table(manifest, registry, opt);
    ensure_parent(a.out);
    save_feature_table(table, a.out);
    append_run_log({"extract", a.seed, table.registry_fingerprint, {a.registry, a.manifest}, a.out});
    return table;
}

// ---------------------------------------------------------------------------
// train / calibrate

struct TrainArgs {
    std::filesystem::path features;
    std::filesystem::path out;
    TrainOptions options;
};

inline ModelBundle cmd_train(const TrainArgs& a) {
    const auto table = load_feature_table(a.features);
    auto bundle = train_bundle(table, a.options);
    ensure_parent(a.out);
    save_bundle(bundle, a.out);
    append_run_log({"train", bundle.seed, bundle.registry_fingerprint, {a.features}, a.out});
    return bundle;
}

struct CalibrateArgs {
    std::filesystem::path model;
    std::filesystem::path features;  // the table the model was trained on
    std::filesystem::path out;
    double target = 0.9;
};

// Calibrates on the negatives the model withheld during training.
inline ModelBundle cmd_calibrate(const CalibrateArgs& a) {
    auto bundle = load_bundle(a.model);
    const auto table = load_feature_table(a.features);
    if (table.registry_fingerprint != bundle.registry_fingerprint)
        throw FingerprintMismatch("feature table registry " + table.registry_fingerprint + " != model registry " +
                                  bundle.registry_fingerprint);
    if (!(bundle.holdout > 0.0)) throw PreconditionError("model was trained without held-out negatives (use --holdout)");
    std::vector<FeatureRow> negatives;
    for (auto i : holdout_negative_rows(table, bundle.holdout, bundle.seed)) negatives.push_back(table.rows[i]);
    bundle.unseen = calibrate_unseen(bundle, negatives, a.target);
    ensure_parent(a.out);
    save_bundle(bundle, a.out);
    append_run_log({"calibrate", bundle.seed, bundle.registry_fingerprint, {a.model, a.features}, a.out});
    return bundle;
}

// ---------------------------------------------------------------------------
// evaluate

struct EvaluateArgs {
    std::filesystem::path model;
    std::filesystem::path features;
    std::optional<std::filesystem::path> manifest;  // source tags name the datasets
    std::filesystem::path out;                      // directory
};

// Writes report.txt plus confusion.csv and predictions.csv beside it.
inline EvalReport cmd_evaluate(const EvaluateArgs& a) {
    const auto bundle = load_bundle(a.model);
    const auto table = load_feature_table(a.features);
    std::map<std::string, std::string> sets;
    std::vector<std::filesystem::path> inputs{a.model, a.features};
    if (a.manifest) {
        const auto m = load_manifest(*a.manifest, {.check_files = false});
        if (m.registry_fingerprint != table.registry_fingerprint)
            throw FingerprintMismatch("manifest registry " + m.registry_fingerprint + " != feature registry " + table.registry_fingerprint);
        for (const auto& r : m.records) sets[r.pair_id] = r.source_tag.empty() ? (r.label == 0 ? "negative" : "positive") : r.source_tag;
        inputs.push_back(*a.manifest);
    }
    const auto rep = evaluate_bundle(bundle, table, sets);
    std::filesystem::create_directories(a.out);
    const auto stamp = artifact_stamp(bundle.registry_fingerprint, bundle.seed);
    std::ostringstream header;
    header << "[run]\n" << "registry " << bundle.registry_fingerprint << "\nseed " << bundle.seed << "\nfeature_seed " << table.seed
           << "\nvariant " << to_string(bundle.variant) << "\ngroup " << to_string(bundle.group) << "\nk " << bundle.k << "\n";
    if (bundle.unseen) header << "tau " << format_g9(bundle.unseen->tau) << "\n";
    write_with(a.out / "report.txt", [&](std::ostream& os) { write_eval_text(os, rep, header.str()); });
    write_with(a.out / "confusion.csv", [&](std::ostream& os) {
        os << stamp;
        write_confusion_csv(os, rep.confusion);
    });
    write_with(a.out / "predictions.csv", [&](std::ostream& os) {
        os << stamp;
        write_predictions_csv(os, rep);
    });
    append_run_log({"evaluate", bundle.seed, bundle.registry_fingerprint, inputs, a.out / "report.txt"});
    return rep;
}

// ---------------------------------------------------------------------------
// detect

struct DetectArgs {
    std::filesystem::path registry;
    std::filesystem::path model;
    std::filesystem::path base;
    std::filesystem::path suspicious;
    std::optional<std::filesystem::path> out;
    std::uint64_t seed = 0;
    int side = kCanonicalSide;
};

inline void write_verdict(std::ostream& out, const Verdict& v) {
    out << "decision " << v.to_string() << "\n";
    for (std::size_t i = 0; i < v.probabilities.size(); ++i) out << "p" << i << ' ' << format_g9(v.probabilities[i]) << "\n";
}

inline Verdict cmd_detect(const DetectArgs& a, std::ostream& out) {
    const auto registry = load_registry(a.registry);
    const auto bundle = load_bundle(a.model);
    if (registry.fingerprint() != bundle.registry_fingerprint)
        throw FingerprintMismatch("registry " + registry.fingerprint() + " != model registry " + bundle.registry_fingerprint);
    const auto base = load_image(a.base);
    const auto susp = load_image(a.suspicious);
    const auto v = extract_features(a.base.filename().string(), base, susp, registry, {.seed = a.seed, .side = a.side});
    const auto verdict = predict_bundle(bundle, v);
    write_verdict(out, verdict);
    if (a.out) {
        ensure_parent(*a.out);
        write_with(*a.out, [&](std::ostream& os) {
            os << artifact_stamp(bundle.registry_fingerprint, a.seed);
            write_verdict(os, verdict);
        });
        append_run_log({"detect", a.seed, bundle.registry_fingerprint, {a.model, a.base, a.suspicious}, *a.out});
    }
    return verdict;
}

// ---------------------------------------------------------------------------
// observe

struct ObserveArgs {
    std::filesystem::path registry;
    std::filesystem::path manifest;
    std::filesystem::path out;  // directory
    int same = 1;
    int other = 2;
    int positives = 50;
    int negatives = 100;
    std::uint64_t seed = 0;
    int side = kCanonicalSide;
};

// Uses the first `positives` pairs labeled `same` and the first `negatives`
// negatives of the manifest. Writes distributions.csv and distributions.txt.
inline DistributionReport cmd_observe(const ObserveArgs& a) {
    const auto registry = load_registry(a.registry);
    const auto manifest = load_manifest(a.manifest, {.max_label = registry.size()});
    if (manifest.registry_fingerprint != registry.fingerprint())
        throw FingerprintMismatch("manifest registry " + manifest.registry_fingerprint + " != registry " + registry.fingerprint());
    if (a.same < 1 || a.same > registry.size() || a.other < 1 || a.other > registry.size() || a.same == a.other)
        throw PreconditionError("--same and --other must be distinct editor indices");
    std::vector<ImagePair> pos, neg;
    for (const auto& r : manifest.records) {
        const bool take_pos = r.label == a.same && static_cast<int>(pos.size()) < a.positives;
        const bool take_neg = r.label == 0 && static_cast<int>(neg.size()) < a.negatives;
        if (!take_pos && !take_neg) continue;
        ImagePair p{r.pair_id, load_image(manifest.resolve(r.base_path)), load_image(manifest.resolve(r.suspicious_path))};
        (take_pos ? pos : neg).push_back(std::move(p));
    }
    if (pos.empty() || neg.empty()) throw DegenerateData("observation needs positives of --same and negatives");
    const auto rep = observation_report(pos, neg, registry, a.same, a.other, a.seed, a.side);
    std::filesystem::create_directories(a.out);
    const auto stamp = artifact_stamp(registry.fingerprint(), a.seed);
    write_with(a.out / "distributions.csv", [&](std::ostream& os) {
        os << stamp;
        write_distributions_csv(os, rep);
    });
    write_with(a.out / "distributions.txt", [&](std::ostream& os) {
        os << stamp << "same " << a.same << "\nother " << a.other << "\n\n";
        write_distribution_text(os, rep);
    });
    append_run_log({"observe", a.seed, registry.fingerprint(), {a.registry, a.manifest}, a.out / "distributions.csv"});
    return rep;
}

// ---------------------------------------------------------------------------
// ablate

struct AblateArgs {
    std::filesystem::path train;
    std::filesystem::path test;
    std::filesystem::path out;  // ablation.csv
    TrainConfig cfg;
};

inline std::vector<AblationRow> cmd_ablate(const AblateArgs& a) {
    const auto train = load_feature_table(a.train);
    const auto test = load_feature_table(a.test);
    if (train.registry_fingerprint != test.registry_fingerprint)
        throw FingerprintMismatch("train registry " + train.registry_fingerprint + " != test registry " + test.registry_fingerprint);
    auto rows = ablation_run(train, test, default_ablation_grid(), a.cfg);
    ensure_parent(a.out);
    write_with(a.out, [&](std::ostream& os) {
        os << artifact_stamp(train.registry_fingerprint, a.cfg.seed);
        write_ablation_csv(os, rows);
    });
    append_run_log({"ablate", a.cfg.seed, train.registry_fingerprint, {a.train, a.test}, a.out});
    return rows;
}

}  // namespace edittrack
