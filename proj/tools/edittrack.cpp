// edittrack: detect and attribute image edits by re-editing.
//
//   edittrack simulate  --out DIR [--seed S] [--positives N] [--negatives N] [--unseen I]...
//   edittrack extract   --registry CFG --manifest TSV --out FEATURES [--seed S] [--jobs J]
//   edittrack train     --features FEATURES --out MODEL [--variant V] [--holdout F] ...
//   edittrack calibrate --model MODEL --features FEATURES --out MODEL [--unseen-target T]
//   edittrack evaluate  --model MODEL --features FEATURES --out DIR [--manifest TSV]
//   edittrack detect    --registry CFG --model MODEL --base IMG --suspicious IMG
//   edittrack observe   --registry CFG --manifest TSV --out DIR [--same I --other J]
//   edittrack ablate    --train FEATURES --features FEATURES --out CSV
//
// Errors print "error: <Kind>: <message>" on one line and exit 1.

#include <iostream>
#include <set>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "edittrack/commands.hpp"

using namespace edittrack;
namespace fs = std::filesystem;

namespace {

struct Common {
    std::string registry, manifest, features, model, out;
    std::uint64_t seed = 0;
    int jobs = 1;
    int resolution = kCanonicalSide;
};

void add_train_flags(CLI::App* app, TrainConfig& cfg) {
    app->add_option("--epochs", cfg.epochs, "Training epochs")->capture_default_str();
    app->add_option("--lr", cfg.learning_rate, "Adam learning rate")->capture_default_str();
    app->add_option("--batch-size", cfg.batch_size, "Mini-batch size")->capture_default_str();
    app->add_option("--dropout", cfg.dropout, "Hidden-layer dropout rate")->capture_default_str();
}

int run(int argc, char** argv) {
    CLI::App app{"Image edit detection and attribution by re-editing"};
    app.require_subcommand(1);
    Common c;

    // simulate
    auto* sim_cmd = app.add_subcommand("simulate", "Synthesize a labeled dataset with simulated editors");
    std::string sim_registry;
    sim::SimulationSpec spec;
    std::vector<std::string> modes;
    std::vector<int> unseen;
    sim_cmd->add_option("--registry", sim_registry, "Generator registry (default: five simulated editors)");
    sim_cmd->add_option("--out", c.out, "Output directory")->required();
    sim_cmd->add_option("--seed", spec.seed)->capture_default_str();
    sim_cmd->add_option("--resolution", spec.side, "Image side in pixels")->capture_default_str();
    sim_cmd->add_option("--positives", spec.positives_per_model, "Positives per editor")->capture_default_str();
    sim_cmd->add_option("--negatives", spec.negatives_per_mode, "Negatives per mode")->capture_default_str();
    sim_cmd->add_option("--modes", modes, "Negative modes (content, style, frame, unrelated)");
    sim_cmd->add_option("--unseen", unseen, "1-based generator indices labeled unseen");

    // extract
    auto* ext_cmd = app.add_subcommand("extract", "Build the 12n-feature table for a manifest");
    std::string cache_dir;
    ext_cmd->add_option("--registry", c.registry)->required();
    ext_cmd->add_option("--manifest", c.manifest)->required();
    ext_cmd->add_option("--out", c.out, "Feature table path")->required();
    ext_cmd->add_option("--seed", c.seed)->capture_default_str();
    ext_cmd->add_option("--jobs", c.jobs)->capture_default_str();
    ext_cmd->add_option("--resolution", c.resolution)->capture_default_str();
    ext_cmd->add_option("--cache", cache_dir, "Re-edit cache directory");

    // train
    auto* train_cmd = app.add_subcommand("train", "Train a classifier on a feature table");
    TrainOptions topt;
    std::string variant = "multiclass", group = "combined";
    train_cmd->add_option("--features", c.features)->required();
    train_cmd->add_option("--out", c.out, "Checkpoint path")->required();
    train_cmd->add_option("--seed", topt.cfg.seed)->capture_default_str();
    train_cmd->add_option("--variant", variant)->check(CLI::IsMember({"multiclass", "bin", "bin-multiple"}))->capture_default_str();
    train_cmd->add_option("--group", group)->check(CLI::IsMember({"combined", "base", "suspicious"}))->capture_default_str();
    train_cmd->add_option("--metrics-k", topt.k)->check(CLI::Range(1, kMetricCount))->capture_default_str();
    train_cmd->add_option("--holdout", topt.holdout, "Fraction of negatives withheld for calibration")->capture_default_str();
    add_train_flags(train_cmd, topt.cfg);

    // calibrate
    auto* cal_cmd = app.add_subcommand("calibrate", "Fit the unseen-editor threshold on held-out negatives");
    double target = 0.9;
    cal_cmd->add_option("--model", c.model)->required();
    cal_cmd->add_option("--features", c.features, "Training feature table")->required();
    cal_cmd->add_option("--out", c.out, "Calibrated checkpoint path")->required();
    cal_cmd->add_option("--unseen-target", target)->capture_default_str();

    // evaluate
    auto* eval_cmd = app.add_subcommand("evaluate", "Score a model on a feature table");
    eval_cmd->add_option("--model", c.model)->required();
    eval_cmd->add_option("--features", c.features)->required();
    eval_cmd->add_option("--manifest", c.manifest, "Manifest whose source tags name the datasets");
    eval_cmd->add_option("--out", c.out, "Report directory")->required();

    // detect
    auto* det_cmd = app.add_subcommand("detect", "Verdict for one base/suspicious pair");
    std::string base, suspicious;
    det_cmd->add_option("--registry", c.registry)->required();
    det_cmd->add_option("--model", c.model)->required();
    det_cmd->add_option("--base", base)->required();
    det_cmd->add_option("--suspicious", suspicious)->required();
    det_cmd->add_option("--out", c.out, "Also write the verdict here");
    det_cmd->add_option("--seed", c.seed)->capture_default_str();
    det_cmd->add_option("--resolution", c.resolution)->capture_default_str();

    // observe
    auto* obs_cmd = app.add_subcommand("observe", "Re-editing similarity distributions for four pair groups");
    ObserveArgs oa;
    obs_cmd->add_option("--registry", c.registry)->required();
    obs_cmd->add_option("--manifest", c.manifest)->required();
    obs_cmd->add_option("--out", c.out, "Report directory")->required();
    obs_cmd->add_option("--same", oa.same)->capture_default_str();
    obs_cmd->add_option("--other", oa.other)->capture_default_str();
    obs_cmd->add_option("--positives", oa.positives)->capture_default_str();
    obs_cmd->add_option("--negatives", oa.negatives)->capture_default_str();
    obs_cmd->add_option("--seed", c.seed)->capture_default_str();
    obs_cmd->add_option("--resolution", c.resolution)->capture_default_str();

    // ablate
    auto* abl_cmd = app.add_subcommand("ablate", "Feature-group and metric-count sweep");
    AblateArgs aa;
    std::string train_table;
    abl_cmd->add_option("--train", train_table, "Training feature table")->required();
    abl_cmd->add_option("--features", c.features, "Test feature table")->required();
    abl_cmd->add_option("--out", c.out, "ablation.csv path")->required();
    abl_cmd->add_option("--seed", aa.cfg.seed)->capture_default_str();
    add_train_flags(abl_cmd, aa.cfg);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: UsageError: " << e.what() << "\n";
        return 1;
    }

    if (*sim_cmd) {
        if (!modes.empty()) {
            spec.negative_modes.clear();
            for (const auto& m : modes) spec.negative_modes.push_back(sim::parse_negative_mode(m));
        }
        spec.unseen_editors = std::set<int>(unseen.begin(), unseen.end());
        SimulateArgs a{sim_registry.empty() ? std::nullopt : std::optional<fs::path>(sim_registry), c.out, spec};
        const auto m = cmd_simulate(a);
        std::cout << "wrote " << m.records.size() << " pairs to " << (fs::path(c.out) / "manifest.tsv").string() << "\n";
    } else if (*ext_cmd) {
        ExtractArgs a{c.registry, c.manifest, c.out, cache_dir.empty() ? std::nullopt : std::optional<fs::path>(cache_dir),
                      c.seed, c.jobs, c.resolution};
        const auto t = cmd_extract(a);
        std::cout << "wrote " << t.rows.size() << " rows x " << t.width() << " features to " << c.out << "\n";
    } else if (*train_cmd) {
        topt.variant = parse_variant(variant);
        topt.group = parse_feature_group(group);
        const auto b = cmd_train({c.features, c.out, topt});
        std::cout << "trained " << to_string(b.variant) << " (" << b.models.size() << " model" << (b.models.size() > 1 ? "s" : "")
                  << ") -> " << c.out << "\n";
    } else if (*cal_cmd) {
        const auto b = cmd_calibrate({c.model, c.features, c.out, target});
        std::cout << "tau " << format_g9(b.unseen->tau) << " validation accuracy " << format_g9(b.unseen->achieved_accuracy)
                  << (b.unseen->unachievable ? " (target unachievable)" : "") << "\n";
    } else if (*eval_cmd) {
        EvaluateArgs a{c.model, c.features, c.manifest.empty() ? std::nullopt : std::optional<fs::path>(c.manifest), c.out};
        const auto r = cmd_evaluate(a);
        std::cout << "detection " << format_g9(r.overall_detection) << " attribution " << format_g9(r.overall_attribution) << "\n";
    } else if (*det_cmd) {
        DetectArgs a{c.registry, c.model, base, suspicious, c.out.empty() ? std::nullopt : std::optional<fs::path>(c.out), c.seed,
                     c.resolution};
        cmd_detect(a, std::cout);
    } else if (*obs_cmd) {
        oa.registry = c.registry;
        oa.manifest = c.manifest;
        oa.out = c.out;
        oa.seed = c.seed;
        oa.side = c.resolution;
        const auto r = cmd_observe(oa);
        write_distribution_text(std::cout, r);
    } else if (*abl_cmd) {
        aa.train = train_table;
        aa.test = c.features;
        aa.out = c.out;
        write_ablation_csv(std::cout, cmd_ablate(aa));
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const Error& e) {
        std::cerr << "error: " << e.kind() << ": " << e.what() << "\n";
    } catch (const std::exception& e) {
        std::cerr << "error: InternalError: " << e.what() << "\n";
    }
    return 1;
}
