// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fail.
// Everything here uses the in-process simulated backends.

#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <numbers>
#include <random>
#include <sstream>

#include "edittrack/backends/simulated.hpp"
#include "edittrack/commands.hpp"
#include "helpers.hpp"

using namespace edittrack;
using namespace edittrack::testing;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

int failures = 0;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

void report(bool ok, const std::string& name, const std::string& detail) {
    failures += !ok;
    std::cout << (ok ? "PASS " : "FAIL ") << name << ": " << detail << std::endl;
}

std::string fmt(double v, int prec = 4) {
    std::ostringstream os;
    os << std::setprecision(prec) << v;
    return os.str();
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

FeatureTable table_of(const std::vector<sim::SimulatedPair>& pairs, const BackendRegistry& reg, std::uint64_t seed,
                      std::map<std::string, std::string>* sets = nullptr) {
    FeatureTable t{reg.fingerprint(), reg.size(), seed, {}};
    for (const auto& p : pairs) {
        t.rows.push_back({p.record.pair_id, p.record.label,
                          extract_features(p.record.pair_id, p.base, p.suspicious, reg, {.seed = seed})});
        if (sets) (*sets)[p.record.pair_id] = p.record.source_tag;
    }
    return t;
}

// 600 positives split over the editors and 600 negatives over three modes.
// Unrelated pairs only appear at test time.
sim::SimulationSpec training_spec(const std::set<int>& unseen = {}) {
    sim::SimulationSpec s;
    s.positives_per_model = 120;
    s.negatives_per_mode = 200;
    s.negative_modes = {sim::NegativeMode::Content, sim::NegativeMode::Style, sim::NegativeMode::Frame};
    s.seed = 11;
    s.unseen_editors = unseen;
    return s;
}

sim::SimulationSpec test_spec(const std::set<int>& unseen = {}) {
    sim::SimulationSpec s;
    s.positives_per_model = 100;
    s.negatives_per_mode = 100;
    s.seed = 22;
    s.unseen_editors = unseen;
    return s;
}

TrainOptions full_training(Variant v) {
    TrainOptions o;
    o.variant = v;
    o.cfg.epochs = 1000;
    o.cfg.seed = 3;
    return o;
}

constexpr std::uint64_t kFeatureSeed = 5;

// ---------------------------------------------------------------------------

void paper_scale() {
    report(true, "paper-scale",
           "not reproducible offline (GPU editors); the criteria below use simulated editors and no secondary component");
}

void metric_invariants() {
    const auto t0 = Clock::now();
    const sim::SimulatedEmbedder emb;
    const OrientationPatchExtractor ext;
    const MetricBackends mb{emb, ext, kCanonicalSide};
    std::mt19937_64 rng(2024);
    int bad = 0;
    for (int i = 0; i < 200; ++i) {
        const int w = 16 + static_cast<int>(rng() % 200), h = 16 + static_cast<int>(rng() % 200);
        const auto a = i % 2 ? blob_image(rng, w, h) : random_image(rng, w, h);
        const auto b = i % 3 ? blob_image(rng, h, w) : random_image(rng, w, h);
        const auto ab = compute_all(a, b, mb), ba = compute_all(b, a, mb);
        for (const auto* img : {&a, &b}) {
            const auto self = compute_all(*img, *img, mb);
            for (int m = 0; m < kMetricCount; ++m) bad += std::abs(self[m] - kPerfectScores[m]) > 1e-9;
            double mass = 0;
            for (double v : histogram(*img).bins) mass += v;
            bad += std::abs(mass - 1.0) > 1e-9;
        }
        for (int m = 0; m < kMetricCount; ++m) bad += ab[m] != ba[m];
        const auto in01 = [](double v) { return v >= 0.0 && v <= 1.0; };
        bad += !in01(ab[0]) || !in01(ab[1]) || !in01(ab[4]);
        bad += ab[3] < -1.0 || ab[3] > 1.0;
        bad += ab[2] < 0.0 || ab[5] < 0.0;
    }
    const double secs = seconds_since(t0);
    report(bad == 0 && secs < 30, "metric-invariants",
           "200 pairs, " + std::to_string(bad) + " violations, " + fmt(secs, 3) + " s (limit 30 s)");
}

void phash_golden() {
    std::ifstream in(data_dir() / "phash_golden.txt");
    int count = 0, match = 0;
    for (std::string line; std::getline(in, line);) {
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ls(line);
        std::string name, hex;
        ls >> name >> hex;
        ++count;
        match += phash(load_image(fixture(name))) == std::stoull(hex, nullptr, 16);
    }
    report(count == 8 && match == 8, "phash-golden", std::to_string(match) + "/" + std::to_string(count) + " fixtures bit-exact");
}

void gradient_check() {
    const auto t0 = Clock::now();
    std::mt19937_64 rng(77);
    std::normal_distribution<double> g(0.0, 1.0);
    double worst = 0.0;
    for (int model = 0; model < 20; ++model) {
        const int in = 8, hidden = 5, out = 3;
        Network net = init_network(in, hidden, out, rng);
        for (int j = 0; j < hidden; ++j) net.b1()[j] = 0.1 * g(rng);
        std::vector<std::vector<double>> xs(6, std::vector<double>(static_cast<std::size_t>(in)));
        std::vector<int> ys;
        for (auto& x : xs) {
            for (double& v : x) v = g(rng);
            ys.push_back(static_cast<int>(rng() % static_cast<std::uint64_t>(out)));
        }
        std::vector<const std::vector<double>*> rows;
        for (const auto& x : xs) rows.push_back(&x);
        Network grad(in, hidden, out);
        loss_and_gradient(net, rows, ys, &grad);
        const double h = 1e-4;
        for (std::size_t p = 0; p < net.params.size(); ++p) {
            Network plus = net, minus = net;
            plus.params[p] += h;
            minus.params[p] -= h;
            const double num = (loss_and_gradient(plus, rows, ys, nullptr) - loss_and_gradient(minus, rows, ys, nullptr)) / (2 * h);
            const double ana = grad.params[p];
            worst = std::max(worst, std::abs(num - ana) / std::max({std::abs(num), std::abs(ana), 1e-6}));
        }
    }
    const double secs = seconds_since(t0);
    report(worst < 1e-4 && secs < 5, "gradient-check",
           "20 models, worst relative error " + fmt(worst, 3) + ", " + fmt(secs, 3) + " s (limit 5 s)");
}

void xor_separability() {
    std::mt19937_64 rng(9);
    std::normal_distribution<double> g(0.0, 0.15);
    Dataset d;
    const double c[4][2] = {{-1, -1}, {1, 1}, {-1, 1}, {1, -1}};
    for (int i = 0; i < 200; ++i) {
        const int q = i % 4;
        d.x.push_back({c[q][0] + g(rng), c[q][1] + g(rng)});
        d.y.push_back(q < 2 ? 0 : 1);
    }
    // Best half-plane over 3600 directions and every cut.
    double linear = 0.0;
    for (int a = 0; a < 3600; ++a) {
        const double t = a * std::numbers::pi / 1800.0;
        std::vector<std::pair<double, int>> proj;
        for (std::size_t i = 0; i < d.size(); ++i) proj.emplace_back(std::cos(t) * d.x[i][0] + std::sin(t) * d.x[i][1], d.y[i]);
        std::sort(proj.begin(), proj.end());
        int ones_above = 0, zeros_below = 0;
        for (const auto& p : proj) ones_above += p.second;
        const int n = static_cast<int>(proj.size());
        for (int cut = 0; cut <= n; ++cut) {
            const int correct = zeros_below + ones_above;
            linear = std::max({linear, correct / double(n), (n - correct) / double(n)});
            if (cut < n) {
                if (proj[cut].second) --ones_above;
                else ++zeros_below;
            }
        }
    }
    TrainConfig cfg;
    cfg.epochs = 300;
    cfg.learning_rate = 0.01;
    cfg.seed = 5;
    const auto m = train_mlp(d, 2, cfg);
    int ok = 0;
    for (std::size_t i = 0; i < d.size(); ++i) ok += argmax_lowest(m.probabilities(d.x[i])) == d.y[i];
    const double acc = ok / static_cast<double>(d.size());
    report(acc >= 0.99 && linear <= 0.75, "xor-separability",
           "mlp training accuracy " + fmt(acc) + " (>= 0.99), best linear " + fmt(linear) + " (<= 0.75)");
}

void observation() {
    const auto t0 = Clock::now();
    const auto reg = default_sim_registry(5);
    sim::SimulationSpec spec;
    spec.positives_per_model = 50;
    spec.negatives_per_mode = 25;
    spec.seed = 33;
    std::vector<ImagePair> pos, neg;
    for (auto& p : sim::simulate_pairs(reg, spec)) {
        if (p.record.label == 1) pos.push_back({p.record.pair_id, std::move(p.base), std::move(p.suspicious)});
        if (p.record.label == 0) neg.push_back({p.record.pair_id, std::move(p.base), std::move(p.suspicious)});
    }
    const auto r = observation_report(pos, neg, reg, 1, 2, kFeatureSeed);
    const bool ordered = r.strictly_ordered(MetricId::Intersection) && r.strictly_ordered(MetricId::Bhattacharyya);
    const double secs = seconds_since(t0);
    std::string means;
    for (int g = 0; g < 4; ++g) means += (g ? "/" : "") + fmt(r.mean(g, MetricId::Intersection), 3);
    report(ordered && pos.size() == 50 && neg.size() == 100 && secs < 300, "observation-separation",
           std::to_string(pos.size()) + "/" + std::to_string(neg.size()) + " pairs, intersection means " + means + ", " +
               (ordered ? "strict" : "not strict") + " ordering, " + fmt(secs, 3) + " s (limit 300 s)");
}

void end_to_end() {
    const auto t0 = Clock::now();
    const auto reg = default_sim_registry(5);
    std::map<std::string, std::string> sets;
    const auto train = table_of(sim::simulate_pairs(reg, training_spec()), reg, kFeatureSeed);
    const auto test = table_of(sim::simulate_pairs(reg, test_spec()), reg, kFeatureSeed, &sets);
    std::map<Variant, EvalReport> res;
    for (auto v : {Variant::Multiclass, Variant::Bin, Variant::BinMultiple})
        res[v] = evaluate_bundle(train_bundle(train, full_training(v)), test, sets);
    const double secs = seconds_since(t0);
    const auto& mc = res[Variant::Multiclass];
    const double bin = res[Variant::Bin].overall_attribution, multi = res[Variant::BinMultiple].overall_attribution;
    report(mc.overall_detection >= 0.95 && mc.overall_attribution >= 0.95 && multi > bin && secs < 1200, "end-to-end-n5",
           "multiclass detection " + fmt(mc.overall_detection) + " attribution " + fmt(mc.overall_attribution) +
               " (>= 0.95); attribution bin-multiple " + fmt(multi) + " vs bin " + fmt(bin) + "; " +
               std::to_string(train.rows.size()) + " train / " + std::to_string(test.rows.size()) + " test pairs, " +
               fmt(secs, 4) + " s (limit 1200 s)");
}

void unseen_calibration() {
    const auto t0 = Clock::now();
    const std::set<int> held{2};
    const auto gen = default_sim_registry(5);
    const auto reg = sim::labeling_registry(gen, held);
    auto train_pairs = sim::simulate_pairs(gen, training_spec(held));
    std::erase_if(train_pairs, [](const auto& p) { return p.record.label == kUnseenLabel; });
    const auto train = table_of(train_pairs, reg, kFeatureSeed);
    const auto test = table_of(sim::simulate_pairs(gen, test_spec(held)), reg, kFeatureSeed);
    auto opt = full_training(Variant::Multiclass);
    opt.holdout = 0.2;
    auto bundle = train_bundle(train, opt);
    std::vector<FeatureRow> val;
    for (auto i : holdout_negative_rows(train, opt.holdout, bundle.seed)) val.push_back(train.rows[i]);
    bundle.unseen = calibrate_unseen(bundle, val, 0.9);
    const auto r = evaluate_bundle(bundle, test);
    const auto f = r.confusion.fractions();
    const auto row = r.confusion.index_of(kUnseenLabel);
    const double mass = f[row][row];
    const double achieved = bundle.unseen->achieved_accuracy;
    report(std::abs(achieved - 0.9) <= 0.02 + 1e-12 && mass >= 0.7, "unseen-calibration",
           "editor 2 excluded; validation negative accuracy " + fmt(achieved) + " on " + std::to_string(val.size()) +
               " rows (0.9 +- 0.02), tau " + fmt(bundle.unseen->tau) + ", unseen row mass in Unseen column " + fmt(mass) +
               " (>= 0.7), " + fmt(seconds_since(t0), 4) + " s");
}

// Runs the CLI stages twice with equal seeds and compares the artifacts.
void determinism() {
    const TempDir a, b;
    for (const auto* dir : {&a, &b}) {
        const auto& d = dir->path;
        SimulateArgs s;
        s.out = d / "data";
        s.spec.positives_per_model = 12;
        s.spec.negatives_per_mode = 15;
        s.spec.side = 96;
        cmd_simulate(s);
        cmd_extract({d / "data/registry.cfg", d / "data/manifest.tsv", d / "features.csv", std::nullopt, kFeatureSeed, 2, 96});
        TrainOptions opt;
        opt.cfg.epochs = 200;
        opt.cfg.seed = 3;
        opt.holdout = 0.5;
        cmd_train({d / "features.csv", d / "model.txt", opt});
        cmd_calibrate({d / "model.txt", d / "features.csv", d / "model_cal.txt", 0.9});
        cmd_evaluate({d / "model_cal.txt", d / "features.csv", d / "data/manifest.tsv", d / "report"});
    }
    int same = 0, total = 0;
    for (const char* f : {"features.csv", "model.txt", "model_cal.txt", "report/report.txt", "report/confusion.csv",
                          "report/predictions.csv"}) {
        ++total;
        const auto x = slurp(a.path / f);
        same += !x.empty() && x == slurp(b.path / f);
    }
    report(same == total, "determinism", std::to_string(same) + "/" + std::to_string(total) + " artifacts byte-identical");
}

void feature_contract() {
    std::string detail;
    bool ok = true;
    const auto gen = default_sim_registry(5);
    const auto pair = sim::simulate_positive(gen.editor(1), "photo", 4, 96, 0.0);
    for (int n : {1, 3, 5}) {
        const auto v = extract_features("p", pair.base, pair.suspicious, default_sim_registry(n), {.seed = 1, .side = 96});
        ok &= v.size() == static_cast<std::size_t>(12 * n);
        detail += (detail.empty() ? "" : ", ") + ("n=" + std::to_string(n) + " -> " + std::to_string(v.size()));
    }
    report(ok, "feature-length", detail);
}

}  // namespace

int main() {
    const auto t0 = Clock::now();
    try {
        paper_scale();
        metric_invariants();
        phash_golden();
        gradient_check();
        xor_separability();
        feature_contract();
        determinism();
        observation();
        end_to_end();
        unseen_calibration();
    } catch (const std::exception& e) {
        std::cout << "FAIL aborted: " << e.what() << std::endl;
        return 1;
    }
    std::cout << (failures ? "FAILED " : "ALL PASSED ") << failures << " failing, " << fmt(seconds_since(t0), 4) << " s total"
              << std::endl;
    return failures ? 1 : 0;
}
