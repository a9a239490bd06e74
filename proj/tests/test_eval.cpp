#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "edittrack/eval.hpp"
#include "edittrack/simulate.hpp"
#include "helpers.hpp"

using namespace edittrack;

namespace {

Verdict edited(int i) { return Verdict::edited_by(i, {}); }
Verdict clean() { return Verdict::non_edited({}); }
Verdict unseen() { return Verdict::unseen({}); }

Verdict random_verdict(std::mt19937_64& rng, int n) {
    const int r = static_cast<int>(rng() % static_cast<std::uint64_t>(n + 2));
    if (r == 0) return clean();
    if (r == n + 1) return unseen();
    return edited(r);
}

}  // namespace

TEST(Detection, Examples) {
    EXPECT_EQ(detection_accuracy({clean(), edited(1), edited(2)}, {0, 1, 2}), 1.0);
    EXPECT_EQ(detection_accuracy({edited(2)}, {3}), 1.0);
    EXPECT_EQ(detection_accuracy({unseen()}, {3}), 1.0);
    EXPECT_EQ(detection_accuracy({clean(), edited(1), edited(2), clean()}, {0, 1, 2, 2}), 0.75);
    EXPECT_EQ(detection_accuracy({unseen()}, {0}), 0.0);
    EXPECT_THROW(detection_accuracy({clean()}, {0, 1}), LengthMismatch);
}

TEST(Attribution, Examples) {
    EXPECT_EQ(attribution_accuracy({edited(3)}, {3}), 1.0);
    EXPECT_EQ(attribution_accuracy({edited(2)}, {3}), 0.0);
    EXPECT_EQ(attribution_accuracy({unseen()}, {3}), 0.0);
    EXPECT_EQ(attribution_accuracy({unseen()}, {kUnseenLabel}), 1.0);
    EXPECT_THROW(attribution_accuracy({clean(), edited(1)}, {0, 1}), ContainsNegatives);
    EXPECT_THROW(attribution_accuracy({edited(1)}, {1, 1}), LengthMismatch);
}

TEST(Overall, MeanOverPairs) {
    std::vector<bool> c(100, true);
    c[3] = c[50] = false;
    EXPECT_DOUBLE_EQ(overall_accuracy(c), 0.98);
    std::mt19937_64 rng(1);
    for (int t = 0; t < 20; ++t) {
        auto p = c;
        for (std::size_t i = p.size(); i > 1; --i) std::swap(p[i - 1], p[rng() % i]);
        EXPECT_EQ(overall_accuracy(p), overall_accuracy(c));
    }
}

TEST(Confusion, PerfectIsIdentity) {
    std::vector<Verdict> v;
    std::vector<int> l;
    for (int i = 0; i <= 4; ++i)
        for (int k = 0; k < 3; ++k) {
            v.push_back(i == 0 ? clean() : edited(i));
            l.push_back(i);
        }
    const auto f = confusion_matrix(v, l, 4, false).fractions();
    for (std::size_t r = 0; r < f.size(); ++r)
        for (std::size_t c = 0; c < f.size(); ++c) EXPECT_EQ(f[r][c], r == c ? 1.0 : 0.0);
    EXPECT_THROW(confusion_matrix({unseen()}, {1}, 4, false), PreconditionError);
}

TEST(Confusion, UnseenColumn) {
    const auto m = confusion_matrix({unseen(), unseen(), edited(1), clean()}, {kUnseenLabel, kUnseenLabel, kUnseenLabel, 0}, 2, true);
    ASSERT_EQ(m.classes.back(), kUnseenLabel);
    const auto f = m.fractions();
    EXPECT_NEAR(f[m.index_of(kUnseenLabel)][m.index_of(kUnseenLabel)], 2.0 / 3.0, 1e-12);
    std::ostringstream os;
    write_confusion_csv(os, m);
    EXPECT_NE(os.str().find("pred_unseen"), std::string::npos);
}

TEST(EvalInvariants, RandomVerdicts) {
    // Rows sum to one, attribution never exceeds detection on positives, and
    // the diagonal mean over editor rows equals positive attribution when
    // every editor row has the same count.
    std::mt19937_64 rng(2);
    for (int t = 0; t < 30; ++t) {
        const int n = 1 + static_cast<int>(rng() % 5);
        std::vector<Verdict> v;
        std::vector<int> l;
        std::vector<std::string> ids, sets;
        for (int i = 1; i <= n; ++i)
            for (int k = 0; k < 10; ++k) {
                v.push_back(random_verdict(rng, n));
                l.push_back(i);
                ids.push_back("p" + std::to_string(i) + "-" + std::to_string(k));
                sets.push_back(k % 2 ? "photo" : "art");
            }
        std::vector<Verdict> pv = v;
        std::vector<int> pl = l;
        for (int k = 0; k < 10; ++k) {
            v.push_back(random_verdict(rng, n));
            l.push_back(0);
            ids.push_back("n" + std::to_string(k));
            sets.push_back("negative");
        }
        EXPECT_LE(attribution_accuracy(pv, pl), detection_accuracy(pv, pl));
        const auto r = evaluate_verdicts(ids, l, sets, v, n);
        const auto f = r.confusion.fractions();
        for (std::size_t row = 0; row < f.size(); ++row) {
            if (r.confusion.row_total(row) == 0) continue;
            double s = 0;
            for (double x : f[row]) s += x;
            EXPECT_NEAR(s, 1.0, 1e-9);
        }
        double diag = 0;
        for (int i = 1; i <= n; ++i) diag += f[r.confusion.index_of(i)][r.confusion.index_of(i)];
        EXPECT_NEAR(diag / n, r.positive_attribution, 1e-12);
        EXPECT_NEAR(r.positive_attribution, attribution_accuracy(pv, pl), 1e-12);
        ASSERT_EQ(r.datasets.size(), 3u);
        EXPECT_EQ(r.datasets[0].name, "art");
        EXPECT_GE(r.overall_detection, 0.0);
        EXPECT_LE(r.overall_detection, 1.0);
    }
}

TEST(EvalReport, TextAndCsv) {
    const auto r = evaluate_verdicts({"a", "b"}, {0, 1}, {"x", "x"}, {clean(), edited(1)}, 1);
    std::ostringstream text, pred;
    write_eval_text(text, r, "[run]\nseed 1\n");
    write_predictions_csv(pred, r);
    EXPECT_NE(text.str().find("detection 1"), std::string::npos);
    EXPECT_NE(text.str().find("[confusion]"), std::string::npos);
    EXPECT_EQ(pred.str(), "pair_id,label,decision\na,0,NonEdited\nb,1,EditedBy(1)\n");
}

namespace {

std::vector<ImagePair> positive_pairs(const BackendRegistry& reg, int i, int count, int side) {
    std::vector<ImagePair> out;
    for (int k = 0; k < count; ++k) {
        auto p = sim::simulate_positive(reg.editor(i), k % 2 ? "art" : "photo", 300 + k, side, 0.25);
        out.push_back({"p" + std::to_string(k), p.base, p.suspicious});
    }
    return out;
}

std::vector<ImagePair> negative_pairs(const BackendRegistry& reg, int count, int side) {
    std::vector<ImagePair> out;
    const sim::NegativeMode modes[] = {sim::NegativeMode::Content, sim::NegativeMode::Style, sim::NegativeMode::Frame,
                                       sim::NegativeMode::Unrelated};
    for (int k = 0; k < count; ++k) {
        auto p = sim::simulate_negative(modes[k % 4], reg, 400 + k, side);
        out.push_back({"n" + std::to_string(k), p.base, p.suspicious});
    }
    return out;
}

}  // namespace

TEST(Observation, GroupSizesAndOrdering) {
    const auto reg = default_sim_registry(5);
    const auto r = observation_report(positive_pairs(reg, 1, 10, 96), negative_pairs(reg, 20, 96), reg, 1, 2, 0, 96);
    EXPECT_EQ(r.size(0), 10u);
    EXPECT_EQ(r.size(1), 10u);
    EXPECT_EQ(r.size(2), 10u);
    EXPECT_EQ(r.size(3), 20u);
    EXPECT_TRUE(r.strictly_ordered(MetricId::Intersection));
    EXPECT_TRUE(r.strictly_ordered(MetricId::Bhattacharyya));
}

TEST(Observation, IdenticalEditorsCoincide) {
    // Two registry entries with the same simulation parameters: the
    // same-model and other-model base groups are identical.
    const auto p = default_sim_editors()[0].second;
    const auto reg = parse_registry(sim_registry_config({{"a", p}, {"b", p}}));
    const auto r = observation_report(positive_pairs(reg, 1, 4, 64), negative_pairs(reg, 4, 64), reg, 1, 2, 0, 64);
    EXPECT_EQ(r.groups[0], r.groups[2]);
    EXPECT_FALSE(r.strictly_ordered(MetricId::Intersection));
}

TEST(Ablation, GridShape) {
    const auto g = default_ablation_grid();
    ASSERT_EQ(g.size(), 8u);
    int combined = 0;
    for (const auto& c : g) combined += c.group == FeatureGroup::Combined;
    EXPECT_EQ(combined, 6);
    EXPECT_EQ(g.back().k, 6);
}

TEST(Ablation, CombinedKeepsUpWithHalves) {
    // Measured at this scale: combined 0.994, base-only 1.0, suspicious-only
    // 0.888 overall attribution.
    const auto reg = default_sim_registry(5);
    auto table = [&](std::uint64_t seed) {
        sim::SimulationSpec spec;
        spec.positives_per_model = 20;
        spec.negatives_per_mode = 15;
        spec.side = 96;
        spec.seed = seed;
        FeatureTable t{reg.fingerprint(), reg.size(), 1, {}};
        for (const auto& p : sim::simulate_pairs(reg, spec))
            t.rows.push_back({p.record.pair_id, p.record.label,
                              extract_features(p.record.pair_id, p.base, p.suspicious, reg, {.seed = 1, .side = 96})});
        return t;
    };
    TrainConfig cfg;
    cfg.epochs = 300;
    cfg.seed = 3;
    const auto train = table(11), test = table(22);
    const auto rows = ablation_run(train, test, default_ablation_grid(), cfg);
    double combined = 0, halves = 0;
    for (const auto& r : rows) {
        if (r.config.k != kMetricCount) continue;
        if (r.config.group == FeatureGroup::Combined) combined = r.overall_attribution;
        else halves = std::max(halves, r.overall_attribution);
    }
    EXPECT_GE(combined, halves - 0.02);
    // The combined k=6 slice is the identity, so it matches a plain run.
    TrainOptions opt;
    opt.cfg = cfg;
    EXPECT_EQ(rows.back().overall_attribution, evaluate_bundle(train_bundle(train, opt), test).overall_attribution);
}
