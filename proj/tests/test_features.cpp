#include <gtest/gtest.h>

#include <atomic>
#include <random>
#include <sstream>

#include "edittrack/features.hpp"
#include "edittrack/simulate.hpp"
#include "helpers.hpp"

using namespace edittrack;
using namespace edittrack::testing;

namespace {

class CountingEditor final : public Editor {
public:
    CountingEditor(std::string name, sim::SimEditorParams p, bool fail = false)
        : inner_(name, p), info_{std::move(name), BackendKind::Simulated, "count"}, fail_(fail) {}
    const BackendInfo& info() const override { return info_; }
    ImageBuffer edit(const ImageBuffer& img, const std::string& prompt, std::uint64_t seed) const override {
        ++calls;
        if (fail_) throw BackendError("backend down");
        return inner_.edit(img, prompt, seed);
    }
    mutable std::atomic<int> calls{0};

private:
    sim::SimulatedEditor inner_;
    BackendInfo info_;
    bool fail_;
};

BackendRegistry counting_registry(const std::vector<std::shared_ptr<const Editor>>& editors) {
    return BackendRegistry(editors, std::make_shared<sim::SimulatedCaptioner>(), std::make_shared<sim::SimulatedEmbedder>());
}

std::pair<ImageBuffer, ImageBuffer> positive(const BackendRegistry& reg, int i, std::uint64_t seed, int side = 96) {
    auto p = sim::simulate_positive(reg.editor(i), "photo", seed, side, 0.0);
    return {p.base, p.suspicious};
}

FeatureVector random_vector(std::mt19937_64& rng, int n) {
    FeatureVector v(static_cast<std::size_t>(n * kBlockWidth));
    for (auto& x : v) x = static_cast<double>(rng() % 1000);
    return v;
}

}  // namespace

TEST(ProxyPrompt, Template) {
    EXPECT_EQ(build_proxy_prompt("a dog", "a cat").rendered,
              "Do the image editing task; original prompt: a dog, editing prompt: a cat");
    EXPECT_EQ(build_proxy_prompt("x", "x").rendered, "Do the image editing task; original prompt: x, editing prompt: x");
    EXPECT_THROW(build_proxy_prompt("", "a cat"), EmptyCaption);
    EXPECT_THROW(build_proxy_prompt("a cat", ""), EmptyCaption);
}

TEST(ReEdit, TwoImagesPerEditor) {
    const auto reg = default_sim_registry(5);
    const auto [b, s] = positive(reg, 2, 1);
    const auto r = re_edit_images(b, s, reg, 0);
    EXPECT_EQ(r.from_base.size() + r.from_suspicious.size(), 10u);
    for (const auto& img : r.from_base) EXPECT_EQ(img.width(), b.width());
}

TEST(ReEdit, CacheSkipsBackend) {
    auto e1 = std::make_shared<CountingEditor>("c1", default_sim_editors()[0].second);
    auto e2 = std::make_shared<CountingEditor>("c2", default_sim_editors()[1].second);
    const auto reg = counting_registry({e1, e2});
    const auto [b, s] = positive(reg, 1, 2);
    const int before = e1->calls + e2->calls;  // the positive itself took one edit
    auto calls = [&] { return e1->calls + e2->calls - before; };
    TempDir dir;
    {
        ReEditCache cache(dir.path);
        const auto first = extract_features("p", b, s, reg, {.seed = 3, .cache = &cache});
        EXPECT_EQ(calls(), 4);
        const auto second = extract_features("p", b, s, reg, {.seed = 3, .cache = &cache});
        EXPECT_EQ(calls(), 4);
        EXPECT_EQ(first, second);
    }
    // A fresh cache over the same directory reads the disk copy.
    ReEditCache reopened(dir.path);
    const auto third = extract_features("p", b, s, reg, {.seed = 3, .cache = &reopened});
    EXPECT_EQ(calls(), 4);
    EXPECT_EQ(third, extract_features("p", b, s, reg, {.seed = 3}));
    EXPECT_EQ(calls(), 8);
    // A different seed is a different key.
    extract_features("p", b, s, reg, {.seed = 4, .cache = &reopened});
    EXPECT_EQ(calls(), 12);
}

TEST(ReEdit, FailingEditorNamedAndNothingCached) {
    auto ok = std::make_shared<CountingEditor>("fine", default_sim_editors()[0].second);
    auto bad = std::make_shared<CountingEditor>("broken-editor", default_sim_editors()[1].second, true);
    const auto reg = counting_registry({ok, bad});
    const auto [b, s] = positive(reg, 1, 3);
    ReEditCache cache;
    try {
        re_edit_pair("p", b, s, reg, 0, &cache);
        FAIL();
    } catch (const BackendError& e) {
        EXPECT_NE(std::string(e.what()).find("broken-editor"), std::string::npos);
    }
    EXPECT_EQ(cache.size(), 0u);
}

TEST(Features, LengthIsTwelveN) {
    for (int n : {1, 3, 5}) {
        const auto reg = default_sim_registry(n);
        const auto [b, s] = positive(reg, 1, 4, 64);
        const auto v = extract_features("p", b, s, reg, {.side = 64});
        EXPECT_EQ(v.size(), static_cast<std::size_t>(12 * n));
        for (double x : v) EXPECT_TRUE(std::isfinite(x));
    }
}

TEST(Features, DegenerateEditorsGivePerfectScores) {
    // Zero-strength, noise-free editors on an unchanged pair: the captions
    // agree, the edit tokens are empty and the re-edits equal the input.
    std::vector<std::pair<std::string, sim::SimEditorParams>> eds = {{"d1", {1, 0.0, 16, 0.15, 0.0}},
                                                                     {"d2", {2, 0.0, 16, 0.15, 0.0}}};
    const auto reg = parse_registry(sim_registry_config(eds));
    const auto img = sim::paint_tokens(sim::photo_scene(5, 96), {"dog", "beach"}, 1);
    const auto v = extract_features("p", img, img, reg, {.side = 96});
    for (std::size_t j = 0; j < v.size(); ++j) EXPECT_NEAR(v[j], kPerfectScores[j % kMetricCount], 1e-6) << j;
}

TEST(Features, LayoutMatchesDirectMetrics) {
    const auto reg = default_sim_registry(2);
    const auto [b, s] = positive(reg, 2, 6, 64);
    const auto v = extract_features("p", b, s, reg, {.seed = 1, .side = 64});
    const auto r = re_edit_images(b, s, reg, 1);
    const OrientationPatchExtractor x;
    const MetricBackends mb{reg.embedder(), x, 64};
    for (int i = 0; i < 2; ++i) {
        const auto rb = compute_all(r.from_base[i], s, mb), rs = compute_all(r.from_suspicious[i], s, mb);
        for (int m = 0; m < kMetricCount; ++m) {
            EXPECT_FLOAT_EQ(v[i * 12 + m], rb[m]);
            EXPECT_FLOAT_EQ(v[i * 12 + 6 + m], rs[m]);
        }
    }
}

TEST(FeatureTable, OrderFingerprintAndRoundTrip) {
    const auto reg = default_sim_registry(2);
    TempDir dir;
    sim::SimulationSpec spec;
    spec.positives_per_model = 1;
    spec.negatives_per_mode = 0;
    spec.side = 64;
    spec.negative_modes = {sim::NegativeMode::Frame};
    spec.negatives_per_mode = 1;
    const auto m = sim::write_simulated_dataset(reg, spec, dir.path);
    ASSERT_EQ(m.records.size(), 3u);
    const auto t = build_feature_table(m, reg, {.seed = 9, .side = 64, .jobs = 2});
    ASSERT_EQ(t.rows.size(), 3u);
    for (std::size_t i = 0; i < 3; ++i) {
        EXPECT_EQ(t.rows[i].pair_id, m.records[i].pair_id);
        EXPECT_EQ(t.rows[i].label, m.records[i].label);
    }
    EXPECT_EQ(build_feature_table(m, reg, {.seed = 9, .side = 64, .jobs = 1}), t);

    std::ostringstream a;
    write_feature_table(a, t);
    std::istringstream in(a.str());
    const auto back = parse_feature_table(in);
    EXPECT_EQ(back, t);
    std::ostringstream b;
    write_feature_table(b, back);
    EXPECT_EQ(a.str(), b.str());

    EXPECT_THROW(build_feature_table(m, default_sim_registry(3), {.side = 64}), FingerprintMismatch);
}

TEST(FeatureTable, PairErrorNamesPair) {
    const auto reg = default_sim_registry(1);
    Manifest m;
    m.registry_fingerprint = reg.fingerprint();
    m.records.push_back({"lost-pair", "/nonexistent/b.png", "/nonexistent/s.png", 0, "x"});
    try {
        build_feature_table(m, reg);
        FAIL();
    } catch (const IoError& e) {
        EXPECT_NE(std::string(e.what()).find("lost-pair"), std::string::npos);
    }
}

TEST(FeatureTable, ParseErrors) {
    auto parse = [](const std::string& s) {
        std::istringstream in(s);
        return parse_feature_table(in);
    };
    const std::string values = ",1,2,3,4,5,6,7,8,9,10,11,12\n";
    const std::string head = "!features registry=a n=1 k=6 layout=v1\n";
    EXPECT_THROW(parse(""), ParseError);
    EXPECT_THROW(parse("p,1" + values), ParseError);
    EXPECT_THROW(parse("!features registry=a n=1 k=6 layout=v2\n"), ParseError);
    EXPECT_THROW(parse(head + "p,1,2\n"), ParseError);
    EXPECT_THROW(parse(head + "p,2" + values), ParseError);
    EXPECT_THROW(parse(head + "p,1" + values + "p,1" + values), ParseError);
    EXPECT_THROW(parse(head + "p,1,2,3,4,5,6,7,8,9,10,11,nan\n"), ParseError);
    EXPECT_EQ(parse(head + "# seed=17\np,1" + values).seed, 17u);
    EXPECT_EQ(parse(head + "p,unseen" + values).rows[0].label, kUnseenLabel);
}

TEST(Slicing, Examples) {
    std::mt19937_64 rng(1);
    const auto v = random_vector(rng, 5);
    EXPECT_EQ(slice_features(v, FeatureGroup::Combined, 6), v);
    EXPECT_EQ(slice_features(v, FeatureGroup::BaseOnly, 6).size(), 30u);
    const auto s = slice_features(v, FeatureGroup::SuspiciousOnly, 2);
    ASSERT_EQ(s.size(), 10u);
    for (int b = 0; b < 5; ++b) {
        EXPECT_EQ(s[2 * b], v[12 * b + 6]);
        EXPECT_EQ(s[2 * b + 1], v[12 * b + 7]);
    }
    EXPECT_THROW(slice_features(v, FeatureGroup::Combined, 0), PreconditionError);
    EXPECT_THROW(slice_features(FeatureVector(13), FeatureGroup::Combined, 6), DimensionMismatch);
    EXPECT_EQ(feature_block(v, 2), FeatureVector(v.begin() + 12, v.begin() + 24));
}

TEST(Slicing, InterleaveReconstructs) {
    std::mt19937_64 rng(2);
    for (int t = 0; t < 50; ++t) {
        const int n = 1 + int(rng() % 6), k = 1 + int(rng() % 6);
        const auto v = random_vector(rng, n);
        EXPECT_EQ(slice_features(v, FeatureGroup::Combined, 6), v);
        const auto base = slice_features(v, FeatureGroup::BaseOnly, 6), susp = slice_features(v, FeatureGroup::SuspiciousOnly, 6);
        FeatureVector rebuilt;
        for (int b = 0; b < n; ++b) {
            rebuilt.insert(rebuilt.end(), base.begin() + 6 * b, base.begin() + 6 * b + 6);
            rebuilt.insert(rebuilt.end(), susp.begin() + 6 * b, susp.begin() + 6 * b + 6);
        }
        EXPECT_EQ(rebuilt, v);
        EXPECT_EQ(slice_features(v, FeatureGroup::Combined, k).size(), static_cast<std::size_t>(sliced_width(n, FeatureGroup::Combined, k)));
    }
}

TEST(Features, OwnBlockHasHighestIntersection) {
    // For positives of editor i, both intersection entries of block i beat
    // every other block's in at least 90% of pairs (measured 40/40).
    const auto reg = default_sim_registry(5);
    int wins = 0, total = 0;
    for (int i = 1; i <= 5; ++i)
        for (int k = 0; k < 8; ++k) {
            const auto [b, s] = positive(reg, i, 100 * i + k, 96);
            const auto v = extract_features("p", b, s, reg, {.seed = 1, .side = 96});
            const int m = static_cast<int>(MetricId::Intersection);
            bool win = true;
            for (int j = 1; j <= 5; ++j) {
                if (j == i) continue;
                for (int half : {0, 6}) win = win && v[(i - 1) * 12 + half + m] > v[(j - 1) * 12 + half + m];
            }
            wins += win;
            ++total;
        }
    EXPECT_GE(wins, 0.9 * total) << wins << "/" << total;
}
