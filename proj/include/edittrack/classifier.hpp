#pragma once

// One-hidden-layer MLP trained from scratch (ReLU, inverted dropout, softmax
// cross-entropy, Adam) plus the binary per-block variants and the
// non-edited threshold for unseen editors.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "edittrack/features.hpp"
#include "edittrack/util.hpp"
#include "edittrack/verdict.hpp"

namespace edittrack {

struct TrainConfig {
    int epochs = 1000;
    double learning_rate = 0.001;
    int batch_size = 16;
    double dropout = 0.1;
    std::uint64_t seed = 0;
    int hidden = 30;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;

    void validate() const {
        if (epochs < 1) throw PreconditionError("epochs must be >= 1");
        if (!(learning_rate > 0.0)) throw PreconditionError("learning rate must be > 0");
        if (batch_size < 1) throw PreconditionError("batch size must be >= 1");
        if (!(dropout >= 0.0 && dropout < 1.0)) throw PreconditionError("dropout must be in [0,1)");
        if (hidden < 1) throw PreconditionError("hidden width must be >= 1");
    }
};

// Labelled design matrix; labels are 0..classes-1.
struct Dataset {
    std::vector<std::vector<double>> x;
    std::vector<int> y;
    std::size_t size() const { return x.size(); }
};

// Standard-library distributions are implementation-defined; these keep
// training bit-reproducible across toolchains.
inline double rng_unit(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

inline void shuffle_indices(std::vector<std::size_t>& idx, std::mt19937_64& rng) {
    for (std::size_t i = idx.size(); i > 1; --i) std::swap(idx[i - 1], idx[rng() % i]);
}

// ---------------------------------------------------------------------------
// Double-precision network used during training

struct Network {
    int in = 0, hid = 0, out = 0;
    // [W1 (hid x in), b1 (hid), W2 (out x hid), b2 (out)], row-major.
    std::vector<double> params;

    Network() = default;
    Network(int i, int h, int o) : in(i), hid(h), out(o), params(param_count(i, h, o), 0.0) {}

    static std::size_t param_count(int i, int h, int o) {
        return static_cast<std::size_t>(h) * i + h + static_cast<std::size_t>(o) * h + o;
    }
    double* w1() { return params.data(); }
    double* b1() { return w1() + static_cast<std::size_t>(hid) * in; }
    double* w2() { return b1() + hid; }
    double* b2() { return w2() + static_cast<std::size_t>(out) * hid; }
    const double* w1() const { return params.data(); }
    const double* b1() const { return w1() + static_cast<std::size_t>(hid) * in; }
    const double* w2() const { return b1() + hid; }
    const double* b2() const { return w2() + static_cast<std::size_t>(out) * hid; }
};

inline std::vector<double> softmax(const std::vector<double>& z) {
    const double m = *std::max_element(z.begin(), z.end());
    std::vector<double> p(z.size());
    double s = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) s += p[i] = std::exp(z[i] - m);
    for (double& v : p) v /= s;
    return p;
}

// Mean cross-entropy over the rows and its gradient (accumulated into
// `grad`, which must be zeroed and shaped like `net`). `keep_scale` holds
// one inverted-dropout multiplier per (row, hidden unit); empty = no dropout.
inline double loss_and_gradient(const Network& net, const std::vector<const std::vector<double>*>& rows,
                                const std::vector<int>& labels, Network* grad,
                                const std::vector<double>& keep_scale = {}) {
    const int in = net.in, hid = net.hid, out = net.out;
    const double inv_n = 1.0 / static_cast<double>(rows.size());
    std::vector<double> h(hid), z(out), dh(hid);
    double loss = 0.0;
    for (std::size_t r = 0; r < rows.size(); ++r) {
        const double* x = rows[r]->data();
        for (int j = 0; j < hid; ++j) {
            double a = net.b1()[j];
            const double* w = net.w1() + static_cast<std::size_t>(j) * in;
            for (int i = 0; i < in; ++i) a += w[i] * x[i];
            a = a > 0.0 ? a : 0.0;
            if (!keep_scale.empty()) a *= keep_scale[r * hid + j];
            h[j] = a;
        }
        for (int k = 0; k < out; ++k) {
            double a = net.b2()[k];
            const double* w = net.w2() + static_cast<std::size_t>(k) * hid;
            for (int j = 0; j < hid; ++j) a += w[j] * h[j];
            z[k] = a;
        }
        const auto p = softmax(z);
        const int y = labels[r];
        loss -= std::log(std::max(p[y], 1e-300)) * inv_n;
        if (!grad) continue;
        std::fill(dh.begin(), dh.end(), 0.0);
        for (int k = 0; k < out; ++k) {
            const double dz = (p[k] - (k == y ? 1.0 : 0.0)) * inv_n;
            grad->b2()[k] += dz;
            double* gw = grad->w2() + static_cast<std::size_t>(k) * hid;
            const double* w = net.w2() + static_cast<std::size_t>(k) * hid;
            for (int j = 0; j < hid; ++j) {
                gw[j] += dz * h[j];
                dh[j] += dz * w[j];
            }
        }
        for (int j = 0; j < hid; ++j) {
            if (h[j] <= 0.0) continue;  // ReLU off, or dropped
            const double da = dh[j] * (keep_scale.empty() ? 1.0 : keep_scale[r * hid + j]);
            grad->b1()[j] += da;
            double* gw = grad->w1() + static_cast<std::size_t>(j) * in;
            for (int i = 0; i < in; ++i) gw[i] += da * x[i];
        }
    }
    return loss;
}

// ---------------------------------------------------------------------------
// Stored model

inline double as_stored(double v) { return static_cast<double>(static_cast<float>(v)); }

struct MlpModel {
    int input = 0, hidden = 0, output = 0;
    std::vector<double> mean, stdev;  // standardization, per input feature
    std::vector<double> w1, b1, w2, b2;

    // Parameters are rounded to float so the 9-digit checkpoint is exact.
    static MlpModel from_network(const Network& net, std::vector<double> mean, std::vector<double> stdev) {
        MlpModel m;
        m.input = net.in;
        m.hidden = net.hid;
        m.output = net.out;
        auto take = [](const double* p, std::size_t n) {
            std::vector<double> v(p, p + n);
            for (double& x : v) x = as_stored(x);
            return v;
        };
        m.w1 = take(net.w1(), static_cast<std::size_t>(net.hid) * net.in);
        m.b1 = take(net.b1(), net.hid);
        m.w2 = take(net.w2(), static_cast<std::size_t>(net.out) * net.hid);
        m.b2 = take(net.b2(), net.out);
        for (double& x : mean) x = as_stored(x);
        for (double& x : stdev) x = as_stored(x);
        m.mean = std::move(mean);
        m.stdev = std::move(stdev);
        return m;
    }

    std::vector<double> logits(const std::vector<double>& raw) const {
        if (static_cast<int>(raw.size()) != input)
            throw DimensionMismatch("model expects " + std::to_string(input) + " features, got " + std::to_string(raw.size()));
        std::vector<double> x(input), h(hidden), z(output);
        for (int i = 0; i < input; ++i) x[i] = (raw[i] - mean[i]) / stdev[i];
        for (int j = 0; j < hidden; ++j) {
            double a = b1[j];
            for (int i = 0; i < input; ++i) a += w1[static_cast<std::size_t>(j) * input + i] * x[i];
            h[j] = a > 0.0 ? a : 0.0;
        }
        for (int k = 0; k < output; ++k) {
            double a = b2[k];
            for (int j = 0; j < hidden; ++j) a += w2[static_cast<std::size_t>(k) * hidden + j] * h[j];
            z[k] = a;
        }
        return z;
    }

    std::vector<double> probabilities(const std::vector<double>& raw) const { return softmax(logits(raw)); }

    friend bool operator==(const MlpModel&, const MlpModel&) = default;
};

// Index of the largest entry; ties go to the lowest index.
inline int argmax_lowest(const std::vector<double>& p) {
    int best = 0;
    for (int i = 1; i < static_cast<int>(p.size()); ++i)
        if (p[i] > p[best]) best = i;
    return best;
}

struct Standardization {
    std::vector<double> mean, stdev;
};

// Per-feature z-score statistics; population std, floored so constant
// features map to 0 instead of dividing by zero.
inline Standardization fit_standardization(const std::vector<std::vector<double>>& x) {
    const std::size_t d = x.front().size();
    Standardization s{std::vector<double>(d, 0.0), std::vector<double>(d, 0.0)};
    for (const auto& r : x)
        for (std::size_t i = 0; i < d; ++i) s.mean[i] += r[i];
    for (double& m : s.mean) m /= static_cast<double>(x.size());
    for (const auto& r : x)
        for (std::size_t i = 0; i < d; ++i) s.stdev[i] += (r[i] - s.mean[i]) * (r[i] - s.mean[i]);
    for (double& v : s.stdev) {
        v = std::sqrt(v / static_cast<double>(x.size()));
        if (!(v > 1e-8)) v = 1.0;
    }
    return s;
}

inline Network init_network(int in, int hid, int out, std::mt19937_64& rng) {
    Network net(in, hid, out);
    const double a1 = std::sqrt(6.0 / (in + hid)), a2 = std::sqrt(6.0 / (hid + out));
    for (std::size_t i = 0; i < static_cast<std::size_t>(hid) * in; ++i) net.w1()[i] = a1 * (2.0 * rng_unit(rng) - 1.0);
    for (std::size_t i = 0; i < static_cast<std::size_t>(out) * hid; ++i) net.w2()[i] = a2 * (2.0 * rng_unit(rng) - 1.0);
    return net;
}

// Trains a softmax classifier over `classes` labels; returns final-epoch
// weights.
inline MlpModel train_mlp(const Dataset& data, int classes, const TrainConfig& cfg) {
    cfg.validate();
    if (data.size() == 0) throw DegenerateData("empty training set");
    const std::size_t d = data.x.front().size();
    if (d == 0) throw DimensionMismatch("zero-width features");
    for (const auto& r : data.x)
        if (r.size() != d) throw DimensionMismatch("ragged feature rows");
    std::vector<int> seen(classes, 0);
    for (int y : data.y) {
        if (y < 0 || y >= classes) throw PreconditionError("label " + std::to_string(y) + " outside 0.." + std::to_string(classes - 1));
        seen[y] = 1;
    }
    if (std::accumulate(seen.begin(), seen.end(), 0) < 2) throw DegenerateData("training data has a single class");

    const auto st = fit_standardization(data.x);
    std::vector<std::vector<double>> xs(data.x);
    for (auto& r : xs)
        for (std::size_t i = 0; i < d; ++i) r[i] = (r[i] - st.mean[i]) / st.stdev[i];

    std::mt19937_64 rng(cfg.seed);
    Network net = init_network(static_cast<int>(d), cfg.hidden, classes, rng);
    Network grad(net.in, net.hid, net.out);
    std::vector<double> m(net.params.size(), 0.0), v(net.params.size(), 0.0);
    std::vector<std::size_t> order(xs.size());
    std::iota(order.begin(), order.end(), 0);
    std::vector<const std::vector<double>*> rows;
    std::vector<int> labels;
    std::vector<double> keep;
    const double keep_scale = 1.0 / (1.0 - cfg.dropout);
    double b1t = 1.0, b2t = 1.0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        shuffle_indices(order, rng);
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
            rows.clear();
            labels.clear();
            for (std::size_t i = start; i < end; ++i) {
                rows.push_back(&xs[order[i]]);
                labels.push_back(data.y[order[i]]);
            }
            keep.clear();
            if (cfg.dropout > 0.0) {
                keep.resize(rows.size() * static_cast<std::size_t>(cfg.hidden));
                for (double& k : keep) k = rng_unit(rng) < cfg.dropout ? 0.0 : keep_scale;
            }
            std::fill(grad.params.begin(), grad.params.end(), 0.0);
            loss_and_gradient(net, rows, labels, &grad, keep);
            b1t *= cfg.beta1;
            b2t *= cfg.beta2;
            const double lr_t = cfg.learning_rate * std::sqrt(1.0 - b2t) / (1.0 - b1t);
            for (std::size_t p = 0; p < net.params.size(); ++p) {
                const double g = grad.params[p];
                m[p] = cfg.beta1 * m[p] + (1.0 - cfg.beta1) * g;
                v[p] = cfg.beta2 * v[p] + (1.0 - cfg.beta2) * g * g;
                net.params[p] -= lr_t * m[p] / (std::sqrt(v[p]) + cfg.epsilon * std::sqrt(1.0 - b2t));
            }
        }
    }
    for (double x : net.params)
        if (!std::isfinite(x)) throw DegenerateData("training diverged");
    return MlpModel::from_network(net, st.mean, st.stdev);
}

// ---------------------------------------------------------------------------
// Variants over feature tables

enum class Variant { Multiclass, Bin, BinMultiple };

inline std::string to_string(Variant v) {
    switch (v) {
        case Variant::Multiclass: return "multiclass";
        case Variant::Bin: return "bin";
        case Variant::BinMultiple: return "bin-multiple";
    }
    return "?";
}

inline Variant parse_variant(const std::string& s) {
    if (s == "multiclass") return Variant::Multiclass;
    if (s == "bin") return Variant::Bin;
    if (s == "bin-multiple") return Variant::BinMultiple;
    throw ConfigError("unknown variant '" + s + "' (expected multiclass|bin|bin-multiple)");
}

struct UnseenThreshold {
    double tau = 0.0;
    double target_neg_accuracy = 0.9;
    double validation_fraction = 0.2;
    double achieved_accuracy = 0.0;  // on the validation negatives
    bool unachievable = false;
};

// Everything needed to turn a full-layout feature vector into a verdict.
struct ModelBundle {
    Variant variant = Variant::Multiclass;
    std::string registry_fingerprint;
    std::uint64_t seed = 0;
    int n = 0;
    FeatureGroup group = FeatureGroup::Combined;
    int k = kMetricCount;
    double holdout = 0.0;  // fraction of training negatives withheld for calibration
    std::optional<UnseenThreshold> unseen;
    std::vector<MlpModel> models;  // 1 for multiclass/bin, n for bin-multiple

    int block_width() const { return sliced_width(1, group, k); }
};

// Training negatives withheld for calibrating the unseen threshold:
// a seeded draw of round(fraction * #negatives) label-0 rows.
inline std::vector<std::size_t> holdout_negative_rows(const FeatureTable& t, double fraction, std::uint64_t seed) {
    std::vector<std::size_t> neg;
    for (std::size_t i = 0; i < t.rows.size(); ++i)
        if (t.rows[i].label == 0) neg.push_back(i);
    const auto count = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(neg.size())));
    std::mt19937_64 rng(mix64(seed, 0x401dULL));
    shuffle_indices(neg, rng);
    neg.resize(std::min(count, neg.size()));
    std::sort(neg.begin(), neg.end());
    return neg;
}

struct TrainOptions {
    Variant variant = Variant::Multiclass;
    FeatureGroup group = FeatureGroup::Combined;
    int k = kMetricCount;
    double holdout = 0.0;
    TrainConfig cfg;
};

inline ModelBundle train_bundle(const FeatureTable& table, const TrainOptions& opt) {
    if (table.rows.empty()) throw DegenerateData("empty feature table");
    if (opt.holdout < 0.0 || opt.holdout >= 1.0) throw PreconditionError("holdout must be in [0,1)");
    ModelBundle b;
    b.variant = opt.variant;
    b.registry_fingerprint = table.registry_fingerprint;
    b.seed = opt.cfg.seed;
    b.n = table.n;
    b.group = opt.group;
    b.k = opt.k;
    b.holdout = opt.holdout;

    std::vector<char> skip(table.rows.size(), 0);
    for (auto i : holdout_negative_rows(table, opt.holdout, opt.cfg.seed)) skip[i] = 1;
    std::vector<const FeatureRow*> rows;
    for (std::size_t i = 0; i < table.rows.size(); ++i) {
        const auto& r = table.rows[i];
        if (r.label == kUnseenLabel) throw PreconditionError("training rows cannot carry the unseen label ('" + r.pair_id + "')");
        if (static_cast<int>(r.values.size()) != table.width())
            throw DimensionMismatch("row '" + r.pair_id + "' has " + std::to_string(r.values.size()) + " features");
        if (!skip[i]) rows.push_back(&r);
    }
    const int w = b.block_width();
    switch (opt.variant) {
        case Variant::Multiclass: {
            Dataset d;
            for (const auto* r : rows) {
                d.x.push_back(slice_features(r->values, opt.group, opt.k));
                d.y.push_back(r->label);
            }
            b.models.push_back(train_mlp(d, table.n + 1, opt.cfg));
            break;
        }
        case Variant::Bin: {
            // n samples per pair, all carrying the pair's edited/not-edited label.
            Dataset d;
            for (const auto* r : rows) {
                const auto s = slice_features(r->values, opt.group, opt.k);
                for (int i = 1; i <= table.n; ++i) {
                    d.x.emplace_back(s.begin() + (i - 1) * w, s.begin() + i * w);
                    d.y.push_back(r->label != 0 ? 1 : 0);
                }
            }
            b.models.push_back(train_mlp(d, 2, opt.cfg));
            break;
        }
        case Variant::BinMultiple: {
            // Model i sees block i of editor i's positives and of the negatives.
            for (int i = 1; i <= table.n; ++i) {
                Dataset d;
                for (const auto* r : rows) {
                    if (r->label != 0 && r->label != i) continue;
                    const auto s = slice_features(r->values, opt.group, opt.k);
                    d.x.emplace_back(s.begin() + (i - 1) * w, s.begin() + i * w);
                    d.y.push_back(r->label == i ? 1 : 0);
                }
                TrainConfig c = opt.cfg;
                c.seed = mix64(opt.cfg.seed, static_cast<std::uint64_t>(i));
                b.models.push_back(train_mlp(d, 2, c));
            }
            break;
        }
    }
    return b;
}

// Decision from (n+1) probabilities: argmax with lowest-index tie-break.
inline Verdict verdict_from_probabilities(std::vector<double> p) {
    const int best = argmax_lowest(p);
    return best == 0 ? Verdict::non_edited(std::move(p)) : Verdict::edited_by(best, std::move(p));
}

inline Verdict predict(const MlpModel& model, const FeatureVector& x) { return verdict_from_probabilities(model.probabilities(x)); }

// argmax != 0 wins; otherwise non-edited only when p0 exceeds tau.
inline Verdict apply_unseen_rule(std::vector<double> p, double tau) {
    const int best = argmax_lowest(p);
    if (best != 0) return Verdict::edited_by(best, std::move(p));
    if (p[0] > tau) return Verdict::non_edited(std::move(p));
    return Verdict::unseen(std::move(p));
}

inline Verdict predict_with_unseen(const MlpModel& model, const FeatureVector& x, const std::optional<UnseenThreshold>& th) {
    if (!th) throw MissingThreshold("model has no calibrated unseen threshold");
    return apply_unseen_rule(model.probabilities(x), th->tau);
}

// Binary per-block decision: positive if any block's positive probability
// wins; attribution to the most confident block. The (n+1) probabilities are
// p0 = prod(1 - q_i) and p_i = (1 - p0) q_i / sum(q).
inline Verdict combine_block_scores(const std::vector<double>& q) {
    const int n = static_cast<int>(q.size());
    double p0 = 1.0, sum = 0.0;
    for (double v : q) {
        p0 *= 1.0 - v;
        sum += v;
    }
    std::vector<double> p(static_cast<std::size_t>(n) + 1, 0.0);
    p[0] = p0;
    for (int i = 0; i < n; ++i) p[i + 1] = sum > 0.0 ? (1.0 - p0) * q[i] / sum : 0.0;
    int best = -1;
    for (int i = 0; i < n; ++i)
        if (q[i] > 0.5 && (best < 0 || q[i] > q[best])) best = i;
    if (best < 0) return Verdict::non_edited(std::move(p));
    return Verdict::edited_by(best + 1, std::move(p));
}

inline Verdict predict_bin(const std::vector<const MlpModel*>& models, const std::vector<FeatureVector>& blocks) {
    if (models.size() != 1 && models.size() != blocks.size()) throw DimensionMismatch("need 1 or n binary models");
    std::vector<double> q;
    for (std::size_t i = 0; i < blocks.size(); ++i) q.push_back(models[models.size() == 1 ? 0 : i]->probabilities(blocks[i])[1]);
    return combine_block_scores(q);
}

namespace detail {

inline FeatureVector bundle_input(const ModelBundle& b, const FeatureVector& full) {
    if (static_cast<int>(full.size()) != b.n * kBlockWidth)
        throw DimensionMismatch("expected " + std::to_string(b.n * kBlockWidth) + " features, got " + std::to_string(full.size()));
    return slice_features(full, b.group, b.k);
}

// Positive probability of each block under the binary variants.
inline std::vector<double> block_scores(const ModelBundle& b, const FeatureVector& sliced) {
    const int w = b.block_width();
    std::vector<double> q;
    for (int i = 0; i < b.n; ++i) {
        const FeatureVector block(sliced.begin() + i * w, sliced.begin() + (i + 1) * w);
        q.push_back(b.models[b.models.size() == 1 ? 0 : static_cast<std::size_t>(i)].probabilities(block)[1]);
    }
    return q;
}

}  // namespace detail

inline std::vector<double> bundle_probabilities(const ModelBundle& b, const FeatureVector& full) {
    const auto s = detail::bundle_input(b, full);
    if (b.variant == Variant::Multiclass) return b.models.front().probabilities(s);
    return combine_block_scores(detail::block_scores(b, s)).probabilities;
}

// Verdict for a full-layout vector; applies the unseen rule when the bundle
// carries a threshold.
inline Verdict predict_bundle(const ModelBundle& b, const FeatureVector& full) {
    const auto s = detail::bundle_input(b, full);
    if (b.variant != Variant::Multiclass) return combine_block_scores(detail::block_scores(b, s));
    auto p = b.models.front().probabilities(s);
    if (b.unseen) return apply_unseen_rule(std::move(p), b.unseen->tau);
    return verdict_from_probabilities(std::move(p));
}

// ---------------------------------------------------------------------------
// Unseen threshold

// Accuracy on negatives of the unseen rule at a given tau.
inline double negative_accuracy(const std::vector<std::vector<double>>& probs, double tau) {
    std::size_t ok = 0;
    for (const auto& p : probs) ok += !apply_unseen_rule(p, tau).is_edited();
    return probs.empty() ? 0.0 : static_cast<double>(ok) / static_cast<double>(probs.size());
}

// Largest tau (midpoint between straddling sorted p0 values) that keeps
// accuracy on the validation negatives at or above the target. Rows whose
// argmax is not 0 are misclassified at every tau.
inline UnseenThreshold calibrate_from_probabilities(const std::vector<std::vector<double>>& probs, double target) {
    if (probs.size() < 20) throw PreconditionError("calibration needs >= 20 validation negatives, got " + std::to_string(probs.size()));
    if (!(target > 0.0 && target <= 1.0)) throw PreconditionError("target accuracy must be in (0,1]");
    std::vector<double> p0;
    for (const auto& p : probs)
        if (argmax_lowest(p) == 0) p0.push_back(p[0]);
    std::sort(p0.begin(), p0.end());
    const auto m = static_cast<double>(probs.size());
    const auto need = static_cast<long long>(std::ceil(target * m - 1e-9));
    const long long allowed = static_cast<long long>(p0.size()) - need;
    UnseenThreshold th;
    th.target_neg_accuracy = target;
    if (allowed < 0) {
        th.tau = 0.0;
        th.unachievable = true;
    } else {
        const double hi = p0[static_cast<std::size_t>(allowed)];
        double lo = 0.0;
        for (auto i = allowed; i-- > 0;)
            if (p0[static_cast<std::size_t>(i)] < hi) {
                lo = p0[static_cast<std::size_t>(i)];
                break;
            }
        th.tau = 0.5 * (lo + hi);
    }
    th.achieved_accuracy = negative_accuracy(probs, th.tau);
    return th;
}

inline UnseenThreshold calibrate_unseen(const ModelBundle& b, const std::vector<FeatureRow>& negatives, double target = 0.9) {
    if (b.variant != Variant::Multiclass) throw PreconditionError("unseen calibration applies to the multiclass variant");
    std::vector<std::vector<double>> probs;
    for (const auto& r : negatives) {
        if (r.label != 0) throw PreconditionError("calibration row '" + r.pair_id + "' is not a negative");
        probs.push_back(bundle_probabilities(b, r.values));
    }
    auto th = calibrate_from_probabilities(probs, target);
    th.validation_fraction = b.holdout;
    return th;
}

// ---------------------------------------------------------------------------
// Checkpoint text format

namespace detail {

inline void write_values(std::ostream& out, const char* tag, const std::vector<double>& v) {
    out << tag;
    for (double x : v) out << ' ' << format_g9(x);
    out << '\n';
}

class TokenReader {
public:
    explicit TokenReader(std::istream& in) : in_(in) {}

    std::vector<std::string> line(const std::string& expect_tag) {
        std::string raw;
        while (std::getline(in_, raw)) {
            ++lineno_;
            if (!raw.empty() && raw.back() == '\r') raw.pop_back();
            if (raw.empty() || raw.front() == '#') continue;
            std::vector<std::string> toks;
            for (auto t : split(raw, ' '))
                if (!t.empty()) toks.emplace_back(t);
            if (toks.empty() || toks.front() != expect_tag) throw ParseError(lineno_, "expected '" + expect_tag + "'");
            return toks;
        }
        throw ParseError(lineno_, "unexpected end of checkpoint (wanted '" + expect_tag + "')");
    }

    std::vector<double> values(const std::string& tag, std::size_t count) {
        auto toks = line(tag);
        if (toks.size() != count + 1)
            throw ParseError(lineno_, "'" + tag + "' needs " + std::to_string(count) + " values, got " + std::to_string(toks.size() - 1));
        std::vector<double> v;
        for (std::size_t i = 1; i < toks.size(); ++i) {
            auto x = parse_double(toks[i]);
            if (!x || !std::isfinite(*x)) throw ParseError(lineno_, "bad number '" + toks[i] + "'");
            v.push_back(as_stored(*x));
        }
        return v;
    }

    std::string word(const std::string& tag) {
        auto toks = line(tag);
        if (toks.size() != 2) throw ParseError(lineno_, "'" + tag + "' takes one value");
        return toks[1];
    }

    long long integer(const std::string& tag) {
        auto w = word(tag);
        auto v = parse_int(w);
        if (!v) throw ParseError(lineno_, "'" + tag + "' must be an integer");
        return *v;
    }

    double number(const std::string& tag) {
        auto w = word(tag);
        auto v = parse_double(w);
        if (!v) throw ParseError(lineno_, "'" + tag + "' must be a number");
        return *v;
    }

    std::size_t lineno() const { return lineno_; }

private:
    std::istream& in_;
    std::size_t lineno_ = 0;
};

}  // namespace detail

inline void write_bundle(std::ostream& out, const ModelBundle& b) {
    out << "edittrack-model v1\n";
    out << "variant " << to_string(b.variant) << "\n";
    out << "registry " << b.registry_fingerprint << "\n";
    out << "seed " << b.seed << "\n";
    out << "n " << b.n << "\n";
    out << "group " << to_string(b.group) << "\n";
    out << "k " << b.k << "\n";
    out << "holdout " << format_g17(b.holdout) << "\n";
    if (b.unseen)
        out << "tau " << format_g17(b.unseen->tau) << " target " << format_g17(b.unseen->target_neg_accuracy) << " achieved "
            << format_g17(b.unseen->achieved_accuracy) << " unachievable " << (b.unseen->unachievable ? 1 : 0) << "\n";
    else
        out << "tau none\n";
    out << "models " << b.models.size() << "\n";
    for (const auto& m : b.models) {
        out << "dims " << m.input << ' ' << m.hidden << ' ' << m.output << "\n";
        detail::write_values(out, "mean", m.mean);
        detail::write_values(out, "std", m.stdev);
        detail::write_values(out, "w1", m.w1);
        detail::write_values(out, "b1", m.b1);
        detail::write_values(out, "w2", m.w2);
        detail::write_values(out, "b2", m.b2);
    }
    out << "end\n";
}

inline ModelBundle parse_bundle(std::istream& in) {
    detail::TokenReader rd(in);
    auto head = rd.line("edittrack-model");
    if (head.size() != 2 || head[1] != "v1") throw ParseError(rd.lineno(), "unsupported checkpoint version");
    ModelBundle b;
    try {
        b.variant = parse_variant(rd.word("variant"));
        b.registry_fingerprint = rd.word("registry");
        b.seed = static_cast<std::uint64_t>(std::stoull(rd.word("seed")));
        b.n = static_cast<int>(rd.integer("n"));
        b.group = parse_feature_group(rd.word("group"));
        b.k = static_cast<int>(rd.integer("k"));
    } catch (const ConfigError& e) {
        throw ParseError(rd.lineno(), e.what());
    } catch (const std::logic_error&) {
        throw ParseError(rd.lineno(), "bad seed");
    }
    if (b.n < 1 || b.k < 1 || b.k > kMetricCount) throw ParseError(rd.lineno(), "bad n or k");
    b.holdout = rd.number("holdout");
    auto tau = rd.line("tau");
    if (tau.size() == 8 && tau[2] == "target" && tau[4] == "achieved" && tau[6] == "unachievable") {
        UnseenThreshold th;
        auto num = [&](std::size_t i) {
            auto v = parse_double(tau[i]);
            if (!v) throw ParseError(rd.lineno(), "bad tau line");
            return *v;
        };
        th.tau = num(1);
        th.target_neg_accuracy = num(3);
        th.achieved_accuracy = num(5);
        th.unachievable = num(7) != 0.0;
        th.validation_fraction = b.holdout;
        b.unseen = th;
    } else if (!(tau.size() == 2 && tau[1] == "none")) {
        throw ParseError(rd.lineno(), "bad tau line");
    }
    const auto count = rd.integer("models");
    const int expected = b.variant == Variant::BinMultiple ? b.n : 1;
    if (count != expected) throw ParseError(rd.lineno(), "expected " + std::to_string(expected) + " models");
    for (long long i = 0; i < count; ++i) {
        auto dims = rd.line("dims");
        if (dims.size() != 4) throw ParseError(rd.lineno(), "dims takes 3 values");
        MlpModel m;
        auto dim = [&](const std::string& s) {
            auto v = parse_int(s);
            if (!v || *v < 1) throw ParseError(rd.lineno(), "bad dimension");
            return static_cast<int>(*v);
        };
        m.input = dim(dims[1]);
        m.hidden = dim(dims[2]);
        m.output = dim(dims[3]);
        m.mean = rd.values("mean", m.input);
        m.stdev = rd.values("std", m.input);
        for (double s : m.stdev)
            if (!(s > 0.0)) throw ParseError(rd.lineno(), "std entries must be > 0");
        m.w1 = rd.values("w1", static_cast<std::size_t>(m.hidden) * m.input);
        m.b1 = rd.values("b1", m.hidden);
        m.w2 = rd.values("w2", static_cast<std::size_t>(m.output) * m.hidden);
        m.b2 = rd.values("b2", m.output);
        b.models.push_back(std::move(m));
    }
    rd.line("end");
    const int in_width = b.variant == Variant::Multiclass ? sliced_width(b.n, b.group, b.k) : b.block_width();
    const int out_width = b.variant == Variant::Multiclass ? b.n + 1 : 2;
    for (const auto& m : b.models)
        if (m.input != in_width || m.output != out_width) throw ParseError(rd.lineno(), "model dimensions do not match header");
    return b;
}

inline void save_bundle(const ModelBundle& b, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    write_bundle(out, b);
    if (!out) throw IoError("write failed: " + path.string());
}

inline ModelBundle load_bundle(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open model " + path.string());
    return parse_bundle(in);
}

}  // namespace edittrack
