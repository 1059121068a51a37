#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "pcad/nn.hpp"
#include "pcad/rng.hpp"

namespace pcad::fusion {

// Channel 0 carries the 3D expert map X1, channel 1 the 2D expert map X2.
constexpr std::size_t kChannels = 2;

// ---------------------------------------------------------------------------
// Score normalization. Statistics are frozen on the training pool and reused
// verbatim at inference.
// ---------------------------------------------------------------------------

struct NormStats {
    double mean[kChannels] = {0.0, 0.0};
    double std[kChannels] = {1.0, 1.0};
};

inline NormStats compute_norm_stats(const nn::Matrix& raw_rows) {
    if (raw_rows.cols != kChannels) throw std::invalid_argument("expected 2 score channels");
    if (raw_rows.rows == 0) throw std::invalid_argument("empty score pool");
    NormStats s;
    for (std::size_t c = 0; c < kChannels; ++c) {
        double mean = 0.0;
        for (std::size_t r = 0; r < raw_rows.rows; ++r) mean += raw_rows.at(r, c);
        mean /= static_cast<double>(raw_rows.rows);
        double var = 0.0;
        for (std::size_t r = 0; r < raw_rows.rows; ++r) {
            double d = raw_rows.at(r, c) - mean;
            var += d * d;
        }
        var /= static_cast<double>(raw_rows.rows);
        s.mean[c] = mean;
        s.std[c] = std::max(std::sqrt(var), 1e-6);  // constant channels clamp to 1e-6
    }
    return s;
}

inline nn::Matrix normalize_rows(const nn::Matrix& raw_rows, const NormStats& stats) {
    if (raw_rows.cols != kChannels) throw std::invalid_argument("expected 2 score channels");
    nn::Matrix out(raw_rows.rows, kChannels);
    for (std::size_t r = 0; r < raw_rows.rows; ++r)
        for (std::size_t c = 0; c < kChannels; ++c)
            out.at(r, c) = (raw_rows.at(r, c) - stats.mean[c]) / stats.std[c];
    return out;
}

// Normalized per-point score rows pooled across samples, with labels.
struct FusionBatch {
    nn::Matrix rows;  // N x 2, normalized
    std::vector<int> labels;
    NormStats stats;

    std::size_t size() const { return rows.rows; }
};

inline FusionBatch make_fusion_batch(const nn::Matrix& raw_rows,
                                     const std::vector<int>& labels) {
    if (raw_rows.rows != labels.size()) throw std::invalid_argument("label count mismatch");
    FusionBatch b;
    b.stats = compute_norm_stats(raw_rows);
    b.rows = normalize_rows(raw_rows, b.stats);
    b.labels = labels;
    return b;
}

// ---------------------------------------------------------------------------
// Baseline constant b: each raw expert channel is bridged to a probability
// with a 1-D logistic fit, and b is the smaller of the two resulting mean
// cross-entropies.
// ---------------------------------------------------------------------------

struct LogisticCalibration {
    double scale = 0.0;
    double offset = 0.0;

    double prob(double x) const { return 1.0 / (1.0 + std::exp(-(scale * x + offset))); }
};

struct BaselineConstant {
    double b = 0.0;
    double c_2d = 0.0;  // calibrated CE of the 2D expert channel (X2)
    double c_3d = 0.0;  // calibrated CE of the 3D expert channel (X1)
    LogisticCalibration calib_3d;
    LogisticCalibration calib_2d;
};

namespace detail {

inline double binary_ce(double p, int y) {
    p = std::min(std::max(p, 1e-12), 1.0 - 1e-12);
    return y ? -std::log(p) : -std::log(1.0 - p);
}

struct LogisticFit {
    LogisticCalibration calib;
    double mean_ce = 0.0;
};

// Deterministic damped Newton on the convex 1-D logistic objective; runs to
// a 1e-8 gradient tolerance (separable channels walk toward zero CE until
// the iteration cap).
inline LogisticFit fit_logistic_1d(const nn::Matrix& rows, std::size_t channel,
                                   const std::vector<int>& labels) {
    const std::size_t n = rows.rows;
    auto mean_ce_at = [&](double a, double d) {
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double p = 1.0 / (1.0 + std::exp(-(a * rows.at(i, channel) + d)));
            total += binary_ce(p, labels[i]);
        }
        return total / static_cast<double>(n);
    };

    double a = 0.0, d = 0.0;
    double ce = mean_ce_at(a, d);
    for (int iter = 0; iter < 500; ++iter) {
        double g0 = 0.0, g1 = 0.0, h00 = 0.0, h01 = 0.0, h11 = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double x = rows.at(i, channel);
            double p = 1.0 / (1.0 + std::exp(-(a * x + d)));
            double e = p - static_cast<double>(labels[i]);
            double w = p * (1.0 - p);
            g0 += e * x;
            g1 += e;
            h00 += w * x * x;
            h01 += w * x;
            h11 += w;
        }
        double inv_n = 1.0 / static_cast<double>(n);
        g0 *= inv_n;
        g1 *= inv_n;
        h00 = h00 * inv_n + 1e-12;
        h01 *= inv_n;
        h11 = h11 * inv_n + 1e-12;
        if (std::sqrt(g0 * g0 + g1 * g1) < 1e-8) break;
        double det = h00 * h11 - h01 * h01;
        double step_a, step_d;
        if (std::abs(det) < 1e-300) {
            step_a = g0;  // fall back to plain gradient descent
            step_d = g1;
        } else {
            step_a = (h11 * g0 - h01 * g1) / det;
            step_d = (h00 * g1 - h01 * g0) / det;
        }
        double t = 1.0;
        double next_ce = mean_ce_at(a - t * step_a, d - t * step_d);
        int backtracks = 0;
        while (next_ce > ce && backtracks++ < 40) {
            t *= 0.5;
            next_ce = mean_ce_at(a - t * step_a, d - t * step_d);
        }
        if (next_ce > ce) break;  // no descent direction left at this precision
        a -= t * step_a;
        d -= t * step_d;
        if (ce - next_ce < 1e-14 && iter > 2) {
            ce = next_ce;
            break;
        }
        ce = next_ce;
    }
    return {{a, d}, ce};
}

}  // namespace detail

// b = min(C_2d, C_3d): the bar the fused model must clear. Computed once
// before training; the expert maps do not change while the fuser trains.
inline BaselineConstant compute_baseline_b(const FusionBatch& batch) {
    bool has_pos = false, has_neg = false;
    for (int y : batch.labels) (y ? has_pos : has_neg) = true;
    if (!has_pos || !has_neg)
        throw std::runtime_error("cannot calibrate: one class absent");
    auto f3 = detail::fit_logistic_1d(batch.rows, 0, batch.labels);
    auto f2 = detail::fit_logistic_1d(batch.rows, 1, batch.labels);
    BaselineConstant out;
    out.calib_3d = f3.calib;
    out.calib_2d = f2.calib;
    out.c_3d = f3.mean_ce;
    out.c_2d = f2.mean_ce;
    out.b = std::min(out.c_2d, out.c_3d);
    return out;
}

// ---------------------------------------------------------------------------
// Selector and predictor networks: shared per-row MLPs ending in a softmax.
// ---------------------------------------------------------------------------

struct SelectorNet {
    nn::Mlp net;  // 2 -> hidden... -> 2, softmax head

    // A zeroed head makes the initial weights exactly (0.5, 0.5): fusion
    // starts from equal contributions.
    static SelectorNet make(const std::vector<std::size_t>& hidden, Rng& rng,
                            bool zero_head = true) {
        std::vector<std::size_t> dims{kChannels};
        dims.insert(dims.end(), hidden.begin(), hidden.end());
        dims.push_back(kChannels);
        std::vector<nn::Activation> acts(dims.size() - 1, nn::Activation::Relu);
        acts.back() = nn::Activation::Softmax;
        SelectorNet s{nn::Mlp::make(dims, acts)};
        s.net.init_uniform(rng);
        if (zero_head) s.net.zero_last_layer();
        return s;
    }
};

struct PredictorNet {
    nn::Mlp net;  // 2 -> hidden... -> 2 classes, softmax head

    static PredictorNet make(const std::vector<std::size_t>& hidden, Rng& rng) {
        std::vector<std::size_t> dims{kChannels};
        dims.insert(dims.end(), hidden.begin(), hidden.end());
        dims.push_back(2);
        std::vector<nn::Activation> acts(dims.size() - 1, nn::Activation::Relu);
        acts.back() = nn::Activation::Softmax;
        PredictorNet p{nn::Mlp::make(dims, acts)};
        p.net.init_uniform(rng);
        return p;
    }
};

// Per-row importance weights S on the 2-simplex.
inline nn::Matrix selector_forward(const SelectorNet& sel, const nn::Matrix& rows) {
    return nn::forward(sel.net, rows).output();
}

struct PredictorOutput {
    nn::Matrix probs;        // N x 2
    std::vector<double> a;   // anomaly score: probability of class 1
};

// The predictor consumes the importance-weighted scores X (.) S.
inline PredictorOutput predictor_forward(const PredictorNet& pred, const nn::Matrix& rows,
                                         const nn::Matrix& weights) {
    if (rows.rows != weights.rows || rows.cols != weights.cols)
        throw std::invalid_argument("rows/weights shape mismatch");
    nn::Matrix gated(rows.rows, rows.cols);
    for (std::size_t i = 0; i < gated.data.size(); ++i)
        gated.data[i] = rows.data[i] * weights.data[i];
    PredictorOutput out;
    out.probs = nn::forward(pred.net, gated).output();
    out.a.resize(rows.rows);
    for (std::size_t r = 0; r < rows.rows; ++r) out.a[r] = out.probs.at(r, 1);
    return out;
}

// ---------------------------------------------------------------------------
// Losses
// ---------------------------------------------------------------------------

struct SelectorLoss {
    double value = 0.0;
    nn::Gradients grads;            // w.r.t. selector parameters
    std::vector<double> per_row_r;  // gate values
    std::vector<double> per_row_h;  // entropy values
};

// L_s = (1/N) sum_rows r(x) * H(x). The gate r clamps at zero once the
// fused cross-entropy beats b - m, freezing exploration; gradients flow both
// through the gate (via the predictor, with phi frozen) and the entropy.
inline SelectorLoss selector_loss(const SelectorNet& sel, const PredictorNet& pred,
                                  const FusionBatch& batch, double b, double margin) {
    if (margin < 0.0) throw std::invalid_argument("margin must be >= 0");
    const std::size_t n = batch.size();
    if (n == 0) throw std::invalid_argument("empty batch");
    const double inv_n = 1.0 / static_cast<double>(n);

    auto sel_trace = nn::forward(sel.net, batch.rows);
    const nn::Matrix& s = sel_trace.output();
    nn::Matrix gated(n, kChannels);
    for (std::size_t i = 0; i < gated.data.size(); ++i)
        gated.data[i] = batch.rows.data[i] * s.data[i];
    auto pred_trace = nn::forward(pred.net, gated);
    const nn::Matrix& p = pred_trace.output();

    SelectorLoss out;
    out.per_row_r.resize(n);
    out.per_row_h.resize(n);
    nn::Matrix pred_upstream(n, 2);  // d[(1/N) sum r*H]/dp through the gate term
    for (std::size_t r = 0; r < n; ++r) {
        auto y = static_cast<std::size_t>(batch.labels[r]);
        double f_y = p.at(r, y);
        double gate = margin - (b + nn::clamped_log(f_y));
        double rv = std::max(gate, 0.0);
        double h = 0.0;
        for (std::size_t c = 0; c < kChannels; ++c) {
            double sc = s.at(r, c);
            h -= sc * nn::clamped_log(sc);
        }
        out.per_row_r[r] = rv;
        out.per_row_h[r] = h;
        out.value += rv * h * inv_n;
        if (rv > 0.0 && f_y > 1e-12)
            pred_upstream.at(r, y) = -h * inv_n / f_y;  // d(r)/d f_y * H / N
    }

    auto pred_grads = nn::backward(pred.net, pred_trace, pred_upstream);
    // dL/dS: gate path through the predictor input, plus the entropy path
    nn::Matrix ds(n, kChannels);
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < kChannels; ++c) {
            double gate_path = pred_grads.dinput.at(r, c) * batch.rows.at(r, c);
            double sc = std::max(s.at(r, c), 1e-12);
            double entropy_path =
                -out.per_row_r[r] * inv_n * (nn::clamped_log(sc) + 1.0);
            ds.at(r, c) = gate_path + entropy_path;
        }
    out.grads = nn::backward(sel.net, sel_trace, ds);
    return out;
}

struct PredictorLoss {
    double value = 0.0;
    nn::Gradients grads;  // w.r.t. predictor parameters
};

// Mean cross-entropy of the predictor on the importance-weighted scores; the
// selector output is a constant here (no gradient to theta through L_p).
inline PredictorLoss predictor_loss(const SelectorNet& sel, const PredictorNet& pred,
                                    const FusionBatch& batch) {
    const std::size_t n = batch.size();
    if (n == 0) throw std::invalid_argument("empty batch");
    auto s = selector_forward(sel, batch.rows);
    nn::Matrix gated(n, kChannels);
    for (std::size_t i = 0; i < gated.data.size(); ++i)
        gated.data[i] = batch.rows.data[i] * s.data[i];
    auto trace = nn::forward(pred.net, gated);
    const nn::Matrix& p = trace.output();

    PredictorLoss out;
    nn::Matrix upstream(n, 2);
    for (std::size_t r = 0; r < n; ++r) {
        auto y = static_cast<std::size_t>(batch.labels[r]);
        double f_y = p.at(r, y);
        out.value -= nn::clamped_log(f_y);
        if (f_y > 1e-12)
            upstream.at(r, y) = -1.0 / (f_y * static_cast<double>(n));
    }
    out.value /= static_cast<double>(n);
    out.grads = nn::backward(pred.net, trace, upstream);
    return out;
}

inline double final_loss(double l_p, double l_s, double lambda) {
    if (lambda < 0.0) throw std::invalid_argument("lambda must be >= 0");
    return l_p + lambda * l_s;
}

// ---------------------------------------------------------------------------
// Training (Stage 1) and fused inference (Stage 2)
// ---------------------------------------------------------------------------

struct IafConfig {
    double margin = 0.1;
    double lambda = 1.0;
    int epochs = 150;
    int batch_size = 32;
    double lr = 0.01;
    double weight_decay = 1e-2;
    std::vector<std::size_t> selector_hidden{16, 16};
    std::vector<std::size_t> predictor_hidden{16, 16};
    bool zero_init_selector_head = true;
    bool joint_routing = false;  // ablation: route L_p gradients into theta too
    std::uint64_t seed = 0;
};

struct EpochLosses {
    double l_p = 0.0;
    double l_s = 0.0;
    double l_final = 0.0;
};

struct IafModel {
    SelectorNet selector;
    PredictorNet predictor;
    BaselineConstant baseline;
    NormStats stats;
    std::vector<EpochLosses> history;
};

namespace detail {

// L_p gradient w.r.t. the selector (used only under joint routing).
inline nn::Gradients predictor_loss_selector_grads(const SelectorNet& sel,
                                                   const PredictorNet& pred,
                                                   const FusionBatch& batch) {
    const std::size_t n = batch.size();
    auto sel_trace = nn::forward(sel.net, batch.rows);
    const nn::Matrix& s = sel_trace.output();
    nn::Matrix gated(n, kChannels);
    for (std::size_t i = 0; i < gated.data.size(); ++i)
        gated.data[i] = batch.rows.data[i] * s.data[i];
    auto trace = nn::forward(pred.net, gated);
    const nn::Matrix& p = trace.output();
    nn::Matrix upstream(n, 2);
    for (std::size_t r = 0; r < n; ++r) {
        auto y = static_cast<std::size_t>(batch.labels[r]);
        double f_y = p.at(r, y);
        if (f_y > 1e-12) upstream.at(r, y) = -1.0 / (f_y * static_cast<double>(n));
    }
    auto pred_grads = nn::backward(pred.net, trace, upstream);
    nn::Matrix ds(n, kChannels);
    for (std::size_t i = 0; i < ds.data.size(); ++i)
        ds.data[i] = pred_grads.dinput.data[i] * batch.rows.data[i];
    return nn::backward(sel.net, sel_trace, ds);
}

inline FusionBatch slice_batch(const FusionBatch& full, const std::vector<std::size_t>& order,
                               std::size_t begin, std::size_t end) {
    FusionBatch b;
    b.stats = full.stats;
    b.rows = nn::Matrix(end - begin, kChannels);
    b.labels.resize(end - begin);
    for (std::size_t i = begin; i < end; ++i) {
        std::size_t src = order[i];
        for (std::size_t c = 0; c < kChannels; ++c)
            b.rows.at(i - begin, c) = full.rows.at(src, c);
        b.labels[i - begin] = full.labels[src];
    }
    return b;
}

inline void scale_gradients(nn::Gradients& g, double factor) {
    for (auto& layer : g.dweights)
        for (auto& v : layer) v *= factor;
    for (auto& layer : g.dbias)
        for (auto& v : layer) v *= factor;
}

}  // namespace detail

// Stage 1: freeze b from the pooled training scores, then per shuffled
// mini-batch update phi with dL_p and theta with lambda * dL_s under AdamW
// and a cosine schedule. Deterministic for a fixed seed.
inline IafModel train_iaf(const nn::Matrix& raw_rows, const std::vector<int>& labels,
                          const IafConfig& cfg) {
    if (cfg.epochs < 1 || cfg.batch_size < 1) throw std::invalid_argument("bad training config");
    IafModel model;
    FusionBatch full = make_fusion_batch(raw_rows, labels);
    model.stats = full.stats;
    model.baseline = compute_baseline_b(full);

    Rng rng(cfg.seed);
    model.selector = SelectorNet::make(cfg.selector_hidden, rng, cfg.zero_init_selector_head);
    model.predictor = PredictorNet::make(cfg.predictor_hidden, rng);
    auto sel_opt = nn::AdamWState::for_net(model.selector.net, cfg.weight_decay);
    auto pred_opt = nn::AdamWState::for_net(model.predictor.net, cfg.weight_decay);

    const std::size_t n = full.size();
    const auto bs = static_cast<std::size_t>(cfg.batch_size);
    const std::size_t batches_per_epoch = (n + bs - 1) / bs;
    nn::LrSchedule sched{cfg.lr,
                         static_cast<long>(batches_per_epoch) * static_cast<long>(cfg.epochs)};

    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    long step = 0;
    int high_loss_epochs = 0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.uniform_index(i)]);
        EpochLosses losses;
        for (std::size_t begin = 0; begin < n; begin += bs) {
            std::size_t end = std::min(begin + bs, n);
            FusionBatch mb = detail::slice_batch(full, order, begin, end);

            auto lp = predictor_loss(model.selector, model.predictor, mb);
            auto ls = selector_loss(model.selector, model.predictor, mb, model.baseline.b,
                                    cfg.margin);
            double lr = nn::lr_at(sched, step++);
            nn::adamw_step(pred_opt, model.predictor.net, lp.grads, lr);
            if (cfg.lambda > 0.0 || cfg.joint_routing) {
                nn::Gradients theta = ls.grads;
                detail::scale_gradients(theta, cfg.lambda);
                if (cfg.joint_routing) {
                    auto extra = detail::predictor_loss_selector_grads(model.selector,
                                                                       model.predictor, mb);
                    theta.accumulate(extra);
                }
                nn::adamw_step(sel_opt, model.selector.net, theta, lr);
            }
            double w = static_cast<double>(end - begin) / static_cast<double>(n);
            losses.l_p += lp.value * w;
            losses.l_s += ls.value * w;
        }
        losses.l_final = final_loss(losses.l_p, losses.l_s, cfg.lambda);
        model.history.push_back(losses);

        if (losses.l_final > 10.0 * model.history.front().l_final &&
            model.history.front().l_final > 0.0) {
            if (++high_loss_epochs >= 20) throw std::runtime_error("fusion training diverged");
        } else {
            high_loss_epochs = 0;
        }
    }
    return model;
}

// Stage 2: fused per-point anomaly probabilities.
inline std::vector<double> fuse_point_scores(const IafModel& model,
                                             const std::vector<double>& x1,
                                             const std::vector<double>& x2) {
    if (x1.size() != x2.size()) throw std::invalid_argument("score map size mismatch");
    nn::Matrix raw(x1.size(), kChannels);
    for (std::size_t r = 0; r < x1.size(); ++r) {
        raw.at(r, 0) = x1[r];
        raw.at(r, 1) = x2[r];
    }
    auto rows = normalize_rows(raw, model.stats);
    auto s = selector_forward(model.selector, rows);
    return predictor_forward(model.predictor, rows, s).a;
}

// Object-level fusion reuses the same shared-weight networks on the single
// row (s1, s2).
inline double fuse_object_scores(const IafModel& model, double s1, double s2) {
    auto a = fuse_point_scores(model, {s1}, {s2});
    return a[0];
}

// Mean selector weights per channel over a set of raw maps; the diagnostic
// for which expert the fuser trusts.
inline std::pair<double, double> mean_importance(const IafModel& model,
                                                 const std::vector<double>& x1,
                                                 const std::vector<double>& x2) {
    nn::Matrix raw(x1.size(), kChannels);
    for (std::size_t r = 0; r < x1.size(); ++r) {
        raw.at(r, 0) = x1[r];
        raw.at(r, 1) = x2[r];
    }
    auto s = selector_forward(model.selector, normalize_rows(raw, model.stats));
    double m1 = 0.0, m2 = 0.0;
    for (std::size_t r = 0; r < s.rows; ++r) {
        m1 += s.at(r, 0);
        m2 += s.at(r, 1);
    }
    return {m1 / static_cast<double>(s.rows), m2 / static_cast<double>(s.rows)};
}

// ---------------------------------------------------------------------------
// Baseline fusers (the comparison strategies)
// ---------------------------------------------------------------------------

enum class FusionStrategy { Iaf, Max, Add, Linear };

inline FusionStrategy parse_strategy(const std::string& s) {
    if (s == "iaf") return FusionStrategy::Iaf;
    if (s == "max") return FusionStrategy::Max;
    if (s == "add") return FusionStrategy::Add;
    if (s == "linear") return FusionStrategy::Linear;
    throw std::invalid_argument("unknown fusion strategy: " + s);
}

inline std::string strategy_name(FusionStrategy s) {
    switch (s) {
        case FusionStrategy::Iaf: return "iaf";
        case FusionStrategy::Max: return "max";
        case FusionStrategy::Add: return "add";
        case FusionStrategy::Linear: return "linear";
    }
    throw std::logic_error("unknown strategy");
}

struct LinearFuser {
    double w1 = 0.0, w2 = 0.0, w0 = 0.0;
};

// Least squares of labels on the normalized channels (plus intercept).
inline LinearFuser fit_linear_fuser(const FusionBatch& batch) {
    double a[3][3] = {};
    double rhs[3] = {};
    for (std::size_t r = 0; r < batch.size(); ++r) {
        double v[3] = {batch.rows.at(r, 0), batch.rows.at(r, 1), 1.0};
        double y = static_cast<double>(batch.labels[r]);
        for (int i = 0; i < 3; ++i) {
            rhs[i] += v[i] * y;
            for (int j = 0; j < 3; ++j) a[i][j] += v[i] * v[j];
        }
    }
    for (int i = 0; i < 3; ++i) a[i][i] += 1e-12;
    // Gaussian elimination with partial pivoting on the 3x3 normal equations
    int piv[3] = {0, 1, 2};
    for (int col = 0; col < 3; ++col) {
        int best = col;
        for (int r = col + 1; r < 3; ++r)
            if (std::abs(a[piv[r]][col]) > std::abs(a[piv[best]][col])) best = r;
        std::swap(piv[col], piv[best]);
        for (int r = col + 1; r < 3; ++r) {
            double f = a[piv[r]][col] / a[piv[col]][col];
            for (int c = col; c < 3; ++c) a[piv[r]][c] -= f * a[piv[col]][c];
            rhs[piv[r]] -= f * rhs[piv[col]];
        }
    }
    double w[3];
    for (int col = 2; col >= 0; --col) {
        double acc = rhs[piv[col]];
        for (int c = col + 1; c < 3; ++c) acc -= a[piv[col]][c] * w[c];
        w[col] = acc / a[piv[col]][col];
    }
    return {w[0], w[1], w[2]};
}

// max / add / linear over the normalized channels.
inline std::vector<double> baseline_fuse(const std::vector<double>& x1,
                                         const std::vector<double>& x2, const NormStats& stats,
                                         FusionStrategy strategy,
                                         const LinearFuser* linear = nullptr) {
    if (x1.size() != x2.size()) throw std::invalid_argument("score map size mismatch");
    if (strategy == FusionStrategy::Iaf)
        throw std::invalid_argument("iaf fusion runs through fuse_point_scores");
    if (strategy == FusionStrategy::Linear && linear == nullptr)
        throw std::runtime_error("linear fusion requires fitted weights");
    std::vector<double> out(x1.size());
    for (std::size_t i = 0; i < x1.size(); ++i) {
        double a = (x1[i] - stats.mean[0]) / stats.std[0];
        double b = (x2[i] - stats.mean[1]) / stats.std[1];
        switch (strategy) {
            case FusionStrategy::Max: out[i] = std::max(a, b); break;
            case FusionStrategy::Add: out[i] = a + b; break;
            case FusionStrategy::Linear:
                out[i] = linear->w1 * a + linear->w2 * b + linear->w0;
                break;
            case FusionStrategy::Iaf: break;  // unreachable
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Bundle serialization: one JSON file carrying both nets, the baseline, the
// normalization statistics, and an echo of the training configuration.
// ---------------------------------------------------------------------------

inline nlohmann::json bundle_to_json(const IafModel& model, const nlohmann::json& config_echo,
                                     const std::string& config_hash) {
    nlohmann::json j;
    j["selector"] = nn::mlp_to_json(model.selector.net);
    j["predictor"] = nn::mlp_to_json(model.predictor.net);
    j["b"] = model.baseline.b;
    j["c_2d"] = model.baseline.c_2d;
    j["c_3d"] = model.baseline.c_3d;
    j["calibration"] = {{"c3d_scale", model.baseline.calib_3d.scale},
                        {"c3d_offset", model.baseline.calib_3d.offset},
                        {"c2d_scale", model.baseline.calib_2d.scale},
                        {"c2d_offset", model.baseline.calib_2d.offset}};
    j["normalization"] = {{"mean", {model.stats.mean[0], model.stats.mean[1]}},
                          {"std", {model.stats.std[0], model.stats.std[1]}}};
    j["config"] = config_echo;
    j["config_hash"] = config_hash;
    return j;
}

struct LoadedBundle {
    IafModel model;
    nlohmann::json config_echo;
    std::string config_hash;
};

inline LoadedBundle bundle_from_json(const nlohmann::json& j) {
    LoadedBundle out;
    out.model.selector.net = nn::mlp_from_json(j.at("selector"));
    out.model.predictor.net = nn::mlp_from_json(j.at("predictor"));
    out.model.baseline.b = j.at("b").get<double>();
    out.model.baseline.c_2d = j.at("c_2d").get<double>();
    out.model.baseline.c_3d = j.at("c_3d").get<double>();
    const auto& cal = j.at("calibration");
    out.model.baseline.calib_3d = {cal.at("c3d_scale").get<double>(),
                                   cal.at("c3d_offset").get<double>()};
    out.model.baseline.calib_2d = {cal.at("c2d_scale").get<double>(),
                                   cal.at("c2d_offset").get<double>()};
    const auto& norm = j.at("normalization");
    for (std::size_t c = 0; c < kChannels; ++c) {
        out.model.stats.mean[c] = norm.at("mean")[c].get<double>();
        out.model.stats.std[c] = norm.at("std")[c].get<double>();
    }
    out.config_echo = j.value("config", nlohmann::json::object());
    out.config_hash = j.value("config_hash", "");
    return out;
}

}  // namespace pcad::fusion
