#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "pcad/geometry.hpp"
#include "pcad/memory_bank.hpp"
#include "pcad/nn.hpp"
#include "pcad/point_cloud.hpp"
#include "pcad/rng.hpp"

namespace pcad::sdf {

// Shared per-point MLP followed by an elementwise max-pool over the patch.
struct PointNetEncoder {
    nn::Mlp net;  // 3 -> hidden... -> d1

    std::size_t feature_dim() const { return net.output_dim(); }

    static PointNetEncoder make(const std::vector<std::size_t>& hidden, std::size_t d1,
                                Rng& rng) {
        std::vector<std::size_t> dims{3};
        dims.insert(dims.end(), hidden.begin(), hidden.end());
        dims.push_back(d1);
        std::vector<nn::Activation> acts(dims.size() - 1, nn::Activation::Relu);
        acts.back() = nn::Activation::Identity;
        PointNetEncoder enc{nn::Mlp::make(dims, acts)};
        enc.net.init_uniform(rng);
        return enc;
    }
};

// MLP from (query point ++ latent f1) to a scalar signed distance.
struct SdfDecoder {
    nn::Mlp net;  // (3 + d1) -> hidden... -> 1

    static SdfDecoder make(std::size_t d1, const std::vector<std::size_t>& hidden, Rng& rng) {
        std::vector<std::size_t> dims{3 + d1};
        dims.insert(dims.end(), hidden.begin(), hidden.end());
        dims.push_back(1);
        std::vector<nn::Activation> acts(dims.size() - 1, nn::Activation::Relu);
        acts.back() = nn::Activation::Identity;
        SdfDecoder dec{nn::Mlp::make(dims, acts)};
        dec.net.init_uniform(rng);
        return dec;
    }
};

namespace detail {

inline nn::Matrix members_matrix(const std::vector<Vec3>& pts) {
    nn::Matrix m(pts.size(), 3);
    for (std::size_t i = 0; i < pts.size(); ++i) {
        m.at(i, 0) = pts[i].x;
        m.at(i, 1) = pts[i].y;
        m.at(i, 2) = pts[i].z;
    }
    return m;
}

struct PooledEncoding {
    std::vector<double> f1;
    std::vector<std::size_t> argmax;  // first row attaining each max
    nn::ForwardTrace trace;
};

inline PooledEncoding encode_traced(const PointNetEncoder& enc, const std::vector<Vec3>& pts) {
    if (pts.empty()) throw std::invalid_argument("empty patch");
    PooledEncoding out;
    out.trace = nn::forward(enc.net, members_matrix(pts));
    const nn::Matrix& y = out.trace.output();
    out.f1.assign(y.cols, 0.0);
    out.argmax.assign(y.cols, 0);
    for (std::size_t c = 0; c < y.cols; ++c) {
        double best = y.at(0, c);
        std::size_t arg = 0;
        for (std::size_t r = 1; r < y.rows; ++r)
            if (y.at(r, c) > best) {
                best = y.at(r, c);
                arg = r;
            }
        out.f1[c] = best;
        out.argmax[c] = arg;
    }
    return out;
}

}  // namespace detail

// f1 = elementwise max over per-point embeddings of the centered patch.
inline std::vector<double> encode_patch(const PointNetEncoder& enc,
                                        const std::vector<Vec3>& centered_points) {
    return detail::encode_traced(enc, centered_points).f1;
}

inline std::vector<double> encode_patch(const PointNetEncoder& enc, const Patch& patch) {
    return encode_patch(enc, patch.centered_points);
}

// s = psi(q ++ f1); q must be in the patch frame.
inline double sdf_eval(const SdfDecoder& dec, const Vec3& q, const std::vector<double>& f1) {
    nn::Matrix in(1, 3 + f1.size());
    in.at(0, 0) = q.x;
    in.at(0, 1) = q.y;
    in.at(0, 2) = q.z;
    for (std::size_t c = 0; c < f1.size(); ++c) in.at(0, 3 + c) = f1[c];
    return nn::forward(dec.net, in).output().at(0, 0);
}

// A patch in its normalized frame together with the member normals (unit
// directions are unchanged by the translate-and-scale normalization).
struct SdfPatch {
    std::vector<Vec3> points;
    std::vector<Vec3> normals;
};

inline std::vector<SdfPatch> make_sdf_patches(const PointCloud& cloud,
                                              const std::vector<Patch>& patches) {
    if (!cloud.has_normals()) throw std::invalid_argument("sdf patches need normals");
    std::vector<SdfPatch> out;
    out.reserve(patches.size());
    for (const auto& p : patches) {
        SdfPatch sp;
        sp.points = p.centered_points;
        sp.normals.reserve(p.member_indices.size());
        for (int idx : p.member_indices)
            sp.normals.push_back(cloud.normals[static_cast<std::size_t>(idx)]);
        out.push_back(std::move(sp));
    }
    return out;
}

struct SdfTrainConfig {
    int epochs = 30;
    int queries_per_patch = 32;
    double off_surface_fraction = 0.5;  // must be positive: zero admits the constant decoder
    double sigma = 0.1;                 // offset stddev in patch-frame units
    double lr = 1e-3;
    double weight_decay = 1e-2;
    std::uint64_t seed = 0;
};

struct SdfTrainResult {
    std::vector<double> loss_history;  // mean squared residual per epoch
};

// Implicit surface reconstruction: drive psi to zero on the surface and to
// the signed offset delta at points displaced along member normals.
inline SdfTrainResult pretrain_sdf(PointNetEncoder& enc, SdfDecoder& dec,
                                   const std::vector<SdfPatch>& patches,
                                   const SdfTrainConfig& cfg) {
    if (patches.empty()) throw std::invalid_argument("no training patches");
    if (!(cfg.off_surface_fraction > 0.0) || cfg.off_surface_fraction > 1.0)
        throw std::invalid_argument(
            "off_surface_fraction must be in (0, 1]: zero-only targets admit the trivial "
            "constant solution");
    if (cfg.epochs < 1 || cfg.queries_per_patch < 1)
        throw std::invalid_argument("bad sdf training config");

    const std::size_t d1 = enc.feature_dim();
    Rng rng(cfg.seed);
    auto enc_opt = nn::AdamWState::for_net(enc.net, cfg.weight_decay);
    auto dec_opt = nn::AdamWState::for_net(dec.net, cfg.weight_decay);
    nn::LrSchedule sched{cfg.lr, static_cast<long>(cfg.epochs) *
                                     static_cast<long>(patches.size())};

    SdfTrainResult result;
    std::vector<std::size_t> order(patches.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    long step = 0;
    int high_loss_epochs = 0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        for (std::size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[rng.uniform_index(i)]);

        double epoch_loss = 0.0;
        for (std::size_t oi : order) {
            const SdfPatch& patch = patches[oi];
            auto pooled = detail::encode_traced(enc, patch.points);

            const auto nq = static_cast<std::size_t>(cfg.queries_per_patch);
            nn::Matrix qin(nq, 3 + d1);
            std::vector<double> target(nq);
            for (std::size_t q = 0; q < nq; ++q) {
                std::size_t j = rng.uniform_index(patch.points.size());
                Vec3 pos = patch.points[j];
                double delta = 0.0;
                if (rng.uniform() < cfg.off_surface_fraction) {
                    delta = rng.normal(0.0, cfg.sigma);
                    pos += patch.normals[j] * delta;
                }
                target[q] = delta;
                qin.at(q, 0) = pos.x;
                qin.at(q, 1) = pos.y;
                qin.at(q, 2) = pos.z;
                for (std::size_t c = 0; c < d1; ++c) qin.at(q, 3 + c) = pooled.f1[c];
            }

            auto dec_trace = nn::forward(dec.net, qin);
            const auto& pred = dec_trace.output();
            nn::Matrix upstream(nq, 1);
            double loss = 0.0;
            for (std::size_t q = 0; q < nq; ++q) {
                double r = pred.at(q, 0) - target[q];
                loss += r * r;
                upstream.at(q, 0) = 2.0 * r / static_cast<double>(nq);
            }
            loss /= static_cast<double>(nq);
            epoch_loss += loss;

            auto dec_grads = nn::backward(dec.net, dec_trace, upstream);
            // every query row feeds the same pooled f1; gradients accumulate
            std::vector<double> df1(d1, 0.0);
            for (std::size_t q = 0; q < nq; ++q)
                for (std::size_t c = 0; c < d1; ++c) df1[c] += dec_grads.dinput.at(q, 3 + c);
            // max-pool routes each feature's gradient to its argmax member
            nn::Matrix enc_upstream(patch.points.size(), d1);
            for (std::size_t c = 0; c < d1; ++c)
                enc_upstream.at(pooled.argmax[c], c) += df1[c];
            auto enc_grads = nn::backward(enc.net, pooled.trace, enc_upstream);

            double lr = nn::lr_at(sched, step++);
            nn::adamw_step(dec_opt, dec.net, dec_grads, lr);
            nn::adamw_step(enc_opt, enc.net, enc_grads, lr);
        }
        epoch_loss /= static_cast<double>(patches.size());
        result.loss_history.push_back(epoch_loss);

        if (epoch_loss > 10.0 * result.loss_history.front()) {
            if (++high_loss_epochs >= 20) throw std::runtime_error("sdf pretraining diverged");
        } else {
            high_loss_epochs = 0;
        }
    }
    return result;
}

// Per-point anomaly evidence: |psi(q, f1_hat)| with f1 replaced by its
// memory-bank reconstruction. Points covered by several patches take the
// mean of their patch scores; uncovered points fall back to the mean score
// of the covered ones.
inline std::vector<double> score_x1(const PointNetEncoder& enc, const SdfDecoder& dec,
                                    const PointCloud& cloud, const std::vector<Patch>& patches,
                                    const bank::DualMemoryBank& banks, int k1) {
    if (banks.bank3d.empty()) throw std::runtime_error("empty memory bank");
    const std::size_t d1 = enc.feature_dim();
    std::vector<double> sums(cloud.size(), 0.0);
    std::vector<int> counts(cloud.size(), 0);

    for (const auto& patch : patches) {
        auto f1 = encode_patch(enc, patch);
        auto f1_hat = bank::reconstruct(banks.bank3d, f1, k1);

        nn::Matrix qin(patch.centered_points.size(), 3 + d1);
        for (std::size_t q = 0; q < patch.centered_points.size(); ++q) {
            qin.at(q, 0) = patch.centered_points[q].x;
            qin.at(q, 1) = patch.centered_points[q].y;
            qin.at(q, 2) = patch.centered_points[q].z;
            for (std::size_t c = 0; c < d1; ++c) qin.at(q, 3 + c) = f1_hat[c];
        }
        const auto out = nn::forward(dec.net, qin).output();
        for (std::size_t q = 0; q < patch.member_indices.size(); ++q) {
            auto idx = static_cast<std::size_t>(patch.member_indices[q]);
            sums[idx] += std::abs(out.at(q, 0));
            ++counts[idx];
        }
    }

    double covered_sum = 0.0;
    long covered = 0;
    for (std::size_t i = 0; i < cloud.size(); ++i)
        if (counts[i] > 0) {
            covered_sum += sums[i] / counts[i];
            ++covered;
        }
    double fallback = covered > 0 ? covered_sum / static_cast<double>(covered) : 0.0;

    std::vector<double> x1(cloud.size());
    for (std::size_t i = 0; i < cloud.size(); ++i)
        x1[i] = counts[i] > 0 ? sums[i] / counts[i] : fallback;
    return x1;
}

}  // namespace pcad::sdf
