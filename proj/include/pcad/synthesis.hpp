#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "pcad/geometry.hpp"
#include "pcad/kdtree.hpp"
#include "pcad/point_cloud.hpp"
#include "pcad/rng.hpp"

namespace pcad::synth {

enum class MaskShape { SphereBlob, Box, Ellipsoid };

inline std::string mask_shape_name(MaskShape s) {
    switch (s) {
        case MaskShape::SphereBlob: return "sphere-blob";
        case MaskShape::Box: return "box";
        case MaskShape::Ellipsoid: return "ellipsoid";
    }
    throw std::logic_error("unknown mask shape");
}

struct AnomalyMask {
    std::vector<int> indices;  // covered target points; empty = null mask
    MaskShape shape = MaskShape::SphereBlob;
    int center_index = -1;
    Vec3 extent{};  // radius (sphere) or semi-extents (box/ellipsoid)

    bool null_mask() const { return indices.empty(); }
};

struct MaskConfig {
    double fraction_min = 0.005;  // covered fraction bounds relative to M
    double fraction_max = 0.05;
    double radius_min_rel = 0.02;  // sampled extent relative to the bbox diagonal
    double radius_max_rel = 0.30;
    int max_attempts = 20;
};

namespace detail {

inline double bbox_diagonal(const PointCloud& cloud) {
    Vec3 lo = cloud.points[0], hi = cloud.points[0];
    for (const auto& p : cloud.points)
        for (std::size_t a = 0; a < 3; ++a) {
            lo[a] = std::min(lo[a], p[a]);
            hi[a] = std::max(hi[a], p[a]);
        }
    return norm(hi - lo);
}

}  // namespace detail

// Seeded random shape around a random surface point; the radius is resampled
// until the covered fraction lands inside the configured bounds.
inline AnomalyMask make_mask(const PointCloud& cloud, Rng& rng, const MaskConfig& cfg = {}) {
    cloud.validate();
    if (cfg.fraction_min <= 0.0 || cfg.fraction_max < cfg.fraction_min)
        throw std::invalid_argument("bad mask fraction bounds");
    const double diag = detail::bbox_diagonal(cloud);
    const auto m = static_cast<double>(cloud.size());

    for (int attempt = 0; attempt < cfg.max_attempts; ++attempt) {
        AnomalyMask mask;
        mask.center_index = static_cast<int>(rng.uniform_index(cloud.size()));
        mask.shape = static_cast<MaskShape>(rng.uniform_index(3));
        double r = rng.uniform(cfg.radius_min_rel, cfg.radius_max_rel) * diag;
        switch (mask.shape) {
            case MaskShape::SphereBlob:
                mask.extent = {r, r, r};
                break;
            case MaskShape::Box:
            case MaskShape::Ellipsoid:
                mask.extent = {r * rng.uniform(0.5, 1.0), r * rng.uniform(0.5, 1.0),
                               r * rng.uniform(0.5, 1.0)};
                break;
        }
        const Vec3& c = cloud.points[static_cast<std::size_t>(mask.center_index)];
        for (std::size_t i = 0; i < cloud.size(); ++i) {
            Vec3 d = cloud.points[i] - c;
            bool inside = false;
            switch (mask.shape) {
                case MaskShape::SphereBlob:
                    inside = norm(d) <= mask.extent.x;
                    break;
                case MaskShape::Box:
                    inside = std::abs(d.x) <= mask.extent.x && std::abs(d.y) <= mask.extent.y &&
                             std::abs(d.z) <= mask.extent.z;
                    break;
                case MaskShape::Ellipsoid: {
                    double q = d.x * d.x / (mask.extent.x * mask.extent.x) +
                               d.y * d.y / (mask.extent.y * mask.extent.y) +
                               d.z * d.z / (mask.extent.z * mask.extent.z);
                    inside = q <= 1.0;
                    break;
                }
            }
            if (inside) mask.indices.push_back(static_cast<int>(i));
        }
        double fraction = static_cast<double>(mask.indices.size()) / m;
        if (fraction >= cfg.fraction_min && fraction <= cfg.fraction_max) return mask;
    }
    throw std::runtime_error("mask fraction bounds unsatisfiable after " +
                             std::to_string(cfg.max_attempts) + " attempts");
}

struct TransformRecord {
    Vec3 axis{0, 0, 1};
    double angle = 0.0;   // radians
    double scale = 1.0;   // uniform
    double offset = 0.0;  // along the target normal, absolute length
};

struct SampleProvenance {
    int target_id = -1;
    int source_id = -1;  // -1 for unmodified normal samples
    std::uint64_t seed = 0;
    AnomalyMask mask;
    TransformRecord transform;
};

struct LabeledSample {
    PointCloud cloud;  // labels filled: 1 exactly on pasted/merged points
    SampleProvenance provenance;
};

struct CutPasteConfig {
    double max_rotation_deg = 30.0;
    double scale_min = 0.8, scale_max = 1.2;
    double offset_min = 0.02, offset_max = 0.10;  // times the mask footprint scale
    double merge_radius = 0.0;  // label originals this close to a pasted point
    bool insertion = false;     // replacement (constant M) is the default
};

// Cuts a source region congruent to the mask footprint, applies a bounded
// random rigid rotation, a uniform rescale, and an offset along the target
// surface normal, then replaces (or, in insertion mode, appends to) the
// masked target points. Label-0 points are left bitwise untouched.
inline LabeledSample cut_paste(const PointCloud& target, const PointCloud& source,
                               const AnomalyMask& mask, Rng& rng,
                               const CutPasteConfig& cfg = {}) {
    target.validate();
    source.validate();
    LabeledSample out;
    out.provenance.mask = mask;
    out.cloud = target;
    out.cloud.labels.assign(target.size(), 0);
    if (mask.null_mask()) return out;
    if (!target.has_normals())
        throw std::invalid_argument("cut_paste needs target normals for the paste offset");

    const std::size_t n = mask.indices.size();
    Vec3 target_centroid{};
    double footprint = 0.0;
    for (int idx : mask.indices) target_centroid += target.points[static_cast<std::size_t>(idx)];
    target_centroid *= 1.0 / static_cast<double>(n);
    for (int idx : mask.indices)
        footprint = std::max(footprint,
                             norm(target.points[static_cast<std::size_t>(idx)] - target_centroid));
    if (footprint == 0.0) footprint = 1e-3 * detail::bbox_diagonal(target);

    // congruent source region: the n points nearest a random source seed
    auto src_seed = static_cast<std::size_t>(rng.uniform_index(source.size()));
    auto nbrs = brute_force_knn(source.points, source.points[src_seed],
                                static_cast<int>(std::min(n, source.size())));
    std::vector<int> src_indices;
    src_indices.reserve(n);
    for (std::size_t j = 0; j < n; ++j)
        src_indices.push_back(nbrs[j % nbrs.size()].index);  // cycle if the source is smaller

    Vec3 src_centroid{};
    for (int idx : src_indices) src_centroid += source.points[static_cast<std::size_t>(idx)];
    src_centroid *= 1.0 / static_cast<double>(n);

    TransformRecord rec;
    rec.axis = rng.unit_vector();
    rec.angle = rng.uniform(0.0, cfg.max_rotation_deg * 3.14159265358979323846 / 180.0);
    rec.scale = rng.uniform(cfg.scale_min, cfg.scale_max);
    rec.offset = rng.uniform(cfg.offset_min, cfg.offset_max) * footprint;
    out.provenance.transform = rec;
    Mat3 rot = rotation_about(rec.axis, rec.angle);
    Vec3 normal = target.normals[static_cast<std::size_t>(mask.center_index)];
    Vec3 anchor = target_centroid + normal * rec.offset;

    bool carry_normals = target.has_normals() && source.has_normals();
    std::vector<Vec3> pasted(n);
    std::vector<Vec3> pasted_normals;
    if (carry_normals) pasted_normals.resize(n);
    for (std::size_t j = 0; j < n; ++j) {
        const Vec3& sp = source.points[static_cast<std::size_t>(src_indices[j])];
        pasted[j] = anchor + rot * ((sp - src_centroid) * rec.scale);
        if (carry_normals)
            pasted_normals[j] = rot * source.normals[static_cast<std::size_t>(src_indices[j])];
    }

    if (!cfg.insertion) {
        for (std::size_t j = 0; j < n; ++j) {
            auto idx = static_cast<std::size_t>(mask.indices[j]);
            out.cloud.points[idx] = pasted[j];
            if (carry_normals) out.cloud.normals[idx] = pasted_normals[j];
            out.cloud.labels[idx] = 1;
        }
        if (!carry_normals) out.cloud.normals.clear();
    } else {
        for (std::size_t j = 0; j < n; ++j) {
            out.cloud.points.push_back(pasted[j]);
            if (carry_normals) out.cloud.normals.push_back(pasted_normals[j]);
            out.cloud.labels.push_back(1);
        }
        if (!carry_normals) out.cloud.normals.clear();
    }

    if (cfg.merge_radius > 0.0) {
        KdTree3 paste_tree(pasted);
        for (std::size_t i = 0; i < out.cloud.labels.size(); ++i) {
            if (out.cloud.labels[i]) continue;
            auto nearest = paste_tree.knn(out.cloud.points[i], 1);
            if (nearest[0].distance <= cfg.merge_radius) out.cloud.labels[i] = 1;
        }
    }
    return out;
}

struct DatasetConfig {
    MaskConfig mask;
    CutPasteConfig paste;
    double normal_fraction = 0.25;  // unmodified all-zero-label samples
    bool allow_same_source = false;
};

// n_samples labeled clouds from per-sample derived seeds; a configurable
// fraction are untouched normals so training sees both classes.
inline std::vector<LabeledSample> generate_dataset(const std::vector<PointCloud>& normals_set,
                                                   int n_samples, std::uint64_t seed,
                                                   const DatasetConfig& cfg = {}) {
    if (normals_set.empty()) throw std::invalid_argument("empty training set");
    if (normals_set.size() < 2 && !cfg.allow_same_source)
        throw std::invalid_argument("cut-paste needs at least 2 clouds (source != target)");
    if (n_samples < 1) throw std::invalid_argument("n_samples must be >= 1");

    std::vector<LabeledSample> out;
    out.reserve(static_cast<std::size_t>(n_samples));
    for (int i = 0; i < n_samples; ++i) {
        Rng rng = Rng::derive(seed, static_cast<std::uint64_t>(i));
        auto target_id = static_cast<int>(rng.uniform_index(normals_set.size()));
        const PointCloud& target = normals_set[static_cast<std::size_t>(target_id)];
        LabeledSample sample;
        if (rng.uniform() < cfg.normal_fraction) {
            sample.cloud = target;
            sample.cloud.labels.assign(target.size(), 0);
        } else {
            int source_id;
            if (cfg.allow_same_source && normals_set.size() == 1) {
                source_id = target_id;
            } else {
                source_id = static_cast<int>(
                    (static_cast<std::size_t>(target_id) + 1 +
                     rng.uniform_index(normals_set.size() - 1)) %
                    normals_set.size());
            }
            auto mask = make_mask(target, rng, cfg.mask);
            sample = cut_paste(target, normals_set[static_cast<std::size_t>(source_id)], mask,
                               rng, cfg.paste);
            sample.provenance.source_id = source_id;
        }
        sample.provenance.target_id = target_id;
        sample.provenance.seed = seed;
        out.push_back(std::move(sample));
    }
    return out;
}

// --- manifest helpers --------------------------------------------------------

inline nlohmann::json provenance_to_json(const SampleProvenance& p) {
    nlohmann::json j;
    j["target_id"] = p.target_id;
    j["source_id"] = p.source_id;
    j["seed"] = p.seed;
    if (!p.mask.null_mask()) {
        j["mask"] = {{"shape", mask_shape_name(p.mask.shape)},
                     {"center_index", p.mask.center_index},
                     {"extent", {p.mask.extent.x, p.mask.extent.y, p.mask.extent.z}},
                     {"count", p.mask.indices.size()}};
        j["transform"] = {{"axis", {p.transform.axis.x, p.transform.axis.y, p.transform.axis.z}},
                          {"angle", p.transform.angle},
                          {"scale", p.transform.scale},
                          {"offset", p.transform.offset}};
    }
    return j;
}

}  // namespace pcad::synth
