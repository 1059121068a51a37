#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <vector>

#include "pcad/kdtree.hpp"
#include "pcad/point_cloud.hpp"
#include "pcad/vec3.hpp"

namespace pcad {

// How to pick the sign of estimated normals.
struct NormalOrientation {
    enum class Mode { TowardDirection, TowardPoint, AwayFromPoint };
    Mode mode = Mode::TowardDirection;
    Vec3 reference{0.0, 0.0, 1.0};  // direction or point, per mode

    static NormalOrientation toward_direction(const Vec3& d) {
        return {Mode::TowardDirection, d};
    }
    static NormalOrientation toward_point(const Vec3& p) { return {Mode::TowardPoint, p}; }
    static NormalOrientation away_from_point(const Vec3& p) {
        return {Mode::AwayFromPoint, p};
    }
};

struct NormalEstimate {
    PointCloud cloud;
    std::size_t degenerate_count = 0;  // neighborhoods with rank < 2 covariance
};

// PCA normals from the k-neighborhood (k includes the point itself).
// Degenerate neighborhoods fall back to the orientation reference direction.
inline NormalEstimate estimate_normals(const PointCloud& cloud, int k,
                                       const NormalOrientation& orient = {}) {
    cloud.validate();
    if (k < 3) throw std::invalid_argument("normal estimation needs k >= 3");
    if (static_cast<std::size_t>(k) > cloud.size())
        throw std::invalid_argument("normal estimation needs M >= k");

    KdTree3 tree(cloud.points);
    NormalEstimate out;
    out.cloud = cloud;
    out.cloud.normals.assign(cloud.size(), Vec3{});

    for (std::size_t i = 0; i < cloud.size(); ++i) {
        auto nbrs = tree.knn(cloud.points[i], k);
        Vec3 mean{};
        for (const auto& n : nbrs) mean += cloud.points[static_cast<std::size_t>(n.index)];
        mean *= 1.0 / static_cast<double>(nbrs.size());
        Mat3 cov;
        for (const auto& n : nbrs) {
            Vec3 d = cloud.points[static_cast<std::size_t>(n.index)] - mean;
            for (int r = 0; r < 3; ++r)
                for (int c = 0; c < 3; ++c)
                    cov(r, c) += d[static_cast<std::size_t>(r)] * d[static_cast<std::size_t>(c)];
        }
        auto eig = sym_eig3(cov);

        Vec3 ref_dir = orient.reference;
        if (orient.mode == NormalOrientation::Mode::TowardPoint)
            ref_dir = orient.reference - cloud.points[i];
        else if (orient.mode == NormalOrientation::Mode::AwayFromPoint)
            ref_dir = cloud.points[i] - orient.reference;
        if (norm2(ref_dir) == 0.0) ref_dir = {0.0, 0.0, 1.0};

        // rank < 2: the two smallest eigenvalues are both ~0 relative to the largest
        bool degenerate = eig.values[1] <= 1e-12 * std::max(eig.values[2], 0.0) + 1e-30;
        Vec3 n;
        if (degenerate) {
            ++out.degenerate_count;
            n = normalized(ref_dir);
        } else {
            n = normalized(eig.vectors[0]);
            if (dot(n, ref_dir) < 0.0) n = -n;
        }
        out.cloud.normals[i] = n;
    }
    return out;
}

// n distinct indices; the first is seed % M, each next maximizes distance to
// the chosen set (ties to the smaller index).
inline std::vector<int> farthest_point_sample(const PointCloud& cloud, int n,
                                              std::uint64_t seed) {
    std::size_t m = cloud.size();
    if (m == 0) throw std::invalid_argument("empty point cloud");
    if (n < 1 || static_cast<std::size_t>(n) > m)
        throw std::invalid_argument("farthest_point_sample needs 1 <= n <= M");

    std::vector<int> chosen;
    chosen.reserve(static_cast<std::size_t>(n));
    std::vector<double> min_d2(m, std::numeric_limits<double>::infinity());
    int current = static_cast<int>(seed % m);
    chosen.push_back(current);
    for (int step = 1; step < n; ++step) {
        const Vec3& c = cloud.points[static_cast<std::size_t>(current)];
        int best = -1;
        double best_d2 = -1.0;
        for (std::size_t i = 0; i < m; ++i) {
            double d2 = norm2(cloud.points[i] - c);
            if (d2 < min_d2[i]) min_d2[i] = d2;
            if (min_d2[i] > best_d2) {
                best_d2 = min_d2[i];
                best = static_cast<int>(i);
            }
        }
        current = best;
        chosen.push_back(current);
        min_d2[static_cast<std::size_t>(current)] = 0.0;
    }
    return chosen;
}

// Neighborhood of a center point, translated to its centroid and scaled into
// the unit ball. scale is the max member distance from the centroid (1 for a
// single-point patch, so the scale invariant always holds).
struct Patch {
    int center_index = -1;
    std::vector<int> member_indices;
    std::vector<Vec3> centered_points;  // (p - centroid) / scale, same order as members
    Vec3 centroid{};
    double scale = 1.0;
};

inline std::vector<Patch> extract_patches(const PointCloud& cloud,
                                          const std::vector<int>& centers, int patch_size) {
    if (patch_size < 1 || static_cast<std::size_t>(patch_size) > cloud.size())
        throw std::invalid_argument("patch_size must be in [1, M]");
    KdTree3 tree(cloud.points);
    std::vector<Patch> patches;
    patches.reserve(centers.size());
    for (int c : centers) {
        if (c < 0 || static_cast<std::size_t>(c) >= cloud.size())
            throw std::invalid_argument("patch center index out of range");
        Patch patch;
        patch.center_index = c;
        auto nbrs = tree.knn(cloud.points[static_cast<std::size_t>(c)], patch_size);
        patch.member_indices.reserve(nbrs.size());
        for (const auto& n : nbrs) patch.member_indices.push_back(n.index);

        Vec3 centroid{};
        for (int idx : patch.member_indices) centroid += cloud.points[static_cast<std::size_t>(idx)];
        centroid *= 1.0 / static_cast<double>(patch.member_indices.size());
        double scale = 0.0;
        for (int idx : patch.member_indices)
            scale = std::max(scale, norm(cloud.points[static_cast<std::size_t>(idx)] - centroid));
        if (scale == 0.0) scale = 1.0;
        patch.centroid = centroid;
        patch.scale = scale;
        patch.centered_points.reserve(patch.member_indices.size());
        for (int idx : patch.member_indices)
            patch.centered_points.push_back(
                (cloud.points[static_cast<std::size_t>(idx)] - centroid) / scale);
        patches.push_back(std::move(patch));
    }
    return patches;
}

// Connected components of the radius graph restricted to mask-1 points.
// Components are ordered by their smallest member index; members ascending.
inline std::vector<std::vector<int>> radius_components(const PointCloud& cloud,
                                                       const std::vector<std::uint8_t>& mask,
                                                       double radius) {
    if (mask.size() != cloud.size()) throw std::invalid_argument("mask size mismatch");
    if (radius <= 0.0) throw std::invalid_argument("radius must be > 0");
    std::vector<int> masked;
    for (std::size_t i = 0; i < mask.size(); ++i)
        if (mask[i]) masked.push_back(static_cast<int>(i));
    if (masked.empty()) return {};

    std::vector<Vec3> pts;
    pts.reserve(masked.size());
    for (int idx : masked) pts.push_back(cloud.points[static_cast<std::size_t>(idx)]);
    KdTree3 tree(pts);

    std::vector<std::vector<int>> components;
    std::vector<char> visited(masked.size(), 0);
    for (std::size_t s = 0; s < masked.size(); ++s) {
        if (visited[s]) continue;
        std::vector<int> comp;
        std::vector<std::size_t> stack{s};
        visited[s] = 1;
        while (!stack.empty()) {
            std::size_t cur = stack.back();
            stack.pop_back();
            comp.push_back(masked[cur]);
            for (int nb : tree.radius_search(pts[cur], radius)) {
                auto u = static_cast<std::size_t>(nb);
                if (!visited[u]) {
                    visited[u] = 1;
                    stack.push_back(u);
                }
            }
        }
        std::sort(comp.begin(), comp.end());
        components.push_back(std::move(comp));
    }
    // BFS seeds run in ascending index order, so components already come out
    // ordered by smallest member.
    return components;
}

// Median over points of the distance to the nearest other point. Used to set
// data-driven radii (ground-truth regions, descriptor supports).
inline double median_nn_spacing(const PointCloud& cloud) {
    if (cloud.size() < 2) return 1.0;
    KdTree3 tree(cloud.points);
    std::vector<double> d;
    d.reserve(cloud.size());
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        auto nbrs = tree.knn(cloud.points[i], 2);
        d.push_back(nbrs[1].distance);
    }
    std::nth_element(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(d.size() / 2), d.end());
    return d[d.size() / 2];
}

}  // namespace pcad
