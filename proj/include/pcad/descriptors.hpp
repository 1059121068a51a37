#pragma once

#include <array>
#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "pcad/geometry.hpp"
#include "pcad/kdtree.hpp"
#include "pcad/nn.hpp"
#include "pcad/point_cloud.hpp"

namespace pcad::desc {

// ---------------------------------------------------------------------------
// FPFH: 3 pair-angle features x 11 bins, percentage-normalized per block.
// ---------------------------------------------------------------------------

constexpr int kFpfhBins = 11;
constexpr int kFpfhDim = 3 * kFpfhBins;

using FpfhDescriptor = std::array<double, kFpfhDim>;

struct FpfhResult {
    std::vector<FpfhDescriptor> descriptors;
    std::size_t isolated_count = 0;  // points with no neighbor in radius
};

namespace detail {

// Darboux-frame angles for an ordered (source, target) pair. Returns false
// when the connecting direction is parallel to the source normal and the
// frame is undefined.
inline bool pair_angles(const Vec3& ps, const Vec3& ns, const Vec3& pt, const Vec3& nt,
                        double& alpha, double& phi, double& theta) {
    Vec3 d = pt - ps;
    double dist = norm(d);
    if (dist < 1e-300) return false;
    Vec3 dhat = d / dist;
    Vec3 v = cross(dhat, ns);
    double vn = norm(v);
    if (vn < 1e-12) return false;
    v = v / vn;
    Vec3 w = cross(ns, v);
    alpha = dot(v, nt);
    phi = dot(ns, dhat);
    theta = std::atan2(dot(w, nt), dot(ns, nt));
    return true;
}

inline int bin_unit(double x) {  // x in [-1, 1]
    int b = static_cast<int>((x + 1.0) * 0.5 * kFpfhBins);
    return std::min(std::max(b, 0), kFpfhBins - 1);
}

inline int bin_angle(double t) {  // t in [-pi, pi]
    int b = static_cast<int>((t + 3.14159265358979323846) /
                             (2.0 * 3.14159265358979323846) * kFpfhBins);
    return std::min(std::max(b, 0), kFpfhBins - 1);
}

}  // namespace detail

// Two passes: SPFH from pair angles against radius neighbors, then
// FPFH(p) = SPFH(p) + (1/k) sum_j SPFH(j)/w_j with w_j the neighbor distance.
// Each 11-bin block is renormalized to sum 100. A point with no neighbors
// gets a flat descriptor and is counted in isolated_count.
inline FpfhResult compute_fpfh(const PointCloud& cloud, double radius) {
    if (!cloud.has_normals()) throw std::invalid_argument("compute_fpfh needs normals");
    if (radius <= 0.0) throw std::invalid_argument("radius must be > 0");
    const std::size_t m = cloud.size();
    KdTree3 tree(cloud.points);

    std::vector<std::vector<int>> nbrs(m);
    for (std::size_t i = 0; i < m; ++i) {
        auto in_radius = tree.radius_search(cloud.points[i], radius);
        for (int j : in_radius)
            if (static_cast<std::size_t>(j) != i) nbrs[i].push_back(j);
    }

    std::vector<FpfhDescriptor> spfh(m);
    for (auto& h : spfh) h.fill(0.0);
    for (std::size_t i = 0; i < m; ++i) {
        for (int j : nbrs[i]) {
            double a, p, t;
            if (!detail::pair_angles(cloud.points[i], cloud.normals[i],
                                     cloud.points[static_cast<std::size_t>(j)],
                                     cloud.normals[static_cast<std::size_t>(j)], a, p, t))
                continue;
            spfh[i][static_cast<std::size_t>(detail::bin_unit(a))] += 1.0;
            spfh[i][static_cast<std::size_t>(kFpfhBins + detail::bin_unit(p))] += 1.0;
            spfh[i][static_cast<std::size_t>(2 * kFpfhBins + detail::bin_angle(t))] += 1.0;
        }
    }

    FpfhResult out;
    out.descriptors.resize(m);
    for (std::size_t i = 0; i < m; ++i) {
        FpfhDescriptor h = spfh[i];
        if (!nbrs[i].empty()) {
            double inv_k = 1.0 / static_cast<double>(nbrs[i].size());
            for (int j : nbrs[i]) {
                double w = std::max(
                    norm(cloud.points[static_cast<std::size_t>(j)] - cloud.points[i]), 1e-12);
                double f = inv_k / w;
                const auto& hj = spfh[static_cast<std::size_t>(j)];
                for (std::size_t b = 0; b < static_cast<std::size_t>(kFpfhDim); ++b) h[b] += f * hj[b];
            }
        }
        for (int block = 0; block < 3; ++block) {
            double sum = 0.0;
            for (int b = 0; b < kFpfhBins; ++b)
                sum += h[static_cast<std::size_t>(block * kFpfhBins + b)];
            if (sum > 0.0) {
                double s = 100.0 / sum;
                for (int b = 0; b < kFpfhBins; ++b)
                    h[static_cast<std::size_t>(block * kFpfhBins + b)] *= s;
            } else {
                for (int b = 0; b < kFpfhBins; ++b)
                    h[static_cast<std::size_t>(block * kFpfhBins + b)] =
                        100.0 / static_cast<double>(kFpfhBins);
            }
        }
        if (nbrs[i].empty()) ++out.isolated_count;
        out.descriptors[i] = h;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Orthographic frontal depth rendering with per-pixel normals.
// ---------------------------------------------------------------------------

struct DepthImage {
    int height = 0, width = 0;
    std::vector<double> depth;   // height*width; 0 where empty
    std::vector<Vec3> normal;    // visible point's normal per pixel
    std::vector<int> count;      // points projecting into the pixel
    std::vector<std::pair<int, int>> pixel_of_point;  // (row, col) for every point
    double z_offset = 0.0;       // subtracted from z so stored depths are >= 0

    std::size_t idx(int r, int c) const {
        return static_cast<std::size_t>(r) * static_cast<std::size_t>(width) +
               static_cast<std::size_t>(c);
    }
    bool empty_at(int r, int c) const { return count[idx(r, c)] == 0; }
};

// Viewer on the +z axis; the visible point per pixel is the one with the
// largest z (ties to the smaller point index). Every point is assigned its
// pixel in pixel_of_point even when occluded.
inline DepthImage render_depth(const PointCloud& cloud, int height, int width) {
    if (!cloud.has_normals()) throw std::invalid_argument("render_depth needs normals");
    if (height < 1 || width < 1) throw std::invalid_argument("bad resolution");
    const std::size_t m = cloud.size();

    double xmin = cloud.points[0].x, xmax = xmin;
    double ymin = cloud.points[0].y, ymax = ymin;
    double zmin = cloud.points[0].z;
    for (const auto& p : cloud.points) {
        xmin = std::min(xmin, p.x);
        xmax = std::max(xmax, p.x);
        ymin = std::min(ymin, p.y);
        ymax = std::max(ymax, p.y);
        zmin = std::min(zmin, p.z);
    }
    double ex = xmax - xmin, ey = ymax - ymin;
    if (m >= 2 && ex == 0.0 && ey == 0.0)
        throw std::runtime_error("degenerate projection extent");
    // A single point (or an axis-aligned degenerate extent) still renders;
    // pad the flat dimension so the footprint maps to a pixel.
    if (ex == 0.0) { xmin -= 0.5; ex = 1.0; }
    if (ey == 0.0) { ymin -= 0.5; ey = 1.0; }

    DepthImage img;
    img.height = height;
    img.width = width;
    img.depth.assign(static_cast<std::size_t>(height) * static_cast<std::size_t>(width), 0.0);
    img.normal.assign(img.depth.size(), Vec3{});
    img.count.assign(img.depth.size(), 0);
    img.pixel_of_point.resize(m);
    img.z_offset = std::min(0.0, zmin);

    std::vector<double> best_z(img.depth.size(), -std::numeric_limits<double>::infinity());
    for (std::size_t i = 0; i < m; ++i) {
        const Vec3& p = cloud.points[i];
        int col = std::min(static_cast<int>((p.x - xmin) / ex * width), width - 1);
        int row = std::min(static_cast<int>((ymax - p.y) / ey * height), height - 1);
        img.pixel_of_point[i] = {row, col};
        std::size_t px = img.idx(row, col);
        ++img.count[px];
        if (p.z > best_z[px]) {
            best_z[px] = p.z;
            img.depth[px] = p.z - img.z_offset;
            img.normal[px] = cloud.normals[i];
        }
    }
    return img;
}

// 16-bit PGM of the depth channel, scaled to the max non-empty depth.
inline void write_pgm(const DepthImage& img, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write pgm: " + path);
    double dmax = 0.0;
    for (std::size_t i = 0; i < img.depth.size(); ++i)
        if (img.count[i] > 0) dmax = std::max(dmax, img.depth[i]);
    out << "P5\n" << img.width << " " << img.height << "\n65535\n";
    for (std::size_t i = 0; i < img.depth.size(); ++i) {
        unsigned v = 0;
        if (img.count[i] > 0 && dmax > 0.0)
            v = static_cast<unsigned>(img.depth[i] / dmax * 65535.0);
        out.put(static_cast<char>((v >> 8) & 0xff));
        out.put(static_cast<char>(v & 0xff));
    }
}

// ---------------------------------------------------------------------------
// Multi-scale window statistics over the depth image: the learned-backbone
// substitute. 7 values per scale: depth mean/std/range, mean gradient
// magnitude, mean normal (3). Empty pixels are excluded from every window.
// ---------------------------------------------------------------------------

struct Feature2dResult {
    nn::Matrix stats;  // M x (7 * |scales|)
    std::size_t empty_window_count = 0;
};

inline Feature2dResult extract_2d_features(const DepthImage& img,
                                           const std::vector<int>& scales) {
    if (scales.empty()) throw std::invalid_argument("scales must be non-empty");
    const std::size_t m = img.pixel_of_point.size();

    // central-difference gradient magnitude over non-empty pixels
    std::vector<double> gmag(img.depth.size(), 0.0);
    auto sample = [&](int r, int c, double& value) {
        if (r < 0 || r >= img.height || c < 0 || c >= img.width) return false;
        if (img.empty_at(r, c)) return false;
        value = img.depth[img.idx(r, c)];
        return true;
    };
    for (int r = 0; r < img.height; ++r) {
        for (int c = 0; c < img.width; ++c) {
            if (img.empty_at(r, c)) continue;
            double here = img.depth[img.idx(r, c)];
            double lo, hi, gx = 0.0, gy = 0.0;
            bool has_lo = sample(r, c - 1, lo), has_hi = sample(r, c + 1, hi);
            if (has_lo && has_hi) gx = (hi - lo) / 2.0;
            else if (has_hi) gx = hi - here;
            else if (has_lo) gx = here - lo;
            has_lo = sample(r - 1, c, lo);
            has_hi = sample(r + 1, c, hi);
            if (has_lo && has_hi) gy = (hi - lo) / 2.0;
            else if (has_hi) gy = hi - here;
            else if (has_lo) gy = here - lo;
            gmag[img.idx(r, c)] = std::hypot(gx, gy);
        }
    }

    Feature2dResult out;
    out.stats = nn::Matrix(m, 7 * scales.size());
    std::vector<double> window;
    for (std::size_t i = 0; i < m; ++i) {
        auto [row, col] = img.pixel_of_point[i];
        for (std::size_t si = 0; si < scales.size(); ++si) {
            int r = scales[si];
            if (r < 0) throw std::invalid_argument("scale radius must be >= 0");
            window.clear();
            double dmin = 0.0, dmax = 0.0, gsum = 0.0;
            Vec3 nsum{};
            for (int rr = row - r; rr <= row + r; ++rr) {
                for (int cc = col - r; cc <= col + r; ++cc) {
                    double d;
                    if (!sample(rr, cc, d)) continue;
                    if (window.empty()) { dmin = d; dmax = d; }
                    dmin = std::min(dmin, d);
                    dmax = std::max(dmax, d);
                    window.push_back(d);
                    gsum += gmag[img.idx(rr, cc)];
                    nsum += img.normal[img.idx(rr, cc)];
                }
            }
            double* f = &out.stats.at(i, 7 * si);
            if (window.empty()) {
                ++out.empty_window_count;
                for (int k = 0; k < 7; ++k) f[k] = 0.0;
                continue;
            }
            double inv = 1.0 / static_cast<double>(window.size());
            double mean = 0.0;
            for (double d : window) mean += d;
            mean *= inv;
            double var = 0.0;  // two-pass so a constant window is exactly zero
            for (double d : window) var += (d - mean) * (d - mean);
            var *= inv;
            f[0] = mean;
            f[1] = std::sqrt(var);
            f[2] = dmax - dmin;
            f[3] = gsum * inv;
            f[4] = nsum.x * inv;
            f[5] = nsum.y * inv;
            f[6] = nsum.z * inv;
        }
    }
    return out;
}

// f2 = depth statistics ++ FPFH histogram; d2 = 7*|scales| + 33.
inline nn::Matrix assemble_f2(const nn::Matrix& stats,
                              const std::vector<FpfhDescriptor>& fpfh) {
    if (stats.rows != fpfh.size())
        throw std::invalid_argument("stats/fpfh length mismatch");
    nn::Matrix f2(stats.rows, stats.cols + kFpfhDim);
    for (std::size_t r = 0; r < stats.rows; ++r) {
        for (std::size_t c = 0; c < stats.cols; ++c) f2.at(r, c) = stats.at(r, c);
        for (std::size_t c = 0; c < static_cast<std::size_t>(kFpfhDim); ++c)
            f2.at(r, stats.cols + c) = fpfh[r][c];
    }
    return f2;
}

}  // namespace pcad::desc
