#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "pcad/vec3.hpp"

namespace pcad {

// M x 3 coordinates with optional unit normals and optional {0,1} labels.
// normals/labels are either empty or exactly M entries.
struct PointCloud {
    std::vector<Vec3> points;
    std::vector<Vec3> normals;
    std::vector<std::uint8_t> labels;

    std::size_t size() const { return points.size(); }
    bool has_normals() const { return !normals.empty(); }
    bool has_labels() const { return !labels.empty(); }

    void validate() const {
        if (points.empty()) throw std::invalid_argument("empty point cloud");
        for (const auto& p : points)
            if (!std::isfinite(p.x) || !std::isfinite(p.y) || !std::isfinite(p.z))
                throw std::invalid_argument("non-finite coordinate");
        if (!normals.empty()) {
            if (normals.size() != points.size())
                throw std::invalid_argument("normals size mismatch");
            for (const auto& n : normals)
                if (std::abs(norm(n) - 1.0) > 1e-6)
                    throw std::invalid_argument("normal not unit length");
        }
        if (!labels.empty()) {
            if (labels.size() != points.size())
                throw std::invalid_argument("labels size mismatch");
            for (auto l : labels)
                if (l > 1) throw std::invalid_argument("label not in {0,1}");
        }
    }
};

namespace detail {

inline void format_double(std::string& out, double v) {
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    out.append(buf, res.ptr);
}

}  // namespace detail

// ASCII format: one point per line, "x y z" or "x y z nx ny nz" or
// "x y z nx ny nz label"; '#' starts a comment line. Column count is
// auto-detected from the first data line and must stay consistent.
inline PointCloud load_cloud_text(std::istream& in, const std::string& name = "<stream>") {
    PointCloud cloud;
    std::string line;
    int columns = 0;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::size_t first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos || line[first] == '#') continue;
        std::istringstream ls(line);
        std::vector<double> vals;
        double v;
        while (ls >> v) vals.push_back(v);
        if (!ls.eof() && ls.fail()) {
            ls.clear();
            std::string junk;
            if (ls >> junk)
                throw std::runtime_error(name + ":" + std::to_string(lineno) +
                                         ": malformed token '" + junk + "'");
        }
        if (columns == 0) {
            if (vals.size() != 3 && vals.size() != 6 && vals.size() != 7)
                throw std::runtime_error(name + ":" + std::to_string(lineno) +
                                         ": expected 3, 6, or 7 columns");
            columns = static_cast<int>(vals.size());
        } else if (static_cast<int>(vals.size()) != columns) {
            throw std::runtime_error(name + ":" + std::to_string(lineno) +
                                     ": inconsistent column count");
        }
        cloud.points.push_back({vals[0], vals[1], vals[2]});
        if (columns >= 6) cloud.normals.push_back({vals[3], vals[4], vals[5]});
        if (columns == 7) {
            if (vals[6] != 0.0 && vals[6] != 1.0)
                throw std::runtime_error(name + ":" + std::to_string(lineno) +
                                         ": label must be 0 or 1");
            cloud.labels.push_back(static_cast<std::uint8_t>(vals[6]));
        }
    }
    if (cloud.points.empty()) throw std::runtime_error(name + ": empty point cloud");
    return cloud;
}

inline PointCloud load_cloud(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open point cloud file: " + path);
    return load_cloud_text(in, path);
}

// Shortest round-trip decimal formatting, so save/load is bit-exact and
// regeneration under a fixed seed reproduces files byte for byte.
inline std::string cloud_to_text(const PointCloud& cloud) {
    if (cloud.has_labels() && !cloud.has_normals())
        throw std::runtime_error("label column requires normal columns in the text format");
    std::string out;
    out.reserve(cloud.size() * 48);
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        detail::format_double(out, cloud.points[i].x);
        out.push_back(' ');
        detail::format_double(out, cloud.points[i].y);
        out.push_back(' ');
        detail::format_double(out, cloud.points[i].z);
        if (cloud.has_normals()) {
            for (int c = 0; c < 3; ++c) {
                out.push_back(' ');
                detail::format_double(out, cloud.normals[i][static_cast<std::size_t>(c)]);
            }
        }
        if (cloud.has_labels()) {
            out.push_back(' ');
            out.push_back(cloud.labels[i] ? '1' : '0');
        }
        out.push_back('\n');
    }
    return out;
}

inline void save_cloud(const PointCloud& cloud, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write point cloud file: " + path);
    out << cloud_to_text(cloud);
}

}  // namespace pcad
