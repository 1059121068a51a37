#pragma once

#include <algorithm>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include "pcad/point_cloud.hpp"
#include "pcad/vec3.hpp"

namespace pcad {

struct Neighbor {
    int index = -1;
    double distance = 0.0;
};

// Exact k-nearest-neighbor index over 3D points. Distance ties are broken
// by the smaller point index so queries are fully deterministic.
// Immutable after construction; concurrent queries are safe.
class KdTree3 {
public:
    explicit KdTree3(const std::vector<Vec3>& points) : pts_(points) {
        if (pts_.empty()) throw std::invalid_argument("empty point cloud");
        order_.resize(pts_.size());
        for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = static_cast<int>(i);
        nodes_.reserve(2 * pts_.size() / kLeafSize + 2);
        root_ = build(0, static_cast<int>(pts_.size()));
    }

    std::size_t size() const { return pts_.size(); }

    // min(k, M) neighbors sorted by (distance, index).
    std::vector<Neighbor> knn(const Vec3& query, int k) const {
        if (k < 1) throw std::invalid_argument("k must be >= 1");
        std::size_t want = std::min<std::size_t>(static_cast<std::size_t>(k), pts_.size());
        Heap heap(want);
        search(root_, query, heap);
        std::vector<Neighbor> out(heap.entries.begin(), heap.entries.end());
        std::sort(out.begin(), out.end(), [](const Neighbor& a, const Neighbor& b) {
            return a.distance != b.distance ? a.distance < b.distance : a.index < b.index;
        });
        for (auto& n : out) n.distance = std::sqrt(n.distance);
        return out;
    }

    // All indices with distance <= radius, sorted ascending by index.
    std::vector<int> radius_search(const Vec3& query, double radius) const {
        if (radius < 0.0) throw std::invalid_argument("radius must be >= 0");
        std::vector<int> out;
        double r2 = radius * radius;
        radius_collect(root_, query, r2, out);
        std::sort(out.begin(), out.end());
        return out;
    }

private:
    static constexpr int kLeafSize = 12;

    struct Node {
        int axis = -1;       // -1 marks a leaf
        double split = 0.0;
        int left = -1, right = -1;
        int begin = 0, end = 0;  // leaf range into order_
    };

    // Bounded candidate set; the heap front is the current worst entry under
    // the (squared distance, index) ordering.
    struct Heap {
        explicit Heap(std::size_t cap) : capacity(cap) { entries.reserve(cap); }
        std::size_t capacity;
        std::vector<Neighbor> entries;

        static bool closer(const Neighbor& a, const Neighbor& b) {
            return a.distance != b.distance ? a.distance < b.distance : a.index < b.index;
        }
        bool full() const { return entries.size() == capacity; }
        double worst_distance() const { return entries.front().distance; }
        void offer(int index, double d2) {
            Neighbor cand{index, d2};
            if (!full()) {
                entries.push_back(cand);
                std::push_heap(entries.begin(), entries.end(), closer);
            } else if (closer(cand, entries.front())) {
                std::pop_heap(entries.begin(), entries.end(), closer);
                entries.back() = cand;
                std::push_heap(entries.begin(), entries.end(), closer);
            }
        }
    };

    int build(int begin, int end) {
        Node node;
        if (end - begin <= kLeafSize) {
            node.begin = begin;
            node.end = end;
            nodes_.push_back(node);
            return static_cast<int>(nodes_.size() - 1);
        }
        // Split on the widest axis at the median.
        Vec3 lo = pts_[static_cast<std::size_t>(order_[static_cast<std::size_t>(begin)])];
        Vec3 hi = lo;
        for (int i = begin; i < end; ++i) {
            const Vec3& p = pts_[static_cast<std::size_t>(order_[static_cast<std::size_t>(i)])];
            for (std::size_t a = 0; a < 3; ++a) {
                lo[a] = std::min(lo[a], p[a]);
                hi[a] = std::max(hi[a], p[a]);
            }
        }
        int axis = 0;
        double spread = hi[0] - lo[0];
        for (std::size_t a = 1; a < 3; ++a)
            if (hi[a] - lo[a] > spread) { spread = hi[a] - lo[a]; axis = static_cast<int>(a); }
        if (spread == 0.0) {  // all points coincide; keep as one leaf
            node.begin = begin;
            node.end = end;
            nodes_.push_back(node);
            return static_cast<int>(nodes_.size() - 1);
        }
        int mid = begin + (end - begin) / 2;
        std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                         [&](int a, int b) {
                             double va = pts_[static_cast<std::size_t>(a)][static_cast<std::size_t>(axis)];
                             double vb = pts_[static_cast<std::size_t>(b)][static_cast<std::size_t>(axis)];
                             return va != vb ? va < vb : a < b;
                         });
        node.axis = axis;
        node.split = pts_[static_cast<std::size_t>(order_[static_cast<std::size_t>(mid)])][static_cast<std::size_t>(axis)];
        int self = static_cast<int>(nodes_.size());
        nodes_.push_back(node);
        int left = build(begin, mid);
        int right = build(mid, end);
        nodes_[static_cast<std::size_t>(self)].left = left;
        nodes_[static_cast<std::size_t>(self)].right = right;
        return self;
    }

    double dist2(const Vec3& a, const Vec3& b) const {
        double dx = a.x - b.x, dy = a.y - b.y, dz = a.z - b.z;
        return dx * dx + dy * dy + dz * dz;
    }

    void search(int ni, const Vec3& q, Heap& heap) const {
        const Node& node = nodes_[static_cast<std::size_t>(ni)];
        if (node.axis < 0) {
            for (int i = node.begin; i < node.end; ++i) {
                int idx = order_[static_cast<std::size_t>(i)];
                heap.offer(idx, dist2(q, pts_[static_cast<std::size_t>(idx)]));
            }
            return;
        }
        double delta = q[static_cast<std::size_t>(node.axis)] - node.split;
        int near = delta < 0.0 ? node.left : node.right;
        int far = delta < 0.0 ? node.right : node.left;
        search(near, q, heap);
        // Strict inequality: a point on the splitting plane can still tie the
        // current worst and win on index, so only prune strictly-farther boxes.
        if (!heap.full() || delta * delta <= heap.worst_distance()) search(far, q, heap);
    }

    void radius_collect(int ni, const Vec3& q, double r2, std::vector<int>& out) const {
        const Node& node = nodes_[static_cast<std::size_t>(ni)];
        if (node.axis < 0) {
            for (int i = node.begin; i < node.end; ++i) {
                int idx = order_[static_cast<std::size_t>(i)];
                if (dist2(q, pts_[static_cast<std::size_t>(idx)]) <= r2) out.push_back(idx);
            }
            return;
        }
        double delta = q[static_cast<std::size_t>(node.axis)] - node.split;
        int near = delta < 0.0 ? node.left : node.right;
        int far = delta < 0.0 ? node.right : node.left;
        radius_collect(near, q, r2, out);
        if (delta * delta <= r2) radius_collect(far, q, r2, out);
    }

    std::vector<Vec3> pts_;
    std::vector<int> order_;
    std::vector<Node> nodes_;
    int root_ = -1;
};

// Exhaustive reference scan with the same tie-break; used as the oracle in
// tests and for small inputs where a tree is not worth building.
inline std::vector<Neighbor> brute_force_knn(const std::vector<Vec3>& pts, const Vec3& q, int k) {
    std::vector<Neighbor> all(pts.size());
    for (std::size_t i = 0; i < pts.size(); ++i) {
        double dx = q.x - pts[i].x, dy = q.y - pts[i].y, dz = q.z - pts[i].z;
        all[i] = {static_cast<int>(i), dx * dx + dy * dy + dz * dz};
    }
    std::size_t want = std::min<std::size_t>(static_cast<std::size_t>(k), pts.size());
    std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(want), all.end(),
                      [](const Neighbor& a, const Neighbor& b) {
                          return a.distance != b.distance ? a.distance < b.distance
                                                          : a.index < b.index;
                      });
    all.resize(want);
    for (auto& n : all) n.distance = std::sqrt(n.distance);
    return all;
}

}  // namespace pcad
