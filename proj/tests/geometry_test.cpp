#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <set>
#include <sstream>

#include "pcad/geometry.hpp"
#include "pcad/kdtree.hpp"
#include "pcad/point_cloud.hpp"
#include "test_support.hpp"

using namespace pcad;
using testsupport::grid_cloud;
using testsupport::plane_cloud;
using testsupport::quantized_cloud;
using testsupport::random_cloud;
using testsupport::sphere_cloud;

TEST_CASE("kdtree self query on single point") {
    std::vector<Vec3> pts{{1.0, 2.0, 3.0}};
    KdTree3 tree(pts);
    auto res = tree.knn(pts[0], 1);
    REQUIRE(res.size() == 1);
    CHECK(res[0].index == 0);
    CHECK(res[0].distance == 0.0);
}

TEST_CASE("kdtree collinear points analytic distances") {
    std::vector<Vec3> pts{{0, 0, 0}, {1, 0, 0}, {2, 0, 0}};
    KdTree3 tree(pts);
    auto res = tree.knn(pts[0], 2);
    REQUIRE(res.size() == 2);
    CHECK(res[0].index == 0);
    CHECK(res[1].index == 1);
    CHECK(res[1].distance == Catch::Approx(1.0));
}

TEST_CASE("kdtree equals brute force scan") {
    Rng rng(11);
    for (int trial = 0; trial < 8; ++trial) {
        std::size_t m = 100 + rng.uniform_index(400);
        auto cloud = random_cloud(m, rng);
        // inject exact duplicates to force distance ties
        for (int d = 0; d < 10; ++d)
            cloud.points.push_back(cloud.points[rng.uniform_index(cloud.points.size())]);
        KdTree3 tree(cloud.points);
        for (int q = 0; q < 25; ++q) {
            Vec3 query = q % 2 == 0
                             ? cloud.points[rng.uniform_index(cloud.points.size())]
                             : Vec3{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
            int k = 1 + static_cast<int>(rng.uniform_index(8));
            auto got = tree.knn(query, k);
            auto want = brute_force_knn(cloud.points, query, k);
            REQUIRE(got.size() == want.size());
            for (std::size_t i = 0; i < got.size(); ++i) {
                CHECK(got[i].index == want[i].index);
                CHECK(got[i].distance == want[i].distance);
            }
        }
    }
}

TEST_CASE("kdtree radius search equals linear scan") {
    Rng rng(12);
    auto cloud = random_cloud(300, rng);
    KdTree3 tree(cloud.points);
    for (int q = 0; q < 20; ++q) {
        Vec3 query{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
        double r = rng.uniform(0.05, 0.8);
        auto got = tree.radius_search(query, r);
        std::vector<int> want;
        for (std::size_t i = 0; i < cloud.points.size(); ++i)
            if (norm(cloud.points[i] - query) <= r) want.push_back(static_cast<int>(i));
        CHECK(got == want);
    }
}

TEST_CASE("kdtree rejects empty input") {
    std::vector<Vec3> empty;
    CHECK_THROWS_WITH(KdTree3(empty), "empty point cloud");
}

TEST_CASE("normals on a plane are +z") {
    Rng rng(21);
    auto cloud = plane_cloud(200, rng);
    cloud.normals.clear();
    auto est = estimate_normals(cloud, 8);
    REQUIRE(est.cloud.normals.size() == 200);
    CHECK(est.degenerate_count == 0);
    for (const auto& n : est.cloud.normals) {
        CHECK(std::abs(n.x) < 1e-6);
        CHECK(std::abs(n.y) < 1e-6);
        CHECK(n.z == Catch::Approx(1.0).margin(1e-6));
    }
}

TEST_CASE("normals on a sphere point outward") {
    Rng rng(22);
    auto cloud = sphere_cloud(4000, rng);
    cloud.normals.clear();
    auto est = estimate_normals(cloud, 12, NormalOrientation::away_from_point({0, 0, 0}));
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        Vec3 expect = normalized(cloud.points[i]);
        double cosang = dot(est.cloud.normals[i], expect);
        CHECK(cosang > std::cos(5.0 * 3.14159265358979323846 / 180.0));
    }
}

TEST_CASE("coincident points fall back to viewpoint direction") {
    PointCloud cloud;
    cloud.points = {{1, 1, 1}, {1, 1, 1}, {1, 1, 1}};
    auto est = estimate_normals(cloud, 3);
    CHECK(est.degenerate_count == 3);
    for (const auto& n : est.cloud.normals) CHECK(n == Vec3{0, 0, 1});
}

TEST_CASE("normal estimation is rotation equivariant") {
    Rng rng(23);
    auto cloud = sphere_cloud(300, rng);
    cloud.normals.clear();
    Mat3 rot = rng.rotation(3.14159265358979323846);
    auto rotated = testsupport::transformed(cloud, rot, {0, 0, 0});
    auto base = estimate_normals(cloud, 10);
    auto turned = estimate_normals(rotated, 10);
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        Vec3 expect = rot * base.cloud.normals[i];
        Vec3 got = turned.cloud.normals[i];
        double align = std::abs(dot(expect, got));  // up to sign
        CHECK(align > 1.0 - 1e-5);
    }
}

TEST_CASE("fps n equals M returns every index") {
    Rng rng(31);
    auto cloud = random_cloud(17, rng);
    auto idx = farthest_point_sample(cloud, 17, 5);
    std::set<int> unique(idx.begin(), idx.end());
    CHECK(unique.size() == 17);
}

TEST_CASE("fps picks the diagonal corner of a square") {
    PointCloud cloud;
    cloud.points = {{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0}};
    auto idx = farthest_point_sample(cloud, 2, 0);  // start at corner 0
    REQUIRE(idx.size() == 2);
    CHECK(idx[0] == 0);
    CHECK(idx[1] == 2);
}

TEST_CASE("fps matches brute-force recomputation of min distances") {
    Rng rng(32);
    auto cloud = random_cloud(100, rng);
    auto idx = farthest_point_sample(cloud, 10, 7);
    // every pick after the first must maximize min-distance to its predecessors
    for (std::size_t step = 1; step < idx.size(); ++step) {
        auto min_dist_to_set = [&](int candidate) {
            double best = std::numeric_limits<double>::infinity();
            for (std::size_t s = 0; s < step; ++s)
                best = std::min(best, norm2(cloud.points[static_cast<std::size_t>(candidate)] -
                                            cloud.points[static_cast<std::size_t>(idx[s])]));
            return best;
        };
        double chosen = min_dist_to_set(idx[step]);
        for (std::size_t i = 0; i < cloud.size(); ++i) {
            double d = min_dist_to_set(static_cast<int>(i));
            CHECK(chosen >= d - 1e-15);
        }
    }
    CHECK_THROWS(farthest_point_sample(cloud, 101, 0));
}

TEST_CASE("single point patch sits at the origin") {
    PointCloud cloud;
    cloud.points = {{5, 6, 7}};
    auto patches = extract_patches(cloud, {0}, 1);
    REQUIRE(patches.size() == 1);
    CHECK(patches[0].center_index == 0);
    REQUIRE(patches[0].member_indices == std::vector<int>{0});
    CHECK(norm(patches[0].centered_points[0]) == 0.0);
    CHECK(patches[0].scale > 0.0);
}

TEST_CASE("patch members form the nearest grid ring") {
    auto cloud = grid_cloud(7, 1.0);
    int center = 3 * 7 + 3;  // interior point
    auto patches = extract_patches(cloud, {center}, 5);
    auto want = brute_force_knn(cloud.points, cloud.points[static_cast<std::size_t>(center)], 5);
    REQUIRE(patches[0].member_indices.size() == 5);
    for (std::size_t i = 0; i < want.size(); ++i)
        CHECK(patches[0].member_indices[i] == want[i].index);
}

TEST_CASE("patches are centered and translation invariant") {
    Rng rng(41);
    auto cloud = random_cloud(120, rng);
    auto centers = farthest_point_sample(cloud, 6, 3);
    auto patches = extract_patches(cloud, centers, 20);
    PointCloud moved = cloud;
    for (auto& p : moved.points) p += Vec3{10.0, -4.5, 2.25};
    auto moved_patches = extract_patches(moved, centers, 20);
    for (std::size_t pi = 0; pi < patches.size(); ++pi) {
        Vec3 centroid{};
        for (const auto& q : patches[pi].centered_points) centroid += q;
        centroid *= 1.0 / static_cast<double>(patches[pi].centered_points.size());
        CHECK(norm(centroid) < 1e-9);
        for (std::size_t i = 0; i < patches[pi].centered_points.size(); ++i)
            CHECK(norm(patches[pi].centered_points[i] - moved_patches[pi].centered_points[i]) <
                  1e-9);
        bool center_in_members = false;
        for (int m : patches[pi].member_indices)
            if (m == patches[pi].center_index) center_in_members = true;
        CHECK(center_in_members);
    }
}

TEST_CASE("radius components handle empty and separated masks") {
    Rng rng(51);
    auto cloud = random_cloud(50, rng);
    std::vector<std::uint8_t> none(cloud.size(), 0);
    CHECK(radius_components(cloud, none, 0.1).empty());

    PointCloud two;
    for (int i = 0; i < 5; ++i) two.points.push_back({0.01 * i, 0, 0});
    for (int i = 0; i < 5; ++i) two.points.push_back({10.0 + 0.01 * i, 0, 0});
    std::vector<std::uint8_t> all(two.size(), 1);
    auto comps = radius_components(two, all, 0.5);
    REQUIRE(comps.size() == 2);
    CHECK(comps[0] == std::vector<int>{0, 1, 2, 3, 4});
    CHECK(comps[1] == std::vector<int>{5, 6, 7, 8, 9});
}

namespace {

// Union-find over the full O(M^2) adjacency; the independent oracle.
std::vector<std::vector<int>> brute_components(const PointCloud& cloud,
                                               const std::vector<std::uint8_t>& mask,
                                               double radius) {
    std::vector<int> ids;
    for (std::size_t i = 0; i < mask.size(); ++i)
        if (mask[i]) ids.push_back(static_cast<int>(i));
    std::vector<int> parent(ids.size());
    for (std::size_t i = 0; i < parent.size(); ++i) parent[i] = static_cast<int>(i);
    std::function<int(int)> find = [&](int x) {
        while (parent[static_cast<std::size_t>(x)] != x) x = parent[static_cast<std::size_t>(x)];
        return x;
    };
    for (std::size_t a = 0; a < ids.size(); ++a)
        for (std::size_t b = a + 1; b < ids.size(); ++b)
            if (norm(cloud.points[static_cast<std::size_t>(ids[a])] -
                     cloud.points[static_cast<std::size_t>(ids[b])]) <= radius)
                parent[static_cast<std::size_t>(find(static_cast<int>(b)))] =
                    find(static_cast<int>(a));
    std::map<int, std::vector<int>> by_root;
    for (std::size_t i = 0; i < ids.size(); ++i)
        by_root[find(static_cast<int>(i))].push_back(ids[i]);
    std::vector<std::vector<int>> out;
    for (auto& [root, members] : by_root) {
        std::sort(members.begin(), members.end());
        out.push_back(members);
    }
    std::sort(out.begin(), out.end(),
              [](const auto& a, const auto& b) { return a.front() < b.front(); });
    return out;
}

}  // namespace

TEST_CASE("radius components match union-find oracle and partition the mask") {
    Rng rng(52);
    for (int trial = 0; trial < 5; ++trial) {
        // clustered instance: several blobs of varying tightness
        PointCloud cloud;
        int blobs = 3 + static_cast<int>(rng.uniform_index(4));
        for (int b = 0; b < blobs; ++b) {
            Vec3 c{rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(-5, 5)};
            int n = 5 + static_cast<int>(rng.uniform_index(20));
            for (int i = 0; i < n; ++i)
                cloud.points.push_back(c + Vec3{rng.normal(0, 0.2), rng.normal(0, 0.2),
                                                rng.normal(0, 0.2)});
        }
        std::vector<std::uint8_t> mask(cloud.size());
        for (auto& m : mask) m = rng.uniform() < 0.7 ? 1 : 0;
        double radius = rng.uniform(0.2, 1.5);
        auto got = radius_components(cloud, mask, radius);
        auto want = brute_components(cloud, mask, radius);
        CHECK(got == want);

        std::set<int> seen;
        std::size_t total = 0;
        for (const auto& comp : got) {
            total += comp.size();
            for (int idx : comp) {
                CHECK(mask[static_cast<std::size_t>(idx)] == 1);
                seen.insert(idx);
            }
        }
        std::size_t mask_count = 0;
        for (auto m : mask) mask_count += m;
        CHECK(seen.size() == total);
        CHECK(total == mask_count);
    }
}

TEST_CASE("text point cloud io round trips") {
    std::string text =
        "# a comment\n"
        "0.5 1.25 -3\n"
        "1 2 3\n";
    std::istringstream in(text);
    auto cloud = load_cloud_text(in);
    REQUIRE(cloud.size() == 2);
    CHECK(cloud.points[0] == Vec3{0.5, 1.25, -3.0});
    CHECK_FALSE(cloud.has_normals());

    Rng rng(61);
    auto full = sphere_cloud(40, rng);
    full.labels.assign(40, 0);
    full.labels[3] = 1;
    auto text2 = cloud_to_text(full);
    std::istringstream in2(text2);
    auto back = load_cloud_text(in2);
    REQUIRE(back.size() == full.size());
    for (std::size_t i = 0; i < full.size(); ++i) {
        CHECK(back.points[i] == full.points[i]);
        CHECK(back.normals[i] == full.normals[i]);
        CHECK(back.labels[i] == full.labels[i]);
    }
    CHECK(cloud_to_text(back) == text2);
}

TEST_CASE("text loader rejects malformed input") {
    std::istringstream bad1("1 2\n");
    CHECK_THROWS(load_cloud_text(bad1));
    std::istringstream bad2("1 2 3\n1 2 3 4 5 6\n");
    CHECK_THROWS(load_cloud_text(bad2));
    std::istringstream bad3("1 2 x\n");
    CHECK_THROWS(load_cloud_text(bad3));
    std::istringstream empty("# nothing\n");
    CHECK_THROWS(load_cloud_text(empty));
}

TEST_CASE("median nn spacing on a grid") {
    auto cloud = grid_cloud(6, 0.25);
    CHECK(median_nn_spacing(cloud) == Catch::Approx(0.25));
}
