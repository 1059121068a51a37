#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstring>

#include "pcad/synthesis.hpp"
#include "test_support.hpp"

using namespace pcad;
using namespace pcad::synth;
using testsupport::plane_cloud;
using testsupport::sphere_cloud;

TEST_CASE("mask is deterministic and respects fraction bounds") {
    Rng rng_cloud(401);
    auto cloud = sphere_cloud(800, rng_cloud);
    MaskConfig cfg;
    for (int trial = 0; trial < 10; ++trial) {
        Rng rng(500 + static_cast<std::uint64_t>(trial));
        auto mask = make_mask(cloud, rng, cfg);
        double fraction = static_cast<double>(mask.indices.size()) / 800.0;
        CHECK(fraction >= cfg.fraction_min);
        CHECK(fraction <= cfg.fraction_max);
        CHECK(!mask.indices.empty());
        CHECK(mask.center_index >= 0);

        Rng rng2(500 + static_cast<std::uint64_t>(trial));
        auto again = make_mask(cloud, rng2, cfg);
        CHECK(again.indices == mask.indices);
        CHECK(again.center_index == mask.center_index);
        CHECK(again.shape == mask.shape);
    }
}

TEST_CASE("sphere blob coverage tracks the area density estimate") {
    Rng rng_cloud(402);
    auto cloud = plane_cloud(2000, rng_cloud, 0.0, 1.0);  // density = 2000/4 per unit area
    MaskConfig cfg;
    cfg.radius_min_rel = 0.05;
    cfg.radius_max_rel = 0.08;
    cfg.fraction_min = 1e-4;
    cfg.fraction_max = 0.5;
    for (int trial = 0; trial < 20; ++trial) {
        Rng rng(600 + static_cast<std::uint64_t>(trial));
        auto mask = make_mask(cloud, rng, cfg);
        if (mask.shape != MaskShape::SphereBlob) continue;
        // skip blobs whose disk pokes past the plane boundary
        const Vec3& c = cloud.points[static_cast<std::size_t>(mask.center_index)];
        double r = mask.extent.x;
        if (std::abs(c.x) > 1.0 - r || std::abs(c.y) > 1.0 - r) continue;
        double expected = 3.14159265358979323846 * r * r * (2000.0 / 4.0);
        double got = static_cast<double>(mask.indices.size());
        CHECK(got > 0.5 * expected);
        CHECK(got < 1.5 * expected);
    }
}

TEST_CASE("unsatisfiable fraction bounds raise after bounded attempts") {
    Rng rng_cloud(403);
    auto cloud = sphere_cloud(100, rng_cloud);
    MaskConfig cfg;
    cfg.fraction_min = 0.90;  // a small radius can never cover 90% of the cloud
    cfg.fraction_max = 0.95;
    cfg.radius_min_rel = 0.001;
    cfg.radius_max_rel = 0.002;
    Rng rng(7);
    CHECK_THROWS(make_mask(cloud, rng, cfg));
}

TEST_CASE("null mask is the identity") {
    Rng rng_cloud(404);
    auto target = sphere_cloud(150, rng_cloud);
    auto source = sphere_cloud(150, rng_cloud);
    AnomalyMask null;
    Rng rng(1);
    auto sample = cut_paste(target, source, null, rng);
    REQUIRE(sample.cloud.size() == target.size());
    for (std::size_t i = 0; i < target.size(); ++i) {
        CHECK(sample.cloud.points[i] == target.points[i]);
        CHECK(sample.cloud.labels[i] == 0);
    }
}

TEST_CASE("replacement mode labels exactly the masked points") {
    Rng rng_cloud(405);
    auto target = sphere_cloud(400, rng_cloud);
    auto source = sphere_cloud(300, rng_cloud);
    Rng rng(2);
    auto mask = make_mask(target, rng);
    auto sample = cut_paste(target, source, mask, rng);
    REQUIRE(sample.cloud.size() == target.size());  // constant M
    std::size_t ones = 0;
    for (std::size_t i = 0; i < sample.cloud.labels.size(); ++i) {
        if (sample.cloud.labels[i]) {
            ++ones;
        } else {
            // label soundness: untouched points are bitwise identical
            CHECK(sample.cloud.points[i] == target.points[i]);
            CHECK(sample.cloud.normals[i] == target.normals[i]);
        }
    }
    CHECK(ones == mask.indices.size());
    bool has_zero = false;
    for (auto l : sample.cloud.labels) has_zero |= l == 0;
    CHECK(has_zero);
}

TEST_CASE("plane target with offset paste lifts only label-1 points") {
    Rng rng_cloud(406);
    auto target = plane_cloud(1500, rng_cloud, 0.0);
    auto source = sphere_cloud(500, rng_cloud, 0.3);
    Rng rng(3);
    MaskConfig mcfg;
    auto mask = make_mask(target, rng, mcfg);
    CutPasteConfig cfg;
    cfg.offset_min = 0.05;
    cfg.offset_max = 0.15;
    auto sample = cut_paste(target, source, mask, rng, cfg);
    double label1_mean_dist = 0.0;
    std::size_t n1 = 0;
    for (std::size_t i = 0; i < sample.cloud.size(); ++i) {
        if (sample.cloud.labels[i]) {
            label1_mean_dist += std::abs(sample.cloud.points[i].z);
            ++n1;
        } else {
            CHECK(std::abs(sample.cloud.points[i].z) < 1e-9);
        }
    }
    REQUIRE(n1 > 0);
    CHECK(label1_mean_dist / static_cast<double>(n1) > 0.0);
}

TEST_CASE("insertion mode appends pasted points") {
    Rng rng_cloud(407);
    auto target = sphere_cloud(200, rng_cloud);
    auto source = sphere_cloud(200, rng_cloud);
    Rng rng(4);
    auto mask = make_mask(target, rng);
    CutPasteConfig cfg;
    cfg.insertion = true;
    auto sample = cut_paste(target, source, mask, rng, cfg);
    REQUIRE(sample.cloud.size() == target.size() + mask.indices.size());
    for (std::size_t i = 0; i < target.size(); ++i) {
        CHECK(sample.cloud.labels[i] == 0);
        CHECK(sample.cloud.points[i] == target.points[i]);
    }
    for (std::size_t i = target.size(); i < sample.cloud.size(); ++i)
        CHECK(sample.cloud.labels[i] == 1);
}

TEST_CASE("merge radius extends labels to adjacent originals") {
    // target: dense line; paste lands on masked point, neighbors within the
    // merge radius get flagged too
    PointCloud target;
    for (int i = 0; i < 100; ++i) {
        target.points.push_back({i * 0.01, 0.0, 0.0});
        target.normals.push_back({0, 0, 1});
    }
    PointCloud source = target;
    AnomalyMask mask;
    mask.indices = {50};
    mask.center_index = 50;
    mask.shape = MaskShape::SphereBlob;
    mask.extent = {0.005, 0.005, 0.005};
    Rng rng(5);
    CutPasteConfig cfg;
    cfg.merge_radius = 0.015;
    cfg.offset_min = cfg.offset_max = 0.0;
    cfg.scale_min = cfg.scale_max = 1.0;
    auto sample = cut_paste(target, source, mask, rng, cfg);
    std::size_t ones = 0;
    for (auto l : sample.cloud.labels) ones += l;
    CHECK(ones > 1);  // the pasted point plus merged neighbors
}

TEST_CASE("dataset defaults and determinism") {
    Rng rng_cloud(408);
    std::vector<PointCloud> clouds;
    for (int i = 0; i < 3; ++i) clouds.push_back(sphere_cloud(220, rng_cloud));

    auto ds = generate_dataset(clouds, 24, 99);
    REQUIRE(ds.size() == 24);
    std::size_t normals_count = 0;
    for (const auto& s : ds) {
        REQUIRE(s.cloud.has_labels());
        std::size_t ones = 0;
        for (auto l : s.cloud.labels) ones += l;
        if (s.provenance.mask.null_mask()) {
            CHECK(ones == 0);
            ++normals_count;
        } else {
            CHECK(ones == s.provenance.mask.indices.size());
            CHECK(s.provenance.source_id != s.provenance.target_id);
            double fraction = static_cast<double>(ones) / static_cast<double>(s.cloud.size());
            CHECK(fraction >= 0.005);
            CHECK(fraction <= 0.05);
        }
    }
    CHECK(normals_count > 0);
    CHECK(normals_count < 24);

    // fixed seed reproduces the dataset byte for byte
    auto again = generate_dataset(clouds, 24, 99);
    for (std::size_t i = 0; i < ds.size(); ++i)
        CHECK(cloud_to_text(again[i].cloud) == cloud_to_text(ds[i].cloud));

    // all-normals configuration
    DatasetConfig cfg;
    cfg.normal_fraction = 1.0;
    auto all_normal = generate_dataset(clouds, 10, 1, cfg);
    for (const auto& s : all_normal)
        for (auto l : s.cloud.labels) CHECK(l == 0);
}

TEST_CASE("dataset generation needs two clouds by default") {
    Rng rng_cloud(409);
    std::vector<PointCloud> one{sphere_cloud(100, rng_cloud)};
    CHECK_THROWS(generate_dataset(one, 5, 0));
    DatasetConfig cfg;
    cfg.allow_same_source = true;
    CHECK_NOTHROW(generate_dataset(one, 5, 0, cfg));
}

TEST_CASE("provenance json carries mask and transform parameters") {
    Rng rng_cloud(410);
    auto target = sphere_cloud(300, rng_cloud);
    auto source = sphere_cloud(300, rng_cloud);
    Rng rng(6);
    auto mask = make_mask(target, rng);
    auto sample = cut_paste(target, source, mask, rng);
    sample.provenance.target_id = 0;
    sample.provenance.source_id = 1;
    sample.provenance.seed = 42;
    auto j = provenance_to_json(sample.provenance);
    CHECK(j.at("seed").get<std::uint64_t>() == 42);
    CHECK(j.at("mask").at("count").get<std::size_t>() == mask.indices.size());
    CHECK(j.at("transform").contains("angle"));
}
