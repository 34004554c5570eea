#include <doctest.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <stdexcept>
#include <vector>

#include "objdisc/cloud.hpp"
#include "objdisc/errors.hpp"
#include "objdisc/supervoxel.hpp"
#include "test_util.hpp"

using namespace objdisc;

namespace {

void append_plane_grid(LabeledCloud& c, double x0, double x1, double y0, double y1, double z,
                       double step) {
    for (double x = x0; x <= x1 + 1e-12; x += step)
        for (double y = y0; y <= y1 + 1e-12; y += step) c.points.push_back({x, y, z});
}

// Surface points of an axis-aligned cube, sampled on a per-face grid.
void append_cube_surface(LabeledCloud& c, const Vec3& center, double half, double step) {
    for (double a = -half; a <= half + 1e-12; a += step)
        for (double b = -half; b <= half + 1e-12; b += step) {
            c.points.push_back({center.x + a, center.y + b, center.z - half});
            c.points.push_back({center.x + a, center.y + b, center.z + half});
            c.points.push_back({center.x + a, center.y - half, center.z + b});
            c.points.push_back({center.x + a, center.y + half, center.z + b});
            c.points.push_back({center.x - half, center.y + a, center.z + b});
            c.points.push_back({center.x + half, center.y + a, center.z + b});
        }
}

LabeledCloud fibonacci_sphere(int n, double radius) {
    LabeledCloud c;
    const double golden = M_PI * (3.0 - std::sqrt(5.0));
    for (int i = 0; i < n; ++i) {
        const double z = 1.0 - 2.0 * (i + 0.5) / n;
        const double r = std::sqrt(1.0 - z * z);
        const double th = golden * i;
        c.points.push_back({radius * r * std::cos(th), radius * r * std::sin(th), radius * z});
    }
    return c;
}

double default_voxel_res(double seed_res) { return std::max(seed_res / 8.0, 0.005); }

// BFS over the occupied voxels of one point set; true when 26-connected.
bool points_form_connected_voxels(const LabeledCloud& cloud, const std::vector<int>& idxs,
                                  double voxel_res) {
    std::set<VoxelKey> occ;
    for (int i : idxs) occ.insert(voxel_key_of(cloud.points[i], voxel_res));
    if (occ.empty()) return false;
    std::set<VoxelKey> seen;
    std::vector<VoxelKey> stack{*occ.begin()};
    seen.insert(*occ.begin());
    while (!stack.empty()) {
        const VoxelKey v = stack.back();
        stack.pop_back();
        for (int dx = -1; dx <= 1; ++dx)
            for (int dy = -1; dy <= 1; ++dy)
                for (int dz = -1; dz <= 1; ++dz) {
                    if (dx == 0 && dy == 0 && dz == 0) continue;
                    const VoxelKey nb{v.x + dx, v.y + dy, v.z + dz};
                    if (occ.count(nb) && !seen.count(nb)) {
                        seen.insert(nb);
                        stack.push_back(nb);
                    }
                }
    }
    return seen.size() == occ.size();
}

void check_partition(const LabeledCloud& cloud, const SegmentationResult& seg) {
    REQUIRE(seg.supervoxel_of_point.size() == cloud.size());
    std::vector<int> count(cloud.size(), 0);
    for (const Supervoxel& sv : seg.supervoxels) {
        CHECK(!sv.point_indices.empty());
        for (int i : sv.point_indices) {
            REQUIRE(i >= 0);
            REQUIRE(i < static_cast<int>(cloud.size()));
            ++count[i];
            CHECK(seg.supervoxel_of_point[i] == sv.id);
        }
    }
    for (std::size_t i = 0; i < cloud.size(); ++i) CHECK(count[i] == 1);
}

}  // namespace

TEST_SUITE_BEGIN("supervoxel");

TEST_CASE("plane normals point along +z") {
    LabeledCloud c;
    append_plane_grid(c, 0.0, 0.975, 0.0, 0.975, 0.0, 0.025);
    const NormalEstimate est = estimate_normals(c, 10);
    for (std::size_t i = 0; i < c.size(); ++i) {
        CHECK(!est.degenerate[i]);
        CHECK(std::abs(est.normals[i].z - 1.0) < 1e-9);
        CHECK(std::abs(est.normals[i].x) < 1e-9);
        CHECK(std::abs(est.normals[i].y) < 1e-9);
        // orientation rule: never away from the origin
        CHECK(est.normals[i].dot(c.points[i]) <= 0.0);
    }
}

TEST_CASE("sphere normals stay within 5 degrees of radial") {
    const LabeledCloud c = fibonacci_sphere(1000, 0.5);
    const NormalEstimate est = estimate_normals(c, 10);
    const double cos5 = std::cos(5.0 * M_PI / 180.0);
    for (std::size_t i = 0; i < c.size(); ++i) {
        const Vec3 inward = (c.points[i] * -1.0).normalized();
        CHECK(est.normals[i].dot(inward) >= cos5);
    }
}

TEST_CASE("collinear neighborhoods flag degeneracy") {
    LabeledCloud c;
    c.points = {{0, 0, 0}, {0.01, 0, 0}, {0.02, 0, 0}};
    const NormalEstimate est = estimate_normals(c, 3);
    for (std::size_t i = 0; i < c.size(); ++i) {
        CHECK(est.degenerate[i]);
        CHECK(est.normals[i].z == 1.0);
    }
}

TEST_CASE("estimate_normals argument errors") {
    const LabeledCloud c = testutil::random_cloud(5, 2);
    CHECK_THROWS_AS(estimate_normals(c, 2), std::invalid_argument);
    CHECK_THROWS_AS(estimate_normals(c, 6), std::invalid_argument);
}

TEST_CASE("two distant cubes give exactly two supervoxels") {
    LabeledCloud c;
    append_cube_surface(c, {0.25, 0.25, 0.25}, 0.05, 0.02);
    const std::size_t n_first = c.size();
    append_cube_surface(c, {1.25, 0.25, 0.25}, 0.05, 0.02);

    const SegmentationResult seg = vccs_segment(c, 0.5);
    REQUIRE(seg.supervoxels.size() == 2);
    check_partition(c, seg);
    std::set<int> first_ids, second_ids;
    for (std::size_t i = 0; i < c.size(); ++i)
        (i < n_first ? first_ids : second_ids).insert(seg.supervoxel_of_point[i]);
    CHECK(first_ids.size() == 1);
    CHECK(second_ids.size() == 1);
    CHECK(first_ids != second_ids);
    CHECK(seg.adjacency.edges.empty());
}

TEST_CASE("unit plane at seed 0.2 yields 20-30 compact supervoxels") {
    LabeledCloud c;
    append_plane_grid(c, 0.001, 0.991, 0.001, 0.991, 0.0, 0.01);
    const SegmentationResult seg = vccs_segment(c, 0.2);
    check_partition(c, seg);
    CHECK(seg.supervoxels.size() >= 20);
    CHECK(seg.supervoxels.size() <= 30);
    for (const Supervoxel& sv : seg.supervoxels) {
        Vec3 lo = c.points[sv.point_indices[0]], hi = lo;
        for (int i : sv.point_indices) {
            const Vec3& p = c.points[i];
            lo = {std::min(lo.x, p.x), std::min(lo.y, p.y), std::min(lo.z, p.z)};
            hi = {std::max(hi.x, p.x), std::max(hi.y, p.y), std::max(hi.z, p.z)};
        }
        CHECK((hi - lo).norm() <= 2.0 * 0.2);  // bounding diagonal bounds the diameter
    }
}

TEST_CASE("a single point still becomes one supervoxel") {
    LabeledCloud c;
    c.points = {{0.3, 0.3, 0.3}};
    const SegmentationResult seg = vccs_segment(c, 0.1);
    REQUIRE(seg.supervoxels.size() == 1);
    CHECK(seg.supervoxels[0].point_indices == std::vector<int>{0});
    CHECK(seg.supervoxel_of_point == std::vector<int>{0});
}

TEST_CASE("tiny object at coarse resolution is never dropped") {
    LabeledCloud c = fibonacci_sphere(10, 0.01);
    for (Vec3& p : c.points) p = p + Vec3{0.4, 0.4, 0.4};
    const SegmentationResult seg = vccs_segment(c, 0.2);
    check_partition(c, seg);
    CHECK(seg.supervoxels.size() >= 1);
}

TEST_CASE("multi-scale segmentation holds the partition, connectivity and adjacency properties") {
    LabeledCloud c;
    append_plane_grid(c, 0.0, 0.6, 0.0, 0.6, 0.0, 0.015);
    append_cube_surface(c, {0.3, 0.3, 0.1}, 0.08, 0.015);
    const std::vector<double> scales = {0.05, 0.1, 0.2};
    const auto segs = multi_scale_segment(c, scales);
    REQUIRE(segs.size() == scales.size());

    for (std::size_t si = 0; si < segs.size(); ++si) {
        const SegmentationResult& seg = segs[si];
        CHECK(seg.seed_resolution == scales[si]);
        check_partition(c, seg);

        const double vres = default_voxel_res(scales[si]);
        for (const Supervoxel& sv : seg.supervoxels)
            CHECK(points_form_connected_voxels(c, sv.point_indices, vres));

        // adjacency must match a brute-force voxel-level recomputation
        std::map<VoxelKey, int> owner;
        for (std::size_t pi = 0; pi < c.size(); ++pi)
            owner[voxel_key_of(c.points[pi], vres)] = seg.supervoxel_of_point[pi];
        std::set<std::pair<int, int>> expect;
        for (const auto& [key, id] : owner)
            for (int dx = -1; dx <= 1; ++dx)
                for (int dy = -1; dy <= 1; ++dy)
                    for (int dz = -1; dz <= 1; ++dz) {
                        if (dx == 0 && dy == 0 && dz == 0) continue;
                        auto it = owner.find({key.x + dx, key.y + dy, key.z + dz});
                        if (it != owner.end() && it->second != id)
                            expect.insert({std::min(id, it->second), std::max(id, it->second)});
                    }
        CHECK(seg.adjacency.edges == expect);
        for (const auto& [a, b] : seg.adjacency.edges) {
            CHECK(a < b);  // stored unordered, never reflexive
            CHECK(seg.adjacency.adjacent(a, b));
            CHECK(seg.adjacency.adjacent(b, a));
        }
    }
}

TEST_CASE("segmentation is deterministic") {
    LabeledCloud c = testutil::random_cloud(800, 31, 0.4);
    const SegmentationResult a = vccs_segment(c, 0.1);
    const SegmentationResult b = vccs_segment(c, 0.1);
    REQUIRE(a.supervoxels.size() == b.supervoxels.size());
    CHECK(a.supervoxel_of_point == b.supervoxel_of_point);
    CHECK(a.adjacency.edges == b.adjacency.edges);
    for (std::size_t i = 0; i < a.supervoxels.size(); ++i) {
        CHECK(a.supervoxels[i].centroid.x == b.supervoxels[i].centroid.x);
        CHECK(a.supervoxels[i].centroid.y == b.supervoxels[i].centroid.y);
        CHECK(a.supervoxels[i].centroid.z == b.supervoxels[i].centroid.z);
        CHECK(a.supervoxels[i].point_indices == b.supervoxels[i].point_indices);
    }
}

TEST_CASE("segmentation argument and edge cases") {
    LabeledCloud c = testutil::random_cloud(20, 4, 0.2);
    CHECK_THROWS_AS(vccs_segment(c, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(vccs_segment(c, -0.5), std::invalid_argument);
    VccsParams p;
    p.voxel_resolution = 0.3;
    CHECK_THROWS_AS(vccs_segment(c, 0.2, p), std::invalid_argument);

    const SegmentationResult empty = vccs_segment(LabeledCloud{}, 0.1);
    CHECK(empty.supervoxels.empty());
    CHECK(empty.supervoxel_of_point.empty());

    CHECK_THROWS_AS(multi_scale_segment(c, {}), std::invalid_argument);
    CHECK_THROWS_AS(multi_scale_segment(c, {0.1, 0.1}), std::invalid_argument);
    CHECK_THROWS_AS(multi_scale_segment(c, {0.1, -0.2}), std::invalid_argument);
}

TEST_CASE("single-resolution multi-scale equals one vccs_segment call") {
    LabeledCloud c;
    append_plane_grid(c, 0.0, 0.4, 0.0, 0.4, 0.0, 0.02);
    const auto multi = multi_scale_segment(c, {0.15});
    const SegmentationResult single = vccs_segment(c, 0.15);
    REQUIRE(multi.size() == 1);
    CHECK(multi[0].supervoxel_of_point == single.supervoxel_of_point);
    CHECK(multi[0].adjacency.edges == single.adjacency.edges);
}

TEST_CASE("segmentation dump lists point, scale and id") {
    LabeledCloud c;
    c.points = {{0.0, 0.0, 0.0}, {0.01, 0.0, 0.0}, {1.0, 1.0, 1.0}};
    const auto segs = multi_scale_segment(c, {0.3});
    const auto path = (testutil::scratch_dir() / "seg.txt").string();
    save_segmentation(segs, path);
    std::ifstream in(path);
    std::vector<std::array<int, 3>> rows;
    int a, b, d;
    while (in >> a >> b >> d) rows.push_back({a, b, d});
    REQUIRE(rows.size() == c.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        CHECK(rows[i][0] == static_cast<int>(i));
        CHECK(rows[i][1] == 0);
        CHECK(rows[i][2] == segs[0].supervoxel_of_point[i]);
    }
}

TEST_SUITE_END();
