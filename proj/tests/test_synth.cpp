#include "objdisc/synth.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <numbers>
#include <set>

#include "objdisc/errors.hpp"
#include "test_util.hpp"

using namespace objdisc;

namespace {

constexpr double kPi = std::numbers::pi;

ShapeSpec shape(ShapeKind kind, Vec3 size, double density = 12000.0) {
    ShapeSpec s;
    s.kind = kind;
    s.size = size;
    s.density = density;
    return s;
}

bool clouds_equal(const LabeledCloud& a, const LabeledCloud& b) {
    return a.points == b.points && a.colors == b.colors && a.labels == b.labels;
}

}  // namespace

TEST_CASE("empty scene is a plane of background points") {
    SceneSpec spec;
    spec.plane_half_extent = 0.5;
    spec.plane_density = 1000.0;
    spec.rng_seed = 3;
    const LabeledCloud cloud = make_scene(spec);
    CHECK(cloud.size() == 1000);  // (2 * 0.5)^2 * 1000
    CHECK(cloud.has_labels());
    CHECK(cloud.has_colors());
    for (int l : cloud.labels) CHECK(l == 0);
    for (const Vec3& p : cloud.points) {
        CHECK(std::abs(p.x) <= 0.5 + 4.0 * spec.noise_sigma);
        CHECK(std::abs(p.z) <= 4.0 * spec.noise_sigma);
    }
}

TEST_CASE("point counts follow the surface-area oracle exactly") {
    const double d = 9000.0;
    SceneSpec spec;
    spec.plane_density = 0.0;
    spec.rng_seed = 11;

    SUBCASE("box") {
        spec.shapes = {shape(ShapeKind::box, {0.1, 0.15, 0.2}, d)};
        const double area = 2.0 * (0.1 * 0.15 + 0.1 * 0.2 + 0.15 * 0.2);
        CHECK(shape_surface_area(spec.shapes[0]) == doctest::Approx(area).epsilon(1e-12));
        CHECK(make_scene(spec).size() ==
              static_cast<std::size_t>(std::llround(area * d)));
    }
    SUBCASE("cylinder") {
        spec.shapes = {shape(ShapeKind::cylinder, {0.1, 0.1, 0.18}, d)};
        const double r = 0.05;
        const double area = 2.0 * kPi * r * 0.18 + 2.0 * kPi * r * r;
        CHECK(shape_surface_area(spec.shapes[0]) == doctest::Approx(area).epsilon(1e-12));
        CHECK(make_scene(spec).size() ==
              static_cast<std::size_t>(std::llround(area * d)));
    }
    SUBCASE("sphere") {
        spec.shapes = {shape(ShapeKind::sphere, {0.12, 0.12, 0.12}, d)};
        const double area = kPi * 0.12 * 0.12;
        CHECK(shape_surface_area(spec.shapes[0]) == doctest::Approx(area).epsilon(1e-12));
        CHECK(make_scene(spec).size() ==
              static_cast<std::size_t>(std::llround(area * d)));
    }
    SUBCASE("l_shape equals prism formula") {
        // prism surface = 2 * profile area + profile perimeter * depth; the
        // L profile of width sx, height sz keeps the base and left column of
        // half height/width: area = sx*sz - (sx/2)*(sz/2)
        const double sx = 0.1, sy = 0.08, sz = 0.16;
        spec.shapes = {shape(ShapeKind::l_shape, {sx, sy, sz}, d)};
        const double profile_area = sx * sz - (sx / 2.0) * (sz / 2.0);
        const double perimeter = 2.0 * sx + 2.0 * sz;  // rectilinear L: same as its bounding box
        const double area = 2.0 * profile_area + perimeter * sy;
        CHECK(shape_surface_area(spec.shapes[0]) == doctest::Approx(area).epsilon(1e-12));
    }
    SUBCASE("t_shape equals prism formula") {
        const double sx = 0.1, sy = 0.08, sz = 0.16;
        spec.shapes = {shape(ShapeKind::t_shape, {sx, sy, sz}, d)};
        // stem: half width, half height; bar: full width, half height
        const double profile_area = (sx / 2.0) * (sz / 2.0) + sx * (sz / 2.0);
        // rectilinear perimeter: horizontal runs 2*sx total each direction,
        // vertical runs 2*sz total each side
        const double perimeter = 2.0 * sx + 2.0 * sz;
        const double area = 2.0 * profile_area + perimeter * sy;
        CHECK(shape_surface_area(spec.shapes[0]) == doctest::Approx(area).epsilon(1e-12));
    }
}

TEST_CASE("same seed reproduces the cloud bit for bit") {
    SceneSpec spec;
    spec.rng_seed = 77;
    spec.shapes = {shape(ShapeKind::box, {0.1, 0.1, 0.1}),
                   shape(ShapeKind::sphere, {0.1, 0.1, 0.1}),
                   shape(ShapeKind::t_shape, {0.1, 0.08, 0.12})};
    const LabeledCloud a = make_scene(spec);
    const LabeledCloud b = make_scene(spec);
    CHECK(clouds_equal(a, b));
    spec.rng_seed = 78;
    CHECK(!clouds_equal(a, make_scene(spec)));
}

TEST_CASE("noise displaces each point by at most four sigma") {
    SceneSpec base;
    base.rng_seed = 5;
    base.shapes = {shape(ShapeKind::cylinder, {0.1, 0.1, 0.15}),
                   shape(ShapeKind::l_shape, {0.12, 0.1, 0.14})};
    SceneSpec noisy = base;
    noisy.noise_sigma = 0.003;
    base.noise_sigma = 0.0;

    // the sample streams align across sigma values, so each noisy point
    // pairs with its exact on-surface counterpart
    const LabeledCloud clean = make_scene(base);
    const LabeledCloud jittered = make_scene(noisy);
    REQUIRE(clean.size() == jittered.size());
    CHECK(clean.labels == jittered.labels);
    double max_shift = 0.0;
    for (std::size_t i = 0; i < clean.size(); ++i)
        max_shift = std::max(max_shift, distance(clean.points[i], jittered.points[i]));
    CHECK(max_shift <= 4.0 * 0.003 + 1e-12);
    CHECK(max_shift > 0.0);
}

TEST_CASE("labels are 1-based spec order and objects rest on the plane") {
    SceneSpec spec;
    spec.rng_seed = 21;
    spec.noise_sigma = 0.0;
    spec.plane_density = 500.0;
    spec.shapes = {shape(ShapeKind::box, {0.1, 0.1, 0.1}),
                   shape(ShapeKind::cylinder, {0.08, 0.08, 0.12}),
                   shape(ShapeKind::sphere, {0.1, 0.1, 0.1})};
    const LabeledCloud cloud = make_scene(spec);

    std::map<int, std::size_t> counts;
    std::map<int, double> min_z;
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        ++counts[cloud.labels[i]];
        auto [it, fresh] = min_z.try_emplace(cloud.labels[i], cloud.points[i].z);
        if (!fresh) it->second = std::min(it->second, cloud.points[i].z);
    }
    REQUIRE(counts.size() == 4);  // background + three objects
    for (int k = 0; k <= 3; ++k) CHECK(counts.at(k) > 0);
    for (int k = 0; k <= 3; ++k) {
        CHECK(min_z.at(k) >= -1e-12);
        CHECK(min_z.at(k) <= 0.02);
    }
}

TEST_CASE("auto placement honors the separation constraint") {
    SceneSpec spec;
    spec.rng_seed = 9;
    spec.noise_sigma = 0.0;
    spec.plane_density = 0.0;
    spec.min_separation = 0.15;
    spec.shapes = {shape(ShapeKind::box, {0.1, 0.1, 0.1}),
                   shape(ShapeKind::box, {0.1, 0.1, 0.1}),
                   shape(ShapeKind::cylinder, {0.08, 0.08, 0.1})};
    const LabeledCloud cloud = make_scene(spec);

    // recover each object's footprint center from its points
    std::map<int, Vec3> sums;
    std::map<int, std::size_t> counts;
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        sums[cloud.labels[i]] += cloud.points[i];
        ++counts[cloud.labels[i]];
    }
    std::vector<Vec3> centers;
    for (int k = 1; k <= 3; ++k)
        centers.push_back(sums.at(k) / static_cast<double>(counts.at(k)));
    const std::vector<double> radii = {footprint_radius(spec.shapes[0]),
                                       footprint_radius(spec.shapes[1]),
                                       footprint_radius(spec.shapes[2])};
    for (std::size_t a = 0; a < centers.size(); ++a)
        for (std::size_t b = a + 1; b < centers.size(); ++b) {
            const double gap = std::hypot(centers[a].x - centers[b].x,
                                          centers[a].y - centers[b].y) -
                               radii[a] - radii[b];
            // centers estimated from samples wobble a little; the true
            // constraint holds exactly by construction
            CHECK(gap >= spec.min_separation - 0.02);
        }
    for (std::size_t a = 0; a < centers.size(); ++a) {
        CHECK(std::abs(centers[a].x) <= spec.plane_half_extent);
        CHECK(std::abs(centers[a].y) <= spec.plane_half_extent);
    }
}

TEST_CASE("explicit poses are validated instead of drawn") {
    SceneSpec spec;
    spec.rng_seed = 2;
    spec.noise_sigma = 0.0;
    spec.plane_density = 0.0;
    spec.min_separation = 0.1;
    ShapeSpec a = shape(ShapeKind::box, {0.1, 0.1, 0.1});
    a.auto_place = false;
    a.translation = {-0.2, 0.0, 0.0};
    ShapeSpec b = a;
    b.translation = {0.2, 0.0, 0.0};
    spec.shapes = {a, b};

    SUBCASE("well separated pair is accepted at the given spots") {
        const LabeledCloud cloud = make_scene(spec);
        for (std::size_t i = 0; i < cloud.size(); ++i) {
            const double expected = cloud.labels[i] == 1 ? -0.2 : 0.2;
            CHECK(std::abs(cloud.points[i].x - expected) <= 0.06);
        }
    }
    SUBCASE("overlapping pair is rejected") {
        spec.shapes[1].translation = {-0.1, 0.0, 0.0};
        CHECK_THROWS_AS(make_scene(spec), data_error);
    }
    SUBCASE("pose off the plane is rejected") {
        spec.shapes[1].translation = {0.9, 0.0, 0.0};
        CHECK_THROWS_AS(make_scene(spec), data_error);
    }
    SUBCASE("nonzero z translation is rejected") {
        spec.shapes[1].translation = {0.2, 0.0, 0.05};
        CHECK_THROWS_AS(make_scene(spec), std::invalid_argument);
    }
}

TEST_CASE("infeasible placement fails after bounded attempts") {
    SceneSpec spec;
    spec.rng_seed = 1;
    spec.plane_half_extent = 0.2;
    spec.min_separation = 0.3;
    spec.shapes = {shape(ShapeKind::box, {0.15, 0.15, 0.1}),
                   shape(ShapeKind::box, {0.15, 0.15, 0.1}),
                   shape(ShapeKind::box, {0.15, 0.15, 0.1})};
    CHECK_THROWS_WITH_AS(make_scene(spec), doctest::Contains("100 attempts"), data_error);

    SUBCASE("a single footprint larger than the plane fails immediately") {
        spec.shapes = {shape(ShapeKind::sphere, {0.5, 0.5, 0.5})};
        CHECK_THROWS_WITH_AS(make_scene(spec), doctest::Contains("half extent"), data_error);
    }
}

TEST_CASE("spec validation") {
    SceneSpec spec;
    SUBCASE("bad plane") {
        spec.plane_half_extent = 0.0;
        CHECK_THROWS_AS(make_scene(spec), std::invalid_argument);
    }
    SUBCASE("negative noise") {
        spec.noise_sigma = -0.001;
        CHECK_THROWS_AS(make_scene(spec), std::invalid_argument);
    }
    SUBCASE("bad shape size") {
        spec.shapes = {shape(ShapeKind::box, {0.1, -0.1, 0.1})};
        CHECK_THROWS_AS(make_scene(spec), std::invalid_argument);
    }
    SUBCASE("bad density") {
        spec.shapes = {shape(ShapeKind::box, {0.1, 0.1, 0.1}, 0.0)};
        CHECK_THROWS_AS(make_scene(spec), std::invalid_argument);
    }
    SUBCASE("elliptic cylinder") {
        spec.shapes = {shape(ShapeKind::cylinder, {0.1, 0.12, 0.1})};
        CHECK_THROWS_AS(make_scene(spec), std::invalid_argument);
    }
    SUBCASE("non-spherical sphere") {
        spec.shapes = {shape(ShapeKind::sphere, {0.1, 0.1, 0.12})};
        CHECK_THROWS_AS(make_scene(spec), std::invalid_argument);
    }
}

TEST_CASE("shape kind names round-trip") {
    for (ShapeKind k : {ShapeKind::box, ShapeKind::cylinder, ShapeKind::sphere,
                        ShapeKind::l_shape, ShapeKind::t_shape})
        CHECK(shape_kind_from_name(shape_kind_name(k)) == k);
    CHECK_THROWS_AS(shape_kind_from_name("torus"), std::invalid_argument);
}

TEST_CASE("dataset split keeps held-out kinds unseen") {
    const std::set<ShapeKind> train_kinds = {ShapeKind::box, ShapeKind::cylinder};
    const std::set<ShapeKind> test_kinds = {ShapeKind::sphere, ShapeKind::l_shape,
                                            ShapeKind::t_shape};
    const Dataset ds = make_dataset(train_kinds, test_kinds, 6, 42);

    REQUIRE(ds.train.size() == 6);
    REQUIRE(ds.test.size() == 6);
    REQUIRE(ds.train_specs.size() == 6);
    REQUIRE(ds.test_specs.size() == 6);
    for (const SceneSpec& s : ds.train_specs) {
        CHECK(!s.shapes.empty());
        for (const ShapeSpec& sh : s.shapes) CHECK(train_kinds.count(sh.kind) == 1);
    }
    for (const SceneSpec& s : ds.test_specs) {
        CHECK(!s.shapes.empty());
        for (const ShapeSpec& sh : s.shapes) CHECK(test_kinds.count(sh.kind) == 1);
    }
    // every scene really contains its objects
    for (std::size_t i = 0; i < ds.test.size(); ++i) {
        const int expected = static_cast<int>(ds.test_specs[i].shapes.size());
        const int top = *std::max_element(ds.test[i].labels.begin(), ds.test[i].labels.end());
        CHECK(top == expected);
    }
}

TEST_CASE("overlapping dataset kinds are refused") {
    CHECK_THROWS_WITH_AS(make_dataset({ShapeKind::box, ShapeKind::sphere}, {ShapeKind::sphere},
                                      2, 1),
                         doctest::Contains("sphere"), config_error);
    CHECK_THROWS_AS(make_dataset({}, {ShapeKind::sphere}, 2, 1), config_error);
    CHECK_THROWS_AS(make_dataset({ShapeKind::box}, {ShapeKind::sphere}, 0, 1), config_error);
}

TEST_CASE("dataset generation is seed deterministic") {
    const std::set<ShapeKind> tr = {ShapeKind::box};
    const std::set<ShapeKind> te = {ShapeKind::sphere};
    const Dataset a = make_dataset(tr, te, 3, 1234);
    const Dataset b = make_dataset(tr, te, 3, 1234);
    REQUIRE(a.train.size() == b.train.size());
    for (std::size_t i = 0; i < a.train.size(); ++i) CHECK(clouds_equal(a.train[i], b.train[i]));
    for (std::size_t i = 0; i < a.test.size(); ++i) CHECK(clouds_equal(a.test[i], b.test[i]));
    const Dataset c = make_dataset(tr, te, 3, 1235);
    CHECK(!clouds_equal(a.train[0], c.train[0]));
}

TEST_CASE("saved dataset regenerates exactly from its manifest") {
    namespace fs = std::filesystem;
    const Dataset ds = make_dataset({ShapeKind::box, ShapeKind::cylinder},
                                    {ShapeKind::l_shape}, 2, 7);
    const fs::path dir = testutil::scratch_dir() / "dataset";
    fs::remove_all(dir);
    save_dataset(ds, dir.string());

    CHECK(fs::exists(dir / "train" / "000.pcd"));
    CHECK(fs::exists(dir / "train" / "001.pcd"));
    CHECK(fs::exists(dir / "test" / "001.pcd"));

    const auto [train_specs, test_specs] = load_manifest((dir / "manifest.json").string());
    REQUIRE(train_specs.size() == 2);
    REQUIRE(test_specs.size() == 2);
    for (std::size_t i = 0; i < train_specs.size(); ++i) {
        const LabeledCloud regen = make_scene(train_specs[i]);
        CHECK(clouds_equal(regen, ds.train[i]));
        // and the PCD on disk round-trips to the same cloud
        char name[16];
        std::snprintf(name, sizeof name, "%03zu.pcd", i);
        const LabeledCloud from_disk = load_pcd((dir / "train" / name).string());
        CHECK(from_disk.points == ds.train[i].points);
        CHECK(from_disk.labels == ds.train[i].labels);
    }
    for (std::size_t i = 0; i < test_specs.size(); ++i)
        CHECK(clouds_equal(make_scene(test_specs[i]), ds.test[i]));

    CHECK_THROWS_AS(load_manifest((dir / "missing.json").string()), data_error);

    // the one-call loader reassembles the whole directory
    const Dataset back = load_dataset(dir.string());
    REQUIRE(back.train.size() == 2);
    REQUIRE(back.test.size() == 2);
    for (std::size_t i = 0; i < back.train.size(); ++i) {
        CHECK(back.train[i].points == ds.train[i].points);
        CHECK(back.train[i].labels == ds.train[i].labels);
        CHECK(clouds_equal(make_scene(back.train_specs[i]), ds.train[i]));
    }
    CHECK(back.test[1].points == ds.test[1].points);
    CHECK_THROWS_AS(load_dataset((testutil::scratch_dir() / "no_dataset").string()), data_error);
}
