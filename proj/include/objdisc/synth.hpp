#ifndef OBJDISC_SYNTH_HPP
#define OBJDISC_SYNTH_HPP

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "objdisc/cloud.hpp"
#include "objdisc/geometry.hpp"

namespace objdisc {

enum class ShapeKind { box, cylinder, sphere, l_shape, t_shape };

std::string shape_kind_name(ShapeKind kind);
ShapeKind shape_kind_from_name(const std::string& name);

// One object to drop into a scene. Sizes are full extents in meters.
// Cylinders stand on a cap: size.x == size.y is the diameter and size.z the
// height. Spheres use size.x == size.y == size.z as the diameter. The two
// composite shapes are right prisms over an L/T profile in the x-z plane,
// extruded along y. Every shape rests on the ground plane (z = 0);
// translation.z must stay 0.
struct ShapeSpec {
    ShapeKind kind = ShapeKind::box;
    Vec3 size{0.12, 0.12, 0.12};
    double density = 12000.0;  // surface points per square meter
    bool auto_place = true;    // when set, translation/z_rotation are drawn
    Vec3 translation{0.0, 0.0, 0.0};
    double z_rotation = 0.0;  // radians about the vertical axis
};

struct SceneSpec {
    double plane_half_extent = 0.4;  // plane covers [-e, e]^2 at z = 0
    double plane_density = 4000.0;   // points per square meter; 0 = no plane
    std::vector<ShapeSpec> shapes;
    double noise_sigma = 0.003;     // isotropic Gaussian, clamped at 4 sigma
    double min_separation = 0.15;   // clearance between footprint discs
    std::uint64_t rng_seed = 0;
};

// Exact surface area of the shape, the oracle behind point counts: each
// shape contributes round(area * density) samples.
double shape_surface_area(const ShapeSpec& shape);

// Radius of the vertical-axis-aligned disc bounding the shape's footprint;
// separation between two shapes is measured between these discs.
double footprint_radius(const ShapeSpec& shape);

// Samples the ground plane (label 0) and each shape's surface (label =
// 1-based position in spec.shapes), then perturbs every point with
// isotropic Gaussian noise whose displacement norm is clamped to
// 4 * noise_sigma, so every point stays within that bound of its true
// surface position. Shapes marked auto_place draw their pose by rejection
// sampling (at most 100 attempts each) against the separation constraint
// and the plane boundary; explicitly posed shapes are validated instead.
// Deterministic given spec.rng_seed.
LabeledCloud make_scene(const SceneSpec& spec);

// Knobs for dataset-level scene synthesis; scene/shape fields mirror
// SceneSpec/ShapeSpec defaults.
struct DatasetOptions {
    int min_objects = 2;
    int max_objects = 3;
    double min_size = 0.08;  // per-axis full extent range for drawn shapes
    double max_size = 0.14;
    double shape_density = 12000.0;
    double plane_density = 4000.0;
    double plane_half_extent = 0.4;
    double noise_sigma = 0.003;
    double min_separation = 0.15;
};

struct Dataset {
    std::vector<SceneSpec> train_specs;
    std::vector<SceneSpec> test_specs;
    std::vector<LabeledCloud> train;
    std::vector<LabeledCloud> test;
};

// Draws `scenes_per_split` training scenes using only train_kinds and the
// same number of held-out scenes using only test_kinds; the kind sets must
// be disjoint and non-empty (that novelty contract is the point of the
// split). Scene seeds derive from rng_seed, so the whole dataset is
// reproducible from one number.
Dataset make_dataset(const std::set<ShapeKind>& train_kinds, const std::set<ShapeKind>& test_kinds,
                     int scenes_per_split, std::uint64_t rng_seed,
                     const DatasetOptions& options = {});

// Writes train/NNN.pcd and test/NNN.pcd plus manifest.json describing every
// scene spec, sufficient to regenerate the dataset exactly.
void save_dataset(const Dataset& dataset, const std::string& out_dir);

// Reads manifest.json back into scene specs (first = train, second = test).
std::pair<std::vector<SceneSpec>, std::vector<SceneSpec>> load_manifest(const std::string& path);

// Reloads a directory written by save_dataset: the manifest plus every
// scene cloud of both splits.
Dataset load_dataset(const std::string& dir);

}  // namespace objdisc

#endif
