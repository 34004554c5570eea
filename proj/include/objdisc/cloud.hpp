#ifndef OBJDISC_CLOUD_HPP
#define OBJDISC_CLOUD_HPP

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "objdisc/geometry.hpp"

namespace objdisc {

// A point cloud with optional per-point colors and optional per-point object
// labels. Label 0 is background/clutter, object ids are >= 1. Colors and
// labels, when present, are parallel to points.
struct LabeledCloud {
    std::vector<Vec3> points;
    std::vector<Rgb> colors;   // empty or points.size()
    std::vector<int> labels;   // empty or points.size()

    std::size_t size() const { return points.size(); }
    bool empty() const { return points.empty(); }
    bool has_colors() const { return !colors.empty(); }
    bool has_labels() const { return !labels.empty(); }
};

struct VoxelKey {
    std::int64_t x = 0, y = 0, z = 0;
    auto operator<=>(const VoxelKey&) const = default;
};

// Spatial hash of a cloud: every point index appears in exactly one cell,
// keyed by componentwise floor(p / resolution).
struct VoxelGrid {
    double resolution = 0.0;
    std::map<VoxelKey, std::vector<int>> cells;
};

VoxelKey voxel_key_of(const Vec3& p, double resolution);
VoxelGrid voxelize(const LabeledCloud& cloud, double resolution);

// ASCII PCD with fields x y z, optional rgb (packed or separate r g b
// columns) and optional integer label column. Parse failures name the
// offending line.
LabeledCloud load_pcd(const std::string& path);
void save_pcd(const LabeledCloud& cloud, const std::string& path);

// Sidecar label file: one integer per line, line i labels point i.
std::vector<int> load_label_sidecar(const std::string& path, std::size_t expected_count);

}  // namespace objdisc

#endif
