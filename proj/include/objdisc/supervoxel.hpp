#ifndef OBJDISC_SUPERVOXEL_HPP
#define OBJDISC_SUPERVOXEL_HPP

#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "objdisc/cloud.hpp"

namespace objdisc {

// One supervoxel: a 26-connected group of occupied voxels at one seed
// resolution, carrying the indices of its member points.
struct Supervoxel {
    int id = 0;
    double seed_resolution = 0.0;
    std::vector<int> point_indices;  // sorted ascending
    Vec3 centroid;
    Vec3 mean_normal{0.0, 0.0, 1.0};
    std::optional<Rgb> mean_color;
};

struct SupervoxelAdjacency {
    std::set<std::pair<int, int>> edges;  // unordered pairs stored as (lo, hi)

    bool adjacent(int a, int b) const {
        if (a > b) std::swap(a, b);
        return edges.count({a, b}) > 0;
    }
};

struct NormalEstimate {
    std::vector<Vec3> normals;          // unit vectors
    std::vector<std::uint8_t> degenerate;  // 1 where the neighborhood had rank < 2
};

// PCA normals from the k nearest neighbors of each point, oriented toward the
// origin (sensor-at-origin convention).
NormalEstimate estimate_normals(const LabeledCloud& cloud, int k);

struct VccsWeights {
    double color = 0.2;
    double spatial = 0.4;
    double normal = 1.0;
};

struct VccsParams {
    double voxel_resolution = 0.0;  // <= 0 selects max(seed/8, 0.005)
    VccsWeights weights;
    int normal_k = 10;
    int max_rounds = 30;
};

struct SegmentationResult {
    double seed_resolution = 0.0;
    std::vector<Supervoxel> supervoxels;
    SupervoxelAdjacency adjacency;
    std::vector<int> supervoxel_of_point;  // per point, index into supervoxels
};

// VCCS over-segmentation: grid seeding snapped to occupied voxels, isolated
// seed filtering, then competitive breadth-first expansion over the
// 26-adjacency voxel graph by weighted feature distance, iterated until the
// assignment stabilizes. Deterministic for identical inputs.
SegmentationResult vccs_segment(const LabeledCloud& cloud, double seed_resolution,
                                const VccsParams& params = {},
                                const NormalEstimate* normals = nullptr);

// Independent vccs_segment per resolution; normals are estimated once and
// shared across scales.
std::vector<SegmentationResult> multi_scale_segment(const LabeledCloud& cloud,
                                                    const std::vector<double>& seed_resolutions,
                                                    const VccsParams& params = {});

inline std::vector<double> default_seed_resolutions() { return {0.05, 0.10, 0.15, 0.20}; }

// Dump format: one line per point, "point_index scale_index supervoxel_id".
void save_segmentation(const std::vector<SegmentationResult>& scales, const std::string& path);

}  // namespace objdisc

#endif
