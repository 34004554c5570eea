#ifndef OBJDISC_DISCOVER_HPP
#define OBJDISC_DISCOVER_HPP

#include <string>
#include <vector>

#include "objdisc/net3d.hpp"
#include "objdisc/supervoxel.hpp"
#include "objdisc/training.hpp"

namespace objdisc {

struct EmbeddingRow {
    int scale = 0;  // index into the segmentation list
    int sv_id = 0;
    std::vector<double> embedding;
};

struct EmbeddingTable {
    std::vector<EmbeddingRow> rows;

    std::size_t size() const { return rows.size(); }
};

// Renders every supervoxel at every scale and runs it through the network;
// rows come back scale-major, supervoxel id ascending.
EmbeddingTable embed_all(const NetworkParams& params, const LabeledCloud& cloud,
                         const std::vector<SegmentationResult>& scales, int padding = 2);

// Same traversal, but the row vectors are the classifier's learned features
// (final fully connected activations) instead of the metric embedding.
EmbeddingTable embed_all_dvc(const DvcParams& params, const LabeledCloud& cloud,
                             const std::vector<SegmentationResult>& scales, int padding = 2);

struct ClusterLabeling {
    static constexpr int kNoise = -1;
    std::vector<int> cluster_of_row;  // cluster id or kNoise, aligned with the table
    int cluster_count = 0;
};

// Density clustering under Euclidean embedding distance. A core row has at
// least min_pts rows (itself included) within eps (closed ball). With the
// default min_pts = 2 every non-isolated row is core, the result is the
// connected components of the eps-graph (independent of row order), and
// every cluster has at least min_pts rows. For larger min_pts, border rows
// join the first cluster that reaches them in ascending row order, which can
// classically leave a later cluster smaller than min_pts when its borders
// were claimed earlier.
ClusterLabeling dbscan(const EmbeddingTable& table, double eps, int min_pts = 2);

struct EpsChoice {
    double eps = 0.0;
    bool degenerate = false;  // eps came out 0 (duplicate-heavy table); override needed
};

// The given quantile (nearest-rank) of the per-row 1-nearest-neighbor
// distance distribution. quantile 0 picks the minimum, 1 the maximum.
EpsChoice choose_eps(const EmbeddingTable& table, double quantile = 0.9);

struct DiscoveryResult {
    std::vector<int> object_of_point;   // 0 = background / undiscovered
    std::vector<int> cluster_of_point;  // winning raw cluster id, kNoise if none
    int object_count = 0;
    std::vector<std::size_t> object_sizes;  // object_sizes[i] = points of object i+1
};

// Cross-scale merge: each point collects the cluster of its supervoxel at
// every scale and takes the majority among non-noise clusters; ties go to
// the cluster seen at the finest seed resolution. Points covered only by
// noise get id 0. Final ids are contiguous, ordered by descending size
// (ascending raw id on ties).
DiscoveryResult clusters_to_objects(const EmbeddingTable& table, const ClusterLabeling& labeling,
                                    const std::vector<SegmentationResult>& scales,
                                    const LabeledCloud& cloud);

// One `point_index object_id` line per point.
void save_discovery(const DiscoveryResult& result, const std::string& path);

// Rebuilds a result from a save_discovery dump (cluster_of_point is not
// persisted and comes back empty); malformed lines raise data_error.
DiscoveryResult load_discovery(const std::string& path);

// JSON summary: object count and per-object sizes.
std::string discovery_summary(const DiscoveryResult& result);

}  // namespace objdisc

#endif
