#ifndef OBJDISC_PAIRS_HPP
#define OBJDISC_PAIRS_HPP

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "objdisc/cloud.hpp"
#include "objdisc/supervoxel.hpp"

namespace objdisc {

struct AssignmentConfig {
    double beta = 0.8;  // overlap threshold in (0,1]
};

struct SupervoxelRef {
    int scale = 0;  // index into the multi-scale segmentation list
    int id = 0;
    auto operator<=>(const SupervoxelRef&) const = default;
};

enum class PairProvenance { positive, cross_object_center, boundary_adjacent, background };

const char* provenance_name(PairProvenance p);

struct SupervoxelPair {
    SupervoxelRef a, b;
    int y = 0;  // +1 or -1
    PairProvenance provenance = PairProvenance::positive;
};

struct PairSet {
    std::vector<SupervoxelPair> positives;
    std::vector<SupervoxelPair> negatives;

    std::size_t size() const { return positives.size() + negatives.size(); }
};

struct PairCaps {
    int positives = 50000;
    int cross_object = 50000;
    int boundary = 50000;
    int background = 50000;
};

// Soft assignment: the object holding at least beta of the supervoxel's
// points, ties to the smaller object id; nullopt when no object reaches beta.
std::optional<int> assign_to_object(const Supervoxel& sv, const LabeledCloud& cloud, double beta);

// True when at least beta of the supervoxel's points carry the background
// label 0.
bool is_background(const Supervoxel& sv, const LabeledCloud& cloud, double beta);

// Positives: same-scale pairs assigned to the same object. Negatives:
// cross-object pairs of object-central supervoxels, boundary-adjacent pairs
// with differing assignment, and background pairs (the only category allowed
// to mix scales). Every category is deduplicated, then subsampled to its cap
// with the seeded rng.
PairSet generate_pairs(const std::vector<SegmentationResult>& scales, const LabeledCloud& cloud,
                       const AssignmentConfig& cfg, const PairCaps& caps, std::uint64_t rng_seed);

// Dump format: one line per pair, `scale_a id_a scale_b id_b y provenance`.
void save_pairs(const PairSet& pairs, const std::string& path);

}  // namespace objdisc

#endif
