#ifndef OBJDISC_PIPELINE_HPP
#define OBJDISC_PIPELINE_HPP

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "objdisc/cloud.hpp"
#include "objdisc/config.hpp"
#include "objdisc/discover.hpp"
#include "objdisc/metrics.hpp"
#include "objdisc/supervoxel.hpp"
#include "objdisc/synth.hpp"
#include "objdisc/training.hpp"

namespace objdisc {

// Everything derived from one scene that both training and discovery
// consume: the multi-scale segmentation and one occupancy grid per
// supervoxel. Computing these dominates runtime, so callers that revisit a
// scene (folded sweeps, repeated discovery) prepare once and reuse.
struct SceneArtifacts {
    std::vector<SegmentationResult> scales;
    GridTable grids;
};

SceneArtifacts prepare_scene(const LabeledCloud& cloud, const PipelineConfig& config);

// Training material pooled across scenes. Supervoxel ids are renumbered
// into disjoint per-scene ranges (per scale), so pairs, grids, and
// classifier examples from every scene share one id space.
struct TrainingPool {
    PairSet pairs;                         // metric-learning pairs
    GridTable grids;                       // grid of every pooled supervoxel
    std::vector<ClassifiedGrid> examples;  // classifier examples; empty unless specs were given
    int classes = 0;                       // 0 = examples not built
};

// Builds the pool from prepared scenes. Scene i draws its pairs with seed
// rng_seed ^ (0x9E3779B97F4A7C15 * (i + 1)), i being the scene's index in
// the full list, so a scene contributes identical pairs regardless of the
// chosen subset. When `specs` is given (one per scene, aligned), classifier
// examples are also built: class 0 holds background supervoxels, subsampled
// to max_pairs_per_category with the pinned rng, and classes 1..K are the
// distinct shape kinds over all specs in enum order; supervoxels that reach
// neither an object nor the background at overlap beta are skipped. `subset`
// selects scene indices to pool (default: all). Errors from one scene are
// rethrown with the scene index prefixed.
TrainingPool pool_scenes(const std::vector<LabeledCloud>& scenes,
                         const std::vector<SceneArtifacts>& artifacts,
                         const PipelineConfig& config,
                         const std::vector<SceneSpec>* specs = nullptr,
                         const std::vector<std::size_t>* subset = nullptr);

// The trained feature extractor for discovery. Exactly one member is
// engaged: a metric backbone embeds supervoxels directly; a classifier
// contributes its penultimate fully connected activations.
struct TrainedModel {
    std::optional<NetworkParams> backbone;
    std::optional<DvcParams> classifier;
};

struct TrainOutcome {
    TrainedModel model;
    TrainReport metric_report;    // filled by the metric-learning modes
    DvcReport classifier_report;  // filled by the classifier modes
};

// Dispatches on config.mode: "vdml" trains the metric backbone from random
// init; "dvc" trains the classifier and discovers on its features;
// "dvc_then_vdml" pretrains the classifier, then metric-trains starting
// from its backbone. The classifier modes need pooled examples (at least
// two classes), else config_error.
TrainOutcome train_pool(const TrainingPool& pool, const PipelineConfig& config);

// Persistence follows the engaged extractor: a backbone saves the embedding
// checkpoint, a classifier the classifier checkpoint (the backbone wins if
// both are engaged — it is the final discovery extractor). load_model
// recognizes either format by its header.
void save_model(const TrainedModel& model, const std::string& path);
TrainedModel load_model(const std::string& path);

// Embeds every supervoxel with the model, clusters the rows (eps from the
// config when positive, otherwise the 1-nearest-neighbor distance quantile;
// a degenerate duplicate-only table falls back to a tiny positive eps), and
// merges clusters across scales into per-point object ids. The model's grid
// side must match network.grid_side, else model_error.
DiscoveryResult run_discovery(const SceneArtifacts& artifacts, const LabeledCloud& cloud,
                              const TrainedModel& model, const PipelineConfig& config);

// Convenience overload that prepares the scene first.
DiscoveryResult run_discovery(const LabeledCloud& cloud, const TrainedModel& model,
                              const PipelineConfig& config);

// Scores a discovery result against the scene's labels over every
// ground-truth object (labels >= 1), with threshold and overlap convention
// from the config. Unlabeled clouds raise data_error.
MetricReport evaluate_scene(const DiscoveryResult& pred, const LabeledCloud& gt,
                            const PipelineConfig& config);

// Number of supervoxels across all scales that some object claims at
// overlap threshold beta — the quantity tracked when sweeping beta.
std::size_t count_assigned(const std::vector<SegmentationResult>& scales,
                           const LabeledCloud& cloud, double beta);

struct BetaSweepRow {
    double beta = 0.0;
    double mean_accuracy = 0.0;          // mean of per-fold validation accuracies
    std::size_t assigned_supervoxels = 0;  // summed over all scenes
};

// K-fold cross-validated sweep over assignment thresholds: for each beta
// and fold f, trains on the scenes with index % k_folds != f and averages
// discovery accuracy over the held-out scenes. Segmentations and grids come
// from `artifacts`, computed once by the caller; only pair generation and
// training repeat per (beta, fold). Betas are processed in the order given.
std::vector<BetaSweepRow> sweep_beta(const std::vector<LabeledCloud>& scenes,
                                     const std::vector<SceneArtifacts>& artifacts,
                                     const PipelineConfig& config,
                                     const std::vector<double>& betas, int k_folds);

// CSV of `beta,mean_accuracy,assigned_supervoxels` rows.
void save_beta_sweep(const std::vector<BetaSweepRow>& rows, const std::string& path);

}  // namespace objdisc

#endif
