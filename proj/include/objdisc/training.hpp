#ifndef OBJDISC_TRAINING_HPP
#define OBJDISC_TRAINING_HPP

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "objdisc/net3d.hpp"
#include "objdisc/pairs.hpp"
#include "objdisc/voxelgrid.hpp"

namespace objdisc {

struct LossConfig {
    double b = 0.0;  // bias
    double m = 1.0;  // margin, must be positive
};

struct OptimizerConfig {
    double learning_rate = 0.01;
    double momentum = 0.9;
    int batch_size = 32;
};

struct PairLossResult {
    double loss = 0.0;
    double d2 = 0.0;  // squared embedding distance
    std::vector<double> d_ei, d_ej;
};

// loss = max(0, b - y*(m - d2)) with d2 = |e_i - e_j|^2. The gradient is the
// exact subgradient: zero in the flat region and at the kink.
PairLossResult pair_loss(const std::vector<double>& e_i, const std::vector<double>& e_j, int y,
                         const LossConfig& cfg);

struct TrainReport {
    std::vector<double> mean_loss;     // one entry per completed epoch
    std::vector<double> mean_pos_d2;   // 0 when the epoch saw no such pair
    std::vector<double> mean_neg_d2;
    std::string stop_reason;

    int epochs_run() const { return static_cast<int>(mean_loss.size()); }
};

// CSV with header epoch,mean_loss,mean_pos_d2,mean_neg_d2.
void save_report(const TrainReport& report, const std::string& path);

using GridTable = std::map<SupervoxelRef, OccupancyGrid>;

// Renders one occupancy grid per supervoxel across all scales.
GridTable build_grid_table(const std::vector<SegmentationResult>& scales,
                           const LabeledCloud& cloud, int side, int padding);

// Siamese metric training: both pair members pass through the same
// parameters, gradients of the two streams sum, one momentum-SGD step per
// batch on the batch-mean gradient. Pairs are reshuffled every epoch with
// the seeded rng. Stops early when the mean epoch loss improves by less
// than 1e-5 over 5 epochs. A non-finite loss aborts with a model_error
// naming the epoch, batch, and pair.
std::pair<NetworkParams, TrainReport> train_vdml(const NetworkParams& params, const PairSet& pairs,
                                                 const GridTable& grids, const LossConfig& loss_cfg,
                                                 const OptimizerConfig& opt, int epochs,
                                                 std::uint64_t rng_seed);

// ---- classification baseline -------------------------------------------

struct DvcConfig {
    NetConfig base;
    int fca = 64;     // first appended fully connected layer
    int fcb = 64;     // second appended layer; its activations are the features
    int classes = 2;  // softmax width

    void validate() const;
    bool operator==(const DvcConfig&) const = default;
};

// The backbone runs through its fc1 activation; the appended head is
// fc1_act -> fca -> leakyReLU -> fcb -> leakyReLU -> classifier logits.
// The classifier starts at zero so initial cross-entropy is ln(classes).
struct DvcParams {
    DvcConfig config;
    NetworkParams backbone;
    Tensor fca_w, fca_b, fcb_w, fcb_b, cls_w, cls_b;
};

DvcParams init_dvc_params(const DvcConfig& config, std::uint64_t seed);

struct DvcTrace {
    ForwardTrace backbone;
    Tensor fca_pre, fca_act, fcb_pre, fcb_act;
};

// Returns the class logits; pass a trace to keep activations for training.
std::vector<double> dvc_forward(const DvcParams& params, const OccupancyGrid& grid,
                                DvcTrace* trace = nullptr);

// The learned supervoxel features: the final fully connected activations.
std::vector<double> dvc_features(const DvcParams& params, const OccupancyGrid& grid);

struct ClassifiedGrid {
    OccupancyGrid grid;
    int class_index = 0;  // in [0, classes)
};

struct DvcReport {
    std::vector<double> mean_ce;   // per-epoch mean cross-entropy
    std::vector<double> accuracy;  // per-epoch training accuracy
    std::string stop_reason;
};

// Softmax cross-entropy training of the backbone plus head. Requires at
// least two distinct classes among the examples.
std::pair<DvcParams, DvcReport> train_dvc(const DvcParams& params,
                                          const std::vector<ClassifiedGrid>& examples,
                                          const OptimizerConfig& opt, int epochs,
                                          std::uint64_t rng_seed);

// CSV with header epoch,mean_ce,accuracy.
void save_dvc_report(const DvcReport& report, const std::string& path);

// Binary checkpoint of backbone plus head, same float32 layout discipline
// as the backbone-only checkpoint.
void save_dvc_checkpoint(const DvcParams& params, const std::string& path);
DvcParams load_dvc_checkpoint(const std::string& path);

}  // namespace objdisc

#endif
