#ifndef OBJDISC_CONFIG_HPP
#define OBJDISC_CONFIG_HPP

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "objdisc/metrics.hpp"
#include "objdisc/pairs.hpp"
#include "objdisc/supervoxel.hpp"
#include "objdisc/synth.hpp"
#include "objdisc/training.hpp"

namespace objdisc {

// Every tunable of the pipeline in one flat struct, grouped the way the
// config file is sectioned. Defaults are the working end-to-end setup;
// serialize_config writes them with their section comments, and
// parse_config(serialize_config(c)) == c holds exactly.
struct PipelineConfig {
    // [segmentation]
    std::vector<double> seed_resolutions = {0.05, 0.10, 0.15, 0.20};
    double voxel_resolution = 0.0;  // <= 0 derives max(seed/8, 0.005) per scale
    double color_weight = 0.2;
    double spatial_weight = 0.4;
    double normal_weight = 1.0;
    int normal_k = 10;

    // [assignment]
    double beta = 0.8;  // supervoxel-to-object overlap threshold
    int max_pairs_per_category = 50000;

    // [network]
    int grid_side = 32;
    int grid_padding = 2;
    int conv1_channels = 32;
    int conv1_kernel = 5;
    int conv1_stride = 2;
    int conv2_channels = 32;
    int conv2_kernel = 3;
    int conv2_stride = 1;
    int pool = 2;
    int fc1 = 128;
    int embed_dim = 64;

    // [loss]
    double loss_b = 0.5;
    double loss_m = 1.0;

    // [optimizer]
    double learning_rate = 0.01;
    double momentum = 0.9;
    int batch_size = 32;
    int epochs = 30;

    // [train]
    std::string mode = "vdml";  // vdml | dvc | dvc_then_vdml
    int dvc_epochs = 10;
    int dvc_fca = 64;
    int dvc_fcb = 64;

    // [clustering]
    double eps = 0.0;  // <= 0 selects eps from the 1-NN distance quantile
    double eps_quantile = 0.9;
    int min_pts = 2;

    // [metrics]
    double overlap_tau = 0.8;
    std::string overlap_convention = "iou";  // iou | recall

    // [synth]
    int scenes_per_split = 10;
    std::vector<std::string> train_kinds = {"box", "cylinder"};
    std::vector<std::string> test_kinds = {"sphere", "l_shape", "t_shape"};
    int min_objects = 2;
    int max_objects = 3;
    double min_size = 0.08;
    double max_size = 0.14;
    double shape_density = 12000.0;
    double plane_density = 4000.0;
    double plane_half_extent = 0.4;
    double noise_sigma = 0.003;
    double min_separation = 0.15;

    // [pipeline]
    std::uint64_t rng_seed = 7;

    bool operator==(const PipelineConfig&) const = default;
};

// Checks every field against the owning module's preconditions; throws
// config_error naming the offending key.
void validate_config(const PipelineConfig& config);

// Key-value text with [section] headers, '#' comments, comma-separated
// lists. Unknown sections or keys, malformed values, and validation
// failures all throw config_error naming the line or key. Later
// assignments to the same key win.
PipelineConfig parse_config(const std::string& text);
PipelineConfig load_config(const std::string& path);

std::string serialize_config(const PipelineConfig& config);
void save_config(const PipelineConfig& config, const std::string& path);

// Adapters from the flat config to each module's own parameter struct.
VccsParams vccs_params_of(const PipelineConfig& config);
NetConfig net_config_of(const PipelineConfig& config);
LossConfig loss_config_of(const PipelineConfig& config);
OptimizerConfig optimizer_of(const PipelineConfig& config);
AssignmentConfig assignment_of(const PipelineConfig& config);
PairCaps pair_caps_of(const PipelineConfig& config);
DvcConfig dvc_config_of(const PipelineConfig& config, int classes);
DatasetOptions dataset_options_of(const PipelineConfig& config);
OverlapConvention overlap_convention_of(const PipelineConfig& config);
std::set<ShapeKind> kinds_of(const std::vector<std::string>& names);

}  // namespace objdisc

#endif
