#include "objdisc/config.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>

#include "objdisc/errors.hpp"

namespace objdisc {

namespace {

std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

double to_double(const std::string& v) {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument("trailing characters after number");
    return d;
}

int to_int(const std::string& v) {
    std::size_t used = 0;
    const int i = std::stoi(v, &used);
    if (used != v.size()) throw std::invalid_argument("trailing characters after number");
    return i;
}

std::uint64_t to_u64(const std::string& v) {
    std::size_t used = 0;
    const unsigned long long u = std::stoull(v, &used);
    if (used != v.size() || v.find('-') != std::string::npos)
        throw std::invalid_argument("not an unsigned integer");
    return u;
}

std::vector<std::string> split_list(const std::string& v) {
    std::vector<std::string> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (item.empty()) throw std::invalid_argument("empty list element");
        out.push_back(item);
    }
    if (out.empty()) throw std::invalid_argument("empty list");
    return out;
}

std::vector<double> to_double_list(const std::string& v) {
    std::vector<double> out;
    for (const std::string& item : split_list(v)) out.push_back(to_double(item));
    return out;
}

using Setter = std::function<void(PipelineConfig&, const std::string&)>;

const std::map<std::string, Setter>& setters() {
    static const std::map<std::string, Setter> table = {
        {"segmentation.seed_resolutions",
         [](PipelineConfig& c, const std::string& v) { c.seed_resolutions = to_double_list(v); }},
        {"segmentation.voxel_resolution",
         [](PipelineConfig& c, const std::string& v) { c.voxel_resolution = to_double(v); }},
        {"segmentation.color_weight",
         [](PipelineConfig& c, const std::string& v) { c.color_weight = to_double(v); }},
        {"segmentation.spatial_weight",
         [](PipelineConfig& c, const std::string& v) { c.spatial_weight = to_double(v); }},
        {"segmentation.normal_weight",
         [](PipelineConfig& c, const std::string& v) { c.normal_weight = to_double(v); }},
        {"segmentation.normal_k",
         [](PipelineConfig& c, const std::string& v) { c.normal_k = to_int(v); }},
        {"assignment.beta", [](PipelineConfig& c, const std::string& v) { c.beta = to_double(v); }},
        {"assignment.max_pairs_per_category",
         [](PipelineConfig& c, const std::string& v) { c.max_pairs_per_category = to_int(v); }},
        {"network.grid_side",
         [](PipelineConfig& c, const std::string& v) { c.grid_side = to_int(v); }},
        {"network.grid_padding",
         [](PipelineConfig& c, const std::string& v) { c.grid_padding = to_int(v); }},
        {"network.conv1_channels",
         [](PipelineConfig& c, const std::string& v) { c.conv1_channels = to_int(v); }},
        {"network.conv1_kernel",
         [](PipelineConfig& c, const std::string& v) { c.conv1_kernel = to_int(v); }},
        {"network.conv1_stride",
         [](PipelineConfig& c, const std::string& v) { c.conv1_stride = to_int(v); }},
        {"network.conv2_channels",
         [](PipelineConfig& c, const std::string& v) { c.conv2_channels = to_int(v); }},
        {"network.conv2_kernel",
         [](PipelineConfig& c, const std::string& v) { c.conv2_kernel = to_int(v); }},
        {"network.conv2_stride",
         [](PipelineConfig& c, const std::string& v) { c.conv2_stride = to_int(v); }},
        {"network.pool", [](PipelineConfig& c, const std::string& v) { c.pool = to_int(v); }},
        {"network.fc1", [](PipelineConfig& c, const std::string& v) { c.fc1 = to_int(v); }},
        {"network.embed_dim",
         [](PipelineConfig& c, const std::string& v) { c.embed_dim = to_int(v); }},
        {"loss.b", [](PipelineConfig& c, const std::string& v) { c.loss_b = to_double(v); }},
        {"loss.m", [](PipelineConfig& c, const std::string& v) { c.loss_m = to_double(v); }},
        {"optimizer.learning_rate",
         [](PipelineConfig& c, const std::string& v) { c.learning_rate = to_double(v); }},
        {"optimizer.momentum",
         [](PipelineConfig& c, const std::string& v) { c.momentum = to_double(v); }},
        {"optimizer.batch_size",
         [](PipelineConfig& c, const std::string& v) { c.batch_size = to_int(v); }},
        {"optimizer.epochs",
         [](PipelineConfig& c, const std::string& v) { c.epochs = to_int(v); }},
        {"train.mode", [](PipelineConfig& c, const std::string& v) { c.mode = v; }},
        {"train.dvc_epochs",
         [](PipelineConfig& c, const std::string& v) { c.dvc_epochs = to_int(v); }},
        {"train.dvc_fca", [](PipelineConfig& c, const std::string& v) { c.dvc_fca = to_int(v); }},
        {"train.dvc_fcb", [](PipelineConfig& c, const std::string& v) { c.dvc_fcb = to_int(v); }},
        {"clustering.eps", [](PipelineConfig& c, const std::string& v) { c.eps = to_double(v); }},
        {"clustering.eps_quantile",
         [](PipelineConfig& c, const std::string& v) { c.eps_quantile = to_double(v); }},
        {"clustering.min_pts",
         [](PipelineConfig& c, const std::string& v) { c.min_pts = to_int(v); }},
        {"metrics.overlap_tau",
         [](PipelineConfig& c, const std::string& v) { c.overlap_tau = to_double(v); }},
        {"metrics.overlap_convention",
         [](PipelineConfig& c, const std::string& v) { c.overlap_convention = v; }},
        {"synth.scenes_per_split",
         [](PipelineConfig& c, const std::string& v) { c.scenes_per_split = to_int(v); }},
        {"synth.train_kinds",
         [](PipelineConfig& c, const std::string& v) { c.train_kinds = split_list(v); }},
        {"synth.test_kinds",
         [](PipelineConfig& c, const std::string& v) { c.test_kinds = split_list(v); }},
        {"synth.min_objects",
         [](PipelineConfig& c, const std::string& v) { c.min_objects = to_int(v); }},
        {"synth.max_objects",
         [](PipelineConfig& c, const std::string& v) { c.max_objects = to_int(v); }},
        {"synth.min_size",
         [](PipelineConfig& c, const std::string& v) { c.min_size = to_double(v); }},
        {"synth.max_size",
         [](PipelineConfig& c, const std::string& v) { c.max_size = to_double(v); }},
        {"synth.shape_density",
         [](PipelineConfig& c, const std::string& v) { c.shape_density = to_double(v); }},
        {"synth.plane_density",
         [](PipelineConfig& c, const std::string& v) { c.plane_density = to_double(v); }},
        {"synth.plane_half_extent",
         [](PipelineConfig& c, const std::string& v) { c.plane_half_extent = to_double(v); }},
        {"synth.noise_sigma",
         [](PipelineConfig& c, const std::string& v) { c.noise_sigma = to_double(v); }},
        {"synth.min_separation",
         [](PipelineConfig& c, const std::string& v) { c.min_separation = to_double(v); }},
        {"pipeline.rng_seed",
         [](PipelineConfig& c, const std::string& v) { c.rng_seed = to_u64(v); }},
    };
    return table;
}

void fail(const std::string& key, const std::string& why) {
    throw config_error("config key '" + key + "': " + why);
}

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string fmt(const std::vector<double>& vs) {
    std::string out;
    for (std::size_t i = 0; i < vs.size(); ++i) {
        if (i) out += ", ";
        out += fmt(vs[i]);
    }
    return out;
}

std::string fmt(const std::vector<std::string>& vs) {
    std::string out;
    for (std::size_t i = 0; i < vs.size(); ++i) {
        if (i) out += ", ";
        out += vs[i];
    }
    return out;
}

}  // namespace

void validate_config(const PipelineConfig& c) {
    if (c.seed_resolutions.empty()) fail("segmentation.seed_resolutions", "must not be empty");
    for (double r : c.seed_resolutions)
        if (!(r > 0.0)) fail("segmentation.seed_resolutions", "resolutions must be positive");
    if (c.normal_k < 3) fail("segmentation.normal_k", "needs at least 3 neighbors for a plane fit");
    for (const auto& [key, w] : {std::pair<const char*, double>{"segmentation.color_weight",
                                                                c.color_weight},
                                 {"segmentation.spatial_weight", c.spatial_weight},
                                 {"segmentation.normal_weight", c.normal_weight}})
        if (w < 0.0) fail(key, "weights must be >= 0");

    if (!(c.beta > 0.0) || c.beta > 1.0) fail("assignment.beta", "must lie in (0, 1]");
    if (c.max_pairs_per_category < 0) fail("assignment.max_pairs_per_category", "must be >= 0");

    if (c.grid_padding < 0) fail("network.grid_padding", "must be >= 0");
    if (c.grid_side - 2 * c.grid_padding < 1)
        fail("network.grid_side", "padding leaves no interior cells");
    try {
        net_config_of(c).validate();
    } catch (const config_error& e) {
        fail("network", e.what());
    }

    if (!(c.loss_m > 0.0)) fail("loss.m", "margin must be positive");
    if (c.loss_b < 0.0) fail("loss.b", "must be >= 0");

    if (!(c.learning_rate > 0.0)) fail("optimizer.learning_rate", "must be positive");
    if (c.momentum < 0.0 || c.momentum >= 1.0) fail("optimizer.momentum", "must lie in [0, 1)");
    if (c.batch_size < 1) fail("optimizer.batch_size", "must be >= 1");
    if (c.epochs < 1) fail("optimizer.epochs", "must be >= 1");

    if (c.mode != "vdml" && c.mode != "dvc" && c.mode != "dvc_then_vdml")
        fail("train.mode", "expected vdml, dvc, or dvc_then_vdml; got '" + c.mode + "'");
    if (c.dvc_epochs < 1) fail("train.dvc_epochs", "must be >= 1");
    if (c.dvc_fca < 1 || c.dvc_fcb < 1) fail("train.dvc_fca", "head layers need >= 1 unit");

    if (c.eps < 0.0) fail("clustering.eps", "must be >= 0 (0 selects the quantile rule)");
    if (c.eps_quantile < 0.0 || c.eps_quantile > 1.0)
        fail("clustering.eps_quantile", "must lie in [0, 1]");
    if (c.min_pts < 2) fail("clustering.min_pts", "must be >= 2");

    if (c.overlap_tau < 0.0 || c.overlap_tau >= 1.0)
        fail("metrics.overlap_tau", "must lie in [0, 1)");
    try {
        overlap_convention_from_name(c.overlap_convention);
    } catch (const std::invalid_argument& e) {
        fail("metrics.overlap_convention", e.what());
    }

    if (c.scenes_per_split < 1) fail("synth.scenes_per_split", "must be >= 1");
    std::set<ShapeKind> train_kinds, test_kinds;
    try {
        train_kinds = kinds_of(c.train_kinds);
    } catch (const std::invalid_argument& e) {
        fail("synth.train_kinds", e.what());
    }
    try {
        test_kinds = kinds_of(c.test_kinds);
    } catch (const std::invalid_argument& e) {
        fail("synth.test_kinds", e.what());
    }
    for (ShapeKind k : train_kinds)
        if (test_kinds.count(k))
            fail("synth.test_kinds", "'" + shape_kind_name(k) +
                                         "' also appears in train_kinds; the held-out kinds must "
                                         "be unseen during training");
    if (c.min_objects < 0 || c.max_objects < c.min_objects)
        fail("synth.max_objects", "object count range is empty");
    if (!(c.min_size > 0.0) || c.max_size < c.min_size) fail("synth.max_size", "size range is empty");
    if (!(c.shape_density > 0.0)) fail("synth.shape_density", "must be positive");
    if (c.plane_density < 0.0) fail("synth.plane_density", "must be >= 0");
    if (!(c.plane_half_extent > 0.0)) fail("synth.plane_half_extent", "must be positive");
    if (c.noise_sigma < 0.0) fail("synth.noise_sigma", "must be >= 0");
    if (c.min_separation < 0.0) fail("synth.min_separation", "must be >= 0");
}

PipelineConfig parse_config(const std::string& text) {
    PipelineConfig config;
    std::istringstream in(text);
    std::string line, section;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw config_error("line " + std::to_string(line_no) + ": unterminated section");
            section = trim(line.substr(1, line.size() - 2));
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw config_error("line " + std::to_string(line_no) + ": expected 'key = value'");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (section.empty())
            throw config_error("line " + std::to_string(line_no) + ": key '" + key +
                               "' appears before any [section]");
        const std::string full = section + "." + key;
        const auto it = setters().find(full);
        if (it == setters().end())
            throw config_error("line " + std::to_string(line_no) + ": unknown key '" + full + "'");
        try {
            it->second(config, value);
        } catch (const std::exception& e) {
            throw config_error("line " + std::to_string(line_no) + ": bad value for '" + full +
                               "': " + e.what());
        }
    }
    validate_config(config);
    return config;
}

PipelineConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw config_error("cannot open config: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_config(buf.str());
}

std::string serialize_config(const PipelineConfig& c) {
    std::ostringstream o;
    o << "# Object-discovery pipeline configuration.\n"
      << "# Keys marked '# gap:' are empirical choices of this implementation\n"
      << "# with no externally fixed value.\n"
      << "\n[segmentation]\n"
      << "seed_resolutions = " << fmt(c.seed_resolutions) << "\n"
      << "voxel_resolution = " << fmt(c.voxel_resolution)
      << "  # gap: <= 0 derives max(seed/8, 0.005) per scale\n"
      << "color_weight = " << fmt(c.color_weight) << "\n"
      << "spatial_weight = " << fmt(c.spatial_weight) << "\n"
      << "normal_weight = " << fmt(c.normal_weight) << "\n"
      << "normal_k = " << c.normal_k << "  # gap: PCA neighborhood size\n"
      << "\n[assignment]\n"
      << "beta = " << fmt(c.beta) << "\n"
      << "max_pairs_per_category = " << c.max_pairs_per_category
      << "  # gap: per-provenance sampling cap\n"
      << "\n[network]\n"
      << "grid_side = " << c.grid_side << "\n"
      << "grid_padding = " << c.grid_padding << "  # gap: empty margin cells\n"
      << "conv1_channels = " << c.conv1_channels << "\n"
      << "conv1_kernel = " << c.conv1_kernel << "\n"
      << "conv1_stride = " << c.conv1_stride << "\n"
      << "conv2_channels = " << c.conv2_channels << "\n"
      << "conv2_kernel = " << c.conv2_kernel << "\n"
      << "conv2_stride = " << c.conv2_stride << "\n"
      << "pool = " << c.pool << "\n"
      << "fc1 = " << c.fc1 << "\n"
      << "embed_dim = " << c.embed_dim << "  # gap: embedding width\n"
      << "\n[loss]\n"
      << "b = " << fmt(c.loss_b) << "  # gap: hinge bias\n"
      << "m = " << fmt(c.loss_m) << "  # gap: hinge margin\n"
      << "\n[optimizer]\n"
      << "learning_rate = " << fmt(c.learning_rate) << "  # gap\n"
      << "momentum = " << fmt(c.momentum) << "  # gap\n"
      << "batch_size = " << c.batch_size << "  # gap\n"
      << "epochs = " << c.epochs << "  # gap\n"
      << "\n[train]\n"
      << "mode = " << c.mode << "  # gap: vdml | dvc | dvc_then_vdml\n"
      << "dvc_epochs = " << c.dvc_epochs << "  # gap\n"
      << "dvc_fca = " << c.dvc_fca << "  # gap\n"
      << "dvc_fcb = " << c.dvc_fcb << "  # gap\n"
      << "\n[clustering]\n"
      << "eps = " << fmt(c.eps) << "  # gap: <= 0 selects the quantile rule\n"
      << "eps_quantile = " << fmt(c.eps_quantile) << "  # gap: 1-NN distance quantile\n"
      << "min_pts = " << c.min_pts << "\n"
      << "\n[metrics]\n"
      << "overlap_tau = " << fmt(c.overlap_tau) << "\n"
      << "overlap_convention = " << c.overlap_convention << "  # iou | recall\n"
      << "\n[synth]\n"
      << "scenes_per_split = " << c.scenes_per_split << "  # gap\n"
      << "train_kinds = " << fmt(c.train_kinds) << "\n"
      << "test_kinds = " << fmt(c.test_kinds) << "\n"
      << "min_objects = " << c.min_objects << "  # gap\n"
      << "max_objects = " << c.max_objects << "  # gap\n"
      << "min_size = " << fmt(c.min_size) << "  # gap: meters\n"
      << "max_size = " << fmt(c.max_size) << "  # gap: meters\n"
      << "shape_density = " << fmt(c.shape_density) << "  # gap: points per m^2\n"
      << "plane_density = " << fmt(c.plane_density) << "  # gap: points per m^2\n"
      << "plane_half_extent = " << fmt(c.plane_half_extent) << "  # gap: meters\n"
      << "noise_sigma = " << fmt(c.noise_sigma) << "  # gap: meters\n"
      << "min_separation = " << fmt(c.min_separation) << "  # gap: meters\n"
      << "\n[pipeline]\n"
      << "rng_seed = " << c.rng_seed << "\n";
    return o.str();
}

void save_config(const PipelineConfig& config, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw config_error("cannot open for write: " + path);
    out << serialize_config(config);
    if (!out) throw config_error("write failed: " + path);
}

VccsParams vccs_params_of(const PipelineConfig& c) {
    VccsParams p;
    p.voxel_resolution = c.voxel_resolution;
    p.weights = {c.color_weight, c.spatial_weight, c.normal_weight};
    p.normal_k = c.normal_k;
    return p;
}

NetConfig net_config_of(const PipelineConfig& c) {
    NetConfig n;
    n.side = c.grid_side;
    n.conv1_channels = c.conv1_channels;
    n.conv1_kernel = c.conv1_kernel;
    n.conv1_stride = c.conv1_stride;
    n.conv2_channels = c.conv2_channels;
    n.conv2_kernel = c.conv2_kernel;
    n.conv2_stride = c.conv2_stride;
    n.pool = c.pool;
    n.fc1 = c.fc1;
    n.embed_dim = c.embed_dim;
    return n;
}

LossConfig loss_config_of(const PipelineConfig& c) { return {c.loss_b, c.loss_m}; }

OptimizerConfig optimizer_of(const PipelineConfig& c) {
    return {c.learning_rate, c.momentum, c.batch_size};
}

AssignmentConfig assignment_of(const PipelineConfig& c) { return {c.beta}; }

PairCaps pair_caps_of(const PipelineConfig& c) {
    const int cap = c.max_pairs_per_category;
    return {cap, cap, cap, cap};
}

DvcConfig dvc_config_of(const PipelineConfig& c, int classes) {
    DvcConfig d;
    d.base = net_config_of(c);
    d.fca = c.dvc_fca;
    d.fcb = c.dvc_fcb;
    d.classes = classes;
    return d;
}

DatasetOptions dataset_options_of(const PipelineConfig& c) {
    DatasetOptions o;
    o.min_objects = c.min_objects;
    o.max_objects = c.max_objects;
    o.min_size = c.min_size;
    o.max_size = c.max_size;
    o.shape_density = c.shape_density;
    o.plane_density = c.plane_density;
    o.plane_half_extent = c.plane_half_extent;
    o.noise_sigma = c.noise_sigma;
    o.min_separation = c.min_separation;
    return o;
}

OverlapConvention overlap_convention_of(const PipelineConfig& c) {
    return overlap_convention_from_name(c.overlap_convention);
}

std::set<ShapeKind> kinds_of(const std::vector<std::string>& names) {
    if (names.empty()) throw std::invalid_argument("kind list is empty");
    std::set<ShapeKind> kinds;
    for (const std::string& n : names) kinds.insert(shape_kind_from_name(n));
    return kinds;
}

}  // namespace objdisc
