#include "objdisc/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>

#include "objdisc/errors.hpp"
#include "objdisc/rng.hpp"

namespace objdisc {

namespace {

constexpr std::uint64_t kSceneSeedStride = 0x9E3779B97F4A7C15ULL;
constexpr std::uint64_t kBackgroundSalt = 0xC2B2AE3D27D4EB4FULL;

std::uint64_t scene_pair_seed(std::uint64_t base, std::size_t scene_index) {
    return base ^ (kSceneSeedStride * static_cast<std::uint64_t>(scene_index + 1));
}

template <typename Fn>
auto with_scene_context(std::size_t scene_index, Fn&& fn) {
    const std::string prefix = "scene " + std::to_string(scene_index) + ": ";
    try {
        return fn();
    } catch (const config_error& e) {
        throw config_error(prefix + e.what());
    } catch (const data_error& e) {
        throw data_error(prefix + e.what());
    } catch (const model_error& e) {
        throw model_error(prefix + e.what());
    } catch (const std::invalid_argument& e) {
        throw std::invalid_argument(prefix + e.what());
    }
}

// Keep `cap` refs by a seeded partial Fisher-Yates pass, then restore
// canonical order so the surviving set alone determines the output.
void subsample_refs(std::vector<SupervoxelRef>& refs, int cap, std::uint64_t seed) {
    if (refs.size() <= static_cast<std::size_t>(std::max(cap, 0))) return;
    std::mt19937_64 rng(seed);
    for (std::size_t i = 0; i < static_cast<std::size_t>(cap); ++i) {
        const std::size_t j = i + next_below(rng, refs.size() - i);
        std::swap(refs[i], refs[j]);
    }
    refs.resize(static_cast<std::size_t>(cap));
    std::sort(refs.begin(), refs.end());
}

int model_grid_side(const TrainedModel& model) {
    if (model.backbone) return model.backbone->config.side;
    if (model.classifier) return model.classifier->config.base.side;
    throw std::invalid_argument("model holds no parameters");
}

}  // namespace

SceneArtifacts prepare_scene(const LabeledCloud& cloud, const PipelineConfig& config) {
    validate_config(config);
    SceneArtifacts art;
    art.scales = multi_scale_segment(cloud, config.seed_resolutions, vccs_params_of(config));
    art.grids = build_grid_table(art.scales, cloud, config.grid_side, config.grid_padding);
    return art;
}

TrainingPool pool_scenes(const std::vector<LabeledCloud>& scenes,
                         const std::vector<SceneArtifacts>& artifacts,
                         const PipelineConfig& config, const std::vector<SceneSpec>* specs,
                         const std::vector<std::size_t>* subset) {
    validate_config(config);
    if (scenes.size() != artifacts.size())
        throw std::invalid_argument("scenes and artifacts must align");
    if (specs && specs->size() != scenes.size())
        throw std::invalid_argument("specs must align with the scenes");

    std::vector<std::size_t> chosen;
    if (subset) {
        std::set<std::size_t> seen;
        for (std::size_t i : *subset) {
            if (i >= scenes.size())
                throw std::invalid_argument("subset index " + std::to_string(i) +
                                            " is out of range");
            if (!seen.insert(i).second)
                throw std::invalid_argument("subset repeats scene " + std::to_string(i));
            chosen.push_back(i);
        }
    } else {
        for (std::size_t i = 0; i < scenes.size(); ++i) chosen.push_back(i);
    }
    if (chosen.empty()) throw std::invalid_argument("no scenes to pool");

    // classes 1..K = the shape kinds over all specs, in enum order
    std::map<ShapeKind, int> class_of_kind;
    if (specs) {
        std::set<ShapeKind> kinds;
        for (const SceneSpec& spec : *specs)
            for (const ShapeSpec& shape : spec.shapes) kinds.insert(shape.kind);
        int next = 1;
        for (ShapeKind k : kinds) class_of_kind[k] = next++;
    }

    TrainingPool pool;
    if (specs) pool.classes = 1 + static_cast<int>(class_of_kind.size());

    const AssignmentConfig assignment = assignment_of(config);
    const PairCaps caps = pair_caps_of(config);
    std::map<int, int> next_id;  // per scale: first free pooled id
    std::vector<std::pair<SupervoxelRef, int>> object_refs;  // pooled ref -> class
    std::vector<SupervoxelRef> background_refs;              // pooled

    for (std::size_t i : chosen) {
        with_scene_context(i, [&] {
            const LabeledCloud& cloud = scenes[i];
            const SceneArtifacts& art = artifacts[i];
            std::map<int, int> offset;
            for (std::size_t s = 0; s < art.scales.size(); ++s) {
                const int sc = static_cast<int>(s);
                offset[sc] = next_id[sc];
                int max_id = -1;
                for (const Supervoxel& sv : art.scales[s].supervoxels)
                    max_id = std::max(max_id, sv.id);
                next_id[sc] += max_id + 1;
            }

            PairSet local = generate_pairs(art.scales, cloud, assignment, caps,
                                           scene_pair_seed(config.rng_seed, i));
            auto remap = [&](SupervoxelRef r) {
                r.id += offset.at(r.scale);
                return r;
            };
            for (SupervoxelPair p : local.positives) {
                p.a = remap(p.a);
                p.b = remap(p.b);
                pool.pairs.positives.push_back(p);
            }
            for (SupervoxelPair p : local.negatives) {
                p.a = remap(p.a);
                p.b = remap(p.b);
                pool.pairs.negatives.push_back(p);
            }
            for (const auto& [ref, grid] : art.grids) pool.grids.emplace(remap(ref), grid);

            if (!specs) return;
            const SceneSpec& spec = (*specs)[i];
            for (std::size_t s = 0; s < art.scales.size(); ++s)
                for (const Supervoxel& sv : art.scales[s].supervoxels) {
                    const SupervoxelRef pooled = remap({static_cast<int>(s), sv.id});
                    if (const auto obj = assign_to_object(sv, cloud, config.beta)) {
                        if (*obj < 1 || static_cast<std::size_t>(*obj) > spec.shapes.size())
                            throw data_error("label " + std::to_string(*obj) +
                                             " exceeds the manifest shape count");
                        object_refs.emplace_back(
                            pooled, class_of_kind.at(spec.shapes[*obj - 1].kind));
                    } else if (is_background(sv, cloud, config.beta)) {
                        background_refs.push_back(pooled);
                    }
                }
        });
    }

    if (specs) {
        subsample_refs(background_refs, config.max_pairs_per_category,
                       config.rng_seed ^ kBackgroundSalt);
        pool.examples.reserve(object_refs.size() + background_refs.size());
        for (const auto& [ref, cls] : object_refs)
            pool.examples.push_back({pool.grids.at(ref), cls});
        for (const SupervoxelRef& ref : background_refs)
            pool.examples.push_back({pool.grids.at(ref), 0});
    }
    return pool;
}

TrainOutcome train_pool(const TrainingPool& pool, const PipelineConfig& config) {
    validate_config(config);
    const bool wants_classifier = config.mode == "dvc" || config.mode == "dvc_then_vdml";
    const bool wants_metric = config.mode == "vdml" || config.mode == "dvc_then_vdml";
    if (!wants_classifier && !wants_metric)
        throw config_error("train.mode must be vdml, dvc, or dvc_then_vdml");

    TrainOutcome out;
    DvcParams pretrained;
    if (wants_classifier) {
        if (pool.classes < 2 || pool.examples.empty())
            throw config_error(
                "mode " + config.mode +
                " needs classifier examples; pool the scenes with their manifest specs");
        const DvcConfig dc = dvc_config_of(config, pool.classes);
        auto [params, report] = train_dvc(init_dvc_params(dc, config.rng_seed), pool.examples,
                                          optimizer_of(config), config.dvc_epochs,
                                          config.rng_seed);
        pretrained = std::move(params);
        out.classifier_report = std::move(report);
    }
    if (wants_metric) {
        const NetworkParams start = wants_classifier
                                        ? pretrained.backbone
                                        : init_params(net_config_of(config), config.rng_seed);
        auto [params, report] =
            train_vdml(start, pool.pairs, pool.grids, loss_config_of(config),
                       optimizer_of(config), config.epochs, config.rng_seed);
        out.model.backbone = std::move(params);
        out.metric_report = std::move(report);
    } else {
        out.model.classifier = std::move(pretrained);
    }
    return out;
}

void save_model(const TrainedModel& model, const std::string& path) {
    if (model.backbone)
        save_checkpoint(*model.backbone, path);
    else if (model.classifier)
        save_dvc_checkpoint(*model.classifier, path);
    else
        throw std::invalid_argument("model holds no parameters");
}

TrainedModel load_model(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw data_error("cannot open: " + path);
    char magic[8] = {};
    in.read(magic, sizeof magic);
    if (in.gcount() != sizeof magic) throw model_error("truncated checkpoint: " + path);
    in.close();

    TrainedModel model;
    if (std::string(magic, 8) == std::string("ODCHKPT\0", 8))
        model.backbone = load_checkpoint(path);
    else if (std::string(magic, 8) == std::string("ODDVCKP\0", 8))
        model.classifier = load_dvc_checkpoint(path);
    else
        throw model_error("not a model checkpoint: " + path);
    return model;
}

DiscoveryResult run_discovery(const SceneArtifacts& artifacts, const LabeledCloud& cloud,
                              const TrainedModel& model, const PipelineConfig& config) {
    validate_config(config);
    const int side = model_grid_side(model);
    if (side != config.grid_side)
        throw model_error("model expects grid side " + std::to_string(side) +
                          " but network.grid_side is " + std::to_string(config.grid_side));

    EmbeddingTable table;
    for (std::size_t s = 0; s < artifacts.scales.size(); ++s)
        for (const Supervoxel& sv : artifacts.scales[s].supervoxels) {
            const OccupancyGrid& grid = artifacts.grids.at({static_cast<int>(s), sv.id});
            table.rows.push_back({static_cast<int>(s), sv.id,
                                  model.backbone ? forward_embed(*model.backbone, grid)
                                                 : dvc_features(*model.classifier, grid)});
        }
    if (table.size() == 0) {
        DiscoveryResult r;
        r.object_of_point.assign(cloud.points.size(), 0);
        r.cluster_of_point.assign(cloud.points.size(), ClusterLabeling::kNoise);
        return r;
    }

    double eps = config.eps;
    if (eps <= 0.0) {
        const EpsChoice choice = choose_eps(table, config.eps_quantile);
        // duplicate-only tables pick a tiny radius: exact duplicates still
        // cluster together and everything else stays noise
        eps = choice.degenerate ? 1e-9 : choice.eps;
    }
    const ClusterLabeling labeling = dbscan(table, eps, config.min_pts);
    return clusters_to_objects(table, labeling, artifacts.scales, cloud);
}

DiscoveryResult run_discovery(const LabeledCloud& cloud, const TrainedModel& model,
                              const PipelineConfig& config) {
    return run_discovery(prepare_scene(cloud, config), cloud, model, config);
}

MetricReport evaluate_scene(const DiscoveryResult& pred, const LabeledCloud& gt,
                            const PipelineConfig& config) {
    validate_config(config);
    if (!gt.has_labels()) throw data_error("ground-truth cloud has no labels");
    std::set<int> ids;
    for (int l : gt.labels)
        if (l >= 1) ids.insert(l);
    if (ids.empty()) throw data_error("scene has no ground-truth objects");
    return evaluate(pred, gt, ids, config.overlap_tau, overlap_convention_of(config));
}

std::size_t count_assigned(const std::vector<SegmentationResult>& scales,
                           const LabeledCloud& cloud, double beta) {
    std::size_t n = 0;
    for (const SegmentationResult& scale : scales)
        for (const Supervoxel& sv : scale.supervoxels)
            if (assign_to_object(sv, cloud, beta)) ++n;
    return n;
}

std::vector<BetaSweepRow> sweep_beta(const std::vector<LabeledCloud>& scenes,
                                     const std::vector<SceneArtifacts>& artifacts,
                                     const PipelineConfig& config,
                                     const std::vector<double>& betas, int k_folds) {
    validate_config(config);
    if (scenes.size() != artifacts.size())
        throw std::invalid_argument("scenes and artifacts must align");
    if (betas.empty()) throw std::invalid_argument("no betas to sweep");
    for (double beta : betas)
        if (!(beta > 0.0) || beta > 1.0)
            throw config_error("assignment.beta must lie in (0, 1], got " + std::to_string(beta));
    if (k_folds < 2) throw std::invalid_argument("cross-validation needs at least two folds");
    if (scenes.size() < static_cast<std::size_t>(k_folds))
        throw std::invalid_argument("fewer scenes than folds");

    std::vector<BetaSweepRow> rows;
    for (double beta : betas) {
        PipelineConfig cfg = config;
        cfg.beta = beta;
        BetaSweepRow row;
        row.beta = beta;
        for (std::size_t i = 0; i < scenes.size(); ++i)
            row.assigned_supervoxels += count_assigned(artifacts[i].scales, scenes[i], beta);

        double fold_sum = 0.0;
        for (int f = 0; f < k_folds; ++f) {
            std::vector<std::size_t> train_idx, val_idx;
            for (std::size_t i = 0; i < scenes.size(); ++i)
                (static_cast<int>(i % static_cast<std::size_t>(k_folds)) == f ? val_idx
                                                                              : train_idx)
                    .push_back(i);
            const TrainingPool pool = pool_scenes(scenes, artifacts, cfg, nullptr, &train_idx);
            const TrainOutcome outcome = train_pool(pool, cfg);
            double acc_sum = 0.0;
            for (std::size_t i : val_idx) {
                const DiscoveryResult res =
                    run_discovery(artifacts[i], scenes[i], outcome.model, cfg);
                acc_sum += evaluate_scene(res, scenes[i], cfg).accuracy;
            }
            fold_sum += acc_sum / static_cast<double>(val_idx.size());
        }
        row.mean_accuracy = fold_sum / static_cast<double>(k_folds);
        rows.push_back(row);
    }
    return rows;
}

void save_beta_sweep(const std::vector<BetaSweepRow>& rows, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw data_error("cannot open for write: " + path);
    out << "beta,mean_accuracy,assigned_supervoxels\n";
    char buf[96];
    for (const BetaSweepRow& row : rows) {
        std::snprintf(buf, sizeof buf, "%.17g,%.17g,%zu\n", row.beta, row.mean_accuracy,
                      row.assigned_supervoxels);
        out << buf;
    }
    if (!out) throw data_error("write failed: " + path);
}

}  // namespace objdisc
