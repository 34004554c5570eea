// Command-line front end: synthesize labeled scenes, train a model, run
// discovery on a scene, score a result, and sweep the assignment threshold.
// Exit codes: 0 success, 2 configuration problems, 3 unusable input data,
// 4 checkpoint/architecture mismatches, 1 anything else.
#include <cstdint>
#include <exception>
#include <iostream>
#include <stdexcept>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "objdisc/config.hpp"
#include "objdisc/errors.hpp"
#include "objdisc/pipeline.hpp"

namespace {

using namespace objdisc;

PipelineConfig resolved_config(const std::string& path, bool seed_given, std::uint64_t seed) {
    PipelineConfig config = path.empty() ? PipelineConfig{} : load_config(path);
    if (seed_given) config.rng_seed = seed;
    validate_config(config);
    return config;
}

int run_config(const std::string& out_path) {
    const PipelineConfig defaults;
    if (out_path.empty())
        std::cout << serialize_config(defaults);
    else
        save_config(defaults, out_path);
    return 0;
}

int run_synth(const PipelineConfig& config, const std::string& out_dir) {
    const Dataset ds =
        make_dataset(kinds_of(config.train_kinds), kinds_of(config.test_kinds),
                     config.scenes_per_split, config.rng_seed, dataset_options_of(config));
    save_dataset(ds, out_dir);
    std::size_t points = 0;
    for (const LabeledCloud& c : ds.train) points += c.points.size();
    for (const LabeledCloud& c : ds.test) points += c.points.size();
    nlohmann::json j;
    j["train_scenes"] = ds.train.size();
    j["test_scenes"] = ds.test.size();
    j["total_points"] = points;
    j["out_dir"] = out_dir;
    std::cout << j.dump(2) << '\n';
    return 0;
}

std::vector<SceneArtifacts> prepare_all(const std::vector<LabeledCloud>& scenes,
                                        const PipelineConfig& config, const char* split) {
    std::vector<SceneArtifacts> artifacts;
    for (std::size_t i = 0; i < scenes.size(); ++i) {
        std::cerr << "segmenting " << split << " scene " << (i + 1) << "/" << scenes.size()
                  << "\n";
        artifacts.push_back(prepare_scene(scenes[i], config));
    }
    return artifacts;
}

int run_train(const PipelineConfig& config, const std::string& data_dir,
              const std::string& out_path) {
    const Dataset ds = load_dataset(data_dir);
    if (ds.train.empty()) throw data_error("dataset has no training scenes: " + data_dir);
    const std::vector<SceneArtifacts> artifacts = prepare_all(ds.train, config, "train");
    const bool wants_classifier = config.mode != "vdml";
    const TrainingPool pool = pool_scenes(ds.train, artifacts, config,
                                          wants_classifier ? &ds.train_specs : nullptr);
    std::cerr << "training mode " << config.mode << " on " << pool.pairs.positives.size()
              << " positive / " << pool.pairs.negatives.size() << " negative pairs";
    if (wants_classifier) std::cerr << ", " << pool.examples.size() << " classifier examples";
    std::cerr << "\n";
    const TrainOutcome out = train_pool(pool, config);
    save_model(out.model, out_path);

    nlohmann::json j;
    j["mode"] = config.mode;
    j["scenes"] = ds.train.size();
    j["positive_pairs"] = pool.pairs.positives.size();
    j["negative_pairs"] = pool.pairs.negatives.size();
    j["model"] = out_path;
    if (!out.metric_report.mean_loss.empty()) {
        const std::string report_path = out_path + ".report.csv";
        save_report(out.metric_report, report_path);
        j["epochs_run"] = out.metric_report.epochs_run();
        j["final_loss"] = out.metric_report.mean_loss.back();
        j["stop_reason"] = out.metric_report.stop_reason;
        j["report"] = report_path;
    }
    if (!out.classifier_report.mean_ce.empty()) {
        const std::string pretrain_path = out_path + ".pretrain.csv";
        save_dvc_report(out.classifier_report, pretrain_path);
        j["classifier_examples"] = pool.examples.size();
        j["classifier_classes"] = pool.classes;
        j["final_ce"] = out.classifier_report.mean_ce.back();
        j["final_train_accuracy"] = out.classifier_report.accuracy.back();
        j["pretrain_report"] = pretrain_path;
    }
    std::cout << j.dump(2) << '\n';
    return 0;
}

int run_discover(const PipelineConfig& config, const std::string& model_path,
                 const std::string& input_path, const std::string& out_path) {
    const TrainedModel model = load_model(model_path);
    const LabeledCloud cloud = load_pcd(input_path);
    const DiscoveryResult result = run_discovery(cloud, model, config);
    if (!out_path.empty()) save_discovery(result, out_path);
    std::cout << discovery_summary(result) << '\n';
    return 0;
}

int run_eval(const PipelineConfig& config, const std::string& pred_path,
             const std::string& truth_path, const std::string& out_path) {
    const DiscoveryResult pred = load_discovery(pred_path);
    const LabeledCloud truth = load_pcd(truth_path);
    MetricReport report;
    try {
        report = evaluate_scene(pred, truth, config);
    } catch (const std::invalid_argument& e) {
        // a prediction that does not fit the truth cloud is an input problem
        throw data_error(e.what());
    }
    if (!out_path.empty()) save_metrics(report, out_path);
    nlohmann::json j;
    j["accuracy"] = report.accuracy;
    j["f_os"] = report.f_os;
    j["f_us"] = report.f_us;
    j["r_os"] = report.rates.r_os;
    j["r_us"] = report.rates.r_us;
    j["r_gs"] = report.rates.r_gs;
    j["r_ms"] = report.rates.r_ms;
    std::cout << j.dump(2) << '\n';
    return 0;
}

int run_sweep(const PipelineConfig& config, const std::string& data_dir,
              std::vector<double> betas, int folds, const std::string& out_path) {
    std::vector<double> unique;
    for (double beta : betas) {
        if (std::find(unique.begin(), unique.end(), beta) != unique.end())
            std::cerr << "ignoring duplicate beta " << beta << "\n";
        else
            unique.push_back(beta);
    }
    const Dataset ds = load_dataset(data_dir);
    if (ds.train.empty()) throw data_error("dataset has no training scenes: " + data_dir);
    const std::vector<SceneArtifacts> artifacts = prepare_all(ds.train, config, "train");
    const auto rows = sweep_beta(ds.train, artifacts, config, unique, folds);
    if (!out_path.empty()) save_beta_sweep(rows, out_path);
    nlohmann::json j = nlohmann::json::array();
    for (const BetaSweepRow& row : rows)
        j.push_back({{"beta", row.beta},
                     {"mean_accuracy", row.mean_accuracy},
                     {"assigned_supervoxels", row.assigned_supervoxels}});
    std::cout << j.dump(2) << '\n';
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Discovers unseen objects in point-cloud scenes: multi-scale segmentation, "
                 "learned supervoxel embeddings, density clustering, cross-scale merging."};
    app.require_subcommand(1);

    std::string config_path, out_path, data_dir, model_path, input_path, pred_path, truth_path;
    std::uint64_t seed = 0;
    std::vector<double> betas = {0.5, 0.6, 0.7, 0.8, 0.9, 1.0};
    int folds = 5;

    CLI::App* config_cmd = app.add_subcommand("config", "Write the default configuration file");
    config_cmd->add_option("--out", out_path, "Destination path (stdout when omitted)");

    CLI::App* synth = app.add_subcommand("synth", "Generate a labeled synthetic dataset");
    synth->add_option("--config", config_path, "Configuration file")->check(CLI::ExistingFile);
    synth->add_option("--seed", seed, "Override the configured rng seed");
    synth->add_option("--out", out_path, "Dataset directory to create")->required();

    CLI::App* train = app.add_subcommand("train", "Train a model on a dataset's training split");
    train->add_option("--config", config_path, "Configuration file")->check(CLI::ExistingFile);
    train->add_option("--seed", seed, "Override the configured rng seed");
    train->add_option("--data", data_dir, "Dataset directory")->required();
    train->add_option("--out", out_path, "Model checkpoint to write")->required();

    CLI::App* discover = app.add_subcommand("discover", "Discover objects in one scene");
    discover->add_option("--config", config_path, "Configuration file")->check(CLI::ExistingFile);
    discover->add_option("--model", model_path, "Trained model checkpoint")->required();
    discover->add_option("--input", input_path, "Scene point cloud (PCD)")->required();
    discover->add_option("--out", out_path, "Per-point assignment file to write");

    CLI::App* eval = app.add_subcommand("eval", "Score a discovery result against labels");
    eval->add_option("--config", config_path, "Configuration file")->check(CLI::ExistingFile);
    eval->add_option("--pred", pred_path, "Assignment file from discover")->required();
    eval->add_option("--truth", truth_path, "Labeled scene point cloud (PCD)")->required();
    eval->add_option("--out", out_path, "Metrics CSV to write");

    CLI::App* sweep = app.add_subcommand(
        "sweep_beta", "Cross-validate discovery accuracy across assignment thresholds");
    sweep->add_option("--config", config_path, "Configuration file")->check(CLI::ExistingFile);
    sweep->add_option("--seed", seed, "Override the configured rng seed");
    sweep->add_option("--data", data_dir, "Dataset directory")->required();
    sweep->add_option("--betas", betas, "Thresholds to sweep")->delimiter(',');
    sweep->add_option("--folds", folds, "Cross-validation folds")->check(CLI::Range(2, 1000));
    sweep->add_option("--out", out_path, "Sweep CSV to write");

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (app.got_subcommand(config_cmd)) return run_config(out_path);
        const bool seed_given =
            (app.got_subcommand(synth) && synth->count("--seed")) ||
            (app.got_subcommand(train) && train->count("--seed")) ||
            (app.got_subcommand(sweep) && sweep->count("--seed"));
        const PipelineConfig config = resolved_config(config_path, seed_given, seed);
        if (app.got_subcommand(synth)) return run_synth(config, out_path);
        if (app.got_subcommand(train)) return run_train(config, data_dir, out_path);
        if (app.got_subcommand(discover))
            return run_discover(config, model_path, input_path, out_path);
        if (app.got_subcommand(eval)) return run_eval(config, pred_path, truth_path, out_path);
        if (app.got_subcommand(sweep))
            return run_sweep(config, data_dir, betas, folds, out_path);
    } catch (const config_error& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const data_error& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 3;
    } catch (const model_error& e) {
        std::cerr << "model error: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
