#include "objdisc/config.hpp"

#include <doctest.h>

#include <filesystem>
#include <string>

#include "objdisc/errors.hpp"
#include "test_util.hpp"

using namespace objdisc;

namespace {

// a config with every field moved off its default, to make round-trip
// failures visible field by field
PipelineConfig scrambled() {
    PipelineConfig c;
    c.seed_resolutions = {0.07, 0.11, 0.21};
    c.voxel_resolution = 0.015;
    c.color_weight = 0.3;
    c.spatial_weight = 0.5;
    c.normal_weight = 0.9;
    c.normal_k = 12;
    c.beta = 0.75;
    c.max_pairs_per_category = 1234;
    c.grid_side = 16;
    c.grid_padding = 1;
    c.conv1_channels = 8;
    c.conv1_kernel = 3;
    c.conv1_stride = 1;
    c.conv2_channels = 12;
    c.conv2_kernel = 3;
    c.conv2_stride = 1;
    c.pool = 2;
    c.fc1 = 40;
    c.embed_dim = 24;
    c.loss_b = 0.25;
    c.loss_m = 1.5;
    c.learning_rate = 0.05;
    c.momentum = 0.8;
    c.batch_size = 16;
    c.epochs = 12;
    c.mode = "dvc_then_vdml";
    c.dvc_epochs = 4;
    c.dvc_fca = 48;
    c.dvc_fcb = 32;
    c.eps = 0.4;
    c.eps_quantile = 0.85;
    c.min_pts = 3;
    c.overlap_tau = 0.7;
    c.overlap_convention = "recall";
    c.scenes_per_split = 4;
    c.train_kinds = {"box"};
    c.test_kinds = {"t_shape", "sphere"};
    c.min_objects = 1;
    c.max_objects = 2;
    c.min_size = 0.09;
    c.max_size = 0.13;
    c.shape_density = 9000.0;
    c.plane_density = 3000.0;
    c.plane_half_extent = 0.35;
    c.noise_sigma = 0.002;
    c.min_separation = 0.12;
    c.rng_seed = 0xDEADBEEFCAFEBABEULL;
    return c;
}

}  // namespace

TEST_CASE("defaults validate and carry the expected anchors") {
    const PipelineConfig c;
    CHECK_NOTHROW(validate_config(c));
    CHECK(c.beta == 0.8);
    CHECK(c.seed_resolutions == std::vector<double>{0.05, 0.10, 0.15, 0.20});
    CHECK(c.min_pts == 2);
    CHECK(c.overlap_tau == 0.8);
    CHECK(c.mode == "vdml");
}

TEST_CASE("serialize/parse round-trips exactly") {
    SUBCASE("defaults") {
        const PipelineConfig c;
        CHECK(parse_config(serialize_config(c)) == c);
    }
    SUBCASE("every field off-default") {
        const PipelineConfig c = scrambled();
        CHECK(parse_config(serialize_config(c)) == c);
    }
}

TEST_CASE("file round-trip") {
    const std::string path = (testutil::scratch_dir() / "pipeline.cfg").string();
    const PipelineConfig c = scrambled();
    save_config(c, path);
    CHECK(load_config(path) == c);
    CHECK_THROWS_AS(load_config((testutil::scratch_dir() / "nope.cfg").string()), config_error);
}

TEST_CASE("serialized text is sectioned and marks gap decisions") {
    const std::string text = serialize_config(PipelineConfig{});
    CHECK(text.find("[segmentation]") != std::string::npos);
    CHECK(text.find("[optimizer]") != std::string::npos);
    CHECK(text.find("[pipeline]") != std::string::npos);
    CHECK(text.find("# gap:") != std::string::npos);
    CHECK(text.find("beta = 0.8") != std::string::npos);
}

TEST_CASE("parser mechanics") {
    SUBCASE("comments, blank lines, and spacing are tolerated") {
        const PipelineConfig c = parse_config(
            "# leading comment\n"
            "\n"
            "[assignment]\n"
            "  beta =   0.9   # trailing comment\n"
            "[clustering]\n"
            "min_pts=4\n");
        CHECK(c.beta == 0.9);
        CHECK(c.min_pts == 4);
    }
    SUBCASE("later duplicate keys win") {
        const PipelineConfig c = parse_config("[assignment]\nbeta = 0.6\nbeta = 0.7\n");
        CHECK(c.beta == 0.7);
    }
    SUBCASE("unknown key is named") {
        CHECK_THROWS_WITH_AS(parse_config("[assignment]\nbetta = 0.8\n"),
                             doctest::Contains("assignment.betta"), config_error);
    }
    SUBCASE("unknown section is an unknown key") {
        CHECK_THROWS_AS(parse_config("[assignments]\nbeta = 0.8\n"), config_error);
    }
    SUBCASE("key before any section") {
        CHECK_THROWS_WITH_AS(parse_config("beta = 0.8\n"), doctest::Contains("before any"),
                             config_error);
    }
    SUBCASE("missing equals sign") {
        CHECK_THROWS_WITH_AS(parse_config("[assignment]\nbeta 0.8\n"),
                             doctest::Contains("line 2"), config_error);
    }
    SUBCASE("malformed number names the line") {
        CHECK_THROWS_WITH_AS(parse_config("[assignment]\nbeta = fast\n"),
                             doctest::Contains("line 2"), config_error);
    }
    SUBCASE("unterminated section header") {
        CHECK_THROWS_AS(parse_config("[assignment\nbeta = 0.8\n"), config_error);
    }
    SUBCASE("list values split on commas") {
        const PipelineConfig c =
            parse_config("[segmentation]\nseed_resolutions = 0.05, 0.1\n");
        CHECK(c.seed_resolutions == std::vector<double>{0.05, 0.1});
    }
}

TEST_CASE("validation rejects out-of-range fields and names the key") {
    auto broken = [](auto&& tweak) {
        PipelineConfig c;
        tweak(c);
        return c;
    };
    CHECK_THROWS_WITH_AS(validate_config(broken([](PipelineConfig& c) { c.beta = 0.0; })),
                         doctest::Contains("assignment.beta"), config_error);
    CHECK_THROWS_AS(validate_config(broken([](PipelineConfig& c) { c.beta = 1.5; })), config_error);
    CHECK_THROWS_AS(validate_config(broken([](PipelineConfig& c) { c.seed_resolutions.clear(); })),
                    config_error);
    CHECK_THROWS_AS(
        validate_config(broken([](PipelineConfig& c) { c.seed_resolutions = {0.1, -0.2}; })),
        config_error);
    CHECK_THROWS_AS(validate_config(broken([](PipelineConfig& c) { c.min_pts = 1; })),
                    config_error);
    CHECK_THROWS_AS(validate_config(broken([](PipelineConfig& c) { c.epochs = 0; })), config_error);
    CHECK_THROWS_AS(validate_config(broken([](PipelineConfig& c) { c.batch_size = 0; })),
                    config_error);
    CHECK_THROWS_AS(validate_config(broken([](PipelineConfig& c) { c.momentum = 1.0; })),
                    config_error);
    CHECK_THROWS_AS(validate_config(broken([](PipelineConfig& c) { c.learning_rate = 0.0; })),
                    config_error);
    CHECK_THROWS_AS(validate_config(broken([](PipelineConfig& c) { c.loss_m = 0.0; })),
                    config_error);
    CHECK_THROWS_WITH_AS(validate_config(broken([](PipelineConfig& c) { c.mode = "pretrain"; })),
                         doctest::Contains("train.mode"), config_error);
    CHECK_THROWS_AS(validate_config(broken([](PipelineConfig& c) { c.eps = -0.1; })), config_error);
    CHECK_THROWS_AS(validate_config(broken([](PipelineConfig& c) { c.eps_quantile = 1.1; })),
                    config_error);
    CHECK_THROWS_AS(validate_config(broken([](PipelineConfig& c) { c.overlap_tau = 1.0; })),
                    config_error);
    CHECK_THROWS_AS(
        validate_config(broken([](PipelineConfig& c) { c.overlap_convention = "dice"; })),
        config_error);
    CHECK_THROWS_WITH_AS(
        validate_config(broken([](PipelineConfig& c) { c.test_kinds = {"box", "sphere"}; })),
        doctest::Contains("unseen"), config_error);
    CHECK_THROWS_AS(validate_config(broken([](PipelineConfig& c) { c.train_kinds = {"cube"}; })),
                    config_error);
    CHECK_THROWS_AS(validate_config(broken([](PipelineConfig& c) { c.max_objects = 0; })),
                    config_error);
    CHECK_THROWS_AS(validate_config(broken([](PipelineConfig& c) { c.max_size = 0.01; })),
                    config_error);
    CHECK_THROWS_AS(validate_config(broken([](PipelineConfig& c) {
                        c.grid_side = 8;
                        c.grid_padding = 4;
                    })),
                    config_error);
    // network shape errors surface through NetConfig validation
    CHECK_THROWS_WITH_AS(validate_config(broken([](PipelineConfig& c) { c.conv1_kernel = 40; })),
                         doctest::Contains("network"), config_error);
    // an invalid config also fails at parse time
    CHECK_THROWS_AS(parse_config("[clustering]\nmin_pts = 1\n"), config_error);
}

TEST_CASE("adapters hand each module its own parameters") {
    const PipelineConfig c = scrambled();

    const NetConfig n = net_config_of(c);
    CHECK(n.side == c.grid_side);
    CHECK(n.conv1_channels == 8);
    CHECK(n.fc1 == 40);
    CHECK(n.embed_dim == 24);
    CHECK_NOTHROW(n.validate());

    const VccsParams v = vccs_params_of(c);
    CHECK(v.voxel_resolution == 0.015);
    CHECK(v.weights.color == 0.3);
    CHECK(v.weights.spatial == 0.5);
    CHECK(v.weights.normal == 0.9);
    CHECK(v.normal_k == 12);

    const LossConfig l = loss_config_of(c);
    CHECK(l.b == 0.25);
    CHECK(l.m == 1.5);

    const OptimizerConfig o = optimizer_of(c);
    CHECK(o.learning_rate == 0.05);
    CHECK(o.momentum == 0.8);
    CHECK(o.batch_size == 16);

    CHECK(assignment_of(c).beta == 0.75);
    const PairCaps caps = pair_caps_of(c);
    CHECK(caps.positives == 1234);
    CHECK(caps.background == 1234);

    const DvcConfig d = dvc_config_of(c, 3);
    CHECK(d.base == n);
    CHECK(d.fca == 48);
    CHECK(d.fcb == 32);
    CHECK(d.classes == 3);

    const DatasetOptions ds = dataset_options_of(c);
    CHECK(ds.min_objects == 1);
    CHECK(ds.max_objects == 2);
    CHECK(ds.plane_half_extent == 0.35);
    CHECK(ds.noise_sigma == 0.002);

    CHECK(overlap_convention_of(c) == OverlapConvention::recall);
    CHECK(kinds_of({"box", "t_shape"}) ==
          std::set<ShapeKind>{ShapeKind::box, ShapeKind::t_shape});
}
