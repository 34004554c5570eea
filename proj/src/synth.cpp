#include "objdisc/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "objdisc/errors.hpp"
#include "objdisc/rng.hpp"

namespace objdisc {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr int kPlacementAttempts = 100;

constexpr Rgb kPlaneColor{120, 120, 120};
constexpr std::array<Rgb, 8> kPalette{{{220, 60, 60},
                                       {60, 160, 220},
                                       {70, 190, 90},
                                       {230, 180, 40},
                                       {170, 80, 200},
                                       {240, 130, 50},
                                       {60, 200, 190},
                                       {200, 100, 140}}};

// An axis-aligned rectangle of the shape's surface in its local frame
// (z = 0 is the resting plane).
struct Patch {
    Vec3 origin, u, v;
    double area = 0.0;
};

Patch patch(Vec3 origin, Vec3 u, Vec3 v) { return {origin, u, v, u.norm() * v.norm()}; }

// The surface of a box or of an L/T prism as explicit outer rectangles, so
// no sample ever lands on an interior face of a composite shape.
std::vector<Patch> prism_patches(ShapeKind kind, const Vec3& s) {
    const double ax = s.x / 2.0, ay = s.y / 2.0, h = s.z, sy = s.y;
    std::vector<Patch> ps;
    switch (kind) {
        case ShapeKind::box:
            ps.push_back(patch({-ax, -ay, 0}, {s.x, 0, 0}, {0, sy, 0}));  // bottom
            ps.push_back(patch({-ax, -ay, h}, {s.x, 0, 0}, {0, sy, 0}));  // top
            ps.push_back(patch({-ax, -ay, 0}, {s.x, 0, 0}, {0, 0, h}));   // y = -ay
            ps.push_back(patch({-ax, ay, 0}, {s.x, 0, 0}, {0, 0, h}));    // y = +ay
            ps.push_back(patch({-ax, -ay, 0}, {0, sy, 0}, {0, 0, h}));    // x = -ax
            ps.push_back(patch({ax, -ay, 0}, {0, sy, 0}, {0, 0, h}));     // x = +ax
            break;
        case ShapeKind::l_shape: {
            // profile: full-width base up to h/2, column over x in [-ax, 0]
            const double h2 = h / 2.0;
            ps.push_back(patch({-ax, -ay, 0}, {s.x, 0, 0}, {0, sy, 0}));   // bottom
            ps.push_back(patch({ax, -ay, 0}, {0, 0, h2}, {0, sy, 0}));     // right
            ps.push_back(patch({0, -ay, h2}, {ax, 0, 0}, {0, sy, 0}));     // step top
            ps.push_back(patch({0, -ay, h2}, {0, 0, h - h2}, {0, sy, 0})); // step wall
            ps.push_back(patch({-ax, -ay, h}, {ax, 0, 0}, {0, sy, 0}));    // top
            ps.push_back(patch({-ax, -ay, 0}, {0, 0, h}, {0, sy, 0}));     // left
            for (double y : {-ay, ay}) {
                ps.push_back(patch({-ax, y, 0}, {s.x, 0, 0}, {0, 0, h2}));     // cap base
                ps.push_back(patch({-ax, y, h2}, {ax, 0, 0}, {0, 0, h - h2})); // cap column
            }
            break;
        }
        case ShapeKind::t_shape: {
            // profile: stem of half the total width up to h/2, full bar above
            const double h2 = h / 2.0, w2 = s.x / 4.0;
            ps.push_back(patch({-w2, -ay, 0}, {2 * w2, 0, 0}, {0, sy, 0}));     // bottom
            ps.push_back(patch({w2, -ay, 0}, {0, 0, h2}, {0, sy, 0}));          // stem right
            ps.push_back(patch({w2, -ay, h2}, {ax - w2, 0, 0}, {0, sy, 0}));    // underside right
            ps.push_back(patch({ax, -ay, h2}, {0, 0, h - h2}, {0, sy, 0}));     // bar right
            ps.push_back(patch({-ax, -ay, h}, {s.x, 0, 0}, {0, sy, 0}));        // top
            ps.push_back(patch({-ax, -ay, h2}, {0, 0, h - h2}, {0, sy, 0}));    // bar left
            ps.push_back(patch({-ax, -ay, h2}, {ax - w2, 0, 0}, {0, sy, 0}));   // underside left
            ps.push_back(patch({-w2, -ay, 0}, {0, 0, h2}, {0, sy, 0}));         // stem left
            for (double y : {-ay, ay}) {
                ps.push_back(patch({-w2, y, 0}, {2 * w2, 0, 0}, {0, 0, h2}));      // cap stem
                ps.push_back(patch({-ax, y, h2}, {s.x, 0, 0}, {0, 0, h - h2}));    // cap bar
            }
            break;
        }
        default:
            throw std::logic_error("prism_patches: not a prism kind");
    }
    return ps;
}

void check_shape(const ShapeSpec& s, std::size_t index) {
    const std::string who = "shape " + std::to_string(index) + " (" + shape_kind_name(s.kind) + ")";
    if (!(s.size.x > 0.0) || !(s.size.y > 0.0) || !(s.size.z > 0.0))
        throw std::invalid_argument(who + ": sizes must be positive");
    if (!(s.density > 0.0)) throw std::invalid_argument(who + ": density must be positive");
    if (s.kind == ShapeKind::cylinder && s.size.x != s.size.y)
        throw std::invalid_argument(who + ": a cylinder needs size.x == size.y (the diameter)");
    if (s.kind == ShapeKind::sphere && (s.size.x != s.size.y || s.size.x != s.size.z))
        throw std::invalid_argument(who + ": a sphere needs all sizes equal (the diameter)");
    if (!s.auto_place && s.translation.z != 0.0)
        throw std::invalid_argument(who + ": shapes rest on the plane; translation.z must be 0");
}

void check_scene(const SceneSpec& spec) {
    if (!(spec.plane_half_extent > 0.0))
        throw std::invalid_argument("plane_half_extent must be positive");
    if (spec.plane_density < 0.0) throw std::invalid_argument("plane_density must be >= 0");
    if (spec.noise_sigma < 0.0) throw std::invalid_argument("noise_sigma must be >= 0");
    if (spec.min_separation < 0.0) throw std::invalid_argument("min_separation must be >= 0");
    for (std::size_t k = 0; k < spec.shapes.size(); ++k) check_shape(spec.shapes[k], k);
}

struct Pose {
    double x = 0.0, y = 0.0, rot = 0.0;
};

// clearance between the two footprint discs
double separation(const Pose& a, double ra, const Pose& b, double rb) {
    return std::hypot(a.x - b.x, a.y - b.y) - ra - rb;
}

std::vector<Pose> place_shapes(const SceneSpec& spec, std::mt19937_64& rng) {
    std::vector<Pose> poses;
    std::vector<double> radii;
    for (std::size_t k = 0; k < spec.shapes.size(); ++k) {
        const ShapeSpec& s = spec.shapes[k];
        const double r = footprint_radius(s);
        const std::string who =
            "shape " + std::to_string(k) + " (" + shape_kind_name(s.kind) + ")";
        const double limit = spec.plane_half_extent - r;
        if (limit < 0.0)
            throw data_error(who + ": footprint radius " + std::to_string(r) +
                             " exceeds the ground plane half extent");
        auto clash = [&](const Pose& p) {
            for (std::size_t j = 0; j < poses.size(); ++j)
                if (separation(p, r, poses[j], radii[j]) < spec.min_separation) return true;
            return false;
        };
        if (!s.auto_place) {
            const Pose p{s.translation.x, s.translation.y, s.z_rotation};
            if (std::abs(p.x) > limit || std::abs(p.y) > limit)
                throw data_error(who + ": explicit pose does not fit on the ground plane");
            if (clash(p))
                throw data_error(who + ": explicit pose violates min_separation " +
                                 std::to_string(spec.min_separation));
            poses.push_back(p);
        } else {
            bool placed = false;
            for (int attempt = 0; attempt < kPlacementAttempts && !placed; ++attempt) {
                Pose p;
                p.x = (2.0 * next_uniform(rng) - 1.0) * limit;
                p.y = (2.0 * next_uniform(rng) - 1.0) * limit;
                p.rot = 2.0 * kPi * next_uniform(rng);
                if (!clash(p)) {
                    poses.push_back(p);
                    placed = true;
                }
            }
            if (!placed)
                throw data_error(who + ": no placement satisfied min_separation " +
                                 std::to_string(spec.min_separation) + " after " +
                                 std::to_string(kPlacementAttempts) +
                                 " attempts; shrink the shapes, the separation, or the shape count");
        }
        radii.push_back(r);
    }
    return poses;
}

class SceneSampler {
  public:
    SceneSampler(const SceneSpec& spec, std::mt19937_64& rng) : spec_(spec), rng_(rng) {}

    // Noise draws happen for every point even at sigma 0, so clouds built
    // from the same seed stay aligned point-by-point across sigma values.
    void emit(const Vec3& p, const Rgb& color, int label) {
        Vec3 n{next_normal(rng_), next_normal(rng_), next_normal(rng_)};
        n = n * spec_.noise_sigma;
        const double limit = 4.0 * spec_.noise_sigma;
        const double norm = n.norm();
        if (norm > limit) n = n * (limit / norm);
        cloud_.points.push_back(p + n);
        cloud_.colors.push_back(color);
        cloud_.labels.push_back(label);
    }

    void sample_plane() {
        const double e = spec_.plane_half_extent;
        const auto n = static_cast<std::size_t>(
            std::llround(4.0 * e * e * spec_.plane_density));
        for (std::size_t i = 0; i < n; ++i) {
            const double x = (2.0 * next_uniform(rng_) - 1.0) * e;
            const double y = (2.0 * next_uniform(rng_) - 1.0) * e;
            emit({x, y, 0.0}, kPlaneColor, 0);
        }
    }

    void sample_shape(const ShapeSpec& s, const Pose& pose, int label) {
        const Rgb color = kPalette[static_cast<std::size_t>(label - 1) % kPalette.size()];
        const auto n = static_cast<std::size_t>(
            std::llround(shape_surface_area(s) * s.density));
        const double c = std::cos(pose.rot), sn = std::sin(pose.rot);
        for (std::size_t i = 0; i < n; ++i) {
            const Vec3 local = sample_local(s);
            emit({local.x * c - local.y * sn + pose.x, local.x * sn + local.y * c + pose.y,
                  local.z},
                 color, label);
        }
    }

    LabeledCloud take() { return std::move(cloud_); }

  private:
    Vec3 sample_local(const ShapeSpec& s) {
        switch (s.kind) {
            case ShapeKind::box:
            case ShapeKind::l_shape:
            case ShapeKind::t_shape: {
                const auto ps = prism_patches(s.kind, s.size);
                double total = 0.0;
                for (const Patch& p : ps) total += p.area;
                double pick = next_uniform(rng_) * total;
                std::size_t at = 0;
                while (at + 1 < ps.size() && pick >= ps[at].area) pick -= ps[at].area, ++at;
                const double u = next_uniform(rng_), v = next_uniform(rng_);
                return ps[at].origin + ps[at].u * u + ps[at].v * v;
            }
            case ShapeKind::cylinder: {
                const double r = s.size.x / 2.0, h = s.size.z;
                const double lateral = 2.0 * kPi * r * h, cap = kPi * r * r;
                double pick = next_uniform(rng_) * (lateral + 2.0 * cap);
                if (pick < lateral) {
                    const double theta = 2.0 * kPi * next_uniform(rng_);
                    const double z = h * next_uniform(rng_);
                    return {r * std::cos(theta), r * std::sin(theta), z};
                }
                const double z = pick < lateral + cap ? 0.0 : h;
                const double rr = r * std::sqrt(next_uniform(rng_));
                const double theta = 2.0 * kPi * next_uniform(rng_);
                return {rr * std::cos(theta), rr * std::sin(theta), z};
            }
            case ShapeKind::sphere: {
                const double r = s.size.x / 2.0;
                // uniform over the sphere: z uniform, angle uniform
                const double z = r * (2.0 * next_uniform(rng_) - 1.0);
                const double theta = 2.0 * kPi * next_uniform(rng_);
                const double rho = std::sqrt(std::max(0.0, r * r - z * z));
                return {rho * std::cos(theta), rho * std::sin(theta), z + r};
            }
        }
        throw std::logic_error("unknown shape kind");
    }

    const SceneSpec& spec_;
    std::mt19937_64& rng_;
    LabeledCloud cloud_;
};

nlohmann::json vec_to_json(const Vec3& v) { return nlohmann::json::array({v.x, v.y, v.z}); }

Vec3 vec_from_json(const nlohmann::json& j) {
    return {j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>()};
}

nlohmann::json scene_to_json(const SceneSpec& spec) {
    nlohmann::json shapes = nlohmann::json::array();
    for (const ShapeSpec& s : spec.shapes)
        shapes.push_back({{"kind", shape_kind_name(s.kind)},
                          {"size", vec_to_json(s.size)},
                          {"density", s.density},
                          {"auto_place", s.auto_place},
                          {"translation", vec_to_json(s.translation)},
                          {"z_rotation", s.z_rotation}});
    return {{"plane_half_extent", spec.plane_half_extent},
            {"plane_density", spec.plane_density},
            {"noise_sigma", spec.noise_sigma},
            {"min_separation", spec.min_separation},
            {"rng_seed", spec.rng_seed},
            {"shapes", shapes}};
}

SceneSpec scene_from_json(const nlohmann::json& j) {
    SceneSpec spec;
    spec.plane_half_extent = j.at("plane_half_extent").get<double>();
    spec.plane_density = j.at("plane_density").get<double>();
    spec.noise_sigma = j.at("noise_sigma").get<double>();
    spec.min_separation = j.at("min_separation").get<double>();
    spec.rng_seed = j.at("rng_seed").get<std::uint64_t>();
    for (const auto& js : j.at("shapes")) {
        ShapeSpec s;
        s.kind = shape_kind_from_name(js.at("kind").get<std::string>());
        s.size = vec_from_json(js.at("size"));
        s.density = js.at("density").get<double>();
        s.auto_place = js.at("auto_place").get<bool>();
        s.translation = vec_from_json(js.at("translation"));
        s.z_rotation = js.at("z_rotation").get<double>();
        spec.shapes.push_back(s);
    }
    return spec;
}

}  // namespace

std::string shape_kind_name(ShapeKind kind) {
    switch (kind) {
        case ShapeKind::box: return "box";
        case ShapeKind::cylinder: return "cylinder";
        case ShapeKind::sphere: return "sphere";
        case ShapeKind::l_shape: return "l_shape";
        case ShapeKind::t_shape: return "t_shape";
    }
    throw std::logic_error("unknown shape kind");
}

ShapeKind shape_kind_from_name(const std::string& name) {
    if (name == "box") return ShapeKind::box;
    if (name == "cylinder") return ShapeKind::cylinder;
    if (name == "sphere") return ShapeKind::sphere;
    if (name == "l_shape") return ShapeKind::l_shape;
    if (name == "t_shape") return ShapeKind::t_shape;
    throw std::invalid_argument("unknown shape kind: " + name);
}

double shape_surface_area(const ShapeSpec& shape) {
    switch (shape.kind) {
        case ShapeKind::box:
        case ShapeKind::l_shape:
        case ShapeKind::t_shape: {
            double total = 0.0;
            for (const Patch& p : prism_patches(shape.kind, shape.size)) total += p.area;
            return total;
        }
        case ShapeKind::cylinder: {
            const double r = shape.size.x / 2.0, h = shape.size.z;
            return 2.0 * kPi * r * h + 2.0 * kPi * r * r;
        }
        case ShapeKind::sphere: {
            const double r = shape.size.x / 2.0;
            return 4.0 * kPi * r * r;
        }
    }
    throw std::logic_error("unknown shape kind");
}

double footprint_radius(const ShapeSpec& shape) {
    switch (shape.kind) {
        case ShapeKind::cylinder:
        case ShapeKind::sphere:
            return shape.size.x / 2.0;
        default:
            // rotation-safe bound: half the footprint diagonal
            return std::hypot(shape.size.x / 2.0, shape.size.y / 2.0);
    }
}

LabeledCloud make_scene(const SceneSpec& spec) {
    check_scene(spec);
    std::mt19937_64 rng(spec.rng_seed);
    const std::vector<Pose> poses = place_shapes(spec, rng);
    SceneSampler sampler(spec, rng);
    sampler.sample_plane();
    for (std::size_t k = 0; k < spec.shapes.size(); ++k)
        sampler.sample_shape(spec.shapes[k], poses[k], static_cast<int>(k) + 1);
    return sampler.take();
}

Dataset make_dataset(const std::set<ShapeKind>& train_kinds, const std::set<ShapeKind>& test_kinds,
                     int scenes_per_split, std::uint64_t rng_seed,
                     const DatasetOptions& options) {
    if (train_kinds.empty() || test_kinds.empty())
        throw config_error("both kind sets must be non-empty");
    for (ShapeKind k : train_kinds)
        if (test_kinds.count(k))
            throw config_error("train and test shape kinds overlap on '" + shape_kind_name(k) +
                               "'; held-out shapes must be unseen during training");
    if (scenes_per_split < 1) throw config_error("scenes_per_split must be >= 1");
    if (options.min_objects < 0 || options.max_objects < options.min_objects)
        throw config_error("object count range is empty");
    if (!(options.min_size > 0.0) || options.max_size < options.min_size)
        throw config_error("size range is empty");

    std::mt19937_64 master(rng_seed);
    auto draw_size = [&] {
        return options.min_size + next_uniform(master) * (options.max_size - options.min_size);
    };
    auto build_split = [&](const std::set<ShapeKind>& kinds, std::vector<SceneSpec>& specs,
                           std::vector<LabeledCloud>& clouds) {
        const std::vector<ShapeKind> pool(kinds.begin(), kinds.end());
        for (int i = 0; i < scenes_per_split; ++i) {
            SceneSpec spec;
            spec.plane_half_extent = options.plane_half_extent;
            spec.plane_density = options.plane_density;
            spec.noise_sigma = options.noise_sigma;
            spec.min_separation = options.min_separation;
            spec.rng_seed = master();
            const int span = options.max_objects - options.min_objects + 1;
            const int count = options.min_objects +
                              static_cast<int>(next_below(master, static_cast<std::uint64_t>(span)));
            for (int s = 0; s < count; ++s) {
                ShapeSpec shape;
                shape.kind = pool[next_below(master, pool.size())];
                shape.density = options.shape_density;
                switch (shape.kind) {
                    case ShapeKind::cylinder: {
                        const double d = draw_size();
                        shape.size = {d, d, draw_size()};
                        break;
                    }
                    case ShapeKind::sphere: {
                        const double d = draw_size();
                        shape.size = {d, d, d};
                        break;
                    }
                    default:
                        shape.size = {draw_size(), draw_size(), draw_size()};
                }
                spec.shapes.push_back(shape);
            }
            specs.push_back(spec);
            clouds.push_back(make_scene(spec));
        }
    };

    Dataset ds;
    build_split(train_kinds, ds.train_specs, ds.train);
    build_split(test_kinds, ds.test_specs, ds.test);
    return ds;
}

void save_dataset(const Dataset& dataset, const std::string& out_dir) {
    namespace fs = std::filesystem;
    const fs::path root(out_dir);
    fs::create_directories(root / "train");
    fs::create_directories(root / "test");
    char name[32];
    for (std::size_t i = 0; i < dataset.train.size(); ++i) {
        std::snprintf(name, sizeof name, "%03zu.pcd", i);
        save_pcd(dataset.train[i], (root / "train" / name).string());
    }
    for (std::size_t i = 0; i < dataset.test.size(); ++i) {
        std::snprintf(name, sizeof name, "%03zu.pcd", i);
        save_pcd(dataset.test[i], (root / "test" / name).string());
    }
    nlohmann::json train = nlohmann::json::array(), test = nlohmann::json::array();
    for (const SceneSpec& s : dataset.train_specs) train.push_back(scene_to_json(s));
    for (const SceneSpec& s : dataset.test_specs) test.push_back(scene_to_json(s));
    std::ofstream out((root / "manifest.json").string());
    if (!out) throw data_error("cannot open for write: " + (root / "manifest.json").string());
    out << nlohmann::json{{"train", train}, {"test", test}}.dump(2) << '\n';
    if (!out) throw data_error("write failed: " + (root / "manifest.json").string());
}

std::pair<std::vector<SceneSpec>, std::vector<SceneSpec>> load_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw data_error("cannot open manifest: " + path);
    nlohmann::json j;
    try {
        in >> j;
        std::pair<std::vector<SceneSpec>, std::vector<SceneSpec>> splits;
        for (const auto& js : j.at("train")) splits.first.push_back(scene_from_json(js));
        for (const auto& js : j.at("test")) splits.second.push_back(scene_from_json(js));
        return splits;
    } catch (const nlohmann::json::exception& e) {
        throw data_error("manifest " + path + " is malformed: " + e.what());
    }
}

Dataset load_dataset(const std::string& dir) {
    namespace fs = std::filesystem;
    const fs::path root(dir);
    Dataset d;
    auto splits = load_manifest((root / "manifest.json").string());
    d.train_specs = std::move(splits.first);
    d.test_specs = std::move(splits.second);
    char name[32];
    for (std::size_t i = 0; i < d.train_specs.size(); ++i) {
        std::snprintf(name, sizeof name, "%03zu.pcd", i);
        d.train.push_back(load_pcd((root / "train" / name).string()));
    }
    for (std::size_t i = 0; i < d.test_specs.size(); ++i) {
        std::snprintf(name, sizeof name, "%03zu.pcd", i);
        d.test.push_back(load_pcd((root / "test" / name).string()));
    }
    return d;
}

}  // namespace objdisc
