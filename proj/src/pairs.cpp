#include "objdisc/pairs.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>

#include "objdisc/errors.hpp"
#include "objdisc/rng.hpp"

namespace objdisc {

namespace {

void check_beta(double beta) {
    if (!(beta > 0.0) || beta > 1.0)
        throw std::invalid_argument("beta must lie in (0, 1]");
}

// Keep `cap` elements, chosen by a seeded partial Fisher-Yates pass, then
// restore canonical order.
void subsample(std::vector<SupervoxelPair>& pairs, int cap, std::mt19937_64& rng) {
    if (cap < 0) throw std::invalid_argument("pair cap must be non-negative");
    if (pairs.size() <= static_cast<std::size_t>(cap)) return;
    for (std::size_t i = 0; i < static_cast<std::size_t>(cap); ++i) {
        const std::size_t j = i + next_below(rng, pairs.size() - i);
        std::swap(pairs[i], pairs[j]);
    }
    pairs.resize(cap);
    std::sort(pairs.begin(), pairs.end(),
              [](const SupervoxelPair& x, const SupervoxelPair& y) {
                  return std::tie(x.a, x.b) < std::tie(y.a, y.b);
              });
}

std::pair<SupervoxelRef, SupervoxelRef> norm_key(SupervoxelRef a, SupervoxelRef b) {
    if (b < a) std::swap(a, b);
    return {a, b};
}

}  // namespace

const char* provenance_name(PairProvenance p) {
    switch (p) {
        case PairProvenance::positive: return "positive";
        case PairProvenance::cross_object_center: return "cross_object_center";
        case PairProvenance::boundary_adjacent: return "boundary_adjacent";
        case PairProvenance::background: return "background";
    }
    return "unknown";
}

std::optional<int> assign_to_object(const Supervoxel& sv, const LabeledCloud& cloud, double beta) {
    check_beta(beta);
    if (!cloud.has_labels()) throw std::invalid_argument("assign_to_object: cloud has no labels");
    if (sv.point_indices.empty()) return std::nullopt;

    std::map<int, int> counts;  // object id -> points of sv on it
    for (int i : sv.point_indices) {
        const int label = cloud.labels[i];
        if (label > 0) ++counts[label];
    }
    int best_id = -1, best_count = 0;
    for (const auto& [id, cnt] : counts)
        if (cnt > best_count) {  // map order breaks ties toward the smaller id
            best_id = id;
            best_count = cnt;
        }
    if (best_id < 0) return std::nullopt;
    const double overlap =
        static_cast<double>(best_count) / static_cast<double>(sv.point_indices.size());
    if (overlap >= beta) return best_id;
    return std::nullopt;
}

bool is_background(const Supervoxel& sv, const LabeledCloud& cloud, double beta) {
    check_beta(beta);
    if (!cloud.has_labels()) throw std::invalid_argument("is_background: cloud has no labels");
    if (sv.point_indices.empty()) return false;
    int bg = 0;
    for (int i : sv.point_indices)
        if (cloud.labels[i] == 0) ++bg;
    return static_cast<double>(bg) / static_cast<double>(sv.point_indices.size()) >= beta;
}

PairSet generate_pairs(const std::vector<SegmentationResult>& scales, const LabeledCloud& cloud,
                       const AssignmentConfig& cfg, const PairCaps& caps, std::uint64_t rng_seed) {
    check_beta(cfg.beta);
    if (!cloud.has_labels()) throw std::invalid_argument("generate_pairs: cloud has no labels");
    if (caps.positives < 0 || caps.cross_object < 0 || caps.boundary < 0 || caps.background < 0)
        throw std::invalid_argument("pair caps must be non-negative");

    const int nscales = static_cast<int>(scales.size());
    std::vector<std::vector<std::optional<int>>> obj(nscales);
    std::vector<std::vector<char>> bg(nscales);
    for (int s = 0; s < nscales; ++s) {
        obj[s].resize(scales[s].supervoxels.size());
        bg[s].resize(scales[s].supervoxels.size(), 0);
        for (std::size_t i = 0; i < scales[s].supervoxels.size(); ++i) {
            obj[s][i] = assign_to_object(scales[s].supervoxels[i], cloud, cfg.beta);
            bg[s][i] = is_background(scales[s].supervoxels[i], cloud, cfg.beta) ? 1 : 0;
        }
    }

    // object id -> ids of assigned supervoxels, per scale
    std::vector<std::map<int, std::vector<int>>> by_object(nscales);
    for (int s = 0; s < nscales; ++s)
        for (std::size_t i = 0; i < obj[s].size(); ++i)
            if (obj[s][i]) by_object[s][*obj[s][i]].push_back(static_cast<int>(i));

    PairSet out;
    for (int s = 0; s < nscales; ++s)
        for (const auto& [object, ids] : by_object[s])
            for (std::size_t i = 0; i < ids.size(); ++i)
                for (std::size_t j = i + 1; j < ids.size(); ++j)
                    out.positives.push_back({{s, ids[i]}, {s, ids[j]}, +1, PairProvenance::positive});

    if (out.positives.empty()) {
        std::ostringstream msg;
        msg << "no positive pair derivable; every object is covered by fewer than 2 assigned "
               "supervoxels at every scale (object: max per-scale coverage):";
        std::map<int, int> max_cov;
        for (int s = 0; s < nscales; ++s)
            for (const auto& [object, ids] : by_object[s])
                max_cov[object] = std::max(max_cov[object], static_cast<int>(ids.size()));
        if (max_cov.empty()) msg << " none assigned";
        for (const auto& [object, cov] : max_cov) msg << ' ' << object << ':' << cov;
        throw data_error(msg.str());
    }

    // object centers from the labeled points themselves
    std::map<int, Vec3> center_sum;
    std::map<int, int> center_cnt;
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        const int label = cloud.labels[i];
        if (label > 0) {
            center_sum[label] = center_sum[label] + cloud.points[i];
            ++center_cnt[label];
        }
    }
    std::map<int, Vec3> center;
    for (const auto& [id, sum] : center_sum)
        center[id] = sum / static_cast<double>(center_cnt[id]);

    // "central" supervoxels: centroid within the object's median
    // centroid-to-center distance at that scale
    std::vector<std::map<int, std::vector<int>>> central(nscales);
    for (int s = 0; s < nscales; ++s)
        for (const auto& [object, ids] : by_object[s]) {
            std::vector<double> dist(ids.size());
            for (std::size_t i = 0; i < ids.size(); ++i)
                dist[i] = distance(scales[s].supervoxels[ids[i]].centroid, center.at(object));
            std::vector<double> sorted = dist;
            std::sort(sorted.begin(), sorted.end());
            const std::size_t n = sorted.size();
            const double median =
                n % 2 == 1 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
            for (std::size_t i = 0; i < ids.size(); ++i)
                if (dist[i] <= median) central[s][object].push_back(ids[i]);
        }

    std::set<std::pair<SupervoxelRef, SupervoxelRef>> seen;
    std::vector<SupervoxelPair> cross, boundary, background;

    for (int s = 0; s < nscales; ++s) {
        for (auto it_a = central[s].begin(); it_a != central[s].end(); ++it_a)
            for (auto it_b = std::next(it_a); it_b != central[s].end(); ++it_b)
                for (int ia : it_a->second)
                    for (int ib : it_b->second) {
                        const auto key = norm_key({s, ia}, {s, ib});
                        if (seen.insert(key).second)
                            cross.push_back({key.first, key.second, -1,
                                             PairProvenance::cross_object_center});
                    }
    }
    for (int s = 0; s < nscales; ++s) {
        for (const auto& [a, b] : scales[s].adjacency.edges) {
            const bool has_a = obj[s][a].has_value(), has_b = obj[s][b].has_value();
            const bool differing = (has_a && has_b && *obj[s][a] != *obj[s][b]) || (has_a != has_b);
            if (!differing) continue;
            const auto key = norm_key({s, a}, {s, b});
            if (seen.insert(key).second)
                boundary.push_back({key.first, key.second, -1, PairProvenance::boundary_adjacent});
        }
    }

    // background pairs may mix scales; sample lazily when the full set would
    // be larger than the cap
    std::vector<SupervoxelRef> bg_refs;
    for (int s = 0; s < nscales; ++s)
        for (std::size_t i = 0; i < bg[s].size(); ++i)
            if (bg[s][i]) bg_refs.push_back({s, static_cast<int>(i)});

    std::mt19937_64 rng(rng_seed);
    subsample(out.positives, caps.positives, rng);
    subsample(cross, caps.cross_object, rng);
    subsample(boundary, caps.boundary, rng);

    const std::uint64_t nbg = bg_refs.size();
    const std::uint64_t total_bg = nbg * (nbg - 1) / 2;
    if (nbg >= 2) {
        if (total_bg <= static_cast<std::uint64_t>(std::max(0, caps.background)) * 4) {
            for (std::size_t i = 0; i < bg_refs.size(); ++i)
                for (std::size_t j = i + 1; j < bg_refs.size(); ++j)
                    background.push_back(
                        {bg_refs[i], bg_refs[j], -1, PairProvenance::background});
            subsample(background, caps.background, rng);
        } else {
            std::set<std::uint64_t> chosen;
            while (background.size() < static_cast<std::size_t>(caps.background)) {
                const std::uint64_t t = next_below(rng, total_bg);
                if (!chosen.insert(t).second) continue;
                // invert the triangular enumeration t -> (i, j), i < j
                std::uint64_t i = 0, remaining = t;
                while (remaining >= nbg - 1 - i) {
                    remaining -= nbg - 1 - i;
                    ++i;
                }
                const std::uint64_t j = i + 1 + remaining;
                background.push_back({bg_refs[i], bg_refs[j], -1, PairProvenance::background});
            }
            std::sort(background.begin(), background.end(),
                      [](const SupervoxelPair& x, const SupervoxelPair& y) {
                          return std::tie(x.a, x.b) < std::tie(y.a, y.b);
                      });
        }
    }

    out.negatives = std::move(cross);
    out.negatives.insert(out.negatives.end(), boundary.begin(), boundary.end());
    out.negatives.insert(out.negatives.end(), background.begin(), background.end());
    return out;
}

void save_pairs(const PairSet& pairs, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw data_error("cannot open for write: " + path);
    auto write = [&](const SupervoxelPair& p) {
        out << p.a.scale << ' ' << p.a.id << ' ' << p.b.scale << ' ' << p.b.id << ' ' << p.y << ' '
            << provenance_name(p.provenance) << '\n';
    };
    for (const auto& p : pairs.positives) write(p);
    for (const auto& p : pairs.negatives) write(p);
    if (!out) throw data_error("write failed: " + path);
}

}  // namespace objdisc
