#include "objdisc/supervoxel.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <queue>
#include <sstream>
#include <stdexcept>
#include <tuple>
#include <unordered_map>

#include "objdisc/errors.hpp"
#include "objdisc/kdtree.hpp"

namespace objdisc {

namespace {

// Deterministic sign convention: face the origin (n . p <= 0); on exact
// ties prefer +z, then +y, then +x.
Vec3 orient_toward_origin(Vec3 n, const Vec3& p) {
    const double d = n.dot(p);
    if (d > 0.0) return n * -1.0;
    if (d == 0.0) {
        if (n.z < 0.0) return n * -1.0;
        if (n.z == 0.0) {
            if (n.y < 0.0) return n * -1.0;
            if (n.y == 0.0 && n.x < 0.0) return n * -1.0;
        }
    }
    return n;
}

Vec3 normalized_or_z(const Vec3& v) {
    const double n = v.norm();
    if (n < 1e-12) return {0.0, 0.0, 1.0};
    return v / n;
}

}  // namespace

NormalEstimate estimate_normals(const LabeledCloud& cloud, int k) {
    if (k < 3) throw std::invalid_argument("estimate_normals: k must be >= 3");
    if (static_cast<int>(cloud.size()) < k)
        throw std::invalid_argument("estimate_normals: cloud smaller than k");

    KdTree tree(cloud.points);
    NormalEstimate out;
    out.normals.resize(cloud.size());
    out.degenerate.assign(cloud.size(), 0);

    for (std::size_t i = 0; i < cloud.size(); ++i) {
        const auto nn = tree.knn(cloud.points[i], k);
        Vec3 mean{0.0, 0.0, 0.0};
        for (const auto& [idx, dist] : nn) mean = mean + cloud.points[idx];
        mean = mean / static_cast<double>(nn.size());

        Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
        for (const auto& [idx, dist] : nn) {
            const Vec3 d = cloud.points[idx] - mean;
            const Eigen::Vector3d v(d.x, d.y, d.z);
            cov += v * v.transpose();
        }
        cov /= static_cast<double>(nn.size());

        Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> solver(cov);
        const Eigen::Vector3d evals = solver.eigenvalues();  // ascending
        const Eigen::Vector3d ev = solver.eigenvectors().col(0);

        // Rank < 2: the neighborhood is a point or a line, so the plane fit
        // is meaningless.
        const bool degenerate = evals[2] < 1e-18 || evals[1] <= 1e-7 * evals[2];
        if (degenerate) {
            out.normals[i] = {0.0, 0.0, 1.0};
            out.degenerate[i] = 1;
            continue;
        }
        Vec3 n{ev[0], ev[1], ev[2]};
        n = normalized_or_z(n);
        out.normals[i] = orient_toward_origin(n, cloud.points[i]);
    }
    return out;
}

namespace {

struct VoxelFeature {
    Vec3 pos;
    Vec3 normal{0.0, 0.0, 1.0};
    Vec3 color{0.0, 0.0, 0.0};  // rgb scaled to [0,1]
};

struct FeatureParams {
    double w_color = 0.0;
    double w_spatial = 0.0;
    double w_normal = 0.0;
    double spatial_norm = 1.0;  // 3 * seed_resolution^2
};

double feature_distance(const VoxelFeature& a, const VoxelFeature& b, const FeatureParams& fp) {
    double d2 = 0.0;
    if (fp.w_color > 0.0) d2 += fp.w_color * squared_distance(a.color, b.color);
    d2 += fp.w_spatial * squared_distance(a.pos, b.pos) / fp.spatial_norm;
    if (fp.w_normal > 0.0) {
        const double dn = 1.0 - std::abs(a.normal.dot(b.normal));
        d2 += fp.w_normal * dn * dn;
    }
    return std::sqrt(d2);
}

struct KeyHash {
    std::size_t operator()(const VoxelKey& k) const {
        std::size_t h = std::hash<std::int64_t>()(k.x);
        h = h * 1000003u ^ std::hash<std::int64_t>()(k.y);
        h = h * 1000003u ^ std::hash<std::int64_t>()(k.z);
        return h;
    }
};

NormalEstimate normals_with_fallback(const LabeledCloud& cloud, int k) {
    const int n = static_cast<int>(cloud.size());
    if (n >= 3) return estimate_normals(cloud, std::min(k, n));
    NormalEstimate est;
    est.normals.assign(cloud.size(), Vec3{0.0, 0.0, 1.0});
    est.degenerate.assign(cloud.size(), 1);
    return est;
}

}  // namespace

SegmentationResult vccs_segment(const LabeledCloud& cloud, double seed_resolution,
                                const VccsParams& params, const NormalEstimate* normals) {
    if (!(seed_resolution > 0.0))
        throw std::invalid_argument("vccs_segment: seed_resolution must be positive");
    double voxel_res = params.voxel_resolution;
    if (voxel_res <= 0.0) voxel_res = std::max(seed_resolution / 8.0, 0.005);
    if (!(voxel_res < seed_resolution))
        throw std::invalid_argument("vccs_segment: voxel_resolution must be below seed_resolution");

    SegmentationResult result;
    result.seed_resolution = seed_resolution;
    if (cloud.empty()) return result;

    NormalEstimate local_normals;
    if (normals == nullptr || normals->normals.size() != cloud.size()) {
        local_normals = normals_with_fallback(cloud, params.normal_k);
        normals = &local_normals;
    }

    // Occupied-voxel arrays in lexicographic key order.
    const VoxelGrid grid = voxelize(cloud, voxel_res);
    const int nvox = static_cast<int>(grid.cells.size());
    std::vector<VoxelKey> keys;
    std::vector<const std::vector<int>*> points_of;
    keys.reserve(nvox);
    points_of.reserve(nvox);
    std::unordered_map<VoxelKey, int, KeyHash> index_of;
    index_of.reserve(nvox * 2);
    for (const auto& [key, pts] : grid.cells) {
        index_of.emplace(key, static_cast<int>(keys.size()));
        keys.push_back(key);
        points_of.push_back(&pts);
    }

    const bool use_color = cloud.has_colors();
    std::vector<VoxelFeature> feat(nvox);
    std::vector<Vec3> centers(nvox);
    std::vector<int> voxel_of_point(cloud.size(), -1);
    for (int v = 0; v < nvox; ++v) {
        Vec3 pos{0.0, 0.0, 0.0}, nrm{0.0, 0.0, 0.0}, col{0.0, 0.0, 0.0};
        for (int pi : *points_of[v]) {
            voxel_of_point[pi] = v;
            pos = pos + cloud.points[pi];
            nrm = nrm + normals->normals[pi];
            if (use_color) {
                const Rgb& c = cloud.colors[pi];
                col = col + Vec3{c.r / 255.0, c.g / 255.0, c.b / 255.0};
            }
        }
        const double cnt = static_cast<double>(points_of[v]->size());
        feat[v].pos = pos / cnt;
        feat[v].normal = normalized_or_z(nrm);
        if (use_color) feat[v].color = col / cnt;
        centers[v] = Vec3{(keys[v].x + 0.5) * voxel_res, (keys[v].y + 0.5) * voxel_res,
                          (keys[v].z + 0.5) * voxel_res};
    }

    std::vector<std::vector<int>> neighbors(nvox);
    for (int v = 0; v < nvox; ++v) {
        for (int dx = -1; dx <= 1; ++dx)
            for (int dy = -1; dy <= 1; ++dy)
                for (int dz = -1; dz <= 1; ++dz) {
                    if (dx == 0 && dy == 0 && dz == 0) continue;
                    const VoxelKey nb{keys[v].x + dx, keys[v].y + dy, keys[v].z + dz};
                    auto it = index_of.find(nb);
                    if (it != index_of.end()) neighbors[v].push_back(it->second);
                }
        std::sort(neighbors[v].begin(), neighbors[v].end());
    }

    // Grid seeding at pitch seed_resolution: within every occupied seeding
    // cell, the voxel closest to the cell center becomes a seed candidate.
    std::map<VoxelKey, std::pair<double, int>> cell_best;  // cell -> (d2, voxel)
    for (int v = 0; v < nvox; ++v) {
        const VoxelKey cell{static_cast<std::int64_t>(std::floor(centers[v].x / seed_resolution)),
                            static_cast<std::int64_t>(std::floor(centers[v].y / seed_resolution)),
                            static_cast<std::int64_t>(std::floor(centers[v].z / seed_resolution))};
        const Vec3 cc{(cell.x + 0.5) * seed_resolution, (cell.y + 0.5) * seed_resolution,
                      (cell.z + 0.5) * seed_resolution};
        const double d2 = squared_distance(centers[v], cc);
        auto it = cell_best.find(cell);
        if (it == cell_best.end() || d2 < it->second.first)
            cell_best[cell] = {d2, v};  // ties keep the earlier (lexicographic) voxel
    }

    // Isolated-seed filter: a seed needs at least 4 occupied voxels within
    // seed_resolution/2 of its center.
    KdTree center_tree(centers);
    std::vector<int> seeds;
    for (const auto& [cell, best] : cell_best) {
        const int v = best.second;
        if (static_cast<int>(center_tree.radius(centers[v], seed_resolution / 2.0).size()) >= 4)
            seeds.push_back(v);
    }

    // Connected components of the occupied-voxel graph; any component left
    // without a seed gets one fallback seed (its most central voxel) so no
    // point is ever dropped.
    std::vector<int> comp(nvox, -1);
    int ncomp = 0;
    {
        std::vector<int> stack;
        for (int v = 0; v < nvox; ++v) {
            if (comp[v] != -1) continue;
            comp[v] = ncomp;
            stack.push_back(v);
            while (!stack.empty()) {
                const int u = stack.back();
                stack.pop_back();
                for (int nb : neighbors[u])
                    if (comp[nb] == -1) {
                        comp[nb] = ncomp;
                        stack.push_back(nb);
                    }
            }
            ++ncomp;
        }
    }
    {
        std::vector<char> has_seed(ncomp, 0);
        for (int s : seeds) has_seed[comp[s]] = 1;
        std::vector<Vec3> csum(ncomp, Vec3{0.0, 0.0, 0.0});
        std::vector<int> ccnt(ncomp, 0);
        for (int v = 0; v < nvox; ++v) {
            csum[comp[v]] = csum[comp[v]] + centers[v];
            ++ccnt[comp[v]];
        }
        std::vector<std::pair<double, int>> fallback(ncomp, {0.0, -1});  // (d2, voxel)
        for (int v = 0; v < nvox; ++v) {
            const int c = comp[v];
            if (has_seed[c]) continue;
            const double d2 = squared_distance(centers[v], csum[c] / static_cast<double>(ccnt[c]));
            if (fallback[c].second == -1 || d2 < fallback[c].first) fallback[c] = {d2, v};
        }
        for (int c = 0; c < ncomp; ++c)
            if (!has_seed[c] && fallback[c].second != -1) seeds.push_back(fallback[c].second);
    }
    if (seeds.empty())
        throw data_error("vccs_segment: all seeds filtered; use a smaller seed_resolution");

    FeatureParams fp;
    fp.w_color = use_color ? params.weights.color : 0.0;
    fp.w_spatial = params.weights.spatial;
    fp.w_normal = params.weights.normal;
    fp.spatial_norm = 3.0 * seed_resolution * seed_resolution;

    const int nseed = static_cast<int>(seeds.size());
    std::vector<VoxelFeature> seed_feat(nseed);
    for (int s = 0; s < nseed; ++s) seed_feat[s] = feat[seeds[s]];
    std::vector<char> live(nseed, 1);

    // Competitive expansion rounds. Each round regrows every region from its
    // seed voxel; a voxel joins the region reaching it at minimum feature
    // distance (ties: lower seed rank, then lower voxel index). Connectivity
    // holds by construction because regions only grow across adjacent voxels.
    using Entry = std::tuple<double, int, int>;  // (distance, seed rank, voxel)
    std::vector<int> assign(nvox, -1), prev_assign;
    for (int round = 0; round < std::max(1, params.max_rounds); ++round) {
        std::fill(assign.begin(), assign.end(), -1);
        std::priority_queue<Entry, std::vector<Entry>, std::greater<Entry>> heap;
        for (int s = 0; s < nseed; ++s)
            if (live[s]) heap.emplace(feature_distance(seed_feat[s], feat[seeds[s]], fp), s, seeds[s]);
        while (!heap.empty()) {
            const auto [d, s, v] = heap.top();
            heap.pop();
            if (assign[v] != -1) continue;
            assign[v] = s;
            for (int nb : neighbors[v])
                if (assign[nb] == -1) heap.emplace(feature_distance(seed_feat[s], feat[nb], fp), s, nb);
        }
        if (assign == prev_assign) break;
        prev_assign = assign;

        std::vector<Vec3> pos_sum(nseed, Vec3{0.0, 0.0, 0.0}), nrm_sum(nseed, Vec3{0.0, 0.0, 0.0}),
            col_sum(nseed, Vec3{0.0, 0.0, 0.0});
        std::vector<int> cnt(nseed, 0);
        for (int v = 0; v < nvox; ++v) {
            const int s = assign[v];
            if (s < 0) continue;
            for (int pi : *points_of[v]) {
                pos_sum[s] = pos_sum[s] + cloud.points[pi];
                nrm_sum[s] = nrm_sum[s] + normals->normals[pi];
                if (use_color) {
                    const Rgb& c = cloud.colors[pi];
                    col_sum[s] = col_sum[s] + Vec3{c.r / 255.0, c.g / 255.0, c.b / 255.0};
                }
            }
            cnt[s] += static_cast<int>(points_of[v]->size());
        }
        for (int s = 0; s < nseed; ++s) {
            if (cnt[s] == 0) {
                live[s] = 0;  // lost every voxel; retire the seed
                continue;
            }
            const double n = static_cast<double>(cnt[s]);
            seed_feat[s].pos = pos_sum[s] / n;
            seed_feat[s].normal = normalized_or_z(nrm_sum[s]);
            if (use_color) seed_feat[s].color = col_sum[s] / n;
        }
    }

    // Renumber surviving regions contiguously in seed-rank order.
    std::vector<int> final_id(nseed, -1);
    {
        std::vector<int> cnt(nseed, 0);
        for (int v = 0; v < nvox; ++v) ++cnt[assign[v]];
        int next = 0;
        for (int s = 0; s < nseed; ++s)
            if (cnt[s] > 0) final_id[s] = next++;
        result.supervoxels.resize(next);
    }

    result.supervoxel_of_point.assign(cloud.size(), -1);
    for (std::size_t pi = 0; pi < cloud.size(); ++pi)
        result.supervoxel_of_point[pi] = final_id[assign[voxel_of_point[pi]]];
    for (std::size_t pi = 0; pi < cloud.size(); ++pi)
        result.supervoxels[result.supervoxel_of_point[pi]].point_indices.push_back(
            static_cast<int>(pi));

    for (std::size_t id = 0; id < result.supervoxels.size(); ++id) {
        Supervoxel& sv = result.supervoxels[id];
        sv.id = static_cast<int>(id);
        sv.seed_resolution = seed_resolution;
        Vec3 pos{0.0, 0.0, 0.0}, nrm{0.0, 0.0, 0.0}, col{0.0, 0.0, 0.0};
        for (int pi : sv.point_indices) {
            pos = pos + cloud.points[pi];
            nrm = nrm + normals->normals[pi];
            if (use_color) {
                const Rgb& c = cloud.colors[pi];
                col = col + Vec3{static_cast<double>(c.r), static_cast<double>(c.g),
                                 static_cast<double>(c.b)};
            }
        }
        const double n = static_cast<double>(sv.point_indices.size());
        sv.centroid = pos / n;
        sv.mean_normal = normalized_or_z(nrm);
        if (use_color)
            sv.mean_color = Rgb{static_cast<std::uint8_t>(std::lround(col.x / n)),
                                static_cast<std::uint8_t>(std::lround(col.y / n)),
                                static_cast<std::uint8_t>(std::lround(col.z / n))};
    }

    for (int v = 0; v < nvox; ++v) {
        const int a = final_id[assign[v]];
        for (int nb : neighbors[v]) {
            if (nb <= v) continue;
            const int b = final_id[assign[nb]];
            if (a != b) result.adjacency.edges.emplace(std::min(a, b), std::max(a, b));
        }
    }
    return result;
}

std::vector<SegmentationResult> multi_scale_segment(const LabeledCloud& cloud,
                                                    const std::vector<double>& seed_resolutions,
                                                    const VccsParams& params) {
    if (seed_resolutions.empty())
        throw std::invalid_argument("multi_scale_segment: no seed resolutions given");
    for (std::size_t i = 0; i < seed_resolutions.size(); ++i) {
        if (!(seed_resolutions[i] > 0.0))
            throw std::invalid_argument("multi_scale_segment: seed resolutions must be positive");
        for (std::size_t j = i + 1; j < seed_resolutions.size(); ++j)
            if (seed_resolutions[i] == seed_resolutions[j])
                throw std::invalid_argument("multi_scale_segment: seed resolutions must be distinct");
    }

    const NormalEstimate shared = normals_with_fallback(cloud, params.normal_k);
    std::vector<SegmentationResult> out;
    out.reserve(seed_resolutions.size());
    for (double res : seed_resolutions) {
        try {
            out.push_back(vccs_segment(cloud, res, params, &shared));
        } catch (const data_error& e) {
            std::ostringstream msg;
            msg << "scale " << res << ": " << e.what();
            throw data_error(msg.str());
        } catch (const std::invalid_argument& e) {
            std::ostringstream msg;
            msg << "scale " << res << ": " << e.what();
            throw std::invalid_argument(msg.str());
        }
    }
    return out;
}

void save_segmentation(const std::vector<SegmentationResult>& scales, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw data_error("cannot open for write: " + path);
    for (std::size_t si = 0; si < scales.size(); ++si) {
        const auto& sp = scales[si].supervoxel_of_point;
        for (std::size_t pi = 0; pi < sp.size(); ++pi)
            out << pi << ' ' << si << ' ' << sp[pi] << '\n';
    }
    if (!out) throw data_error("write failed: " + path);
}

}  // namespace objdisc
