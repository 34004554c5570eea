#include "objdisc/discover.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "objdisc/errors.hpp"
#include "objdisc/voxelgrid.hpp"

namespace objdisc {

namespace {

double row_distance2(const EmbeddingRow& a, const EmbeddingRow& b) {
    double s = 0.0;
    for (std::size_t k = 0; k < a.embedding.size(); ++k) {
        const double d = a.embedding[k] - b.embedding[k];
        s += d * d;
    }
    return s;
}

void check_dimensions(const EmbeddingTable& table) {
    for (const auto& row : table.rows)
        if (row.embedding.size() != table.rows.front().embedding.size())
            throw std::invalid_argument("embedding rows must share one dimension");
}

}  // namespace

EmbeddingTable embed_all(const NetworkParams& params, const LabeledCloud& cloud,
                         const std::vector<SegmentationResult>& scales, int padding) {
    EmbeddingTable table;
    for (std::size_t s = 0; s < scales.size(); ++s)
        for (const Supervoxel& sv : scales[s].supervoxels) {
            const OccupancyGrid grid = render_occupancy(cloud, sv, params.config.side, padding);
            table.rows.push_back(
                {static_cast<int>(s), sv.id, forward_embed(params, grid)});
        }
    return table;
}

EmbeddingTable embed_all_dvc(const DvcParams& params, const LabeledCloud& cloud,
                             const std::vector<SegmentationResult>& scales, int padding) {
    EmbeddingTable table;
    for (std::size_t s = 0; s < scales.size(); ++s)
        for (const Supervoxel& sv : scales[s].supervoxels) {
            const OccupancyGrid grid =
                render_occupancy(cloud, sv, params.config.base.side, padding);
            table.rows.push_back(
                {static_cast<int>(s), sv.id, dvc_features(params, grid)});
        }
    return table;
}

ClusterLabeling dbscan(const EmbeddingTable& table, double eps, int min_pts) {
    if (!(eps > 0.0)) throw std::invalid_argument("eps must be positive");
    if (min_pts < 2) throw std::invalid_argument("min_pts must be at least 2");
    ClusterLabeling out;
    const std::size_t n = table.size();
    out.cluster_of_row.assign(n, ClusterLabeling::kNoise);
    if (n == 0) return out;
    check_dimensions(table);

    const double eps2 = eps * eps;
    auto neighbors_of = [&](std::size_t i) {
        std::vector<std::size_t> nb;
        for (std::size_t j = 0; j < n; ++j)
            if (row_distance2(table.rows[i], table.rows[j]) <= eps2) nb.push_back(j);
        return nb;  // ascending row order, self included
    };

    std::vector<char> core(n, 0);
    std::vector<std::vector<std::size_t>> nbs(n);
    for (std::size_t i = 0; i < n; ++i) {
        nbs[i] = neighbors_of(i);
        core[i] = nbs[i].size() >= static_cast<std::size_t>(min_pts) ? 1 : 0;
    }

    std::vector<char> visited(n, 0);
    for (std::size_t i = 0; i < n; ++i) {
        if (visited[i] || !core[i]) continue;
        const int cluster = out.cluster_count++;
        std::deque<std::size_t> queue = {i};
        visited[i] = 1;
        out.cluster_of_row[i] = cluster;
        while (!queue.empty()) {
            const std::size_t p = queue.front();
            queue.pop_front();
            if (!core[p]) continue;  // border rows do not expand
            for (std::size_t q : nbs[p]) {
                if (visited[q]) continue;
                visited[q] = 1;
                out.cluster_of_row[q] = cluster;  // first cluster to reach q keeps it
                queue.push_back(q);
            }
        }
    }
    return out;
}

EpsChoice choose_eps(const EmbeddingTable& table, double quantile) {
    if (quantile < 0.0 || quantile > 1.0)
        throw std::invalid_argument("quantile must lie in [0, 1]");
    const std::size_t n = table.size();
    if (n < 2)
        throw std::invalid_argument("eps selection needs at least 2 rows; got " +
                                    std::to_string(n));
    check_dimensions(table);

    std::vector<double> nn(n);
    for (std::size_t i = 0; i < n; ++i) {
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < n; ++j)
            if (j != i) best = std::min(best, row_distance2(table.rows[i], table.rows[j]));
        nn[i] = std::sqrt(best);
    }
    std::sort(nn.begin(), nn.end());
    const double rank = std::ceil(quantile * static_cast<double>(n)) - 1.0;
    const std::size_t idx = rank < 0.0 ? 0 : static_cast<std::size_t>(rank);
    EpsChoice choice;
    choice.eps = nn[idx];
    choice.degenerate = choice.eps == 0.0;
    return choice;
}

DiscoveryResult clusters_to_objects(const EmbeddingTable& table, const ClusterLabeling& labeling,
                                    const std::vector<SegmentationResult>& scales,
                                    const LabeledCloud& cloud) {
    if (labeling.cluster_of_row.size() != table.size())
        throw std::invalid_argument("labeling does not cover the embedding table");

    std::map<std::pair<int, int>, int> cluster_of_sv;  // (scale, sv id) -> cluster
    for (std::size_t r = 0; r < table.size(); ++r)
        cluster_of_sv[{table.rows[r].scale, table.rows[r].sv_id}] = labeling.cluster_of_row[r];

    DiscoveryResult res;
    const std::size_t npts = cloud.size();
    res.cluster_of_point.assign(npts, ClusterLabeling::kNoise);

    std::vector<int> raw(npts, ClusterLabeling::kNoise);
    for (std::size_t p = 0; p < npts; ++p) {
        // one vote per scale: the cluster of the supervoxel containing p
        std::map<int, int> votes;                 // cluster -> count
        std::map<int, double> finest;             // cluster -> finest voting resolution
        for (std::size_t s = 0; s < scales.size(); ++s) {
            if (p >= scales[s].supervoxel_of_point.size()) continue;
            const int sv = scales[s].supervoxel_of_point[p];
            if (sv < 0) continue;
            const auto it = cluster_of_sv.find({static_cast<int>(s), sv});
            if (it == cluster_of_sv.end())
                throw std::invalid_argument("segmentation references a supervoxel missing from "
                                            "the embedding table");
            if (it->second == ClusterLabeling::kNoise) continue;
            ++votes[it->second];
            const double r = scales[s].seed_resolution;
            const auto f = finest.find(it->second);
            if (f == finest.end() || r < f->second) finest[it->second] = r;
        }
        if (votes.empty()) continue;
        int best = -1, best_count = 0;
        double best_res = std::numeric_limits<double>::infinity();
        for (const auto& [cluster, count] : votes) {
            const double r = finest.at(cluster);
            if (count > best_count || (count == best_count && r < best_res)) {
                best = cluster;
                best_count = count;
                best_res = r;
            }
        }
        raw[p] = best;
    }

    // renumber by descending point count, ascending raw id on ties
    std::map<int, std::size_t> counts;
    for (int c : raw)
        if (c != ClusterLabeling::kNoise) ++counts[c];
    std::vector<std::pair<int, std::size_t>> order(counts.begin(), counts.end());
    std::sort(order.begin(), order.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    std::map<int, int> new_id;
    for (std::size_t k = 0; k < order.size(); ++k) new_id[order[k].first] = static_cast<int>(k) + 1;

    res.object_of_point.assign(npts, 0);
    res.object_count = static_cast<int>(order.size());
    res.object_sizes.clear();
    for (const auto& [raw_id, count] : order) res.object_sizes.push_back(count);
    for (std::size_t p = 0; p < npts; ++p) {
        res.cluster_of_point[p] = raw[p];
        if (raw[p] != ClusterLabeling::kNoise) res.object_of_point[p] = new_id.at(raw[p]);
    }
    return res;
}

void save_discovery(const DiscoveryResult& result, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw data_error("cannot open for write: " + path);
    for (std::size_t p = 0; p < result.object_of_point.size(); ++p)
        out << p << ' ' << result.object_of_point[p] << '\n';
    if (!out) throw data_error("write failed: " + path);
}

DiscoveryResult load_discovery(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw data_error("cannot open: " + path);
    DiscoveryResult res;
    std::string line;
    std::size_t line_no = 0;
    std::map<int, std::size_t> sizes;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::istringstream fields(line);
        long long index = -1;
        long long id = -1;
        if (!(fields >> index >> id) || index != static_cast<long long>(res.object_of_point.size()) ||
            id < 0)
            throw data_error("malformed assignment at line " + std::to_string(line_no) + " of " +
                             path);
        res.object_of_point.push_back(static_cast<int>(id));
        if (id > 0) ++sizes[static_cast<int>(id)];
        if (id > res.object_count) res.object_count = static_cast<int>(id);
    }
    for (int id = 1; id <= res.object_count; ++id) res.object_sizes.push_back(sizes[id]);
    return res;
}

std::string discovery_summary(const DiscoveryResult& result) {
    nlohmann::json j;
    j["object_count"] = result.object_count;
    j["object_sizes"] = result.object_sizes;
    std::size_t background = 0;
    for (int id : result.object_of_point)
        if (id == 0) ++background;
    j["background_points"] = background;
    j["total_points"] = result.object_of_point.size();
    return j.dump(2);
}

}  // namespace objdisc
