#include "objdisc/voxelgrid.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "objdisc/errors.hpp"

namespace objdisc {

std::size_t OccupancyGrid::occupied_count() const {
    return static_cast<std::size_t>(std::count(values.begin(), values.end(), std::uint8_t{1}));
}

OccupancyGrid render_occupancy(const LabeledCloud& cloud, const Supervoxel& sv, int side,
                               int padding) {
    if (side < 8) throw std::invalid_argument("render_occupancy: side must be >= 8");
    if (padding < 0 || 2 * padding >= side)
        throw std::invalid_argument("render_occupancy: padding must leave a positive interior");
    if (sv.point_indices.empty())
        throw std::invalid_argument("render_occupancy: empty supervoxel");

    OccupancyGrid grid;
    grid.side = side;
    grid.values.assign(static_cast<std::size_t>(side) * side * side, 0);

    const Vec3 c = sv.centroid;
    double half = 0.0;
    for (int i : sv.point_indices) {
        const Vec3 u = cloud.points[i] - c;
        half = std::max({half, std::abs(u.x), std::abs(u.y), std::abs(u.z)});
    }

    const int inner = side - 2 * padding;
    const int center = side / 2;
    auto cell_of = [&](double u) {
        if (half == 0.0) return center;  // zero-extent supervoxel
        const double t = (u + half) / (2.0 * half);
        int cell = padding + static_cast<int>(std::floor(t * inner));
        return std::clamp(cell, padding, padding + inner - 1);
    };
    for (int i : sv.point_indices) {
        const Vec3 u = cloud.points[i] - c;
        const int x = cell_of(u.x), y = cell_of(u.y), z = cell_of(u.z);
        grid.values[static_cast<std::size_t>(x) +
                    static_cast<std::size_t>(side) * (y + static_cast<std::size_t>(side) * z)] = 1;
    }
    return grid;
}

void save_grid(const OccupancyGrid& grid, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw data_error("cannot open for write: " + path);
    out << grid.side << '\n';
    std::size_t idx = 0;
    for (int z = 0; z < grid.side; ++z) {
        for (int y = 0; y < grid.side; ++y) {
            for (int x = 0; x < grid.side; ++x) {
                if (x > 0) out << ' ';
                out << static_cast<int>(grid.values[idx++]);
            }
            out << '\n';
        }
    }
    if (!out) throw data_error("write failed: " + path);
}

OccupancyGrid load_grid(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw data_error("cannot open: " + path);
    OccupancyGrid grid;
    if (!(in >> grid.side) || grid.side < 1) throw data_error("bad grid header: " + path);
    const std::size_t n = static_cast<std::size_t>(grid.side) * grid.side * grid.side;
    grid.values.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        int v;
        if (!(in >> v) || (v != 0 && v != 1)) throw data_error("bad grid value: " + path);
        grid.values[i] = static_cast<std::uint8_t>(v);
    }
    return grid;
}

}  // namespace objdisc
