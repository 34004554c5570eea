#ifndef OBJDISC_VOXELGRID_HPP
#define OBJDISC_VOXELGRID_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "objdisc/cloud.hpp"
#include "objdisc/supervoxel.hpp"

namespace objdisc {

// Fixed-size binary occupancy grid, x-fastest storage order.
struct OccupancyGrid {
    int side = 0;
    std::vector<std::uint8_t> values;  // side^3 entries, 0 or 1

    std::uint8_t at(int x, int y, int z) const {
        return values[static_cast<std::size_t>(x) + static_cast<std::size_t>(side) * (y + static_cast<std::size_t>(side) * z)];
    }
    std::size_t occupied_count() const;
};

// Renders only the supervoxel's own points into a side^3 grid centered at the
// supervoxel centroid. The bounding cube (longest centroid-relative extent)
// maps onto side - 2*padding cells, so aspect ratio is preserved and the
// mapping is translation-invariant and uniform-scale covariant.
OccupancyGrid render_occupancy(const LabeledCloud& cloud, const Supervoxel& sv, int side = 32,
                               int padding = 2);

// Debug dump: header line `side`, then 0/1 values space-separated, x-fastest.
void save_grid(const OccupancyGrid& grid, const std::string& path);
OccupancyGrid load_grid(const std::string& path);

}  // namespace objdisc

#endif
