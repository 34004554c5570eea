#ifndef OBJDISC_KDTREE_HPP
#define OBJDISC_KDTREE_HPP

#include <utility>
#include <vector>

#include "objdisc/cloud.hpp"

namespace objdisc {

// Static kd-tree over a snapshot of the points. Queries are pure and safe to
// run from concurrent callers once built.
class KdTree {
public:
    explicit KdTree(std::vector<Vec3> points);

    // Exactly min(k, n) results, ascending distance, ties by ascending index.
    std::vector<std::pair<int, double>> knn(const Vec3& query, int k) const;

    // All indices within the closed ball of the given radius, ascending index.
    std::vector<int> radius(const Vec3& query, double r) const;

    std::size_t size() const { return points_.size(); }

private:
    struct Node {
        int begin = 0, end = 0;   // range in order_
        int axis = -1;            // -1 for leaf
        double split = 0.0;
        int left = -1, right = -1;
    };

    int build(int begin, int end);

    std::vector<Vec3> points_;
    std::vector<int> order_;
    std::vector<Node> nodes_;
    int root_ = -1;
};

// Convenience one-shot queries matching the KdTree contracts. Build an
// explicit KdTree when issuing many queries against the same cloud.
std::vector<std::pair<int, double>> knn(const LabeledCloud& cloud, const Vec3& query, int k);
std::vector<int> radius_neighbors(const LabeledCloud& cloud, const Vec3& query, double radius);

}  // namespace objdisc

#endif
