#include "objdisc/kdtree.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <queue>
#include <stdexcept>

namespace objdisc {

namespace {
constexpr int kLeafSize = 16;

double axis_value(const Vec3& p, int axis) { return axis == 0 ? p.x : axis == 1 ? p.y : p.z; }
}  // namespace

KdTree::KdTree(std::vector<Vec3> points) : points_(std::move(points)) {
    order_.resize(points_.size());
    std::iota(order_.begin(), order_.end(), 0);
    if (!points_.empty()) root_ = build(0, static_cast<int>(points_.size()));
}

int KdTree::build(int begin, int end) {
    Node node;
    node.begin = begin;
    node.end = end;
    const int id = static_cast<int>(nodes_.size());
    nodes_.push_back(node);

    if (end - begin <= kLeafSize) return id;

    Vec3 lo = points_[order_[begin]], hi = lo;
    for (int i = begin + 1; i < end; ++i) {
        const Vec3& p = points_[order_[i]];
        lo = {std::min(lo.x, p.x), std::min(lo.y, p.y), std::min(lo.z, p.z)};
        hi = {std::max(hi.x, p.x), std::max(hi.y, p.y), std::max(hi.z, p.z)};
    }
    const Vec3 ext = hi - lo;
    int axis = 0;
    if (ext.y > ext.x) axis = 1;
    if (ext.z > axis_value(ext, axis)) axis = 2;
    if (axis_value(ext, axis) == 0.0) return id;  // all points coincide, keep as leaf

    const int mid = (begin + end) / 2;
    std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                     [&](int a, int b) {
                         const double va = axis_value(points_[a], axis), vb = axis_value(points_[b], axis);
                         return va < vb || (va == vb && a < b);
                     });

    nodes_[id].axis = axis;
    nodes_[id].split = axis_value(points_[order_[mid]], axis);
    const int left = build(begin, mid);
    const int right = build(mid, end);
    nodes_[id].left = left;
    nodes_[id].right = right;
    return id;
}

std::vector<std::pair<int, double>> KdTree::knn(const Vec3& query, int k) const {
    if (k < 1) throw std::invalid_argument("knn: k must be >= 1");
    if (points_.empty()) throw std::invalid_argument("knn: empty cloud");

    // Max-heap of the k best (d2, index); lexicographic order gives the
    // ascending-index tie-break for free.
    using Cand = std::pair<double, int>;
    std::priority_queue<Cand> best;

    auto consider = [&](int idx) {
        const Cand c{squared_distance(points_[idx], query), idx};
        if (static_cast<int>(best.size()) < k) {
            best.push(c);
        } else if (c < best.top()) {
            best.pop();
            best.push(c);
        }
    };

    auto visit = [&](auto&& self, int id) -> void {
        const Node& n = nodes_[id];
        if (n.axis < 0) {
            for (int i = n.begin; i < n.end; ++i) consider(order_[i]);
            return;
        }
        const double dq = axis_value(query, n.axis) - n.split;
        const int near = dq < 0.0 ? n.left : n.right;
        const int far = dq < 0.0 ? n.right : n.left;
        self(self, near);
        if (static_cast<int>(best.size()) < k || dq * dq <= best.top().first) self(self, far);
    };
    visit(visit, root_);

    std::vector<std::pair<int, double>> out(best.size());
    for (int i = static_cast<int>(best.size()) - 1; i >= 0; --i) {
        out[i] = {best.top().second, std::sqrt(best.top().first)};
        best.pop();
    }
    return out;
}

std::vector<int> KdTree::radius(const Vec3& query, double r) const {
    if (!(r > 0.0)) throw std::invalid_argument("radius: radius must be > 0");
    std::vector<int> out;
    if (points_.empty()) return out;
    const double r2 = r * r;

    auto visit = [&](auto&& self, int id) -> void {
        const Node& n = nodes_[id];
        if (n.axis < 0) {
            for (int i = n.begin; i < n.end; ++i) {
                const int idx = order_[i];
                if (squared_distance(points_[idx], query) <= r2) out.push_back(idx);
            }
            return;
        }
        const double dq = axis_value(query, n.axis) - n.split;
        const int near = dq < 0.0 ? n.left : n.right;
        const int far = dq < 0.0 ? n.right : n.left;
        self(self, near);
        if (dq * dq <= r2) self(self, far);
    };
    visit(visit, root_);

    std::sort(out.begin(), out.end());
    return out;
}

std::vector<std::pair<int, double>> knn(const LabeledCloud& cloud, const Vec3& query, int k) {
    return KdTree(cloud.points).knn(query, k);
}

std::vector<int> radius_neighbors(const LabeledCloud& cloud, const Vec3& query, double radius) {
    return KdTree(cloud.points).radius(query, radius);
}

}  // namespace objdisc
