#include "pancake/normal_field.hpp"

#include "pancake/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace pancake {

namespace {
constexpr std::size_t kLeafSize = 16;
constexpr double kUnreliableRatio = 1e-6; // lambda2 / lambda3 below this is degenerate
} // namespace

KdTree::KdTree(std::vector<Vec3> points) : points_(std::move(points)) {
    order_.resize(points_.size());
    for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = i;
    if (!points_.empty()) root_ = build(0, points_.size());
}

std::size_t KdTree::build(std::size_t begin, std::size_t end) {
    Node node;
    if (end - begin <= kLeafSize) {
        node.axis = -1;
        node.left = begin;
        node.right = end;
        nodes_.push_back(node);
        return nodes_.size() - 1;
    }

    Vec3 lo = points_[order_[begin]], hi = lo;
    for (std::size_t i = begin; i < end; ++i) {
        lo = lo.cwiseMin(points_[order_[i]]);
        hi = hi.cwiseMax(points_[order_[i]]);
    }
    int axis = 0;
    const Vec3 ext = hi - lo;
    if (ext(1) > ext(axis)) axis = 1;
    if (ext(2) > ext(axis)) axis = 2;

    const std::size_t mid = begin + (end - begin) / 2;
    std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                     [&](std::size_t a, std::size_t b) {
                         return points_[a](axis) < points_[b](axis);
                     });

    node.axis = axis;
    node.split = points_[order_[mid]](axis);
    const std::size_t self = nodes_.size();
    nodes_.push_back(node);
    const std::size_t left = build(begin, mid);
    const std::size_t right = build(mid, end);
    nodes_[self].left = left;
    nodes_[self].right = right;
    return self;
}

void KdTree::search1(std::size_t ni, const Vec3& q, Best& best) const {
    const Node& node = nodes_[ni];
    if (node.axis < 0) {
        for (std::size_t i = node.left; i < node.right; ++i) {
            const std::size_t idx = order_[i];
            const Best cand{dist2(q, points_[idx]), idx};
            if (cand.better_than(best)) best = cand;
        }
        return;
    }
    const double delta = q(node.axis) - node.split;
    const std::size_t near = delta < 0.0 ? node.left : node.right;
    const std::size_t far = delta < 0.0 ? node.right : node.left;
    search1(near, q, best);
    // Equal plane distance may still hide a lower-index tie, so prune strictly.
    if (delta * delta <= best.d2) search1(far, q, best);
}

std::size_t KdTree::nearest(const Vec3& q) const {
    if (points_.empty()) throw std::logic_error("kd-tree is empty");
    Best best{std::numeric_limits<double>::infinity(), static_cast<std::size_t>(-1)};
    search1(root_, q, best);
    return best.idx;
}

void KdTree::searchk(std::size_t ni, const Vec3& q, std::size_t k, std::size_t exclude,
                     std::vector<Best>& heap) const {
    // Max-heap on (d2, idx): heap[0] is the current worst of the kept set.
    auto cmp = [](const Best& a, const Best& b) { return a.better_than(b); };
    auto push = [&](const Best& cand) {
        if (heap.size() < k) {
            heap.push_back(cand);
            std::push_heap(heap.begin(), heap.end(), cmp);
        } else if (cand.better_than(heap.front())) {
            std::pop_heap(heap.begin(), heap.end(), cmp);
            heap.back() = cand;
            std::push_heap(heap.begin(), heap.end(), cmp);
        }
    };

    const Node& node = nodes_[ni];
    if (node.axis < 0) {
        for (std::size_t i = node.left; i < node.right; ++i) {
            const std::size_t idx = order_[i];
            if (idx == exclude) continue;
            push({dist2(q, points_[idx]), idx});
        }
        return;
    }
    const double delta = q(node.axis) - node.split;
    const std::size_t near = delta < 0.0 ? node.left : node.right;
    const std::size_t far = delta < 0.0 ? node.right : node.left;
    searchk(near, q, k, exclude, heap);
    if (heap.size() < k || delta * delta <= heap.front().d2) searchk(far, q, k, exclude, heap);
}

std::vector<std::size_t> KdTree::knearest(const Vec3& q, std::size_t k,
                                          std::size_t exclude) const {
    std::vector<Best> heap;
    heap.reserve(k + 1);
    searchk(root_, q, k, exclude, heap);
    std::sort(heap.begin(), heap.end(),
              [](const Best& a, const Best& b) { return a.better_than(b); });
    std::vector<std::size_t> out(heap.size());
    for (std::size_t i = 0; i < heap.size(); ++i) out[i] = heap[i].idx;
    return out;
}

NormalField estimate_normals(const std::vector<Vec3>& points, int k) {
    if (k < 3) throw std::invalid_argument("normal estimation needs k >= 3");
    if (points.size() <= static_cast<std::size_t>(k))
        throw std::invalid_argument("normal estimation needs more than k points");

    NormalField field;
    field.points = points;
    field.normals.assign(points.size(), Vec3::UnitZ());
    field.reliable.assign(points.size(), 0);

    const KdTree tree(points);
    parallel_for(0, points.size(), [&](std::size_t i) {
        const auto nn = tree.knearest(points[i], static_cast<std::size_t>(k), i);

        Vec3 mean = Vec3::Zero();
        for (std::size_t j : nn) mean += points[j];
        mean /= static_cast<double>(nn.size());

        Mat3 c = Mat3::Zero();
        for (std::size_t j : nn) {
            const Vec3 d = points[j] - mean;
            c += d * d.transpose();
        }
        c /= static_cast<double>(nn.size() - 1);

        const SymEig3 eig = eigendecompose_sym3(c);
        field.normals[i] = eig.vectors.col(0);
        const double l2 = std::max(eig.values(1), 0.0);
        const double l3 = std::max(eig.values(2), 0.0);
        field.reliable[i] = (l3 > 0.0 && l2 > kUnreliableRatio * l3) ? 1 : 0;
    });

    std::vector<Vec3> reliable_points;
    for (std::size_t i = 0; i < points.size(); ++i) {
        if (field.reliable[i]) {
            field.reliable_ids.push_back(i);
            reliable_points.push_back(points[i]);
        }
    }
    field.reliable_index = KdTree(std::move(reliable_points));
    return field;
}

const Vec3& nearest_normal(const NormalField& field, const Vec3& query) {
    if (field.reliable_ids.empty())
        throw std::runtime_error("normal field has no reliable normals");
    if (!query.allFinite()) throw std::invalid_argument("query must be finite");
    const std::size_t i = field.reliable_index.nearest(query);
    return field.normals[field.reliable_ids[i]];
}

} // namespace pancake
