#pragma once

#include "pancake/geometry.hpp"

#include <cstddef>
#include <vector>

namespace pancake {

// Squared distance with a fixed evaluation order; the k-d tree and any
// linear-scan check must share this so ties resolve bit-identically.
inline double dist2(const Vec3& a, const Vec3& b) {
    const double dx = a.x() - b.x();
    const double dy = a.y() - b.y();
    const double dz = a.z() - b.z();
    return dx * dx + dy * dy + dz * dz;
}

// Exact nearest-neighbor k-d tree (median split, leaf size 16). Ties are
// broken toward the lowest point index so results are reproducible and
// bit-identical to a linear scan.
class KdTree {
public:
    KdTree() = default;
    explicit KdTree(std::vector<Vec3> points);

    std::size_t size() const { return points_.size(); }
    const Vec3& point(std::size_t i) const { return points_[i]; }

    // Index of the nearest point, lowest index on ties. size() must be > 0.
    std::size_t nearest(const Vec3& query) const;

    // Indices of the k nearest points (ascending by (distance, index)),
    // excluding `exclude` when it is a valid index.
    std::vector<std::size_t> knearest(const Vec3& query, std::size_t k,
                                      std::size_t exclude = static_cast<std::size_t>(-1)) const;

private:
    struct Node {
        int axis = -1;          // -1 for leaves
        double split = 0.0;
        std::size_t left = 0;   // child node ids, or [begin,end) into order_ for leaves
        std::size_t right = 0;
    };

    struct Best {
        double d2;
        std::size_t idx;
        bool better_than(const Best& o) const {
            return d2 < o.d2 || (d2 == o.d2 && idx < o.idx);
        }
    };

    std::size_t build(std::size_t begin, std::size_t end);
    void search1(std::size_t node, const Vec3& q, Best& best) const;
    void searchk(std::size_t node, const Vec3& q, std::size_t k, std::size_t exclude,
                 std::vector<Best>& heap) const;

    std::vector<Vec3> points_;
    std::vector<std::size_t> order_;
    std::vector<Node> nodes_;
    std::size_t root_ = 0;
};

// Static point cloud with per-point tangent-plane normals estimated from the
// k nearest neighbors. Normal signs are arbitrary.
struct NormalField {
    std::vector<Vec3> points;
    std::vector<Vec3> normals;       // unit, undefined where unreliable
    std::vector<char> reliable;      // degenerate neighborhoods are excluded
    KdTree reliable_index;           // over reliable points only
    std::vector<std::size_t> reliable_ids;

    std::size_t reliable_count() const { return reliable_ids.size(); }
};

// Scatter-matrix normal per point from its k nearest neighbors (the query
// point itself excluded). Throws when |points| <= k or k < 3.
NormalField estimate_normals(const std::vector<Vec3>& points, int k = 10);

// Normal of the nearest reliable point. Throws when no reliable point exists.
const Vec3& nearest_normal(const NormalField& field, const Vec3& query);

} // namespace pancake
