#include <doctest.h>

#include "pancake/normal_field.hpp"
#include "pancake/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

using namespace pancake;

namespace {

std::vector<Vec3> random_points(Rng& rng, int n, double extent = 1.0) {
    std::vector<Vec3> pts;
    for (int i = 0; i < n; ++i)
        pts.emplace_back(rng.uniform(-extent, extent), rng.uniform(-extent, extent),
                         rng.uniform(-extent, extent));
    return pts;
}

// Linear-scan oracle sharing dist2 so ties resolve identically.
std::size_t brute_nearest(const std::vector<Vec3>& pts, const Vec3& q) {
    std::size_t best = 0;
    double best_d = dist2(q, pts[0]);
    for (std::size_t i = 1; i < pts.size(); ++i) {
        const double d = dist2(q, pts[i]);
        if (d < best_d) {
            best_d = d;
            best = i;
        }
    }
    return best;
}

std::vector<std::size_t> brute_knearest(const std::vector<Vec3>& pts, const Vec3& q,
                                        std::size_t k, std::size_t exclude) {
    std::vector<std::pair<double, std::size_t>> all;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        if (i == exclude) continue;
        all.emplace_back(dist2(q, pts[i]), i);
    }
    std::sort(all.begin(), all.end());
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < std::min(k, all.size()); ++i) out.push_back(all[i].second);
    return out;
}

} // namespace

TEST_CASE("kd-tree nearest matches the linear scan exactly") {
    Rng rng(70);
    const auto pts = random_points(rng, 500);
    const KdTree tree(pts);
    for (int q = 0; q < 10000; ++q) {
        const Vec3 query(rng.uniform(-1.2, 1.2), rng.uniform(-1.2, 1.2),
                         rng.uniform(-1.2, 1.2));
        CHECK(tree.nearest(query) == brute_nearest(pts, query));
    }
}

TEST_CASE("kd-tree resolves exact ties by lowest index") {
    // A grid with duplicated points guarantees distance ties.
    std::vector<Vec3> pts;
    for (int x = 0; x < 4; ++x)
        for (int y = 0; y < 4; ++y)
            for (int z = 0; z < 4; ++z) pts.emplace_back(x, y, z);
    pts.push_back(pts[7]);  // duplicate with a higher index
    pts.push_back(pts[12]);
    const KdTree tree(pts);

    Rng rng(71);
    for (int q = 0; q < 2000; ++q) {
        // Half-integer queries sit equidistant between grid points.
        const Vec3 query(0.5 * static_cast<int>(rng.uniform_index(8)),
                         0.5 * static_cast<int>(rng.uniform_index(8)),
                         0.5 * static_cast<int>(rng.uniform_index(8)));
        CHECK(tree.nearest(query) == brute_nearest(pts, query));
    }
    // Query exactly on a duplicated point: the original (lower) index wins.
    CHECK(tree.nearest(pts[7]) == 7);
}

TEST_CASE("kd-tree knearest matches the sorted linear scan") {
    Rng rng(72);
    const auto pts = random_points(rng, 300);
    const KdTree tree(pts);
    for (int q = 0; q < 500; ++q) {
        const Vec3 query(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
        const std::size_t exclude = rng.uniform_index(pts.size());
        CHECK(tree.knearest(query, 10, exclude) == brute_knearest(pts, query, 10, exclude));
    }
}

TEST_CASE("estimate_normals plane fixture") {
    Rng rng(73);
    std::vector<Vec3> pts;
    for (int i = 0; i < 200; ++i)
        pts.emplace_back(rng.uniform(-1, 1), rng.uniform(-1, 1), 0.0);
    const NormalField field = estimate_normals(pts, 10);
    REQUIRE(field.reliable_count() == 200);
    for (std::size_t i = 0; i < pts.size(); ++i) {
        const double c = std::abs(field.normals[i].dot(Vec3::UnitZ()));
        CHECK(std::acos(std::clamp(c, 0.0, 1.0)) < 1e-6);
    }
}

TEST_CASE("estimate_normals sphere fixture is radial") {
    Rng rng(74);
    std::vector<Vec3> pts;
    const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
    for (int i = 0; i < 2000; ++i) {
        const double y = 1.0 - 2.0 * (i + 0.5) / 2000.0;
        const double r = std::sqrt(std::max(0.0, 1.0 - y * y));
        const double a = golden * i;
        pts.emplace_back(r * std::cos(a), y, r * std::sin(a));
    }
    const NormalField field = estimate_normals(pts, 10);
    std::vector<double> errs;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        if (!field.reliable[i]) continue;
        const Vec3 radial = pts[i].normalized();
        const double c = std::abs(field.normals[i].dot(radial));
        CHECK(c > 0.99);
        errs.push_back(std::acos(std::clamp(c, 0.0, 1.0)) * 180.0 / std::numbers::pi);
    }
    std::sort(errs.begin(), errs.end());
    CHECK(errs[errs.size() / 2] < 2.0);
}

TEST_CASE("estimate_normals flags collinear neighborhoods as unreliable") {
    std::vector<Vec3> pts;
    for (int i = 0; i < 11; ++i) pts.emplace_back(0.1 * i, 0.0, 0.0);
    const NormalField field = estimate_normals(pts, 10);
    for (std::size_t i = 0; i < pts.size(); ++i) CHECK_FALSE(field.reliable[i]);
    CHECK(field.reliable_count() == 0);
    CHECK_THROWS_AS(nearest_normal(field, Vec3::Zero()), std::runtime_error);
}

TEST_CASE("estimate_normals rejects undersized input") {
    std::vector<Vec3> pts(10, Vec3::Zero());
    CHECK_THROWS_AS(estimate_normals(pts, 10), std::invalid_argument);
    std::vector<Vec3> pts2(20, Vec3::Zero());
    CHECK_THROWS_AS(estimate_normals(pts2, 2), std::invalid_argument);
}

TEST_CASE("nearest_normal basics and brute-force parity") {
    Rng rng(75);
    std::vector<Vec3> pts;
    for (int i = 0; i < 400; ++i)
        pts.emplace_back(rng.uniform(-1, 1), rng.uniform(-1, 1),
                         0.05 * std::sin(3.0 * i));  // wavy sheet, all reliable
    const NormalField field = estimate_normals(pts, 10);
    REQUIRE(field.reliable_count() > 300);

    // Query at a reliable point returns that point's normal.
    const std::size_t some = field.reliable_ids[17];
    CHECK(nearest_normal(field, pts[some]) == field.normals[some]);

    // Parity with a brute-force scan over the reliable subset.
    std::vector<Vec3> reliable_pts;
    std::vector<std::size_t> ids;
    for (std::size_t i = 0; i < pts.size(); ++i)
        if (field.reliable[i]) {
            reliable_pts.push_back(pts[i]);
            ids.push_back(i);
        }
    for (int q = 0; q < 10000; ++q) {
        const Vec3 query(rng.uniform(-1.5, 1.5), rng.uniform(-1.5, 1.5),
                         rng.uniform(-0.5, 0.5));
        const std::size_t expect = ids[brute_nearest(reliable_pts, query)];
        CHECK(nearest_normal(field, query) == field.normals[expect]);
    }
}

TEST_CASE("nearest_normal equidistant tie goes to the lower index") {
    std::vector<Vec3> pts;
    // Two parallel line segments of jittered points, plus two exactly
    // symmetric probes around x = 0.
    Rng rng(76);
    for (int i = 0; i < 30; ++i) pts.emplace_back(-1.0, 0.1 * i, 0.01 * (i % 5));
    for (int i = 0; i < 30; ++i) pts.emplace_back(1.0, 0.1 * i, 0.01 * (i % 5));
    const NormalField field = estimate_normals(pts, 5);
    REQUIRE(field.reliable_count() == 60);
    // Query equidistant to pts[4] and pts[34] (same y/z pattern): index 4 wins.
    const Vec3 q(0.0, 0.4, 0.01 * (4 % 5));
    CHECK(nearest_normal(field, q) == field.normals[4]);
}

TEST_CASE("estimate_normals is rotation equivariant") {
    Rng rng(77);
    std::vector<Vec3> pts;
    for (int i = 0; i < 300; ++i) {
        const double u = rng.uniform(-1, 1), v = rng.uniform(-1, 1);
        pts.emplace_back(u, v, 0.3 * std::sin(2.0 * u) * std::cos(v));
    }
    const Quat q = Quat{rng.normal(), rng.normal(), rng.normal(), rng.normal()}.normalized();
    const Mat3 r = quat_to_rotation(q);
    std::vector<Vec3> rotated(pts.size());
    for (std::size_t i = 0; i < pts.size(); ++i) rotated[i] = r * pts[i];

    const NormalField a = estimate_normals(pts, 10);
    const NormalField b = estimate_normals(rotated, 10);
    for (std::size_t i = 0; i < pts.size(); ++i) {
        if (!a.reliable[i] || !b.reliable[i]) continue;
        const double c = std::abs((r * a.normals[i]).dot(b.normals[i]));
        CHECK(c > 1.0 - 1e-6);
    }
}

TEST_CASE("estimate_normals is translation invariant") {
    Rng rng(78);
    std::vector<Vec3> pts;
    for (int i = 0; i < 200; ++i) {
        const double u = rng.uniform(-1, 1), v = rng.uniform(-1, 1);
        pts.emplace_back(u, v, 0.2 * u * v);
    }
    const Vec3 shift(12.3, -4.5, 6.7);
    std::vector<Vec3> moved(pts.size());
    for (std::size_t i = 0; i < pts.size(); ++i) moved[i] = pts[i] + shift;

    const NormalField a = estimate_normals(pts, 10);
    const NormalField b = estimate_normals(moved, 10);
    for (std::size_t i = 0; i < pts.size(); ++i) {
        CHECK(a.reliable[i] == b.reliable[i]);
        if (!a.reliable[i]) continue;
        CHECK(std::abs(std::abs(a.normals[i].dot(b.normals[i])) - 1.0) < 1e-9);
    }
}
