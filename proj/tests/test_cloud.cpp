#include <doctest.h>

#include "pancake/cloud.hpp"
#include "pancake/rng.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

using namespace pancake;

namespace {

PointCloud random_cloud(Rng& rng, int n) {
    PointCloud pc;
    for (int i = 0; i < n; ++i) {
        pc.points.emplace_back(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
        pc.colors.emplace_back(rng.uniform(0, 1), rng.uniform(0, 1), rng.uniform(0, 1));
    }
    return pc;
}

} // namespace

TEST_CASE("init_from_pointcloud white tetrahedron") {
    PointCloud pc;
    pc.points = {Vec3(1, 1, 1), Vec3(1, -1, -1), Vec3(-1, 1, -1), Vec3(-1, -1, 1)};
    pc.colors.assign(4, Vec3(1, 1, 1));
    const GaussianCloud cloud = init_from_pointcloud(pc);
    REQUIRE(cloud.size() == 4);

    const double expect_dc = (1.0 - 0.5) / 0.2820948;
    for (std::size_t i = 0; i < 4; ++i) {
        for (int ch = 0; ch < 3; ++ch)
            CHECK(cloud.sh[i][ch * kShCoeffsPerChannel] ==
                  doctest::Approx(expect_dc).epsilon(1e-6));
        // All other vertices are equidistant, so the 3rd-NN distance is the
        // edge length.
        const double edge = (pc.points[0] - pc.points[1]).norm();
        CHECK(cloud.scale(i).x() == doctest::Approx(edge).epsilon(1e-12));
        CHECK(cloud.opacity(i) == doctest::Approx(0.1).epsilon(1e-12));
        CHECK(cloud.raw_rotations[i].w == 1.0);
    }
    CHECK(cloud.active_sh_degree == 0);
}

TEST_CASE("init_from_pointcloud uniform grid scales") {
    PointCloud pc;
    for (int y = 0; y < 10; ++y)
        for (int x = 0; x < 10; ++x) {
            pc.points.emplace_back(0.1 * x, 0.1 * y, 0.0);
            pc.colors.emplace_back(0.3, 0.6, 0.9);
        }
    const GaussianCloud cloud = init_from_pointcloud(pc);
    REQUIRE(cloud.size() == 100);

    for (std::size_t i = 0; i < 100; ++i) {
        const Vec3 s = cloud.scale(i);
        CHECK(s.x() == doctest::Approx(s.y()).epsilon(1e-12));
        CHECK(s.x() == doctest::Approx(s.z()).epsilon(1e-12));
    }
    // Interior points have four unit-spacing neighbors; corners reach the
    // diagonal for their third.
    const auto idx = [](int x, int y) { return y * 10 + x; };
    CHECK(cloud.scale(idx(4, 5)).x() == doctest::Approx(0.1).epsilon(1e-9));
    CHECK(cloud.scale(idx(0, 0)).x() == doctest::Approx(0.1 * std::sqrt(2.0)).epsilon(1e-9));
}

TEST_CASE("init_from_pointcloud matches a brute-force 3rd-NN oracle") {
    Rng rng(60);
    const PointCloud pc = random_cloud(rng, 120);
    const GaussianCloud cloud = init_from_pointcloud(pc);
    for (std::size_t i = 0; i < pc.points.size(); ++i) {
        std::vector<double> d;
        for (std::size_t j = 0; j < pc.points.size(); ++j)
            if (j != i) d.push_back((pc.points[j] - pc.points[i]).norm());
        std::sort(d.begin(), d.end());
        CHECK(cloud.scale(i).x() == doctest::Approx(d[2]).epsilon(1e-12));
    }
}

TEST_CASE("init_from_pointcloud rejects tiny clouds") {
    PointCloud pc;
    pc.points = {Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0)};
    pc.colors.assign(3, Vec3(1, 1, 1));
    CHECK_THROWS_AS(init_from_pointcloud(pc), std::invalid_argument);
}

TEST_CASE("activations round-trip") {
    Rng rng(61);
    GaussianCloud cloud;
    cloud.resize(32);
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        cloud.raw_scales[i] = Vec3(rng.normal(), rng.normal(), rng.normal());
        cloud.raw_opacities[i] = rng.normal(0.0, 3.0);
        const Vec3 s = cloud.scale(i);
        CHECK((s.array().log().matrix() - cloud.raw_scales[i]).norm() < 1e-9);
        const double op = cloud.opacity(i);
        CHECK(GaussianCloud::logit(op) == doctest::Approx(cloud.raw_opacities[i]).epsilon(1e-9));
    }
}

TEST_CASE("densify_and_prune no trigger leaves the cloud unchanged") {
    Rng seed_rng(62);
    const PointCloud pc = random_cloud(seed_rng, 50);
    GaussianCloud cloud = init_from_pointcloud(pc);
    const auto before_pos = cloud.positions;

    Rng rng(1);
    DensifyConfig cfg;
    const DensifyStats stats = cloud.densify_and_prune(cfg, rng);
    CHECK_FALSE(stats.changed());
    CHECK(cloud.size() == 50);
    CHECK(cloud.positions == before_pos);
    for (std::size_t i = 0; i < stats.moment_source.size(); ++i)
        CHECK(stats.moment_source[i] == static_cast<std::int64_t>(i));
}

TEST_CASE("densify_and_prune removes low-opacity Gaussians") {
    Rng seed_rng(63);
    const PointCloud pc = random_cloud(seed_rng, 20);
    GaussianCloud cloud = init_from_pointcloud(pc);
    cloud.raw_opacities[7] = GaussianCloud::logit(0.001);

    Rng rng(1);
    DensifyConfig cfg; // opacity_floor 0.005
    const DensifyStats stats = cloud.densify_and_prune(cfg, rng);
    CHECK(stats.pruned == 1);
    CHECK(cloud.size() == 19);
    // Mapping skips the removed index.
    CHECK(stats.moment_source[7] == 8);
}

TEST_CASE("densify_and_prune clones small high-gradient Gaussians") {
    Rng seed_rng(64);
    const PointCloud pc = random_cloud(seed_rng, 30);
    GaussianCloud cloud = init_from_pointcloud(pc);
    // Make Gaussian 3 small and mark a large accumulated gradient.
    cloud.raw_scales[3] = Vec3::Constant(std::log(1e-4 * cloud.scene_extent));
    cloud.grad_accum[3] = 1.0;
    cloud.grad_count[3] = 1;

    Rng rng(1);
    DensifyConfig cfg;
    const DensifyStats stats = cloud.densify_and_prune(cfg, rng);
    CHECK(stats.cloned == 1);
    CHECK(stats.split == 0);
    CHECK(cloud.size() == 31);
    CHECK(cloud.positions[30] == cloud.positions[3]);
    CHECK(stats.moment_source[30] == -1);
    CHECK(cloud.grad_accum[3] == 0.0);
}

TEST_CASE("densify_and_prune split statistics over seeded runs") {
    // Children are sampled from the parent's own distribution, so their
    // squared Mahalanobis distance is chi-square with 3 dof: mean 3.
    double sum_d2 = 0.0;
    double max_d2 = 0.0;
    int children = 0;
    for (int run = 0; run < 1000; ++run) {
        Rng seed_rng(100 + run);
        PointCloud pc = random_cloud(seed_rng, 10);
        GaussianCloud cloud = init_from_pointcloud(pc);
        cloud.raw_scales[0] = Vec3(std::log(0.5), std::log(0.3), std::log(0.2));
        cloud.raw_rotations[0] = Quat{seed_rng.normal(), seed_rng.normal(), seed_rng.normal(),
                                      seed_rng.normal()};
        if (cloud.raw_rotations[0].norm() < 0.3) cloud.raw_rotations[0].w += 1.0;
        cloud.grad_accum[0] = 1.0;
        cloud.grad_count[0] = 1;
        const Vec3 parent_mu = cloud.positions[0];
        const Mat3 parent_cov = build_covariance(cloud.scale(0), cloud.raw_rotations[0]);
        const Vec3 parent_raw_scale = cloud.raw_scales[0];
        const std::size_t before = cloud.size();

        Rng rng(run);
        DensifyConfig cfg;
        const DensifyStats stats = cloud.densify_and_prune(cfg, rng);
        REQUIRE(stats.split == 1);
        REQUIRE(cloud.size() == before + 1); // parent removed, two children added

        for (std::size_t i = before - 1; i < cloud.size(); ++i) {
            // raw scale shrinks by exactly log(1.6)
            CHECK((cloud.raw_scales[i] - (parent_raw_scale.array() - std::log(1.6)).matrix())
                      .norm() < 1e-12);
            const Vec3 d = cloud.positions[i] - parent_mu;
            const double d2 = d.dot(parent_cov.inverse() * d);
            sum_d2 += d2;
            max_d2 = std::max(max_d2, d2);
            ++children;
        }
    }
    REQUIRE(children == 2000);
    const double mean_d2 = sum_d2 / children;
    CHECK(mean_d2 > 2.6);
    CHECK(mean_d2 < 3.4);
    CHECK(max_d2 < 40.0);
}

TEST_CASE("densify_and_prune never empties the cloud") {
    Rng seed_rng(65);
    PointCloud pc = random_cloud(seed_rng, 10);
    GaussianCloud cloud = init_from_pointcloud(pc);
    for (std::size_t i = 0; i < cloud.size(); ++i)
        cloud.raw_opacities[i] = GaussianCloud::logit(0.0001 * (1 + i % 3));

    Rng rng(1);
    DensifyConfig cfg;
    const DensifyStats stats = cloud.densify_and_prune(cfg, rng);
    CHECK(cloud.size() == 1);
    CHECK(stats.moment_source.size() == 1);
}

TEST_CASE("densify keeps parameters finite") {
    Rng seed_rng(66);
    PointCloud pc = random_cloud(seed_rng, 40);
    GaussianCloud cloud = init_from_pointcloud(pc);
    Rng rng(2);
    for (int round = 0; round < 5; ++round) {
        for (std::size_t i = 0; i < cloud.size(); i += 3) {
            cloud.grad_accum[i] = 0.1;
            cloud.grad_count[i] = 1;
        }
        DensifyConfig cfg;
        cloud.densify_and_prune(cfg, rng);
        CHECK(cloud.all_finite());
    }
}

TEST_CASE("checkpoint PLY round-trips") {
    Rng rng(67);
    PointCloud pc = random_cloud(rng, 25);
    GaussianCloud cloud = init_from_pointcloud(pc);
    cloud.active_sh_degree = 3;
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        for (auto& v : cloud.sh[i]) v = rng.normal(0.0, 0.3);
        cloud.raw_rotations[i] = {rng.normal(), rng.normal(), rng.normal(), rng.normal()};
        if (cloud.raw_rotations[i].norm() < 0.3) cloud.raw_rotations[i].w += 1.0;
        cloud.raw_opacities[i] = rng.normal();
        cloud.raw_scales[i] = Vec3(rng.normal(), rng.normal(), rng.normal());
    }

    const std::string path = "/tmp/pancake_test_ckpt.ply";
    save_checkpoint_ply(path, cloud);
    const GaussianCloud loaded = load_checkpoint_ply(path);
    REQUIRE(loaded.size() == cloud.size());

    // Storage is float32; round-trip is exact at that precision.
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        CHECK((loaded.positions[i] - cloud.positions[i]).norm() <
              1e-6 * (1.0 + cloud.positions[i].norm()));
        CHECK((loaded.raw_scales[i] - cloud.raw_scales[i]).norm() < 1e-5);
        CHECK(loaded.raw_opacities[i] ==
              doctest::Approx(cloud.raw_opacities[i]).epsilon(1e-6));
        for (int k = 0; k < kShStride; ++k)
            CHECK(loaded.sh[i][k] == doctest::Approx(cloud.sh[i][k]).epsilon(1e-5));
    }

    // Idempotence: a second save of the loaded cloud is byte-identical.
    const std::string path2 = "/tmp/pancake_test_ckpt2.ply";
    save_checkpoint_ply(path2, loaded);
    std::ifstream f1(path, std::ios::binary), f2(path2, std::ios::binary);
    const std::string b1((std::istreambuf_iterator<char>(f1)), {});
    const std::string b2((std::istreambuf_iterator<char>(f2)), {});
    CHECK(b1 == b2);
}

TEST_CASE("pointcloud PLY round-trips positions and colors") {
    Rng rng(68);
    PointCloud pc = random_cloud(rng, 40);
    const std::string path = "/tmp/pancake_test_pc.ply";
    write_pointcloud_ply(path, pc);
    const PointCloud loaded = read_pointcloud_ply(path);
    REQUIRE(loaded.points.size() == 40);
    for (std::size_t i = 0; i < 40; ++i) {
        CHECK((loaded.points[i] - pc.points[i]).norm() < 1e-6);
        // Colors quantize to 8 bits.
        CHECK((loaded.colors[i] - pc.colors[i]).cwiseAbs().maxCoeff() < 0.5 / 255.0 + 1e-9);
    }
}
