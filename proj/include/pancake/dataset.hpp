#pragma once

#include "pancake/camera.hpp"
#include "pancake/cloud.hpp"
#include "pancake/image.hpp"

#include <optional>
#include <string>
#include <vector>

namespace pancake {

struct FrameRef {
    std::string file;        // image file name (relative to root/images)
    Camera camera;
    std::string image_path;  // resolved path
    std::string depth_path;  // empty when the frame has no depth map
    double depth_scale = 0.0;

    bool has_depth() const { return !depth_path.empty(); }
};

struct SceneDataset {
    std::string root;
    std::vector<FrameRef> frames;  // ordered by file name
    std::string pointcloud_path;
};

// Parses root/cameras.json and validates every referenced file. Throws
// std::runtime_error naming the offending path/field.
SceneDataset load_dataset(const std::string& root);

// Parses a cameras.json-style file without touching image/depth files.
// Used for novel-view camera paths where no images exist.
std::vector<FrameRef> parse_cameras_json(const std::string& path);

// Writes root/cameras.json for the given frames (full double precision).
void write_cameras_json(const std::string& root, const std::vector<FrameRef>& frames);

Image load_frame_image(const FrameRef& frame);
Image load_frame_depth(const FrameRef& frame);  // world units

struct SplitResult {
    std::vector<int> train;
    std::vector<int> test;
    bool warned_small = false;  // fewer than 9 frames: everything is train
};

// Every 9th frame (indices 8, 17, 26, ...) is a test frame.
SplitResult split_8_1(const SceneDataset& dataset);

enum class SynthShape { Tube, Sphere, Plane };

struct SynthParams {
    SynthShape shape = SynthShape::Tube;
    int n_views = 60;
    int resolution = 128;
    double noise_depth = 0.0;      // multiplicative sigma on depth maps
    double noise_rot_deg = 0.0;    // pose rotation sigma, degrees
    double noise_trans_rel = 0.0;  // pose translation sigma, fraction of extent
    std::uint64_t seed = 0;
    int samples_u = 110;           // surface sampling grid
    int samples_v = 44;
};

// Analytic description persisted as scene.json so evaluations can query the
// true surface normal at any point.
struct SynthShapeInfo {
    SynthShape shape = SynthShape::Tube;
    double tube_length = 4.0;
    double tube_radius = 0.5;
    double tube_amp = 0.35;
    double sphere_radius = 1.0;
};

Vec3 synth_surface_normal(const SynthShapeInfo& info, const Vec3& p);
std::optional<SynthShapeInfo> load_scene_info(const std::string& root);

struct SynthResult {
    SceneDataset dataset;
    GaussianCloud ground_truth;
    SynthShapeInfo shape;
};

// Builds a textured parametric surface, samples a ground-truth pancaked
// Gaussian cloud on it, renders images and depth maps with the reference
// renderer along an interior/orbit camera path, optionally perturbs stored
// poses and depths with seeded noise, and writes the dataset layout.
SynthResult synth_scene(const std::string& out_root, const SynthParams& params);

} // namespace pancake
