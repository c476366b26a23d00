#pragma once

#include "pancake/geometry.hpp"

#include <string>

namespace pancake {

// Pinhole camera with a world-to-camera rigid transform.
struct Camera {
    double fx = 0.0, fy = 0.0, cx = 0.0, cy = 0.0;
    int width = 0, height = 0;
    Mat3 rotation = Mat3::Identity();   // world -> camera
    Vec3 translation = Vec3::Zero();

    Vec3 to_camera(const Vec3& p_world) const { return rotation * p_world + translation; }
    Vec3 center() const { return -rotation.transpose() * translation; }
    Vec2 project(const Vec3& p_cam) const {
        return {fx * p_cam.x() / p_cam.z() + cx, fy * p_cam.y() / p_cam.z() + cy};
    }

    // Throws std::invalid_argument naming the offending field.
    void validate(const std::string& context) const;
};

// Camera looking from `eye` toward `target` with the given up hint.
Camera look_at_camera(const Vec3& eye, const Vec3& target, const Vec3& up,
                      double fx, double fy, int width, int height);

} // namespace pancake
