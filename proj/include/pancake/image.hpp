#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace pancake {

// Row-major H x W x C image of doubles. Channel count is 3 for RGB buffers
// and 1 for depth/alpha/mask planes.
struct Image {
    int height = 0;
    int width = 0;
    int channels = 0;
    std::vector<double> data;

    Image() = default;
    Image(int h, int w, int c, double fill = 0.0)
        : height(h), width(w), channels(c),
          data(static_cast<std::size_t>(h) * w * c, fill) {}

    double& at(int y, int x, int c = 0) {
        return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
    }
    double at(int y, int x, int c = 0) const {
        return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
    }
    std::size_t size() const { return data.size(); }
    bool same_shape(const Image& o) const {
        return height == o.height && width == o.width && channels == o.channels;
    }
};

// 8-bit RGB PNG. Values are clamped to [0,1] and quantized with round().
void write_png_rgb8(const std::string& path, const Image& img);
Image read_png_rgb8(const std::string& path);

// 16-bit grayscale PNG storing raw integer samples; world depth is
// sample * depth_scale. Values outside [0, 65535] are clamped.
void write_png_gray16(const std::string& path, const Image& depth, double depth_scale);
Image read_png_gray16(const std::string& path, double depth_scale);

// Raw 16-bit samples, for exactness checks.
std::vector<std::uint16_t> read_png_gray16_raw(const std::string& path, int* h, int* w);

} // namespace pancake
