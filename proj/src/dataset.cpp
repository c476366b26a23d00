#include "pancake/dataset.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace pancake {

namespace {

[[noreturn]] void fail(const std::string& where, const std::string& what) {
    throw std::runtime_error("dataset: " + where + ": " + what);
}

double require_number(const json& j, const std::string& key, const std::string& where) {
    if (!j.contains(key) || !j[key].is_number())
        fail(where, "missing or non-numeric field '" + key + "'");
    return j[key].get<double>();
}

} // namespace

std::vector<FrameRef> parse_cameras_json(const std::string& path) {
    if (!fs::exists(path)) fail(path, "file not found");
    std::ifstream in(path);
    json doc;
    try {
        in >> doc;
    } catch (const std::exception& e) {
        fail(path, std::string("parse error: ") + e.what());
    }
    if (!doc.is_array()) fail(path, "expected a top-level array");

    std::vector<FrameRef> frames;
    for (std::size_t idx = 0; idx < doc.size(); ++idx) {
        const json& j = doc[idx];
        const std::string where = path + "[" + std::to_string(idx) + "]";
        FrameRef frame;
        if (!j.contains("file") || !j["file"].is_string()) fail(where, "missing 'file'");
        frame.file = j["file"].get<std::string>();

        frame.camera.fx = require_number(j, "fx", where);
        frame.camera.fy = require_number(j, "fy", where);
        frame.camera.cx = require_number(j, "cx", where);
        frame.camera.cy = require_number(j, "cy", where);
        frame.camera.width = static_cast<int>(require_number(j, "width", where));
        frame.camera.height = static_cast<int>(require_number(j, "height", where));

        if (!j.contains("w2c") || !j["w2c"].is_array() || j["w2c"].size() != 16)
            fail(where, "'w2c' must be a 16-element row-major array");
        for (int r = 0; r < 3; ++r) {
            for (int c = 0; c < 3; ++c)
                frame.camera.rotation(r, c) = j["w2c"][r * 4 + c].get<double>();
            frame.camera.translation(r) = j["w2c"][r * 4 + 3].get<double>();
        }
        try {
            frame.camera.validate(frame.file);
        } catch (const std::exception& e) {
            fail(where, e.what());
        }

        if (j.contains("depth_file")) {
            if (!j["depth_file"].is_string()) fail(where, "'depth_file' must be a string");
            frame.depth_path = j["depth_file"].get<std::string>();
            frame.depth_scale = require_number(j, "depth_scale", where);
            if (!(frame.depth_scale > 0.0)) fail(where, "'depth_scale' must be positive");
        }
        frames.push_back(std::move(frame));
    }
    return frames;
}

SceneDataset load_dataset(const std::string& root) {
    const fs::path root_path(root);
    const fs::path cams_path = root_path / "cameras.json";

    SceneDataset ds;
    ds.root = root;
    ds.frames = parse_cameras_json(cams_path.string());

    for (auto& frame : ds.frames) {
        const std::string where = cams_path.string() + " (" + frame.file + ")";
        frame.image_path = (root_path / "images" / frame.file).string();
        if (!fs::exists(frame.image_path)) fail(where, "image not found: " + frame.image_path);
        if (!frame.depth_path.empty()) {
            frame.depth_path = (root_path / "depths" / frame.depth_path).string();
            if (!fs::exists(frame.depth_path))
                fail(where, "depth map not found: " + frame.depth_path);
        }
    }

    std::sort(ds.frames.begin(), ds.frames.end(),
              [](const FrameRef& a, const FrameRef& b) { return a.file < b.file; });

    // Dimension validation requires decoding; also catches corrupt files.
    for (const auto& frame : ds.frames) {
        const Image img = read_png_rgb8(frame.image_path);
        if (img.width != frame.camera.width || img.height != frame.camera.height)
            fail(frame.image_path, "image dimensions do not match camera");
        if (frame.has_depth()) {
            int dh = 0, dw = 0;
            (void)read_png_gray16_raw(frame.depth_path, &dh, &dw);
            if (dw != frame.camera.width || dh != frame.camera.height)
                fail(frame.depth_path, "depth dimensions do not match camera");
        }
    }

    const fs::path pc = root_path / "pointcloud.ply";
    if (fs::exists(pc)) ds.pointcloud_path = pc.string();
    return ds;
}

void write_cameras_json(const std::string& root, const std::vector<FrameRef>& frames) {
    json doc = json::array();
    for (const auto& f : frames) {
        json j;
        j["file"] = f.file;
        j["fx"] = f.camera.fx;
        j["fy"] = f.camera.fy;
        j["cx"] = f.camera.cx;
        j["cy"] = f.camera.cy;
        j["width"] = f.camera.width;
        j["height"] = f.camera.height;
        json w2c = json::array();
        for (int r = 0; r < 4; ++r)
            for (int c = 0; c < 4; ++c) {
                double v = 0.0;
                if (r < 3 && c < 3) v = f.camera.rotation(r, c);
                else if (r < 3) v = f.camera.translation(r);
                else v = (c == 3) ? 1.0 : 0.0;
                w2c.push_back(v);
            }
        j["w2c"] = w2c;
        if (f.has_depth()) {
            j["depth_file"] = fs::path(f.depth_path).filename().string();
            j["depth_scale"] = f.depth_scale;
        }
        doc.push_back(j);
    }
    std::ofstream out(fs::path(root) / "cameras.json");
    out << doc.dump(2) << "\n";
}

Image load_frame_image(const FrameRef& frame) { return read_png_rgb8(frame.image_path); }

Image load_frame_depth(const FrameRef& frame) {
    if (!frame.has_depth()) throw std::runtime_error("frame has no depth map: " + frame.file);
    return read_png_gray16(frame.depth_path, frame.depth_scale);
}

SplitResult split_8_1(const SceneDataset& dataset) {
    SplitResult out;
    const int n = static_cast<int>(dataset.frames.size());
    if (n < 9) {
        out.warned_small = true;
        for (int i = 0; i < n; ++i) out.train.push_back(i);
        return out;
    }
    for (int i = 0; i < n; ++i) {
        if (i % 9 == 8) out.test.push_back(i);
        else out.train.push_back(i);
    }
    return out;
}

} // namespace pancake
