#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace pancake {

// Minimal binary-little-endian PLY support: one "vertex" element, scalar
// properties of type float/double/uchar. Enough for point clouds and
// Gaussian checkpoints; not a general PLY library.
struct PlyData {
    std::size_t count = 0;
    std::vector<std::string> order;                      // property order
    std::map<std::string, std::vector<double>> columns;  // name -> values

    bool has(const std::string& name) const { return columns.count(name) != 0; }
    const std::vector<double>& col(const std::string& name) const;
};

PlyData read_ply(const std::string& path);

enum class PlyType { Float32, Float64, Uint8 };

struct PlyColumn {
    std::string name;
    PlyType type;
    const std::vector<double>* values;
};

void write_ply(const std::string& path, std::size_t count,
               const std::vector<PlyColumn>& columns);

} // namespace pancake
