#include "pancake/ply.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace pancake {

namespace {

static_assert(std::endian::native == std::endian::little,
              "binary PLY I/O assumes a little-endian host");

[[noreturn]] void fail(const std::string& path, const std::string& what) {
    throw std::runtime_error("ply: " + path + ": " + what);
}

struct Prop {
    std::string name;
    PlyType type;
};

std::size_t type_size(PlyType t) {
    switch (t) {
        case PlyType::Float32: return 4;
        case PlyType::Float64: return 8;
        case PlyType::Uint8: return 1;
    }
    return 0;
}

const char* type_name(PlyType t) {
    switch (t) {
        case PlyType::Float32: return "float";
        case PlyType::Float64: return "double";
        case PlyType::Uint8: return "uchar";
    }
    return "?";
}

} // namespace

const std::vector<double>& PlyData::col(const std::string& name) const {
    auto it = columns.find(name);
    if (it == columns.end()) throw std::runtime_error("ply: missing property " + name);
    return it->second;
}

PlyData read_ply(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(path, "cannot open");

    std::string line;
    if (!std::getline(in, line) || line.substr(0, 3) != "ply") fail(path, "not a PLY file");

    std::vector<Prop> props;
    std::size_t count = 0;
    bool in_vertex = false;
    bool binary_le = false;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        std::istringstream ss(line);
        std::string tok;
        ss >> tok;
        if (tok == "format") {
            std::string fmt;
            ss >> fmt;
            binary_le = (fmt == "binary_little_endian");
            if (!binary_le) fail(path, "only binary_little_endian is supported");
        } else if (tok == "element") {
            std::string name;
            std::size_t n = 0;
            ss >> name >> n;
            in_vertex = (name == "vertex");
            if (in_vertex) count = n;
            else if (n != 0) fail(path, "unsupported non-vertex element: " + name);
        } else if (tok == "property" && in_vertex) {
            std::string type, name;
            ss >> type >> name;
            PlyType t;
            if (type == "float" || type == "float32") t = PlyType::Float32;
            else if (type == "double" || type == "float64") t = PlyType::Float64;
            else if (type == "uchar" || type == "uint8") t = PlyType::Uint8;
            else fail(path, "unsupported property type: " + type);
            props.push_back({name, t});
        } else if (tok == "end_header") {
            break;
        }
    }
    if (props.empty() || count == 0) fail(path, "no vertex data");

    std::size_t stride = 0;
    for (const auto& p : props) stride += type_size(p.type);

    PlyData out;
    out.count = count;
    for (const auto& p : props) {
        out.order.push_back(p.name);
        out.columns[p.name].resize(count);
    }

    std::vector<char> row(stride);
    for (std::size_t i = 0; i < count; ++i) {
        in.read(row.data(), static_cast<std::streamsize>(stride));
        if (!in) fail(path, "truncated vertex data");
        std::size_t off = 0;
        for (const auto& p : props) {
            double v = 0.0;
            switch (p.type) {
                case PlyType::Float32: {
                    float f;
                    std::memcpy(&f, row.data() + off, 4);
                    v = f;
                    break;
                }
                case PlyType::Float64:
                    std::memcpy(&v, row.data() + off, 8);
                    break;
                case PlyType::Uint8: {
                    unsigned char b;
                    std::memcpy(&b, row.data() + off, 1);
                    v = b;
                    break;
                }
            }
            out.columns[p.name][i] = v;
            off += type_size(p.type);
        }
    }
    return out;
}

void write_ply(const std::string& path, std::size_t count,
               const std::vector<PlyColumn>& columns) {
    for (const auto& c : columns)
        if (c.values->size() != count) fail(path, "column size mismatch: " + c.name);

    std::ofstream out(path, std::ios::binary);
    if (!out) fail(path, "cannot open for writing");

    out << "ply\nformat binary_little_endian 1.0\n";
    out << "element vertex " << count << "\n";
    for (const auto& c : columns)
        out << "property " << type_name(c.type) << " " << c.name << "\n";
    out << "end_header\n";

    for (std::size_t i = 0; i < count; ++i) {
        for (const auto& c : columns) {
            const double v = (*c.values)[i];
            switch (c.type) {
                case PlyType::Float32: {
                    const float f = static_cast<float>(v);
                    out.write(reinterpret_cast<const char*>(&f), 4);
                    break;
                }
                case PlyType::Float64:
                    out.write(reinterpret_cast<const char*>(&v), 8);
                    break;
                case PlyType::Uint8: {
                    const unsigned char b = static_cast<unsigned char>(v);
                    out.write(reinterpret_cast<const char*>(&b), 1);
                    break;
                }
            }
        }
    }
    if (!out) fail(path, "write failed");
}

} // namespace pancake
