#pragma once

// Binary little-endian PLY for Gaussian splats in the layout shared by common
// 3DGS viewers: opacity as a logit, scales as logs, colors as SH DC terms.

#include <array>
#include <cmath>
#include <cstring>
#include <sstream>
#include <string>
#include <vector>

#include "ilrm/decoder.hpp"
#include "ilrm/io/checkpoint.hpp"

namespace ilrm::io {

inline constexpr std::array<const char*, 17> kSplatProperties = {
    "x",       "y",       "z",       "nx",      "ny",    "nz",    "f_dc_0", "f_dc_1", "f_dc_2",
    "opacity", "scale_0", "scale_1", "scale_2", "rot_0", "rot_1", "rot_2",  "rot_3"};

constexpr double kShC0 = 0.28209479177387814;

// Raw vertex records exactly as stored in the file.
struct SplatFile {
    std::vector<std::array<float, 17>> vertices;
};

inline std::string ply_header(std::size_t count) {
    std::string h = "ply\nformat binary_little_endian 1.0\nelement vertex " + std::to_string(count) + "\n";
    for (const char* p : kSplatProperties) h += std::string("property float ") + p + "\n";
    h += "end_header\n";
    return h;
}

inline std::string serialize_ply(const SplatFile& f) {
    std::string out = ply_header(f.vertices.size());
    const std::size_t start = out.size();
    out.resize(start + f.vertices.size() * 17 * 4);
    if (!f.vertices.empty()) std::memcpy(out.data() + start, f.vertices.data(), f.vertices.size() * 17 * 4);
    return out;
}

inline SplatFile parse_ply(const std::string& bytes) {
    std::istringstream in(bytes);
    std::string line;
    auto next = [&](const std::string& what) {
        if (!std::getline(in, line)) throw FormatError("ply: unexpected end of header, expected " + what);
    };
    next("magic");
    if (line != "ply") throw FormatError("ply: missing magic at byte 0");
    next("format");
    if (line != "format binary_little_endian 1.0") throw FormatError("ply: unsupported format line '" + line + "'");
    next("element vertex");
    std::size_t count = 0;
    {
        std::istringstream ls(line);
        std::string kw, el;
        ls >> kw >> el >> count;
        if (kw != "element" || el != "vertex" || ls.fail()) throw FormatError("ply: bad element line '" + line + "'");
    }
    for (const char* p : kSplatProperties) {
        next(std::string("property ") + p);
        if (line != std::string("property float ") + p)
            throw FormatError("ply: expected 'property float " + std::string(p) + "', got '" + line + "'");
    }
    next("end_header");
    if (line != "end_header") throw FormatError("ply: expected end_header, got '" + line + "'");
    const auto body = static_cast<std::size_t>(in.tellg());
    if (bytes.size() != body + count * 17 * 4) {
        throw FormatError("ply: file has " + std::to_string(bytes.size()) + " bytes, expected " +
                          std::to_string(body + count * 17 * 4));
    }
    SplatFile f;
    f.vertices.resize(count);
    if (count) std::memcpy(f.vertices.data(), bytes.data() + body, count * 17 * 4);
    return f;
}

inline void save_ply(const SplatFile& f, const std::string& path) { detail::write_file(path, serialize_ply(f)); }
inline SplatFile load_ply(const std::string& path) { return parse_ply(detail::read_file(path)); }

inline SplatFile to_splat_file(const GaussianSet& g) {
    SplatFile f;
    f.vertices.reserve(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) {
        std::array<float, 17> v{};
        for (int k = 0; k < 3; ++k) {
            v[static_cast<std::size_t>(k)] = static_cast<float>(g.means[i][k]);
            v[6 + static_cast<std::size_t>(k)] = static_cast<float>((g.colors[i][k] - 0.5) / kShC0);
            v[10 + static_cast<std::size_t>(k)] = static_cast<float>(std::log(g.scales[i][k]));
        }
        const double a = std::clamp(static_cast<double>(g.opacity[i]), 1e-7, 1.0 - 1e-7);
        v[9] = static_cast<float>(std::log(a / (1.0 - a)));
        for (int k = 0; k < 4; ++k) v[13 + static_cast<std::size_t>(k)] = static_cast<float>(g.rotations[i][k]);
        f.vertices.push_back(v);
    }
    return f;
}

inline GaussianSet to_gaussian_set(const SplatFile& f) {
    GaussianSet g;
    for (const auto& v : f.vertices) {
        Eigen::Vector4d q(v[13], v[14], v[15], v[16]);
        const double n = q.norm();
        q = n < 1e-12 ? Eigen::Vector4d(1, 0, 0, 0) : Eigen::Vector4d(q / n);
        g.push_back(Vec3(v[0], v[1], v[2]), static_cast<float>(1.0 / (1.0 + std::exp(-static_cast<double>(v[9])))),
                    Vec3(std::exp(static_cast<double>(v[10])), std::exp(static_cast<double>(v[11])),
                         std::exp(static_cast<double>(v[12]))),
                    q,
                    Vec3(0.5 + kShC0 * v[6], 0.5 + kShC0 * v[7], 0.5 + kShC0 * v[8]));
    }
    return g;
}

} // namespace ilrm::io
