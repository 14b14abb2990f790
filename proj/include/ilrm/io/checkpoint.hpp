#pragma once

// Checkpoint container:
//
//   u64 little-endian   header length N
//   N bytes             UTF-8 JSON header
//   payload             raw little-endian f32 tensors
//
// The header maps every parameter name to {"dtype": "f32", "shape": [...],
// "offset": byte offset into the payload}; "__config__" holds the model
// configuration. Payloads are stored back to back in parameter order.

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "ilrm/io/config_json.hpp"
#include "ilrm/update_blocks.hpp"

namespace ilrm::io {

static_assert(std::endian::native == std::endian::little, "checkpoint IO assumes a little-endian host");

namespace detail {

inline void write_u64(std::string& out, std::uint64_t v) {
    char buf[8];
    std::memcpy(buf, &v, 8);
    out.append(buf, 8);
}

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_file(const std::string& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write '" + path + "'");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

} // namespace detail

template <class T>
std::string serialize_checkpoint(const Model<T>& model) {
    json header;
    header["__config__"] = to_json(model.config);
    std::string payload;
    for (const auto& [name, t] : model.named_parameters()) {
        header[name] = {{"dtype", "f32"}, {"shape", t.shape()}, {"offset", payload.size()}};
        for (T v : t.data()) {
            const auto f = static_cast<float>(v);
            char buf[4];
            std::memcpy(buf, &f, 4);
            payload.append(buf, 4);
        }
    }
    const std::string h = header.dump();
    std::string out;
    detail::write_u64(out, h.size());
    out += h;
    out += payload;
    return out;
}

template <class T>
void save_checkpoint(const Model<T>& model, const std::string& path) {
    detail::write_file(path, serialize_checkpoint(model));
}

// Parses a checkpoint. With `override_config`, the stored tensors must have
// exactly the shapes that configuration implies.
template <class T>
Model<T> deserialize_checkpoint(const std::string& bytes, const std::optional<ModelConfig>& override_config = {}) {
    if (bytes.size() < 8) throw FormatError("checkpoint: truncated header length at byte 0");
    std::uint64_t hlen = 0;
    std::memcpy(&hlen, bytes.data(), 8);
    if (hlen > bytes.size() - 8)
        throw FormatError("checkpoint: header length " + std::to_string(hlen) + " exceeds file size at byte 0");
    json header;
    try {
        header = json::parse(bytes.substr(8, hlen));
    } catch (const json::exception& e) {
        throw FormatError(std::string("checkpoint: malformed JSON header at byte 8: ") + e.what());
    }
    if (!header.contains("__config__")) throw FormatError("checkpoint: header lacks __config__ at byte 8");
    const ModelConfig stored = model_config_from_json(header.at("__config__"));
    const ModelConfig cfg = override_config.value_or(stored);

    Model<T> model = Model<T>::init(cfg);
    const std::size_t base = 8 + hlen;
    std::size_t expected_offset = 0;
    std::size_t tensors = 0;
    for (auto& [name, t] : model.named_parameters()) {
        if (!header.contains(name)) throw FormatError("checkpoint: missing tensor '" + name + "'");
        const json& entry = header.at(name);
        if (entry.value("dtype", "") != "f32")
            throw FormatError("checkpoint: tensor '" + name + "' has unsupported dtype");
        const auto shape = entry.at("shape").get<Shape>();
        if (shape != t.shape()) {
            throw ConfigError("checkpoint: shape conflict for '" + name + "': file has " + shape_str(shape) +
                              ", configuration expects " + shape_str(t.shape()));
        }
        const auto offset = entry.at("offset").get<std::size_t>();
        if (offset != expected_offset) {
            throw FormatError("checkpoint: tensor '" + name + "' at payload offset " + std::to_string(offset) +
                              " (byte " + std::to_string(base + offset) + "), expected " +
                              std::to_string(expected_offset));
        }
        const std::size_t nbytes = t.numel() * 4;
        if (base + offset + nbytes > bytes.size())
            throw FormatError("checkpoint: tensor '" + name + "' runs past end of file at byte " +
                              std::to_string(bytes.size()));
        auto data = t.mutable_data();
        for (std::size_t i = 0; i < data.size(); ++i) {
            float f;
            std::memcpy(&f, bytes.data() + base + offset + i * 4, 4);
            data[i] = static_cast<T>(f);
        }
        expected_offset += nbytes;
        ++tensors;
    }
    if (header.size() != tensors + 1) throw FormatError("checkpoint: header lists unexpected tensors");
    if (base + expected_offset != bytes.size()) {
        throw FormatError("checkpoint: file has " + std::to_string(bytes.size()) + " bytes, payload ends at byte " +
                          std::to_string(base + expected_offset));
    }
    return model;
}

template <class T>
Model<T> load_checkpoint(const std::string& path, const std::optional<ModelConfig>& override_config = {}) {
    return deserialize_checkpoint<T>(detail::read_file(path), override_config);
}

} // namespace ilrm::io
