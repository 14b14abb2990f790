#pragma once

// 8-bit RGB PNG (via libpng) and raw f32 image dumps.
//
// Raw dump layout: three little-endian u32 (height, width, channels = 3)
// followed by height * width * 3 little-endian f32 values, channel-last.

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <memory>
#include <string>
#include <vector>

#include "ilrm/image.hpp"
#include "ilrm/io/checkpoint.hpp"

namespace ilrm::io {

inline std::uint8_t to_u8(float v) {
    return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
}

inline void write_png(const Image& img, const std::string& path) {
    std::unique_ptr<FILE, int (*)(FILE*)> fp(std::fopen(path.c_str(), "wb"), &std::fclose);
    if (!fp) throw std::runtime_error("cannot write '" + path + "'");
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_write_struct(&png, &info);
        throw std::runtime_error("libpng: cannot allocate writer");
    }
    std::vector<std::uint8_t> rows(img.size());
    for (std::size_t i = 0; i < img.size(); ++i) rows[i] = to_u8(img.data[i]);
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw std::runtime_error("libpng: failed writing '" + path + "'");
    }
    png_init_io(png, fp.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(img.width), static_cast<png_uint_32>(img.height), 8,
                 PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (int y = 0; y < img.height; ++y) png_write_row(png, rows.data() + static_cast<std::size_t>(y) * img.width * 3);
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

inline Image read_png(const std::string& path) {
    std::unique_ptr<FILE, int (*)(FILE*)> fp(std::fopen(path.c_str(), "rb"), &std::fclose);
    if (!fp) throw std::runtime_error("cannot open '" + path + "'");
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw std::runtime_error("libpng: cannot allocate reader");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw FormatError("png: cannot decode '" + path + "'");
    }
    png_init_io(png, fp.get());
    png_read_info(png, info);
    png_set_expand(png);
    png_set_strip_16(png);
    png_set_strip_alpha(png);
    png_set_gray_to_rgb(png);
    png_read_update_info(png, info);
    const auto w = static_cast<int>(png_get_image_width(png, info));
    const auto h = static_cast<int>(png_get_image_height(png, info));
    std::vector<std::uint8_t> buf(static_cast<std::size_t>(w) * h * 3);
    std::vector<png_bytep> rows(static_cast<std::size_t>(h));
    for (int y = 0; y < h; ++y) rows[static_cast<std::size_t>(y)] = buf.data() + static_cast<std::size_t>(y) * w * 3;
    png_read_image(png, rows.data());
    png_destroy_read_struct(&png, &info, nullptr);
    Image img(h, w);
    for (std::size_t i = 0; i < buf.size(); ++i) img.data[i] = static_cast<float>(buf[i]) / 255.0f;
    return img;
}

inline void write_raw(const Image& img, const std::string& path) {
    std::string out(12, '\0');
    const std::uint32_t dims[3] = {static_cast<std::uint32_t>(img.height), static_cast<std::uint32_t>(img.width), 3};
    std::memcpy(out.data(), dims, 12);
    out.append(reinterpret_cast<const char*>(img.data.data()), img.data.size() * 4);
    detail::write_file(path, out);
}

inline Image read_raw(const std::string& path) {
    const std::string bytes = detail::read_file(path);
    if (bytes.size() < 12) throw FormatError("raw image: truncated header in '" + path + "'");
    std::uint32_t dims[3];
    std::memcpy(dims, bytes.data(), 12);
    if (dims[2] != 3) throw FormatError("raw image: expected 3 channels at byte 8");
    Image img(static_cast<int>(dims[0]), static_cast<int>(dims[1]));
    if (bytes.size() != 12 + img.size() * 4)
        throw FormatError("raw image: size mismatch, file has " + std::to_string(bytes.size()) + " bytes");
    std::memcpy(img.data.data(), bytes.data() + 12, img.size() * 4);
    return img;
}

} // namespace ilrm::io
