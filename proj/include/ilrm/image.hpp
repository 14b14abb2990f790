#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "ilrm/errors.hpp"

namespace ilrm {

// H x W x 3 float image, channel-last, values nominally in [0, 1].
struct Image {
    int height = 0;
    int width = 0;
    std::vector<float> data;

    Image() = default;
    Image(int h, int w, float fill = 0.0f)
        : height(h), width(w), data(static_cast<std::size_t>(h) * w * 3, fill) {}

    float& at(int y, int x, int c) { return data[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
    float at(int y, int x, int c) const { return data[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
    std::size_t size() const { return data.size(); }
};

inline double mse(const Image& a, const Image& b) {
    if (a.height != b.height || a.width != b.width) throw DimensionError("mse: image sizes differ");
    double s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = static_cast<double>(a.data[i]) - b.data[i];
        s += d * d;
    }
    return s / static_cast<double>(a.size());
}

// Peak signal-to-noise ratio for [0, 1] images, capped at 100 dB for identical inputs.
inline double psnr(const Image& a, const Image& b) {
    const double m = mse(a, b);
    return m <= 1e-10 ? 100.0 : -10.0 * std::log10(m);
}

inline double max_abs_diff(const Image& a, const Image& b) {
    if (a.height != b.height || a.width != b.width) throw DimensionError("max_abs_diff: image sizes differ");
    double m = 0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(static_cast<double>(a.data[i]) - b.data[i]));
    return m;
}

} // namespace ilrm
