#pragma once

#include <string>
#include <vector>

#include "facepriv/common.hpp"

namespace facepriv {

/// Planar float image, CHW layout, values nominally in [0,1].
struct Image {
    int channels = 0;
    int height = 0;
    int width = 0;
    std::vector<float> data;  // size channels*height*width

    Image() = default;
    Image(int c, int h, int w, float fill = 0.0f)
        : channels(c), height(h), width(w),
          data(static_cast<std::size_t>(c) * h * w, fill) {}

    float& at(int c, int y, int x) {
        return data[(static_cast<std::size_t>(c) * height + y) * width + x];
    }
    float at(int c, int y, int x) const {
        return data[(static_cast<std::size_t>(c) * height + y) * width + x];
    }
    std::size_t size() const { return data.size(); }
    bool sameShape(const Image& o) const {
        return channels == o.channels && height == o.height && width == o.width;
    }
};

/// Video clip: frames of identical shape, CTHW when fed to 3-D convs.
struct Clip {
    std::vector<Image> frames;
};

/// Clamp pixel values into [0,1].
Image clamp01(const Image& img);

/// Quantize to 8-bit and back; makes in-memory images match what a
/// save/load round trip would produce.
Image quantize8(const Image& img);

// Binary PPM (P6) I/O. Crops on disk are 8-bit RGB.
void savePpm(const Image& img, const std::string& path);
Image loadPpm(const std::string& path);

}  // namespace facepriv
