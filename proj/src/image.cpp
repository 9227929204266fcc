#include "facepriv/image.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

namespace facepriv {

Image clamp01(const Image& img) {
    Image out = img;
    for (float& v : out.data) v = std::min(1.0f, std::max(0.0f, v));
    return out;
}

static unsigned char toByte(float v) {
    float c = std::min(1.0f, std::max(0.0f, v));
    return static_cast<unsigned char>(std::lround(c * 255.0f));
}

Image quantize8(const Image& img) {
    Image out = img;
    for (float& v : out.data) v = toByte(v) / 255.0f;
    return out;
}

void savePpm(const Image& img, const std::string& path) {
    if (img.channels != 3)
        throw DomainError("savePpm: expected 3-channel image, got " +
                          std::to_string(img.channels));
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("savePpm: cannot open " + path);
    f << "P6\n" << img.width << " " << img.height << "\n255\n";
    std::vector<unsigned char> row(static_cast<std::size_t>(img.width) * 3);
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < 3; ++c)
                row[static_cast<std::size_t>(x) * 3 + c] = toByte(img.at(c, y, x));
        f.write(reinterpret_cast<const char*>(row.data()),
                static_cast<std::streamsize>(row.size()));
    }
    if (!f) throw IoError("savePpm: write failed for " + path);
}

Image loadPpm(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("loadPpm: cannot open " + path);
    std::string magic;
    int w = 0, h = 0, maxval = 0;
    f >> magic >> w >> h >> maxval;
    if (magic != "P6" || w <= 0 || h <= 0 || maxval != 255)
        throw ParseError("loadPpm: unsupported PPM header in " + path);
    f.get();  // single whitespace after maxval
    Image img(3, h, w);
    std::vector<unsigned char> row(static_cast<std::size_t>(w) * 3);
    for (int y = 0; y < h; ++y) {
        f.read(reinterpret_cast<char*>(row.data()),
               static_cast<std::streamsize>(row.size()));
        if (!f) throw ParseError("loadPpm: truncated pixel data in " + path);
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c)
                img.at(c, y, x) = row[static_cast<std::size_t>(x) * 3 + c] / 255.0f;
    }
    return img;
}

}  // namespace facepriv
