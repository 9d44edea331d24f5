#pragma once

#include "usm/common.hpp"

#include <string>
#include <vector>

namespace usm {

/// Row-major float raster, row 0 at the top. Depth in meters; values <= 0
/// mark invalid pixels.
struct ImageF {
    int width = 0;
    int height = 0;
    std::vector<float> data;

    static ImageF zeros(int w, int h) { return ImageF{w, h, std::vector<float>(std::size_t(w) * h, 0.f)}; }
    float& at(int x, int y) { return data[std::size_t(y) * width + x]; }
    float at(int x, int y) const { return data[std::size_t(y) * width + x]; }
};

/// Binary mask raster; 255 = object, 0 = background.
struct ImageU8 {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> data;

    static ImageU8 zeros(int w, int h) { return ImageU8{w, h, std::vector<std::uint8_t>(std::size_t(w) * h, 0)}; }
    std::uint8_t& at(int x, int y) { return data[std::size_t(y) * width + x]; }
    std::uint8_t at(int x, int y) const { return data[std::size_t(y) * width + x]; }
    bool object(int x, int y) const { return at(x, y) != 0; }
};

/// PFM grayscale ("Pf"), 32-bit floats, negative scale = little-endian (the
/// only accepted flavor). Scanlines are stored bottom-to-top per the format;
/// in memory row 0 is the top row. Round-trips bit-exactly.
void write_pfm(const std::string& path, const ImageF& img);
ImageF read_pfm(const std::string& path);

/// Binary PGM ("P5"), maxval 255.
void write_pgm(const std::string& path, const ImageU8& img);
ImageU8 read_pgm(const std::string& path);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);

}  // namespace usm
