#include "usm/io.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

namespace usm {

namespace {

// Header tokens are separated by single whitespace characters; comments are
// not part of the files this project writes.
std::string next_token(std::istream& is, const std::string& path) {
    std::string tok;
    if (!(is >> tok)) throw FormatError(path + ": truncated header");
    return tok;
}

}  // namespace

void write_pfm(const std::string& path, const ImageF& img) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw FormatError("pfm " + path + ": cannot open for writing");
    os << "Pf\n" << img.width << " " << img.height << "\n-1.0\n";
    // Bottom row first.
    for (int y = img.height - 1; y >= 0; --y)
        os.write(reinterpret_cast<const char*>(&img.data[std::size_t(y) * img.width]),
                 std::streamsize(sizeof(float)) * img.width);
    if (!os) throw FormatError("pfm " + path + ": write failed");
}

ImageF read_pfm(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FormatError("pfm " + path + ": cannot open");
    const std::string magic = next_token(is, path);
    if (magic == "PF") throw FormatError("pfm " + path + ": color PF not supported (grayscale Pf only)");
    if (magic != "Pf") throw FormatError("pfm " + path + ": bad magic '" + magic + "'");
    ImageF img;
    try {
        img.width = std::stoi(next_token(is, path));
        img.height = std::stoi(next_token(is, path));
    } catch (const std::exception&) {
        throw FormatError("pfm " + path + ": bad dimensions");
    }
    if (img.width <= 0 || img.height <= 0 || std::size_t(img.width) * img.height > (1u << 28))
        throw FormatError("pfm " + path + ": bad dimensions");
    double scale = 0.0;
    try {
        scale = std::stod(next_token(is, path));
    } catch (const std::exception&) {
        throw FormatError("pfm " + path + ": bad scale field");
    }
    if (scale >= 0.0)
        throw FormatError("pfm " + path + ": big-endian scale flag not supported (little-endian only)");
    is.get();  // single whitespace after the scale line
    img.data.resize(std::size_t(img.width) * img.height);
    for (int y = img.height - 1; y >= 0; --y)
        if (!is.read(reinterpret_cast<char*>(&img.data[std::size_t(y) * img.width]),
                     std::streamsize(sizeof(float)) * img.width))
            throw FormatError("pfm " + path + ": truncated pixel data");
    return img;
}

void write_pgm(const std::string& path, const ImageU8& img) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw FormatError("pgm " + path + ": cannot open for writing");
    os << "P5\n" << img.width << " " << img.height << "\n255\n";
    os.write(reinterpret_cast<const char*>(img.data.data()), std::streamsize(img.data.size()));
    if (!os) throw FormatError("pgm " + path + ": write failed");
}

ImageU8 read_pgm(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FormatError("pgm " + path + ": cannot open");
    if (next_token(is, path) != "P5") throw FormatError("pgm " + path + ": expected binary P5");
    ImageU8 img;
    int maxval = 0;
    try {
        img.width = std::stoi(next_token(is, path));
        img.height = std::stoi(next_token(is, path));
        maxval = std::stoi(next_token(is, path));
    } catch (const std::exception&) {
        throw FormatError("pgm " + path + ": bad header");
    }
    if (img.width <= 0 || img.height <= 0 || std::size_t(img.width) * img.height > (1u << 28))
        throw FormatError("pgm " + path + ": bad dimensions");
    if (maxval != 255) throw FormatError("pgm " + path + ": maxval must be 255");
    is.get();
    img.data.resize(std::size_t(img.width) * img.height);
    if (!is.read(reinterpret_cast<char*>(img.data.data()), std::streamsize(img.data.size())))
        throw FormatError("pgm " + path + ": truncated pixel data");
    return img;
}

std::string read_text_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FormatError(path + ": cannot open");
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw FormatError(path + ": cannot open for writing");
    os << content;
    if (!os) throw FormatError(path + ": write failed");
}

}  // namespace usm
