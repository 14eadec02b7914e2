#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "bdcn/data.hpp"
#include "bdcn/errors.hpp"

namespace bdcn {

namespace {

std::string lower_ext(const std::filesystem::path& p) {
    std::string e = p.extension().string();
    std::transform(e.begin(), e.end(), e.begin(), [](unsigned char c) { return std::tolower(c); });
    return e;
}

Image8 read_png(const std::filesystem::path& path) {
    png_image img;
    std::memset(&img, 0, sizeof(img));
    img.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&img, path.string().c_str())) {
        throw IoError("cannot read PNG " + path.string() + ": " + img.message);
    }
    const bool color = (img.format & PNG_FORMAT_FLAG_COLOR) != 0;
    img.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
    Image8 out;
    out.height = img.height;
    out.width = img.width;
    out.channels = color ? 3 : 1;
    out.pixels.resize(PNG_IMAGE_SIZE(img));
    if (!png_image_finish_read(&img, nullptr, out.pixels.data(), 0, nullptr)) {
        png_image_free(&img);
        throw IoError("cannot decode PNG " + path.string() + ": " + img.message);
    }
    return out;
}

void write_png(const std::filesystem::path& path, const Image8& im) {
    png_image img;
    std::memset(&img, 0, sizeof(img));
    img.version = PNG_IMAGE_VERSION;
    img.width = static_cast<png_uint_32>(im.width);
    img.height = static_cast<png_uint_32>(im.height);
    img.format = im.channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
    if (!png_image_write_to_file(&img, path.string().c_str(), 0, im.pixels.data(), 0, nullptr)) {
        throw IoError("cannot write PNG " + path.string() + ": " + img.message);
    }
}

// Reads the next whitespace-delimited header token, skipping '#' comments.
std::string pnm_token(std::istream& in) {
    std::string tok;
    char c;
    while (in.get(c)) {
        if (c == '#') {
            std::string rest;
            std::getline(in, rest);
            continue;
        }
        if (std::isspace(static_cast<unsigned char>(c))) {
            if (!tok.empty()) break;
            continue;
        }
        tok.push_back(c);
    }
    return tok;
}

Image8 read_pnm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    const std::string magic = pnm_token(in);
    if (magic != "P5" && magic != "P6") throw IoError(path.string() + ": only binary P5/P6 PNM is supported");
    Image8 out;
    try {
        out.width = std::stoll(pnm_token(in));
        out.height = std::stoll(pnm_token(in));
        const long maxval = std::stol(pnm_token(in));
        if (maxval != 255) throw IoError(path.string() + ": only maxval 255 is supported");
    } catch (const std::logic_error&) {
        throw IoError(path.string() + ": malformed PNM header");
    }
    if (out.width < 1 || out.height < 1) throw IoError(path.string() + ": empty image");
    out.channels = magic == "P6" ? 3 : 1;
    out.pixels.resize(static_cast<std::size_t>(out.width * out.height * out.channels));
    in.read(reinterpret_cast<char*>(out.pixels.data()), static_cast<std::streamsize>(out.pixels.size()));
    if (!in) throw IoError(path.string() + ": truncated pixel data");
    return out;
}

void write_pnm(const std::filesystem::path& path, const Image8& im) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out << (im.channels == 3 ? "P6" : "P5") << '\n' << im.width << ' ' << im.height << "\n255\n";
    out.write(reinterpret_cast<const char*>(im.pixels.data()), static_cast<std::streamsize>(im.pixels.size()));
    if (!out) throw IoError("failed writing " + path.string());
}

} // namespace

Image8 read_image(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw IoError("no such file: " + path.string());
    const std::string ext = lower_ext(path);
    if (ext == ".png") return read_png(path);
    if (ext == ".pgm" || ext == ".ppm" || ext == ".pnm") return read_pnm(path);
    throw IoError("unsupported raster format: " + path.string());
}

void write_image(const std::filesystem::path& path, const Image8& img) {
    if (img.channels != 1 && img.channels != 3) throw IoError("only 1- or 3-channel rasters can be written");
    const std::string ext = lower_ext(path);
    if (ext == ".png") return write_png(path, img);
    if (ext == ".pgm" || ext == ".ppm" || ext == ".pnm") return write_pnm(path, img);
    throw IoError("unsupported raster format: " + path.string());
}

Image8 to_image8(const Map2D& m) {
    Image8 out;
    out.height = m.height;
    out.width = m.width;
    out.channels = 1;
    out.pixels.resize(m.values.size());
    for (std::size_t i = 0; i < m.values.size(); ++i) {
        const double v = std::clamp(static_cast<double>(m.values[i]), 0.0, 1.0);
        out.pixels[i] = static_cast<std::uint8_t>(std::lround(255.0 * v));
    }
    return out;
}

Map2D gray_to_map(const Image8& img) {
    Map2D m(img.height, img.width);
    for (std::int64_t i = 0; i < m.size(); ++i) {
        // Colour rasters: take the mean of the channels.
        int acc = 0;
        for (int c = 0; c < img.channels; ++c) acc += img.pixels[static_cast<std::size_t>(i * img.channels + c)];
        m.values[static_cast<std::size_t>(i)] = static_cast<float>(acc) / (255.0f * static_cast<float>(img.channels));
    }
    return m;
}

} // namespace bdcn
