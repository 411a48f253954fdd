#include "ban/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "ban/error.hpp"

namespace ban::io {

namespace {

struct Pixels {
    int64_t height = 0;
    int64_t width = 0;
    int channels = 0;  // 1 or 3
    std::vector<uint8_t> data;
};

bool has_ext(const std::filesystem::path& p, std::initializer_list<const char*> exts) {
    std::string e = p.extension().string();
    std::transform(e.begin(), e.end(), e.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    for (const char* x : exts) {
        if (e == x) return true;
    }
    return false;
}

Pixels read_png(const std::filesystem::path& path, bool gray) {
    png_image image{};
    image.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&image, path.string().c_str())) {
        throw DataError("cannot decode PNG " + path.string() + ": " + image.message);
    }
    image.format = gray ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
    Pixels px;
    px.height = image.height;
    px.width = image.width;
    px.channels = gray ? 1 : 3;
    px.data.resize(PNG_IMAGE_SIZE(image));
    if (!png_image_finish_read(&image, nullptr, px.data.data(), 0, nullptr)) {
        png_image_free(&image);
        throw DataError("cannot decode PNG " + path.string() + ": " + image.message);
    }
    return px;
}

void write_png(const std::filesystem::path& path, const Pixels& px) {
    png_image image{};
    image.version = PNG_IMAGE_VERSION;
    image.width = static_cast<png_uint_32>(px.width);
    image.height = static_cast<png_uint_32>(px.height);
    image.format = px.channels == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
    if (!png_image_write_to_file(&image, path.string().c_str(), 0, px.data.data(), 0, nullptr)) {
        throw DataError("cannot write PNG " + path.string() + ": " + image.message);
    }
}

std::string next_token(std::istream& in) {
    std::string tok;
    char c;
    while (in.get(c)) {
        if (c == '#') {
            std::string skip;
            std::getline(in, skip);
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

Pixels read_pnm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    const std::string magic = next_token(in);
    if (magic != "P5" && magic != "P6") throw DataError(path.string() + ": only binary P5/P6 Netpbm is supported");
    Pixels px;
    px.width = std::stoll(next_token(in));
    px.height = std::stoll(next_token(in));
    const int maxval = std::stoi(next_token(in));
    if (maxval != 255) throw DataError(path.string() + ": only 8-bit Netpbm is supported");
    px.channels = magic == "P5" ? 1 : 3;
    px.data.resize(static_cast<size_t>(px.height * px.width * px.channels));
    in.read(reinterpret_cast<char*>(px.data.data()), static_cast<std::streamsize>(px.data.size()));
    if (!in) throw DataError(path.string() + ": truncated pixel data");
    return px;
}

void write_pnm(const std::filesystem::path& path, const Pixels& px) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    out << (px.channels == 1 ? "P5" : "P6") << '\n' << px.width << ' ' << px.height << "\n255\n";
    out.write(reinterpret_cast<const char*>(px.data.data()), static_cast<std::streamsize>(px.data.size()));
}

Pixels read_any(const std::filesystem::path& path, bool gray) {
    if (!std::filesystem::exists(path)) throw DataError("missing file " + path.string());
    if (has_ext(path, {".pgm", ".ppm", ".pnm"})) {
        Pixels px = read_pnm(path);
        if (gray && px.channels != 1) throw DataError(path.string() + ": expected a single-channel mask");
        return px;
    }
    return read_png(path, gray);
}

void write_any(const std::filesystem::path& path, const Pixels& px) {
    if (has_ext(path, {".pgm", ".ppm", ".pnm"})) {
        write_pnm(path, px);
    } else {
        write_png(path, px);
    }
}

}  // namespace

Tensor load_image(const std::filesystem::path& path) {
    Pixels px = read_any(path, false);
    Tensor out({px.height, px.width, 3});
    const int64_t n = px.height * px.width;
    for (int64_t i = 0; i < n; ++i) {
        for (int c = 0; c < 3; ++c) {
            const uint8_t v = px.channels == 1 ? px.data[static_cast<size_t>(i)] : px.data[static_cast<size_t>(i * 3 + c)];
            out[i * 3 + c] = static_cast<float>(v);
        }
    }
    return out;
}

void save_image(const std::filesystem::path& path, const Tensor& rgb) {
    if (rgb.rank() != 3 || rgb.dim(2) != 3) throw ShapeError("save_image expects HxWx3, got " + shape_str(rgb.shape()));
    Pixels px{rgb.dim(0), rgb.dim(1), 3, std::vector<uint8_t>(static_cast<size_t>(rgb.numel()))};
    for (int64_t i = 0; i < rgb.numel(); ++i) {
        px.data[static_cast<size_t>(i)] = static_cast<uint8_t>(std::clamp(std::lround(rgb[i]), 0L, 255L));
    }
    write_any(path, px);
}

metrics::LabelMap load_mask(const std::filesystem::path& path) {
    Pixels px = read_any(path, true);
    metrics::LabelMap out(px.height, px.width);
    for (size_t i = 0; i < out.values.size(); ++i) out.values[i] = px.data[i];
    return out;
}

void save_mask(const std::filesystem::path& path, const metrics::LabelMap& mask) {
    Pixels px{mask.height, mask.width, 1, std::vector<uint8_t>(mask.values.size())};
    for (size_t i = 0; i < mask.values.size(); ++i) {
        const int32_t v = mask.values[i];
        if (v < 0 || v > 255) throw DataError("mask value " + std::to_string(v) + " does not fit in 8 bits");
        px.data[i] = static_cast<uint8_t>(v);
    }
    write_any(path, px);
}

}  // namespace ban::io
