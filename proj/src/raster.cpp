#include "bfe/raster.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>
#include <stdexcept>

#include <png.h>

namespace bfe::geo {

Raster Raster::filled(int height, int width, int channels, uint8_t value) {
    if (height <= 0 || width <= 0 || channels <= 0) {
        throw std::invalid_argument("Raster: extents and channels must be positive");
    }
    Raster r;
    r.height = height;
    r.width = width;
    r.channels = channels;
    r.pixels.assign(static_cast<size_t>(height) * width * channels, value);
    return r;
}

bool Raster::is_binary() const {
    return std::all_of(pixels.begin(), pixels.end(), [](uint8_t v) { return v == 0 || v == 1; });
}

void Raster::validate() const {
    if (height <= 0 || width <= 0 || channels <= 0) {
        throw std::invalid_argument("Raster: extents and channels must be positive");
    }
    if (pixels.size() != static_cast<size_t>(height) * width * channels) {
        throw std::invalid_argument("Raster: pixel buffer size does not match extents");
    }
}

ProbRaster ProbRaster::filled(int height, int width, double value) {
    if (height <= 0 || width <= 0) throw std::invalid_argument("ProbRaster: extents must be positive");
    ProbRaster p;
    p.height = height;
    p.width = width;
    p.values.assign(static_cast<size_t>(height) * width, value);
    return p;
}

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

constexpr const char* kGeotransformKey = "geotransform";

}  // namespace

Raster read_png(const std::string& path) {
    FilePtr fp(std::fopen(path.c_str(), "rb"));
    if (!fp) throw std::runtime_error("read_png: cannot open " + path);

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw std::runtime_error("read_png: png_create_read_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw std::runtime_error("read_png: png_create_info_struct failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw std::runtime_error("read_png: failed to decode " + path);
    }

    png_init_io(png, fp.get());
    png_read_info(png, info);

    png_uint_32 width = png_get_image_width(png, info);
    png_uint_32 height = png_get_image_height(png, info);
    int color_type = png_get_color_type(png, info);
    int bit_depth = png_get_bit_depth(png, info);

    // normalize everything to 8-bit gray or RGB
    if (bit_depth == 16) png_set_strip_16(png);
    if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    if (color_type & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    png_read_update_info(png, info);

    color_type = png_get_color_type(png, info);
    int channels = (color_type == PNG_COLOR_TYPE_GRAY) ? 1 : 3;

    Raster raster = Raster::filled(static_cast<int>(height), static_cast<int>(width), channels, 0);
    std::vector<png_bytep> rows(height);
    for (png_uint_32 r = 0; r < height; ++r) {
        rows[r] = raster.pixels.data() + static_cast<size_t>(r) * width * channels;
    }
    png_read_image(png, rows.data());
    png_read_end(png, info);

    png_textp texts = nullptr;
    int num_text = 0;
    if (png_get_text(png, info, &texts, &num_text) > 0) {
        for (int i = 0; i < num_text; ++i) {
            if (texts[i].key && std::string(texts[i].key) == kGeotransformKey && texts[i].text) {
                raster.geotransform = texts[i].text;
            }
        }
    }

    png_destroy_read_struct(&png, &info, nullptr);
    return raster;
}

void write_png(const Raster& raster, const std::string& path) {
    raster.validate();
    if (raster.channels != 1 && raster.channels != 3) {
        throw std::invalid_argument("write_png: only 1- or 3-channel rasters are supported");
    }

    FilePtr fp(std::fopen(path.c_str(), "wb"));
    if (!fp) throw std::runtime_error("write_png: cannot open " + path);

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw std::runtime_error("write_png: png_create_write_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw std::runtime_error("write_png: png_create_info_struct failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw std::runtime_error("write_png: failed to encode " + path);
    }

    png_init_io(png, fp.get());
    png_set_compression_level(png, 6);  // fixed settings keep output byte-stable
    png_set_IHDR(png, info, static_cast<png_uint_32>(raster.width),
                 static_cast<png_uint_32>(raster.height), 8,
                 raster.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);

    png_text text;
    if (!raster.geotransform.empty()) {
        text = png_text{};
        text.compression = PNG_TEXT_COMPRESSION_NONE;
        text.key = const_cast<char*>(kGeotransformKey);
        text.text = const_cast<char*>(raster.geotransform.c_str());
        text.text_length = raster.geotransform.size();
        png_set_text(png, info, &text, 1);
    }

    png_write_info(png, info);
    std::vector<png_bytep> rows(static_cast<size_t>(raster.height));
    for (int r = 0; r < raster.height; ++r) {
        rows[static_cast<size_t>(r)] = const_cast<png_bytep>(
            raster.pixels.data() + static_cast<size_t>(r) * raster.width * raster.channels);
    }
    png_write_image(png, rows.data());
    png_write_end(png, info);
    png_destroy_write_struct(&png, &info);
}

Raster read_mask_png(const std::string& path) {
    Raster raw = read_png(path);
    if (raw.channels != 1) throw std::runtime_error("read_mask_png: " + path + " is not single-channel");
    for (uint8_t& v : raw.pixels) v = v >= 128 ? 1 : 0;
    return raw;
}

void write_mask_png(const Raster& mask, const std::string& path) {
    mask.validate();
    if (mask.channels != 1 || !mask.is_binary()) {
        throw std::invalid_argument("write_mask_png: mask must be single-channel with values {0,1}");
    }
    Raster scaled = mask;
    for (uint8_t& v : scaled.pixels) v = v ? 255 : 0;
    write_png(scaled, path);
}

ProbRaster read_prob_png(const std::string& path) {
    Raster raw = read_png(path);
    if (raw.channels != 1) throw std::runtime_error("read_prob_png: " + path + " is not single-channel");
    ProbRaster prob = ProbRaster::filled(raw.height, raw.width, 0.0);
    for (size_t i = 0; i < raw.pixels.size(); ++i) {
        prob.values[i] = static_cast<double>(raw.pixels[i]) / 255.0;
    }
    return prob;
}

void write_prob_png(const ProbRaster& prob, const std::string& path) {
    Raster raster = Raster::filled(prob.height, prob.width, 1, 0);
    for (size_t i = 0; i < prob.values.size(); ++i) {
        double v = prob.values[i];
        if (!(v >= 0.0 && v <= 1.0)) {
            throw std::invalid_argument("write_prob_png: values must lie in [0,1]");
        }
        raster.pixels[i] = static_cast<uint8_t>(std::lround(v * 255.0));
    }
    write_png(raster, path);
}

}  // namespace bfe::geo
