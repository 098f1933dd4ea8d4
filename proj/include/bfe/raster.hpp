#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace bfe::geo {

/// 8-bit image grid, channels interleaved row-major. Mask rasters use one
/// channel with in-memory values {0,1} (stored as {0,255} in PNG files).
/// The geotransform is opaque metadata carried through untouched.
struct Raster {
    int height = 0;
    int width = 0;
    int channels = 1;
    std::vector<uint8_t> pixels;
    std::string geotransform;

    static Raster filled(int height, int width, int channels, uint8_t value);

    uint8_t& at(int row, int col, int channel = 0) {
        return pixels[static_cast<size_t>((row * width + col) * channels + channel)];
    }
    uint8_t at(int row, int col, int channel = 0) const {
        return pixels[static_cast<size_t>((row * width + col) * channels + channel)];
    }

    bool is_binary() const;
    void validate() const;
};

/// Single-channel probability grid with values in [0,1].
struct ProbRaster {
    int height = 0;
    int width = 0;
    std::vector<double> values;

    static ProbRaster filled(int height, int width, double value);

    double& at(int row, int col) { return values[static_cast<size_t>(row * width + col)]; }
    double at(int row, int col) const { return values[static_cast<size_t>(row * width + col)]; }
};

// PNG io. Gray or RGB depending on channels; masks map {0,1} <-> {0,255};
// probabilities are quantized to 8 bits. Encoding settings are fixed so
// identical inputs produce byte-identical files.
Raster read_png(const std::string& path);
void write_png(const Raster& raster, const std::string& path);
Raster read_mask_png(const std::string& path);
void write_mask_png(const Raster& mask, const std::string& path);
ProbRaster read_prob_png(const std::string& path);
void write_prob_png(const ProbRaster& prob, const std::string& path);

}  // namespace bfe::geo
