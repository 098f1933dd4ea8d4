#pragma once

#include <string>
#include <utility>
#include <vector>

#include "bfe/raster.hpp"
#include "bfe/tensor.hpp"

// Overlap tiling: a parent raster is split into non-overlapping core tiles;
// each core picks up a `margin`-pixel neighborhood from the parent on every
// side (zero-filled where the margin falls outside), the network runs on the
// augmented tile, and outputs are cropped back to the core before loss or
// stitching.

namespace bfe::nepagg {

struct TileRecord {
    int row_index = 0;
    int col_index = 0;
    int origin_row = 0;  // top-left of the core tile in parent coordinates
    int origin_col = 0;
    int core_w = 0;
    int core_h = 0;
    int margin = 0;
    int parent_height = 0;
    int parent_width = 0;
    bool padded = false;  // ragged edge tile, zero-padded to full core size

    int augmented_w() const { return core_w + 2 * margin; }
    int augmented_h() const { return core_h + 2 * margin; }
    std::string id() const;  // "r###_c###"

    bool operator==(const TileRecord&) const = default;
};

/// Row-major grid of non-overlapping cores covering the parent. Ragged edge
/// tiles keep the full core size and are flagged for zero padding.
std::vector<TileRecord> split_raster(const geo::Raster& parent, int core_w, int core_h,
                                     int margin = 0);

/// The (core + 2k)-sized window centered on the core, copied from the parent
/// where it overlaps it and zero elsewhere.
geo::Raster augment_tile(const geo::Raster& parent, const TileRecord& rec, int margin);

/// Remove `margin` pixels from every side.
geo::Raster crop_core(const geo::Raster& augmented, int margin);
nn::Tensor crop_core(const nn::Tensor& augmented, int margin);

/// Inverse of the split: writes each core at its origin; the padding of
/// ragged tiles is discarded. Throws on missing or duplicate tiles.
geo::Raster stitch(const std::vector<std::pair<TileRecord, geo::Raster>>& tiles);

// Tile manifest: parent dimensions, core size, margin, every record.
struct TileManifest {
    int parent_height = 0;
    int parent_width = 0;
    int channels = 1;
    int core_w = 0;
    int core_h = 0;
    int margin = 0;
    std::string geotransform;
    std::vector<TileRecord> records;
};

void write_tile_manifest(const TileManifest& manifest, const std::string& path);
TileManifest read_tile_manifest(const std::string& path);

}  // namespace bfe::nepagg
