#include "bfe/nepagg.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <set>
#include <stdexcept>

#include <json.hpp>

namespace bfe::nepagg {

using geo::Raster;
using nlohmann::json;

std::string TileRecord::id() const {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "r%03d_c%03d", row_index, col_index);
    return buf;
}

std::vector<TileRecord> split_raster(const Raster& parent, int core_w, int core_h, int margin) {
    parent.validate();
    if (core_w <= 0 || core_h <= 0) throw std::invalid_argument("split_raster: core extents must be positive");
    if (margin < 0) throw std::invalid_argument("split_raster: margin must be >= 0");

    const int rows = (parent.height + core_h - 1) / core_h;
    const int cols = (parent.width + core_w - 1) / core_w;
    std::vector<TileRecord> records;
    records.reserve(static_cast<size_t>(rows) * cols);
    for (int ri = 0; ri < rows; ++ri) {
        for (int ci = 0; ci < cols; ++ci) {
            TileRecord rec;
            rec.row_index = ri;
            rec.col_index = ci;
            rec.origin_row = ri * core_h;
            rec.origin_col = ci * core_w;
            rec.core_w = core_w;
            rec.core_h = core_h;
            rec.margin = margin;
            rec.parent_height = parent.height;
            rec.parent_width = parent.width;
            rec.padded = rec.origin_row + core_h > parent.height || rec.origin_col + core_w > parent.width;
            records.push_back(rec);
        }
    }
    return records;
}

Raster augment_tile(const Raster& parent, const TileRecord& rec, int margin) {
    parent.validate();
    if (margin < 0) throw std::invalid_argument("augment_tile: margin must be >= 0");
    if (rec.core_w <= 0 || rec.core_h <= 0) throw std::invalid_argument("augment_tile: invalid record");

    const int out_h = rec.core_h + 2 * margin;
    const int out_w = rec.core_w + 2 * margin;
    Raster out = Raster::filled(out_h, out_w, parent.channels, 0);
    out.geotransform = parent.geotransform;

    // window top-left in parent coordinates; anything outside stays zero
    const int top = rec.origin_row - margin;
    const int left = rec.origin_col - margin;
    const int r_lo = std::max(0, -top);
    const int r_hi = std::min(out_h, parent.height - top);
    const int c_lo = std::max(0, -left);
    const int c_hi = std::min(out_w, parent.width - left);
    const int ch = parent.channels;
    for (int r = r_lo; r < r_hi; ++r) {
        const uint8_t* src = &parent.pixels[static_cast<size_t>(((top + r) * parent.width + left + c_lo)) * ch];
        uint8_t* dst = &out.pixels[static_cast<size_t>((r * out_w + c_lo)) * ch];
        std::copy(src, src + static_cast<size_t>(c_hi - c_lo) * ch, dst);
    }
    return out;
}

Raster crop_core(const Raster& augmented, int margin) {
    augmented.validate();
    if (margin < 0) throw std::invalid_argument("crop_core: margin must be >= 0");
    const int out_h = augmented.height - 2 * margin;
    const int out_w = augmented.width - 2 * margin;
    if (out_h < 1 || out_w < 1) {
        throw std::invalid_argument("crop_core: margin " + std::to_string(margin) +
                                    " too large for a " + std::to_string(augmented.height) + "x" +
                                    std::to_string(augmented.width) + " raster");
    }
    Raster out = Raster::filled(out_h, out_w, augmented.channels, 0);
    out.geotransform = augmented.geotransform;
    const int ch = augmented.channels;
    for (int r = 0; r < out_h; ++r) {
        const uint8_t* src =
            &augmented.pixels[static_cast<size_t>(((r + margin) * augmented.width + margin)) * ch];
        std::copy(src, src + static_cast<size_t>(out_w) * ch,
                  &out.pixels[static_cast<size_t>(r * out_w) * ch]);
    }
    return out;
}

nn::Tensor crop_core(const nn::Tensor& augmented, int margin) {
    return nn::crop2d(augmented, margin);
}

Raster stitch(const std::vector<std::pair<TileRecord, Raster>>& tiles) {
    if (tiles.empty()) throw std::invalid_argument("stitch: no tiles");
    const TileRecord& first = tiles.front().first;
    const int parent_h = first.parent_height;
    const int parent_w = first.parent_width;
    const int channels = tiles.front().second.channels;
    if (parent_h <= 0 || parent_w <= 0) throw std::invalid_argument("stitch: records carry no parent extents");

    const int rows = (parent_h + first.core_h - 1) / first.core_h;
    const int cols = (parent_w + first.core_w - 1) / first.core_w;
    if (static_cast<int>(tiles.size()) != rows * cols) {
        throw std::invalid_argument("stitch: expected " + std::to_string(rows * cols) + " tiles, got " +
                                    std::to_string(tiles.size()));
    }

    std::set<std::pair<int, int>> seen;
    Raster out = Raster::filled(parent_h, parent_w, channels, 0);
    for (const auto& [rec, core] : tiles) {
        if (rec.parent_height != parent_h || rec.parent_width != parent_w ||
            rec.core_w != first.core_w || rec.core_h != first.core_h) {
            throw std::invalid_argument("stitch: records do not come from one split");
        }
        if (!seen.insert({rec.row_index, rec.col_index}).second) {
            throw std::invalid_argument("stitch: duplicate tile " + rec.id());
        }
        core.validate();
        if (core.height != rec.core_h || core.width != rec.core_w || core.channels != channels) {
            throw std::invalid_argument("stitch: tile " + rec.id() + " has unexpected extents");
        }
        const int r_hi = std::min(rec.core_h, parent_h - rec.origin_row);
        const int c_hi = std::min(rec.core_w, parent_w - rec.origin_col);
        for (int r = 0; r < r_hi; ++r) {
            const uint8_t* src = &core.pixels[static_cast<size_t>(r * rec.core_w) * channels];
            uint8_t* dst =
                &out.pixels[static_cast<size_t>(((rec.origin_row + r) * parent_w + rec.origin_col)) * channels];
            std::copy(src, src + static_cast<size_t>(c_hi) * channels, dst);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// manifest io

namespace {

json record_to_json(const TileRecord& rec) {
    json j;
    j["tile_id"] = rec.id();
    j["row_index"] = rec.row_index;
    j["col_index"] = rec.col_index;
    j["origin_row"] = rec.origin_row;
    j["origin_col"] = rec.origin_col;
    j["core_w"] = rec.core_w;
    j["core_h"] = rec.core_h;
    j["margin"] = rec.margin;
    j["parent_height"] = rec.parent_height;
    j["parent_width"] = rec.parent_width;
    j["padded"] = rec.padded;
    return j;
}

TileRecord record_from_json(const json& j) {
    TileRecord rec;
    rec.row_index = j.at("row_index").get<int>();
    rec.col_index = j.at("col_index").get<int>();
    rec.origin_row = j.at("origin_row").get<int>();
    rec.origin_col = j.at("origin_col").get<int>();
    rec.core_w = j.at("core_w").get<int>();
    rec.core_h = j.at("core_h").get<int>();
    rec.margin = j.at("margin").get<int>();
    rec.parent_height = j.at("parent_height").get<int>();
    rec.parent_width = j.at("parent_width").get<int>();
    rec.padded = j.at("padded").get<bool>();
    return rec;
}

}  // namespace

void write_tile_manifest(const TileManifest& manifest, const std::string& path) {
    json doc;
    doc["parent_height"] = manifest.parent_height;
    doc["parent_width"] = manifest.parent_width;
    doc["channels"] = manifest.channels;
    doc["core_w"] = manifest.core_w;
    doc["core_h"] = manifest.core_h;
    doc["margin"] = manifest.margin;
    if (!manifest.geotransform.empty()) doc["geotransform"] = manifest.geotransform;
    json tiles = json::array();
    for (const TileRecord& rec : manifest.records) tiles.push_back(record_to_json(rec));
    doc["tiles"] = std::move(tiles);

    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("write_tile_manifest: cannot open " + path);
    out << doc.dump(2) << "\n";
}

TileManifest read_tile_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("read_tile_manifest: cannot open " + path);
    json doc = json::parse(in);
    TileManifest manifest;
    manifest.parent_height = doc.at("parent_height").get<int>();
    manifest.parent_width = doc.at("parent_width").get<int>();
    manifest.channels = doc.at("channels").get<int>();
    manifest.core_w = doc.at("core_w").get<int>();
    manifest.core_h = doc.at("core_h").get<int>();
    manifest.margin = doc.at("margin").get<int>();
    manifest.geotransform = doc.value("geotransform", "");
    for (const auto& t : doc.at("tiles")) manifest.records.push_back(record_from_json(t));
    return manifest;
}

}  // namespace bfe::nepagg
