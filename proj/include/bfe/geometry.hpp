#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bfe/raster.hpp"

namespace bfe::geo {

/// A vertex in continuous pixel coordinates. Pixel (r,c) is centered at
/// (row=r, col=c) and covers the square [r-0.5, r+0.5] x [c-0.5, c+0.5].
struct Vertex {
    double row = 0.0;
    double col = 0.0;
    bool operator==(const Vertex&) const = default;
};

/// Closed ring(s) of vertices. The exterior ring is closed (first == last
/// after normalize()); holes use the same form. Synthetic polygons are
/// simple; ingested ones are taken as-is.
struct Polygon {
    std::vector<Vertex> exterior;
    std::vector<std::vector<Vertex>> holes;

    /// Ensures rings are explicitly closed; throws if a ring has fewer than
    /// 3 distinct vertices.
    void normalize();
    bool operator==(const Polygon&) const = default;
};

struct PixelCoord {
    int32_t row = 0;
    int32_t col = 0;
    auto operator<=>(const PixelCoord&) const = default;
};

struct BoundingBox {
    int32_t min_row = 0, min_col = 0, max_row = -1, max_col = -1;  // inclusive
    bool intersects(const BoundingBox& other) const {
        return min_row <= other.max_row && other.min_row <= max_row &&
               min_col <= other.max_col && other.min_col <= max_col;
    }
};

/// A connected set of foreground pixels with cached bounding box and area.
class PixelRegion {
public:
    PixelRegion() = default;
    /// Sorts and de-duplicates; throws on an empty pixel list.
    explicit PixelRegion(std::vector<PixelCoord> pixels);

    const std::vector<PixelCoord>& pixels() const { return pixels_; }
    const BoundingBox& bbox() const { return bbox_; }
    int64_t area() const { return static_cast<int64_t>(pixels_.size()); }
    bool empty() const { return pixels_.empty(); }
    /// Canonical key: the top-most, then left-most pixel.
    PixelCoord anchor() const { return pixels_.front(); }

    bool operator==(const PixelRegion& other) const { return pixels_ == other.pixels_; }

private:
    std::vector<PixelCoord> pixels_;  // sorted (row, col)
    BoundingBox bbox_;
};

/// Scanline rasterization with the even-odd rule on pixel centers. A center
/// exactly on a ring edge belongs to the polygon whose lower-coordinate
/// (top/left) boundary it sits on, so adjacent polygons never double-claim a
/// pixel. Parts outside the grid are clipped.
Raster rasterize(const std::vector<Polygon>& polygons, int height, int width);

/// Foreground pixels whose chessboard distance to the polygon complement is
/// <= edge_width. Computed on a grid expanded by edge_width so that a
/// building continuing past the raster border does not produce a spurious
/// edge along the cut.
Raster edge_mask(const std::vector<Polygon>& polygons, int height, int width, int edge_width);

/// |a intersect b| / |a union b| on exact pixel sets.
double region_iou(const PixelRegion& a, const PixelRegion& b);

// GeoJSON FeatureCollection io. Coordinates are written (col, row); the
// grid extents travel as top-level "image_height"/"image_width" members.
struct PolygonFile {
    std::vector<Polygon> polygons;
    int image_height = 0;  // 0 when the file carries no extents
    int image_width = 0;
};

PolygonFile read_geojson(const std::string& path);
void write_geojson(const std::vector<Polygon>& polygons, int image_height, int image_width,
                   const std::string& path);

}  // namespace bfe::geo
