#pragma once

#include <vector>

#include "bfe/geometry.hpp"
#include "bfe/raster.hpp"

namespace bfe::polygonize {

/// Regions paired with their traced outlines, ordered by each region's
/// top-most then left-most pixel. The order is total and deterministic;
/// downstream greedy matching depends on it.
struct PolygonSet {
    struct Entry {
        geo::PixelRegion region;
        geo::Polygon polygon;
    };
    std::vector<Entry> entries;

    size_t size() const { return entries.size(); }
    bool empty() const { return entries.empty(); }
};

/// pixel = 1 iff prob >= threshold.
geo::Raster binarize(const geo::ProbRaster& prob, double threshold);

/// Maximal 8-connected foreground regions in canonical order.
std::vector<geo::PixelRegion> connected_components(const geo::Raster& mask);

/// Outer boundary of a region as a closed ring of pixel-corner vertices,
/// counter-clockwise with rows as the upward axis (clockwise in image view).
/// Interior holes are filled before tracing; rasterizing the result
/// reproduces the region's (hole-filled) pixel set exactly.
geo::Polygon trace_boundary(const geo::PixelRegion& region);

struct ExtractOptions {
    double threshold = 0.5;
    int64_t min_area = 0;  // 0 disables the area filter
    /// When set, building pixels whose edge probability is >= edge_threshold
    /// are cleared before labeling, letting a trained edge head split
    /// touching regions.
    const geo::ProbRaster* edge_prob = nullptr;
    double edge_threshold = 0.5;
};

/// binarize -> connected_components -> trace_boundary.
PolygonSet extract(const geo::ProbRaster& prob, const ExtractOptions& options = {});

/// Rasterizes each polygon individually (ground-truth side of the matching
/// protocol) and orders the resulting regions canonically. Polygons that
/// rasterize to zero pixels inside the grid are dropped.
PolygonSet from_polygons(const std::vector<geo::Polygon>& polygons, int height, int width);

}  // namespace bfe::polygonize
