#include "bfe/polygonize.hpp"

#include <algorithm>
#include <array>
#include <deque>
#include <stdexcept>

namespace bfe::polygonize {

using geo::PixelCoord;
using geo::PixelRegion;
using geo::Polygon;
using geo::ProbRaster;
using geo::Raster;
using geo::Vertex;

Raster binarize(const ProbRaster& prob, double threshold) {
    if (!(threshold >= 0.0 && threshold <= 1.0)) {
        throw std::invalid_argument("binarize: threshold must lie in [0,1]");
    }
    Raster mask = Raster::filled(prob.height, prob.width, 1, 0);
    for (size_t i = 0; i < prob.values.size(); ++i) {
        mask.pixels[i] = prob.values[i] >= threshold ? 1 : 0;
    }
    return mask;
}

std::vector<PixelRegion> connected_components(const Raster& mask) {
    mask.validate();
    if (mask.channels != 1 || !mask.is_binary()) {
        throw std::invalid_argument("connected_components: mask must be single-channel binary");
    }
    const int H = mask.height, W = mask.width;
    std::vector<uint8_t> visited(static_cast<size_t>(H) * W, 0);
    std::vector<PixelRegion> regions;
    std::vector<PixelCoord> queue;

    // Row-major scan: each region is first met at its top-most, left-most
    // pixel, so emission order is already canonical.
    for (int r = 0; r < H; ++r) {
        for (int c = 0; c < W; ++c) {
            const size_t idx = static_cast<size_t>(r) * W + c;
            if (mask.pixels[idx] == 0 || visited[idx]) continue;
            queue.clear();
            queue.push_back({r, c});
            visited[idx] = 1;
            std::vector<PixelCoord> members;
            while (!queue.empty()) {
                PixelCoord p = queue.back();
                queue.pop_back();
                members.push_back(p);
                for (int dr = -1; dr <= 1; ++dr) {
                    for (int dc = -1; dc <= 1; ++dc) {
                        if (dr == 0 && dc == 0) continue;
                        const int nr = p.row + dr, nc = p.col + dc;
                        if (nr < 0 || nc < 0 || nr >= H || nc >= W) continue;
                        const size_t nidx = static_cast<size_t>(nr) * W + nc;
                        if (mask.pixels[nidx] == 0 || visited[nidx]) continue;
                        visited[nidx] = 1;
                        queue.push_back({nr, nc});
                    }
                }
            }
            regions.emplace_back(std::move(members));
        }
    }
    return regions;
}

// ---------------------------------------------------------------------------
// boundary tracing

namespace {

// Local working grid: the region's bounding box plus a one-pixel background
// ring, so the walk never consults out-of-grid pixels.
struct LocalGrid {
    int h = 0, w = 0;
    int32_t row0 = 0, col0 = 0;  // global coords of local pixel (0,0)
    std::vector<uint8_t> fg;

    bool at(int r, int c) const {
        if (r < 0 || c < 0 || r >= h || c >= w) return false;
        return fg[static_cast<size_t>(r) * w + c] != 0;
    }
    void set(int r, int c) { fg[static_cast<size_t>(r) * w + c] = 1; }
};

LocalGrid build_grid(const PixelRegion& region) {
    const auto& box = region.bbox();
    LocalGrid g;
    g.row0 = box.min_row - 1;
    g.col0 = box.min_col - 1;
    g.h = box.max_row - box.min_row + 3;
    g.w = box.max_col - box.min_col + 3;
    g.fg.assign(static_cast<size_t>(g.h) * g.w, 0);
    for (const PixelCoord& p : region.pixels()) g.set(p.row - g.row0, p.col - g.col0);
    return g;
}

// Fill interior holes: background 4-components not reachable from the border
// ring become foreground (4-connectivity is the dual of 8-connected
// foreground).
void fill_holes(LocalGrid& g) {
    std::vector<uint8_t> outside(static_cast<size_t>(g.h) * g.w, 0);
    std::deque<std::pair<int, int>> queue;
    queue.emplace_back(0, 0);
    outside[0] = 1;
    static constexpr std::array<std::pair<int, int>, 4> kSteps{{{0, 1}, {1, 0}, {0, -1}, {-1, 0}}};
    while (!queue.empty()) {
        auto [r, c] = queue.front();
        queue.pop_front();
        for (auto [dr, dc] : kSteps) {
            const int nr = r + dr, nc = c + dc;
            if (nr < 0 || nc < 0 || nr >= g.h || nc >= g.w) continue;
            const size_t idx = static_cast<size_t>(nr) * g.w + nc;
            if (outside[idx] || g.fg[idx]) continue;
            outside[idx] = 1;
            queue.emplace_back(nr, nc);
        }
    }
    for (size_t i = 0; i < g.fg.size(); ++i) {
        if (!g.fg[i] && !outside[i]) g.fg[i] = 1;
    }
}

enum class Dir : int { East = 0, South = 1, West = 2, North = 3 };

constexpr std::array<std::pair<int, int>, 4> kDirStep{{{0, 1}, {1, 0}, {0, -1}, {-1, 0}}};

// Pixels on either side of the edge leaving corner (i,j) in direction d.
// Corner (i,j) is the point (i-0.5, j-0.5); its four adjacent pixels are
// NW=(i-1,j-1), NE=(i-1,j), SW=(i,j-1), SE=(i,j).
void ahead_pixels(int i, int j, Dir d, std::pair<int, int>& left, std::pair<int, int>& right) {
    switch (d) {
        case Dir::East: left = {i - 1, j}; right = {i, j}; return;
        case Dir::South: left = {i, j}; right = {i, j - 1}; return;
        case Dir::West: left = {i, j - 1}; right = {i - 1, j - 1}; return;
        case Dir::North: left = {i - 1, j - 1}; right = {i - 1, j}; return;
    }
}

Dir turn_left(Dir d) { return static_cast<Dir>((static_cast<int>(d) + 3) % 4); }
Dir turn_right(Dir d) { return static_cast<Dir>((static_cast<int>(d) + 1) % 4); }

}  // namespace

Polygon trace_boundary(const PixelRegion& region) {
    if (region.empty()) throw std::invalid_argument("trace_boundary: empty region");
    LocalGrid grid = build_grid(region);
    fill_holes(grid);

    // Walk pixel corners keeping foreground on the right. At a corner where
    // only the ahead-left pixel is foreground (two squares touching
    // diagonally), turning left keeps the 8-connected region inside a single
    // ring.
    const PixelCoord anchor = region.anchor();
    const int start_i = anchor.row - grid.row0;
    const int start_j = anchor.col - grid.col0;
    const Dir start_dir = Dir::East;

    std::vector<std::pair<int, int>> turns;
    int i = start_i, j = start_j;
    Dir dir = start_dir;
    const int64_t max_steps = 4ll * (grid.h + 1) * (grid.w + 1) + 8;
    int64_t steps = 0;
    do {
        if (++steps > max_steps) throw std::logic_error("trace_boundary: walk failed to close");
        auto [di, dj] = kDirStep[static_cast<size_t>(dir)];
        i += di;
        j += dj;
        std::pair<int, int> left, right;
        ahead_pixels(i, j, dir, left, right);
        Dir ndir;
        if (grid.at(left.first, left.second)) {
            ndir = turn_left(dir);
        } else if (grid.at(right.first, right.second)) {
            ndir = dir;
        } else {
            ndir = turn_right(dir);
        }
        if (ndir != dir) turns.emplace_back(i, j);
        dir = ndir;
    } while (!(i == start_i && j == start_j && dir == start_dir));

    Polygon poly;
    poly.exterior.reserve(turns.size() + 1);
    auto corner_vertex = [&](std::pair<int, int> corner) {
        return Vertex{static_cast<double>(corner.first + grid.row0) - 0.5,
                      static_cast<double>(corner.second + grid.col0) - 0.5};
    };
    poly.exterior.push_back(corner_vertex({start_i, start_j}));
    for (const auto& t : turns) poly.exterior.push_back(corner_vertex(t));
    // the walk records the start corner as its final turn, closing the ring
    return poly;
}

// ---------------------------------------------------------------------------
// extraction

PolygonSet extract(const ProbRaster& prob, const ExtractOptions& options) {
    for (double v : prob.values) {
        if (!(v >= 0.0 && v <= 1.0)) throw std::invalid_argument("extract: probabilities must lie in [0,1]");
    }
    Raster mask = binarize(prob, options.threshold);
    if (options.edge_prob != nullptr) {
        if (options.edge_prob->height != prob.height || options.edge_prob->width != prob.width) {
            throw std::invalid_argument("extract: edge probability extents do not match");
        }
        for (size_t idx = 0; idx < mask.pixels.size(); ++idx) {
            if (mask.pixels[idx] && options.edge_prob->values[idx] >= options.edge_threshold) {
                mask.pixels[idx] = 0;
            }
        }
    }

    PolygonSet set;
    for (PixelRegion& region : connected_components(mask)) {
        if (region.area() < options.min_area) continue;
        Polygon poly = trace_boundary(region);
        set.entries.push_back({std::move(region), std::move(poly)});
    }
    return set;
}

PolygonSet from_polygons(const std::vector<Polygon>& polygons, int height, int width) {
    PolygonSet set;
    for (const Polygon& poly : polygons) {
        Raster mask = geo::rasterize({poly}, height, width);
        std::vector<PixelCoord> pixels;
        for (int r = 0; r < height; ++r) {
            for (int c = 0; c < width; ++c) {
                if (mask.at(r, c)) pixels.push_back({r, c});
            }
        }
        if (pixels.empty()) continue;  // degenerate or fully outside the grid
        set.entries.push_back({PixelRegion(std::move(pixels)), poly});
    }
    std::sort(set.entries.begin(), set.entries.end(),
              [](const PolygonSet::Entry& a, const PolygonSet::Entry& b) {
                  return a.region.anchor() < b.region.anchor();
              });
    return set;
}

}  // namespace bfe::polygonize
