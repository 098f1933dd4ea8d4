#include "bfe/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace bfe::geo {

void Polygon::normalize() {
    auto close_ring = [](std::vector<Vertex>& ring) {
        if (!ring.empty() && !(ring.front() == ring.back())) ring.push_back(ring.front());
        std::vector<Vertex> distinct(ring.begin(), ring.empty() ? ring.end() : ring.end() - 1);
        std::sort(distinct.begin(), distinct.end(), [](const Vertex& a, const Vertex& b) {
            return a.row != b.row ? a.row < b.row : a.col < b.col;
        });
        distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
        if (distinct.size() < 3) throw std::invalid_argument("Polygon: ring needs >= 3 distinct vertices");
    };
    close_ring(exterior);
    for (auto& hole : holes) close_ring(hole);
}

PixelRegion::PixelRegion(std::vector<PixelCoord> pixels) : pixels_(std::move(pixels)) {
    if (pixels_.empty()) throw std::invalid_argument("PixelRegion: empty pixel set");
    std::sort(pixels_.begin(), pixels_.end());
    pixels_.erase(std::unique(pixels_.begin(), pixels_.end()), pixels_.end());
    bbox_.min_row = bbox_.max_row = pixels_.front().row;
    bbox_.min_col = bbox_.max_col = pixels_.front().col;
    for (const PixelCoord& p : pixels_) {
        bbox_.min_row = std::min(bbox_.min_row, p.row);
        bbox_.max_row = std::max(bbox_.max_row, p.row);
        bbox_.min_col = std::min(bbox_.min_col, p.col);
        bbox_.max_col = std::max(bbox_.max_col, p.col);
    }
}

// ---------------------------------------------------------------------------
// rasterize

namespace {

// Crossing columns of all ring edges with the horizontal line row == r,
// counting an edge over the half-open row span [min_row, max_row). Paired
// with half-open column spans below, this is the tie-break that assigns a
// center on a shared boundary to exactly one polygon.
void collect_crossings(const std::vector<Vertex>& ring, double r, std::vector<double>& cols) {
    const size_t n = ring.size();
    if (n < 2) return;
    for (size_t i = 0; i + 1 < n; ++i) {
        const Vertex& a = ring[i];
        const Vertex& b = ring[i + 1];
        if (a.row == b.row) continue;  // horizontal edges never cross a scanline half-open in row
        const double lo = std::min(a.row, b.row);
        const double hi = std::max(a.row, b.row);
        if (r < lo || r >= hi) continue;
        const double t = (r - a.row) / (b.row - a.row);
        cols.push_back(a.col + t * (b.col - a.col));
    }
}

void fill_row_spans(std::vector<double>& cols, int r, int width, Raster& mask) {
    std::sort(cols.begin(), cols.end());
    for (size_t i = 0; i + 1 < cols.size(); i += 2) {
        // centers c with cols[i] <= c < cols[i+1]
        int64_t c_lo = static_cast<int64_t>(std::ceil(cols[i]));
        int64_t c_hi = static_cast<int64_t>(std::ceil(cols[i + 1])) - 1;
        c_lo = std::max<int64_t>(c_lo, 0);
        c_hi = std::min<int64_t>(c_hi, width - 1);
        for (int64_t c = c_lo; c <= c_hi; ++c) mask.at(r, static_cast<int>(c)) = 1;
    }
}

}  // namespace

Raster rasterize(const std::vector<Polygon>& polygons, int height, int width) {
    if (height <= 0 || width <= 0) throw std::invalid_argument("rasterize: extents must be positive");
    Raster mask = Raster::filled(height, width, 1, 0);
    std::vector<double> cols;
    for (const Polygon& poly : polygons) {
        if (poly.exterior.size() < 3) continue;
        double min_r = poly.exterior.front().row, max_r = min_r;
        for (const Vertex& v : poly.exterior) {
            min_r = std::min(min_r, v.row);
            max_r = std::max(max_r, v.row);
        }
        const int r_lo = std::max(0, static_cast<int>(std::ceil(min_r)));
        const int r_hi = std::min(height - 1, static_cast<int>(std::floor(max_r)));
        for (int r = r_lo; r <= r_hi; ++r) {
            cols.clear();
            collect_crossings(poly.exterior, static_cast<double>(r), cols);
            for (const auto& hole : poly.holes) collect_crossings(hole, static_cast<double>(r), cols);
            fill_row_spans(cols, r, width, mask);
        }
    }
    return mask;
}

// ---------------------------------------------------------------------------
// edge mask

Raster edge_mask(const std::vector<Polygon>& polygons, int height, int width, int edge_width) {
    if (edge_width < 1) throw std::invalid_argument("edge_mask: edge_width must be >= 1");
    if (height <= 0 || width <= 0) throw std::invalid_argument("edge_mask: extents must be positive");

    // Rasterize on a grid expanded by edge_width so distances near the raster
    // border see the true polygon complement rather than the cut.
    const int pad = edge_width;
    const int eh = height + 2 * pad, ew = width + 2 * pad;
    std::vector<Polygon> shifted = polygons;
    for (Polygon& poly : shifted) {
        for (Vertex& v : poly.exterior) {
            v.row += pad;
            v.col += pad;
        }
        for (auto& hole : poly.holes) {
            for (Vertex& v : hole) {
                v.row += pad;
                v.col += pad;
            }
        }
    }
    Raster big = rasterize(shifted, eh, ew);

    // Multi-source BFS from the complement; 8-neighbor steps give chessboard
    // distance. Cells beyond the expanded grid are treated as complement.
    std::vector<int> dist(static_cast<size_t>(eh) * ew, -1);
    std::deque<std::pair<int, int>> frontier;
    for (int r = 0; r < eh; ++r) {
        for (int c = 0; c < ew; ++c) {
            const bool border = r == 0 || c == 0 || r == eh - 1 || c == ew - 1;
            if (big.at(r, c) == 0) {
                dist[static_cast<size_t>(r) * ew + c] = 0;
                frontier.emplace_back(r, c);
            } else if (border) {
                // foreground on the expanded border: closest complement is just outside
                dist[static_cast<size_t>(r) * ew + c] = 1;
                frontier.emplace_back(r, c);
            }
        }
    }
    while (!frontier.empty()) {
        auto [r, c] = frontier.front();
        frontier.pop_front();
        const int d = dist[static_cast<size_t>(r) * ew + c];
        if (d >= edge_width) continue;  // no need to expand past the band of interest
        for (int dr = -1; dr <= 1; ++dr) {
            for (int dc = -1; dc <= 1; ++dc) {
                if (dr == 0 && dc == 0) continue;
                const int nr = r + dr, nc = c + dc;
                if (nr < 0 || nc < 0 || nr >= eh || nc >= ew) continue;
                int& nd = dist[static_cast<size_t>(nr) * ew + nc];
                if (nd == -1) {
                    nd = d + 1;
                    frontier.emplace_back(nr, nc);
                }
            }
        }
    }

    Raster edges = Raster::filled(height, width, 1, 0);
    for (int r = 0; r < height; ++r) {
        for (int c = 0; c < width; ++c) {
            if (big.at(r + pad, c + pad) == 0) continue;
            const int d = dist[static_cast<size_t>(r + pad) * ew + (c + pad)];
            if (d != -1 && d <= edge_width) edges.at(r, c) = 1;
        }
    }
    return edges;
}

// ---------------------------------------------------------------------------
// IoU

double region_iou(const PixelRegion& a, const PixelRegion& b) {
    if (a.empty() || b.empty()) throw std::invalid_argument("region_iou: empty region");
    if (!a.bbox().intersects(b.bbox())) return 0.0;
    const auto& pa = a.pixels();
    const auto& pb = b.pixels();
    size_t i = 0, j = 0;
    int64_t inter = 0;
    while (i < pa.size() && j < pb.size()) {
        if (pa[i] < pb[j]) {
            ++i;
        } else if (pb[j] < pa[i]) {
            ++j;
        } else {
            ++inter;
            ++i;
            ++j;
        }
    }
    const int64_t uni = a.area() + b.area() - inter;
    return static_cast<double>(inter) / static_cast<double>(uni);
}

// ---------------------------------------------------------------------------
// GeoJSON

namespace {

using nlohmann::json;

json ring_to_json(const std::vector<Vertex>& ring) {
    json out = json::array();
    for (const Vertex& v : ring) out.push_back(json::array({v.col, v.row}));
    return out;
}

std::vector<Vertex> ring_from_json(const json& arr) {
    std::vector<Vertex> ring;
    for (const auto& pt : arr) {
        if (!pt.is_array() || pt.size() < 2) throw std::runtime_error("geojson: malformed coordinate");
        ring.push_back(Vertex{pt[1].get<double>(), pt[0].get<double>()});
    }
    return ring;
}

}  // namespace

PolygonFile read_geojson(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("read_geojson: cannot open " + path);
    json doc = json::parse(in);
    if (doc.value("type", "") != "FeatureCollection") {
        throw std::runtime_error("read_geojson: " + path + " is not a FeatureCollection");
    }
    PolygonFile file;
    file.image_height = doc.value("image_height", 0);
    file.image_width = doc.value("image_width", 0);
    for (const auto& feature : doc.value("features", json::array())) {
        const json& geom = feature.at("geometry");
        if (geom.value("type", "") != "Polygon") {
            throw std::runtime_error("read_geojson: only Polygon geometries are supported");
        }
        const json& rings = geom.at("coordinates");
        if (rings.empty()) continue;
        Polygon poly;
        poly.exterior = ring_from_json(rings[0]);
        for (size_t i = 1; i < rings.size(); ++i) poly.holes.push_back(ring_from_json(rings[i]));
        poly.normalize();
        file.polygons.push_back(std::move(poly));
    }
    return file;
}

void write_geojson(const std::vector<Polygon>& polygons, int image_height, int image_width,
                   const std::string& path) {
    json features = json::array();
    for (const Polygon& poly : polygons) {
        json rings = json::array();
        rings.push_back(ring_to_json(poly.exterior));
        for (const auto& hole : poly.holes) rings.push_back(ring_to_json(hole));
        json feature;
        feature["type"] = "Feature";
        feature["properties"] = json::object();
        feature["geometry"] = {{"type", "Polygon"}, {"coordinates", std::move(rings)}};
        features.push_back(std::move(feature));
    }
    json doc;
    doc["type"] = "FeatureCollection";
    doc["image_height"] = image_height;
    doc["image_width"] = image_width;
    doc["features"] = std::move(features);

    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("write_geojson: cannot open " + path);
    out << doc.dump(2) << "\n";
}

}  // namespace bfe::geo
