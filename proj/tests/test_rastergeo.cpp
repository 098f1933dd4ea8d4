#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <random>

#include "bfe/geometry.hpp"
#include "bfe/raster.hpp"
#include "test_support.hpp"

using namespace bfe;
using geo::PixelCoord;
using geo::PixelRegion;
using geo::Polygon;
using geo::Raster;
using test_support::rect_polygon;

namespace {

int64_t count_foreground(const Raster& mask) {
    int64_t n = 0;
    for (uint8_t v : mask.pixels) n += v;
    return n;
}

}  // namespace

TEST_CASE("rasterize: empty polygon list") {
    Raster mask = geo::rasterize({}, 8, 8);
    CHECK(count_foreground(mask) == 0);
}

TEST_CASE("rasterize: integer rectangle covers its area exactly") {
    Raster mask = geo::rasterize({rect_polygon(2, 2, 12, 12)}, 20, 20);
    CHECK(count_foreground(mask) == 100);
    // half-open: rows/cols 2..11 inside, 12 outside
    CHECK(mask.at(2, 2) == 1);
    CHECK(mask.at(11, 11) == 1);
    CHECK(mask.at(12, 12) == 0);
    CHECK(mask.at(1, 2) == 0);
}

TEST_CASE("rasterize: disjoint rectangles are additive") {
    const auto a = rect_polygon(1, 1, 5, 6);    // 4 x 5 = 20
    const auto b = rect_polygon(10, 10, 14, 18);  // 4 x 8 = 32
    CHECK(count_foreground(geo::rasterize({a}, 20, 20)) == 20);
    CHECK(count_foreground(geo::rasterize({b}, 20, 20)) == 32);
    CHECK(count_foreground(geo::rasterize({a, b}, 20, 20)) == 52);
}

TEST_CASE("rasterize: adjacent rectangles never double-claim a pixel") {
    // shared edge at col 6: the pixel column 6 belongs to the right rectangle
    const auto left = rect_polygon(0, 0, 6, 6);
    const auto right = rect_polygon(0, 6, 6, 12);
    Raster both = geo::rasterize({left, right}, 6, 12);
    CHECK(count_foreground(both) == 72);
    CHECK(count_foreground(geo::rasterize({left}, 6, 12)) +
              count_foreground(geo::rasterize({right}, 6, 12)) ==
          72);
    CHECK(geo::rasterize({left}, 6, 12).at(0, 6) == 0);
    CHECK(geo::rasterize({right}, 6, 12).at(0, 6) == 1);
}

TEST_CASE("rasterize: translation equivariance") {
    std::mt19937_64 rng(1234);
    Polygon tri;
    tri.exterior = {{1.0, 2.0}, {9.5, 4.0}, {4.0, 11.0}, {1.0, 2.0}};
    Raster base = geo::rasterize({tri}, 16, 16);
    for (auto [dr, dc] : {std::pair{3, 2}, std::pair{5, 0}, std::pair{0, 4}}) {
        Polygon moved = tri;
        for (auto& v : moved.exterior) {
            v.row += dr;
            v.col += dc;
        }
        Raster shifted = geo::rasterize({moved}, 16 + dr, 16 + dc);
        for (int r = 0; r < 16; ++r) {
            for (int c = 0; c < 16; ++c) {
                REQUIRE(base.at(r, c) == shifted.at(r + dr, c + dc));
            }
        }
    }
    (void)rng;
}

TEST_CASE("rasterize: out-of-bounds parts are clipped") {
    Raster mask = geo::rasterize({rect_polygon(-5, -5, 3, 3)}, 10, 10);
    CHECK(count_foreground(mask) == 9);  // rows/cols 0..2 remain
    CHECK(mask.at(0, 0) == 1);
}

TEST_CASE("rasterize: holes are excluded") {
    Polygon donut = rect_polygon(0, 0, 10, 10);
    donut.holes.push_back({{3, 3}, {3, 7}, {7, 7}, {7, 3}, {3, 3}});
    Raster mask = geo::rasterize({donut}, 12, 12);
    CHECK(count_foreground(mask) == 100 - 16);
    CHECK(mask.at(5, 5) == 0);
    CHECK(mask.at(1, 1) == 1);
}

TEST_CASE("edge_mask: perimeter of a 10x10 square at width 1") {
    const auto square = rect_polygon(2, 2, 12, 12);
    Raster edges = geo::edge_mask({square}, 20, 20, 1);
    CHECK(count_foreground(edges) == 36);  // 4*10 - 4
    CHECK(edges.at(2, 2) == 1);
    CHECK(edges.at(5, 5) == 0);  // interior
}

TEST_CASE("edge_mask: width covering the half-width equals the building mask") {
    const auto square = rect_polygon(2, 2, 12, 12);
    Raster building = geo::rasterize({square}, 20, 20);
    Raster edges = geo::edge_mask({square}, 20, 20, 5);
    CHECK(edges.pixels == building.pixels);
}

TEST_CASE("edge_mask: empty polygons, subset and monotonicity properties") {
    CHECK(count_foreground(geo::edge_mask({}, 8, 8, 2)) == 0);

    std::vector<Polygon> polys{rect_polygon(1, 1, 9, 14), rect_polygon(12, 3, 18, 9)};
    Raster building = geo::rasterize(polys, 24, 24);
    Raster prev = geo::edge_mask(polys, 24, 24, 1);
    for (int w = 1; w <= 6; ++w) {
        Raster cur = geo::edge_mask(polys, 24, 24, w);
        for (size_t i = 0; i < cur.pixels.size(); ++i) {
            CHECK(cur.pixels[i] <= building.pixels[i]);  // edge subset of building
            if (w > 1) CHECK(prev.pixels[i] <= cur.pixels[i]);  // nested in width
        }
        prev = cur;
    }
}

TEST_CASE("edge_mask: no spurious edge where a building crosses the raster border") {
    // building continues below the window: rows 5..14 of a 10-row window
    const auto tall = rect_polygon(5, 2, 15, 8);
    Raster edges = geo::edge_mask({tall}, 10, 10, 1);
    // bottom row of the window is interior to the polygon: not an edge
    CHECK(edges.at(9, 4) == 0);
    CHECK(edges.at(5, 4) == 1);  // true top boundary
    CHECK(edges.at(7, 2) == 1);  // true side boundary
}

TEST_CASE("region_iou: identity, disjoint, exact thirds") {
    auto region = [](int r0, int c0, int r1, int c1) {
        std::vector<PixelCoord> px;
        for (int r = r0; r < r1; ++r) {
            for (int c = c0; c < c1; ++c) px.push_back({r, c});
        }
        return PixelRegion(px);
    };

    PixelRegion a = region(0, 0, 10, 10);
    CHECK(geo::region_iou(a, a) == 1.0);

    PixelRegion b = region(20, 20, 30, 30);
    CHECK(geo::region_iou(a, b) == 0.0);

    // two 10x10 squares overlapping in a 5x10 strip: 50 / 150
    PixelRegion c = region(5, 0, 15, 10);
    CHECK(geo::region_iou(a, c) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
    CHECK(geo::region_iou(c, a) == geo::region_iou(a, c));
}

TEST_CASE("region_iou: equals 1 only for identical pixel sets") {
    PixelRegion a({{0, 0}, {0, 1}});
    PixelRegion b({{0, 0}, {0, 1}, {0, 2}});
    CHECK(geo::region_iou(a, b) < 1.0);
    CHECK(geo::region_iou(a, b) == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("region_iou: bbox fast path agrees with brute pixel counting") {
    std::mt19937_64 rng(77);
    for (int trial = 0; trial < 200; ++trial) {
        auto blob_a = test_support::grow_blob(rng, 1 + static_cast<int>(rng() % 30), 12);
        auto blob_b = test_support::grow_blob(rng, 1 + static_cast<int>(rng() % 30), 12);
        // scatter b around so some pairs are bbox-disjoint
        const int dr = static_cast<int>(rng() % 30) - 15;
        const int dc = static_cast<int>(rng() % 30) - 15;
        for (auto& p : blob_b) {
            p.row += dr;
            p.col += dc;
        }
        PixelRegion a(blob_a), b(blob_b);

        std::set<std::pair<int, int>> sa, sb;
        for (auto& p : a.pixels()) sa.insert({p.row, p.col});
        for (auto& p : b.pixels()) sb.insert({p.row, p.col});
        int64_t inter = 0;
        for (auto& p : sa) inter += sb.count(p);
        const double brute =
            static_cast<double>(inter) / static_cast<double>(sa.size() + sb.size() - inter);
        CHECK(geo::region_iou(a, b) == doctest::Approx(brute).epsilon(1e-15));
    }
}

TEST_CASE("geojson round trip preserves polygons and extents") {
    std::vector<Polygon> polys;
    polys.push_back(rect_polygon(1.5, -0.5, 7.5, 4.5));
    Polygon with_hole = rect_polygon(10, 10, 20, 20);
    with_hole.holes.push_back({{12, 12}, {12, 15}, {15, 15}, {15, 12}, {12, 12}});
    polys.push_back(with_hole);

    const std::string path = "geojson_roundtrip_test.geojson";
    geo::write_geojson(polys, 32, 48, path);
    geo::PolygonFile loaded = geo::read_geojson(path);
    CHECK(loaded.image_height == 32);
    CHECK(loaded.image_width == 48);
    REQUIRE(loaded.polygons.size() == 2);
    CHECK(loaded.polygons[0].exterior == polys[0].exterior);
    CHECK(loaded.polygons[1].holes == polys[1].holes);
    std::filesystem::remove(path);
}

TEST_CASE("png round trips: rgb, mask, probability, geotransform") {
    std::mt19937_64 rng(99);
    Raster rgb = Raster::filled(9, 13, 3, 0);
    for (auto& v : rgb.pixels) v = static_cast<uint8_t>(rng() % 256);
    rgb.geotransform = "306250.0,0.5,0,4111090.0,0,-0.5";
    geo::write_png(rgb, "png_rgb_test.png");
    Raster rgb2 = geo::read_png("png_rgb_test.png");
    CHECK(rgb2.channels == 3);
    CHECK(rgb2.pixels == rgb.pixels);
    CHECK(rgb2.geotransform == rgb.geotransform);

    Raster mask = Raster::filled(7, 7, 1, 0);
    mask.at(3, 3) = 1;
    mask.at(0, 6) = 1;
    geo::write_mask_png(mask, "png_mask_test.png");
    Raster mask2 = geo::read_mask_png("png_mask_test.png");
    CHECK(mask2.pixels == mask.pixels);

    geo::ProbRaster prob = geo::ProbRaster::filled(5, 4, 0.0);
    for (size_t i = 0; i < prob.values.size(); ++i) prob.values[i] = (i % 256) / 255.0;
    geo::write_prob_png(prob, "png_prob_test.png");
    geo::ProbRaster prob2 = geo::read_prob_png("png_prob_test.png");
    for (size_t i = 0; i < prob.values.size(); ++i) {
        CHECK(prob2.values[i] == doctest::Approx(prob.values[i]).epsilon(1e-12));
    }
    for (const char* f : {"png_rgb_test.png", "png_mask_test.png", "png_prob_test.png"}) {
        std::filesystem::remove(f);
    }
}
