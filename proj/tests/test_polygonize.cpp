#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "bfe/polygonize.hpp"
#include "test_support.hpp"

using namespace bfe;
using geo::PixelCoord;
using geo::PixelRegion;
using geo::Polygon;
using geo::ProbRaster;
using geo::Raster;

namespace {

Raster mask_from_pixels(int h, int w, const std::vector<PixelCoord>& pixels) {
    Raster mask = Raster::filled(h, w, 1, 0);
    for (const auto& p : pixels) mask.at(p.row, p.col) = 1;
    return mask;
}

bool regions_equal(const PixelRegion& a, const PixelRegion& b) { return a == b; }

}  // namespace

TEST_CASE("binarize thresholds with >= convention") {
    ProbRaster prob = ProbRaster::filled(2, 2, 0.0);
    prob.at(0, 0) = 0.5;
    prob.at(0, 1) = 0.4999;
    prob.at(1, 0) = 1.0;
    Raster mask = polygonize::binarize(prob, 0.5);
    CHECK(mask.at(0, 0) == 1);  // boundary value is foreground
    CHECK(mask.at(0, 1) == 0);
    CHECK(mask.at(1, 0) == 1);
    CHECK(mask.at(1, 1) == 0);

    ProbRaster zeros = ProbRaster::filled(3, 3, 0.0);
    CHECK(polygonize::connected_components(polygonize::binarize(zeros, 0.5)).empty());

    Raster all = polygonize::binarize(zeros, 0.0);  // threshold 0 -> everything on
    for (uint8_t v : all.pixels) CHECK(v == 1);

    CHECK_THROWS_AS(polygonize::binarize(prob, 1.5), std::invalid_argument);
    CHECK_THROWS_AS(polygonize::binarize(prob, -0.1), std::invalid_argument);
}

TEST_CASE("connected_components: blobs, diagonals, canonical order") {
    // one solid blob
    Raster solid = mask_from_pixels(5, 5, {{1, 1}, {1, 2}, {2, 1}, {2, 2}});
    CHECK(polygonize::connected_components(solid).size() == 1);

    // two pixels touching only diagonally: one region under 8-connectivity
    Raster diag = mask_from_pixels(4, 4, {{1, 1}, {2, 2}});
    auto regions = polygonize::connected_components(diag);
    REQUIRE(regions.size() == 1);
    CHECK(regions[0].area() == 2);

    // 2x2 checkerboard with foreground on one diagonal
    Raster checker = mask_from_pixels(2, 2, {{0, 0}, {1, 1}});
    auto checker_regions = polygonize::connected_components(checker);
    REQUIRE(checker_regions.size() == 1);
    CHECK(checker_regions[0].area() == 2);

    // canonical order: top-most then left-most
    Raster two = mask_from_pixels(6, 6, {{4, 0}, {0, 4}, {0, 5}, {1, 4}});
    auto ordered = polygonize::connected_components(two);
    REQUIRE(ordered.size() == 2);
    CHECK(ordered[0].anchor() == PixelCoord{0, 4});
    CHECK(ordered[1].anchor() == PixelCoord{4, 0});

    // empty mask
    CHECK(polygonize::connected_components(Raster::filled(3, 3, 1, 0)).empty());
}

TEST_CASE("trace_boundary: single pixel is a unit square") {
    PixelRegion px({{3, 5}});
    Polygon poly = polygonize::trace_boundary(px);
    // closed ring over the 4 corners
    REQUIRE(poly.exterior.size() == 5);
    CHECK(poly.exterior.front() == poly.exterior.back());
    CHECK(poly.exterior[0] == geo::Vertex{2.5, 4.5});

    Raster back = geo::rasterize({poly}, 10, 10);
    CHECK(regions_equal(test_support::region_from_mask(back), px));
}

TEST_CASE("trace_boundary: rectangle merges collinear corners") {
    std::vector<PixelCoord> px;
    for (int r = 2; r < 5; ++r) {
        for (int c = 7; c < 9; ++c) px.push_back({r, c});
    }
    PixelRegion rect(px);
    Polygon poly = polygonize::trace_boundary(rect);
    REQUIRE(poly.exterior.size() == 5);  // 4 corners, closed
    Raster back = geo::rasterize({poly}, 12, 12);
    CHECK(regions_equal(test_support::region_from_mask(back), rect));
}

TEST_CASE("trace_boundary: L-shape has six corners and round-trips") {
    std::vector<PixelCoord> px;
    for (int r = 0; r < 4; ++r) px.push_back({r, 0});
    for (int c = 1; c < 3; ++c) px.push_back({3, c});
    PixelRegion ell(px);
    Polygon poly = polygonize::trace_boundary(ell);
    REQUIRE(poly.exterior.size() == 7);  // 6 corners, closed
    Raster back = geo::rasterize({poly}, 8, 8);
    CHECK(regions_equal(test_support::region_from_mask(back), ell));
}

TEST_CASE("trace_boundary: diagonal pinch stays one ring") {
    PixelRegion pinch({{0, 0}, {1, 1}});
    Polygon poly = polygonize::trace_boundary(pinch);
    Raster back = geo::rasterize({poly}, 4, 4);
    CHECK(regions_equal(test_support::region_from_mask(back), pinch));

    PixelRegion anti({{0, 1}, {1, 0}});
    Polygon poly2 = polygonize::trace_boundary(anti);
    Raster back2 = geo::rasterize({poly2}, 4, 4);
    CHECK(regions_equal(test_support::region_from_mask(back2), anti));
}

TEST_CASE("trace_boundary: interior holes are filled before tracing") {
    // ring of pixels around an empty center
    std::vector<PixelCoord> px;
    for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < 3; ++c) {
            if (!(r == 1 && c == 1)) px.push_back({r, c});
        }
    }
    PixelRegion ring(px);
    Polygon poly = polygonize::trace_boundary(ring);
    Raster back = geo::rasterize({poly}, 5, 5);
    CHECK(test_support::region_from_mask(back).area() == 9);  // hole filled
}

TEST_CASE("trace_boundary: consistent winding") {
    // shoelace with (x=col, y=row): the walk keeps a fixed sign
    auto signed_area = [](const Polygon& poly) {
        double acc = 0.0;
        for (size_t i = 0; i + 1 < poly.exterior.size(); ++i) {
            const auto& a = poly.exterior[i];
            const auto& b = poly.exterior[i + 1];
            acc += a.col * b.row - b.col * a.row;
        }
        return acc / 2.0;
    };
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 20; ++trial) {
        auto blob = test_support::grow_blob(rng, 12, 8);
        const double area = signed_area(polygonize::trace_boundary(PixelRegion(blob)));
        CHECK(area > 0.0);
    }
}

TEST_CASE("trace round trip on random hole-free blobs") {
    std::mt19937_64 rng(2024);
    for (int trial = 0; trial < 100; ++trial) {
        const int target = 1 + static_cast<int>(rng() % 40);
        PixelRegion region =
            test_support::fill_holes(PixelRegion(test_support::grow_blob(rng, target, 14)));
        Polygon poly = polygonize::trace_boundary(region);
        Raster back = geo::rasterize({poly}, 20, 20);
        REQUIRE(regions_equal(test_support::region_from_mask(back), region));
    }
}

TEST_CASE("extract: composite behavior and canonical order") {
    ProbRaster prob = ProbRaster::filled(12, 12, 0.0);
    for (int r = 1; r < 4; ++r) {
        for (int c = 1; c < 4; ++c) prob.at(r, c) = 0.9;
    }
    for (int r = 7; r < 10; ++r) {
        for (int c = 6; c < 10; ++c) prob.at(r, c) = 0.8;
    }
    polygonize::PolygonSet set = polygonize::extract(prob, {});
    REQUIRE(set.size() == 2);
    CHECK(set.entries[0].region.anchor() == PixelCoord{1, 1});
    CHECK(set.entries[1].region.anchor() == PixelCoord{7, 6});

    // all-zero map
    CHECK(polygonize::extract(ProbRaster::filled(6, 6, 0.0), {}).empty());

    // idempotence: extracting the rasterization of its own output is stable
    Raster mask = Raster::filled(12, 12, 1, 0);
    std::vector<Polygon> polys;
    for (const auto& e : set.entries) polys.push_back(e.polygon);
    Raster redrawn = geo::rasterize(polys, 12, 12);
    ProbRaster reprob = ProbRaster::filled(12, 12, 0.0);
    for (size_t i = 0; i < redrawn.pixels.size(); ++i) reprob.values[i] = redrawn.pixels[i];
    polygonize::PolygonSet again = polygonize::extract(reprob, {});
    REQUIRE(again.size() == set.size());
    for (size_t i = 0; i < set.size(); ++i) {
        CHECK(regions_equal(again.entries[i].region, set.entries[i].region));
    }
    (void)mask;
}

TEST_CASE("extract: min_area filter and edge_split") {
    ProbRaster prob = ProbRaster::filled(8, 8, 0.0);
    prob.at(0, 0) = 1.0;  // lone pixel
    for (int r = 3; r < 7; ++r) {
        for (int c = 2; c < 6; ++c) prob.at(r, c) = 1.0;
    }
    polygonize::ExtractOptions opts;
    opts.min_area = 2;
    CHECK(polygonize::extract(prob, opts).size() == 1);

    // edge_split severs a bridge between two squares
    ProbRaster bridge = ProbRaster::filled(6, 9, 0.0);
    for (int r = 1; r < 5; ++r) {
        for (int c = 1; c < 8; ++c) bridge.at(r, c) = 1.0;
    }
    ProbRaster edge = ProbRaster::filled(6, 9, 0.0);
    for (int r = 0; r < 6; ++r) edge.at(r, 4) = 1.0;  // predicted boundary column
    polygonize::ExtractOptions split;
    split.edge_prob = &edge;
    split.edge_threshold = 0.5;
    CHECK(polygonize::extract(bridge, {}).size() == 1);
    CHECK(polygonize::extract(bridge, split).size() == 2);
}

TEST_CASE("region count is invariant to mask translation") {
    std::mt19937_64 rng(31);
    for (int trial = 0; trial < 10; ++trial) {
        ProbRaster prob = ProbRaster::filled(24, 24, 0.0);
        for (int b = 0; b < 3; ++b) {
            const int r0 = static_cast<int>(rng() % 12);
            const int c0 = static_cast<int>(rng() % 12);
            for (int r = r0; r < r0 + 3; ++r) {
                for (int c = c0; c < c0 + 3; ++c) prob.at(r, c) = 1.0;
            }
        }
        const size_t base_count = polygonize::extract(prob, {}).size();
        ProbRaster moved = ProbRaster::filled(30, 30, 0.0);
        for (int r = 0; r < 24; ++r) {
            for (int c = 0; c < 24; ++c) moved.at(r + 5, c + 3) = prob.at(r, c);
        }
        CHECK(polygonize::extract(moved, {}).size() == base_count);
    }
}

TEST_CASE("from_polygons orders ground truth canonically") {
    std::vector<Polygon> polys{test_support::rect_polygon(8, 1, 12, 5),
                               test_support::rect_polygon(0, 6, 4, 10),
                               test_support::rect_polygon(0, 0, 3, 3)};
    polygonize::PolygonSet set = polygonize::from_polygons(polys, 16, 16);
    REQUIRE(set.size() == 3);
    CHECK(set.entries[0].region.anchor() == PixelCoord{0, 0});
    CHECK(set.entries[1].region.anchor() == PixelCoord{0, 6});
    CHECK(set.entries[2].region.anchor() == PixelCoord{8, 1});

    // polygons fully outside the grid are dropped
    auto dropped = polygonize::from_polygons({test_support::rect_polygon(-9, -9, -2, -2)}, 8, 8);
    CHECK(dropped.empty());
}
