#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <random>

#include "bfe/nepagg.hpp"

using namespace bfe;
using geo::Raster;
using nepagg::TileRecord;

namespace {

Raster random_raster(int h, int w, int channels, uint64_t seed) {
    std::mt19937_64 rng(seed);
    Raster r = Raster::filled(h, w, channels, 0);
    for (auto& v : r.pixels) v = static_cast<uint8_t>(rng() % 256);
    return r;
}

// split -> augment -> crop -> stitch must reproduce the parent exactly
void check_identity(const Raster& parent, int core_w, int core_h, int k) {
    auto records = nepagg::split_raster(parent, core_w, core_h, k);
    std::vector<std::pair<TileRecord, Raster>> cores;
    for (const TileRecord& rec : records) {
        Raster augmented = nepagg::augment_tile(parent, rec, k);
        REQUIRE(augmented.height == core_h + 2 * k);
        REQUIRE(augmented.width == core_w + 2 * k);
        cores.emplace_back(rec, nepagg::crop_core(augmented, k));
    }
    Raster rebuilt = nepagg::stitch(cores);
    REQUIRE(rebuilt.height == parent.height);
    REQUIRE(rebuilt.width == parent.width);
    REQUIRE(rebuilt.pixels == parent.pixels);
}

}  // namespace

TEST_CASE("split_raster: exact division") {
    Raster parent = Raster::filled(1024, 1024, 1, 7);
    auto records = nepagg::split_raster(parent, 512, 512);
    REQUIRE(records.size() == 4);
    CHECK(records[0].origin_row == 0);
    CHECK(records[0].origin_col == 0);
    CHECK(records[1].origin_row == 0);
    CHECK(records[1].origin_col == 512);
    CHECK(records[2].origin_row == 512);
    CHECK(records[2].origin_col == 0);
    CHECK(records[3].origin_row == 512);
    CHECK(records[3].origin_col == 512);
    for (const auto& r : records) CHECK_FALSE(r.padded);
}

TEST_CASE("split_raster: single tile and ragged cases") {
    Raster parent = Raster::filled(650, 650, 3, 1);
    auto one = nepagg::split_raster(parent, 650, 650);
    REQUIRE(one.size() == 1);
    CHECK_FALSE(one[0].padded);

    Raster ragged = Raster::filled(700, 700, 1, 2);
    auto four = nepagg::split_raster(ragged, 512, 512);
    REQUIRE(four.size() == 4);
    CHECK_FALSE(four[0].padded);
    CHECK(four[1].padded);
    CHECK(four[2].padded);
    CHECK(four[3].padded);

    // union of in-parent core pixels covers the parent exactly once
    std::vector<int> coverage(700 * 700, 0);
    for (const auto& rec : four) {
        for (int r = rec.origin_row; r < std::min(700, rec.origin_row + rec.core_h); ++r) {
            for (int c = rec.origin_col; c < std::min(700, rec.origin_col + rec.core_w); ++c) {
                coverage[r * 700 + c] += 1;
            }
        }
    }
    CHECK(std::all_of(coverage.begin(), coverage.end(), [](int v) { return v == 1; }));

    // a core larger than the parent in both axes is one padded tile
    auto big = nepagg::split_raster(Raster::filled(100, 80, 1, 0), 128, 128);
    REQUIRE(big.size() == 1);
    CHECK(big[0].padded);

    CHECK_THROWS_AS(nepagg::split_raster(parent, 0, 512), std::invalid_argument);
}

TEST_CASE("augment_tile: margin sizes from the two tiling presets") {
    // 512 core with k = 64 gives 640; 650 core with k = 83 gives 816
    Raster whu = random_raster(1024, 1024, 3, 11);
    auto recs = nepagg::split_raster(whu, 512, 512, 64);
    Raster aug = nepagg::augment_tile(whu, recs[0], 64);
    CHECK(aug.height == 640);
    CHECK(aug.width == 640);

    Raster sn = random_raster(650, 650, 3, 12);
    auto recs2 = nepagg::split_raster(sn, 650, 650, 83);
    Raster aug2 = nepagg::augment_tile(sn, recs2[0], 83);
    CHECK(aug2.height == 816);
    CHECK(aug2.width == 816);
}

TEST_CASE("augment_tile: k = 0 is the exact core crop") {
    Raster parent = random_raster(96, 64, 3, 13);
    auto recs = nepagg::split_raster(parent, 32, 32);
    for (const auto& rec : recs) {
        Raster aug = nepagg::augment_tile(parent, rec, 0);
        for (int r = 0; r < 32; ++r) {
            for (int c = 0; c < 32; ++c) {
                for (int ch = 0; ch < 3; ++ch) {
                    REQUIRE(aug.at(r, c, ch) == parent.at(rec.origin_row + r, rec.origin_col + c, ch));
                }
            }
        }
    }
    CHECK_THROWS_AS(nepagg::augment_tile(parent, recs[0], -1), std::invalid_argument);
}

TEST_CASE("augment_tile: out-of-parent margin is exactly zero") {
    // poison the parent with 255 everywhere; margins beyond the parent must be 0
    Raster parent = Raster::filled(64, 64, 1, 255);
    auto recs = nepagg::split_raster(parent, 32, 32, 8);
    Raster corner = nepagg::augment_tile(parent, recs[0], 8);
    for (int r = 0; r < corner.height; ++r) {
        for (int c = 0; c < corner.width; ++c) {
            const bool outside = r < 8 || c < 8;  // top-left tile: above/left of the parent
            if (outside) {
                REQUIRE(corner.at(r, c) == 0);
            } else {
                REQUIRE(corner.at(r, c) == 255);
            }
        }
    }
}

TEST_CASE("augment_tile: a building within k of the boundary is fully visible") {
    // building spans cols 60..69 of the parent; the left tile core ends at 63
    Raster parent = Raster::filled(64, 128, 1, 0);
    for (int r = 20; r < 30; ++r) {
        for (int c = 60; c < 70; ++c) parent.at(r, c) = 1;
    }
    auto recs = nepagg::split_raster(parent, 64, 64, 8);
    Raster left_aug = nepagg::augment_tile(parent, recs[0], 8);  // covers cols -8..71
    int64_t visible = 0;
    for (uint8_t v : left_aug.pixels) visible += v;
    CHECK(visible == 100);  // the whole 10x10 building, not a truncation
}

TEST_CASE("crop_core raster basics") {
    Raster augmented = random_raster(816, 816, 1, 14);
    Raster core = nepagg::crop_core(augmented, 83);
    CHECK(core.height == 650);
    CHECK(core.width == 650);

    Raster same = nepagg::crop_core(augmented, 0);
    CHECK(same.pixels == augmented.pixels);

    CHECK_THROWS_AS(nepagg::crop_core(Raster::filled(10, 10, 1, 0), 5), std::invalid_argument);
}

TEST_CASE("crop_core(augment_tile) returns core pixels for interior tiles") {
    Raster parent = random_raster(96, 96, 3, 15);
    auto recs = nepagg::split_raster(parent, 32, 32, 6);
    for (const auto& rec : recs) {
        Raster round = nepagg::crop_core(nepagg::augment_tile(parent, rec, 6), 6);
        for (int r = 0; r < 32; ++r) {
            for (int c = 0; c < 32; ++c) {
                for (int ch = 0; ch < 3; ++ch) {
                    REQUIRE(round.at(r, c, ch) == parent.at(rec.origin_row + r, rec.origin_col + c, ch));
                }
            }
        }
    }
}

TEST_CASE("stitch: errors on missing, duplicate, or foreign tiles") {
    Raster parent = random_raster(64, 64, 1, 16);
    auto recs = nepagg::split_raster(parent, 32, 32);
    std::vector<std::pair<TileRecord, Raster>> tiles;
    for (const auto& rec : recs) tiles.emplace_back(rec, nepagg::augment_tile(parent, rec, 0));

    auto missing = tiles;
    missing.pop_back();
    CHECK_THROWS_AS(nepagg::stitch(missing), std::invalid_argument);

    auto duplicated = tiles;
    duplicated[1] = duplicated[0];
    CHECK_THROWS_AS(nepagg::stitch(duplicated), std::invalid_argument);

    auto foreign = tiles;
    foreign[2].first.core_w = 16;
    CHECK_THROWS_AS(nepagg::stitch(foreign), std::invalid_argument);
}

TEST_CASE("tiling round trip is the identity") {
    check_identity(random_raster(64, 64, 1, 20), 32, 32, 4);   // exact grid
    check_identity(random_raster(64, 64, 3, 21), 64, 64, 0);   // single tile, no margin
    check_identity(random_raster(70, 70, 1, 22), 51, 33, 7);   // ragged both axes
    check_identity(random_raster(700, 700, 1, 23), 512, 512, 16);

    std::mt19937_64 rng(99);
    for (int trial = 0; trial < 12; ++trial) {
        const int h = 8 + static_cast<int>(rng() % 120);
        const int w = 8 + static_cast<int>(rng() % 120);
        const int cw = 4 + static_cast<int>(rng() % 80);
        const int ch = 4 + static_cast<int>(rng() % 80);
        const int k = static_cast<int>(rng() % 20);
        check_identity(random_raster(h, w, 1 + static_cast<int>(rng() % 3), rng()), cw, ch, k);
    }
}

TEST_CASE("tile manifest round trip") {
    namespace fs = std::filesystem;
    Raster parent = random_raster(70, 50, 3, 30);
    parent.geotransform = "1,2,3,4,5,6";
    nepagg::TileManifest manifest;
    manifest.parent_height = parent.height;
    manifest.parent_width = parent.width;
    manifest.channels = parent.channels;
    manifest.core_w = 32;
    manifest.core_h = 32;
    manifest.margin = 5;
    manifest.geotransform = parent.geotransform;
    manifest.records = nepagg::split_raster(parent, 32, 32, 5);

    const std::string path = (fs::temp_directory_path() / "bfe_tile_manifest_test.json").string();
    nepagg::write_tile_manifest(manifest, path);
    nepagg::TileManifest loaded = nepagg::read_tile_manifest(path);
    CHECK(loaded.parent_height == manifest.parent_height);
    CHECK(loaded.parent_width == manifest.parent_width);
    CHECK(loaded.margin == manifest.margin);
    CHECK(loaded.geotransform == manifest.geotransform);
    REQUIRE(loaded.records.size() == manifest.records.size());
    for (size_t i = 0; i < loaded.records.size(); ++i) CHECK(loaded.records[i] == manifest.records[i]);
    CHECK(loaded.records[1].id() == "r000_c001");
    fs::remove(path);
}
