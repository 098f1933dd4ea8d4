#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bfe/geometry.hpp"
#include "bfe/raster.hpp"
#include "bfe/trainer.hpp"

// Deterministic synthetic scenes: rectangular buildings on a noisy
// background, with exact ground-truth polygons. The dense mode packs
// buildings with 1-2 px gaps; the straddle mode forces buildings across
// core-tile boundaries.

namespace bfe::synth {

enum class Placement { scatter, packed };

struct SceneSpec {
    int parent_h = 128;
    int parent_w = 128;
    Placement placement = Placement::scatter;
    int building_count = 12;  // scatter mode; packed mode fills the grid
    int min_size = 10;
    int max_size = 24;
    int min_gap = 4;  // empty pixels between buildings (chessboard)
    int max_gap = 0;  // packed mode only; 0 means min_gap
    int background_level = 60;
    int building_level = 180;
    int noise_amplitude = 12;
    double straddle_fraction = 0.0;  // of buildings forced across core gridlines
    int core_w = 64;                 // gridlines used by straddle placement
    int core_h = 64;
    uint64_t seed = 0;

    void validate() const;
    std::string to_json() const;
    static SceneSpec from_json(const std::string& text);
};

struct Scene {
    geo::Raster image;  // 3-channel
    std::vector<geo::Polygon> polygons;
    std::vector<geo::PixelRegion> regions;  // the painted pixel sets, same order
};

/// Seeded rejection placement (scatter) or row packing (packed); image is
/// background plus building intensities plus per-pixel uniform noise.
/// Throws if scatter placement cannot satisfy the gap constraint after a
/// bounded number of rejections.
Scene generate(const SceneSpec& spec);

enum class SuiteKind { sparse, dense, straddle };
SuiteKind suite_kind_from_string(const std::string& name);
std::string to_string(SuiteKind kind);

/// Kind presets: sparse keeps gaps >= 8 px; dense packs with gaps of exactly
/// 1-2 px; straddle forces >= 50% of buildings across core boundaries.
SceneSpec suite_spec(SuiteKind kind, uint64_t seed);

/// Writes scene PNGs, GeoJSON ground truth, and a manifest into out_dir.
/// Scene i uses seed + i.
void generate_suite(SuiteKind kind, uint64_t seed, const std::string& out_dir, int scene_count = 1);
void write_dataset(const std::vector<std::pair<std::string, Scene>>& scenes,
                   const std::string& kind_name, uint64_t seed, const std::string& out_dir);

/// Reads a dataset directory written by generate_suite.
std::vector<train::Scene> load_dataset(const std::string& dir);

}  // namespace bfe::synth
