#include "bfe/synthgen.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <stdexcept>

#include <json.hpp>

namespace bfe::synth {

namespace fs = std::filesystem;
using geo::PixelCoord;
using geo::PixelRegion;
using geo::Polygon;
using geo::Raster;
using geo::Vertex;
using nlohmann::json;

void SceneSpec::validate() const {
    if (parent_h <= 0 || parent_w <= 0) throw std::invalid_argument("SceneSpec: parent extents must be positive");
    if (building_count < 0) throw std::invalid_argument("SceneSpec: building_count must be >= 0");
    if (min_size < 1 || max_size < min_size) throw std::invalid_argument("SceneSpec: bad size range");
    if (min_gap < 1) throw std::invalid_argument("SceneSpec: min_gap must be >= 1 so buildings never merge");
    if (max_gap != 0 && max_gap < min_gap) throw std::invalid_argument("SceneSpec: max_gap < min_gap");
    if (background_level < 0 || background_level > 255 || building_level < 0 || building_level > 255) {
        throw std::invalid_argument("SceneSpec: intensity levels must be 8-bit");
    }
    if (noise_amplitude < 0) throw std::invalid_argument("SceneSpec: noise_amplitude must be >= 0");
    if (straddle_fraction < 0.0 || straddle_fraction > 1.0) {
        throw std::invalid_argument("SceneSpec: straddle_fraction must lie in [0,1]");
    }
    if (core_w <= 0 || core_h <= 0) throw std::invalid_argument("SceneSpec: core extents must be positive");
}

std::string SceneSpec::to_json() const {
    json j;
    j["parent_h"] = parent_h;
    j["parent_w"] = parent_w;
    j["placement"] = placement == Placement::scatter ? "scatter" : "packed";
    j["building_count"] = building_count;
    j["min_size"] = min_size;
    j["max_size"] = max_size;
    j["min_gap"] = min_gap;
    j["max_gap"] = max_gap;
    j["background_level"] = background_level;
    j["building_level"] = building_level;
    j["noise_amplitude"] = noise_amplitude;
    j["straddle_fraction"] = straddle_fraction;
    j["core_w"] = core_w;
    j["core_h"] = core_h;
    j["seed"] = seed;
    return j.dump();
}

SceneSpec SceneSpec::from_json(const std::string& text) {
    json j = json::parse(text);
    SceneSpec s;
    s.parent_h = j.value("parent_h", s.parent_h);
    s.parent_w = j.value("parent_w", s.parent_w);
    s.placement = j.value("placement", "scatter") == "packed" ? Placement::packed : Placement::scatter;
    s.building_count = j.value("building_count", s.building_count);
    s.min_size = j.value("min_size", s.min_size);
    s.max_size = j.value("max_size", s.max_size);
    s.min_gap = j.value("min_gap", s.min_gap);
    s.max_gap = j.value("max_gap", s.max_gap);
    s.background_level = j.value("background_level", s.background_level);
    s.building_level = j.value("building_level", s.building_level);
    s.noise_amplitude = j.value("noise_amplitude", s.noise_amplitude);
    s.straddle_fraction = j.value("straddle_fraction", s.straddle_fraction);
    s.core_w = j.value("core_w", s.core_w);
    s.core_h = j.value("core_h", s.core_h);
    s.seed = j.value("seed", s.seed);
    s.validate();
    return s;
}

// ---------------------------------------------------------------------------
// placement

namespace {

struct Rect {
    int r0, c0, h, w;  // pixel rows r0..r0+h-1, cols c0..c0+w-1
    int r1() const { return r0 + h - 1; }
    int c1() const { return c0 + w - 1; }
};

// Chessboard distance between the two pixel sets; 0 when they overlap.
int rect_distance(const Rect& a, const Rect& b) {
    const int row_sep = std::max({0, b.r0 - a.r1(), a.r0 - b.r1()});
    const int col_sep = std::max({0, b.c0 - a.c1(), a.c0 - b.c1()});
    return std::max(row_sep, col_sep);
}

bool respects_gap(const Rect& candidate, const std::vector<Rect>& placed, int min_gap) {
    for (const Rect& r : placed) {
        if (rect_distance(candidate, r) < min_gap + 1) return false;
    }
    return true;
}

int rand_in(std::mt19937_64& rng, int lo, int hi) {  // inclusive
    return std::uniform_int_distribution<int>(lo, hi)(rng);
}

std::vector<Rect> place_scatter(const SceneSpec& spec, std::mt19937_64& rng) {
    std::vector<Rect> placed;
    const int straddle_target = static_cast<int>(std::ceil(spec.straddle_fraction * spec.building_count));

    // internal core gridlines: the boundary between pixel columns g-1 and g
    std::vector<int> row_lines, col_lines;
    for (int g = spec.core_h; g < spec.parent_h; g += spec.core_h) row_lines.push_back(g);
    for (int g = spec.core_w; g < spec.parent_w; g += spec.core_w) col_lines.push_back(g);

    const long max_attempts = 4000L * std::max(1, spec.building_count);
    long attempts = 0;
    while (static_cast<int>(placed.size()) < spec.building_count) {
        if (++attempts > max_attempts) {
            throw std::runtime_error("generate: placement failed after " + std::to_string(attempts) +
                                     " rejections; lower the density or gap");
        }
        const bool force_straddle =
            static_cast<int>(placed.size()) < straddle_target && !(row_lines.empty() && col_lines.empty());
        Rect r;
        r.h = rand_in(rng, spec.min_size, std::min(spec.max_size, spec.parent_h));
        r.w = rand_in(rng, spec.min_size, std::min(spec.max_size, spec.parent_w));
        if (force_straddle) {
            // cross a gridline with at least 2 px on each side
            const bool use_row = !row_lines.empty() && (col_lines.empty() || rand_in(rng, 0, 1) == 0);
            if (use_row) {
                const int g = row_lines[static_cast<size_t>(rand_in(rng, 0, static_cast<int>(row_lines.size()) - 1))];
                const int lo = std::max(0, g + 2 - r.h);
                const int hi = std::min(g - 2, spec.parent_h - r.h);
                if (lo > hi) continue;
                r.r0 = rand_in(rng, lo, hi);
                r.c0 = rand_in(rng, 0, spec.parent_w - r.w);
            } else {
                const int g = col_lines[static_cast<size_t>(rand_in(rng, 0, static_cast<int>(col_lines.size()) - 1))];
                const int lo = std::max(0, g + 2 - r.w);
                const int hi = std::min(g - 2, spec.parent_w - r.w);
                if (lo > hi) continue;
                r.c0 = rand_in(rng, lo, hi);
                r.r0 = rand_in(rng, 0, spec.parent_h - r.h);
            }
        } else {
            r.r0 = rand_in(rng, 0, spec.parent_h - r.h);
            r.c0 = rand_in(rng, 0, spec.parent_w - r.w);
        }
        if (respects_gap(r, placed, spec.min_gap)) placed.push_back(r);
    }
    return placed;
}

std::vector<Rect> place_packed(const SceneSpec& spec, std::mt19937_64& rng) {
    const int gap_hi = spec.max_gap > 0 ? spec.max_gap : spec.min_gap;
    // biased toward the widest allowed gap: the tightest packings stay
    // present but do not dominate every adjacency
    auto gap = [&] { return rand_in(rng, 0, 3) == 0 ? spec.min_gap : gap_hi; };

    std::vector<Rect> placed;
    int row = 1;  // one-pixel quiet zone along the parent border
    while (row + spec.min_size <= spec.parent_h - 1) {
        const int band_h = rand_in(rng, spec.min_size, std::min(spec.max_size, spec.parent_h - 1 - row));
        int col = 1;
        while (col + spec.min_size <= spec.parent_w - 1) {
            const int w = rand_in(rng, spec.min_size, std::min(spec.max_size, spec.parent_w - 1 - col));
            placed.push_back(Rect{row, col, band_h, w});
            col += w + gap();
        }
        row += band_h + gap();
    }
    return placed;
}

Polygon rect_polygon(const Rect& r) {
    // integer corners; half-open rasterization covers exactly the painted pixels
    Polygon poly;
    const double r0 = r.r0, c0 = r.c0, r1 = r.r0 + r.h, c1 = r.c0 + r.w;
    poly.exterior = {Vertex{r0, c0}, Vertex{r0, c1}, Vertex{r1, c1}, Vertex{r1, c0}, Vertex{r0, c0}};
    return poly;
}

}  // namespace

Scene generate(const SceneSpec& spec) {
    spec.validate();
    std::mt19937_64 rng(spec.seed);
    std::vector<Rect> rects =
        spec.placement == Placement::scatter ? place_scatter(spec, rng) : place_packed(spec, rng);

    Scene scene;
    scene.image = Raster::filled(spec.parent_h, spec.parent_w, 3, 0);
    std::vector<uint8_t> building(static_cast<size_t>(spec.parent_h) * spec.parent_w, 0);
    for (const Rect& r : rects) {
        std::vector<PixelCoord> pixels;
        pixels.reserve(static_cast<size_t>(r.h) * r.w);
        for (int rr = r.r0; rr <= r.r1(); ++rr) {
            for (int cc = r.c0; cc <= r.c1(); ++cc) {
                building[static_cast<size_t>(rr) * spec.parent_w + cc] = 1;
                pixels.push_back({rr, cc});
            }
        }
        scene.polygons.push_back(rect_polygon(r));
        scene.regions.emplace_back(std::move(pixels));
    }

    std::uniform_int_distribution<int> noise(-spec.noise_amplitude, spec.noise_amplitude);
    for (int r = 0; r < spec.parent_h; ++r) {
        for (int c = 0; c < spec.parent_w; ++c) {
            const int base = building[static_cast<size_t>(r) * spec.parent_w + c] ? spec.building_level
                                                                                  : spec.background_level;
            for (int ch = 0; ch < 3; ++ch) {
                scene.image.at(r, c, ch) =
                    static_cast<uint8_t>(std::clamp(base + noise(rng), 0, 255));
            }
        }
    }
    return scene;
}

// ---------------------------------------------------------------------------
// suites

SuiteKind suite_kind_from_string(const std::string& name) {
    if (name == "sparse") return SuiteKind::sparse;
    if (name == "dense") return SuiteKind::dense;
    if (name == "straddle") return SuiteKind::straddle;
    throw std::invalid_argument("unknown suite kind '" + name + "' (expected sparse|dense|straddle)");
}

std::string to_string(SuiteKind kind) {
    switch (kind) {
        case SuiteKind::sparse: return "sparse";
        case SuiteKind::dense: return "dense";
        case SuiteKind::straddle: return "straddle";
    }
    return "?";
}

SceneSpec suite_spec(SuiteKind kind, uint64_t seed) {
    SceneSpec spec;
    spec.seed = seed;
    switch (kind) {
        case SuiteKind::sparse:
            spec.placement = Placement::scatter;
            spec.building_count = 8;
            spec.min_size = 12;
            spec.max_size = 26;
            spec.min_gap = 8;
            break;
        case SuiteKind::dense:
            spec.placement = Placement::packed;
            spec.min_size = 12;
            spec.max_size = 20;
            spec.min_gap = 1;  // the closely-packed regime: 1-2 px gaps
            spec.max_gap = 2;
            spec.noise_amplitude = 10;
            break;
        case SuiteKind::straddle:
            spec.placement = Placement::scatter;
            spec.building_count = 12;
            spec.min_size = 12;
            spec.max_size = 22;
            spec.min_gap = 4;
            spec.straddle_fraction = 0.7;
            spec.noise_amplitude = 10;
            break;
    }
    return spec;
}

void write_dataset(const std::vector<std::pair<std::string, Scene>>& scenes,
                   const std::string& kind_name, uint64_t seed, const std::string& out_dir) {
    fs::create_directories(out_dir);
    json manifest;
    manifest["kind"] = kind_name;
    manifest["seed"] = seed;
    json scene_list = json::array();
    for (const auto& [id, scene] : scenes) {
        const std::string png = id + ".png";
        const std::string gj = id + ".geojson";
        geo::write_png(scene.image, (fs::path(out_dir) / png).string());
        geo::write_geojson(scene.polygons, scene.image.height, scene.image.width,
                           (fs::path(out_dir) / gj).string());
        json entry;
        entry["id"] = id;
        entry["image"] = png;
        entry["polygons"] = gj;
        scene_list.push_back(std::move(entry));
    }
    manifest["scenes"] = std::move(scene_list);
    std::ofstream out(fs::path(out_dir) / "manifest.json", std::ios::trunc);
    if (!out) throw std::runtime_error("write_dataset: cannot open manifest in " + out_dir);
    out << manifest.dump(2) << "\n";
}

void generate_suite(SuiteKind kind, uint64_t seed, const std::string& out_dir, int scene_count) {
    if (scene_count < 1) throw std::invalid_argument("generate_suite: scene_count must be >= 1");
    std::vector<std::pair<std::string, Scene>> scenes;
    for (int i = 0; i < scene_count; ++i) {
        SceneSpec spec = suite_spec(kind, seed + static_cast<uint64_t>(i));
        char id[32];
        std::snprintf(id, sizeof(id), "scene_%03d", i);
        scenes.emplace_back(id, generate(spec));
    }
    write_dataset(scenes, to_string(kind), seed, out_dir);
}

std::vector<train::Scene> load_dataset(const std::string& dir) {
    std::ifstream in(fs::path(dir) / "manifest.json");
    if (!in) throw std::runtime_error("load_dataset: cannot open manifest.json in " + dir);
    json manifest = json::parse(in);
    std::vector<train::Scene> scenes;
    for (const auto& entry : manifest.at("scenes")) {
        train::Scene scene;
        scene.id = entry.at("id").get<std::string>();
        scene.image = geo::read_png((fs::path(dir) / entry.at("image").get<std::string>()).string());
        scene.polygons =
            geo::read_geojson((fs::path(dir) / entry.at("polygons").get<std::string>()).string()).polygons;
        scenes.push_back(std::move(scene));
    }
    return scenes;
}

}  // namespace bfe::synth
