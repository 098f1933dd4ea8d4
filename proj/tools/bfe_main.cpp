// Building-footprint extraction toolkit: synthetic scenes, overlap tiling,
// dual-decoder training, probability-map polygonization, and polygon-IoU
// scoring, exposed as one executable with per-stage subcommands.
//
// Exit codes: 0 success, 1 invalid arguments, 2 data/processing errors.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "bfe/evaluator.hpp"
#include "bfe/geometry.hpp"
#include "bfe/nepagg.hpp"
#include "bfe/polygonize.hpp"
#include "bfe/raster.hpp"
#include "bfe/synthgen.hpp"
#include "bfe/tfnet.hpp"
#include "bfe/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace bfe;

namespace {

constexpr const char* kVersion = "0.1.0";

int run_cli(const std::vector<std::string>& args);

// Every run writes a manifest (resolved config, inputs, outputs, argv);
// `rerun` re-dispatches the stored argv, so outputs are reproducible from
// the manifest alone.
struct ManifestBuilder {
    json doc;
    ManifestBuilder(const std::string& subcommand, const std::vector<std::string>& argv) {
        doc["tool"] = "bfe";
        doc["version"] = kVersion;
        doc["subcommand"] = subcommand;
        doc["argv"] = argv;
        doc["inputs"] = json::array();
        doc["outputs"] = json::array();
        doc["config"] = json::object();
    }
    void input(const std::string& path) { doc["inputs"].push_back(path); }
    void output(const std::string& path) { doc["outputs"].push_back(path); }
    void config(const std::string& key, const json& value) { doc["config"][key] = value; }
    void seed(uint64_t s) { doc["seed"] = s; }
    void write(const fs::path& path) const {
        std::ofstream out(path, std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write manifest " + path.string());
        out << doc.dump(2) << "\n";
    }
};

std::string replace_out_arg(std::vector<std::string>& argv, const std::string& new_out) {
    for (size_t i = 0; i + 1 < argv.size(); ++i) {
        if (argv[i] == "--out" || argv[i] == "-o") {
            argv[i + 1] = new_out;
            return argv[i + 1];
        }
    }
    throw std::runtime_error("manifest argv carries no --out to override");
}

json load_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    return json::parse(in);
}

// ---------------------------------------------------------------------------
// subcommand bodies

int cmd_synth(const std::string& kind_name, uint64_t seed, int scenes, const std::string& out_dir,
              const std::vector<std::string>& argv) {
    synth::SuiteKind kind = synth::suite_kind_from_string(kind_name);
    synth::generate_suite(kind, seed, out_dir, scenes);

    ManifestBuilder manifest("synth", argv);
    manifest.seed(seed);
    manifest.config("kind", kind_name);
    manifest.config("scenes", scenes);
    manifest.config("scene_spec", json::parse(synth::suite_spec(kind, seed).to_json()));
    manifest.output(out_dir);
    manifest.write(fs::path(out_dir) / "run_manifest.json");
    return 0;
}

int cmd_tile(int core_w, int core_h, int margin, const std::string& in_path,
             const std::string& out_dir, const std::vector<std::string>& argv) {
    geo::Raster parent = geo::read_png(in_path);
    auto records = nepagg::split_raster(parent, core_w, core_h, margin);
    fs::create_directories(out_dir);
    for (const auto& rec : records) {
        geo::Raster tile = nepagg::augment_tile(parent, rec, margin);
        geo::write_png(tile, (fs::path(out_dir) / ("tile_" + rec.id() + ".png")).string());
    }
    nepagg::TileManifest tm;
    tm.parent_height = parent.height;
    tm.parent_width = parent.width;
    tm.channels = parent.channels;
    tm.core_w = core_w;
    tm.core_h = core_h;
    tm.margin = margin;
    tm.geotransform = parent.geotransform;
    tm.records = records;
    nepagg::write_tile_manifest(tm, (fs::path(out_dir) / "tiles.json").string());

    ManifestBuilder manifest("tile", argv);
    manifest.config("core_w", core_w);
    manifest.config("core_h", core_h);
    manifest.config("margin", margin);
    manifest.input(in_path);
    manifest.output(out_dir);
    manifest.write(fs::path(out_dir) / "run_manifest.json");
    return 0;
}

int cmd_train(const std::string& config_path, const std::string& data_dir,
              const std::string& out_dir, const std::vector<std::string>& argv) {
    tfnet::TFNetConfig model_cfg;
    train::TrainConfig train_cfg;
    if (!config_path.empty()) {
        json cfg = load_json_file(config_path);
        if (cfg.contains("model")) model_cfg = tfnet::TFNetConfig::from_json(cfg["model"].dump());
        if (cfg.contains("train")) train_cfg = train::TrainConfig::from_json(cfg["train"].dump());
    }
    model_cfg.validate();
    train_cfg.validate();

    auto scenes = synth::load_dataset(data_dir);
    auto samples = train::make_samples(scenes, train_cfg);
    tfnet::TFNetParams params = tfnet::build(model_cfg, train_cfg.seed);
    train::FitResult result = train::fit(params, samples, train_cfg, out_dir);

    std::ofstream(fs::path(out_dir) / "model_config.json") << model_cfg.to_json() << "\n";
    std::ofstream(fs::path(out_dir) / "train_config.json") << train_cfg.to_json() << "\n";

    ManifestBuilder manifest("train", argv);
    manifest.seed(train_cfg.seed);
    manifest.config("model", json::parse(model_cfg.to_json()));
    manifest.config("train", json::parse(train_cfg.to_json()));
    manifest.input(data_dir);
    manifest.output(out_dir);
    manifest.write(fs::path(out_dir) / "run_manifest.json");

    if (!result.history.empty()) {
        std::fprintf(stderr, "trained %d steps, final loss %.6f\n", result.steps_run,
                     result.history.back().losses.total);
    }
    return 0;
}

int cmd_predict(const std::string& run_dir, const std::string& in_path, const std::string& out_dir,
                const std::vector<std::string>& argv) {
    tfnet::TFNetConfig model_cfg = tfnet::TFNetConfig::from_json(
        load_json_file((fs::path(run_dir) / "model_config.json").string()).dump());
    train::TrainConfig train_cfg = train::TrainConfig::from_json(
        load_json_file((fs::path(run_dir) / "train_config.json").string()).dump());
    tfnet::TFNetParams params =
        tfnet::load_checkpoint((fs::path(run_dir) / "final").string(), model_cfg);

    fs::create_directories(out_dir);
    ManifestBuilder manifest("predict", argv);
    manifest.config("model", json::parse(model_cfg.to_json()));
    manifest.config("train", json::parse(train_cfg.to_json()));
    manifest.input(run_dir);
    manifest.input(in_path);

    auto predict_one = [&](const std::string& id, const geo::Raster& image) {
        train::PredictResult pred = train::predict(params, image, train_cfg);
        const std::string building = (fs::path(out_dir) / (id + "_building.png")).string();
        geo::write_prob_png(pred.building, building);
        manifest.output(building);
        if (pred.has_edge) {
            const std::string edge = (fs::path(out_dir) / (id + "_edge.png")).string();
            geo::write_prob_png(pred.edge, edge);
            manifest.output(edge);
        }
    };

    if (fs::is_directory(in_path)) {
        for (const auto& scene : synth::load_dataset(in_path)) predict_one(scene.id, scene.image);
    } else {
        predict_one(fs::path(in_path).stem().string(), geo::read_png(in_path));
    }
    manifest.write(fs::path(out_dir) / "run_manifest.json");
    return 0;
}

int cmd_polygonize(const std::string& in_path, double threshold, int64_t min_area,
                   const std::string& edge_path, double edge_threshold, const std::string& out_path,
                   const std::vector<std::string>& argv) {
    if (!(threshold >= 0.0 && threshold <= 1.0)) {
        throw std::invalid_argument("invalid --threshold " + std::to_string(threshold) +
                                    " (must lie in [0,1])");
    }
    geo::ProbRaster prob = geo::read_prob_png(in_path);
    geo::ProbRaster edge;
    polygonize::ExtractOptions options;
    options.threshold = threshold;
    options.min_area = min_area;
    if (!edge_path.empty()) {
        edge = geo::read_prob_png(edge_path);
        options.edge_prob = &edge;
        options.edge_threshold = edge_threshold;
    }
    polygonize::PolygonSet set = polygonize::extract(prob, options);
    std::vector<geo::Polygon> polys;
    for (const auto& e : set.entries) polys.push_back(e.polygon);
    geo::write_geojson(polys, prob.height, prob.width, out_path);

    ManifestBuilder manifest("polygonize", argv);
    manifest.config("threshold", threshold);
    manifest.config("min_area", min_area);
    manifest.config("edge_split", !edge_path.empty());
    if (!edge_path.empty()) manifest.config("edge_threshold", edge_threshold);
    manifest.input(in_path);
    if (!edge_path.empty()) manifest.input(edge_path);
    manifest.output(out_path);
    manifest.write(out_path + ".manifest.json");
    return 0;
}

int cmd_evaluate(const std::string& pred_dir, const std::string& gt_dir, double iou,
                 const std::string& out_path, const std::vector<std::string>& argv) {
    if (!(iou > 0.0 && iou <= 1.0)) {
        throw std::invalid_argument("invalid --iou " + std::to_string(iou) + " (must lie in (0,1])");
    }
    std::vector<std::string> warnings;
    auto instances = eval::load_instances(pred_dir, gt_dir, warnings);
    eval::DatasetReport report = eval::evaluate_dataset(instances, iou);
    report.warnings = warnings;

    std::ofstream out(out_path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + out_path);
    out << eval::report_to_json(report, iou);

    for (const auto& w : warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
    std::fprintf(stderr, "aggregate: TP=%d FP=%d FN=%d precision=%.4f recall=%.4f f1=%.4f\n",
                 report.tp, report.fp, report.fn, report.aggregate.precision,
                 report.aggregate.recall, report.aggregate.f1_standard);

    ManifestBuilder manifest("evaluate", argv);
    manifest.config("iou", iou);
    manifest.input(pred_dir);
    manifest.input(gt_dir);
    manifest.output(out_path);
    manifest.write(out_path + ".manifest.json");
    return 0;
}

int cmd_render(const std::string& image_path, const std::string& pred_path,
               const std::string& gt_path, double iou, const std::string& out_path,
               const std::vector<std::string>& argv) {
    geo::Raster image = geo::read_png(image_path);
    geo::PolygonFile preds = geo::read_geojson(pred_path);
    geo::PolygonFile gts = geo::read_geojson(gt_path);
    polygonize::PolygonSet pred_set =
        polygonize::from_polygons(preds.polygons, image.height, image.width);
    polygonize::PolygonSet gt_set = polygonize::from_polygons(gts.polygons, image.height, image.width);
    eval::MatchReport report = eval::match(pred_set, gt_set, iou);

    geo::Raster overlay = geo::Raster::filled(image.height, image.width, 3, 0);
    for (int r = 0; r < image.height; ++r) {
        for (int c = 0; c < image.width; ++c) {
            for (int ch = 0; ch < 3; ++ch) {
                overlay.at(r, c, ch) = image.channels == 3 ? image.at(r, c, ch) : image.at(r, c);
            }
        }
    }
    // red/green/blue = FP/TP/FN, blended onto the imagery
    auto tint = [&](const geo::PixelRegion& region, int channel) {
        for (const auto& p : region.pixels()) {
            if (p.row < 0 || p.col < 0 || p.row >= overlay.height || p.col >= overlay.width) continue;
            for (int ch = 0; ch < 3; ++ch) {
                const int base = overlay.at(p.row, p.col, ch) / 2;
                overlay.at(p.row, p.col, ch) = static_cast<uint8_t>(ch == channel ? base + 127 : base);
            }
        }
    };
    for (size_t i = 0; i < pred_set.entries.size(); ++i) {
        tint(pred_set.entries[i].region, report.preds[i].true_positive ? 1 : 0);
    }
    for (int j : report.unmatched_gts) tint(gt_set.entries[static_cast<size_t>(j)].region, 2);
    geo::write_png(overlay, out_path);

    ManifestBuilder manifest("render", argv);
    manifest.config("iou", iou);
    manifest.input(image_path);
    manifest.input(pred_path);
    manifest.input(gt_path);
    manifest.output(out_path);
    manifest.write(out_path + ".manifest.json");
    return 0;
}

int cmd_rerun(const std::string& manifest_path, const std::string& out_override) {
    json manifest = load_json_file(manifest_path);
    std::vector<std::string> argv = manifest.at("argv").get<std::vector<std::string>>();
    if (!out_override.empty()) replace_out_arg(argv, out_override);
    return run_cli(argv);
}

// ---------------------------------------------------------------------------

int run_cli(const std::vector<std::string>& args) {
    CLI::App app{"building footprint extraction toolkit"};
    app.set_version_flag("--version", kVersion);
    app.require_subcommand(1);

    int jobs = 1;
    app.add_option("--jobs", jobs, "worker threads for per-tile math")
        ->envname("BFE_JOBS")
        ->check(CLI::PositiveNumber);

    auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic dataset");
    std::string synth_kind = "sparse", synth_out;
    uint64_t synth_seed = 0;
    int synth_scenes = 1;
    synth_cmd->add_option("--kind", synth_kind, "sparse|dense|straddle");
    synth_cmd->add_option("--seed", synth_seed, "generator seed");
    synth_cmd->add_option("--scenes", synth_scenes, "number of scenes")->check(CLI::PositiveNumber);
    synth_cmd->add_option("--out", synth_out, "output directory")->required();

    auto* tile_cmd = app.add_subcommand("tile", "split a raster into augmented tiles");
    std::vector<int> tile_core{64, 64};
    int tile_margin = 0;
    std::string tile_in, tile_out;
    tile_cmd->add_option("--core-size", tile_core, "core tile size W H")->expected(2);
    tile_cmd->add_option("--margin", tile_margin, "neighborhood margin k");
    tile_cmd->add_option("--in", tile_in, "parent raster PNG")->required();
    tile_cmd->add_option("--out", tile_out, "output directory")->required();

    auto* train_cmd = app.add_subcommand("train", "train the dual-decoder model");
    std::string train_config, train_data, train_out;
    train_cmd->add_option("--config", train_config, "JSON with {model:{...}, train:{...}}");
    train_cmd->add_option("--data", train_data, "dataset directory (synth output)")->required();
    train_cmd->add_option("--out", train_out, "run directory")->required();

    auto* predict_cmd = app.add_subcommand("predict", "stitched probability maps for a raster");
    std::string predict_run, predict_in, predict_out;
    predict_cmd->add_option("--run", predict_run, "training run directory")->required();
    predict_cmd->add_option("--in", predict_in, "parent PNG or dataset directory")->required();
    predict_cmd->add_option("--out", predict_out, "output directory")->required();

    auto* poly_cmd = app.add_subcommand("polygonize", "probability map to GeoJSON polygons");
    std::string poly_in, poly_edge, poly_out;
    double poly_threshold = 0.5, poly_edge_threshold = 0.5;
    int64_t poly_min_area = 0;
    poly_cmd->add_option("--in", poly_in, "probability PNG")->required();
    poly_cmd->add_option("--threshold", poly_threshold, "binarization threshold");
    poly_cmd->add_option("--min-area", poly_min_area, "drop regions below this pixel count");
    poly_cmd->add_option("--edge-prob", poly_edge, "edge probability PNG for edge splitting");
    poly_cmd->add_option("--edge-threshold", poly_edge_threshold, "edge split threshold");
    poly_cmd->add_option("--out", poly_out, "output GeoJSON path")->required();

    auto* eval_cmd = app.add_subcommand("evaluate", "polygon-IoU matching metrics");
    std::string eval_pred, eval_gt, eval_out;
    double eval_iou = 0.5;
    eval_cmd->add_option("--pred-dir", eval_pred, "predicted GeoJSON directory")->required();
    eval_cmd->add_option("--gt-dir", eval_gt, "ground-truth GeoJSON directory")->required();
    eval_cmd->add_option("--iou", eval_iou, "match threshold");
    eval_cmd->add_option("--out", eval_out, "report JSON path")->required();

    auto* render_cmd = app.add_subcommand("render", "overlay PNG: red/green/blue = FP/TP/FN");
    std::string render_image, render_pred, render_gt, render_out;
    double render_iou = 0.5;
    render_cmd->add_option("--image", render_image, "background raster PNG")->required();
    render_cmd->add_option("--pred", render_pred, "predicted GeoJSON")->required();
    render_cmd->add_option("--gt", render_gt, "ground-truth GeoJSON")->required();
    render_cmd->add_option("--iou", render_iou, "match threshold");
    render_cmd->add_option("--out", render_out, "overlay PNG path")->required();

    auto* rerun_cmd = app.add_subcommand("rerun", "re-execute a run from its manifest");
    std::string rerun_manifest, rerun_out;
    rerun_cmd->add_option("manifest", rerun_manifest, "run_manifest.json path")->required();
    rerun_cmd->add_option("--out", rerun_out, "override the output location");

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());  // CLI11 consumes back-to-front
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        // help and version requests are successes; anything else is a usage error
        return code == 0 ? 0 : 1;
    }

#ifdef _OPENMP
    omp_set_num_threads(jobs);
#endif

    try {
        if (*synth_cmd) return cmd_synth(synth_kind, synth_seed, synth_scenes, synth_out, args);
        if (*tile_cmd) return cmd_tile(tile_core[0], tile_core[1], tile_margin, tile_in, tile_out, args);
        if (*train_cmd) return cmd_train(train_config, train_data, train_out, args);
        if (*predict_cmd) return cmd_predict(predict_run, predict_in, predict_out, args);
        if (*poly_cmd) {
            return cmd_polygonize(poly_in, poly_threshold, poly_min_area, poly_edge,
                                  poly_edge_threshold, poly_out, args);
        }
        if (*eval_cmd) return cmd_evaluate(eval_pred, eval_gt, eval_iou, eval_out, args);
        if (*render_cmd) {
            return cmd_render(render_image, render_pred, render_gt, render_iou, render_out, args);
        }
        if (*rerun_cmd) return cmd_rerun(rerun_manifest, rerun_out);
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
    return 1;
}

}  // namespace

int main(int argc, char** argv) {
    std::vector<std::string> args;
    for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
    return run_cli(args);
}
