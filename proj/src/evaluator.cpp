#include "bfe/evaluator.hpp"

#include <algorithm>
#include <filesystem>
#include <stdexcept>

#include <json.hpp>

namespace bfe::eval {

namespace fs = std::filesystem;
using nlohmann::json;
using polygonize::PolygonSet;

MatchReport match(const PolygonSet& preds, const PolygonSet& gts, double iou_threshold) {
    if (!(iou_threshold > 0.0 && iou_threshold <= 1.0)) {
        throw std::invalid_argument("match: iou_threshold must lie in (0,1]");
    }
    MatchReport report;
    report.num_preds = static_cast<int>(preds.size());
    report.num_gts = static_cast<int>(gts.size());
    report.preds.resize(preds.size());

    std::vector<bool> consumed(gts.size(), false);
    for (size_t i = 0; i < preds.size(); ++i) {
        auto& outcome = report.preds[i];
        double best = 0.0;
        int best_j = -1;
        for (size_t j = 0; j < gts.size(); ++j) {
            if (consumed[j]) continue;
            const double iou = geo::region_iou(preds.entries[i].region, gts.entries[j].region);
            if (iou > best) {  // ties keep the lowest remaining index
                best = iou;
                best_j = static_cast<int>(j);
            }
        }
        outcome.max_iou = best;
        if (best_j != -1 && best >= iou_threshold) {
            outcome.true_positive = true;
            outcome.matched_gt = best_j;
            consumed[static_cast<size_t>(best_j)] = true;
            ++report.tp;
        } else {
            ++report.fp;
        }
    }
    for (size_t j = 0; j < gts.size(); ++j) {
        if (!consumed[j]) report.unmatched_gts.push_back(static_cast<int>(j));
    }
    report.fn = static_cast<int>(report.unmatched_gts.size());
    return report;
}

double f1_standard(double precision, double recall) {
    const double denom = precision + recall;
    return denom > 0.0 ? 2.0 * precision * recall / denom : 0.0;
}

double f1_paper_literal(double precision, double recall) {
    const double denom = precision + recall - precision * recall;
    return denom > 0.0 ? 2.0 * precision * recall / denom : 0.0;
}

Metrics metrics_from_counts(int tp, int fp, int fn) {
    const int num_preds = tp + fp;
    const int num_gts = tp + fn;
    Metrics m;
    if (num_preds == 0 && num_gts == 0) {
        m.precision = m.recall = m.f1_standard = m.f1_paper_literal = 1.0;
        return m;
    }
    m.precision = num_preds > 0 ? static_cast<double>(tp) / num_preds : 0.0;
    m.recall = num_gts > 0 ? static_cast<double>(tp) / num_gts : 0.0;
    m.f1_standard = f1_standard(m.precision, m.recall);
    m.f1_paper_literal = f1_paper_literal(m.precision, m.recall);
    return m;
}

Metrics compute_metrics(const MatchReport& report) {
    return metrics_from_counts(report.tp, report.fp, report.fn);
}

DatasetReport evaluate_dataset(const std::vector<RasterInstance>& instances, double iou_threshold) {
    DatasetReport out;
    for (const RasterInstance& inst : instances) {
        DatasetReport::PerRaster pr;
        pr.id = inst.id;
        pr.report = match(inst.preds, inst.gts, iou_threshold);
        pr.metrics = compute_metrics(pr.report);
        out.tp += pr.report.tp;
        out.fp += pr.report.fp;
        out.fn += pr.report.fn;
        out.per_raster.push_back(std::move(pr));
    }
    out.aggregate = metrics_from_counts(out.tp, out.fp, out.fn);
    return out;
}

std::vector<RasterInstance> load_instances(const std::string& pred_dir, const std::string& gt_dir,
                                           std::vector<std::string>& warnings) {
    auto list_geojson = [](const std::string& dir) {
        std::vector<fs::path> files;
        if (!fs::is_directory(dir)) throw std::runtime_error("not a directory: " + dir);
        for (const auto& entry : fs::directory_iterator(dir)) {
            if (entry.is_regular_file() && entry.path().extension() == ".geojson") {
                files.push_back(entry.path());
            }
        }
        std::sort(files.begin(), files.end());
        return files;
    };

    auto build_set = [](const geo::PolygonFile& file) {
        const int h = file.image_height, w = file.image_width;
        if (h <= 0 || w <= 0) return PolygonSet{};
        return polygonize::from_polygons(file.polygons, h, w);
    };

    std::vector<RasterInstance> instances;
    const auto gt_files = list_geojson(gt_dir);
    for (const fs::path& gt_path : gt_files) {
        const std::string stem = gt_path.stem().string();
        RasterInstance inst;
        inst.id = stem;
        geo::PolygonFile gt_file = geo::read_geojson(gt_path.string());
        if (gt_file.image_height <= 0 || gt_file.image_width <= 0) {
            warnings.push_back("skipping " + stem + ": ground truth carries no image extents");
            continue;
        }

        const fs::path pred_path = fs::path(pred_dir) / (stem + ".geojson");
        if (fs::exists(pred_path)) {
            geo::PolygonFile pred_file = geo::read_geojson(pred_path.string());
            // rasterize both sides on the union extent; IoU is translation
            // stable, so padding is harmless
            const int h = std::max(gt_file.image_height, pred_file.image_height);
            const int w = std::max(gt_file.image_width, pred_file.image_width);
            inst.preds = polygonize::from_polygons(pred_file.polygons, h, w);
            inst.gts = polygonize::from_polygons(gt_file.polygons, h, w);
        } else {
            warnings.push_back("no prediction for " + stem + ": scoring an empty prediction set");
            inst.gts = build_set(gt_file);
        }
        instances.push_back(std::move(inst));
    }

    for (const fs::path& pred_path : list_geojson(pred_dir)) {
        const std::string stem = pred_path.stem().string();
        if (!fs::exists(fs::path(gt_dir) / (stem + ".geojson"))) {
            warnings.push_back("missing ground truth for " + stem + ": raster skipped");
        }
    }
    return instances;
}

std::string report_to_json(const DatasetReport& report, double iou_threshold) {
    auto metrics_json = [](const Metrics& m, int tp, int fp, int fn) {
        json j;
        j["TP"] = tp;
        j["FP"] = fp;
        j["FN"] = fn;
        j["precision"] = m.precision;
        j["recall"] = m.recall;
        j["f1_standard"] = m.f1_standard;
        j["f1_paper_literal"] = m.f1_paper_literal;
        return j;
    };

    json doc;
    doc["iou_threshold"] = iou_threshold;
    json per = json::object();
    for (const auto& pr : report.per_raster) {
        per[pr.id] = metrics_json(pr.metrics, pr.report.tp, pr.report.fp, pr.report.fn);
    }
    doc["per_raster"] = std::move(per);
    doc["aggregate"] = metrics_json(report.aggregate, report.tp, report.fp, report.fn);
    doc["warnings"] = report.warnings;
    return doc.dump(2) + "\n";
}

}  // namespace bfe::eval
