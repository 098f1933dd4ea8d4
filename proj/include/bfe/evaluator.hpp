#pragma once

#include <optional>
#include <string>
#include <vector>

#include "bfe/polygonize.hpp"

namespace bfe::eval {

/// Outcome of greedy IoU matching. Count identities hold for every input:
/// tp + fp == #preds and tp + fn == #gts; each ground truth is consumed by
/// at most one prediction.
struct MatchReport {
    struct PredOutcome {
        double max_iou = 0.0;       // S_i: best IoU over the gts still unmatched
        int matched_gt = -1;        // original gt index, -1 for false positives
        bool true_positive = false;
    };
    std::vector<PredOutcome> preds;
    std::vector<int> unmatched_gts;  // false negatives, ascending original index
    int tp = 0;
    int fp = 0;
    int fn = 0;
    int num_preds = 0;
    int num_gts = 0;
};

/// Greedy matching: predictions in canonical order; each takes the max-IoU
/// ground truth among those still unmatched (ties to the lowest remaining
/// index) and consumes it when the IoU reaches the threshold.
MatchReport match(const polygonize::PolygonSet& preds, const polygonize::PolygonSet& gts,
                  double iou_threshold = 0.5);

/// f1_standard is the harmonic mean 2PR/(P+R). f1_paper_literal divides by
/// P+R-PR instead and exceeds 1 for good predictions (2 at P=R=1); it is
/// reported for documentation only.
struct Metrics {
    double precision = 0.0;
    double recall = 0.0;
    double f1_standard = 0.0;
    double f1_paper_literal = 0.0;
};

/// Degenerate cases: no predictions against non-empty truth scores
/// precision 0; no ground truth against non-empty predictions scores
/// recall 0; two empty sets score 1 everywhere.
Metrics compute_metrics(const MatchReport& report);
Metrics metrics_from_counts(int tp, int fp, int fn);

double f1_standard(double precision, double recall);
double f1_paper_literal(double precision, double recall);

struct RasterInstance {
    std::string id;
    polygonize::PolygonSet preds;
    polygonize::PolygonSet gts;
};

struct DatasetReport {
    struct PerRaster {
        std::string id;
        MatchReport report;
        Metrics metrics;
    };
    std::vector<PerRaster> per_raster;
    int tp = 0, fp = 0, fn = 0;
    Metrics aggregate;  // micro-average: counts summed before the ratios
    std::vector<std::string> warnings;
};

DatasetReport evaluate_dataset(const std::vector<RasterInstance>& instances, double iou_threshold = 0.5);

/// Directory pairing for the CLI: reads `*.geojson` from both directories,
/// matching files by stem. A prediction file without ground truth is
/// reported and skipped; a ground-truth file without a prediction counts as
/// an empty prediction set (all its polygons become false negatives).
std::vector<RasterInstance> load_instances(const std::string& pred_dir, const std::string& gt_dir,
                                           std::vector<std::string>& warnings);

std::string report_to_json(const DatasetReport& report, double iou_threshold);

}  // namespace bfe::eval
