#pragma once

#include <string>
#include <vector>

#include "bfe/geometry.hpp"
#include "bfe/nepagg.hpp"
#include "bfe/raster.hpp"
#include "bfe/tensor.hpp"
#include "bfe/tfnet.hpp"

// End-to-end training loop: augmented tiles in, dual logits out, crop to the
// core, focal loss per head, summed, backpropagated, SGD step.

namespace bfe::train {

struct TrainConfig {
    int core_w = 64;
    int core_h = 64;
    int margin = 8;
    int batch_size = 4;
    int epochs = 200;
    double learning_rate = 1e-3;
    double focal_alpha = 0.25;
    double focal_gamma = 2.0;
    double building_loss_weight = 1.0;
    double edge_loss_weight = 1.0;
    int edge_width = 2;
    uint64_t seed = 0;
    int checkpoint_every = 0;  // steps between checkpoints; 0 keeps only the final one

    void validate() const;
    std::string to_json() const;
    static TrainConfig from_json(const std::string& text);
};

/// One parent raster with its ground-truth polygons.
struct Scene {
    std::string id;
    geo::Raster image;
    std::vector<geo::Polygon> polygons;
};

struct TrainSample {
    nn::Tensor image;           // (C, core+2k, core+2k), values in [0,1]
    geo::Raster building_mask;  // core-sized, {0,1}
    geo::Raster edge_mask;      // core-sized, {0,1}
    nepagg::TileRecord record;
    int scene_index = 0;
};

/// Tiles every scene, augments each tile, and rasterizes both masks on the
/// core window. Deterministic order: scenes as given, tiles row-major.
std::vector<TrainSample> make_samples(const std::vector<Scene>& scenes, const TrainConfig& config);

struct StepLosses {
    double building = 0.0;
    double edge = 0.0;
    double total = 0.0;
};

/// The differentiable loss of one batch (forward + crop + weighted focal
/// sum); train_step backpropagates exactly this value.
struct BatchLoss {
    nn::Tensor building;
    nn::Tensor edge;  // undefined for a single-decoder model
    nn::Tensor total;
};
BatchLoss batch_loss(const tfnet::TFNetParams& params,
                     const std::vector<const TrainSample*>& batch, const TrainConfig& config);

StepLosses train_step(tfnet::TFNetParams& params, const std::vector<const TrainSample*>& batch,
                      const TrainConfig& config);

struct FitResult {
    struct Record {
        int step = 0;
        StepLosses losses;
    };
    std::vector<Record> history;
    int steps_run = 0;
};

/// epochs x batches of train_step with seeded shuffling per epoch. The
/// shuffle for epoch e depends only on (seed, e), so a run resumed from a
/// checkpoint at an epoch boundary reproduces the uninterrupted trajectory
/// bitwise. When out_dir is non-empty, checkpoints and a loss CSV
/// (step,loss_building,loss_edge,total) are written there. Aborts with a
/// diagnostic if a loss stops being finite.
FitResult fit(tfnet::TFNetParams& params, const std::vector<TrainSample>& samples,
              const TrainConfig& config, const std::string& out_dir = "", int start_epoch = 0);

struct PredictResult {
    geo::ProbRaster building;
    geo::ProbRaster edge;  // all zeros for a single-decoder model
    bool has_edge = false;
};

/// tile -> augment -> forward -> sigmoid -> crop -> stitch, both heads.
PredictResult predict(const tfnet::TFNetParams& params, const geo::Raster& parent,
                      const TrainConfig& config);

}  // namespace bfe::train
