#include "bfe/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <stdexcept>

#include <json.hpp>

namespace bfe::train {

namespace fs = std::filesystem;
using geo::ProbRaster;
using geo::Raster;
using nlohmann::json;
using nn::Tensor;

void TrainConfig::validate() const {
    if (core_w <= 0 || core_h <= 0) throw std::invalid_argument("TrainConfig: core extents must be positive");
    if (margin < 0) throw std::invalid_argument("TrainConfig: margin must be >= 0");
    if (batch_size <= 0) throw std::invalid_argument("TrainConfig: batch_size must be positive");
    if (epochs < 0) throw std::invalid_argument("TrainConfig: epochs must be >= 0");
    if (!(learning_rate >= 0.0)) throw std::invalid_argument("TrainConfig: learning_rate must be >= 0");
    if (!(focal_alpha > 0.0 && focal_alpha <= 1.0)) throw std::invalid_argument("TrainConfig: focal_alpha in (0,1]");
    if (focal_gamma < 0.0) throw std::invalid_argument("TrainConfig: focal_gamma must be >= 0");
    if (edge_width < 1) throw std::invalid_argument("TrainConfig: edge_width must be >= 1");
    if (checkpoint_every < 0) throw std::invalid_argument("TrainConfig: checkpoint_every must be >= 0");
}

std::string TrainConfig::to_json() const {
    json j;
    j["core_w"] = core_w;
    j["core_h"] = core_h;
    j["margin"] = margin;
    j["batch_size"] = batch_size;
    j["epochs"] = epochs;
    j["learning_rate"] = learning_rate;
    j["focal_alpha"] = focal_alpha;
    j["focal_gamma"] = focal_gamma;
    j["building_loss_weight"] = building_loss_weight;
    j["edge_loss_weight"] = edge_loss_weight;
    j["edge_width"] = edge_width;
    j["seed"] = seed;
    j["checkpoint_every"] = checkpoint_every;
    return j.dump();
}

TrainConfig TrainConfig::from_json(const std::string& text) {
    json j = json::parse(text);
    TrainConfig c;
    c.core_w = j.value("core_w", c.core_w);
    c.core_h = j.value("core_h", c.core_h);
    c.margin = j.value("margin", c.margin);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.epochs = j.value("epochs", c.epochs);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.focal_alpha = j.value("focal_alpha", c.focal_alpha);
    c.focal_gamma = j.value("focal_gamma", c.focal_gamma);
    c.building_loss_weight = j.value("building_loss_weight", c.building_loss_weight);
    c.edge_loss_weight = j.value("edge_loss_weight", c.edge_loss_weight);
    c.edge_width = j.value("edge_width", c.edge_width);
    c.seed = j.value("seed", c.seed);
    c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
    c.validate();
    return c;
}

// ---------------------------------------------------------------------------
// sample preparation

namespace {

Tensor image_to_tensor(const Raster& image) {
    const int64_t C = image.channels, H = image.height, W = image.width;
    Tensor t = Tensor::zeros({C, H, W});
    double* d = t.data();
    // interleaved uint8 -> planar double in [0,1]
    for (int64_t c = 0; c < C; ++c) {
        for (int64_t r = 0; r < H; ++r) {
            for (int64_t w = 0; w < W; ++w) {
                d[(c * H + r) * W + w] =
                    static_cast<double>(image.pixels[static_cast<size_t>((r * W + w) * C + c)]) / 255.0;
            }
        }
    }
    return t;
}

std::vector<geo::Polygon> shift_polygons(const std::vector<geo::Polygon>& polygons, double drow,
                                         double dcol) {
    std::vector<geo::Polygon> out = polygons;
    for (geo::Polygon& poly : out) {
        for (geo::Vertex& v : poly.exterior) {
            v.row += drow;
            v.col += dcol;
        }
        for (auto& hole : poly.holes) {
            for (geo::Vertex& v : hole) {
                v.row += drow;
                v.col += dcol;
            }
        }
    }
    return out;
}

}  // namespace

std::vector<TrainSample> make_samples(const std::vector<Scene>& scenes, const TrainConfig& config) {
    config.validate();
    std::vector<TrainSample> samples;
    for (size_t si = 0; si < scenes.size(); ++si) {
        const Scene& scene = scenes[si];
        scene.image.validate();
        const auto shifted = [&](const nepagg::TileRecord& rec) {
            return shift_polygons(scene.polygons, -static_cast<double>(rec.origin_row),
                                  -static_cast<double>(rec.origin_col));
        };
        for (const nepagg::TileRecord& rec :
             nepagg::split_raster(scene.image, config.core_w, config.core_h, config.margin)) {
            TrainSample sample;
            sample.record = rec;
            sample.scene_index = static_cast<int>(si);
            sample.image = image_to_tensor(nepagg::augment_tile(scene.image, rec, config.margin));
            const auto local = shifted(rec);
            sample.building_mask = geo::rasterize(local, config.core_h, config.core_w);
            sample.edge_mask = geo::edge_mask(local, config.core_h, config.core_w, config.edge_width);
            samples.push_back(std::move(sample));
        }
    }
    return samples;
}

// ---------------------------------------------------------------------------
// loss and optimization

namespace {

Tensor stack_images(const std::vector<const TrainSample*>& batch) {
    const auto& shape = batch.front()->image.shape();  // (C,H,W)
    const int64_t C = shape[0], H = shape[1], W = shape[2];
    const int64_t B = static_cast<int64_t>(batch.size());
    Tensor out = Tensor::zeros({B, C, H, W});
    for (int64_t b = 0; b < B; ++b) {
        const Tensor& img = batch[static_cast<size_t>(b)]->image;
        if (img.shape() != shape) throw std::invalid_argument("train batch mixes tile shapes");
        std::copy(img.data(), img.data() + img.numel(), out.data() + b * img.numel());
    }
    return out;
}

Tensor stack_masks(const std::vector<const TrainSample*>& batch, bool edge) {
    const int64_t B = static_cast<int64_t>(batch.size());
    const Raster& first = edge ? batch.front()->edge_mask : batch.front()->building_mask;
    const int64_t H = first.height, W = first.width;
    Tensor out = Tensor::zeros({B, 1, H, W});
    for (int64_t b = 0; b < B; ++b) {
        const Raster& mask = edge ? batch[static_cast<size_t>(b)]->edge_mask
                                  : batch[static_cast<size_t>(b)]->building_mask;
        double* dst = out.data() + b * H * W;
        for (int64_t i = 0; i < H * W; ++i) dst[i] = static_cast<double>(mask.pixels[static_cast<size_t>(i)]);
    }
    return out;
}

}  // namespace

BatchLoss batch_loss(const tfnet::TFNetParams& params, const std::vector<const TrainSample*>& batch,
                     const TrainConfig& config) {
    if (batch.empty()) throw std::invalid_argument("batch_loss: empty batch");
    Tensor images = stack_images(batch);
    tfnet::ForwardResult logits = tfnet::tfnet_forward(params, images);

    // loss sees core pixels only
    Tensor building_core = nepagg::crop_core(logits.building_logits, config.margin);
    Tensor building_target = stack_masks(batch, /*edge=*/false);
    BatchLoss loss;
    loss.building = nn::focal_loss(building_core, building_target, config.focal_alpha, config.focal_gamma);

    if (logits.edge_logits.defined()) {
        Tensor edge_core = nepagg::crop_core(logits.edge_logits, config.margin);
        Tensor edge_target = stack_masks(batch, /*edge=*/true);
        loss.edge = nn::focal_loss(edge_core, edge_target, config.focal_alpha, config.focal_gamma);
        loss.total = nn::add(nn::scale(loss.building, config.building_loss_weight),
                             nn::scale(loss.edge, config.edge_loss_weight));
    } else {
        loss.total = nn::scale(loss.building, config.building_loss_weight);
    }
    return loss;
}

StepLosses train_step(tfnet::TFNetParams& params, const std::vector<const TrainSample*>& batch,
                      const TrainConfig& config) {
    BatchLoss loss = batch_loss(params, batch, config);
    StepLosses values;
    values.building = loss.building.item();
    values.edge = loss.edge.defined() ? loss.edge.item() : 0.0;
    values.total = loss.total.item();
    loss.total.backward();
    nn::sgd_step(params.parameters(), config.learning_rate);
    return values;
}

FitResult fit(tfnet::TFNetParams& params, const std::vector<TrainSample>& samples,
              const TrainConfig& config, const std::string& out_dir, int start_epoch) {
    config.validate();
    if (samples.empty()) throw std::invalid_argument("fit: empty dataset");

    std::ofstream history_csv;
    if (!out_dir.empty()) {
        fs::create_directories(out_dir);
        const bool resuming = start_epoch > 0 && fs::exists(fs::path(out_dir) / "loss_history.csv");
        history_csv.open(fs::path(out_dir) / "loss_history.csv",
                         resuming ? std::ios::app : std::ios::trunc);
        if (!resuming) history_csv << "step,loss_building,loss_edge,total\n";
    }

    const int batches_per_epoch =
        static_cast<int>((samples.size() + config.batch_size - 1) / config.batch_size);

    FitResult result;
    std::vector<size_t> order(samples.size());
    int step = start_epoch * batches_per_epoch;
    for (int epoch = start_epoch; epoch < config.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), size_t{0});
        // stateless per-epoch shuffle so resumed runs reproduce the trajectory
        std::mt19937_64 rng(config.seed * 0x9e3779b97f4a7c15ull + static_cast<uint64_t>(epoch));
        std::shuffle(order.begin(), order.end(), rng);

        for (int b = 0; b < batches_per_epoch; ++b) {
            std::vector<const TrainSample*> batch;
            const size_t lo = static_cast<size_t>(b) * config.batch_size;
            const size_t hi = std::min(samples.size(), lo + config.batch_size);
            for (size_t i = lo; i < hi; ++i) batch.push_back(&samples[order[i]]);

            StepLosses losses = train_step(params, batch, config);
            ++step;
            if (!std::isfinite(losses.total) || !std::isfinite(losses.building) ||
                !std::isfinite(losses.edge)) {
                throw std::runtime_error("fit: non-finite loss at step " + std::to_string(step) +
                                         " (building=" + std::to_string(losses.building) +
                                         ", edge=" + std::to_string(losses.edge) + ")");
            }
            result.history.push_back({step, losses});
            if (history_csv.is_open()) {
                char line[160];
                std::snprintf(line, sizeof(line), "%d,%.17g,%.17g,%.17g\n", step, losses.building,
                              losses.edge, losses.total);
                history_csv << line;
            }
            if (!out_dir.empty() && config.checkpoint_every > 0 && step % config.checkpoint_every == 0) {
                char name[64];
                std::snprintf(name, sizeof(name), "ckpt_step_%06d", step);
                tfnet::save_checkpoint(params, (fs::path(out_dir) / name).string());
            }
        }
    }
    result.steps_run = step - start_epoch * batches_per_epoch;
    if (!out_dir.empty()) {
        tfnet::save_checkpoint(params, (fs::path(out_dir) / "final").string());
    }
    return result;
}

// ---------------------------------------------------------------------------
// inference

PredictResult predict(const tfnet::TFNetParams& params, const Raster& parent,
                      const TrainConfig& config) {
    config.validate();
    parent.validate();

    PredictResult result;
    result.building = ProbRaster::filled(parent.height, parent.width, 0.0);
    result.edge = ProbRaster::filled(parent.height, parent.width, 0.0);
    result.has_edge = params.config.edge_decoder;

    for (const nepagg::TileRecord& rec :
         nepagg::split_raster(parent, config.core_w, config.core_h, config.margin)) {
        Raster tile = nepagg::augment_tile(parent, rec, config.margin);
        Tensor img = image_to_tensor(tile);
        const auto& s = img.shape();
        Tensor batch = Tensor::from_vector({1, s[0], s[1], s[2]},
                                           std::vector<double>(img.data(), img.data() + img.numel()));
        tfnet::ForwardResult logits = tfnet::tfnet_forward(params, batch);

        auto write_head = [&](const Tensor& head_logits, ProbRaster& out) {
            Tensor core = nepagg::crop_core(nn::sigmoid(head_logits), config.margin);
            const double* values = core.data();
            const int rows = std::min(config.core_h, parent.height - rec.origin_row);
            const int cols = std::min(config.core_w, parent.width - rec.origin_col);
            for (int r = 0; r < rows; ++r) {
                for (int c = 0; c < cols; ++c) {
                    out.at(rec.origin_row + r, rec.origin_col + c) =
                        values[r * config.core_w + c];
                }
            }
        };
        write_head(logits.building_logits, result.building);
        if (logits.edge_logits.defined()) write_head(logits.edge_logits, result.edge);
    }
    return result;
}

}  // namespace bfe::train
