#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <limits>
#include <filesystem>

#include "bfe/trainer.hpp"
#include "test_support.hpp"

using namespace bfe;
using geo::Raster;
using nn::Tensor;
using train::Scene;
using train::TrainConfig;

namespace {

tfnet::TFNetConfig tiny_model() {
    tfnet::TFNetConfig cfg;
    cfg.stem_channels = 4;
    cfg.stage_channels = {6, 8};
    cfg.stage_dilations = {1, 2};
    cfg.aspp_rates = {1, 2};
    cfg.decoder_channels = 6;
    cfg.output_stride = 4;
    cfg.desk_scale = false;
    return cfg;
}

TrainConfig tiny_train(int core, int margin) {
    TrainConfig cfg;
    cfg.core_w = core;
    cfg.core_h = core;
    cfg.margin = margin;
    cfg.batch_size = 2;
    cfg.epochs = 1;
    cfg.learning_rate = 1e-3;
    cfg.seed = 5;
    return cfg;
}

Scene square_scene(int extent, int r0, int c0, int size, const std::string& id = "scene") {
    Scene scene;
    scene.id = id;
    scene.image = Raster::filled(extent, extent, 3, 40);
    for (int r = r0; r < r0 + size; ++r) {
        for (int c = c0; c < c0 + size; ++c) {
            for (int ch = 0; ch < 3; ++ch) scene.image.at(r, c, ch) = 200;
        }
    }
    scene.polygons = {test_support::rect_polygon(r0, c0, r0 + size, c0 + size)};
    return scene;
}

std::vector<const train::TrainSample*> all_samples(const std::vector<train::TrainSample>& samples) {
    std::vector<const train::TrainSample*> out;
    for (const auto& s : samples) out.push_back(&s);
    return out;
}

}  // namespace

TEST_CASE("make_samples: counts, extents, margins") {
    Scene scene = square_scene(32, 4, 4, 10);
    TrainConfig cfg = tiny_train(16, 4);
    auto samples = train::make_samples({scene}, cfg);
    REQUIRE(samples.size() == 4);  // 32/16 grid
    for (const auto& s : samples) {
        CHECK(s.image.shape() == std::vector<int64_t>{3, 24, 24});
        CHECK(s.building_mask.height == 16);
        CHECK(s.building_mask.width == 16);
        CHECK(s.edge_mask.height == 16);
    }

    // k = 0: image and mask extents coincide
    TrainConfig flat = tiny_train(16, 0);
    auto flat_samples = train::make_samples({scene}, flat);
    CHECK(flat_samples[0].image.shape() == std::vector<int64_t>{3, 16, 16});
}

TEST_CASE("make_samples: a straddling building is complete in the neighbor's augmented tile") {
    // 10x10 building crossing the core boundary at col 16
    Scene scene = square_scene(32, 10, 12, 10);
    TrainConfig cfg = tiny_train(16, 10);  // margin covers the whole building
    auto samples = train::make_samples({scene}, cfg);

    // tile (0,1) core covers cols 16..31; its augmented image spans cols 6..41
    const train::TrainSample* right = nullptr;
    for (const auto& s : samples) {
        if (s.record.row_index == 0 && s.record.col_index == 1) right = &s;
    }
    REQUIRE(right != nullptr);
    int64_t bright = 0;
    const auto& shape = right->image.shape();
    for (int64_t i = 0; i < right->image.numel(); ++i) {
        if (right->image.data()[i] > 0.5) ++bright;
    }
    CHECK(bright == 100 * shape[0]);  // all 100 building pixels, every channel
}

TEST_CASE("train_step with k = 0 equals the direct focal sum") {
    Scene scene = square_scene(16, 4, 4, 6);
    TrainConfig cfg = tiny_train(16, 0);
    cfg.batch_size = 1;
    auto samples = train::make_samples({scene}, cfg);
    REQUIRE(samples.size() == 1);

    tfnet::TFNetParams params = tfnet::build(tiny_model(), 99);

    // direct route: forward, focal per head, plain sum
    Tensor image = Tensor::from_vector(
        {1, 3, 16, 16},
        std::vector<double>(samples[0].image.data(), samples[0].image.data() + samples[0].image.numel()));
    tfnet::ForwardResult out = tfnet::tfnet_forward(params, image);
    std::vector<double> bm(16 * 16), em(16 * 16);
    for (int i = 0; i < 16 * 16; ++i) {
        bm[i] = samples[0].building_mask.pixels[i];
        em[i] = samples[0].edge_mask.pixels[i];
    }
    const double direct_b =
        nn::focal_loss(out.building_logits, Tensor::from_vector({1, 1, 16, 16}, bm), cfg.focal_alpha,
                       cfg.focal_gamma)
            .item();
    const double direct_e =
        nn::focal_loss(out.edge_logits, Tensor::from_vector({1, 1, 16, 16}, em), cfg.focal_alpha,
                       cfg.focal_gamma)
            .item();

    train::StepLosses losses = train::train_step(params, all_samples(samples), cfg);
    CHECK(losses.building == doctest::Approx(direct_b).epsilon(1e-15));
    CHECK(losses.edge == doctest::Approx(direct_e).epsilon(1e-15));
    CHECK(losses.total == direct_b + direct_e);
}

TEST_CASE("total is exactly the sum of the two head losses") {
    Scene scene = square_scene(24, 6, 6, 8);
    TrainConfig cfg = tiny_train(12, 4);
    auto samples = train::make_samples({scene}, cfg);
    tfnet::TFNetParams params = tfnet::build(tiny_model(), 3);
    train::StepLosses losses = train::train_step(params, all_samples(samples), cfg);
    CHECK(losses.total == losses.building + losses.edge);
}

TEST_CASE("margin-only mask pixels cannot reach the loss") {
    Scene scene = square_scene(24, 6, 6, 8);
    TrainConfig cfg = tiny_train(12, 4);
    auto samples = train::make_samples({scene}, cfg);
    tfnet::TFNetParams params = tfnet::build(tiny_model(), 4);
    train::BatchLoss base = train::batch_loss(params, all_samples(samples), cfg);

    // pad a core mask out to augmented size with poison, crop, and compare:
    // the crop must strip every poisoned pixel
    const Raster& core_mask = samples[0].building_mask;
    Raster padded = Raster::filled(core_mask.height + 2 * cfg.margin,
                                   core_mask.width + 2 * cfg.margin, 1, 1);  // poison = all-on margin
    for (int r = 0; r < core_mask.height; ++r) {
        for (int c = 0; c < core_mask.width; ++c) {
            padded.at(r + cfg.margin, c + cfg.margin) = core_mask.at(r, c);
        }
    }
    Raster cropped = nepagg::crop_core(padded, cfg.margin);
    CHECK(cropped.pixels == core_mask.pixels);

    // rebuilding the batch with masks that took the padded round trip leaves
    // the losses bitwise unchanged
    auto poisoned_samples = samples;
    poisoned_samples[0].building_mask = cropped;
    train::BatchLoss again = train::batch_loss(params, all_samples(poisoned_samples), cfg);
    CHECK(base.total.item() == again.total.item());
}

TEST_CASE("training is deterministic") {
    Scene scene = square_scene(24, 5, 7, 9);
    TrainConfig cfg = tiny_train(12, 2);
    cfg.epochs = 3;
    auto samples = train::make_samples({scene}, cfg);

    tfnet::TFNetParams a = tfnet::build(tiny_model(), 7);
    tfnet::TFNetParams b = tfnet::build(tiny_model(), 7);
    train::FitResult ra = train::fit(a, samples, cfg);
    train::FitResult rb = train::fit(b, samples, cfg);
    REQUIRE(ra.history.size() == rb.history.size());
    for (size_t i = 0; i < ra.history.size(); ++i) {
        CHECK(ra.history[i].losses.total == rb.history[i].losses.total);
        CHECK(ra.history[i].losses.building == rb.history[i].losses.building);
        CHECK(ra.history[i].losses.edge == rb.history[i].losses.edge);
    }
}

TEST_CASE("gradient of the full crop-and-sum pipeline matches finite differences") {
    Scene scene = square_scene(20, 5, 5, 8);
    TrainConfig cfg = tiny_train(10, 3);
    cfg.batch_size = 4;
    auto samples = train::make_samples({scene}, cfg);
    tfnet::TFNetParams params = tfnet::build(tiny_model(), 8);
    auto batch = all_samples(samples);

    auto loss_fn = [&](const Tensor&) { return train::batch_loss(params, batch, cfg).total; };
    CHECK(nn::grad_check(loss_fn, params.stem.weight, 1e-5) < 1e-4);
    CHECK(nn::grad_check(loss_fn, params.decoders[0].head.weight, 1e-5) < 1e-4);
}

TEST_CASE("fit: zero epochs leaves parameters untouched") {
    Scene scene = square_scene(16, 2, 2, 6);
    TrainConfig cfg = tiny_train(16, 0);
    cfg.epochs = 0;
    auto samples = train::make_samples({scene}, cfg);
    tfnet::TFNetParams params = tfnet::build(tiny_model(), 9);
    std::vector<double> snapshot(params.stem.weight.data(),
                                 params.stem.weight.data() + params.stem.weight.numel());
    train::FitResult r = train::fit(params, samples, cfg);
    CHECK(r.history.empty());
    CHECK(std::equal(snapshot.begin(), snapshot.end(), params.stem.weight.data()));
}

TEST_CASE("fit: loss drops while overfitting one tile") {
    Scene scene = square_scene(16, 4, 4, 8);
    TrainConfig cfg = tiny_train(16, 2);
    cfg.batch_size = 1;
    cfg.epochs = 300;
    cfg.learning_rate = 3e-2;
    auto samples = train::make_samples({scene}, cfg);
    tfnet::TFNetParams params = tfnet::build(tiny_model(), 10);
    train::FitResult r = train::fit(params, samples, cfg);
    REQUIRE(r.history.size() == 300);
    CHECK(r.history.back().losses.total < 0.4 * r.history.front().losses.total);
}

TEST_CASE("fit: resuming from a checkpoint reproduces the trajectory bitwise") {
    namespace fs = std::filesystem;
    Scene scene = square_scene(24, 5, 5, 10);
    TrainConfig cfg = tiny_train(12, 2);
    cfg.epochs = 6;
    auto samples = train::make_samples({scene}, cfg);

    tfnet::TFNetParams full = tfnet::build(tiny_model(), 11);
    train::FitResult uninterrupted = train::fit(full, samples, cfg);

    const std::string dir = (fs::temp_directory_path() / "bfe_resume_test").string();
    fs::remove_all(dir);
    tfnet::TFNetParams half = tfnet::build(tiny_model(), 11);
    TrainConfig first_half = cfg;
    first_half.epochs = 3;
    train::fit(half, samples, first_half, dir);

    tfnet::TFNetParams resumed = tfnet::load_checkpoint(dir + "/final", tiny_model());
    train::FitResult tail = train::fit(resumed, samples, cfg, "", /*start_epoch=*/3);

    const size_t steps_per_epoch = uninterrupted.history.size() / 6;
    REQUIRE(tail.history.size() == steps_per_epoch * 3);
    for (size_t i = 0; i < tail.history.size(); ++i) {
        const auto& expect = uninterrupted.history[steps_per_epoch * 3 + i];
        CHECK(tail.history[i].step == expect.step);
        CHECK(tail.history[i].losses.total == expect.losses.total);
    }
    fs::remove_all(dir);
}

TEST_CASE("fit writes a loss history csv") {
    namespace fs = std::filesystem;
    Scene scene = square_scene(16, 3, 3, 7);
    TrainConfig cfg = tiny_train(16, 0);
    cfg.epochs = 2;
    auto samples = train::make_samples({scene}, cfg);
    tfnet::TFNetParams params = tfnet::build(tiny_model(), 12);
    const std::string dir = (fs::temp_directory_path() / "bfe_history_test").string();
    fs::remove_all(dir);
    train::fit(params, samples, cfg, dir);
    std::ifstream csv(dir + "/loss_history.csv");
    REQUIRE(csv.good());
    std::string header;
    std::getline(csv, header);
    CHECK(header == "step,loss_building,loss_edge,total");
    int rows = 0;
    for (std::string line; std::getline(csv, line);) ++rows;
    CHECK(rows == 2);
    CHECK(fs::exists(dir + "/final.json"));
    fs::remove_all(dir);
}

TEST_CASE("predict: parent-sized, deterministic, margin-sufficient") {
    Scene scene = square_scene(32, 10, 10, 9);
    TrainConfig cfg = tiny_train(16, 4);
    tfnet::TFNetParams params = tfnet::build(tiny_model(), 13);

    train::PredictResult out = train::predict(params, scene.image, cfg);
    CHECK(out.building.height == 32);
    CHECK(out.building.width == 32);
    CHECK(out.has_edge);

    train::PredictResult again = train::predict(params, scene.image, cfg);
    CHECK(std::memcmp(out.building.values.data(), again.building.values.data(),
                      out.building.values.size() * sizeof(double)) == 0);

    // pad the parent with a full core of zeros per side: the tiling grid
    // stays aligned, so interior predictions must be bitwise identical
    // (the network never sees anything beyond its k-margin)
    Raster padded = Raster::filled(32 + 2 * 16, 32 + 2 * 16, 3, 0);
    for (int r = 0; r < 32; ++r) {
        for (int c = 0; c < 32; ++c) {
            for (int ch = 0; ch < 3; ++ch) padded.at(r + 16, c + 16, ch) = scene.image.at(r, c, ch);
        }
    }
    train::PredictResult shifted = train::predict(params, padded, cfg);
    for (int r = 0; r < 32; ++r) {
        for (int c = 0; c < 32; ++c) {
            REQUIRE(out.building.at(r, c) == shifted.building.at(r + 16, c + 16));
        }
    }
}

TEST_CASE("fit writes checkpoints at the configured cadence") {
    namespace fs = std::filesystem;
    Scene scene = square_scene(16, 3, 3, 7);
    TrainConfig cfg = tiny_train(16, 0);
    cfg.epochs = 5;  // one step per epoch here
    cfg.checkpoint_every = 2;
    auto samples = train::make_samples({scene}, cfg);
    tfnet::TFNetParams params = tfnet::build(tiny_model(), 16);
    const std::string dir = (fs::temp_directory_path() / "bfe_cadence_test").string();
    fs::remove_all(dir);
    train::fit(params, samples, cfg, dir);
    CHECK(fs::exists(dir + "/ckpt_step_000002.json"));
    CHECK(fs::exists(dir + "/ckpt_step_000004.bin"));
    CHECK_FALSE(fs::exists(dir + "/ckpt_step_000003.json"));
    CHECK(fs::exists(dir + "/final.json"));
    fs::remove_all(dir);
}

TEST_CASE("fit aborts with a diagnostic when the loss stops being finite") {
    Scene scene = square_scene(16, 4, 4, 8);
    TrainConfig cfg = tiny_train(16, 0);
    cfg.epochs = 3;
    auto samples = train::make_samples({scene}, cfg);
    tfnet::TFNetParams params = tfnet::build(tiny_model(), 15);
    // poison past the last relu so the NaN reaches the loss
    params.decoders[0].head.weight.data()[0] = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_WITH_AS(train::fit(params, samples, cfg),
                         doctest::Contains("non-finite loss at step 1"), std::runtime_error);
}

TEST_CASE("single-decoder training runs without an edge head") {
    Scene scene = square_scene(16, 4, 4, 8);
    TrainConfig cfg = tiny_train(16, 0);
    cfg.epochs = 2;
    auto samples = train::make_samples({scene}, cfg);
    tfnet::TFNetConfig model = tiny_model();
    model.edge_decoder = false;
    tfnet::TFNetParams params = tfnet::build(model, 14);
    train::FitResult r = train::fit(params, samples, cfg);
    for (const auto& rec : r.history) {
        CHECK(rec.losses.edge == 0.0);
        CHECK(rec.losses.total == rec.losses.building);
    }
    train::PredictResult out = train::predict(params, scene.image, cfg);
    CHECK_FALSE(out.has_edge);
}
