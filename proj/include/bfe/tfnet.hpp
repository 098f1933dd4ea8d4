#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bfe/tensor.hpp"

// Tuning-fork segmentation network: one dilated-residual encoder whose
// features feed two architecturally identical pyramid-pooling decoders, one
// for building-mask logits and one for edge-mask logits, both at the input's
// spatial size.

namespace bfe::tfnet {

struct TFNetConfig {
    int64_t input_channels = 3;
    int64_t stem_channels = 16;
    std::vector<int64_t> stage_channels{16, 32, 64};
    std::vector<int64_t> stage_dilations{1, 1, 2};
    std::vector<int64_t> aspp_rates{1, 3, 6};
    int64_t decoder_channels = 32;
    int64_t output_stride = 8;  // stem stride 2, stages stride 2 until reached
    bool desk_scale = true;
    bool edge_decoder = true;  // false builds the single-decoder ablation

    static TFNetConfig desk_default() { return TFNetConfig{}; }

    /// Stage strides implied by output_stride: 2 while the running stride is
    /// below it, then 1 (those stages rely on dilation instead).
    std::vector<int64_t> stage_strides() const;
    int64_t low_level_channels() const { return stem_channels; }
    void validate() const;
    uint64_t hash() const;

    std::string to_json() const;
    static TFNetConfig from_json(const std::string& text);

    bool operator==(const TFNetConfig&) const = default;
};

/// Two 3x3 convs plus a projection shortcut when stride or channel width
/// changes.
struct ResidualStage {
    nn::ConvSpec conv1;
    nn::ConvSpec conv2;
    nn::ConvSpec shortcut;
    bool projected = false;
};

struct DecoderParams {
    std::vector<nn::ConvSpec> aspp_branches;  // 3x3, dilation = rate
    nn::ConvSpec pool_conv;                   // 1x1 after global pooling
    nn::ConvSpec project;                     // 1x1 fusing the branches
    nn::ConvSpec low_proj;                    // 1x1 on the low-level tap
    nn::ConvSpec refine;                      // 3x3 after the skip concat
    nn::ConvSpec head;                        // 1x1 to a single logit channel
};

struct TFNetParams {
    TFNetConfig config;
    nn::ConvSpec stem;
    std::vector<ResidualStage> stages;
    std::vector<DecoderParams> decoders;  // [building] or [building, edge]

    /// Deterministic (name, tensor) order; the checkpoint layout.
    std::vector<std::pair<std::string, nn::Tensor>> named_parameters() const;
    std::vector<nn::Tensor> parameters() const;
    int64_t parameter_count() const;
};

/// Deterministic initialization from the seed; the two decoders share the
/// architecture but draw independent weights.
TFNetParams build(const TFNetConfig& config, uint64_t seed);

/// Input must be (B, input_channels, H, W) with H and W divisible by
/// output_stride. Returns features at H/output_stride plus the low-level tap
/// taken after the stem (at stride 2).
struct EncoderFeatures {
    nn::Tensor deep;
    nn::Tensor low_level;
};
EncoderFeatures encoder_forward(const TFNetParams& params, const nn::Tensor& x);

/// Parallel dilated branches plus a pooled branch, concatenated, projected,
/// fused with the low-level tap, refined, and upsampled to input size.
nn::Tensor aspp_decoder_forward(const DecoderParams& decoder, const TFNetConfig& config,
                                const nn::Tensor& deep, const nn::Tensor& low_level);

struct ForwardResult {
    nn::Tensor building_logits;
    nn::Tensor edge_logits;  // undefined when the edge decoder is disabled
};

/// Runs the encoder once and each decoder once on the shared features.
ForwardResult tfnet_forward(const TFNetParams& params, const nn::Tensor& x);

// Checkpoint: `<base>.json` + `<base>.bin` via the generic tensor format,
// with the model config and its hash embedded. Loading verifies the hash
// against the expected config.
void save_checkpoint(const TFNetParams& params, const std::string& base_path);
TFNetParams load_checkpoint(const std::string& base_path, const TFNetConfig& expected);

}  // namespace bfe::tfnet
