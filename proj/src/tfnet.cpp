#include "bfe/tfnet.hpp"

#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "bfe/checkpoint.hpp"

namespace bfe::tfnet {

using nlohmann::json;
using nn::ConvSpec;
using nn::Tensor;

std::vector<int64_t> TFNetConfig::stage_strides() const {
    std::vector<int64_t> strides;
    int64_t running = 2;  // stem
    for (size_t i = 0; i < stage_channels.size(); ++i) {
        if (running < output_stride) {
            strides.push_back(2);
            running *= 2;
        } else {
            strides.push_back(1);
        }
    }
    return strides;
}

void TFNetConfig::validate() const {
    if (input_channels <= 0 || stem_channels <= 0 || decoder_channels <= 0) {
        throw std::invalid_argument("TFNetConfig: channel counts must be positive");
    }
    if (stage_channels.empty() || stage_channels.size() != stage_dilations.size()) {
        throw std::invalid_argument("TFNetConfig: stage_channels and stage_dilations must align");
    }
    for (int64_t c : stage_channels) {
        if (c <= 0) throw std::invalid_argument("TFNetConfig: stage channels must be positive");
    }
    for (int64_t d : stage_dilations) {
        if (d <= 0) throw std::invalid_argument("TFNetConfig: dilations must be positive");
    }
    if (aspp_rates.empty()) throw std::invalid_argument("TFNetConfig: need at least one pyramid rate");
    for (int64_t r : aspp_rates) {
        if (r <= 0) throw std::invalid_argument("TFNetConfig: pyramid rates must be positive");
    }
    if (output_stride < 2 || (output_stride & (output_stride - 1)) != 0) {
        throw std::invalid_argument("TFNetConfig: output_stride must be a power of two >= 2");
    }
    // stem contributes 2; each further factor of two needs a striding stage
    int64_t achievable = 2;
    for (size_t i = 0; i < stage_channels.size(); ++i) achievable *= 2;
    if (output_stride > achievable) {
        throw std::invalid_argument("TFNetConfig: output_stride unreachable with " +
                                    std::to_string(stage_channels.size()) + " stages");
    }
}

std::string TFNetConfig::to_json() const {
    json j;
    j["input_channels"] = input_channels;
    j["stem_channels"] = stem_channels;
    j["stage_channels"] = stage_channels;
    j["stage_dilations"] = stage_dilations;
    j["aspp_rates"] = aspp_rates;
    j["decoder_channels"] = decoder_channels;
    j["output_stride"] = output_stride;
    j["desk_scale"] = desk_scale;
    j["edge_decoder"] = edge_decoder;
    return j.dump();
}

TFNetConfig TFNetConfig::from_json(const std::string& text) {
    json j = json::parse(text);
    TFNetConfig c;
    c.input_channels = j.value("input_channels", c.input_channels);
    c.stem_channels = j.value("stem_channels", c.stem_channels);
    c.stage_channels = j.value("stage_channels", c.stage_channels);
    c.stage_dilations = j.value("stage_dilations", c.stage_dilations);
    c.aspp_rates = j.value("aspp_rates", c.aspp_rates);
    c.decoder_channels = j.value("decoder_channels", c.decoder_channels);
    c.output_stride = j.value("output_stride", c.output_stride);
    c.desk_scale = j.value("desk_scale", c.desk_scale);
    c.edge_decoder = j.value("edge_decoder", c.edge_decoder);
    c.validate();
    return c;
}

uint64_t TFNetConfig::hash() const {
    // FNV-1a over the canonical JSON form
    const std::string text = to_json();
    uint64_t h = 1469598103934665603ull;
    for (unsigned char ch : text) {
        h ^= ch;
        h *= 1099511628211ull;
    }
    return h;
}

// ---------------------------------------------------------------------------
// construction

namespace {

DecoderParams build_decoder(const TFNetConfig& cfg, std::mt19937_64& rng) {
    DecoderParams d;
    const int64_t deep_ch = cfg.stage_channels.back();
    const int64_t dc = cfg.decoder_channels;
    const int64_t low_proj_ch = std::max<int64_t>(1, dc / 4);
    for (int64_t rate : cfg.aspp_rates) {
        d.aspp_branches.push_back(ConvSpec::create(deep_ch, dc, 3, 1, rate, rate, rng));
    }
    d.pool_conv = ConvSpec::create(deep_ch, dc, 1, 1, 1, 0, rng);
    d.project = ConvSpec::create(dc * (static_cast<int64_t>(cfg.aspp_rates.size()) + 1), dc, 1, 1, 1, 0, rng);
    d.low_proj = ConvSpec::create(cfg.low_level_channels(), low_proj_ch, 1, 1, 1, 0, rng);
    d.refine = ConvSpec::create(dc + low_proj_ch, dc, 3, 1, 1, 1, rng);
    d.head = ConvSpec::create(dc, 1, 1, 1, 1, 0, rng);
    return d;
}

void collect_conv(std::vector<std::pair<std::string, Tensor>>& out, const std::string& name,
                  const ConvSpec& spec) {
    out.emplace_back(name + ".weight", spec.weight);
    out.emplace_back(name + ".bias", spec.bias);
}

void assign_conv(ConvSpec& spec, const std::string& name,
                 const std::vector<std::pair<std::string, Tensor>>& loaded, size_t& cursor) {
    for (const char* part : {".weight", ".bias"}) {
        const std::string key = name + part;
        if (cursor >= loaded.size() || loaded[cursor].first != key) {
            throw std::runtime_error("checkpoint does not match model layout at '" + key + "'");
        }
        Tensor& dst = std::string(part) == ".weight" ? spec.weight : spec.bias;
        const Tensor& src = loaded[cursor].second;
        if (src.shape() != dst.shape()) {
            throw std::runtime_error("checkpoint tensor '" + key + "' has unexpected shape");
        }
        std::copy(src.data(), src.data() + src.numel(), dst.data());
        ++cursor;
    }
}

}  // namespace

TFNetParams build(const TFNetConfig& config, uint64_t seed) {
    config.validate();
    std::mt19937_64 rng(seed);

    TFNetParams params;
    params.config = config;
    params.stem = ConvSpec::create(config.input_channels, config.stem_channels, 3, 2, 1, 1, rng);

    const auto strides = config.stage_strides();
    int64_t in_ch = config.stem_channels;
    for (size_t i = 0; i < config.stage_channels.size(); ++i) {
        const int64_t out_ch = config.stage_channels[i];
        const int64_t d = config.stage_dilations[i];
        const int64_t s = strides[i];
        ResidualStage stage;
        stage.conv1 = ConvSpec::create(in_ch, out_ch, 3, s, d, d, rng);
        stage.conv2 = ConvSpec::create(out_ch, out_ch, 3, 1, d, d, rng);
        stage.projected = s != 1 || in_ch != out_ch;
        if (stage.projected) {
            stage.shortcut = ConvSpec::create(in_ch, out_ch, 1, s, 1, 0, rng);
        }
        params.stages.push_back(std::move(stage));
        in_ch = out_ch;
    }

    params.decoders.push_back(build_decoder(config, rng));
    if (config.edge_decoder) params.decoders.push_back(build_decoder(config, rng));
    return params;
}

std::vector<std::pair<std::string, Tensor>> TFNetParams::named_parameters() const {
    std::vector<std::pair<std::string, Tensor>> out;
    collect_conv(out, "stem", stem);
    for (size_t i = 0; i < stages.size(); ++i) {
        const std::string base = "stage" + std::to_string(i);
        collect_conv(out, base + ".conv1", stages[i].conv1);
        collect_conv(out, base + ".conv2", stages[i].conv2);
        if (stages[i].projected) collect_conv(out, base + ".shortcut", stages[i].shortcut);
    }
    for (size_t d = 0; d < decoders.size(); ++d) {
        const std::string base = d == 0 ? "decoder.building" : "decoder.edge";
        const DecoderParams& dec = decoders[d];
        for (size_t b = 0; b < dec.aspp_branches.size(); ++b) {
            collect_conv(out, base + ".aspp" + std::to_string(b), dec.aspp_branches[b]);
        }
        collect_conv(out, base + ".pool", dec.pool_conv);
        collect_conv(out, base + ".project", dec.project);
        collect_conv(out, base + ".low_proj", dec.low_proj);
        collect_conv(out, base + ".refine", dec.refine);
        collect_conv(out, base + ".head", dec.head);
    }
    return out;
}

std::vector<Tensor> TFNetParams::parameters() const {
    std::vector<Tensor> out;
    for (auto& [name, tensor] : named_parameters()) out.push_back(tensor);
    return out;
}

int64_t TFNetParams::parameter_count() const {
    int64_t n = 0;
    for (const auto& [name, tensor] : named_parameters()) n += tensor.numel();
    return n;
}

// ---------------------------------------------------------------------------
// forward passes

namespace {

Tensor residual_stage_forward(const ResidualStage& stage, const Tensor& x) {
    Tensor y = nn::relu(nn::conv2d(x, stage.conv1));
    y = nn::conv2d(y, stage.conv2);
    Tensor skip = stage.projected ? nn::conv2d(x, stage.shortcut) : x;
    return nn::relu(nn::add(y, skip));
}

}  // namespace

EncoderFeatures encoder_forward(const TFNetParams& params, const Tensor& x) {
    const TFNetConfig& cfg = params.config;
    if (x.shape().size() != 4 || x.dim(1) != cfg.input_channels) {
        throw std::invalid_argument("encoder_forward: expected (B," + std::to_string(cfg.input_channels) +
                                    ",H,W) input");
    }
    if (x.dim(2) % cfg.output_stride != 0 || x.dim(3) % cfg.output_stride != 0) {
        throw std::invalid_argument("encoder_forward: input extents " + std::to_string(x.dim(2)) + "x" +
                                    std::to_string(x.dim(3)) + " are not divisible by output_stride " +
                                    std::to_string(cfg.output_stride));
    }
    EncoderFeatures feats;
    Tensor y = nn::relu(nn::conv2d(x, params.stem));
    feats.low_level = y;
    for (const ResidualStage& stage : params.stages) {
        y = residual_stage_forward(stage, y);
    }
    feats.deep = y;
    return feats;
}

Tensor aspp_decoder_forward(const DecoderParams& decoder, const TFNetConfig& config,
                            const Tensor& deep, const Tensor& low_level) {
    std::vector<Tensor> branches;
    branches.reserve(decoder.aspp_branches.size() + 1);
    for (const ConvSpec& branch : decoder.aspp_branches) {
        branches.push_back(nn::relu(nn::conv2d(deep, branch)));
    }
    Tensor pooled = nn::relu(nn::conv2d(nn::global_avg_pool(deep), decoder.pool_conv));
    branches.push_back(nn::broadcast_spatial(pooled, deep.dim(2), deep.dim(3)));

    Tensor fused = nn::relu(nn::conv2d(nn::concat_channels(branches), decoder.project));

    // up to the low-level resolution (the stem runs at stride 2), fuse, refine
    const int64_t to_low = config.output_stride / 2;
    if (to_low > 1) fused = nn::bilinear_upsample(fused, to_low);
    Tensor low = nn::relu(nn::conv2d(low_level, decoder.low_proj));
    Tensor refined = nn::relu(nn::conv2d(nn::concat_channels({fused, low}), decoder.refine));

    Tensor logits = nn::conv2d(refined, decoder.head);
    return nn::bilinear_upsample(logits, 2);
}

ForwardResult tfnet_forward(const TFNetParams& params, const Tensor& x) {
    EncoderFeatures feats = encoder_forward(params, x);
    ForwardResult result;
    result.building_logits = aspp_decoder_forward(params.decoders[0], params.config, feats.deep,
                                                  feats.low_level);
    if (params.decoders.size() > 1) {
        result.edge_logits = aspp_decoder_forward(params.decoders[1], params.config, feats.deep,
                                                  feats.low_level);
    }
    return result;
}

// ---------------------------------------------------------------------------
// checkpoints

void save_checkpoint(const TFNetParams& params, const std::string& base_path) {
    json extra;
    extra["model_config"] = json::parse(params.config.to_json());
    std::ostringstream hash_hex;
    hash_hex << std::hex << params.config.hash();
    extra["config_hash"] = hash_hex.str();
    nn::save_tensors(params.named_parameters(), base_path, extra.dump());
}

TFNetParams load_checkpoint(const std::string& base_path, const TFNetConfig& expected) {
    nn::LoadedCheckpoint loaded = nn::load_tensors(base_path);
    if (loaded.extra_json.empty()) {
        throw std::runtime_error("load_checkpoint: manifest carries no model config");
    }
    json extra = json::parse(loaded.extra_json);
    std::ostringstream hash_hex;
    hash_hex << std::hex << expected.hash();
    if (extra.value("config_hash", "") != hash_hex.str()) {
        throw std::runtime_error("load_checkpoint: config hash mismatch; checkpoint was written for a "
                                 "different model configuration");
    }

    TFNetParams params = build(expected, /*seed=*/0);
    size_t cursor = 0;
    assign_conv(params.stem, "stem", loaded.tensors, cursor);
    for (size_t i = 0; i < params.stages.size(); ++i) {
        const std::string base = "stage" + std::to_string(i);
        assign_conv(params.stages[i].conv1, base + ".conv1", loaded.tensors, cursor);
        assign_conv(params.stages[i].conv2, base + ".conv2", loaded.tensors, cursor);
        if (params.stages[i].projected) assign_conv(params.stages[i].shortcut, base + ".shortcut", loaded.tensors, cursor);
    }
    for (size_t d = 0; d < params.decoders.size(); ++d) {
        const std::string base = d == 0 ? "decoder.building" : "decoder.edge";
        DecoderParams& dec = params.decoders[d];
        for (size_t b = 0; b < dec.aspp_branches.size(); ++b) {
            assign_conv(dec.aspp_branches[b], base + ".aspp" + std::to_string(b), loaded.tensors, cursor);
        }
        assign_conv(dec.pool_conv, base + ".pool", loaded.tensors, cursor);
        assign_conv(dec.project, base + ".project", loaded.tensors, cursor);
        assign_conv(dec.low_proj, base + ".low_proj", loaded.tensors, cursor);
        assign_conv(dec.refine, base + ".refine", loaded.tensors, cursor);
        assign_conv(dec.head, base + ".head", loaded.tensors, cursor);
    }
    if (cursor != loaded.tensors.size()) {
        throw std::runtime_error("load_checkpoint: checkpoint carries extra tensors");
    }
    return params;
}

}  // namespace bfe::tfnet
