#pragma once

#include <string>
#include <utility>
#include <vector>

#include "bfe/tensor.hpp"

// Weight checkpoint: `<base>.json` manifest (names, shapes, byte offsets)
// plus `<base>.bin`, a flat little-endian float64 blob. Round trips are
// bit-exact.

namespace bfe::nn {

using NamedTensors = std::vector<std::pair<std::string, Tensor>>;

/// Extra manifest fields (e.g. a model config) may be attached as a
/// serialized JSON object; pass "" for none.
void save_tensors(const NamedTensors& tensors, const std::string& base_path,
                  const std::string& extra_json = "");

struct LoadedCheckpoint {
    NamedTensors tensors;
    std::string extra_json;  // "" when the manifest carries none
};

LoadedCheckpoint load_tensors(const std::string& base_path);

}  // namespace bfe::nn
