#pragma once

#include <filesystem>
#include <vector>

#include "nlohmann/json.hpp"

#include "memos/nn/ops.hpp"

namespace memos {

// A checkpoint directory holds `weights.bin` (little-endian blob: magic
// "MEMOSWT1", u32 param count, then per param u32 name length, name bytes,
// u32 ndim, u32 dims, f32 values) and `meta.json` with the training config,
// seed, epochs and dataset/config hashes.

void save_weights(const std::filesystem::path& file, const std::vector<nn::Param>& params);

// Strict load: the file must contain exactly the given params, in order,
// with matching names and shapes. Throws LoadError otherwise.
void load_weights(const std::filesystem::path& file, const std::vector<nn::Param>& params);

void save_checkpoint(const std::filesystem::path& dir, const std::vector<nn::Param>& params,
                     const nlohmann::json& meta);
nlohmann::json load_checkpoint_meta(const std::filesystem::path& dir);
void load_checkpoint_weights(const std::filesystem::path& dir, const std::vector<nn::Param>& params);
bool checkpoint_exists(const std::filesystem::path& dir);

}  // namespace memos
