#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "smile/metrics.hpp"
#include "smile/model.hpp"
#include "smile/training.hpp"

namespace smile {

/// A fold's selected parameters plus what is needed to reproduce its
/// validation numbers.
struct Checkpoint {
    SmileParams params;
    TrainConfig config;
    std::size_t fold_index = 0;
    std::size_t best_epoch = 0;
    MetricsReport best_metrics;
    std::vector<std::string> val_ids;
};

nlohmann::json to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const nlohmann::json& j);

/// Same framing as the MILB dataset container (magic, u32 version, little
/// endian, trailing CRC32), with magic "MILC": u32 header length, a UTF-8 JSON
/// header naming each tensor and its shape together with the hyperparameters
/// and fold metadata, then the tensors as float64 in header order.
std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace smile
