#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "smile/model.hpp"

namespace smile {

struct BagDataset {
    std::vector<FeatureBag> bags;
    std::size_t feature_dim = 0;
    /// "synthetic" or "external".
    std::string provenance = "external";

    /// Shared feature dimension, unique ids, valid bags.
    void validate() const;
    std::size_t count_label(int label) const;
};

/// Planted-witness benchmark. Negative bags draw every instance from N(0, I);
/// positive bags replace ceil(witness_rate * n) (at least one) instances with
/// draws shifted by `separation` noise units on every coordinate, with one
/// random sign per coordinate fixed for the whole dataset.
struct SynthConfig {
    std::size_t n_bags = 500;
    double pos_fraction = 0.5;
    std::size_t min_size = 20;
    std::size_t max_size = 60;
    std::size_t feature_dim = 64;
    double witness_rate = 0.05;
    double separation = 2.0;
    std::uint64_t seed = 7;

    void validate() const;
};

/// Number of witness instances planted in a positive bag of `bag_size`.
std::size_t witness_count(std::size_t bag_size, double witness_rate);

BagDataset synth_generate(const SynthConfig& cfg);

/// MILB container: "MILB", u32 version 1, u32 feature dim, u32 bag count, then
/// per bag u16 id length, id bytes, u8 label, u32 instance count and the
/// features as float32; trailing CRC32 of everything before it. Features are
/// narrowed to 32 bits.
std::vector<std::uint8_t> encode_dataset(const BagDataset& dataset);
BagDataset decode_dataset(std::span<const std::uint8_t> bytes);

/// Writes the container and a ".json" sidecar with provenance and class counts.
void save_dataset(const BagDataset& dataset, const std::filesystem::path& path);
/// Reads the container; provenance comes from the sidecar when present.
BagDataset load_dataset(const std::filesystem::path& path);

std::filesystem::path sidecar_path(const std::filesystem::path& dataset_path);

/// Imports a directory holding `manifest.json`:
///   {"feature_dim": l, "bags": [{"id": "...", "file": "x.f32", "label": 0|1}, ...]}
/// where each file is a row-major little-endian float32 matrix with l columns.
BagDataset import_feature_directory(const std::filesystem::path& dir);

}  // namespace smile
