#include "smile/data.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <unordered_set>

#include <json.hpp>

#include "smile/binary_io.hpp"
#include "smile/errors.hpp"

namespace smile {

namespace {

constexpr char kMagic[4] = {'M', 'I', 'L', 'B'};
constexpr std::uint32_t kVersion = 1;

}  // namespace

void BagDataset::validate() const
{
    std::unordered_set<std::string> seen;
    for (const FeatureBag& bag : bags) {
        bag.validate();
        if (bag.feature_dim() != feature_dim) {
            throw ConfigError("bag '" + bag.id + "' has feature dimension " + std::to_string(bag.feature_dim())
                              + ", dataset uses " + std::to_string(feature_dim));
        }
        if (!seen.insert(bag.id).second) {
            throw ConfigError("duplicate bag id '" + bag.id + "'");
        }
    }
}

std::size_t BagDataset::count_label(int label) const
{
    return static_cast<std::size_t>(
        std::count_if(bags.begin(), bags.end(), [&](const FeatureBag& b) { return b.label == label; }));
}

void SynthConfig::validate() const
{
    if (n_bags == 0) {
        throw ConfigError("synth: bag count must be at least 1");
    }
    if (!(pos_fraction > 0.0 && pos_fraction < 1.0)) {
        throw ConfigError("synth: positive fraction must lie in (0, 1)");
    }
    if (min_size == 0 || max_size < min_size) {
        throw ConfigError("synth: bag size range must satisfy 1 <= min <= max");
    }
    if (feature_dim == 0) {
        throw ConfigError("synth: feature dimension must be positive");
    }
    if (!(witness_rate > 0.0 && witness_rate <= 1.0)) {
        throw ConfigError("synth: witness rate must lie in (0, 1]");
    }
    if (!std::isfinite(separation)) {
        throw ConfigError("synth: separation must be finite");
    }
}

std::size_t witness_count(std::size_t bag_size, double witness_rate)
{
    // The small slack keeps products such as 0.05 * 20 from rounding up to 2.
    const double raw = std::ceil(witness_rate * static_cast<double>(bag_size) - 1e-9);
    return std::clamp<std::size_t>(static_cast<std::size_t>(std::max(raw, 1.0)), 1, bag_size);
}

BagDataset synth_generate(const SynthConfig& cfg)
{
    cfg.validate();
    std::mt19937_64 rng(cfg.seed);
    std::normal_distribution<double> noise(0.0, 1.0);
    std::uniform_int_distribution<std::size_t> size_dist(cfg.min_size, cfg.max_size);
    std::bernoulli_distribution coin(0.5);

    std::vector<double> shift(cfg.feature_dim);
    for (double& s : shift) {
        s = coin(rng) ? cfg.separation : -cfg.separation;
    }

    const auto positives = static_cast<std::size_t>(std::llround(cfg.pos_fraction * static_cast<double>(cfg.n_bags)));
    std::vector<int> labels(cfg.n_bags, 0);
    std::fill(labels.begin(), labels.begin() + static_cast<std::ptrdiff_t>(std::min(positives, cfg.n_bags)), 1);
    std::shuffle(labels.begin(), labels.end(), rng);

    BagDataset out;
    out.feature_dim = cfg.feature_dim;
    out.provenance = "synthetic";
    out.bags.reserve(cfg.n_bags);
    const std::size_t width = std::max<std::size_t>(4, std::to_string(cfg.n_bags - 1).size());
    for (std::size_t b = 0; b < cfg.n_bags; ++b) {
        FeatureBag bag;
        const std::string digits = std::to_string(b);
        bag.id = "bag_" + std::string(width - digits.size(), '0') + digits;
        bag.label = labels[b];
        const std::size_t n = size_dist(rng);
        bag.features = DenseMatrix(n, cfg.feature_dim);
        for (double& v : bag.features.values()) {
            v = static_cast<float>(noise(rng));
        }
        bag.instance_labels.assign(n, 0);
        if (bag.label == 1) {
            std::vector<std::size_t> slots(n);
            std::iota(slots.begin(), slots.end(), 0);
            std::shuffle(slots.begin(), slots.end(), rng);
            slots.resize(witness_count(n, cfg.witness_rate));
            for (std::size_t i : slots) {
                bag.instance_labels[i] = 1;
                auto row = bag.features.row(i);
                for (std::size_t c = 0; c < cfg.feature_dim; ++c) {
                    row[c] = static_cast<float>(noise(rng) + shift[c]);
                }
            }
        }
        out.bags.push_back(std::move(bag));
    }
    return out;
}

std::vector<std::uint8_t> encode_dataset(const BagDataset& dataset)
{
    dataset.validate();
    if (dataset.bags.size() > std::numeric_limits<std::uint32_t>::max()
        || dataset.feature_dim > std::numeric_limits<std::uint32_t>::max()) {
        throw ConfigError("dataset too large for the MILB container");
    }
    ByteWriter w;
    w.text(std::string_view(kMagic, 4));
    w.u32(kVersion);
    w.u32(static_cast<std::uint32_t>(dataset.feature_dim));
    w.u32(static_cast<std::uint32_t>(dataset.bags.size()));
    for (const FeatureBag& bag : dataset.bags) {
        if (bag.id.size() > std::numeric_limits<std::uint16_t>::max()) {
            throw ConfigError("bag id longer than 65535 bytes");
        }
        w.u16(static_cast<std::uint16_t>(bag.id.size()));
        w.text(bag.id);
        w.u8(static_cast<std::uint8_t>(bag.label));
        w.u32(static_cast<std::uint32_t>(bag.instance_count()));
        for (double v : bag.features.values()) {
            w.f32(static_cast<float>(v));
        }
    }
    w.seal();
    return w.release();
}

BagDataset decode_dataset(std::span<const std::uint8_t> bytes)
{
    if (bytes.size() >= 4 && !std::equal(kMagic, kMagic + 4, bytes.begin())) {
        throw FormatError(FormatErrorKind::bad_magic, "not a MILB file (bad magic bytes)");
    }
    ByteReader r(bytes);
    r.text(4);
    const std::uint32_t version = r.u32();
    if (version != kVersion) {
        throw FormatError(FormatErrorKind::unsupported_version, "unsupported MILB version " + std::to_string(version));
    }
    BagDataset out;
    out.feature_dim = r.u32();
    const std::uint32_t count = r.u32();
    for (std::uint32_t b = 0; b < count; ++b) {
        FeatureBag bag;
        bag.id = r.text(r.u16());
        const std::uint8_t label = r.u8();
        if (label > 1) {
            throw FormatError(FormatErrorKind::malformed, "bag '" + bag.id + "' has label byte " + std::to_string(label));
        }
        bag.label = label;
        const std::uint32_t n = r.u32();
        if (static_cast<std::uint64_t>(n) * out.feature_dim * 4 > r.remaining()) {
            throw FormatError(FormatErrorKind::truncated, "bag '" + bag.id + "' extends past the end of the file");
        }
        bag.features = DenseMatrix(n, out.feature_dim);
        for (double& v : bag.features.values()) {
            v = r.f32();
        }
        out.bags.push_back(std::move(bag));
    }
    r.finish();
    try {
        out.validate();
    } catch (const ConfigError& e) {
        throw FormatError(FormatErrorKind::malformed, e.what());
    }
    return out;
}

std::filesystem::path sidecar_path(const std::filesystem::path& dataset_path)
{
    auto p = dataset_path;
    return p.replace_extension(".json");
}

void save_dataset(const BagDataset& dataset, const std::filesystem::path& path)
{
    write_file_bytes(path, encode_dataset(dataset));
    const nlohmann::json sidecar = {
        {"provenance", dataset.provenance},
        {"feature_dim", dataset.feature_dim},
        {"bag_count", dataset.bags.size()},
        {"positive_bags", dataset.count_label(1)},
        {"negative_bags", dataset.count_label(0)},
    };
    std::ofstream out(sidecar_path(path));
    out << sidecar.dump(2) << '\n';
}

BagDataset load_dataset(const std::filesystem::path& path)
{
    BagDataset out = decode_dataset(read_file_bytes(path));
    const auto side = sidecar_path(path);
    if (std::filesystem::exists(side)) {
        std::ifstream in(side);
        const auto j = nlohmann::json::parse(in, nullptr, false);
        if (j.is_object() && j.contains("provenance") && j["provenance"].is_string()) {
            out.provenance = j["provenance"].get<std::string>();
        }
    }
    return out;
}

BagDataset import_feature_directory(const std::filesystem::path& dir)
{
    const auto manifest_path = dir / "manifest.json";
    std::ifstream in(manifest_path);
    if (!in) {
        throw Error("cannot open '" + manifest_path.string() + "'");
    }
    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(FormatErrorKind::malformed, "manifest: " + std::string(e.what()));
    }

    BagDataset out;
    out.provenance = "external";
    try {
        out.feature_dim = manifest.at("feature_dim").get<std::size_t>();
        if (out.feature_dim == 0) {
            throw FormatError(FormatErrorKind::malformed, "manifest: feature_dim must be positive");
        }
        for (const auto& entry : manifest.at("bags")) {
            FeatureBag bag;
            bag.id = entry.at("id").get<std::string>();
            bag.label = entry.at("label").get<int>();
            const auto raw = read_file_bytes(dir / entry.at("file").get<std::string>());
            const std::size_t row_bytes = 4 * out.feature_dim;
            if (raw.empty() || raw.size() % row_bytes != 0) {
                throw FormatError(FormatErrorKind::malformed, "bag '" + bag.id + "': " + std::to_string(raw.size())
                                                                  + " bytes is not a whole number of "
                                                                  + std::to_string(out.feature_dim) + "-wide rows");
            }
            bag.features = DenseMatrix(raw.size() / row_bytes, out.feature_dim);
            for (std::size_t i = 0; i < bag.features.size(); ++i) {
                std::uint32_t bits = 0;
                for (int k = 3; k >= 0; --k) {
                    bits = (bits << 8) | raw[4 * i + static_cast<std::size_t>(k)];
                }
                bag.features[i] = std::bit_cast<float>(bits);
            }
            out.bags.push_back(std::move(bag));
        }
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(FormatErrorKind::malformed, "manifest: " + std::string(e.what()));
    }
    out.validate();
    return out;
}

}  // namespace smile
