#include "smile/checkpoint.hpp"

#include <algorithm>
#include <limits>

#include "smile/binary_io.hpp"
#include "smile/errors.hpp"

namespace smile {

namespace {

constexpr char kMagic[4] = {'M', 'I', 'L', 'C'};
constexpr std::uint32_t kVersion = 1;

struct NamedTensor {
    const char* name;
    DenseMatrix SmileParams::*member;
};

// Serialization order; the running statistics travel with the trainable tensors.
constexpr NamedTensor kTensors[] = {
    {"bn_gamma", &SmileParams::bn_gamma},
    {"bn_beta", &SmileParams::bn_beta},
    {"bn_running_mean", &SmileParams::bn_running_mean},
    {"bn_running_var", &SmileParams::bn_running_var},
    {"adapter_weight", &SmileParams::adapter_weight},
    {"adapter_bias", &SmileParams::adapter_bias},
    {"attn_v", &SmileParams::attn_v},
    {"attn_u", &SmileParams::attn_u},
    {"attn_w", &SmileParams::attn_w},
    {"clf_weight", &SmileParams::clf_weight},
    {"clf_bias", &SmileParams::clf_bias},
};

}  // namespace

nlohmann::json to_json(const TrainConfig& cfg)
{
    return {
        {"learning_rate", cfg.learning_rate},
        {"weight_decay", cfg.weight_decay},
        {"epochs", cfg.epochs},
        {"batch_size", cfg.batch_size},
        {"folds", cfg.folds},
        {"seed", cfg.seed},
        {"optimizer", to_string(cfg.optimizer)},
        {"threshold", cfg.scale.threshold},
        {"factor", cfg.scale.factor},
        {"model", to_string(cfg.model)},
        {"hidden_dim", cfg.hidden_dim},
        {"attn_dim", cfg.attn_dim},
        {"averaging", to_string(cfg.averaging)},
    };
}

TrainConfig train_config_from_json(const nlohmann::json& j)
{
    TrainConfig cfg;
    cfg.learning_rate = j.at("learning_rate").get<double>();
    cfg.weight_decay = j.at("weight_decay").get<double>();
    cfg.epochs = j.at("epochs").get<std::size_t>();
    cfg.batch_size = j.at("batch_size").get<std::size_t>();
    cfg.folds = j.at("folds").get<std::size_t>();
    cfg.seed = j.at("seed").get<std::uint64_t>();
    cfg.optimizer = parse_optimizer_kind(j.at("optimizer").get<std::string>());
    cfg.scale.threshold = j.at("threshold").get<double>();
    cfg.scale.factor = j.at("factor").get<double>();
    cfg.model = parse_model_kind(j.at("model").get<std::string>());
    cfg.hidden_dim = j.at("hidden_dim").get<std::size_t>();
    cfg.attn_dim = j.at("attn_dim").get<std::size_t>();
    cfg.averaging = parse_averaging(j.at("averaging").get<std::string>());
    return cfg;
}

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt)
{
    ckpt.params.validate();
    nlohmann::json tensors = nlohmann::json::array();
    for (const NamedTensor& t : kTensors) {
        const DenseMatrix& m = ckpt.params.*t.member;
        tensors.push_back({{"name", t.name}, {"rows", m.rows()}, {"cols", m.cols()}});
    }
    const nlohmann::json header = {
        {"format", "smile-checkpoint"},
        {"tensors", std::move(tensors)},
        {"feature_dim", ckpt.params.bn_gamma.cols()},
        {"hyperparameters", to_json(ckpt.config)},
        {"fold_index", ckpt.fold_index},
        {"best_epoch", ckpt.best_epoch},
        {"best_metrics", to_json(ckpt.best_metrics)},
        {"val_ids", ckpt.val_ids},
    };
    const std::string text = header.dump();
    if (text.size() > std::numeric_limits<std::uint32_t>::max()) {
        throw ConfigError("checkpoint header too large");
    }

    ByteWriter w;
    w.text(std::string_view(kMagic, 4));
    w.u32(kVersion);
    w.u32(static_cast<std::uint32_t>(text.size()));
    w.text(text);
    for (const NamedTensor& t : kTensors) {
        for (double v : (ckpt.params.*t.member).values()) {
            w.f64(v);
        }
    }
    w.seal();
    return w.release();
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes)
{
    if (bytes.size() >= 4 && !std::equal(kMagic, kMagic + 4, bytes.begin())) {
        throw FormatError(FormatErrorKind::bad_magic, "not a checkpoint file (bad magic bytes)");
    }
    ByteReader r(bytes);
    r.text(4);
    const std::uint32_t version = r.u32();
    if (version != kVersion) {
        throw FormatError(FormatErrorKind::unsupported_version,
                          "unsupported checkpoint version " + std::to_string(version));
    }
    const std::uint32_t header_len = r.u32();
    if (header_len > r.remaining()) {
        throw FormatError(FormatErrorKind::truncated, "checkpoint header extends past the end of the file");
    }
    Checkpoint out;
    try {
        const auto header = nlohmann::json::parse(r.text(header_len));
        const auto& tensors = header.at("tensors");
        if (tensors.size() != std::size(kTensors)) {
            throw FormatError(FormatErrorKind::malformed, "checkpoint lists an unexpected number of tensors");
        }
        for (std::size_t i = 0; i < std::size(kTensors); ++i) {
            const auto& entry = tensors[i];
            if (entry.at("name").get<std::string>() != kTensors[i].name) {
                throw FormatError(FormatErrorKind::malformed,
                                  "checkpoint tensor " + std::to_string(i) + " should be " + kTensors[i].name);
            }
            const auto rows = entry.at("rows").get<std::size_t>();
            const auto cols = entry.at("cols").get<std::size_t>();
            if (rows * cols * 8 > r.remaining()) {
                throw FormatError(FormatErrorKind::truncated, std::string("tensor ") + kTensors[i].name
                                                                  + " extends past the end of the file");
            }
            DenseMatrix m(rows, cols);
            for (double& v : m.values()) {
                v = r.f64();
            }
            out.params.*kTensors[i].member = std::move(m);
        }
        out.config = train_config_from_json(header.at("hyperparameters"));
        out.fold_index = header.at("fold_index").get<std::size_t>();
        out.best_epoch = header.at("best_epoch").get<std::size_t>();
        out.best_metrics = report_from_json(header.at("best_metrics"));
        out.val_ids = header.at("val_ids").get<std::vector<std::string>>();
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(FormatErrorKind::malformed, std::string("checkpoint header: ") + e.what());
    }
    r.finish();
    try {
        out.params.validate();
    } catch (const Error& e) {
        throw FormatError(FormatErrorKind::malformed, std::string("checkpoint tensors: ") + e.what());
    }
    return out;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path)
{
    write_file_bytes(path, encode_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path)
{
    return decode_checkpoint(read_file_bytes(path));
}

}  // namespace smile
