#pragma once

#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "lanedet/network.hpp"

namespace lanedet {

// Checkpoint layout, all little-endian:
//   "LDCK" | u32 version | u64 manifest length | manifest JSON | tensor blobs
// The manifest carries the architecture config and the ordered parameter
// names; blobs follow in exactly that order using the tensor serialization.
inline constexpr char kCheckpointMagic[4] = {'L', 'D', 'C', 'K'};
inline constexpr uint32_t kCheckpointVersion = 1;

inline nlohmann::json roi_to_json(const RoiBounds& r) {
    return nlohmann::json{{"x1", r.x1}, {"x2", r.x2}, {"y1", r.y1}, {"y2", r.y2}};
}

inline RoiBounds roi_from_json(const nlohmann::json& j) {
    RoiBounds r;
    r.x1 = j.at("x1").get<double>();
    r.x2 = j.at("x2").get<double>();
    r.y1 = j.at("y1").get<double>();
    r.y2 = j.at("y2").get<double>();
    return r;
}

inline nlohmann::json config_to_json(const EncoderConfig& c) {
    return nlohmann::json{{"stage_channels", c.stage_channels},
                          {"blocks_per_stage", c.blocks_per_stage},
                          {"temporal_depth", c.temporal_depth},
                          {"input_h", c.input_h},
                          {"input_w", c.input_w},
                          {"factorized", c.factorized},
                          {"variant", variant_name(c.variant)},
                          {"attention_enabled", c.attention_enabled},
                          {"fpn_enabled", c.fpn_enabled},
                          {"roi", roi_to_json(c.roi)},
                          {"fpn_width", c.fpn_width},
                          {"decoder_width", c.decoder_width},
                          {"embed_dim", c.embed_dim},
                          {"d_k", c.d_k},
                          {"dropout_p", c.dropout_p},
                          {"attention_max_positions", c.attention_max_positions}};
}

inline EncoderConfig config_from_json(const nlohmann::json& j) {
    EncoderConfig c;
    const auto sc = j.at("stage_channels").get<std::vector<int>>();
    require(sc.size() == 4, "config: stage_channels must list four widths");
    for (size_t i = 0; i < 4; ++i) c.stage_channels[i] = sc[i];
    c.blocks_per_stage = j.at("blocks_per_stage").get<int>();
    c.temporal_depth = j.at("temporal_depth").get<int>();
    c.input_h = j.at("input_h").get<int>();
    c.input_w = j.at("input_w").get<int>();
    c.factorized = j.at("factorized").get<bool>();
    const std::string v = j.at("variant").get<std::string>();
    require(v == "network1" || v == "network2", "config: unknown variant '" + v + "'");
    c.variant = v == "network1" ? Variant::network1 : Variant::network2;
    c.attention_enabled = j.at("attention_enabled").get<bool>();
    c.fpn_enabled = j.at("fpn_enabled").get<bool>();
    c.roi = roi_from_json(j.at("roi"));
    c.fpn_width = j.at("fpn_width").get<int>();
    c.decoder_width = j.at("decoder_width").get<int>();
    c.embed_dim = j.at("embed_dim").get<int>();
    c.d_k = j.at("d_k").get<int>();
    c.dropout_p = j.at("dropout_p").get<float>();
    c.attention_max_positions = j.at("attention_max_positions").get<int64_t>();
    validate_config(c);
    return c;
}

// Field-by-field description of how two configs differ; empty means equal.
inline std::vector<std::string> config_diff(const EncoderConfig& a, const EncoderConfig& b) {
    const nlohmann::json ja = config_to_json(a), jb = config_to_json(b);
    std::vector<std::string> out;
    for (auto it = ja.begin(); it != ja.end(); ++it) {
        const auto& other = jb.at(it.key());
        if (*it != other) out.push_back(it.key() + ": " + it->dump() + " vs " + other.dump());
    }
    return out;
}

template <class Real>
void save_checkpoint(const std::string& path, ModelT<Real>& model) {
    auto params = model_params(model);
    nlohmann::json manifest;
    manifest["config"] = config_to_json(model.cfg);
    std::vector<std::string> names;
    names.reserve(params.size());
    for (const auto& p : params) names.push_back(p.name);
    manifest["params"] = names;
    const std::string mtext = manifest.dump();

    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("checkpoint: cannot open '" + path + "' for writing");
    os.write(kCheckpointMagic, 4);
    write_le_u32(os, kCheckpointVersion);
    write_le_u64(os, static_cast<uint64_t>(mtext.size()));
    os.write(mtext.data(), static_cast<std::streamsize>(mtext.size()));
    for (const auto& p : params) write_tensor(os, *p.tensor);
    if (!os) throw std::runtime_error("checkpoint: write to '" + path + "' failed");
}

struct LoadedCheckpoint {
    EncoderConfig config;
    std::vector<std::string> names;
    std::vector<Tensor> tensors;  // same order as names
};

inline LoadedCheckpoint load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("checkpoint: cannot open '" + path + "'");
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kCheckpointMagic, 4) != 0)
        throw std::runtime_error("checkpoint: '" + path + "' is not a checkpoint file");
    const uint32_t version = read_le_u32(is);
    if (version != kCheckpointVersion)
        throw std::runtime_error(str_printf("checkpoint: unsupported version %u", version));
    const uint64_t mlen = read_le_u64(is);
    std::string mtext(mlen, '\0');
    is.read(mtext.data(), static_cast<std::streamsize>(mlen));
    if (!is) throw std::runtime_error("checkpoint: manifest truncated");
    nlohmann::json manifest = nlohmann::json::parse(mtext);
    LoadedCheckpoint out;
    out.config = config_from_json(manifest.at("config"));
    out.names = manifest.at("params").get<std::vector<std::string>>();
    out.tensors.reserve(out.names.size());
    for (size_t i = 0; i < out.names.size(); ++i) out.tensors.push_back(read_tensor(is));
    return out;
}

// Rebuilds a model from a loaded checkpoint. The parameter list produced by
// the config must match the manifest name-for-name.
template <class Real = float>
ModelT<Real> model_from_checkpoint(const LoadedCheckpoint& ck) {
    ModelT<Real> m = make_model<Real>(ck.config, /*seed=*/0);
    auto params = model_params(m);
    require(params.size() == ck.names.size(),
            str_printf("checkpoint: parameter count mismatch (model %zu, file %zu)", params.size(), ck.names.size()));
    for (size_t i = 0; i < params.size(); ++i) {
        require(params[i].name == ck.names[i],
                "checkpoint: parameter order mismatch at '" + params[i].name + "' vs '" + ck.names[i] + "'");
        require(params[i].tensor->shape == ck.tensors[i].shape,
                "checkpoint: shape mismatch for '" + params[i].name + "': model " +
                    params[i].tensor->shape.to_string() + " vs file " + ck.tensors[i].shape.to_string());
        if constexpr (std::is_same_v<Real, float>) {
            *params[i].tensor = ck.tensors[i];
        } else {
            *params[i].tensor = ck.tensors[i].template cast<Real>();
        }
    }
    return m;
}

}  // namespace lanedet
