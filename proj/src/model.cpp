// Copyright 2026 The NeuroMamba Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "nm/model.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

namespace nm {

static_assert(std::endian::native == std::endian::little,
              "checkpoint blobs are little endian");

namespace {

constexpr char kMagic[4] = {'N', 'M', 'C', 'K'};
constexpr std::uint32_t kCheckpointVersion = 1;

using nlohmann::json;

std::string mode_name(ModelMode mode) {
    return mode == ModelMode::bce ? "bce" : "regression";
}

ModelMode mode_from_name(const std::string& name, const std::string& origin) {
    if (name == "regression") return ModelMode::regression;
    if (name == "bce") return ModelMode::bce;
    throw data_error("format", origin + ": unknown mode '" + name + "'");
}

json config_to_json(const ModelConfig& cfg) {
    return json{{"model_dim", cfg.model_dim},
                {"n_layers", cfg.n_layers},
                {"state_size", cfg.block.state_size},
                {"expand", cfg.block.expand},
                {"conv_width", cfg.block.conv_width},
                {"delta_rank", cfg.block.delta_rank},
                {"mode", mode_name(cfg.mode)}};
}

ModelConfig config_from_json(const json& j, const std::string& origin) {
    ModelConfig cfg;
    try {
        cfg.model_dim = j.value("model_dim", 0);
        cfg.n_layers = j.value("n_layers", 2);
        cfg.block.state_size = j.value("state_size", 16);
        cfg.block.expand = j.value("expand", 2);
        cfg.block.conv_width = j.value("conv_width", 4);
        cfg.block.delta_rank = j.value("delta_rank", 0);
        cfg.mode = mode_from_name(j.value("mode", "regression"), origin);
    } catch (const json::exception& e) {
        throw data_error("format", origin + ": " + e.what());
    }
    cfg.block.model_dim = cfg.model_dim;
    return cfg;
}

struct TensorView {
    std::string name;
    float* data = nullptr;       // set when saving/loading f32
    double* data64 = nullptr;    // set when loading/saving f64
    Eigen::Index rows = 0, cols = 0;
    Eigen::Index count() const { return rows * cols; }
};

template <class S>
std::vector<TensorView> enumerate(NeuroMambaModel<S>& m) {
    std::vector<TensorView> views;
    m.visit([&](const std::string& name, S* data, Eigen::Index r, Eigen::Index c) {
        TensorView v;
        v.name = name;
        if constexpr (std::is_same_v<S, float>) v.data = data;
        else v.data64 = data;
        v.rows = r;
        v.cols = c;
        views.push_back(v);
    });
    return views;
}

template <class S>
void save_checkpoint_impl(const std::string& path, NeuroMambaModel<S>& model) {
    auto views = enumerate(model);

    json tensors = json::array();
    Eigen::Index offset = 0;
    for (const auto& v : views) {
        tensors.push_back(
            {{"name", v.name}, {"shape", {v.rows, v.cols}}, {"offset", offset}});
        offset += v.count();
    }
    const json manifest{{"version", kCheckpointVersion},
                        {"trained", model.trained},
                        {"config", config_to_json(model.config)},
                        {"tensors", tensors}};
    const std::string mtext = manifest.dump();

    std::ofstream out(path, std::ios::binary);
    if (!out) throw data_error("load", "cannot open checkpoint for writing: " + path);
    out.write(kMagic, 4);
    const std::uint32_t mlen = static_cast<std::uint32_t>(mtext.size());
    out.write(reinterpret_cast<const char*>(&mlen), 4);
    out.write(mtext.data(), static_cast<std::streamsize>(mtext.size()));
    std::vector<float> buf;
    for (const auto& v : views) {
        buf.resize(static_cast<std::size_t>(v.count()));
        for (Eigen::Index i = 0; i < v.count(); ++i)
            buf[static_cast<std::size_t>(i)] =
                v.data ? v.data[i] : static_cast<float>(v.data64[i]);
        out.write(reinterpret_cast<const char*>(buf.data()),
                  static_cast<std::streamsize>(buf.size() * sizeof(float)));
    }
    if (!out) throw data_error("load", "short write while saving checkpoint: " + path);
}

template <class S>
NeuroMambaModel<S> load_checkpoint_impl(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw data_error("load", "cannot open checkpoint: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    const std::string bytes = ss.str();

    if (bytes.size() < 8 || std::memcmp(bytes.data(), kMagic, 4) != 0)
        throw data_error("format", "not a checkpoint file: " + path);
    std::uint32_t mlen = 0;
    std::memcpy(&mlen, bytes.data() + 4, 4);
    if (bytes.size() < 8 + static_cast<std::size_t>(mlen))
        throw data_error("truncation", "checkpoint manifest truncated: " + path);

    json manifest;
    try {
        manifest = json::parse(bytes.substr(8, mlen));
    } catch (const json::exception& e) {
        throw data_error("format",
                         "checkpoint manifest is not valid JSON: " + std::string(e.what()));
    }

    const std::uint32_t version = manifest.value("version", 0u);
    if (version != kCheckpointVersion)
        throw data_error("version", "checkpoint version " + std::to_string(version) +
                                        ", this build reads version " +
                                        std::to_string(kCheckpointVersion));

    if (!manifest.contains("config"))
        throw data_error("format", "checkpoint manifest has no config");
    const ModelConfig cfg = config_from_json(manifest["config"], "checkpoint " + path);
    auto model = NeuroMambaModel<S>::allocate(cfg);
    model.trained = manifest.value("trained", false);

    const char* blob = bytes.data() + 8 + mlen;
    const std::size_t blob_floats = (bytes.size() - 8 - mlen) / sizeof(float);

    std::unordered_map<std::string, const json*> by_name;
    if (!manifest.contains("tensors") || !manifest["tensors"].is_array())
        throw data_error("format", "checkpoint manifest has no tensor table");
    for (const auto& t : manifest["tensors"]) by_name[t.value("name", "")] = &t;

    auto views = enumerate(model);
    for (auto& v : views) {
        auto it = by_name.find(v.name);
        if (it == by_name.end())
            throw data_error("shape", "checkpoint is missing tensor " + v.name);
        const json& t = *it->second;
        const auto shape = t.value("shape", std::vector<Eigen::Index>{});
        if (shape.size() != 2 || shape[0] != v.rows || shape[1] != v.cols) {
            std::string got = "[";
            for (std::size_t i = 0; i < shape.size(); ++i)
                got += (i ? "," : "") + std::to_string(shape[i]);
            got += "]";
            throw data_error("shape", "tensor " + v.name + " has shape " + got +
                                          ", expected [" + std::to_string(v.rows) + "," +
                                          std::to_string(v.cols) + "]");
        }
        const Eigen::Index offset = t.value("offset", Eigen::Index{-1});
        if (offset < 0 ||
            static_cast<std::size_t>(offset + v.count()) > blob_floats)
            throw data_error("truncation",
                             "checkpoint blob too short for tensor " + v.name);
        const float* src = reinterpret_cast<const float*>(blob) + offset;
        for (Eigen::Index i = 0; i < v.count(); ++i) {
            if (v.data) v.data[i] = src[i];
            else v.data64[i] = static_cast<double>(src[i]);
        }
    }
    return model;
}

}  // namespace

void save_checkpoint_f32(const std::string& path, NeuroMambaModel<float>& model) {
    save_checkpoint_impl(path, model);
}

void save_checkpoint_f64(const std::string& path, NeuroMambaModel<double>& model) {
    save_checkpoint_impl(path, model);
}

NeuroMambaModel<float> load_checkpoint_f32(const std::string& path) {
    return load_checkpoint_impl<float>(path);
}

NeuroMambaModel<double> load_checkpoint_f64(const std::string& path) {
    return load_checkpoint_impl<double>(path);
}

ModelConfig model_config_from_json_text(const std::string& text, const std::string& origin) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw data_error("format", origin + ": invalid JSON: " + e.what());
    }
    if (!j.is_object()) throw data_error("format", origin + ": config must be a JSON object");
    return config_from_json(j, origin);
}

ModelConfig model_config_from_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw data_error("load", "cannot open config: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return model_config_from_json_text(ss.str(), path);
}

std::string model_config_to_json_text(const ModelConfig& config) {
    return config_to_json(config).dump(2);
}

}  // namespace nm
