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

#include "nm/training.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace nm {

using nlohmann::json;

PipelineConfig pipeline_config_from_json_text(const std::string& text,
                                              const std::string& origin) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw data_error("format", origin + ": invalid JSON: " + e.what());
    }
    if (!j.is_object()) throw data_error("format", origin + ": config must be a JSON object");

    static const std::set<std::string> known = {
        "model_dim",     "n_layers",  "state_size",    "expand",
        "conv_width",    "delta_rank", "mode",
        "epochs",        "batch_size", "learning_rate", "beta1",
        "beta2",         "adam_eps",   "clip_norm",     "lambda_sparse",
        "seed",          "adapt_epochs", "n_perm"};
    for (const auto& item : j.items())
        if (!known.count(item.key()))
            throw usage_error(origin + ": unknown config key '" + item.key() + "'");

    PipelineConfig cfg;
    cfg.model = model_config_from_json_text(text, origin);
    try {
        cfg.train.epochs = j.value("epochs", cfg.train.epochs);
        cfg.train.batch_size = j.value("batch_size", cfg.train.batch_size);
        cfg.train.learning_rate = j.value("learning_rate", cfg.train.learning_rate);
        cfg.train.beta1 = j.value("beta1", cfg.train.beta1);
        cfg.train.beta2 = j.value("beta2", cfg.train.beta2);
        cfg.train.adam_eps = j.value("adam_eps", cfg.train.adam_eps);
        cfg.train.clip_norm = j.value("clip_norm", cfg.train.clip_norm);
        cfg.train.lambda_sparse = j.value("lambda_sparse", cfg.train.lambda_sparse);
        cfg.train.seed = j.value("seed", cfg.train.seed);
        cfg.train.adapt_epochs = j.value("adapt_epochs", cfg.train.adapt_epochs);
        cfg.train.n_perm = j.value("n_perm", cfg.train.n_perm);
    } catch (const json::exception& e) {
        throw data_error("format", origin + ": " + e.what());
    }
    cfg.train.validate();
    return cfg;
}

PipelineConfig pipeline_config_from_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw data_error("load", "cannot open config: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return pipeline_config_from_json_text(ss.str(), path);
}

}  // namespace nm
