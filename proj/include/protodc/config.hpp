// Copyright 2026 The protodc authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "protodc/errors.hpp"
#include "protodc/losses.hpp"
#include "protodc/prototypes.hpp"
#include "protodc/rng.hpp"

namespace protodc {

/// Whole-experiment configuration: task sequence, optimizer settings, mode
/// flags, set sizes, loss weights and ablations. Parsed from JSON with
/// unknown keys rejected at every level.
struct ExperimentConfig {
    uint64_t seed = 42;
    std::string output_dir = "runs/run";
    std::vector<std::string> datasets;  // >= 2 directories; first one pretrains

    // Model head bounds.
    float d_min = 0.2f;
    float d_max = 5.0f;

    // Optimizer settings per stage.
    int pretrain_epochs = 3;
    int adapt_epochs = 2;
    float pretrain_lr = 2e-3f;
    float adapt_lr = 1e-2f;
    float momentum = 0.9f;
    int max_steps_per_stage = -1;  // cap when >= 0 (0 = deploy only)

    // Evaluation modes.
    bool eval_incremental = true;
    bool eval_agnostic = true;

    SetSizeProfile set_sizes = SetSizeProfile::indoor();
    LossWeights weights;
    AblationFlags ablation;

    void validate() const {
        if (datasets.size() < 2)
            throw ConfigError("config: needs at least 2 datasets (first one pretrains)");
        if (!(d_min > 0.0f) || !(d_max > d_min)) throw ConfigError("config: 0 < d_min < d_max");
        if (pretrain_epochs < 0 || adapt_epochs < 0) throw ConfigError("config: negative epochs");
        if (!(pretrain_lr > 0.0f) || !(adapt_lr > 0.0f))
            throw ConfigError("config: step sizes must be positive");
        if (momentum < 0.0f || momentum >= 1.0f) throw ConfigError("config: momentum in [0, 1)");
        if (!eval_incremental && !eval_agnostic)
            throw ConfigError("config: at least one evaluation mode must be enabled");
        if (set_sizes.n_image < 1 || set_sizes.n_depth < 1)
            throw ConfigError("config: set sizes must be >= 1");
        weights.validate();
    }
};

namespace config_detail {

inline void reject_unknown(const nlohmann::json& j, const std::set<std::string>& known,
                           const std::string& where) {
    if (!j.is_object()) throw ConfigError("config: '" + where + "' must be an object");
    for (const auto& [key, _] : j.items())
        if (!known.count(key)) throw ConfigError("config: unknown key '" + where + key + "'");
}

}  // namespace config_detail

inline ExperimentConfig config_from_json(const nlohmann::json& j) {
    using config_detail::reject_unknown;
    reject_unknown(j, {"seed", "output_dir", "datasets", "model", "train", "modes", "set_sizes",
                       "loss_weights", "ablation"},
                   "");
    ExperimentConfig c;
    if (!j.contains("datasets")) throw ConfigError("config: missing 'datasets'");
    c.seed = j.value("seed", c.seed);
    c.output_dir = j.value("output_dir", c.output_dir);
    c.datasets = j.at("datasets").get<std::vector<std::string>>();
    if (j.contains("model")) {
        const auto& m = j.at("model");
        reject_unknown(m, {"d_min", "d_max"}, "model.");
        c.d_min = m.value("d_min", c.d_min);
        c.d_max = m.value("d_max", c.d_max);
    }
    if (j.contains("train")) {
        const auto& t = j.at("train");
        reject_unknown(t,
                       {"pretrain_epochs", "adapt_epochs", "pretrain_lr", "adapt_lr", "momentum",
                        "max_steps_per_stage"},
                       "train.");
        c.pretrain_epochs = t.value("pretrain_epochs", c.pretrain_epochs);
        c.adapt_epochs = t.value("adapt_epochs", c.adapt_epochs);
        c.pretrain_lr = t.value("pretrain_lr", c.pretrain_lr);
        c.adapt_lr = t.value("adapt_lr", c.adapt_lr);
        c.momentum = t.value("momentum", c.momentum);
        c.max_steps_per_stage = t.value("max_steps_per_stage", c.max_steps_per_stage);
    }
    if (j.contains("modes")) {
        const auto& m = j.at("modes");
        reject_unknown(m, {"incremental", "agnostic"}, "modes.");
        c.eval_incremental = m.value("incremental", c.eval_incremental);
        c.eval_agnostic = m.value("agnostic", c.eval_agnostic);
    }
    if (j.contains("set_sizes")) {
        const auto& s = j.at("set_sizes");
        reject_unknown(s, {"profile", "n_image", "n_depth"}, "set_sizes.");
        if (s.contains("profile")) {
            const std::string p = s.at("profile").get<std::string>();
            if (p == "indoor")
                c.set_sizes = SetSizeProfile::indoor();
            else if (p == "outdoor")
                c.set_sizes = SetSizeProfile::outdoor();
            else
                throw ConfigError("config: unknown set-size profile '" + p + "'");
        }
        c.set_sizes.n_image = s.value("n_image", c.set_sizes.n_image);
        c.set_sizes.n_depth = s.value("n_depth", c.set_sizes.n_depth);
    }
    if (j.contains("loss_weights")) {
        const auto& w = j.at("loss_weights");
        reject_unknown(w, {"w_ph", "w_sz", "w_sm", "w_dr", "w_co", "w_st"}, "loss_weights.");
        c.weights.w_ph = w.value("w_ph", c.weights.w_ph);
        c.weights.w_sz = w.value("w_sz", c.weights.w_sz);
        c.weights.w_sm = w.value("w_sm", c.weights.w_sm);
        c.weights.w_dr = w.value("w_dr", c.weights.w_dr);
        c.weights.w_co = w.value("w_co", c.weights.w_co);
        c.weights.w_st = w.value("w_st", c.weights.w_st);
    }
    if (j.contains("ablation")) {
        const auto& a = j.at("ablation");
        reject_unknown(a, {"disable_global_a", "free_keys_no_w", "no_stop_grad"}, "ablation.");
        c.ablation.disable_global_a = a.value("disable_global_a", c.ablation.disable_global_a);
        c.ablation.free_keys_no_w = a.value("free_keys_no_w", c.ablation.free_keys_no_w);
        c.ablation.no_stop_grad = a.value("no_stop_grad", c.ablation.no_stop_grad);
    }
    c.validate();
    return c;
}

inline nlohmann::json config_to_json(const ExperimentConfig& c) {
    nlohmann::json j;
    j["seed"] = c.seed;
    j["output_dir"] = c.output_dir;
    j["datasets"] = c.datasets;
    j["model"] = {{"d_min", c.d_min}, {"d_max", c.d_max}};
    j["train"] = {{"pretrain_epochs", c.pretrain_epochs}, {"adapt_epochs", c.adapt_epochs},
                  {"pretrain_lr", c.pretrain_lr},         {"adapt_lr", c.adapt_lr},
                  {"momentum", c.momentum},               {"max_steps_per_stage", c.max_steps_per_stage}};
    j["modes"] = {{"incremental", c.eval_incremental}, {"agnostic", c.eval_agnostic}};
    j["set_sizes"] = {{"n_image", c.set_sizes.n_image}, {"n_depth", c.set_sizes.n_depth}};
    j["loss_weights"] = {{"w_ph", c.weights.w_ph}, {"w_sz", c.weights.w_sz},
                         {"w_sm", c.weights.w_sm}, {"w_dr", c.weights.w_dr},
                         {"w_co", c.weights.w_co}, {"w_st", c.weights.w_st}};
    j["ablation"] = {{"disable_global_a", c.ablation.disable_global_a},
                     {"free_keys_no_w", c.ablation.free_keys_no_w},
                     {"no_stop_grad", c.ablation.no_stop_grad}};
    return j;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("config: cannot open " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config: unparsable JSON in " + path.string() + ": " + e.what());
    }
    return config_from_json(j);
}

/// Stable hash of the canonical config serialization; embedded in every
/// artifact so mixed-run aggregation can be refused.
inline std::string config_hash(const ExperimentConfig& c) {
    const std::string canon = config_to_json(c).dump();
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(fnv1a64(canon)));
    return buf;
}

}  // namespace protodc
