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

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "protodc/backbone.hpp"
#include "protodc/pdt_io.hpp"
#include "protodc/prototypes.hpp"
#include "protodc/router.hpp"

namespace protodc {

// Checkpoint layout: a manifest JSON describing layer names, shapes, seed
// and config hash, plus one PDT1 blob per parameter.

inline void save_backbone(const Backbone& net, const std::filesystem::path& dir,
                          const std::string& config_hash) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("save_backbone: cannot create " + dir.string());
    nlohmann::json manifest;
    manifest["config_hash"] = config_hash;
    manifest["seed"] = net.config().seed;
    manifest["d_min"] = net.config().d_min;
    manifest["d_max"] = net.config().d_max;
    nlohmann::json layers = nlohmann::json::array();
    for (const auto& [name, p] : net.named_parameters()) {
        nlohmann::json entry;
        entry["name"] = name;
        entry["shape"] = p.shape();
        entry["file"] = name + ".pdt";
        layers.push_back(entry);
        write_pdt(dir / (name + ".pdt"), p);
    }
    manifest["layers"] = layers;
    std::ofstream out(dir / "manifest.json", std::ios::trunc);
    if (!out) throw IoError("save_backbone: cannot write manifest in " + dir.string());
    out << manifest.dump(2) << "\n";
}

inline void load_backbone(Backbone& net, const std::filesystem::path& dir) {
    std::ifstream in(dir / "manifest.json");
    if (!in) throw IoError("load_backbone: missing manifest in " + dir.string());
    nlohmann::json manifest;
    in >> manifest;
    for (const auto& entry : manifest.at("layers")) {
        const std::string name = entry.at("name").get<std::string>();
        net.load_parameter(name, read_pdt(dir / entry.at("file").get<std::string>()));
    }
}

// Adapter-bank layout: manifest JSON (domains, tap descriptors, frozen
// flags, domain descriptors inline) + PDT1 blobs keyed by
// (domain_id, tap_id, parameter).

inline void save_bank(const AdapterBank& bank, const std::vector<DomainDescriptor>& descriptors,
                      const std::filesystem::path& dir, const std::string& config_hash) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("save_bank: cannot create " + dir.string());
    nlohmann::json manifest;
    manifest["config_hash"] = config_hash;
    nlohmann::json domains = nlohmann::json::array();
    for (int id : bank.domain_ids()) {
        nlohmann::json dj;
        dj["domain_id"] = id;
        dj["frozen"] = bank.is_frozen(id);
        nlohmann::json sets = nlohmann::json::array();
        for (const auto& s : bank.sets(id)) {
            nlohmann::json sj;
            sj["tap"] = tap_name(s.tap_id);
            sj["set_size"] = s.set_size;
            sj["channels"] = s.channels;
            const std::string base = "d" + std::to_string(id) + "_" + tap_name(s.tap_id) + "_";
            write_pdt(dir / (base + "A.pdt"), s.global_scale);
            write_pdt(dir / (base + "P.pdt"), s.local_protos);
            write_pdt(dir / (base + "W.pdt"), s.projection);
            sj["files"] = {{"A", base + "A.pdt"}, {"P", base + "P.pdt"}, {"W", base + "W.pdt"}};
            if (s.free_keys.defined()) {
                write_pdt(dir / (base + "K.pdt"), s.free_keys);
                sj["files"]["K"] = base + "K.pdt";
            }
            sets.push_back(sj);
        }
        dj["sets"] = sets;
        domains.push_back(dj);
    }
    manifest["domains"] = domains;
    nlohmann::json descs = nlohmann::json::array();
    for (const auto& d : descriptors) {
        nlohmann::json e;
        e["domain_id"] = d.domain_id;
        e["frozen"] = d.frozen;
        e["r"] = d.r.values();
        descs.push_back(e);
    }
    manifest["descriptors"] = descs;
    std::ofstream out(dir / "manifest.json", std::ios::trunc);
    if (!out) throw IoError("save_bank: cannot write manifest in " + dir.string());
    out << manifest.dump(2) << "\n";
}

struct LoadedBank {
    AdapterBank bank;
    std::vector<DomainDescriptor> descriptors;
    std::string config_hash;
};

inline LoadedBank load_bank(const std::filesystem::path& dir) {
    std::ifstream in(dir / "manifest.json");
    if (!in) throw IoError("load_bank: missing manifest in " + dir.string());
    nlohmann::json manifest;
    in >> manifest;
    LoadedBank out;
    out.config_hash = manifest.value("config_hash", "");
    for (const auto& dj : manifest.at("domains")) {
        const int id = dj.at("domain_id").get<int>();
        std::vector<PrototypeSet> sets;
        for (const auto& sj : dj.at("sets")) {
            PrototypeSet s;
            s.tap_id = tap_from_name(sj.at("tap").get<std::string>());
            s.domain_id = id;
            s.set_size = sj.at("set_size").get<int>();
            s.channels = sj.at("channels").get<int>();
            const auto& files = sj.at("files");
            s.global_scale = read_pdt(dir / files.at("A").get<std::string>());
            s.local_protos = read_pdt(dir / files.at("P").get<std::string>());
            s.projection = read_pdt(dir / files.at("W").get<std::string>());
            if (files.contains("K")) s.free_keys = read_pdt(dir / files.at("K").get<std::string>());
            sets.push_back(std::move(s));
        }
        out.bank.restore_domain(id, std::move(sets), dj.at("frozen").get<bool>());
    }
    for (const auto& e : manifest.at("descriptors")) {
        DomainDescriptor d;
        d.domain_id = e.at("domain_id").get<int>();
        d.frozen = e.at("frozen").get<bool>();
        auto rv = e.at("r").get<std::vector<float>>();
        d.r = Tensor::from_vector({static_cast<int>(rv.size())}, std::move(rv));
        out.descriptors.push_back(std::move(d));
    }
    return out;
}

}  // namespace protodc
