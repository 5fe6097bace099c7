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

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "protodc/geometry.hpp"
#include "protodc/pdt_io.hpp"
#include "protodc/rng.hpp"
#include "protodc/tensor.hpp"

namespace protodc {

inline constexpr int kDatasetFormatVersion = 1;

/// Everything needed to render one synthetic domain deterministically.
struct DomainSpec {
    std::string name = "domain";
    uint64_t seed = 1;
    int height = 64;
    int width = 96;

    // Scene: a back plane, a floor, and fronto-parallel boxes in between.
    float d_min = 0.2f;
    float d_max = 5.0f;
    int min_objects = 2;
    int max_objects = 4;
    float floor_y = 1.0f;  // meters below the optical axis

    // Appearance.
    float texture_freq = 3.0f;  // radians per meter
    float texture_amp = 0.2f;
    float brightness = 1.0f;
    std::array<float, 3> hue = {1.0f, 1.0f, 1.0f};
    float noise_sigma = 0.005f;

    // Sparse depth.
    float density = 0.0065f;
    float sparse_noise_sigma = 0.0f;

    // Camera and motion.
    float focal = 80.0f;
    float baseline = 0.04f;  // meters
    float rot_deg = 0.8f;

    void validate() const {
        if (!(density > 0.0f) || density > 0.1f)
            throw ConfigError("DomainSpec: density must lie in (0, 0.1]");
        if (!(d_min > 0.0f) || !(d_max > d_min)) throw ConfigError("DomainSpec: 0 < d_min < d_max");
        if (height % 8 != 0 || width % 8 != 0 || height < 16 || width < 16)
            throw ConfigError("DomainSpec: extents must be >= 16 and divisible by 8");
        if (min_objects < 0 || max_objects < min_objects)
            throw ConfigError("DomainSpec: bad object-count range");
        if (!(focal > 0.0f)) throw ConfigError("DomainSpec: focal must be positive");
        if (!(brightness > 0.0f)) throw ConfigError("DomainSpec: brightness must be positive");
    }

    Intrinsics intrinsics() const {
        return Intrinsics{focal, focal, 0.5f * static_cast<float>(width - 1),
                          0.5f * static_cast<float>(height - 1)};
    }
};

inline void to_json(nlohmann::json& j, const DomainSpec& s) {
    j = nlohmann::json{{"name", s.name},
                       {"seed", s.seed},
                       {"height", s.height},
                       {"width", s.width},
                       {"d_min", s.d_min},
                       {"d_max", s.d_max},
                       {"min_objects", s.min_objects},
                       {"max_objects", s.max_objects},
                       {"floor_y", s.floor_y},
                       {"texture_freq", s.texture_freq},
                       {"texture_amp", s.texture_amp},
                       {"brightness", s.brightness},
                       {"hue", s.hue},
                       {"noise_sigma", s.noise_sigma},
                       {"density", s.density},
                       {"sparse_noise_sigma", s.sparse_noise_sigma},
                       {"focal", s.focal},
                       {"baseline", s.baseline},
                       {"rot_deg", s.rot_deg}};
}

inline void from_json(const nlohmann::json& j, DomainSpec& s) {
    static const std::set<std::string> known = {
        "name",        "seed",         "height",       "width",      "d_min",
        "d_max",       "min_objects",  "max_objects",  "floor_y",    "texture_freq",
        "texture_amp", "brightness",   "hue",          "noise_sigma", "density",
        "sparse_noise_sigma", "focal", "baseline",     "rot_deg"};
    for (const auto& [key, _] : j.items())
        if (!known.count(key)) throw ConfigError("DomainSpec: unknown key '" + key + "'");
    DomainSpec d;
    s.name = j.value("name", d.name);
    s.seed = j.value("seed", d.seed);
    s.height = j.value("height", d.height);
    s.width = j.value("width", d.width);
    s.d_min = j.value("d_min", d.d_min);
    s.d_max = j.value("d_max", d.d_max);
    s.min_objects = j.value("min_objects", d.min_objects);
    s.max_objects = j.value("max_objects", d.max_objects);
    s.floor_y = j.value("floor_y", d.floor_y);
    s.texture_freq = j.value("texture_freq", d.texture_freq);
    s.texture_amp = j.value("texture_amp", d.texture_amp);
    s.brightness = j.value("brightness", d.brightness);
    s.hue = j.value("hue", d.hue);
    s.noise_sigma = j.value("noise_sigma", d.noise_sigma);
    s.density = j.value("density", d.density);
    s.sparse_noise_sigma = j.value("sparse_noise_sigma", d.sparse_noise_sigma);
    s.focal = j.value("focal", d.focal);
    s.baseline = j.value("baseline", d.baseline);
    s.rot_deg = j.value("rot_deg", d.rot_deg);
}

/// One training/eval item: target frame with two adjacent frames, sparse
/// depth and mask, dense ground truth (held out for evaluation), intrinsics
/// and the relative poses g_{tau t} mapping target-camera coordinates into
/// each adjacent camera.
struct Sample {
    Tensor image_prev, image_t, image_next;  // [h x w x 3]
    Tensor sparse_z, mask;                   // [h x w]
    Tensor gt;                               // [h x w]
    Intrinsics intrinsics;
    Pose pose_prev, pose_next;
};

namespace synth_detail {

struct SceneBox {
    float z, x0, x1, y0, y1;
    int texture;
};

struct Texture {
    std::array<float, 3> base;
    Vec3 dir;
    std::array<float, 3> phase;
};

struct Scene {
    float back_z = 4.0f;
    float floor_y = 1.0f;
    std::vector<SceneBox> boxes;
    std::vector<Texture> textures;  // [0] back plane, [1] floor, boxes from 2
};

inline Scene build_scene(const DomainSpec& spec, Rng& rng) {
    Scene scene;
    scene.back_z = spec.d_max * rng.uniform(0.7f, 0.9f);
    scene.floor_y = spec.floor_y * rng.uniform(0.9f, 1.1f);
    const int n_boxes = spec.min_objects +
                        static_cast<int>(rng.below(static_cast<uint64_t>(
                            spec.max_objects - spec.min_objects + 1)));
    const float half_fov_x = 0.5f * static_cast<float>(spec.width) / spec.focal;
    for (int b = 0; b < n_boxes; ++b) {
        SceneBox box;
        box.z = rng.uniform(0.3f * scene.back_z, 0.75f * scene.back_z);
        const float span = half_fov_x * box.z;
        const float cx = rng.uniform(-0.6f * span, 0.6f * span);
        const float cy = rng.uniform(-0.4f * span, 0.3f * span);
        const float hx = rng.uniform(0.15f, 0.4f) * box.z;
        const float hy = rng.uniform(0.12f, 0.35f) * box.z;
        box.x0 = cx - hx;
        box.x1 = cx + hx;
        box.y0 = cy - hy;
        box.y1 = cy + hy;
        box.texture = 2 + b;
        scene.boxes.push_back(box);
    }
    const int n_tex = 2 + n_boxes;
    for (int t = 0; t < n_tex; ++t) {
        Texture tex;
        for (int c = 0; c < 3; ++c) tex.base[static_cast<size_t>(c)] = rng.uniform(0.25f, 0.55f);
        const float ang = rng.uniform(0.0f, 6.28318f);
        tex.dir = {std::cos(ang), std::sin(ang), rng.uniform(-0.3f, 0.3f)};
        for (int c = 0; c < 3; ++c) tex.phase[static_cast<size_t>(c)] = rng.uniform(0.0f, 6.28318f);
        scene.textures.push_back(tex);
    }
    return scene;
}

/// Nearest hit along origin + s*dir (world frame == target camera frame).
/// Returns (point, texture id); every ray terminates on the back plane.
inline std::pair<Vec3, int> trace(const Scene& scene, Vec3 origin, Vec3 dir) {
    float best_s = std::numeric_limits<float>::max();
    int tex = 0;
    Vec3 hit{};
    // Back plane.
    if (dir.z > 1e-6f) {
        const float s = (scene.back_z - origin.z) / dir.z;
        if (s > 1e-4f && s < best_s) {
            best_s = s;
            hit = origin + s * dir;
            tex = 0;
        }
    }
    // Floor (y points down in image coordinates).
    if (dir.y > 1e-6f) {
        const float s = (scene.floor_y - origin.y) / dir.y;
        if (s > 1e-4f && s < best_s) {
            const Vec3 p = origin + s * dir;
            if (p.z < scene.back_z) {
                best_s = s;
                hit = p;
                tex = 1;
            }
        }
    }
    for (const auto& box : scene.boxes) {
        if (dir.z <= 1e-6f) continue;
        const float s = (box.z - origin.z) / dir.z;
        if (s <= 1e-4f || s >= best_s) continue;
        const Vec3 p = origin + s * dir;
        if (p.x >= box.x0 && p.x <= box.x1 && p.y >= box.y0 && p.y <= box.y1) {
            best_s = s;
            hit = p;
            tex = box.texture;
        }
    }
    return {hit, tex};
}

inline void shade(const Scene& scene, const DomainSpec& spec, const Vec3& p, int tex_id,
                  float* rgb) {
    const Texture& tex = scene.textures[static_cast<size_t>(tex_id)];
    const float t = spec.texture_freq * (tex.dir.x * p.x + tex.dir.y * p.y + tex.dir.z * p.z);
    for (int c = 0; c < 3; ++c) {
        const float raw =
            tex.base[static_cast<size_t>(c)] +
            spec.texture_amp * std::sin(t + tex.phase[static_cast<size_t>(c)]);
        rgb[c] = spec.brightness * spec.hue[static_cast<size_t>(c)] * raw;
    }
}

/// Renders the scene from a camera with world pose `cam` (world->camera).
/// Optionally writes per-pixel target-frame depth (only meaningful for the
/// identity camera).
inline Tensor render_view(const Scene& scene, const DomainSpec& spec, const Pose& cam,
                          Rng& noise_rng, std::vector<float>* depth_out = nullptr) {
    const Intrinsics K = spec.intrinsics();
    const Pose cam_to_world = inverse(cam);
    Pose rot = cam_to_world;
    rot.translation = {0, 0, 0};
    const Vec3 origin{cam_to_world.translation[0], cam_to_world.translation[1],
                      cam_to_world.translation[2]};
    const int h = spec.height, w = spec.width;
    std::vector<float> img(static_cast<size_t>(h) * w * 3);
    for (int v = 0; v < h; ++v)
        for (int u = 0; u < w; ++u) {
            const Vec3 dir_cam{(static_cast<float>(u) - K.cx) / K.fx,
                               (static_cast<float>(v) - K.cy) / K.fy, 1.0f};
            const Vec3 dir = rot.apply(dir_cam);
            auto [hit, tex] = trace(scene, origin, dir);
            float* rgb = img.data() + (static_cast<size_t>(v) * w + u) * 3;
            shade(scene, spec, hit, tex, rgb);
            if (spec.noise_sigma > 0.0f)
                for (int c = 0; c < 3; ++c) rgb[c] += noise_rng.normal(0.0f, spec.noise_sigma);
            if (depth_out) (*depth_out)[static_cast<size_t>(v) * w + u] = hit.z;
        }
    return Tensor::from_vector({h, w, 3}, std::move(img));
}

inline Pose random_camera(const DomainSpec& spec, Rng& rng) {
    // Unit direction scaled by the baseline, with a slight forward bias so
    // the photometric signal includes parallax toward the scene.
    Vec3 t{rng.normal(), rng.normal(), rng.normal()};
    const float n = std::sqrt(t.x * t.x + t.y * t.y + t.z * t.z) + 1e-6f;
    t = (spec.baseline / n) * t;
    const float r = spec.rot_deg * 3.14159265f / 180.0f;
    const Pose world_to_cam = pose_from_euler(rng.uniform(-r, r), rng.uniform(-r, r),
                                              rng.uniform(-r, r), {0, 0, 0});
    // world_to_cam rotation with camera center at t: X_cam = R (X_w - t).
    Pose out = world_to_cam;
    Pose rot_only = world_to_cam;
    rot_only.translation = {0, 0, 0};
    const Vec3 rt = rot_only.apply(t);
    out.translation = {-rt.x, -rt.y, -rt.z};
    return out;
}

}  // namespace synth_detail

/// Deterministic sample renderer: (spec.seed, split, index) fully determine
/// the output. Train and eval splits draw from disjoint substreams.
inline Sample render_sample(const DomainSpec& spec, const std::string& split, int index) {
    spec.validate();
    const auto idx = static_cast<uint64_t>(index);
    Rng scene_rng = substream(spec.seed, "scene/" + split, idx);
    synth_detail::Scene scene = synth_detail::build_scene(spec, scene_rng);

    const Pose cam_t = Pose::identity();
    const Pose cam_prev = synth_detail::random_camera(spec, scene_rng);
    const Pose cam_next = synth_detail::random_camera(spec, scene_rng);

    Rng noise_prev = substream(spec.seed, "noise/prev/" + split, idx);
    Rng noise_t = substream(spec.seed, "noise/t/" + split, idx);
    Rng noise_next = substream(spec.seed, "noise/next/" + split, idx);

    const int h = spec.height, w = spec.width;
    std::vector<float> depth(static_cast<size_t>(h) * w);
    Sample s;
    s.image_t = synth_detail::render_view(scene, spec, cam_t, noise_t, &depth);
    s.image_prev = synth_detail::render_view(scene, spec, cam_prev, noise_prev);
    s.image_next = synth_detail::render_view(scene, spec, cam_next, noise_next);
    s.gt = Tensor::from_vector({h, w}, depth);

    // Exactly round(rho * pixels) distinct sparse points, so the realized
    // density never drifts from the spec.
    Rng sparse_rng = substream(spec.seed, "sparse/" + split, idx);
    const int64_t total = static_cast<int64_t>(h) * w;
    const int64_t k = std::max<int64_t>(1, std::llround(spec.density * static_cast<double>(total)));
    std::vector<int64_t> perm(static_cast<size_t>(total));
    for (int64_t i = 0; i < total; ++i) perm[static_cast<size_t>(i)] = i;
    std::vector<float> z(static_cast<size_t>(total), 0.0f);
    std::vector<float> m(static_cast<size_t>(total), 0.0f);
    for (int64_t i = 0; i < k; ++i) {
        const int64_t j = i + static_cast<int64_t>(sparse_rng.below(static_cast<uint64_t>(total - i)));
        std::swap(perm[static_cast<size_t>(i)], perm[static_cast<size_t>(j)]);
        const int64_t pix = perm[static_cast<size_t>(i)];
        m[static_cast<size_t>(pix)] = 1.0f;
        float value = depth[static_cast<size_t>(pix)];
        if (spec.sparse_noise_sigma > 0.0f) value += sparse_rng.normal(0.0f, spec.sparse_noise_sigma);
        z[static_cast<size_t>(pix)] = value;
    }
    s.sparse_z = Tensor::from_vector({h, w}, std::move(z));
    s.mask = Tensor::from_vector({h, w}, std::move(m));

    s.intrinsics = spec.intrinsics();
    s.pose_prev = cam_prev;  // world == target frame, so this is g_{tau t}
    s.pose_next = cam_next;
    return s;
}

/// Appearance-shifted family sharing the scene family. `gap` scales the
/// separation; gap 0 leaves everything but name and seed identical.
inline std::vector<DomainSpec> make_shifted_family(const DomainSpec& base, int n_domains,
                                                   float gap) {
    if (n_domains < 2) throw ConfigError("make_shifted_family: needs at least 2 domains");
    static const float kBright[] = {0.0f, -0.22f, 0.18f, -0.12f, 0.26f, -0.3f};
    static const float kHue[][3] = {{0.0f, 0.0f, 0.0f},   {0.22f, -0.1f, -0.18f},
                                    {-0.18f, 0.05f, 0.22f}, {-0.06f, 0.2f, -0.14f},
                                    {0.12f, -0.2f, 0.1f},  {-0.2f, 0.14f, 0.06f}};
    static const float kFreq[] = {0.0f, 0.45f, -0.3f, 0.25f, -0.2f, 0.55f};
    static const float kFocal[] = {0.0f, -0.05f, 0.06f, 0.03f, -0.04f, 0.05f};
    std::vector<DomainSpec> out;
    for (int i = 0; i < n_domains; ++i) {
        DomainSpec s = base;
        const size_t v = static_cast<size_t>(i) % 6;
        s.name = base.name + "_" + std::to_string(i);
        s.seed = base.seed + static_cast<uint64_t>(i) * 1009;
        s.brightness = base.brightness * (1.0f + gap * kBright[v]);
        for (int c = 0; c < 3; ++c)
            s.hue[static_cast<size_t>(c)] =
                base.hue[static_cast<size_t>(c)] * (1.0f + gap * kHue[v][c]);
        s.texture_freq = base.texture_freq * (1.0f + gap * kFreq[v]);
        s.focal = base.focal * (1.0f + gap * kFocal[v]);
        s.validate();
        out.push_back(std::move(s));
    }
    return out;
}

// ---------------------------------------------------------------------------
// On-disk dataset format: manifest.json + one PDT1 blob per array.
// ---------------------------------------------------------------------------

namespace synth_detail {

inline std::array<float, 12> pose_to_array(const Pose& p) {
    std::array<float, 12> a{};
    for (int i = 0; i < 9; ++i) a[static_cast<size_t>(i)] = p.rotation[static_cast<size_t>(i)];
    for (int i = 0; i < 3; ++i) a[static_cast<size_t>(9 + i)] = p.translation[static_cast<size_t>(i)];
    return a;
}

inline Pose pose_from_array(const std::array<float, 12>& a) {
    Pose p;
    for (int i = 0; i < 9; ++i) p.rotation[static_cast<size_t>(i)] = a[static_cast<size_t>(i)];
    for (int i = 0; i < 3; ++i) p.translation[static_cast<size_t>(i)] = a[static_cast<size_t>(9 + i)];
    return p;
}

inline const char* kFields[] = {"image_prev", "image_t", "image_next", "sparse_z", "mask", "gt"};

}  // namespace synth_detail

/// Renders and persists a dataset directory. Fully reproducible: identical
/// spec and counts produce byte-identical files.
inline std::filesystem::path write_dataset(const DomainSpec& spec, int n_train, int n_eval,
                                           const std::filesystem::path& dir) {
    spec.validate();
    if (n_train < 1 || n_eval < 0) throw ConfigError("write_dataset: needs n_train >= 1");
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(dir / "data", ec);
    if (ec) throw IoError("write_dataset: cannot create " + dir.string());

    nlohmann::json manifest;
    manifest["format_version"] = kDatasetFormatVersion;
    manifest["name"] = spec.name;
    manifest["spec"] = spec;
    manifest["sample_count"] = n_train + n_eval;
    manifest["splits"] = {{"train", n_train}, {"eval", n_eval}};
    const Intrinsics K = spec.intrinsics();
    manifest["intrinsics"] = {K.fx, K.fy, K.cx, K.cy};

    nlohmann::json samples = nlohmann::json::array();
    auto emit = [&](const std::string& split, int count) {
        for (int i = 0; i < count; ++i) {
            Sample s = render_sample(spec, split, i);
            char idbuf[32];
            std::snprintf(idbuf, sizeof(idbuf), "%s_%04d", split.c_str(), i);
            const std::string id = idbuf;
            nlohmann::json entry;
            entry["id"] = id;
            entry["split"] = split;
            const Tensor* arrays[] = {&s.image_prev, &s.image_t, &s.image_next,
                                      &s.sparse_z,   &s.mask,    &s.gt};
            nlohmann::json files;
            for (int f = 0; f < 6; ++f) {
                const std::string rel = "data/" + id + "_" + synth_detail::kFields[f] + ".pdt";
                write_pdt(dir / rel, *arrays[f]);
                files[synth_detail::kFields[f]] = rel;
            }
            entry["files"] = files;
            entry["pose_prev"] = synth_detail::pose_to_array(s.pose_prev);
            entry["pose_next"] = synth_detail::pose_to_array(s.pose_next);
            samples.push_back(entry);
        }
    };
    emit("train", n_train);
    emit("eval", n_eval);
    manifest["samples"] = samples;

    const fs::path mpath = dir / "manifest.json";
    std::ofstream out(mpath, std::ios::trunc);
    if (!out) throw IoError("write_dataset: cannot write " + mpath.string());
    out << manifest.dump(2) << "\n";
    return mpath;
}

/// Read-only view of a dataset directory; samples load lazily from disk.
class Dataset {
public:
    static Dataset open(const std::filesystem::path& dir) {
        namespace fs = std::filesystem;
        const fs::path mpath = dir / "manifest.json";
        std::ifstream in(mpath);
        if (!in) throw IoError("Dataset: missing manifest " + mpath.string());
        nlohmann::json manifest;
        try {
            in >> manifest;
        } catch (const nlohmann::json::exception& e) {
            throw IoError("Dataset: unparsable manifest " + mpath.string() + ": " + e.what());
        }
        if (manifest.value("format_version", -1) != kDatasetFormatVersion)
            throw IoError("Dataset: unsupported format version in " + mpath.string());
        Dataset ds;
        ds.dir_ = dir;
        ds.spec_ = manifest.at("spec").get<DomainSpec>();
        ds.name_ = manifest.value("name", ds.spec_.name);
        const auto& splits = manifest.at("splits");
        ds.n_train_ = splits.at("train").get<int>();
        ds.n_eval_ = splits.at("eval").get<int>();
        const auto ivals = manifest.at("intrinsics").get<std::vector<float>>();
        if (ivals.size() != 4) throw IoError("Dataset: bad intrinsics in manifest");
        ds.intrinsics_ = Intrinsics{ivals[0], ivals[1], ivals[2], ivals[3]};
        const auto& samples = manifest.at("samples");
        if (static_cast<int>(samples.size()) != ds.n_train_ + ds.n_eval_)
            throw IoError("Dataset: sample count does not match manifest splits");
        for (const auto& entry : samples) {
            Entry e;
            e.split = entry.at("split").get<std::string>();
            for (int f = 0; f < 6; ++f) {
                const std::string rel =
                    entry.at("files").at(synth_detail::kFields[f]).get<std::string>();
                if (!fs::exists(dir / rel))
                    throw IoError("Dataset: listed file missing: " + (dir / rel).string());
                e.files[static_cast<size_t>(f)] = rel;
            }
            e.pose_prev = entry.at("pose_prev").get<std::array<float, 12>>();
            e.pose_next = entry.at("pose_next").get<std::array<float, 12>>();
            (e.split == "train" ? ds.train_ : ds.eval_).push_back(std::move(e));
        }
        if (static_cast<int>(ds.train_.size()) != ds.n_train_ ||
            static_cast<int>(ds.eval_.size()) != ds.n_eval_)
            throw IoError("Dataset: split tags disagree with declared counts");
        return ds;
    }

    const DomainSpec& spec() const { return spec_; }
    const std::string& name() const { return name_; }
    int train_count() const { return n_train_; }
    int eval_count() const { return n_eval_; }

    Sample train_sample(int i) const { return load(train_.at(static_cast<size_t>(i))); }
    Sample eval_sample(int i) const { return load(eval_.at(static_cast<size_t>(i))); }

private:
    struct Entry {
        std::string split;
        std::array<std::string, 6> files;
        std::array<float, 12> pose_prev{}, pose_next{};
    };

    Sample load(const Entry& e) const {
        Sample s;
        s.image_prev = read_pdt(dir_ / e.files[0]);
        s.image_t = read_pdt(dir_ / e.files[1]);
        s.image_next = read_pdt(dir_ / e.files[2]);
        s.sparse_z = read_pdt(dir_ / e.files[3]);
        s.mask = read_pdt(dir_ / e.files[4]);
        s.gt = read_pdt(dir_ / e.files[5]);
        s.intrinsics = intrinsics_;
        s.pose_prev = synth_detail::pose_from_array(e.pose_prev);
        s.pose_next = synth_detail::pose_from_array(e.pose_next);
        return s;
    }

    std::filesystem::path dir_;
    DomainSpec spec_;
    std::string name_;
    Intrinsics intrinsics_;
    int n_train_ = 0, n_eval_ = 0;
    std::vector<Entry> train_, eval_;
};

}  // namespace protodc
