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

#include <algorithm>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "protodc/backbone.hpp"
#include "protodc/config.hpp"
#include "protodc/continual.hpp"
#include "protodc/geometry.hpp"
#include "protodc/losses.hpp"
#include "protodc/optimizer.hpp"
#include "protodc/prototypes.hpp"
#include "protodc/router.hpp"
#include "protodc/serialize.hpp"
#include "protodc/synth.hpp"

namespace protodc {

/// Depth metrics are logged in millimeters (and inverse kilometers for the
/// inverse metrics): meters x 1000.
inline DepthErrorMetrics to_report_units(const DepthErrorMetrics& m) {
    return {m.mae * 1000.0, m.rmse * 1000.0, m.imae * 1000.0, m.irmse * 1000.0};
}

struct EvalOutcome {
    DepthErrorMetrics metrics;      // mm / 1/km
    double routing_accuracy = -1.0; // fraction; only meaningful in agnostic mode
    int sample_count = 0;
};

struct StageRecord {
    int stage = 0;
    std::string dataset;
    int steps = 0;
    float first_loss = 0.0f;
    float last_loss = 0.0f;
    double unadapted_mae = 0.0;  // frozen base without adapters, mm
    double adapted_mae = 0.0;    // incremental a_k^k, mm
};

struct RunResult {
    std::string config_hash;
    std::vector<std::string> dataset_names;
    std::optional<ContinualLog> incremental;
    std::optional<ContinualLog> agnostic;
    // routing_accuracy[k][j]: per-sample selection accuracy on dataset j's
    // eval split after stage k (agnostic mode only).
    std::vector<std::vector<double>> routing_accuracy;
    std::vector<StageRecord> stages;
};

/// Orchestrates the task sequence: pretraining on the first dataset,
/// freezing, per-domain prototype-set deployment and adaptation, and
/// per-stage evaluation in the enabled modes.
class ContinualRunner {
public:
    explicit ContinualRunner(ExperimentConfig cfg) : cfg_(std::move(cfg)) {
        cfg_.validate();
        hash_ = config_hash(cfg_);
    }

    const ExperimentConfig& config() const { return cfg_; }
    const std::string& hash() const { return hash_; }

    /// Runs the full sequence. When run_dir is nonempty, persists the
    /// backbone checkpoint, the adapter bank, continual_log.json,
    /// metrics_report.csv and the trajectory chart there.
    RunResult run_sequence(const std::filesystem::path& run_dir = {});

    // Pieces reused by the eval subcommand and the tests.

    /// Evaluates one dataset with the adapters chosen per `agnostic`,
    /// restricted to descriptors of stages <= stages_seen.
    EvalOutcome evaluate_dataset(const Dataset& ds, int domain_idx, bool agnostic,
                                 int stages_seen) const;

    /// Frozen-backbone, no-adapter baseline on a dataset's eval split (mm).
    double unadapted_mae(const Dataset& ds) const;

    const Backbone& net() const { return *net_; }
    const AdapterBank& bank() const { return bank_; }
    const std::vector<DomainDescriptor>& descriptors() const { return descriptors_; }

    /// Restores a finished run (backbone + bank) for re-evaluation.
    void restore(const std::filesystem::path& run_dir);

private:
    void open_datasets();
    void pretrain_stage();
    void adapt_stage(int k);
    void train_loop(int stage, SgdOptimizer& opt, int epochs, const DomainDescriptor* self,
                    const std::filesystem::path& run_dir);
    Tensor step_loss(int stage, const Sample& sample, const DomainDescriptor* self);
    void abort_dump(const std::filesystem::path& run_dir, int stage, int step,
                    const std::string& what);

    ExperimentConfig cfg_;
    std::string hash_;
    std::vector<Dataset> datasets_;
    std::unique_ptr<Backbone> net_;
    AdapterBank bank_;
    std::vector<DomainDescriptor> descriptors_;
    std::vector<StageRecord> stage_records_;
    std::filesystem::path run_dir_;
};

inline void ContinualRunner::open_datasets() {
    datasets_.clear();
    for (size_t i = 0; i < cfg_.datasets.size(); ++i) {
        try {
            datasets_.push_back(Dataset::open(cfg_.datasets[i]));
        } catch (const IoError& e) {
            throw IoError("stage " + std::to_string(i) + ": dataset '" + cfg_.datasets[i] +
                          "': " + e.what());
        }
    }
}

inline Tensor ContinualRunner::step_loss(int stage, const Sample& sample,
                                         const DomainDescriptor* self) {
    const std::vector<PrototypeSet>* adapters = stage == 0 ? nullptr : &bank_.sets(stage);
    Backbone::EncoderFeatures feats = net_->encode(sample.image_t, sample.sparse_z, sample.mask);
    Tensor depth = net_->decode(feats, adapters, cfg_.ablation);

    auto [w_prev, v_prev] = warp_image(sample.image_prev, depth, sample.pose_prev, sample.intrinsics);
    auto [w_next, v_next] = warp_image(sample.image_next, depth, sample.pose_next, sample.intrinsics);
    LossTerms terms;
    terms.photometric =
        photometric_loss(sample.image_t, {{w_prev, v_prev}, {w_next, v_next}}, cfg_.weights).loss;
    terms.sparse = sparse_consistency_loss(depth, sample.sparse_z, sample.mask);
    terms.smoothness = smoothness_loss(depth, sample.image_t);

    TrainMode mode = TrainMode::kPretrain;
    if (stage > 0) {
        if (self) {
            mode = TrainMode::kAdaptAgnostic;
            std::vector<Tensor> frozen;
            for (const auto& d : descriptors_)
                if (d.domain_id != stage) frozen.push_back(d.r);
            const float w_jk = std::max<float>(1.0f, static_cast<float>(frozen.size()));
            terms.descriptor =
                descriptor_loss(sample_descriptor(feats.bottleneck), self->r, frozen, w_jk);
        } else {
            mode = TrainMode::kAdaptIncremental;
        }
    }
    return total_loss(terms, cfg_.weights, mode);
}

inline void ContinualRunner::abort_dump(const std::filesystem::path& run_dir, int stage, int step,
                                        const std::string& what) {
    if (run_dir.empty()) return;
    const auto dump = run_dir / "abort_state";
    std::error_code ec;
    std::filesystem::create_directories(dump, ec);
    if (ec) return;
    nlohmann::json j;
    j["stage"] = stage;
    j["step"] = step;
    j["error"] = what;
    std::ofstream(dump / "abort.json") << j.dump(2) << "\n";
    if (net_) save_backbone(*net_, dump / "backbone", hash_);
    save_bank(bank_, descriptors_, dump / "bank", hash_);
}

inline void ContinualRunner::train_loop(int stage, SgdOptimizer& opt, int epochs,
                                        const DomainDescriptor* self,
                                        const std::filesystem::path& run_dir) {
    const Dataset& ds = datasets_[static_cast<size_t>(stage)];
    const int n = ds.train_count();
    int done = 0;
    StageRecord rec;
    rec.stage = stage;
    rec.dataset = ds.name();
    for (int epoch = 0; epoch < epochs; ++epoch) {
        // Seeded shuffle; training order is part of the reproducible state.
        std::vector<int> order(static_cast<size_t>(n));
        for (int i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;
        Rng shuffle = substream(cfg_.seed, "order/stage" + std::to_string(stage),
                                static_cast<uint64_t>(epoch));
        for (int i = n - 1; i > 0; --i) {
            const int j = static_cast<int>(shuffle.below(static_cast<uint64_t>(i + 1)));
            std::swap(order[static_cast<size_t>(i)], order[static_cast<size_t>(j)]);
        }
        for (int i = 0; i < n; ++i) {
            if (cfg_.max_steps_per_stage >= 0 && done >= cfg_.max_steps_per_stage) break;
            Sample sample = ds.train_sample(order[static_cast<size_t>(i)]);
            Tensor loss;
            try {
                loss = step_loss(stage, sample, self);
            } catch (const NumericError& e) {
                abort_dump(run_dir, stage, done, e.what());
                throw NumericError("stage " + std::to_string(stage) + " step " +
                                   std::to_string(done) + ": " + e.what());
            }
            if (done == 0) rec.first_loss = loss.item();
            rec.last_loss = loss.item();
            loss.backward();
            opt.step();
            ++done;
        }
    }
    rec.steps = done;
    stage_records_.push_back(rec);
}

inline EvalOutcome ContinualRunner::evaluate_dataset(const Dataset& ds, int domain_idx,
                                                     bool agnostic, int stages_seen) const {
    if (!agnostic && domain_idx > 0 && !bank_.has_domain(domain_idx))
        throw ContractError("evaluate: domain " + std::to_string(domain_idx) +
                            " has no trained prototype set");
    EvalOutcome out;
    const int n = ds.eval_count();
    if (n == 0) throw ContractError("evaluate: dataset '" + ds.name() + "' has no eval split");
    double acc[4] = {0, 0, 0, 0};
    int correct = 0;
    for (int i = 0; i < n; ++i) {
        Sample s = ds.eval_sample(i);
        Backbone::EncoderFeatures feats = net_->encode(s.image_t, s.sparse_z, s.mask);
        int chosen = domain_idx;
        if (agnostic) {
            std::vector<DomainDescriptor> known;
            for (const auto& d : descriptors_)
                if (d.domain_id <= stages_seen) known.push_back(d);
            chosen = select_domain(sample_descriptor(feats.bottleneck), known);
            if (chosen == domain_idx) ++correct;
        }
        const std::vector<PrototypeSet>* adapters = chosen == 0 ? nullptr : &bank_.sets(chosen);
        Tensor depth = net_->decode(feats, adapters, cfg_.ablation);
        DepthErrorMetrics m = error_metrics(depth, s.gt, ds.spec().d_min, ds.spec().d_max);
        acc[0] += m.mae;
        acc[1] += m.rmse;
        acc[2] += m.imae;
        acc[3] += m.irmse;
    }
    const double inv = 1.0 / static_cast<double>(n);
    out.metrics = to_report_units({acc[0] * inv, acc[1] * inv, acc[2] * inv, acc[3] * inv});
    out.sample_count = n;
    if (agnostic) out.routing_accuracy = static_cast<double>(correct) / n;
    return out;
}

inline double ContinualRunner::unadapted_mae(const Dataset& ds) const {
    double acc = 0;
    const int n = ds.eval_count();
    for (int i = 0; i < n; ++i) {
        Sample s = ds.eval_sample(i);
        auto [depth, bneck] = net_->forward(s.image_t, s.sparse_z, s.mask);
        acc += error_metrics(depth, s.gt, ds.spec().d_min, ds.spec().d_max).mae;
    }
    return 1000.0 * acc / static_cast<double>(n);
}

inline void ContinualRunner::pretrain_stage() {
    BackboneConfig bc;
    bc.d_min = cfg_.d_min;
    bc.d_max = cfg_.d_max;
    bc.seed = substream(cfg_.seed, "backbone/init").next_u64();
    net_ = std::make_unique<Backbone>(bc);
    SgdOptimizer opt(net_->parameters(), cfg_.pretrain_lr, cfg_.momentum);
    train_loop(0, opt, cfg_.pretrain_epochs, nullptr, run_dir_);
    net_->freeze();

    // Post-hoc frozen descriptor for the pretraining domain: normalized mean
    // over a seeded training subset.
    const Dataset& d0 = datasets_[0];
    const int n = d0.train_count();
    const int subset = std::min(32, n);
    std::vector<int> idx(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) idx[static_cast<size_t>(i)] = i;
    Rng pick = substream(cfg_.seed, "descriptor/fit0");
    for (int i = 0; i < subset; ++i) {
        const int j = i + static_cast<int>(pick.below(static_cast<uint64_t>(n - i)));
        std::swap(idx[static_cast<size_t>(i)], idx[static_cast<size_t>(j)]);
    }
    std::sort(idx.begin(), idx.begin() + subset);
    std::vector<Tensor> descs;
    for (int i = 0; i < subset; ++i) {
        Sample s = d0.train_sample(idx[static_cast<size_t>(i)]);
        auto feats = net_->encode(s.image_t, s.sparse_z, s.mask);
        descs.push_back(sample_descriptor(feats.bottleneck));
    }
    descriptors_.push_back(fit_initial_descriptor(descs, 0));
}

inline void ContinualRunner::adapt_stage(int k) {
    const Dataset& ds = datasets_[static_cast<size_t>(k)];
    bank_.new_domain(k, Backbone::tap_registry(), cfg_.set_sizes,
                     substream(cfg_.seed, "adapter/init").next_u64(), cfg_.ablation);

    DomainDescriptor* self = nullptr;
    if (cfg_.eval_agnostic) {
        // Initialize near the attracting solution: mean of the first batch's
        // sample descriptors plus small noise.
        for (auto& d : descriptors_) d.frozen = true;
        const int batch = std::min(8, ds.train_count());
        std::vector<double> mean(64, 0.0);
        int c = 0;
        for (int i = 0; i < batch; ++i) {
            Sample s = ds.train_sample(i);
            auto feats = net_->encode(s.image_t, s.sparse_z, s.mask);
            Tensor sd = sample_descriptor(feats.bottleneck);
            c = static_cast<int>(sd.numel());
            mean.resize(static_cast<size_t>(c), 0.0);
            for (int q = 0; q < c; ++q) mean[static_cast<size_t>(q)] += sd.at(q);
        }
        Rng noise = substream(cfg_.seed, "descriptor/init", static_cast<uint64_t>(k));
        std::vector<float> r(static_cast<size_t>(c));
        for (int q = 0; q < c; ++q)
            r[static_cast<size_t>(q)] =
                static_cast<float>(mean[static_cast<size_t>(q)] / batch) + 1e-3f * noise.normal();
        descriptors_.push_back(
            DomainDescriptor{Tensor::from_vector({c}, std::move(r), true), k, false});
        self = &descriptors_.back();
    }

    std::vector<Tensor> params = bank_.trainable_params(k, cfg_.ablation);
    if (self) params.push_back(self->r);
    SgdOptimizer opt(params, cfg_.adapt_lr, cfg_.momentum);
    train_loop(k, opt, cfg_.adapt_epochs, self, run_dir_);
}

inline RunResult ContinualRunner::run_sequence(const std::filesystem::path& run_dir) {
    run_dir_ = run_dir;
    open_datasets();
    stage_records_.clear();
    descriptors_.clear();
    bank_ = AdapterBank{};
    const int t = static_cast<int>(datasets_.size());

    RunResult result;
    result.config_hash = hash_;
    for (const auto& d : datasets_) result.dataset_names.push_back(d.name());
    if (cfg_.eval_incremental) result.incremental.emplace(t);
    if (cfg_.eval_agnostic) result.agnostic.emplace(t);
    result.routing_accuracy.assign(static_cast<size_t>(t), {});

    for (int k = 0; k < t; ++k) {
        if (k == 0)
            pretrain_stage();
        else
            adapt_stage(k);

        StageRecord& rec = stage_records_.back();
        rec.unadapted_mae = unadapted_mae(datasets_[static_cast<size_t>(k)]);

        for (int j = 0; j <= k; ++j) {
            const Dataset& dsj = datasets_[static_cast<size_t>(j)];
            if (cfg_.eval_incremental) {
                EvalOutcome e = evaluate_dataset(dsj, j, false, k);
                result.incremental->set(j, k, e.metrics);
                if (j == k) rec.adapted_mae = e.metrics.mae;
            }
            if (cfg_.eval_agnostic) {
                EvalOutcome e = evaluate_dataset(dsj, j, true, k);
                result.agnostic->set(j, k, e.metrics);
                result.routing_accuracy[static_cast<size_t>(k)].push_back(e.routing_accuracy);
                if (j == k && !cfg_.eval_incremental) rec.adapted_mae = e.metrics.mae;
            }
        }

        if (!run_dir.empty()) {
            if (k == 0) save_backbone(*net_, run_dir / "backbone", hash_);
            save_bank(bank_, descriptors_, run_dir / "bank", hash_);
        }
    }
    result.stages = stage_records_;
    return result;
}

inline void ContinualRunner::restore(const std::filesystem::path& run_dir) {
    open_datasets();
    BackboneConfig bc;
    bc.d_min = cfg_.d_min;
    bc.d_max = cfg_.d_max;
    bc.seed = substream(cfg_.seed, "backbone/init").next_u64();
    net_ = std::make_unique<Backbone>(bc);
    load_backbone(*net_, run_dir / "backbone");
    net_->freeze();
    LoadedBank lb = load_bank(run_dir / "bank");
    if (!lb.config_hash.empty() && lb.config_hash != hash_)
        throw ConfigError("restore: bank config hash " + lb.config_hash +
                          " does not match config " + hash_);
    bank_ = std::move(lb.bank);
    descriptors_ = std::move(lb.descriptors);
}

}  // namespace protodc
