/*
 * Copyright 2026 The SNNF Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 * http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"
#include "snnf/eventdata.hpp"
#include "snnf/model.hpp"

namespace snnf::pipeline {

enum class Loss { cross_entropy, mse };

std::string to_string(Loss loss);
Loss loss_from_string(const std::string& name);
/// Cross-entropy for ann (identity outputs), mse on the rate for every other regime.
Loss default_loss(model::Regime regime);

/// Step decay: rate = initial * factor^(number of decay epochs <= epoch).
struct LrSchedule {
    double initial = 0.05;
    std::vector<int> decay_epochs;
    double factor = 0.1;

    double at(int epoch) const;
};

struct EpochRecord {
    int epoch = 0;             ///< 1-based; 0 is the evaluation before any update
    std::string stage;
    model::Regime regime = model::Regime::ann;
    double train_loss = 0.0;   ///< NaN for epoch 0
    double test_acc = 0.0;
    std::optional<double> alpha;  ///< SReLU knee while annealing
    bool srelu_step = false;
    double wall_s = 0.0;
};

struct TrainReport {
    std::string stage;
    model::Regime regime = model::Regime::ann;
    std::vector<EpochRecord> records;  ///< epoch 0 first when it was evaluated

    /// Thresholds reported in the summary's epochs-to-threshold map.
    static const std::vector<double>& standard_thresholds();

    std::optional<double> initial_acc() const;
    double first_epoch_acc() const;
    double best_acc() const;
    int best_epoch() const;
    double final_acc() const;
    /// First training epoch (>= 1) whose accuracy is >= threshold.
    std::optional<int> epochs_to(double threshold) const;

    static std::string csv_header();
    /// One row per record, without header.
    std::string csv_rows() const;
    /// Deterministic summary; wall times are left out.
    nlohmann::json summary() const;
    /// Full record dump including wall times, for resume.
    nlohmann::json to_json() const;
    static TrainReport from_json(const nlohmann::json& j);
};

/// Options for one call of train_stage.
struct StageOptions {
    std::string name = "stage";
    model::Regime regime = model::Regime::ann;
    int epochs = 1;
    LrSchedule lr;
    std::size_t batch_size = 16;
    int T = 1;
    double momentum = 0.0;
    std::set<std::string> frozen;
    Loss loss = Loss::mse;
    /// Rate-decoded outputs are multiplied by this before the loss.
    double readout_scale = 1.0;
    /// sann only: anneal alpha from 0 to the step over the stage.
    bool anneal = false;
    model::NeuronConfig neuron;
    std::uint64_t seed = 0;
    std::size_t eval_batch = 64;
    bool eval_initial = true;
    bool log = false;  ///< one line per epoch on standard error
    /// Called with the epoch number (0 before training) and the parameters after it.
    std::function<void(int, const model::Checkpoint&)> on_epoch;

    void validate() const;
};

struct EvalResult {
    double accuracy = 0.0;
    std::optional<double> spike_rate;  ///< mean firing over all LIF slots
    std::size_t samples = 0;
};

/// Forward options a stage uses at a given 0-based epoch.
model::ForwardOptions forward_options(const StageOptions& opts, int epoch);

/// Top-1 accuracy of rate-decoded outputs; ties go to the lower class index.
EvalResult evaluate(const model::Checkpoint& ckpt, const model::NetworkSpec& spec, const model::ForwardOptions& fopts,
                    const eventdata::Dataset& data, std::size_t batch = 64, bool spike_rate = false);

struct StageResult {
    model::Checkpoint ckpt;
    TrainReport report;
};

/// SGD (optional momentum) on the rate-decoded loss. The returned checkpoint
/// is committed to 32-bit precision. Throws DivergenceError on a non-finite loss.
StageResult train_stage(const model::Checkpoint& ckpt, const model::NetworkSpec& spec,
                        const eventdata::Dataset& train, const eventdata::Dataset& test, const StageOptions& opts);

struct TransplantResult {
    model::Checkpoint ckpt;
    std::set<std::string> changed;
};

/// Copies parameters whose name and shape match; everything else is freshly
/// initialized from rng and listed in changed.
TransplantResult transplant(const model::Checkpoint& source, const model::NetworkSpec& target_spec, Rng& rng);

/// train_stage with every parameter outside changed frozen.
StageResult warmup(const model::Checkpoint& ckpt, const model::NetworkSpec& spec, const std::set<std::string>& changed,
                   const eventdata::Dataset& train, const eventdata::Dataset& test, StageOptions opts);

enum class PipeKind { S, D };

/// Where a dataset comes from: an existing manifest, or a synthetic task
/// generated into the run directory.
struct DataRef {
    std::filesystem::path manifest;
    std::optional<eventdata::SyntheticTaskSpec> generate;
};

struct StageConfig {
    model::Regime regime = model::Regime::ann;
    int epochs = 1;
    LrSchedule lr;
    std::size_t batch_size = 16;
    int T = 1;
    double momentum = 0.0;
    std::set<std::string> frozen;
    int warmup_epochs = 0;
    double readout_scale = 1.0;
    std::optional<Loss> loss;  ///< overrides the config-level loss
};

struct PipelineConfig {
    PipeKind pipe = PipeKind::S;
    std::uint64_t seed = 1;
    DataRef source;  ///< pipe-D stage 1 data; unused for pipe-S
    DataRef target;
    model::NeuronConfig neuron;
    std::optional<Loss> loss;  ///< unset ("auto"): default_loss of each stage's regime
    eventdata::BinMode bin_mode = eventdata::BinMode::binary;
    std::size_t eval_batch = 64;
    std::vector<StageConfig> stages;

    /// Throws ConfigError naming the offending field.
    void validate() const;
    nlohmann::json to_json() const;
    /// Relative manifest paths resolve against base_dir.
    static PipelineConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
};

nlohmann::json synthetic_to_json(const eventdata::SyntheticTaskSpec& spec);
/// Missing fields keep their defaults; unknown fields throw ConfigError.
eventdata::SyntheticTaskSpec synthetic_from_json(const nlohmann::json& j, const std::string& where = "generate");

PipelineConfig load_config(const std::filesystem::path& path);

std::string stage_label(const PipelineConfig& cfg, std::size_t index);

struct RunOptions {
    /// Run directory for checkpoints and reports; empty keeps everything in memory.
    std::filesystem::path out;
    /// 0-based stage to start from; earlier stages are read back from out.
    std::size_t resume_stage = 0;
    /// Called after every epoch of every stage, including warmup.
    std::function<void(const std::string& stage, int epoch, const model::Checkpoint&)> on_epoch;
    /// Called after each stage's transplant with the changed set.
    std::function<void(std::size_t stage, const std::set<std::string>&)> on_transplant;
    bool log = false;
};

struct PipelineResult {
    model::Checkpoint final;
    std::vector<TrainReport> reports;
    std::vector<std::set<std::string>> changed;  ///< per stage; empty for stage 1

    /// Report of the last stage.
    const TrainReport& final_report() const { return reports.back(); }
    nlohmann::json summary() const;
};

PipelineResult run_pipe_s(const PipelineConfig& cfg, const RunOptions& run = {});
PipelineResult run_pipe_d(const PipelineConfig& cfg, const RunOptions& run = {});
PipelineResult run_pipeline(const PipelineConfig& cfg, const RunOptions& run = {});

/// Parses a stage label or regime name ("lif", "stage2-lif", "2") to a 0-based index.
std::size_t resolve_stage(const PipelineConfig& cfg, const std::string& name);

/// Network the pipelines use for a dataset: MicroResNet sized to the manifest.
model::NetworkSpec network_for(const eventdata::Manifest& manifest);

}  // namespace snnf::pipeline
