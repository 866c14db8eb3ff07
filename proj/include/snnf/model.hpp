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

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "snnf/autograd.hpp"
#include "snnf/neurons.hpp"
#include "snnf/tensor.hpp"

namespace snnf::model {

/// Which family of activations a network runs with.
enum class Regime { ann, sann, liaf, lif };

std::string to_string(Regime regime);
Regime regime_from_string(const std::string& name);
inline bool is_spiking(Regime r) { return r == Regime::liaf || r == Regime::lif; }

/// Activation placed in one slot of the layer graph.
enum class SlotActivation { identity, relu, srelu, lif, liaf };

std::string to_string(SlotActivation act);

enum class LayerKind { conv, dense, avgpool, residual, activation };

struct LayerSpec {
    LayerKind kind = LayerKind::activation;
    std::string name;
    std::size_t out = 0;                ///< channels (conv, residual) or features (dense)
    std::optional<std::size_t> in;      ///< optional declared input channels/features
    int kernel = 3;
    int stride = 1;
    int pad = 1;
    int pool = 2;                       ///< avgpool window
    bool output = false;                ///< activation slot on the classifier output
    std::optional<SlotActivation> fixed;  ///< pins the slot regardless of network regime
};

struct ParameterInfo {
    std::string name;
    Shape shape;
    std::size_t fan_in = 0;
    bool is_bias = false;
};

using SpecHash = std::array<std::uint8_t, 32>;

std::string hash_to_hex(const SpecHash& hash);

/// Declarative layer graph. Shapes exclude the batch axis.
struct NetworkSpec {
    Shape input;  ///< [C,H,W] or [F]
    std::size_t classes = 0;
    std::vector<LayerSpec> layers;

    /// Throws CompositionError naming the offending layers.
    void validate() const;
    /// Parameters in layer order. Independent of the activation regime.
    std::vector<ParameterInfo> parameters() const;
    std::size_t parameter_count() const;
    /// SHA-256 of the canonical structural JSON.
    SpecHash hash() const;
    /// Activation slot names in layer order (residual blocks contribute two).
    std::vector<std::string> activation_slots() const;
    /// Name of the first conv or dense layer.
    std::string first_layer() const;

    nlohmann::json to_json() const;
    static NetworkSpec from_json(const nlohmann::json& j);

    /// conv3x3(16) -> residual(16, stride 2) -> residual(32, stride 2) -> global avgpool -> dense.
    static NetworkSpec micro_resnet(std::size_t in_channels, std::size_t size, std::size_t classes);
    /// Dense stack with one hidden activation per entry of hidden.
    static NetworkSpec mlp(std::size_t features, const std::vector<std::size_t>& hidden, std::size_t classes);
};

/// Neuron constants shared by every slot of a network.
struct NeuronConfig {
    double tau = 2.0;
    double u_th = 0.5;
    neurons::AnalogActivation liaf_activation = neurons::AnalogActivation::relu;
    autograd::SurrogateSpec surrogate = autograd::SurrogateSpec::box(0.5);
    bool detach_reset = true;
    autograd::SReluGrad srelu_grad = autograd::SReluGrad::box;

    nlohmann::json to_json() const;
    static NeuronConfig from_json(const nlohmann::json& j);
};

struct CheckpointMeta {
    Regime regime = Regime::ann;
    int T = 1;
    int epoch = 0;
    std::uint64_t seed = 0;
    double alpha = 0.0;
    bool srelu_step = false;
    NeuronConfig neuron;
    std::optional<NetworkSpec> spec;

    nlohmann::json to_json() const;
    static CheckpointMeta from_json(const nlohmann::json& j);
};

/// Named parameter store plus metadata.
struct Checkpoint {
    std::map<std::string, Tensor> params;
    SpecHash spec_hash{};
    CheckpointMeta meta;

    const Tensor& at(const std::string& name) const;
    /// Rounds every parameter to the nearest 32-bit real, the on-disk precision.
    void commit();
    bool committed() const;

    friend bool operator==(const Checkpoint& a, const Checkpoint& b) {
        return a.params == b.params && a.spec_hash == b.spec_hash;
    }
};

/// Kaiming-uniform weights and zero biases, rounded to 32-bit reals.
Checkpoint build(const NetworkSpec& spec, Rng& rng);

/// How one forward pass runs.
struct ForwardOptions {
    Regime regime = Regime::ann;
    int T = 1;
    NeuronConfig neuron;
    double alpha = 0.0;       ///< SReLU lower knee (sann)
    bool srelu_step = false;  ///< exact step in sann slots
    bool keep_features = false;

    neurons::SReluParams srelu_params() const;
};

/// Handles produced by recording a forward pass on a tape.
struct ForwardTrace {
    std::vector<autograd::Var> steps;  ///< per-step classifier outputs [N,classes]
    autograd::Var rate;                ///< mean over steps
    std::map<std::string, std::vector<autograd::Var>> features;  ///< per-slot outputs, if kept
    std::map<std::string, autograd::Var> params;
};

/// Static input [N,...] is replicated over the T steps; sequence input
/// [T,N,...] supplies one frame per step. ann/sann always run one step and
/// need static input.
ForwardTrace record_forward(autograd::Tape& tape, const Checkpoint& ckpt, const NetworkSpec& spec,
                            const Tensor& input, const ForwardOptions& opts, bool trainable = false);

/// Per-step outputs, shape [T or 1, N, classes].
Tensor forward(const Checkpoint& ckpt, const NetworkSpec& spec, const Tensor& input, const ForwardOptions& opts);

/// Time-averaged output of each requested activation slot, shape [N,C,H,W] or [N,F].
std::map<std::string, Tensor> feature_maps(const Checkpoint& ckpt, const NetworkSpec& spec, const Tensor& input,
                                           const ForwardOptions& opts, const std::vector<std::string>& slots);

inline constexpr std::uint16_t kCheckpointVersion = 1;

void save(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load(const std::filesystem::path& path);

/// Parameter encoding shared with raw tensor blobs: name, rank, dims, f32 data.
void write_tensor_record(std::string& out, const std::string& name, const Tensor& t);

/// A standalone tensor file: magic "SNNT" | version u16 | one tensor record.
void save_tensor(const Tensor& t, const std::filesystem::path& path);
Tensor load_tensor(const std::filesystem::path& path);

}  // namespace snnf::model
