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

#include "snnf/model.hpp"

#include <openssl/evp.h>

#include <cmath>
#include <cstdio>
#include <set>

#include "binary_io.hpp"
#include "snnf/error.hpp"

namespace snnf::model {

using autograd::Tape;
using autograd::Var;
using nlohmann::json;

namespace {

constexpr char kCheckpointMagic[4] = {'S', 'N', 'N', 'F'};
constexpr char kTensorMagic[4] = {'S', 'N', 'N', 'T'};

std::string layer_kind_name(LayerKind k) {
    switch (k) {
        case LayerKind::conv: return "conv";
        case LayerKind::dense: return "dense";
        case LayerKind::avgpool: return "avgpool";
        case LayerKind::residual: return "residual";
        case LayerKind::activation: return "activation";
    }
    return "?";
}

LayerKind layer_kind_from_string(const std::string& s) {
    if (s == "conv") return LayerKind::conv;
    if (s == "dense") return LayerKind::dense;
    if (s == "avgpool") return LayerKind::avgpool;
    if (s == "residual") return LayerKind::residual;
    if (s == "activation") return LayerKind::activation;
    throw FormatError("network spec: unknown layer kind '" + s + "'");
}

SlotActivation slot_activation_from_string(const std::string& s) {
    if (s == "identity") return SlotActivation::identity;
    if (s == "relu") return SlotActivation::relu;
    if (s == "srelu") return SlotActivation::srelu;
    if (s == "lif") return SlotActivation::lif;
    if (s == "liaf") return SlotActivation::liaf;
    throw FormatError("network spec: unknown activation '" + s + "'");
}

LayerSpec make_layer(LayerKind kind, std::string name = {}, std::size_t out = 0) {
    LayerSpec l;
    l.kind = kind;
    l.name = std::move(name);
    l.out = out;
    return l;
}

std::string describe(const LayerSpec& l, std::size_t index) {
    return l.name.empty() ? layer_kind_name(l.kind) + "#" + std::to_string(index) : l.name;
}

// Walks the layer list, checking composition; calls visit(layer, index, in_shape, out_shape).
template <typename Visit>
void walk(const NetworkSpec& spec, Visit visit) {
    if (spec.input.empty()) throw CompositionError("network spec: empty input shape");
    Shape cur = spec.input;
    std::string prev = "input";
    std::set<std::string> names;
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        const auto& l = spec.layers[i];
        const std::string self = describe(l, i);
        if (!l.name.empty() && !names.insert(l.name).second) {
            throw CompositionError("network spec: duplicate layer name '" + l.name + "'");
        }
        if (l.kind != LayerKind::avgpool && l.name.empty()) {
            throw CompositionError("network spec: layer #" + std::to_string(i) + " needs a name");
        }
        Shape next = cur;
        switch (l.kind) {
            case LayerKind::conv:
            case LayerKind::residual: {
                if (cur.size() != 3) {
                    throw CompositionError("layer '" + self + "' needs [C,H,W] input but '" + prev + "' produces " +
                                           shape_to_string(cur));
                }
                if (l.in && *l.in != cur[0]) {
                    throw CompositionError("layer '" + self + "' expects " + std::to_string(*l.in) +
                                           " input channels but '" + prev + "' produces " + std::to_string(cur[0]));
                }
                if (l.out == 0) throw CompositionError("layer '" + self + "' has zero output channels");
                const int k = l.kind == LayerKind::conv ? l.kernel : 3;
                const int pad = l.kind == LayerKind::conv ? l.pad : 1;
                if (l.stride < 1 || k < 1 || pad < 0) throw CompositionError("layer '" + self + "' has invalid geometry");
                for (int axis = 1; axis <= 2; ++axis) {
                    const long span = static_cast<long>(cur[axis]) + 2L * pad - k;
                    // The residual entry conv floors, so stride 2 works on even sizes.
                    if (span < 0 || (l.kind == LayerKind::conv && span % l.stride != 0)) {
                        throw CompositionError("layer '" + self + "' geometry does not fit the " +
                                               shape_to_string(cur) + " output of '" + prev + "'");
                    }
                    next[axis] = static_cast<std::size_t>(span / l.stride) + 1;
                }
                if (l.kind == LayerKind::residual &&
                    (l.out < cur[0] || cur[1] % static_cast<std::size_t>(l.stride) != 0 ||
                     cur[2] % static_cast<std::size_t>(l.stride) != 0)) {
                    throw CompositionError("residual '" + self + "' shortcut cannot map the output of '" + prev + "'");
                }
                next[0] = l.out;
                break;
            }
            case LayerKind::avgpool: {
                const auto k = static_cast<std::size_t>(std::max(l.pool, 1));
                if (cur.size() != 3 || cur[1] % k != 0 || cur[2] % k != 0) {
                    throw CompositionError("avgpool '" + self + "' window " + std::to_string(l.pool) +
                                           " does not divide the output of '" + prev + "'");
                }
                next = {cur[0], cur[1] / k, cur[2] / k};
                break;
            }
            case LayerKind::dense: {
                const std::size_t f = shape_numel(cur);
                if (l.in && *l.in != f) {
                    throw CompositionError("layer '" + self + "' expects " + std::to_string(*l.in) +
                                           " input features but '" + prev + "' produces " + std::to_string(f));
                }
                if (l.out == 0) throw CompositionError("layer '" + self + "' has zero outputs");
                next = {l.out};
                break;
            }
            case LayerKind::activation:
                break;
        }
        visit(l, i, cur, next);
        cur = std::move(next);
        if (l.kind != LayerKind::activation) prev = self;
    }
    if (cur != Shape{spec.classes}) {
        throw CompositionError("network spec: final layer '" + prev + "' produces " + shape_to_string(cur) +
                               " but the spec declares " + std::to_string(spec.classes) + " classes");
    }
}

json layer_to_json(const LayerSpec& l) {
    json j{{"kind", layer_kind_name(l.kind)}};
    if (!l.name.empty()) j["name"] = l.name;
    switch (l.kind) {
        case LayerKind::conv:
            j["out"] = l.out;
            j["kernel"] = l.kernel;
            j["stride"] = l.stride;
            j["pad"] = l.pad;
            break;
        case LayerKind::residual:
            j["out"] = l.out;
            j["stride"] = l.stride;
            break;
        case LayerKind::dense:
            j["out"] = l.out;
            break;
        case LayerKind::avgpool:
            j["pool"] = l.pool;
            break;
        case LayerKind::activation:
            j["output"] = l.output;
            if (l.fixed) j["regime"] = to_string(*l.fixed);
            break;
    }
    if (l.in) j["in"] = *l.in;
    return j;
}

LayerSpec layer_from_json(const json& j) {
    LayerSpec l;
    l.kind = layer_kind_from_string(j.at("kind").get<std::string>());
    l.name = j.value("name", std::string{});
    l.out = j.value("out", std::size_t{0});
    if (j.contains("in")) l.in = j.at("in").get<std::size_t>();
    l.kernel = j.value("kernel", 3);
    l.stride = j.value("stride", 1);
    l.pad = j.value("pad", l.kernel / 2);
    l.pool = j.value("pool", 2);
    l.output = j.value("output", false);
    if (j.contains("regime")) l.fixed = slot_activation_from_string(j.at("regime").get<std::string>());
    return l;
}

// Forward recorder: owns per-slot neuron state across time steps.
class Recorder {
public:
    Recorder(Tape& tape, const Checkpoint& ckpt, const NetworkSpec& spec, const ForwardOptions& opts,
             bool trainable, ForwardTrace& trace)
        : tape_(tape), spec_(spec), opts_(opts), trace_(trace), srelu_(opts.srelu_params()) {
        for (const auto& info : spec.parameters()) {
            auto it = ckpt.params.find(info.name);
            if (it == ckpt.params.end()) throw NameError("forward: checkpoint lacks parameter '" + info.name + "'");
            if (it->second.shape() != info.shape) {
                throw DimensionError("forward: parameter '" + info.name + "' has shape " +
                                     shape_to_string(it->second.shape()) + ", spec needs " +
                                     shape_to_string(info.shape));
            }
            trace_.params[info.name] = trainable ? tape.parameter(info.name, it->second) : tape.constant(it->second);
        }
    }

    Var run_step(Var x) {
        for (const auto& l : spec_.layers) {
            switch (l.kind) {
                case LayerKind::conv:
                    x = autograd::conv2d(tape_, x, p(l.name + ".weight"), p(l.name + ".bias"), l.stride, l.pad);
                    break;
                case LayerKind::dense:
                    x = autograd::dense(tape_, x, p(l.name + ".weight"), p(l.name + ".bias"));
                    break;
                case LayerKind::avgpool:
                    x = autograd::avgpool2d(tape_, x, l.pool);
                    break;
                case LayerKind::activation:
                    x = activate(l.name, x, l.output, l.fixed);
                    break;
                case LayerKind::residual: {
                    Var h = autograd::conv2d(tape_, x, p(l.name + ".conv1.weight"), p(l.name + ".conv1.bias"),
                                             l.stride, 1, true);
                    h = activate(l.name + ".act1", h, false, std::nullopt);
                    h = autograd::conv2d(tape_, h, p(l.name + ".conv2.weight"), p(l.name + ".conv2.bias"), 1, 1);
                    Var shortcut = x;
                    if (l.stride > 1) shortcut = autograd::avgpool2d(tape_, shortcut, l.stride);
                    shortcut = autograd::pad_channels(tape_, shortcut, l.out);
                    h = autograd::add(tape_, h, shortcut);
                    x = activate(l.name + ".act2", h, false, std::nullopt);
                    break;
                }
            }
        }
        return x;
    }

private:
    struct SlotState {
        Var u;
        Var o;
    };

    Var p(const std::string& name) const { return trace_.params.at(name); }

    SlotActivation resolve(bool output, std::optional<SlotActivation> fixed) const {
        if (fixed) return *fixed;
        switch (opts_.regime) {
            case Regime::ann: return output ? SlotActivation::identity : SlotActivation::relu;
            case Regime::sann: return SlotActivation::srelu;
            case Regime::liaf: return SlotActivation::liaf;
            case Regime::lif: return SlotActivation::lif;
        }
        return SlotActivation::identity;
    }

    Var activate(const std::string& slot, Var pre, bool output, std::optional<SlotActivation> fixed) {
        const auto& n = opts_.neuron;
        Var out;
        switch (resolve(output, fixed)) {
            case SlotActivation::identity: out = pre; break;
            case SlotActivation::relu: out = autograd::relu(tape_, pre); break;
            case SlotActivation::srelu: out = autograd::srelu(tape_, pre, srelu_, n.srelu_grad); break;
            case SlotActivation::lif:
            case SlotActivation::liaf: {
                const bool lif = resolve(output, fixed) == SlotActivation::lif;
                auto it = state_.find(slot);
                // Zero initial state: the first update is u' = x exactly.
                Var u = it == state_.end()
                            ? pre
                            : autograd::lif_membrane(tape_, it->second.u, it->second.o, pre, std::exp(-1.0 / n.tau),
                                                     n.detach_reset);
                Var reset;
                if (lif) {
                    out = autograd::spike_step_with_surrogate(tape_, autograd::shift(tape_, u, -n.u_th), n.surrogate);
                    reset = out;
                } else {
                    reset = autograd::fire_mask(tape_, u, n.u_th);
                    out = n.liaf_activation == neurons::AnalogActivation::relu
                              ? autograd::relu(tape_, u)
                              : autograd::spike_step_with_surrogate(tape_, autograd::shift(tape_, u, -n.u_th),
                                                                    n.surrogate);
                }
                state_[slot] = SlotState{u, reset};
                break;
            }
        }
        if (opts_.keep_features) trace_.features[slot].push_back(out);
        return out;
    }

    Tape& tape_;
    const NetworkSpec& spec_;
    const ForwardOptions& opts_;
    ForwardTrace& trace_;
    neurons::SReluParams srelu_;
    std::map<std::string, SlotState> state_;
};

Tensor slice_step(const Tensor& seq, std::size_t t) {
    Shape s(seq.shape().begin() + 1, seq.shape().end());
    const std::size_t inner = shape_numel(s);
    std::vector<double> part(seq.data().begin() + static_cast<long>(t * inner),
                             seq.data().begin() + static_cast<long>((t + 1) * inner));
    return Tensor(std::move(s), std::move(part));
}

std::string digest_sha256(std::string_view bytes) {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1 || len != 32) {
        throw Error("sha256 failed");
    }
    return std::string(reinterpret_cast<const char*>(md), len);
}

}  // namespace

std::string to_string(Regime regime) {
    switch (regime) {
        case Regime::ann: return "ann";
        case Regime::sann: return "sann";
        case Regime::liaf: return "liaf";
        case Regime::lif: return "lif";
    }
    return "?";
}

Regime regime_from_string(const std::string& name) {
    if (name == "ann") return Regime::ann;
    if (name == "sann") return Regime::sann;
    if (name == "liaf") return Regime::liaf;
    if (name == "lif") return Regime::lif;
    throw ConfigError("unknown regime '" + name + "' (expected ann, sann, liaf or lif)");
}

std::string to_string(SlotActivation act) {
    switch (act) {
        case SlotActivation::identity: return "identity";
        case SlotActivation::relu: return "relu";
        case SlotActivation::srelu: return "srelu";
        case SlotActivation::lif: return "lif";
        case SlotActivation::liaf: return "liaf";
    }
    return "?";
}

std::string hash_to_hex(const SpecHash& hash) {
    static constexpr char digits[] = "0123456789abcdef";
    std::string out;
    for (auto b : hash) {
        out += digits[b >> 4];
        out += digits[b & 15];
    }
    return out;
}

void NetworkSpec::validate() const {
    walk(*this, [](const LayerSpec&, std::size_t, const Shape&, const Shape&) {});
}

std::vector<ParameterInfo> NetworkSpec::parameters() const {
    std::vector<ParameterInfo> out;
    walk(*this, [&](const LayerSpec& l, std::size_t, const Shape& in, const Shape&) {
        switch (l.kind) {
            case LayerKind::conv: {
                const auto k = static_cast<std::size_t>(l.kernel);
                out.push_back({l.name + ".weight", {l.out, in[0], k, k}, in[0] * k * k, false});
                out.push_back({l.name + ".bias", {l.out}, in[0] * k * k, true});
                break;
            }
            case LayerKind::residual:
                out.push_back({l.name + ".conv1.weight", {l.out, in[0], 3, 3}, in[0] * 9, false});
                out.push_back({l.name + ".conv1.bias", {l.out}, in[0] * 9, true});
                out.push_back({l.name + ".conv2.weight", {l.out, l.out, 3, 3}, l.out * 9, false});
                out.push_back({l.name + ".conv2.bias", {l.out}, l.out * 9, true});
                break;
            case LayerKind::dense: {
                const std::size_t f = shape_numel(in);
                out.push_back({l.name + ".weight", {l.out, f}, f, false});
                out.push_back({l.name + ".bias", {l.out}, f, true});
                break;
            }
            default:
                break;
        }
    });
    return out;
}

std::size_t NetworkSpec::parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : parameters()) n += shape_numel(p.shape);
    return n;
}

SpecHash NetworkSpec::hash() const {
    const auto digest = digest_sha256(to_json().dump());
    SpecHash h{};
    std::copy(digest.begin(), digest.end(), reinterpret_cast<char*>(h.data()));
    return h;
}

std::vector<std::string> NetworkSpec::activation_slots() const {
    std::vector<std::string> out;
    for (const auto& l : layers) {
        if (l.kind == LayerKind::activation) out.push_back(l.name);
        if (l.kind == LayerKind::residual) {
            out.push_back(l.name + ".act1");
            out.push_back(l.name + ".act2");
        }
    }
    return out;
}

std::string NetworkSpec::first_layer() const {
    for (const auto& l : layers) {
        if (l.kind == LayerKind::conv || l.kind == LayerKind::dense) return l.name;
        if (l.kind == LayerKind::residual) return l.name + ".conv1";
    }
    throw CompositionError("network spec: no parameterized layer");
}

json NetworkSpec::to_json() const {
    json j{{"input", input}, {"classes", classes}, {"layers", json::array()}};
    for (const auto& l : layers) j["layers"].push_back(layer_to_json(l));
    return j;
}

NetworkSpec NetworkSpec::from_json(const json& j) {
    try {
        NetworkSpec s;
        s.input = j.at("input").get<Shape>();
        s.classes = j.at("classes").get<std::size_t>();
        for (const auto& l : j.at("layers")) s.layers.push_back(layer_from_json(l));
        return s;
    } catch (const json::exception& e) {
        throw FormatError(std::string("network spec: ") + e.what());
    }
}

NetworkSpec NetworkSpec::micro_resnet(std::size_t in_channels, std::size_t size, std::size_t classes) {
    NetworkSpec s;
    s.input = {in_channels, size, size};
    s.classes = classes;
    LayerSpec stem = make_layer(LayerKind::conv, "stem", 16);
    s.layers.push_back(stem);
    s.layers.push_back(make_layer(LayerKind::activation, "stem.act"));
    LayerSpec stage1 = make_layer(LayerKind::residual, "stage1", 16);
    stage1.stride = 2;
    LayerSpec stage2 = make_layer(LayerKind::residual, "stage2", 32);
    stage2.stride = 2;
    s.layers.push_back(stage1);
    s.layers.push_back(stage2);
    LayerSpec pool = make_layer(LayerKind::avgpool);
    pool.pool = static_cast<int>(size / 4);
    s.layers.push_back(pool);
    s.layers.push_back(make_layer(LayerKind::dense, "fc", classes));
    LayerSpec head = make_layer(LayerKind::activation, "fc.act");
    head.output = true;
    s.layers.push_back(head);
    return s;
}

NetworkSpec NetworkSpec::mlp(std::size_t features, const std::vector<std::size_t>& hidden, std::size_t classes) {
    NetworkSpec s;
    s.input = {features};
    s.classes = classes;
    for (std::size_t i = 0; i < hidden.size(); ++i) {
        const std::string name = "fc" + std::to_string(i + 1);
        s.layers.push_back(make_layer(LayerKind::dense, name, hidden[i]));
        s.layers.push_back(make_layer(LayerKind::activation, name + ".act"));
    }
    s.layers.push_back(make_layer(LayerKind::dense, "out", classes));
    LayerSpec head = make_layer(LayerKind::activation, "out.act");
    head.output = true;
    s.layers.push_back(head);
    return s;
}

json NeuronConfig::to_json() const {
    return {{"tau", tau},
            {"u_th", u_th},
            {"liaf_activation", neurons::to_string(liaf_activation)},
            {"surrogate", {{"kind", autograd::to_string(surrogate.kind)}, {"width", surrogate.width}}},
            {"detach_reset", detach_reset},
            {"srelu_grad", srelu_grad == autograd::SReluGrad::box ? "box" : "exact"}};
}

NeuronConfig NeuronConfig::from_json(const json& j) {
    NeuronConfig n;
    n.tau = j.value("tau", n.tau);
    n.u_th = j.value("u_th", n.u_th);
    n.liaf_activation = neurons::analog_activation_from_string(j.value("liaf_activation", std::string("relu")));
    n.surrogate = autograd::SurrogateSpec::box(n.u_th);
    if (j.contains("surrogate")) {
        const auto& s = j.at("surrogate");
        n.surrogate.kind = autograd::surrogate_kind_from_string(s.value("kind", std::string("srelu-box")));
        n.surrogate.width = s.value("width", n.u_th);
    }
    n.detach_reset = j.value("detach_reset", true);
    const auto grad = j.value("srelu_grad", std::string("box"));
    if (grad != "box" && grad != "exact") throw ConfigError("srelu_grad must be box or exact");
    n.srelu_grad = grad == "box" ? autograd::SReluGrad::box : autograd::SReluGrad::exact;
    if (!(n.tau > 0.0) || !(n.u_th > 0.0) || !(n.surrogate.width > 0.0)) {
        throw ConfigError("neuron config: tau, u_th and surrogate width must be > 0");
    }
    return n;
}

json CheckpointMeta::to_json() const {
    json j{{"regime", to_string(regime)}, {"T", T},         {"epoch", epoch},          {"seed", seed},
           {"alpha", alpha},              {"srelu_step", srelu_step}, {"neuron", neuron.to_json()}};
    if (spec) j["spec"] = spec->to_json();
    return j;
}

CheckpointMeta CheckpointMeta::from_json(const json& j) {
    CheckpointMeta m;
    m.regime = regime_from_string(j.at("regime").get<std::string>());
    m.T = j.at("T").get<int>();
    m.epoch = j.at("epoch").get<int>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.alpha = j.at("alpha").get<double>();
    m.srelu_step = j.value("srelu_step", false);
    if (j.contains("neuron")) m.neuron = NeuronConfig::from_json(j.at("neuron"));
    if (j.contains("spec")) m.spec = NetworkSpec::from_json(j.at("spec"));
    return m;
}

const Tensor& Checkpoint::at(const std::string& name) const {
    auto it = params.find(name);
    if (it == params.end()) {
        std::string names;
        for (const auto& [k, v] : params) names += (names.empty() ? "" : ", ") + k;
        throw NameError("checkpoint has no parameter '" + name + "' (available: " + names + ")");
    }
    return it->second;
}

void Checkpoint::commit() {
    for (auto& [name, t] : params) {
        for (auto& v : t.data()) v = static_cast<double>(static_cast<float>(v));
    }
}

bool Checkpoint::committed() const {
    for (const auto& [name, t] : params) {
        for (double v : t.data()) {
            if (static_cast<double>(static_cast<float>(v)) != v) return false;
        }
    }
    return true;
}

Checkpoint build(const NetworkSpec& spec, Rng& rng) {
    Checkpoint ckpt;
    for (const auto& info : spec.parameters()) {
        ckpt.params[info.name] = info.is_bias ? Tensor(info.shape) : kaiming_init(rng, info.shape, info.fan_in);
    }
    ckpt.commit();
    ckpt.spec_hash = spec.hash();
    ckpt.meta.seed = rng.seed();
    ckpt.meta.spec = spec;
    return ckpt;
}

neurons::SReluParams ForwardOptions::srelu_params() const {
    return srelu_step ? neurons::SReluParams::step(neuron.u_th) : neurons::SReluParams::from_alpha(alpha, neuron.u_th);
}

ForwardTrace record_forward(Tape& tape, const Checkpoint& ckpt, const NetworkSpec& spec, const Tensor& input,
                            const ForwardOptions& opts, bool trainable) {
    const std::size_t in_rank = spec.input.size();
    const bool sequence = input.rank() == in_rank + 2;
    if (input.rank() != in_rank + 1 && !sequence) {
        throw DimensionError("forward: input " + shape_to_string(input.shape()) + " is neither [N," +
                             shape_to_string(spec.input) + "] nor [T,N," + shape_to_string(spec.input) + "]");
    }
    const std::size_t skip = sequence ? 2 : 1;
    if (!std::equal(spec.input.begin(), spec.input.end(), input.shape().begin() + static_cast<long>(skip))) {
        throw DimensionError("forward: input " + shape_to_string(input.shape()) + " does not match spec input " +
                             shape_to_string(spec.input));
    }
    std::size_t steps = 1;
    if (is_spiking(opts.regime)) {
        if (opts.T < 1 && !sequence) throw ContractError("forward: T must be >= 1");
        steps = opts.T >= 1 ? static_cast<std::size_t>(opts.T) : input.dim(0);
        if (sequence && input.dim(0) != steps) {
            throw DimensionError("forward: sequence has " + std::to_string(input.dim(0)) + " frames but T = " +
                                 std::to_string(steps));
        }
    } else if (sequence) {
        throw DimensionError("forward: " + to_string(opts.regime) + " regime needs static input [N,...]");
    }

    ForwardTrace trace;
    Recorder rec(tape, ckpt, spec, opts, trainable, trace);
    Var static_in = sequence ? Var{} : tape.constant(input);
    for (std::size_t t = 0; t < steps; ++t) {
        Var x = sequence ? tape.constant(slice_step(input, t)) : static_in;
        trace.steps.push_back(rec.run_step(x));
    }
    trace.rate = autograd::mean_of(tape, trace.steps);
    return trace;
}

Tensor forward(const Checkpoint& ckpt, const NetworkSpec& spec, const Tensor& input, const ForwardOptions& opts) {
    Tape tape;
    auto trace = record_forward(tape, ckpt, spec, input, opts);
    return tape.value(autograd::stack(tape, trace.steps));
}

std::map<std::string, Tensor> feature_maps(const Checkpoint& ckpt, const NetworkSpec& spec, const Tensor& input,
                                           const ForwardOptions& opts, const std::vector<std::string>& slots) {
    auto o = opts;
    o.keep_features = true;
    Tape tape;
    auto trace = record_forward(tape, ckpt, spec, input, o);
    std::map<std::string, Tensor> out;
    for (const auto& slot : slots) {
        auto it = trace.features.find(slot);
        if (it == trace.features.end()) {
            std::string names;
            for (const auto& s : spec.activation_slots()) names += (names.empty() ? "" : ", ") + s;
            throw NameError("feature_maps: no activation slot '" + slot + "' (available: " + names + ")");
        }
        out[slot] = tape.value(autograd::mean_of(tape, it->second));
    }
    return out;
}

void write_tensor_record(std::string& out, const std::string& name, const Tensor& t) {
    io::put_string(out, name);
    if (t.rank() > 255) throw FormatError("tensor rank too large");
    io::put<std::uint8_t>(out, static_cast<std::uint8_t>(t.rank()));
    for (auto d : t.shape()) io::put<std::uint32_t>(out, static_cast<std::uint32_t>(d));
    for (double v : t.data()) io::put<float>(out, static_cast<float>(v));
}

namespace {

std::pair<std::string, Tensor> read_tensor_record(io::Reader& in) {
    auto name = in.get_string();
    const auto rank = in.get<std::uint8_t>();
    Shape shape;
    for (int i = 0; i < rank; ++i) {
        const auto d = in.get<std::uint32_t>();
        if (d == 0) throw CorruptionError("tensor record '" + name + "' has a zero dimension");
        shape.push_back(d);
    }
    const std::size_t n = shape_numel(shape);
    if (n > in.remaining() / 4) throw CorruptionError("tensor record '" + name + "' is truncated");
    std::vector<double> values(n);
    for (auto& v : values) v = static_cast<double>(in.get<float>());
    return {std::move(name), Tensor(std::move(shape), std::move(values))};
}

void check_magic(io::Reader& in, const char (&magic)[4], const std::string& what) {
    const auto m = in.take(4);
    if (std::memcmp(m.data(), magic, 4) != 0) throw FormatError(what + ": bad magic");
    const auto version = in.get<std::uint16_t>();
    if (version != kCheckpointVersion) {
        throw FormatError(what + ": unsupported format version " + std::to_string(version));
    }
}

}  // namespace

void save(const Checkpoint& ckpt, const std::filesystem::path& path) {
    std::string out(kCheckpointMagic, 4);
    io::put<std::uint16_t>(out, kCheckpointVersion);
    out.append(reinterpret_cast<const char*>(ckpt.spec_hash.data()), ckpt.spec_hash.size());
    io::put_string(out, ckpt.meta.to_json().dump());
    io::put<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.params.size()));
    for (const auto& [name, t] : ckpt.params) write_tensor_record(out, name, t);
    io::write_file_atomic(path, out);
}

Checkpoint load(const std::filesystem::path& path) {
    const std::string bytes = io::read_file(path);
    const std::string what = "checkpoint '" + path.string() + "'";
    io::Reader in(bytes, what);
    check_magic(in, kCheckpointMagic, what);
    Checkpoint ckpt;
    const auto hash = in.take(32);
    std::copy(hash.begin(), hash.end(), reinterpret_cast<char*>(ckpt.spec_hash.data()));
    try {
        ckpt.meta = CheckpointMeta::from_json(json::parse(in.get_string()));
    } catch (const json::exception& e) {
        throw FormatError(what + ": bad metadata: " + e.what());
    }
    const auto count = in.get<std::uint32_t>();
    for (std::uint32_t i = 0; i < count; ++i) {
        auto [name, t] = read_tensor_record(in);
        if (!ckpt.params.emplace(name, std::move(t)).second) {
            throw CorruptionError(what + ": duplicate parameter '" + name + "'");
        }
    }
    if (in.remaining() != 0) throw CorruptionError(what + ": trailing bytes");
    return ckpt;
}

void save_tensor(const Tensor& t, const std::filesystem::path& path) {
    std::string out(kTensorMagic, 4);
    io::put<std::uint16_t>(out, kCheckpointVersion);
    write_tensor_record(out, "data", t);
    io::write_file_atomic(path, out);
}

Tensor load_tensor(const std::filesystem::path& path) {
    const std::string bytes = io::read_file(path);
    const std::string what = "tensor file '" + path.string() + "'";
    io::Reader in(bytes, what);
    check_magic(in, kTensorMagic, what);
    auto [name, t] = read_tensor_record(in);
    if (in.remaining() != 0) throw CorruptionError(what + ": trailing bytes");
    return t;
}

}  // namespace snnf::model
