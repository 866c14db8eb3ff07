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

#include <cstddef>
#include <limits>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "snnf/neurons.hpp"
#include "snnf/tensor.hpp"

namespace snnf::autograd {

/// Handle to a node on a Tape.
struct Var {
    static constexpr std::size_t npos = std::numeric_limits<std::size_t>::max();
    std::size_t id = npos;

    bool valid() const noexcept { return id != npos; }
};

/// A differentiable operation. forward() computes the output value from the
/// input values; backward() maps the upstream gradient of the output to one
/// gradient per input (an empty Tensor means "no contribution").
class Primitive {
public:
    virtual ~Primitive() = default;
    virtual std::string_view name() const = 0;
    virtual Tensor forward(std::span<const Tensor* const> inputs) const = 0;
    virtual std::vector<Tensor> backward(std::span<const Tensor* const> inputs, const Tensor& output,
                                         const Tensor& upstream) const = 0;
    /// True when backward substitutes a surrogate for a non-differentiable forward.
    virtual bool surrogate() const { return false; }
};

using PrimitivePtr = std::shared_ptr<const Primitive>;

class Gradients {
public:
    const Tensor& operator[](Var v) const;
    bool has(Var v) const;
    /// Gradients of named parameters; parameters the loss does not reach get zeros.
    const std::map<std::string, Tensor>& parameters() const noexcept { return by_name_; }
    const Tensor& parameter(const std::string& name) const;

private:
    friend class Tape;
    std::vector<Tensor> by_node_;
    std::map<std::string, Tensor> by_name_;
};

/// Records a forward computation so it can be differentiated in reverse.
/// Nodes are appended in evaluation order, which is a topological order.
class Tape {
public:
    /// Trainable leaf. Names must be unique on a tape.
    Var parameter(const std::string& name, Tensor value);
    /// Leaf that never receives gradient.
    Var constant(Tensor value);
    /// Appends op(inputs). Inputs must already be on this tape.
    Var record(PrimitivePtr op, std::vector<Var> inputs);

    const Tensor& value(Var v) const;
    std::size_t size() const noexcept { return nodes_.size(); }
    bool requires_grad(Var v) const;
    /// Whether any surrogate primitive lies on a path from a parameter.
    bool surrogate_in_path() const noexcept { return surrogate_in_path_; }
    std::vector<std::string> parameter_names() const;

    /// Reverse sweep from a scalar loss. Each node is visited at most once.
    Gradients backward(Var loss) const;
    /// Zero gradients for every parameter (no loss recorded).
    Gradients zero_gradients() const;

private:
    struct Node {
        PrimitivePtr op;
        std::vector<Var> inputs;
        Tensor value;
        std::string name;
        bool is_parameter = false;
        bool requires_grad = false;
    };

    const Node& node(Var v) const;

    std::vector<Node> nodes_;
    bool surrogate_in_path_ = false;
};

/// Derivative used in place of the Heaviside step.
struct SurrogateSpec {
    enum class Kind {
        rectangular_window,  ///< 1/(2a) on |v| < a
        srelu_box,           ///< 1 on |v| <= a; with a = u_th this is the SReLU box on [0, 2 u_th]
    };
    Kind kind = Kind::srelu_box;
    double width = 0.5;
    double u_th = 0.5;

    /// The default LIF surrogate: srelu box with width u_th.
    static SurrogateSpec box(double u_th) { return {Kind::srelu_box, u_th, u_th}; }

    /// v = u - u_th.
    double derivative(double v) const;
};

std::string to_string(SurrogateSpec::Kind kind);
SurrogateSpec::Kind surrogate_kind_from_string(const std::string& name);

enum class SReluGrad {
    box,    ///< fixed derivative, 1 on [0, 2 u_th]
    exact,  ///< slope of the current ramp (for gradient checks)
};

// Primitive constructors. Each records one node and returns its handle.

Var add(Tape& tape, Var a, Var b);
Var mul(Tape& tape, Var a, Var b);
Var scale(Tape& tape, Var a, double factor);
Var shift(Tape& tape, Var a, double offset);
Var sum(Tape& tape, Var a);
Var sum_squares(Tape& tape, Var a);
Var relu(Tape& tape, Var a);
Var tanh(Tape& tape, Var a);

Var conv2d(Tape& tape, Var input, Var kernel, Var bias, int stride, int pad, bool floor_mode = false);
Var dense(Tape& tape, Var input, Var weight, Var bias);
Var avgpool2d(Tape& tape, Var input, int k);
/// Zero-pads axis 1 up to channels.
Var pad_channels(Tape& tape, Var input, std::size_t channels);

/// Forward: 1 if v > 0 else 0. Backward: upstream * spec.derivative(v).
Var spike_step_with_surrogate(Tape& tape, Var u_minus_th, const SurrogateSpec& spec);
Var srelu(Tape& tape, Var u, const neurons::SReluParams& params, SReluGrad grad);

/// u' = u_prev * decay * (1 - o_prev) + x. With detach_reset the factor
/// (1 - o_prev) is a constant for differentiation.
Var lif_membrane(Tape& tape, Var u_prev, Var o_prev, Var x, double decay, bool detach_reset = true);
/// Binary fire mask [u > u_th] with no gradient.
Var fire_mask(Tape& tape, Var u, double u_th);

/// Element-wise mean of equally shaped nodes (rate decoding over time).
Var mean_of(Tape& tape, const std::vector<Var>& items);
/// Stacks equally shaped nodes along a new axis 0.
Var stack(Tape& tape, const std::vector<Var>& items);

/// Mean over the batch of -log softmax(logits)[label].
Var softmax_cross_entropy(Tape& tape, Var logits, std::vector<std::size_t> labels);
/// Mean over the batch of sum_c (x - onehot)^2.
Var mse_onehot(Tape& tape, Var outputs, std::vector<std::size_t> labels);

}  // namespace snnf::autograd
