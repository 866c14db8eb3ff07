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

#include "snnf/autograd.hpp"

#include <algorithm>
#include <cmath>

#include "snnf/error.hpp"

namespace snnf::autograd {

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, std::string_view op) {
    if (a.shape() != b.shape()) {
        throw DimensionError(std::string(op) + ": operand shapes " + shape_to_string(a.shape()) + " and " +
                             shape_to_string(b.shape()) + " differ");
    }
}

void accumulate(Tensor& into, Tensor&& add) {
    if (into.empty()) {
        into = std::move(add);
        return;
    }
    auto d = into.data();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += add[i];
}

template <typename Fn>
Tensor map_values(const Tensor& in, Fn fn) {
    Tensor out(in.shape());
    for (std::size_t i = 0; i < in.size(); ++i) out[i] = fn(in[i]);
    return out;
}

// Element-wise op of one input whose local derivative depends on the input value.
template <typename Fwd, typename Bwd>
class UnaryOp final : public Primitive {
public:
    UnaryOp(std::string_view name, Fwd fwd, Bwd bwd, bool surrogate = false)
        : name_(name), fwd_(fwd), bwd_(bwd), surrogate_(surrogate) {}

    std::string_view name() const override { return name_; }
    bool surrogate() const override { return surrogate_; }

    Tensor forward(std::span<const Tensor* const> in) const override { return map_values(*in[0], fwd_); }

    std::vector<Tensor> backward(std::span<const Tensor* const> in, const Tensor&,
                                 const Tensor& up) const override {
        Tensor g(up.shape());
        for (std::size_t i = 0; i < g.size(); ++i) g[i] = up[i] * bwd_((*in[0])[i]);
        return {std::move(g)};
    }

private:
    std::string_view name_;
    Fwd fwd_;
    Bwd bwd_;
    bool surrogate_;
};

template <typename Fwd, typename Bwd>
Var unary(Tape& tape, Var a, std::string_view name, Fwd fwd, Bwd bwd, bool surrogate = false) {
    return tape.record(std::make_shared<UnaryOp<Fwd, Bwd>>(name, fwd, bwd, surrogate), {a});
}

class AddOp final : public Primitive {
public:
    std::string_view name() const override { return "add"; }
    Tensor forward(std::span<const Tensor* const> in) const override {
        require_same_shape(*in[0], *in[1], "add");
        Tensor out = *in[0];
        for (std::size_t i = 0; i < out.size(); ++i) out[i] += (*in[1])[i];
        return out;
    }
    std::vector<Tensor> backward(std::span<const Tensor* const>, const Tensor&, const Tensor& up) const override {
        return {up, up};
    }
};

class MulOp final : public Primitive {
public:
    std::string_view name() const override { return "mul"; }
    Tensor forward(std::span<const Tensor* const> in) const override {
        require_same_shape(*in[0], *in[1], "mul");
        Tensor out = *in[0];
        for (std::size_t i = 0; i < out.size(); ++i) out[i] *= (*in[1])[i];
        return out;
    }
    std::vector<Tensor> backward(std::span<const Tensor* const> in, const Tensor&, const Tensor& up) const override {
        Tensor ga(up.shape()), gb(up.shape());
        for (std::size_t i = 0; i < up.size(); ++i) {
            ga[i] = up[i] * (*in[1])[i];
            gb[i] = up[i] * (*in[0])[i];
        }
        return {std::move(ga), std::move(gb)};
    }
};

class SumOp final : public Primitive {
public:
    explicit SumOp(bool squares) : squares_(squares) {}
    std::string_view name() const override { return squares_ ? "sum_squares" : "sum"; }
    Tensor forward(std::span<const Tensor* const> in) const override {
        double acc = 0.0;
        for (double v : in[0]->data()) acc += squares_ ? v * v : v;
        return Tensor::scalar(acc);
    }
    std::vector<Tensor> backward(std::span<const Tensor* const> in, const Tensor&, const Tensor& up) const override {
        Tensor g(in[0]->shape(), up[0]);
        if (squares_) {
            for (std::size_t i = 0; i < g.size(); ++i) g[i] *= 2.0 * (*in[0])[i];
        }
        return {std::move(g)};
    }

private:
    bool squares_;
};

class Conv2dOp final : public Primitive {
public:
    Conv2dOp(int stride, int pad, bool floor_mode, bool need_input_grad)
        : stride_(stride), pad_(pad), floor_(floor_mode), need_input_grad_(need_input_grad) {}
    std::string_view name() const override { return "conv2d"; }
    Tensor forward(std::span<const Tensor* const> in) const override {
        Tensor out = conv2d_forward(*in[0], *in[1], stride_, pad_, floor_);
        const Tensor& b = *in[2];
        if (b.size() != out.dim(1)) throw DimensionError("conv2d: bias length does not match output channels");
        const std::size_t plane = out.dim(2) * out.dim(3);
        auto d = out.data();
        for (std::size_t i = 0; i < d.size(); ++i) d[i] += b[(i / plane) % b.size()];
        return out;
    }
    std::vector<Tensor> backward(std::span<const Tensor* const> in, const Tensor&, const Tensor& up) const override {
        Tensor gb(in[2]->shape());
        const std::size_t c = up.dim(1);
        const std::size_t inner = up.size() / (up.dim(0) * c);
        for (std::size_t i = 0; i < up.size(); ++i) gb[(i / inner) % c] += up[i];
        Tensor gx = need_input_grad_ ? conv2d_backward_input(up, *in[1], in[0]->shape(), stride_, pad_, floor_)
                                     : Tensor();
        return {std::move(gx),
                conv2d_backward_kernel(up, *in[0], in[1]->shape(), stride_, pad_, floor_), std::move(gb)};
    }

private:
    int stride_;
    int pad_;
    bool floor_;
    bool need_input_grad_;
};

class DenseOp final : public Primitive {
public:
    std::string_view name() const override { return "dense"; }
    Tensor forward(std::span<const Tensor* const> in) const override {
        return dense_forward(*in[0], *in[1], *in[2]);
    }
    std::vector<Tensor> backward(std::span<const Tensor* const> in, const Tensor&, const Tensor& up) const override {
        const Tensor& x = *in[0];
        const Tensor& w = *in[1];
        const std::size_t n = x.dim(0), f = x.size() / n, g = w.dim(0);
        Tensor gx(x.shape()), gw(w.shape()), gb(in[2]->shape());
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < g; ++j) {
                const double u = up[i * g + j];
                if (u == 0.0) continue;
                gb[j] += u;
                const double* xrow = x.data().data() + i * f;
                const double* wrow = w.data().data() + j * f;
                double* gxrow = gx.data().data() + i * f;
                double* gwrow = gw.data().data() + j * f;
                for (std::size_t k = 0; k < f; ++k) {
                    gxrow[k] += u * wrow[k];
                    gwrow[k] += u * xrow[k];
                }
            }
        }
        return {std::move(gx), std::move(gw), std::move(gb)};
    }
};

class AvgPoolOp final : public Primitive {
public:
    explicit AvgPoolOp(int k) : k_(k) {}
    std::string_view name() const override { return "avgpool2d"; }
    Tensor forward(std::span<const Tensor* const> in) const override { return snnf::avgpool2d(*in[0], k_); }
    std::vector<Tensor> backward(std::span<const Tensor* const> in, const Tensor&, const Tensor& up) const override {
        return {avgpool2d_backward(up, in[0]->shape(), k_)};
    }

private:
    int k_;
};

class PadChannelsOp final : public Primitive {
public:
    explicit PadChannelsOp(std::size_t channels) : channels_(channels) {}
    std::string_view name() const override { return "pad_channels"; }
    Tensor forward(std::span<const Tensor* const> in) const override {
        const Tensor& x = *in[0];
        if (x.rank() != 4 || x.dim(1) > channels_) {
            throw DimensionError("pad_channels: cannot pad " + shape_to_string(x.shape()) + " to " +
                                 std::to_string(channels_) + " channels");
        }
        const auto& s = x.shape();
        Tensor out(Shape{s[0], channels_, s[2], s[3]});
        const std::size_t plane = s[2] * s[3];
        for (std::size_t n = 0; n < s[0]; ++n) {
            std::copy_n(x.data().data() + n * s[1] * plane, s[1] * plane,
                        out.data().data() + n * channels_ * plane);
        }
        return out;
    }
    std::vector<Tensor> backward(std::span<const Tensor* const> in, const Tensor&, const Tensor& up) const override {
        const auto& s = in[0]->shape();
        Tensor g(s);
        const std::size_t plane = s[2] * s[3];
        for (std::size_t n = 0; n < s[0]; ++n) {
            std::copy_n(up.data().data() + n * channels_ * plane, s[1] * plane, g.data().data() + n * s[1] * plane);
        }
        return {std::move(g)};
    }

private:
    std::size_t channels_;
};

class LifMembraneOp final : public Primitive {
public:
    LifMembraneOp(double decay, bool detach) : decay_(decay), detach_(detach) {}
    std::string_view name() const override { return "lif_membrane"; }
    Tensor forward(std::span<const Tensor* const> in) const override {
        const Tensor& u = *in[0];
        const Tensor& o = *in[1];
        const Tensor& x = *in[2];
        require_same_shape(u, x, "lif_membrane");
        require_same_shape(o, x, "lif_membrane");
        Tensor out(x.shape());
        for (std::size_t i = 0; i < x.size(); ++i) out[i] = u[i] * decay_ * (1.0 - o[i]) + x[i];
        return out;
    }
    std::vector<Tensor> backward(std::span<const Tensor* const> in, const Tensor&, const Tensor& up) const override {
        const Tensor& u = *in[0];
        const Tensor& o = *in[1];
        Tensor gu(up.shape());
        for (std::size_t i = 0; i < up.size(); ++i) gu[i] = up[i] * decay_ * (1.0 - o[i]);
        Tensor go;
        if (!detach_) {
            go = Tensor(up.shape());
            for (std::size_t i = 0; i < up.size(); ++i) go[i] = -up[i] * decay_ * u[i];
        }
        return {std::move(gu), std::move(go), up};
    }

private:
    double decay_;
    bool detach_;
};

class MeanOfOp final : public Primitive {
public:
    std::string_view name() const override { return "mean_of"; }
    Tensor forward(std::span<const Tensor* const> in) const override {
        Tensor out = *in[0];
        for (std::size_t k = 1; k < in.size(); ++k) {
            require_same_shape(out, *in[k], "mean_of");
            for (std::size_t i = 0; i < out.size(); ++i) out[i] += (*in[k])[i];
        }
        for (auto& v : out.data()) v /= static_cast<double>(in.size());
        return out;
    }
    std::vector<Tensor> backward(std::span<const Tensor* const> in, const Tensor&, const Tensor& up) const override {
        Tensor g = up;
        for (auto& v : g.data()) v /= static_cast<double>(in.size());
        return std::vector<Tensor>(in.size(), g);
    }
};

class StackOp final : public Primitive {
public:
    std::string_view name() const override { return "stack"; }
    Tensor forward(std::span<const Tensor* const> in) const override {
        Shape s{in.size()};
        s.insert(s.end(), in[0]->shape().begin(), in[0]->shape().end());
        Tensor out(s);
        const std::size_t inner = in[0]->size();
        for (std::size_t k = 0; k < in.size(); ++k) {
            require_same_shape(*in[0], *in[k], "stack");
            std::copy_n(in[k]->data().data(), inner, out.data().data() + k * inner);
        }
        return out;
    }
    std::vector<Tensor> backward(std::span<const Tensor* const> in, const Tensor&, const Tensor& up) const override {
        std::vector<Tensor> grads;
        const std::size_t inner = in[0]->size();
        for (std::size_t k = 0; k < in.size(); ++k) {
            std::vector<double> part(up.data().begin() + static_cast<long>(k * inner),
                                     up.data().begin() + static_cast<long>((k + 1) * inner));
            grads.emplace_back(in[k]->shape(), std::move(part));
        }
        return grads;
    }
};

class CrossEntropyOp final : public Primitive {
public:
    explicit CrossEntropyOp(std::vector<std::size_t> labels) : labels_(std::move(labels)) {}
    std::string_view name() const override { return "softmax_cross_entropy"; }
    Tensor forward(std::span<const Tensor* const> in) const override {
        const Tensor& z = *in[0];
        check(z);
        const std::size_t n = z.dim(0), c = z.dim(1);
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double* row = z.data().data() + i * c;
            const double mx = *std::max_element(row, row + c);
            double s = 0.0;
            for (std::size_t j = 0; j < c; ++j) s += std::exp(row[j] - mx);
            total += std::log(s) + mx - row[labels_[i]];
        }
        return Tensor::scalar(total / static_cast<double>(n));
    }
    std::vector<Tensor> backward(std::span<const Tensor* const> in, const Tensor&, const Tensor& up) const override {
        const Tensor& z = *in[0];
        const std::size_t n = z.dim(0), c = z.dim(1);
        Tensor g(z.shape());
        for (std::size_t i = 0; i < n; ++i) {
            const double* row = z.data().data() + i * c;
            const double mx = *std::max_element(row, row + c);
            double s = 0.0;
            for (std::size_t j = 0; j < c; ++j) s += std::exp(row[j] - mx);
            for (std::size_t j = 0; j < c; ++j) {
                const double p = std::exp(row[j] - mx) / s;
                g[i * c + j] = up[0] * (p - (j == labels_[i] ? 1.0 : 0.0)) / static_cast<double>(n);
            }
        }
        return {std::move(g)};
    }

private:
    void check(const Tensor& z) const {
        if (z.rank() != 2 || z.dim(0) != labels_.size()) {
            throw DimensionError("softmax_cross_entropy: logits " + shape_to_string(z.shape()) +
                                 " do not match " + std::to_string(labels_.size()) + " labels");
        }
        for (auto l : labels_) {
            if (l >= z.dim(1)) throw DimensionError("softmax_cross_entropy: label out of range");
        }
    }

    std::vector<std::size_t> labels_;
};

class MseOp final : public Primitive {
public:
    explicit MseOp(std::vector<std::size_t> labels) : labels_(std::move(labels)) {}
    std::string_view name() const override { return "mse_onehot"; }
    Tensor forward(std::span<const Tensor* const> in) const override {
        const Tensor& z = *in[0];
        if (z.rank() != 2 || z.dim(0) != labels_.size()) {
            throw DimensionError("mse_onehot: outputs " + shape_to_string(z.shape()) + " do not match labels");
        }
        const std::size_t n = z.dim(0), c = z.dim(1);
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < c; ++j) {
                const double d = z[i * c + j] - (j == labels_[i] ? 1.0 : 0.0);
                total += d * d;
            }
        }
        return Tensor::scalar(total / static_cast<double>(n));
    }
    std::vector<Tensor> backward(std::span<const Tensor* const> in, const Tensor&, const Tensor& up) const override {
        const Tensor& z = *in[0];
        const std::size_t n = z.dim(0), c = z.dim(1);
        Tensor g(z.shape());
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < c; ++j) {
                const double d = z[i * c + j] - (j == labels_[i] ? 1.0 : 0.0);
                g[i * c + j] = up[0] * 2.0 * d / static_cast<double>(n);
            }
        }
        return {std::move(g)};
    }

private:
    std::vector<std::size_t> labels_;
};

}  // namespace

const Tensor& Gradients::operator[](Var v) const {
    if (!has(v)) throw ContractError("gradients: no gradient stored for node " + std::to_string(v.id));
    return by_node_[v.id];
}

bool Gradients::has(Var v) const { return v.valid() && v.id < by_node_.size() && !by_node_[v.id].empty(); }

const Tensor& Gradients::parameter(const std::string& name) const {
    auto it = by_name_.find(name);
    if (it == by_name_.end()) throw NameError("gradients: unknown parameter '" + name + "'");
    return it->second;
}

Var Tape::parameter(const std::string& name, Tensor value) {
    for (const auto& n : nodes_) {
        if (n.is_parameter && n.name == name) throw NameError("tape: duplicate parameter '" + name + "'");
    }
    nodes_.push_back(Node{nullptr, {}, std::move(value), name, true, true});
    return Var{nodes_.size() - 1};
}

Var Tape::constant(Tensor value) {
    nodes_.push_back(Node{nullptr, {}, std::move(value), {}, false, false});
    return Var{nodes_.size() - 1};
}

Var Tape::record(PrimitivePtr op, std::vector<Var> inputs) {
    std::vector<const Tensor*> values;
    values.reserve(inputs.size());
    bool grad = false;
    for (auto v : inputs) {
        values.push_back(&node(v).value);
        grad = grad || node(v).requires_grad;
    }
    Tensor out = op->forward(values);
    if (grad && op->surrogate()) surrogate_in_path_ = true;
    nodes_.push_back(Node{std::move(op), std::move(inputs), std::move(out), {}, false, grad});
    return Var{nodes_.size() - 1};
}

const Tape::Node& Tape::node(Var v) const {
    if (!v.valid() || v.id >= nodes_.size()) throw ContractError("tape: node handle not on this tape");
    return nodes_[v.id];
}

const Tensor& Tape::value(Var v) const { return node(v).value; }

bool Tape::requires_grad(Var v) const { return node(v).requires_grad; }

std::vector<std::string> Tape::parameter_names() const {
    std::vector<std::string> names;
    for (const auto& n : nodes_) {
        if (n.is_parameter) names.push_back(n.name);
    }
    return names;
}

Gradients Tape::zero_gradients() const {
    Gradients g;
    g.by_node_.resize(nodes_.size());
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
        if (nodes_[i].is_parameter) {
            g.by_node_[i] = Tensor(nodes_[i].value.shape());
            g.by_name_[nodes_[i].name] = g.by_node_[i];
        }
    }
    return g;
}

Gradients Tape::backward(Var loss) const {
    const Node& root = node(loss);
    if (root.value.size() != 1) {
        throw ContractError("backward: loss must be a scalar, got shape " + shape_to_string(root.value.shape()));
    }
    Gradients g;
    g.by_node_.resize(nodes_.size());
    if (root.requires_grad) g.by_node_[loss.id] = Tensor(root.value.shape(), 1.0);

    std::vector<const Tensor*> values;
    for (std::size_t i = loss.id + 1; i-- > 0;) {
        const Node& n = nodes_[i];
        if (!n.op || !n.requires_grad || g.by_node_[i].empty()) continue;
        values.clear();
        for (auto v : n.inputs) values.push_back(&nodes_[v.id].value);
        auto local = n.op->backward(values, n.value, g.by_node_[i]);
        for (std::size_t k = 0; k < n.inputs.size(); ++k) {
            const auto id = n.inputs[k].id;
            if (!nodes_[id].requires_grad || local[k].empty()) continue;
            accumulate(g.by_node_[id], std::move(local[k]));
        }
        g.by_node_[i] = Tensor();  // intermediates are released once propagated
    }
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
        if (!nodes_[i].is_parameter) continue;
        if (g.by_node_[i].empty()) g.by_node_[i] = Tensor(nodes_[i].value.shape());
        g.by_name_[nodes_[i].name] = g.by_node_[i];
    }
    return g;
}

double SurrogateSpec::derivative(double v) const {
    switch (kind) {
        case Kind::rectangular_window:
            return std::abs(v) < width ? 1.0 / (2.0 * width) : 0.0;
        case Kind::srelu_box:
            return std::abs(v) <= width ? 1.0 : 0.0;
    }
    return 0.0;
}

std::string to_string(SurrogateSpec::Kind kind) {
    return kind == SurrogateSpec::Kind::rectangular_window ? "rectangular-window" : "srelu-box";
}

SurrogateSpec::Kind surrogate_kind_from_string(const std::string& name) {
    if (name == "rectangular-window") return SurrogateSpec::Kind::rectangular_window;
    if (name == "srelu-box") return SurrogateSpec::Kind::srelu_box;
    throw ContractError("unknown surrogate kind '" + name + "'");
}

Var add(Tape& tape, Var a, Var b) { return tape.record(std::make_shared<AddOp>(), {a, b}); }
Var mul(Tape& tape, Var a, Var b) { return tape.record(std::make_shared<MulOp>(), {a, b}); }

Var scale(Tape& tape, Var a, double factor) {
    return unary(tape, a, "scale", [factor](double x) { return x * factor; }, [factor](double) { return factor; });
}

Var shift(Tape& tape, Var a, double offset) {
    return unary(tape, a, "shift", [offset](double x) { return x + offset; }, [](double) { return 1.0; });
}

Var sum(Tape& tape, Var a) { return tape.record(std::make_shared<SumOp>(false), {a}); }
Var sum_squares(Tape& tape, Var a) { return tape.record(std::make_shared<SumOp>(true), {a}); }

Var relu(Tape& tape, Var a) {
    return unary(tape, a, "relu", [](double x) { return x > 0.0 ? x : 0.0; },
                 [](double x) { return x > 0.0 ? 1.0 : 0.0; });
}

Var tanh(Tape& tape, Var a) {
    return unary(tape, a, "tanh", [](double x) { return std::tanh(x); },
                 [](double x) {
                     const double t = std::tanh(x);
                     return 1.0 - t * t;
                 });
}

Var conv2d(Tape& tape, Var input, Var kernel, Var bias, int stride, int pad, bool floor_mode) {
    return tape.record(std::make_shared<Conv2dOp>(stride, pad, floor_mode, tape.requires_grad(input)),
                       {input, kernel, bias});
}

Var dense(Tape& tape, Var input, Var weight, Var bias) {
    return tape.record(std::make_shared<DenseOp>(), {input, weight, bias});
}

Var avgpool2d(Tape& tape, Var input, int k) { return tape.record(std::make_shared<AvgPoolOp>(k), {input}); }

Var pad_channels(Tape& tape, Var input, std::size_t channels) {
    if (tape.value(input).dim(1) == channels) return input;
    return tape.record(std::make_shared<PadChannelsOp>(channels), {input});
}

Var spike_step_with_surrogate(Tape& tape, Var u_minus_th, const SurrogateSpec& spec) {
    return unary(
        tape, u_minus_th, "spike_step", [](double v) { return v > 0.0 ? 1.0 : 0.0; },
        [spec](double v) { return spec.derivative(v); }, true);
}

Var srelu(Tape& tape, Var u, const neurons::SReluParams& params, SReluGrad grad) {
    if (grad == SReluGrad::box) {
        return unary(
            tape, u, "srelu", [params](double x) { return params(x); },
            [params](double x) { return params.box_derivative(x); },
            params.is_step() || params.alpha() != 0.0 || params.u_th() != 0.5);
    }
    return unary(
        tape, u, "srelu", [params](double x) { return params(x); },
        [params](double x) { return params.exact_derivative(x); }, params.is_step());
}

Var lif_membrane(Tape& tape, Var u_prev, Var o_prev, Var x, double decay, bool detach_reset) {
    return tape.record(std::make_shared<LifMembraneOp>(decay, detach_reset), {u_prev, o_prev, x});
}

Var fire_mask(Tape& tape, Var u, double u_th) {
    return tape.constant(map_values(tape.value(u), [u_th](double x) { return neurons::fires(x, u_th); }));
}

Var mean_of(Tape& tape, const std::vector<Var>& items) {
    if (items.empty()) throw ContractError("mean_of: no inputs");
    if (items.size() == 1) return items.front();
    return tape.record(std::make_shared<MeanOfOp>(), items);
}

Var stack(Tape& tape, const std::vector<Var>& items) {
    if (items.empty()) throw ContractError("stack: no inputs");
    return tape.record(std::make_shared<StackOp>(), items);
}

Var softmax_cross_entropy(Tape& tape, Var logits, std::vector<std::size_t> labels) {
    return tape.record(std::make_shared<CrossEntropyOp>(std::move(labels)), {logits});
}

Var mse_onehot(Tape& tape, Var outputs, std::vector<std::size_t> labels) {
    return tape.record(std::make_shared<MseOp>(std::move(labels)), {outputs});
}

}  // namespace snnf::autograd
