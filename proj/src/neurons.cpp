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

#include "snnf/neurons.hpp"

#include <algorithm>
#include <cmath>

#include "snnf/error.hpp"

namespace snnf::neurons {

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
    if (a.shape() != b.shape()) {
        throw DimensionError(std::string(what) + ": state shape " + shape_to_string(a.shape()) +
                             " does not match input shape " + shape_to_string(b.shape()));
    }
}

// Shared membrane update; fills u' into state.u and the binary reset mask into mask.
Tensor membrane_update(const NeuronCellState& state, const Tensor& x, const LifParams& p, const char* what) {
    require_same_shape(state.u, x, what);
    require_same_shape(state.o, x, what);
    p.validate();
    const double d = p.decay();
    Tensor u(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double reset = state.o[i] > 0.0 ? 0.0 : 1.0;
        u[i] = state.u[i] * d * reset + x[i] + p.bias;
    }
    return u;
}

}  // namespace

double LifParams::decay() const { return std::exp(-1.0 / tau); }

void LifParams::validate() const {
    if (!(tau > 0.0)) throw ContractError("LifParams: tau must be > 0");
    if (!(u_th > 0.0)) throw ContractError("LifParams: u_th must be > 0");
    if (T < 1) throw ContractError("LifParams: T must be >= 1");
}

NeuronCellState NeuronCellState::zeros(const Shape& shape) { return {Tensor(shape), Tensor(shape)}; }

std::string to_string(AnalogActivation act) { return act == AnalogActivation::relu ? "relu" : "step"; }

AnalogActivation analog_activation_from_string(const std::string& name) {
    if (name == "relu") return AnalogActivation::relu;
    if (name == "step") return AnalogActivation::step;
    throw ContractError("unknown LIAF analog activation '" + name + "' (expected relu or step)");
}

NeuronCellState lif_step(const NeuronCellState& state, const Tensor& x, const LifParams& p) {
    Tensor u = membrane_update(state, x, p, "lif_step");
    Tensor o(u.shape());
    for (std::size_t i = 0; i < u.size(); ++i) o[i] = fires(u[i], p.u_th);
    return {std::move(u), std::move(o)};
}

NeuronCellState liaf_step(const NeuronCellState& state, const Tensor& x, const LifParams& p,
                          AnalogActivation act) {
    // The reset of the next update must use the binary fire mask, not the
    // analog output, so the previous mask is rebuilt from the stored membrane.
    NeuronCellState binary{state.u, Tensor(state.u.shape())};
    require_same_shape(state.u, x, "liaf_step");
    for (std::size_t i = 0; i < state.u.size(); ++i) binary.o[i] = fires(state.u[i], p.u_th);
    Tensor u = membrane_update(binary, x, p, "liaf_step");
    Tensor o(u.shape());
    for (std::size_t i = 0; i < u.size(); ++i) {
        o[i] = act == AnalogActivation::relu ? std::max(u[i], 0.0) : fires(u[i], p.u_th);
    }
    return {std::move(u), std::move(o)};
}

SReluParams SReluParams::from_alpha(double alpha, double u_th) {
    const double beta = 2.0 * u_th - alpha;
    if (!(alpha < beta)) {
        throw ContractError("SReLU: alpha must be < beta = 2*u_th - alpha (alpha=" + std::to_string(alpha) +
                            ", u_th=" + std::to_string(u_th) + ")");
    }
    return {alpha, beta, u_th, false};
}

SReluParams SReluParams::step(double u_th) { return {u_th, u_th, u_th, true}; }

double SReluParams::operator()(double u) const {
    if (step_) return fires(u, u_th_);
    if (u < alpha_) return 0.0;
    if (u > beta_) return 1.0;
    return (u - alpha_) / (beta_ - alpha_);
}

double SReluParams::exact_derivative(double u) const {
    if (step_ || u < alpha_ || u > beta_) return 0.0;
    return 1.0 / (beta_ - alpha_);
}

Tensor srelu(const Tensor& u, const SReluParams& p) {
    Tensor out(u.shape());
    for (std::size_t i = 0; i < u.size(); ++i) out[i] = p(u[i]);
    return out;
}

SReluParams srelu_alpha_schedule(int epoch, int total_epochs, double u_th) {
    if (total_epochs < 0 || epoch < 0 || epoch > total_epochs) {
        throw ContractError("srelu_alpha_schedule: need 0 <= epoch <= total_epochs");
    }
    if (epoch == total_epochs) return SReluParams::step(u_th);
    const double alpha = u_th * static_cast<double>(epoch) / static_cast<double>(total_epochs);
    return SReluParams::from_alpha(std::min(alpha, u_th * (1.0 - kAlphaClampEpsilon)), u_th);
}

Tensor rate_decode(const Tensor& outputs) {
    if (outputs.rank() < 2) {
        throw DimensionError("rate_decode: expected [T, ...], got " + shape_to_string(outputs.shape()));
    }
    const std::size_t steps = outputs.dim(0);
    Shape rest(outputs.shape().begin() + 1, outputs.shape().end());
    Tensor out(rest);
    const std::size_t inner = out.size();
    for (std::size_t t = 0; t < steps; ++t) {
        for (std::size_t i = 0; i < inner; ++i) out[i] += outputs[t * inner + i];
    }
    for (auto& v : out.data()) v /= static_cast<double>(steps);
    return out;
}

}  // namespace snnf::neurons
