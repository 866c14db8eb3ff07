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

#include <string>

#include "snnf/tensor.hpp"

namespace snnf::neurons {

/// Discrete LIF parameters. decay() = exp(-1/tau).
struct LifParams {
    double tau = 2.0;
    double u_th = 0.5;
    double bias = 0.0;
    int T = 6;

    double decay() const;
    /// Throws ContractError unless tau > 0, u_th > 0 and T >= 1.
    void validate() const;
};

/// Membrane voltage and last output of one layer.
struct NeuronCellState {
    Tensor u;
    Tensor o;

    /// Zero membrane and zero output of the given shape.
    static NeuronCellState zeros(const Shape& shape);
};

enum class AnalogActivation {
    relu,  ///< max(u, 0)
    step,  ///< 1 if u > u_th else 0; makes LIAF identical to LIF
};

std::string to_string(AnalogActivation act);
AnalogActivation analog_activation_from_string(const std::string& name);

/// Fire iff u > u_th (strict).
inline double fires(double u, double u_th) { return u > u_th ? 1.0 : 0.0; }

/// u' = u * exp(-1/tau) * (1 - o) + x + bias;  o' = [u' > u_th].
NeuronCellState lif_step(const NeuronCellState& state, const Tensor& x, const LifParams& p);

/// Same membrane and binary reset as lif_step, but the transmitted output is
/// act(u'). The returned state's o holds the transmitted output; the reset
/// mask is recovered from u' (u' > u_th), so it stays binary.
NeuronCellState liaf_step(const NeuronCellState& state, const Tensor& x, const LifParams& p,
                          AnalogActivation act);

/// Clipped ramp. alpha + beta == 2 u_th is enforced by construction; the
/// final annealing stage switches to the exact step.
class SReluParams {
public:
    static SReluParams from_alpha(double alpha, double u_th);
    static SReluParams step(double u_th);

    double alpha() const noexcept { return alpha_; }
    double beta() const noexcept { return beta_; }
    double u_th() const noexcept { return u_th_; }
    bool is_step() const noexcept { return step_; }

    double operator()(double u) const;
    /// Fixed box derivative, 1 on [0, 2 u_th] whatever alpha is.
    double box_derivative(double u) const { return (u >= 0.0 && u <= 2.0 * u_th_) ? 1.0 : 0.0; }
    /// Exact slope of the ramp (0 in the saturated branches and in step mode).
    double exact_derivative(double u) const;

private:
    SReluParams(double alpha, double beta, double u_th, bool step)
        : alpha_(alpha), beta_(beta), u_th_(u_th), step_(step) {}

    double alpha_;
    double beta_;
    double u_th_;
    bool step_;
};

Tensor srelu(const Tensor& u, const SReluParams& p);

inline constexpr double kAlphaClampEpsilon = 1e-6;

/// Linear alpha schedule from 0 to u_th over total_epochs. Before the final
/// epoch alpha is capped at u_th * (1 - 1e-6); at epoch == total_epochs the
/// returned params are the exact step.
SReluParams srelu_alpha_schedule(int epoch, int total_epochs, double u_th);

/// Mean over axis 0 of a [T, ...] tensor.
Tensor rate_decode(const Tensor& outputs);

}  // namespace snnf::neurons
