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

#include <cmath>
#include <numbers>

#include "doctest.h"
#include "snnf/error.hpp"
#include "snnf/neurons.hpp"
#include "test_util.hpp"

using namespace snnf;
using namespace snnf::neurons;

TEST_SUITE("neurons") {
TEST_CASE("hand-derived LIF trace") {
    // tau = 1/ln 2 gives a decay of one half; constant input 0.6, threshold 1:
    // u = 0.6, 0.9, 1.05 (fires), then 0.6 after the reset.
    LifParams p;
    p.tau = 1.0 / std::numbers::ln2;
    p.u_th = 1.0;
    auto state = NeuronCellState::zeros({1});
    const Tensor x(Shape{1}, 0.6);
    const double want_u[] = {0.6, 0.9, 1.05, 0.6};
    const double want_o[] = {0, 0, 1, 0};
    for (int t = 0; t < 4; ++t) {
        state = lif_step(state, x, p);
        CHECK(std::abs(state.u[0] - want_u[t]) < 1e-12);
        CHECK(state.o[0] == want_o[t]);
    }
}

TEST_CASE("firing is strict at the threshold") {
    CHECK(fires(0.5, 0.5) == 0.0);
    CHECK(fires(std::nextafter(0.5, 1.0), 0.5) == 1.0);
    LifParams p;
    auto s = lif_step(NeuronCellState::zeros({1}), Tensor(Shape{1}, 0.5), p);
    CHECK(s.o[0] == 0.0);
}

TEST_CASE("bias adds to the membrane every step") {
    LifParams p;
    p.bias = 0.1;
    p.u_th = 10.0;
    auto s = NeuronCellState::zeros({1});
    s = lif_step(s, Tensor(Shape{1}, 0.0), p);
    CHECK(std::abs(s.u[0] - 0.1) < 1e-15);
    s = lif_step(s, Tensor(Shape{1}, 0.0), p);
    CHECK(std::abs(s.u[0] - (0.1 * p.decay() + 0.1)) < 1e-15);
}

TEST_CASE("parameter validation") {
    LifParams p;
    p.tau = 0.0;
    CHECK_THROWS_AS(p.validate(), ContractError);
    p = LifParams{};
    p.u_th = -1.0;
    CHECK_THROWS_AS(p.validate(), ContractError);
    p = LifParams{};
    p.T = 0;
    CHECK_THROWS_AS(p.validate(), ContractError);
    CHECK_THROWS_AS(lif_step(NeuronCellState::zeros({2}), Tensor(Shape{3}), LifParams{}), DimensionError);
}

TEST_CASE("LIAF with step activation reproduces LIF") {
    Rng rng(31);
    LifParams p;
    auto lif = NeuronCellState::zeros({50});
    auto liaf = lif;
    for (int t = 0; t < 8; ++t) {
        const Tensor x = snnf::testing::random_tensor(rng, {50}, -0.5, 1.0);
        lif = lif_step(lif, x, p);
        liaf = liaf_step(liaf, x, p, AnalogActivation::step);
        CHECK(lif.o == liaf.o);
        CHECK(lif.u == liaf.u);
    }
}

TEST_CASE("LIAF relu output keeps a binary reset") {
    LifParams p;
    auto s = liaf_step(NeuronCellState::zeros({2}), Tensor(Shape{2}, std::vector<double>{0.8, 0.3}), p,
                       AnalogActivation::relu);
    CHECK(s.o[0] == 0.8);
    CHECK(s.o[1] == 0.3);
    // The first neuron fired, so its membrane restarts from the input.
    s = liaf_step(s, Tensor(Shape{2}, std::vector<double>{0.2, 0.2}), p, AnalogActivation::relu);
    CHECK(s.u[0] == 0.2);
    CHECK(std::abs(s.u[1] - (0.3 * p.decay() + 0.2)) < 1e-15);
}

TEST_CASE("SReLU shape, knees and derivatives") {
    const auto r = SReluParams::from_alpha(0.2, 0.5);
    CHECK(r.alpha() == 0.2);
    CHECK(r.beta() == doctest::Approx(0.8).epsilon(1e-15));
    CHECK(r(0.1) == 0.0);
    CHECK(r(0.9) == 1.0);
    CHECK(r(0.5) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(r.box_derivative(0.0) == 1.0);
    CHECK(r.box_derivative(1.0) == 1.0);
    CHECK(r.box_derivative(1.01) == 0.0);
    CHECK(r.box_derivative(-0.01) == 0.0);
    CHECK(r.exact_derivative(0.5) == doctest::Approx(1.0 / 0.6));
    CHECK(r.exact_derivative(0.1) == 0.0);
    CHECK_THROWS_AS(SReluParams::from_alpha(0.5, 0.5), ContractError);
    CHECK_THROWS_AS(SReluParams::from_alpha(0.7, 0.5), ContractError);
    const auto step = SReluParams::step(0.5);
    CHECK(step.is_step());
    CHECK(step(0.5) == 0.0);
    CHECK(step(0.50001) == 1.0);
}

TEST_CASE("alpha schedule is linear, clamped, and ends at the step") {
    double last = -1.0;
    for (int e = 0; e < 10; ++e) {
        const auto p = srelu_alpha_schedule(e, 10, 0.5);
        CHECK_FALSE(p.is_step());
        CHECK(p.alpha() >= last);
        CHECK(p.alpha() < 0.5);
        CHECK(std::abs(p.alpha() + p.beta() - 1.0) < 1e-15);
        last = p.alpha();
    }
    CHECK(srelu_alpha_schedule(0, 10, 0.5).alpha() == 0.0);
    CHECK(srelu_alpha_schedule(10, 10, 0.5).is_step());
    CHECK(srelu_alpha_schedule(0, 0, 0.5).is_step());
}

TEST_CASE("rate decoding averages over time") {
    const Tensor o(Shape{4, 2}, std::vector<double>{1, 0, 0, 0, 1, 1, 1, 0});
    const Tensor r = rate_decode(o);
    CHECK(r.shape() == Shape{2});
    CHECK(r[0] == 0.75);
    CHECK(r[1] == 0.25);
}
}
