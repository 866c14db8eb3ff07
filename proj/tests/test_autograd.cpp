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

#include "doctest.h"
#include "snnf/autograd.hpp"
#include "snnf/error.hpp"
#include "test_util.hpp"

using namespace snnf;
using namespace snnf::autograd;
using snnf::testing::numeric_gradient;
using snnf::testing::random_tensor;

namespace {

// Gradient of a scalar function of one parameter, via the tape.
Tensor tape_gradient(const std::function<Var(Tape&, Var)>& build, const Tensor& x) {
    Tape tape;
    const Var p = tape.parameter("x", x);
    return tape.backward(build(tape, p)).parameter("x");
}

double tape_value(const std::function<Var(Tape&, Var)>& build, const Tensor& x) {
    Tape tape;
    const Var p = tape.parameter("x", x);
    return tape.value(build(tape, p))[0];
}

void check_against_differences(const std::function<Var(Tape&, Var)>& build, const Tensor& x, double tol = 1e-7) {
    const Tensor g = tape_gradient(build, x);
    const Tensor fd = numeric_gradient([&](const Tensor& t) { return tape_value(build, t); }, x);
    for (std::size_t i = 0; i < g.size(); ++i) {
        CHECK(std::abs(g[i] - fd[i]) <= tol * std::max(1.0, std::abs(fd[i])));
    }
}

}  // namespace

TEST_SUITE("autograd") {
TEST_CASE("elementwise primitives match central differences") {
    Rng rng(21);
    const Tensor x = random_tensor(rng, {3, 4});
    const Tensor c = random_tensor(rng, {3, 4});
    check_against_differences([](Tape& t, Var v) { return sum_squares(t, v); }, x);
    check_against_differences(
        [&](Tape& t, Var v) { return sum(t, mul(t, v, add(t, v, t.constant(c)))); }, x);
    check_against_differences([](Tape& t, Var v) { return sum(t, tanh(t, scale(t, shift(t, v, 0.3), 1.7))); }, x);
    // relu has a kink at zero; keep the probe away from it.
    Tensor away = x;
    for (double& v : away.data()) v = v >= 0.0 ? v + 0.1 : v - 0.1;
    check_against_differences([](Tape& t, Var v) { return sum_squares(t, relu(t, v)); }, away);
}

TEST_CASE("conv, dense, pooling and padding gradients") {
    Rng rng(22);
    const Tensor x = random_tensor(rng, {2, 2, 4, 4});
    const Tensor k = random_tensor(rng, {3, 2, 3, 3});
    const Tensor b = random_tensor(rng, {3});
    check_against_differences(
        [&](Tape& t, Var v) { return sum_squares(t, conv2d(t, v, t.constant(k), t.constant(b), 1, 1)); }, x);
    check_against_differences(
        [&](Tape& t, Var v) { return sum_squares(t, conv2d(t, t.constant(x), v, t.constant(b), 2, 1, true)); }, k);
    check_against_differences(
        [&](Tape& t, Var v) { return sum_squares(t, conv2d(t, t.constant(x), t.constant(k), v, 1, 1)); }, b);
    const Tensor w = random_tensor(rng, {5, 32});
    const Tensor bias = random_tensor(rng, {5});
    check_against_differences(
        [&](Tape& t, Var v) { return sum_squares(t, dense(t, t.constant(x), v, t.constant(bias))); }, w);
    check_against_differences(
        [&](Tape& t, Var v) { return sum_squares(t, pad_channels(t, avgpool2d(t, v, 2), 5)); }, x);
}

TEST_CASE("losses match central differences") {
    Rng rng(23);
    const Tensor logits = random_tensor(rng, {4, 3});
    check_against_differences([](Tape& t, Var v) { return softmax_cross_entropy(t, v, {0, 2, 1, 2}); }, logits);
    check_against_differences([](Tape& t, Var v) { return mse_onehot(t, v, {1, 1, 0, 2}); }, logits);
    check_against_differences(
        [](Tape& t, Var v) { return sum_squares(t, mean_of(t, {v, scale(t, v, 2.0), shift(t, v, 1.0)})); }, logits);
    check_against_differences([](Tape& t, Var v) { return sum_squares(t, stack(t, {v, scale(t, v, -3.0)})); },
                              logits);
}

TEST_CASE("membrane update with and without a detached reset") {
    Rng rng(24);
    const Tensor u = random_tensor(rng, {6});
    const Tensor x = random_tensor(rng, {6});
    const Tensor o(Shape{6}, std::vector<double>{0, 1, 0, 1, 1, 0});
    check_against_differences(
        [&](Tape& t, Var v) { return sum_squares(t, lif_membrane(t, v, t.constant(o), t.constant(x), 0.6)); }, u);
    // With the reset attached, the gradient also flows into o.
    check_against_differences(
        [&](Tape& t, Var v) { return sum_squares(t, lif_membrane(t, t.constant(u), v, t.constant(x), 0.6, false)); },
        o);
    Tape tape;
    const Var po = tape.parameter("o", o);
    const Var m = lif_membrane(tape, tape.constant(u), po, tape.constant(x), 0.6, true);
    const auto grads = tape.backward(sum_squares(tape, m));
    for (double g : grads.parameter("o").data()) CHECK(g == 0.0);
}

TEST_CASE("surrogate spike uses the configured derivative") {
    const Tensor v(Shape{5}, std::vector<double>{-0.6, -0.5, 0.0, 0.2, 0.7});
    const auto box = SurrogateSpec::box(0.5);
    Tape tape;
    const Var p = tape.parameter("v", v);
    const Var s = spike_step_with_surrogate(tape, p, box);
    CHECK(tape.value(s) == Tensor(Shape{5}, std::vector<double>{0, 0, 0, 1, 1}));
    CHECK(tape.surrogate_in_path());
    const auto g = tape.backward(sum(tape, s)).parameter("v");
    CHECK(g == Tensor(Shape{5}, std::vector<double>{0, 1, 1, 1, 0}));

    SurrogateSpec rect{SurrogateSpec::Kind::rectangular_window, 0.25, 0.5};
    CHECK(rect.derivative(0.0) == 2.0);
    CHECK(rect.derivative(0.25) == 0.0);
    CHECK(rect.derivative(-0.2) == 2.0);
    CHECK(surrogate_kind_from_string(to_string(rect.kind)) == rect.kind);
}

TEST_CASE("fire mask is binary and detached") {
    const Tensor u(Shape{3}, std::vector<double>{0.4, 0.5, 0.6});
    Tape tape;
    const Var p = tape.parameter("u", u);
    const Var m = fire_mask(tape, p, 0.5);
    CHECK(tape.value(m) == Tensor(Shape{3}, std::vector<double>{0, 0, 1}));
    CHECK_FALSE(tape.requires_grad(m));
}

TEST_CASE("tape contracts") {
    Tape tape;
    const Var a = tape.parameter("a", Tensor(Shape{2}, 1.0));
    const Var unused = tape.parameter("unused", Tensor(Shape{3}, 2.0));
    (void)unused;
    CHECK_THROWS_AS(tape.parameter("a", Tensor(Shape{1})), NameError);
    CHECK_THROWS_AS(tape.backward(scale(tape, a, 2.0)), ContractError);
    const auto grads = tape.backward(sum(tape, a));
    CHECK(grads.parameter("unused") == Tensor(Shape{3}, 0.0));
    CHECK(grads.parameter("a") == Tensor(Shape{2}, 1.0));
    CHECK_THROWS(grads.parameter("missing"));
    const auto zero = tape.zero_gradients();
    CHECK(zero.parameter("a") == Tensor(Shape{2}, 0.0));
}

TEST_CASE("shared subexpressions accumulate gradients") {
    // f = sum((a*a) + (a*a)) reuses one node twice: df/da = 4a.
    Tape tape;
    const Tensor x(Shape{3}, std::vector<double>{1.0, -2.0, 0.5});
    const Var a = tape.parameter("a", x);
    const Var sq = mul(tape, a, a);
    const auto g = tape.backward(sum(tape, add(tape, sq, sq))).parameter("a");
    for (std::size_t i = 0; i < 3; ++i) CHECK(g[i] == 4.0 * x[i]);
}

TEST_CASE("srelu primitive: exact mode is the true slope, box mode is fixed") {
    const auto p = neurons::SReluParams::from_alpha(0.2, 0.5);
    const Tensor u(Shape{5}, std::vector<double>{-0.1, 0.1, 0.5, 0.9, 1.2});
    check_against_differences([&](Tape& t, Var v) { return sum_squares(t, srelu(t, v, p, SReluGrad::exact)); }, u);
    Tape tape;
    const Var v = tape.parameter("u", u);
    const auto g = tape.backward(sum(tape, srelu(tape, v, p, SReluGrad::box))).parameter("u");
    CHECK(g == Tensor(Shape{5}, std::vector<double>{0, 1, 1, 1, 0}));
}
}
