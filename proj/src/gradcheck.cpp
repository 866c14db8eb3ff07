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

#include "snnf/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "snnf/autograd.hpp"
#include "snnf/error.hpp"

namespace snnf::gradcheck {

namespace {

model::NetworkSpec small_net(std::size_t channels, std::size_t size, std::size_t hidden, std::size_t classes) {
    model::NetworkSpec s;
    s.input = {channels, size, size};
    s.classes = classes;
    model::LayerSpec conv;
    conv.kind = model::LayerKind::conv;
    conv.name = "conv";
    conv.out = hidden;
    s.layers.push_back(conv);
    model::LayerSpec act;
    act.kind = model::LayerKind::activation;
    act.name = "conv.act";
    s.layers.push_back(act);
    model::LayerSpec pool;
    pool.kind = model::LayerKind::avgpool;
    pool.name = "pool";
    pool.pool = 2;
    s.layers.push_back(pool);
    model::LayerSpec fc;
    fc.kind = model::LayerKind::dense;
    fc.name = "fc";
    fc.out = classes;
    s.layers.push_back(fc);
    model::LayerSpec head;
    head.kind = model::LayerKind::activation;
    head.name = "fc.act";
    head.output = true;
    s.layers.push_back(head);
    return s;
}

double loss_value(const model::Checkpoint& ckpt, const model::NetworkSpec& spec, const Tensor& x,
                  const model::ForwardOptions& f) {
    autograd::Tape tape;
    const auto trace = model::record_forward(tape, ckpt, spec, x, f);
    return 0.5 * tape.value(autograd::sum_squares(tape, trace.rate))[0];
}

}  // namespace

Result run(const Options& opts) {
    if (opts.regime != model::Regime::liaf && opts.regime != model::Regime::sann) {
        throw ConfigError("grad-check: regime must be liaf or sann (lif has no true gradient)");
    }
    if (opts.cases < 1 || opts.max_T < 1) throw ConfigError("grad-check: cases and T must be >= 1");
    Result res;
    const Rng root(opts.seed);
    for (int c = 0; c < opts.cases; ++c) {
        Rng rng = root.fork(static_cast<std::uint64_t>(c));
        const auto spec = small_net(1 + rng.below(2), 4, 2 + rng.below(3), 2 + rng.below(3));
        auto ckpt = model::build(spec, rng);
        for (auto& [name, t] : ckpt.params) {
            for (double& v : t.data()) v += 0.1 * rng.uniform(-1.0, 1.0);
        }
        Shape in{2};
        in.insert(in.end(), spec.input.begin(), spec.input.end());
        Tensor x(in);
        for (double& v : x.data()) v = rng.uniform(0.0, 1.5);

        model::ForwardOptions f;
        f.regime = opts.regime;
        f.T = opts.regime == model::Regime::liaf ? 1 + static_cast<int>(rng.below(static_cast<std::size_t>(opts.max_T))) : 1;
        f.neuron.srelu_grad = autograd::SReluGrad::exact;
        f.alpha = rng.uniform(0.0, 0.4);

        autograd::Tape tape;
        const auto trace = model::record_forward(tape, ckpt, spec, x, f, true);
        const auto loss = autograd::scale(tape, autograd::sum_squares(tape, trace.rate), 0.5);
        const auto grads = tape.backward(loss);

        for (const auto& [name, g] : grads.parameters()) {
            for (std::size_t i = 0; i < g.size(); ++i) {
                if (std::abs(g[i]) <= opts.min_grad) continue;
                // The loss is piecewise quadratic in one coordinate, so the
                // central difference is exact unless a kink lies within h;
                // shrink h until two step sizes agree.
                double fd = 0.0;
                for (double h = 1e-3; h >= 1e-7; h /= 4.0) {
                    const auto diff = [&](double step) {
                        auto plus = ckpt, minus = ckpt;
                        plus.params[name][i] += step;
                        minus.params[name][i] -= step;
                        return (loss_value(plus, spec, x, f) - loss_value(minus, spec, x, f)) / (2.0 * step);
                    };
                    const double a = diff(h), b = diff(h / 2.0);
                    fd = b;
                    if (std::abs(a - b) <= 1e-9 * std::max(1.0, std::abs(b))) break;
                }
                const double rel = std::abs(fd - g[i]) / std::max(std::abs(fd), std::abs(g[i]));
                res.max_rel_error = std::max(res.max_rel_error, rel);
                ++res.coordinates;
            }
        }
        ++res.cases;
    }
    return res;
}

}  // namespace snnf::gradcheck
