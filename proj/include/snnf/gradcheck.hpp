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

#include "snnf/model.hpp"

namespace snnf::gradcheck {

struct Options {
    int cases = 10;
    std::uint64_t seed = 1;
    model::Regime regime = model::Regime::liaf;  ///< liaf or sann
    int max_T = 4;
    double min_grad = 1e-8;  ///< coordinates with smaller |grad| are not compared
};

struct Result {
    double max_rel_error = 0.0;
    std::size_t coordinates = 0;  ///< compared coordinates
    int cases = 0;
};

/// Random small conv networks; a non-spiking loss (half sum of squares of the
/// rate) differentiated by the tape and by central differences. sann uses the
/// exact SReLU slope, since the box derivative is not the true gradient.
Result run(const Options& opts);

}  // namespace snnf::gradcheck
