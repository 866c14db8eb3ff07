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
#include <functional>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace snnf {

using Shape = std::vector<std::size_t>;

std::string shape_to_string(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

/// Dense row-major N-d array of doubles.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, double fill = 0.0);
    Tensor(Shape shape, std::vector<double> data);

    static Tensor scalar(double value) { return Tensor(Shape{1}, value); }

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t dim(std::size_t axis) const;
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    std::span<double> data() noexcept { return data_; }
    std::span<const double> data() const noexcept { return data_; }
    const std::vector<double>& values() const noexcept { return data_; }

    double& operator[](std::size_t i) noexcept { return data_[i]; }
    double operator[](std::size_t i) const noexcept { return data_[i]; }

    /// Bounds-checked multi-index access.
    double& at(std::initializer_list<std::size_t> index);
    double at(std::initializer_list<std::size_t> index) const;

    Tensor reshaped(Shape shape) const;
    bool all_finite() const noexcept;

    /// Exact (bitwise-value) equality of shape and data.
    friend bool operator==(const Tensor& a, const Tensor& b) = default;

private:
    std::size_t offset(std::initializer_list<std::size_t> index) const;

    Shape shape_;
    std::vector<double> data_;
};

/// Deterministic random stream.
///
/// The engine is std::mt19937_64, whose output sequence is fixed by the C++
/// standard. Distributions are implemented here rather than taken from
/// <random> because the standard distributions are implementation-defined.
/// uniform() maps the top 53 bits of one draw to [0, 1).
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : seed_(seed), engine_(seed) {}

    std::uint64_t seed() const noexcept { return seed_; }
    std::uint64_t next_u64() { return engine_(); }
    double uniform();
    double uniform(double lo, double hi);
    /// Standard normal via Box-Muller (one draw pair per call, second discarded).
    double normal();
    /// Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n);

    /// Independent stream derived from (seed, stream id) with splitmix64.
    Rng fork(std::uint64_t stream) const;

    template <typename T>
    void shuffle(std::vector<T>& items) {
        for (std::size_t i = items.size(); i > 1; --i) {
            std::swap(items[i - 1], items[below(i)]);
        }
    }

private:
    std::uint64_t seed_;
    std::mt19937_64 engine_;
};

std::uint64_t splitmix64(std::uint64_t x);

// Kernels. All are pure: inputs are never modified.
//
// Convolution is cross-correlation (no kernel flip):
//   out[n,o,y,x] = sum_{c,i,j} in[n,c,y*s+i-p,x*s+j-p] * k[o,c,i,j]
// (H + 2p - kH) must be divisible by the stride unless floor_mode is set, in
// which case trailing rows/columns that do not fill a window are dropped.

Tensor conv2d_forward(const Tensor& input, const Tensor& kernel, int stride, int pad, bool floor_mode = false);
/// Gradient w.r.t. the input of conv2d_forward.
Tensor conv2d_backward_input(const Tensor& grad_out, const Tensor& kernel, const Shape& input_shape,
                             int stride, int pad, bool floor_mode = false);
/// Gradient w.r.t. the kernel of conv2d_forward. Per-sample partials are summed
/// in sample order so the result does not depend on the thread count.
Tensor conv2d_backward_kernel(const Tensor& grad_out, const Tensor& input, const Shape& kernel_shape,
                              int stride, int pad, bool floor_mode = false);

/// out[n,g] = sum_f in[n,f] * w[g,f] + b[g]. Inputs of rank > 2 are flattened per sample.
Tensor dense_forward(const Tensor& input, const Tensor& weight, const Tensor& bias);

Tensor avgpool2d(const Tensor& input, int k);
Tensor avgpool2d_backward(const Tensor& grad_out, const Shape& input_shape, int k);

/// Adds bias[c] to every element of channel c (axis 1).
Tensor add_channel_bias(const Tensor& input, const Tensor& bias);

/// Uniform in [-sqrt(6/fan_in), +sqrt(6/fan_in)].
Tensor kaiming_init(Rng& rng, const Shape& shape, std::size_t fan_in);

/// Worker count: SNNF_THREADS if set, else hardware concurrency.
std::size_t worker_threads();
void set_worker_threads(std::size_t n);

/// Runs fn(i) for i in [0, n). Each index is processed exactly once; callers
/// must only write disjoint outputs.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace snnf
