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

#include "snnf/tensor.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <numeric>
#include <sstream>
#include <thread>

#include "snnf/error.hpp"

namespace snnf {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMatrix>;
using ConstMatMap = Eigen::Map<const RowMatrix>;

std::atomic<std::size_t> g_threads{0};

struct ConvGeometry {
    std::size_t n, cin, h, w, cout, kh, kw, oh, ow;
    int stride, pad;

    std::size_t patch() const { return cin * kh * kw; }
    std::size_t pixels() const { return oh * ow; }
};

ConvGeometry conv_geometry(const Shape& in, const Shape& k, int stride, int pad, bool floor_mode) {
    if (in.size() != 4) {
        throw DimensionError("conv2d: input must be rank 4 [N,Cin,H,W], got " + shape_to_string(in));
    }
    if (k.size() != 4) {
        throw DimensionError("conv2d: kernel must be rank 4 [Cout,Cin,kH,kW], got " + shape_to_string(k));
    }
    if (stride < 1 || pad < 0) {
        throw DimensionError("conv2d: stride must be >= 1 and pad >= 0");
    }
    if (in[1] != k[1]) {
        throw DimensionError("conv2d: input axis 1 (Cin=" + std::to_string(in[1]) +
                             ") does not match kernel axis 1 (Cin=" + std::to_string(k[1]) + ")");
    }
    ConvGeometry g{in[0], in[1], in[2], in[3], k[0], k[2], k[3], 0, 0, stride, pad};
    const auto span_h = static_cast<long>(g.h) + 2L * pad - static_cast<long>(g.kh);
    const auto span_w = static_cast<long>(g.w) + 2L * pad - static_cast<long>(g.kw);
    if (span_h < 0 || span_w < 0) {
        throw DimensionError("conv2d: kernel axes 2,3 larger than padded input axes 2,3");
    }
    if (!floor_mode && (span_h % stride != 0 || span_w % stride != 0)) {
        throw DimensionError("conv2d: (H+2*pad-kH)/stride on axes 2,3 is not integral for input " +
                             shape_to_string(in) + " kernel " + shape_to_string(k));
    }
    g.oh = static_cast<std::size_t>(span_h / stride) + 1;
    g.ow = static_cast<std::size_t>(span_w / stride) + 1;
    return g;
}

// cols[(c*kh+i)*kw+j, y*ow+x] = in[c, y*s+i-p, x*s+j-p]
void im2col(const double* in, const ConvGeometry& g, double* cols) {
    const std::size_t pixels = g.pixels();
    for (std::size_t c = 0; c < g.cin; ++c) {
        for (std::size_t i = 0; i < g.kh; ++i) {
            for (std::size_t j = 0; j < g.kw; ++j) {
                double* row = cols + ((c * g.kh + i) * g.kw + j) * pixels;
                for (std::size_t y = 0; y < g.oh; ++y) {
                    const long sy = static_cast<long>(y) * g.stride + static_cast<long>(i) - g.pad;
                    double* out = row + y * g.ow;
                    if (sy < 0 || sy >= static_cast<long>(g.h)) {
                        std::fill(out, out + g.ow, 0.0);
                        continue;
                    }
                    const double* src = in + (c * g.h + static_cast<std::size_t>(sy)) * g.w;
                    for (std::size_t x = 0; x < g.ow; ++x) {
                        const long sx = static_cast<long>(x) * g.stride + static_cast<long>(j) - g.pad;
                        out[x] = (sx < 0 || sx >= static_cast<long>(g.w)) ? 0.0 : src[sx];
                    }
                }
            }
        }
    }
}

void col2im_accumulate(const double* cols, const ConvGeometry& g, double* in) {
    const std::size_t pixels = g.pixels();
    for (std::size_t c = 0; c < g.cin; ++c) {
        for (std::size_t i = 0; i < g.kh; ++i) {
            for (std::size_t j = 0; j < g.kw; ++j) {
                const double* row = cols + ((c * g.kh + i) * g.kw + j) * pixels;
                for (std::size_t y = 0; y < g.oh; ++y) {
                    const long sy = static_cast<long>(y) * g.stride + static_cast<long>(i) - g.pad;
                    if (sy < 0 || sy >= static_cast<long>(g.h)) continue;
                    double* dst = in + (c * g.h + static_cast<std::size_t>(sy)) * g.w;
                    for (std::size_t x = 0; x < g.ow; ++x) {
                        const long sx = static_cast<long>(x) * g.stride + static_cast<long>(j) - g.pad;
                        if (sx >= 0 && sx < static_cast<long>(g.w)) dst[sx] += row[y * g.ow + x];
                    }
                }
            }
        }
    }
}

}  // namespace

std::string shape_to_string(const Shape& shape) {
    std::ostringstream out;
    out << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) out << ',';
        out << shape[i];
    }
    out << ']';
    return out.str();
}

std::size_t shape_numel(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)) {
    for (auto d : shape_) {
        if (d == 0) throw DimensionError("tensor: zero-length axis in shape " + shape_to_string(shape_));
    }
    data_.assign(shape_numel(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (shape_numel(shape_) != data_.size()) {
        throw DimensionError("tensor: shape " + shape_to_string(shape_) + " needs " +
                             std::to_string(shape_numel(shape_)) + " values, got " +
                             std::to_string(data_.size()));
    }
}

std::size_t Tensor::dim(std::size_t axis) const {
    if (axis >= shape_.size()) {
        throw DimensionError("tensor: axis " + std::to_string(axis) + " out of range for shape " +
                             shape_to_string(shape_));
    }
    return shape_[axis];
}

std::size_t Tensor::offset(std::initializer_list<std::size_t> index) const {
    if (index.size() != shape_.size()) {
        throw DimensionError("tensor: index rank does not match shape " + shape_to_string(shape_));
    }
    std::size_t off = 0;
    std::size_t axis = 0;
    for (auto i : index) {
        if (i >= shape_[axis]) {
            throw DimensionError("tensor: index out of range on axis " + std::to_string(axis));
        }
        off = off * shape_[axis] + i;
        ++axis;
    }
    return off;
}

double& Tensor::at(std::initializer_list<std::size_t> index) { return data_[offset(index)]; }
double Tensor::at(std::initializer_list<std::size_t> index) const { return data_[offset(index)]; }

Tensor Tensor::reshaped(Shape shape) const {
    if (shape_numel(shape) != data_.size()) {
        throw DimensionError("tensor: cannot reshape " + shape_to_string(shape_) + " to " +
                             shape_to_string(shape));
    }
    return Tensor(std::move(shape), data_);
}

bool Tensor::all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

double Rng::uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

double Rng::normal() {
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
}

std::uint64_t Rng::below(std::uint64_t n) {
    if (n == 0) throw ContractError("rng: below(0)");
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
    std::uint64_t x = engine_();
    while (x >= limit) x = engine_();
    return x % n;
}

Rng Rng::fork(std::uint64_t stream) const { return Rng(splitmix64(seed_ ^ splitmix64(stream))); }

Tensor conv2d_forward(const Tensor& input, const Tensor& kernel, int stride, int pad, bool floor_mode) {
    const auto g = conv_geometry(input.shape(), kernel.shape(), stride, pad, floor_mode);
    Tensor out(Shape{g.n, g.cout, g.oh, g.ow});
    const ConstMatMap w(kernel.data().data(), static_cast<long>(g.cout), static_cast<long>(g.patch()));
    parallel_for(g.n, [&](std::size_t n) {
        std::vector<double> cols(g.patch() * g.pixels());
        im2col(input.data().data() + n * g.cin * g.h * g.w, g, cols.data());
        const ConstMatMap c(cols.data(), static_cast<long>(g.patch()), static_cast<long>(g.pixels()));
        MatMap y(out.data().data() + n * g.cout * g.pixels(), static_cast<long>(g.cout),
                 static_cast<long>(g.pixels()));
        y.noalias() = w * c;
    });
    return out;
}

Tensor conv2d_backward_input(const Tensor& grad_out, const Tensor& kernel, const Shape& input_shape,
                             int stride, int pad, bool floor_mode) {
    const auto g = conv_geometry(input_shape, kernel.shape(), stride, pad, floor_mode);
    if (grad_out.shape() != Shape{g.n, g.cout, g.oh, g.ow}) {
        throw DimensionError("conv2d backward: grad_out shape " + shape_to_string(grad_out.shape()) +
                             " does not match forward output");
    }
    Tensor grad_in(input_shape);
    const ConstMatMap w(kernel.data().data(), static_cast<long>(g.cout), static_cast<long>(g.patch()));
    parallel_for(g.n, [&](std::size_t n) {
        const ConstMatMap dy(grad_out.data().data() + n * g.cout * g.pixels(), static_cast<long>(g.cout),
                             static_cast<long>(g.pixels()));
        RowMatrix cols = w.transpose() * dy;
        col2im_accumulate(cols.data(), g, grad_in.data().data() + n * g.cin * g.h * g.w);
    });
    return grad_in;
}

Tensor conv2d_backward_kernel(const Tensor& grad_out, const Tensor& input, const Shape& kernel_shape,
                              int stride, int pad, bool floor_mode) {
    const auto g = conv_geometry(input.shape(), kernel_shape, stride, pad, floor_mode);
    if (grad_out.shape() != Shape{g.n, g.cout, g.oh, g.ow}) {
        throw DimensionError("conv2d backward: grad_out shape " + shape_to_string(grad_out.shape()) +
                             " does not match forward output");
    }
    const std::size_t kn = g.cout * g.patch();
    std::vector<double> partial(g.n * kn);
    parallel_for(g.n, [&](std::size_t n) {
        std::vector<double> cols(g.patch() * g.pixels());
        im2col(input.data().data() + n * g.cin * g.h * g.w, g, cols.data());
        const ConstMatMap c(cols.data(), static_cast<long>(g.patch()), static_cast<long>(g.pixels()));
        const ConstMatMap dy(grad_out.data().data() + n * g.cout * g.pixels(), static_cast<long>(g.cout),
                             static_cast<long>(g.pixels()));
        MatMap dw(partial.data() + n * kn, static_cast<long>(g.cout), static_cast<long>(g.patch()));
        dw.noalias() = dy * c.transpose();
    });
    Tensor grad_k(kernel_shape);
    auto dst = grad_k.data();
    for (std::size_t n = 0; n < g.n; ++n) {
        const double* src = partial.data() + n * kn;
        for (std::size_t i = 0; i < kn; ++i) dst[i] += src[i];
    }
    return grad_k;
}

Tensor dense_forward(const Tensor& input, const Tensor& weight, const Tensor& bias) {
    if (input.rank() < 2) throw DimensionError("dense: input must be [N,F], got " + shape_to_string(input.shape()));
    if (weight.rank() != 2) throw DimensionError("dense: weight must be [G,F], got " + shape_to_string(weight.shape()));
    const std::size_t n = input.dim(0);
    const std::size_t f = input.size() / n;
    const std::size_t gdim = weight.dim(0);
    if (weight.dim(1) != f) {
        throw DimensionError("dense: input features (axis 1, F=" + std::to_string(f) +
                             ") do not match weight axis 1 (F=" + std::to_string(weight.dim(1)) + ")");
    }
    if (bias.size() != gdim) {
        throw DimensionError("dense: bias length " + std::to_string(bias.size()) +
                             " does not match weight axis 0 (G=" + std::to_string(gdim) + ")");
    }
    Tensor out(Shape{n, gdim});
    const ConstMatMap x(input.data().data(), static_cast<long>(n), static_cast<long>(f));
    const ConstMatMap w(weight.data().data(), static_cast<long>(gdim), static_cast<long>(f));
    MatMap y(out.data().data(), static_cast<long>(n), static_cast<long>(gdim));
    y.noalias() = x * w.transpose();
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < gdim; ++j) out[i * gdim + j] += bias[j];
    }
    return out;
}

Tensor avgpool2d(const Tensor& input, int k) {
    if (input.rank() != 4) throw DimensionError("avgpool2d: input must be rank 4, got " + shape_to_string(input.shape()));
    if (k < 1) throw DimensionError("avgpool2d: window must be >= 1");
    const auto& s = input.shape();
    const auto uk = static_cast<std::size_t>(k);
    if (s[2] % uk != 0 || s[3] % uk != 0) {
        throw DimensionError("avgpool2d: window " + std::to_string(k) + " does not divide axes 2,3 of " +
                             shape_to_string(s));
    }
    const std::size_t oh = s[2] / uk, ow = s[3] / uk;
    Tensor out(Shape{s[0], s[1], oh, ow});
    const double inv = 1.0 / static_cast<double>(uk * uk);
    for (std::size_t plane = 0; plane < s[0] * s[1]; ++plane) {
        const double* src = input.data().data() + plane * s[2] * s[3];
        double* dst = out.data().data() + plane * oh * ow;
        for (std::size_t y = 0; y < oh; ++y) {
            for (std::size_t x = 0; x < ow; ++x) {
                double acc = 0.0;
                for (std::size_t i = 0; i < uk; ++i) {
                    for (std::size_t j = 0; j < uk; ++j) acc += src[(y * uk + i) * s[3] + x * uk + j];
                }
                dst[y * ow + x] = acc * inv;
            }
        }
    }
    return out;
}

Tensor avgpool2d_backward(const Tensor& grad_out, const Shape& input_shape, int k) {
    const auto uk = static_cast<std::size_t>(k);
    const auto& s = input_shape;
    if (s.size() != 4 || k < 1 || s[2] % uk != 0 || s[3] % uk != 0 ||
        grad_out.shape() != Shape{s[0], s[1], s[2] / uk, s[3] / uk}) {
        throw DimensionError("avgpool2d backward: inconsistent shapes " + shape_to_string(grad_out.shape()) +
                             " vs " + shape_to_string(s));
    }
    const std::size_t oh = s[2] / uk, ow = s[3] / uk;
    Tensor grad_in(s);
    const double inv = 1.0 / static_cast<double>(uk * uk);
    for (std::size_t plane = 0; plane < s[0] * s[1]; ++plane) {
        const double* src = grad_out.data().data() + plane * oh * ow;
        double* dst = grad_in.data().data() + plane * s[2] * s[3];
        for (std::size_t y = 0; y < s[2]; ++y) {
            for (std::size_t x = 0; x < s[3]; ++x) dst[y * s[3] + x] = src[(y / uk) * ow + x / uk] * inv;
        }
    }
    return grad_in;
}

Tensor add_channel_bias(const Tensor& input, const Tensor& bias) {
    if (input.rank() < 2 || input.dim(1) != bias.size()) {
        throw DimensionError("channel bias: axis 1 of " + shape_to_string(input.shape()) +
                             " does not match bias length " + std::to_string(bias.size()));
    }
    Tensor out = input;
    const std::size_t c = input.dim(1);
    const std::size_t inner = input.size() / (input.dim(0) * c);
    auto d = out.data();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += bias[(i / inner) % c];
    return out;
}

Tensor kaiming_init(Rng& rng, const Shape& shape, std::size_t fan_in) {
    if (fan_in < 1) throw ContractError("kaiming_init: fan_in must be >= 1");
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    Tensor out(shape);
    for (auto& v : out.data()) v = rng.uniform(-bound, bound);
    return out;
}

std::size_t worker_threads() {
    std::size_t n = g_threads.load();
    if (n != 0) return n;
    if (const char* env = std::getenv("SNNF_THREADS")) {
        const long v = std::strtol(env, nullptr, 10);
        if (v > 0) return static_cast<std::size_t>(v);
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

void set_worker_threads(std::size_t n) { g_threads.store(n); }

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
    const std::size_t workers = std::min(worker_threads(), n);
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    auto body = [&] {
        for (std::size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) fn(i);
    };
    std::vector<std::jthread> pool;
    pool.reserve(workers - 1);
    for (std::size_t t = 1; t < workers; ++t) pool.emplace_back(body);
    body();
}

}  // namespace snnf
