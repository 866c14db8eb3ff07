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

#include "snnf/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "binary_io.hpp"
#include "snnf/error.hpp"

namespace snnf::analysis {

using nlohmann::json;

namespace {

const Tensor& layer_weight(const model::Checkpoint& ckpt, const std::string& layer) {
    const std::string name = layer.ends_with(".weight") ? layer : layer + ".weight";
    const Tensor& w = ckpt.at(name);
    if (w.rank() != 4 && w.rank() != 2) {
        throw DimensionError("layer '" + layer + "' weight " + shape_to_string(w.shape()) + " is not a kernel bank");
    }
    return w;
}

// Kernel o of a [O,I,k,k] (or [O,F]) bank, optionally averaged over in-channels.
std::vector<double> kernel_slice(const Tensor& w, std::size_t o, bool channel_mean) {
    const std::size_t per = w.size() / w.dim(0);
    const auto all = w.data().subspan(o * per, per);
    if (!channel_mean || w.rank() != 4) return {all.begin(), all.end()};
    const std::size_t in = w.dim(1), area = w.dim(2) * w.dim(3);
    std::vector<double> out(area, 0.0);
    for (std::size_t c = 0; c < in; ++c) {
        for (std::size_t i = 0; i < area; ++i) out[i] += all[c * area + i];
    }
    for (double& v : out) v /= static_cast<double>(in);
    return out;
}

std::string index_name(const char* prefix, std::size_t i, const char* ext) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%s%03zu%s", prefix, i, ext);
    return buf;
}

}  // namespace

std::string to_string(Normalization n) { return n == Normalization::none ? "none" : "joint-minmax"; }

Normalization normalization_from_string(const std::string& name) {
    if (name == "none") return Normalization::none;
    if (name == "joint-minmax") return Normalization::joint_minmax;
    throw ConfigError("unknown normalization '" + name + "' (expected none or joint-minmax)");
}

SsimConstants SsimConstants::for_range(double range) {
    const double c2 = (0.03 * range) * (0.03 * range);
    return {(0.01 * range) * (0.01 * range), c2, c2 / 2.0};
}

double ssim(std::span<const double> x, std::span<const double> y, double c1, double c2, double c3) {
    if (x.size() != y.size()) {
        throw DimensionError("ssim: lengths differ (" + std::to_string(x.size()) + " vs " + std::to_string(y.size()) +
                             ")");
    }
    if (x.size() < 2) throw ContractError("ssim: unbiased variance is undefined for fewer than 2 values");
    const double n = static_cast<double>(x.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double vx = 0.0, vy = 0.0, cov = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dx = x[i] - mx, dy = y[i] - my;
        vx += dx * dx;
        vy += dy * dy;
        cov += dx * dy;
    }
    vx /= n - 1.0;
    vy /= n - 1.0;
    cov /= n - 1.0;
    const double sxy = std::sqrt(vx * vy);
    const double l = (2.0 * mx * my + c1) / (mx * mx + my * my + c1);
    const double c = (2.0 * sxy + c2) / (vx + vy + c2);
    const double s = (cov + c3) / (sxy + c3);
    return std::clamp(l * c * s, -1.0, 1.0);
}

double ssim(const Tensor& x, const Tensor& y, const SsimConstants& c) {
    if (x.shape() != y.shape()) {
        throw DimensionError("ssim: shapes differ " + shape_to_string(x.shape()) + " vs " + shape_to_string(y.shape()));
    }
    return ssim(x.data(), y.data(), c.c1, c.c2, c.c3);
}

double kernel_ssim(std::span<const double> x, std::span<const double> y, Normalization norm) {
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (double v : x) lo = std::min(lo, v), hi = std::max(hi, v);
    for (double v : y) lo = std::min(lo, v), hi = std::max(hi, v);
    const double range = hi - lo;
    if (norm == Normalization::none) {
        const auto c = SsimConstants::for_range(range > 0.0 ? range : 1.0);
        return ssim(x, y, c.c1, c.c2, c.c3);
    }
    std::vector<double> nx(x.begin(), x.end()), ny(y.begin(), y.end());
    if (range > 0.0) {
        for (double& v : nx) v = (v - lo) / range;
        for (double& v : ny) v = (v - lo) / range;
    } else {
        std::fill(nx.begin(), nx.end(), 0.0);
        std::fill(ny.begin(), ny.end(), 0.0);
    }
    const auto c = SsimConstants::for_range(1.0);
    return ssim(nx, ny, c.c1, c.c2, c.c3);
}

std::string SimilarityMatrix::to_csv() const {
    std::string out = "# normalization=" + to_string(normalization) + "; in_channels_a=" +
                      std::to_string(in_channels_a) + "; in_channels_b=" + std::to_string(in_channels_b) + "; " +
                      (channel_mean() ? "kernels averaged over in-channels" : "full kernels") + "\n";
    const std::size_t n = size();
    out += "a\\b";
    for (std::size_t j = 0; j < n; ++j) out += "," + std::to_string(j);
    out += "\n";
    char buf[32];
    for (std::size_t i = 0; i < n; ++i) {
        out += std::to_string(i);
        for (std::size_t j = 0; j < n; ++j) {
            std::snprintf(buf, sizeof(buf), ",%.12g", values[i * n + j]);
            out += buf;
        }
        out += "\n";
    }
    return out;
}

SimilarityMatrix kernel_similarity_matrix(const model::Checkpoint& a, const model::Checkpoint& b,
                                          const std::string& layer, Normalization norm) {
    const Tensor& wa = layer_weight(a, layer);
    const Tensor& wb = layer_weight(b, layer);
    if (wa.rank() != wb.rank() || wa.dim(0) != wb.dim(0)) {
        throw DimensionError("layer '" + layer + "': kernel banks " + shape_to_string(wa.shape()) + " and " +
                             shape_to_string(wb.shape()) + " have different output channel counts");
    }
    SimilarityMatrix m;
    m.in_channels_a = wa.dim(1);
    m.in_channels_b = wb.dim(1);
    m.normalization = norm;
    const bool mean = m.channel_mean();
    if (mean && wa.rank() != 4) throw DimensionError("layer '" + layer + "': dense weights differ in width");
    if (!mean && wa.shape() != wb.shape()) {
        throw DimensionError("layer '" + layer + "': kernel shapes " + shape_to_string(wa.shape()) + " and " +
                             shape_to_string(wb.shape()) + " differ");
    }
    const std::size_t n = wa.dim(0);
    std::vector<std::vector<double>> ka(n), kb(n);
    for (std::size_t i = 0; i < n; ++i) {
        ka[i] = kernel_slice(wa, i, mean);
        kb[i] = kernel_slice(wb, i, mean);
    }
    m.values = Tensor(Shape{n, n});
    parallel_for(n, [&](std::size_t i) {
        for (std::size_t j = 0; j < n; ++j) m.values[i * n + j] = kernel_ssim(ka[i], kb[j], norm);
    });
    return m;
}

Matching hungarian_match(const Tensor& scores) {
    if (scores.rank() != 2 || scores.dim(0) != scores.dim(1)) {
        throw DimensionError("hungarian_match: expected a square matrix, got " + shape_to_string(scores.shape()));
    }
    const std::size_t n = scores.dim(0);
    const double inf = std::numeric_limits<double>::infinity();
    // Shortest augmenting path with potentials on cost = -score; rows and
    // columns are 1-based, 0 is the virtual source column.
    std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
    std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
    for (std::size_t i = 1; i <= n; ++i) {
        p[0] = i;
        std::size_t j0 = 0;
        std::vector<double> minv(n + 1, inf);
        std::vector<bool> used(n + 1, false);
        do {
            used[j0] = true;
            const std::size_t i0 = p[j0];
            double delta = inf;
            std::size_t j1 = 0;
            for (std::size_t j = 1; j <= n; ++j) {
                if (used[j]) continue;
                const double cur = -scores[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (std::size_t j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            const std::size_t j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0 != 0);
    }
    Matching m;
    m.permutation.assign(n, 0);
    for (std::size_t j = 1; j <= n; ++j) m.permutation[p[j] - 1] = j - 1;
    for (std::size_t i = 0; i < n; ++i) m.total += scores[i * n + m.permutation[i]];
    return m;
}

Matching hungarian_match(const SimilarityMatrix& m) { return hungarian_match(m.values); }

json matching_manifest(const std::string& layer, const Matching& m, const SimilarityMatrix& s) {
    return {{"layer", layer},
            {"permutation", m.permutation},
            {"total_score", m.total},
            {"mean_score", m.mean()},
            {"normalization", to_string(s.normalization)},
            {"in_channels", {s.in_channels_a, s.in_channels_b}},
            {"channel_mean", s.channel_mean()}};
}

std::vector<CurvePoint> similarity_curve(const std::vector<std::pair<int, model::Checkpoint>>& series,
                                         const model::Checkpoint& reference, const std::string& layer,
                                         Normalization norm) {
    if (series.size() < 2) throw ContractError("similarity_curve: needs at least 2 checkpoints");
    std::vector<CurvePoint> out;
    for (const auto& [epoch, ckpt] : series) {
        const auto m = hungarian_match(kernel_similarity_matrix(ckpt, reference, layer, norm));
        out.push_back({epoch, m.mean()});
    }
    return out;
}

std::string curve_to_csv(const std::vector<CurvePoint>& curve) {
    std::string out = "epoch,mean_ssim\n";
    char buf[64];
    for (const auto& p : curve) {
        std::snprintf(buf, sizeof(buf), "%d,%.12g\n", p.epoch, p.mean_ssim);
        out += buf;
    }
    return out;
}

void write_pgm(const Tensor& image, const std::filesystem::path& path) {
    if (image.rank() != 2) throw DimensionError("write_pgm: expected [H,W], got " + shape_to_string(image.shape()));
    const auto [lo, hi] = std::minmax_element(image.data().begin(), image.data().end());
    const double range = *hi - *lo;
    std::string out = "P5\n" + std::to_string(image.dim(1)) + " " + std::to_string(image.dim(0)) + "\n255\n";
    for (double v : image.data()) {
        const double level = range > 0.0 ? std::round((v - *lo) / range * 255.0) : 128.0;
        out.push_back(static_cast<char>(static_cast<unsigned char>(level)));
    }
    io::write_file_atomic(path, out);
}

std::vector<std::filesystem::path> export_weight_maps(const model::Checkpoint& ckpt, const std::string& layer,
                                                      const std::vector<std::size_t>& permutation,
                                                      const std::filesystem::path& dir) {
    const Tensor& w = layer_weight(ckpt, layer);
    if (w.rank() != 4) throw DimensionError("export_weight_maps: layer '" + layer + "' is not a conv layer");
    const std::size_t n = w.dim(0), in = w.dim(1), kh = w.dim(2), kw = w.dim(3);
    std::vector<std::size_t> order = permutation;
    if (order.empty()) {
        for (std::size_t i = 0; i < n; ++i) order.push_back(i);
    }
    std::vector<bool> seen(n, false);
    if (order.size() != n) throw ContractError("export_weight_maps: permutation length differs from channel count");
    for (auto o : order) {
        if (o >= n || seen[o]) throw ContractError("export_weight_maps: order is not a permutation");
        seen[o] = true;
    }
    std::filesystem::create_directories(dir);
    std::vector<std::filesystem::path> files;
    json entries = json::array();
    for (std::size_t pos = 0; pos < n; ++pos) {
        Tensor img(Shape{kh, in * kw});
        for (std::size_t c = 0; c < in; ++c) {
            for (std::size_t y = 0; y < kh; ++y) {
                for (std::size_t x = 0; x < kw; ++x) img[y * in * kw + c * kw + x] = w.at({order[pos], c, y, x});
            }
        }
        const auto name = index_name("kernel_", pos, ".pgm");
        write_pgm(img, dir / name);
        files.push_back(dir / name);
        entries.push_back({{"file", name}, {"channel", order[pos]}});
    }
    const json manifest{{"layer", layer},
                        {"permutation", order},
                        {"normalization", "per-image min-max to [0,255], zero range as 128"},
                        {"files", entries}};
    io::write_file_atomic(dir / "manifest.json", manifest.dump(1) + "\n");
    return files;
}

std::vector<std::filesystem::path> export_feature_maps(const model::Checkpoint& ckpt, const model::NetworkSpec& spec,
                                                       const Tensor& input, const model::ForwardOptions& opts,
                                                       const std::vector<std::string>& slots,
                                                       const std::filesystem::path& dir) {
    const auto maps = model::feature_maps(ckpt, spec, input, opts, slots);
    std::filesystem::create_directories(dir);
    std::vector<std::filesystem::path> files;
    json entries = json::array();
    for (const auto& slot : slots) {
        const Tensor& f = maps.at(slot);
        if (f.rank() != 4) continue;
        const std::size_t n = f.dim(0), c = f.dim(1), h = f.dim(2), w = f.dim(3);
        for (std::size_t s = 0; s < n; ++s) {
            for (std::size_t ch = 0; ch < c; ++ch) {
                Tensor img(Shape{h, w});
                std::copy_n(f.data().begin() + static_cast<long>((s * c + ch) * h * w), h * w, img.data().begin());
                char name[160];
                std::snprintf(name, sizeof(name), "%s_s%03zu_c%03zu.pgm", slot.c_str(), s, ch);
                write_pgm(img, dir / name);
                files.push_back(dir / name);
                entries.push_back({{"file", name}, {"slot", slot}, {"sample", s}, {"channel", ch}});
            }
        }
    }
    const json manifest{{"regime", model::to_string(opts.regime)},
                        {"T", opts.T},
                        {"aggregation", "mean over time steps"},
                        {"normalization", "per-image min-max to [0,255], zero range as 128"},
                        {"files", entries}};
    io::write_file_atomic(dir / "manifest.json", manifest.dump(1) + "\n");
    return files;
}

}  // namespace snnf::analysis
