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

#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "snnf/model.hpp"
#include "snnf/tensor.hpp"

namespace snnf::analysis {

/// How kernel pairs are rescaled before SSIM.
enum class Normalization {
    none,          ///< raw values; dynamic range is the joint range of the pair
    joint_minmax,  ///< both kernels mapped to [0,1] by the pair's shared min and max
};

std::string to_string(Normalization n);
Normalization normalization_from_string(const std::string& name);

/// c1 = (0.01 L)^2, c2 = (0.03 L)^2, c3 = c2 / 2.
struct SsimConstants {
    double c1 = 0.0;
    double c2 = 0.0;
    double c3 = 0.0;

    static SsimConstants for_range(double range);
};

/// Single-window SSIM over the flattened inputs, unbiased variances.
double ssim(std::span<const double> x, std::span<const double> y, double c1, double c2, double c3);
double ssim(const Tensor& x, const Tensor& y, const SsimConstants& c);

/// SSIM of one kernel pair after normalization.
double kernel_ssim(std::span<const double> x, std::span<const double> y, Normalization norm);

struct SimilarityMatrix {
    Tensor values;  ///< [N,N]; entry (i,j) compares A's kernel i with B's kernel j
    std::size_t in_channels_a = 0;
    std::size_t in_channels_b = 0;
    Normalization normalization = Normalization::joint_minmax;

    /// True when in-channel counts differ and kernels were averaged over them.
    bool channel_mean() const noexcept { return in_channels_a != in_channels_b; }
    std::size_t size() const { return values.dim(0); }
    /// Comment line describing normalization and channel handling, then the matrix.
    std::string to_csv() const;
};

/// Kernels of layer (e.g. "stem" or "stem.weight") in both checkpoints.
SimilarityMatrix kernel_similarity_matrix(const model::Checkpoint& a, const model::Checkpoint& b,
                                          const std::string& layer,
                                          Normalization norm = Normalization::joint_minmax);

struct Matching {
    std::vector<std::size_t> permutation;  ///< A channel i is paired with B channel permutation[i]
    double total = 0.0;

    double mean() const { return permutation.empty() ? 0.0 : total / static_cast<double>(permutation.size()); }
};

/// Assignment maximizing the summed score, O(N^3).
Matching hungarian_match(const Tensor& scores);
Matching hungarian_match(const SimilarityMatrix& m);

nlohmann::json matching_manifest(const std::string& layer, const Matching& m, const SimilarityMatrix& s);

struct CurvePoint {
    int epoch = 0;
    double mean_ssim = 0.0;
};

/// Matched mean SSIM of every (epoch, checkpoint) against reference.
std::vector<CurvePoint> similarity_curve(const std::vector<std::pair<int, model::Checkpoint>>& series,
                                         const model::Checkpoint& reference, const std::string& layer,
                                         Normalization norm = Normalization::joint_minmax);
std::string curve_to_csv(const std::vector<CurvePoint>& curve);

/// 8-bit binary PGM of a [H,W] tensor, min-max scaled; a zero range maps to 128.
void write_pgm(const Tensor& image, const std::filesystem::path& path);

/// One PGM per output kernel, in the order given by permutation (identity if
/// empty); in-channels are tiled left to right. Writes manifest.json next to them.
std::vector<std::filesystem::path> export_weight_maps(const model::Checkpoint& ckpt, const std::string& layer,
                                                      const std::vector<std::size_t>& permutation,
                                                      const std::filesystem::path& dir);

/// Time-averaged activation maps of each slot for every sample and channel.
std::vector<std::filesystem::path> export_feature_maps(const model::Checkpoint& ckpt, const model::NetworkSpec& spec,
                                                       const Tensor& input, const model::ForwardOptions& opts,
                                                       const std::vector<std::string>& slots,
                                                       const std::filesystem::path& dir);

}  // namespace snnf::analysis
