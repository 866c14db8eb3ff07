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

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <numeric>
#include <string>

#include "doctest.h"
#include "snnf/analysis.hpp"
#include "snnf/error.hpp"
#include "test_util.hpp"

using namespace snnf;
using namespace snnf::analysis;

namespace {

std::filesystem::path scratch(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / "snnf_test_analysis" / name;
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

// Luminance, contrast and structure terms written out separately.
double ssim_oracle(const std::vector<double>& x, const std::vector<double>& y, double c1, double c2, double c3) {
    const double n = static_cast<double>(x.size());
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double vx = 0, vy = 0, cxy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        vx += (x[i] - mx) * (x[i] - mx);
        vy += (y[i] - my) * (y[i] - my);
        cxy += (x[i] - mx) * (y[i] - my);
    }
    vx /= n - 1;
    vy /= n - 1;
    cxy /= n - 1;
    const double sx = std::sqrt(vx), sy = std::sqrt(vy);
    const double l = (2 * mx * my + c1) / (mx * mx + my * my + c1);
    const double c = (2 * sx * sy + c2) / (vx + vy + c2);
    const double s = (cxy + c3) / (sx * sy + c3);
    return l * c * s;
}

double brute_force_best(const Tensor& scores) {
    const std::size_t n = scores.dim(0);
    std::vector<std::size_t> p(n);
    std::iota(p.begin(), p.end(), 0);
    double best = -1e300;
    do {
        double t = 0;
        for (std::size_t i = 0; i < n; ++i) t += scores[i * n + p[i]];
        best = std::max(best, t);
    } while (std::next_permutation(p.begin(), p.end()));
    return best;
}

model::Checkpoint stem_checkpoint(std::size_t in_channels, std::uint64_t seed) {
    Rng rng(seed);
    return model::build(model::NetworkSpec::micro_resnet(in_channels, 16, 10), rng);
}

}  // namespace

TEST_SUITE("analysis") {
TEST_CASE("ssim agrees with the three-term oracle") {
    Rng rng(3);
    const auto c = SsimConstants::for_range(2.0);
    CHECK(c.c1 == doctest::Approx(0.0004));
    CHECK(c.c2 == doctest::Approx(0.0036));
    CHECK(c.c3 == doctest::Approx(0.0018));
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> x(9), y(9);
        for (auto& v : x) v = rng.uniform(-1, 1);
        for (auto& v : y) v = rng.uniform(-1, 1);
        const double got = ssim(x, y, c.c1, c.c2, c.c3);
        CHECK(got == doctest::Approx(ssim_oracle(x, y, c.c1, c.c2, c.c3)).epsilon(1e-12));
        CHECK(got == doctest::Approx(ssim(y, x, c.c1, c.c2, c.c3)).epsilon(1e-12));
        CHECK(got <= 1.0);
        CHECK(got >= -1.0);
        CHECK(ssim(x, x, c.c1, c.c2, c.c3) == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("ssim of a zero-mean signal against its negation") {
    const std::vector<double> x = {1, -1, 2, -2}, y = {-1, 1, -2, 2};
    const double var = 10.0 / 3.0;
    const auto c = SsimConstants::for_range(4.0);
    CHECK(ssim(x, y, c.c1, c.c2, c.c3) == doctest::Approx((c.c3 - var) / (c.c3 + var)).epsilon(1e-12));
    const std::vector<double> one = {1.0};
    CHECK_THROWS_AS(ssim(one, one, c.c1, c.c2, c.c3), ContractError);
    const std::vector<double> three = {1, 2, 3};
    CHECK_THROWS_AS(ssim(x, three, c.c1, c.c2, c.c3), DimensionError);
}

TEST_CASE("joint normalization ignores a shared affine rescale") {
    Rng rng(8);
    std::vector<double> x(9), y(9), xs(9), ys(9);
    for (std::size_t i = 0; i < 9; ++i) {
        x[i] = rng.uniform(-0.3, 0.3);
        y[i] = rng.uniform(-0.3, 0.3);
        xs[i] = 5.0 * x[i] + 2.0;
        ys[i] = 5.0 * y[i] + 2.0;
    }
    CHECK(kernel_ssim(x, y, Normalization::joint_minmax) ==
          doctest::Approx(kernel_ssim(xs, ys, Normalization::joint_minmax)).epsilon(1e-9));
    const std::vector<double> flat(9, 0.25);
    CHECK(kernel_ssim(flat, flat, Normalization::joint_minmax) == doctest::Approx(1.0));
    CHECK(normalization_from_string(to_string(Normalization::none)) == Normalization::none);
    CHECK(normalization_from_string("joint-minmax") == Normalization::joint_minmax);
}

TEST_CASE("hungarian matching is optimal") {
    Tensor two(Shape{2, 2}, std::vector<double>{1.0, 0.8, 0.9, 0.1});
    const auto m = hungarian_match(two);
    CHECK(m.total == doctest::Approx(1.7));
    CHECK(m.permutation == std::vector<std::size_t>{1, 0});

    Rng rng(11);
    for (std::size_t n = 1; n <= 7; ++n) {
        for (int trial = 0; trial < 8; ++trial) {
            const Tensor s = testing::random_tensor(rng, {n, n}, -1.0, 1.0);
            const auto got = hungarian_match(s);
            auto sorted = got.permutation;
            std::sort(sorted.begin(), sorted.end());
            for (std::size_t i = 0; i < n; ++i) CHECK(sorted[i] == i);
            double total = 0;
            for (std::size_t i = 0; i < n; ++i) total += s[i * n + got.permutation[i]];
            CHECK(got.total == doctest::Approx(total).epsilon(1e-12));
            CHECK(got.total == doctest::Approx(brute_force_best(s)).epsilon(1e-12));
        }
    }
    CHECK_THROWS_AS(hungarian_match(Tensor(Shape{2, 3})), DimensionError);
}

TEST_CASE("a permuted copy is matched back exactly") {
    const auto a = stem_checkpoint(1, 4);
    auto b = a;
    const std::vector<std::size_t> perm = {3, 0, 15, 7, 1, 2, 4, 5, 6, 8, 9, 10, 11, 12, 13, 14};
    Tensor& w = b.params.at("stem.weight");
    const Tensor& src = a.at("stem.weight");
    const std::size_t per = 9;
    // b channel perm[i] holds a channel i.
    for (std::size_t i = 0; i < 16; ++i) {
        for (std::size_t k = 0; k < per; ++k) w[perm[i] * per + k] = src[i * per + k];
    }
    const auto sim = kernel_similarity_matrix(a, b, "stem");
    CHECK(sim.size() == 16);
    CHECK_FALSE(sim.channel_mean());
    const auto match = hungarian_match(sim);
    CHECK(match.permutation == perm);
    CHECK(match.mean() == doctest::Approx(1.0));
    const auto j = matching_manifest("stem", match, sim);
    CHECK(j.at("permutation").get<std::vector<std::size_t>>() == perm);

    CHECK(kernel_similarity_matrix(a, b, "stem.weight").values == sim.values);
    CHECK_THROWS_AS(kernel_similarity_matrix(a, b, "trunk"), NameError);
}

TEST_CASE("differing in-channel counts compare channel means") {
    const auto a = stem_checkpoint(1, 4), b = stem_checkpoint(2, 5);
    const auto sim = kernel_similarity_matrix(a, b, "stem");
    CHECK(sim.channel_mean());
    CHECK(sim.in_channels_a == 1);
    CHECK(sim.in_channels_b == 2);
    // Entry (0,0) against an explicit channel mean.
    const Tensor& wb = b.at("stem.weight");
    std::vector<double> mean_b(9), ka(9);
    for (std::size_t k = 0; k < 9; ++k) {
        mean_b[k] = 0.5 * (wb[k] + wb[9 + k]);
        ka[k] = a.at("stem.weight")[k];
    }
    CHECK(sim.values[0] == doctest::Approx(kernel_ssim(ka, mean_b, Normalization::joint_minmax)));
    CHECK(sim.to_csv().rfind("#", 0) == 0);
}

TEST_CASE("similarity curve ends at one when the series reaches the reference") {
    const auto a = stem_checkpoint(1, 1), b = stem_checkpoint(1, 2);
    const auto curve = similarity_curve({{0, a}, {1, b}}, b, "stem");
    REQUIRE(curve.size() == 2);
    CHECK(curve[0].epoch == 0);
    CHECK(curve[0].mean_ssim < 0.99);
    CHECK(curve[1].mean_ssim == doctest::Approx(1.0));
    CHECK(curve_to_csv(curve).rfind("epoch,mean_ssim\n0,", 0) == 0);
    CHECK_THROWS_AS(similarity_curve({{0, a}}, b, "stem"), ContractError);
}

TEST_CASE("pgm output") {
    const auto dir = scratch("pgm");
    write_pgm(Tensor(Shape{2, 3}, 0.7), dir / "flat.pgm");
    CHECK(slurp(dir / "flat.pgm") == std::string("P5\n3 2\n255\n") + std::string(6, static_cast<char>(128)));
    write_pgm(Tensor(Shape{1, 3}, std::vector<double>{-1.0, 0.0, 1.0}), dir / "ramp.pgm");
    const auto ramp = slurp(dir / "ramp.pgm");
    CHECK(static_cast<unsigned char>(ramp[ramp.size() - 3]) == 0);
    CHECK(static_cast<unsigned char>(ramp[ramp.size() - 2]) == 128);
    CHECK(static_cast<unsigned char>(ramp[ramp.size() - 1]) == 255);
    CHECK_THROWS_AS(write_pgm(Tensor(Shape{3}), dir / "bad.pgm"), DimensionError);
}

TEST_CASE("exports are deterministic") {
    const auto ckpt = stem_checkpoint(2, 6);
    const auto a = scratch("export_a"), b = scratch("export_b");
    const auto fa = export_weight_maps(ckpt, "stem", {}, a);
    const auto fb = export_weight_maps(ckpt, "stem", {}, b);
    CHECK(fa.size() == 16);
    for (std::size_t i = 0; i < fa.size(); ++i) CHECK(slurp(fa[i]) == slurp(fb[i]));
    CHECK(std::filesystem::exists(a / "manifest.json"));
    CHECK(slurp(a / "manifest.json") == slurp(b / "manifest.json"));
    std::vector<std::size_t> bad(16, 0);
    CHECK_THROWS_AS(export_weight_maps(ckpt, "stem", bad, scratch("export_c")), ContractError);

    const auto spec = model::NetworkSpec::micro_resnet(2, 16, 10);
    Rng rng(2);
    const Tensor x = testing::random_tensor(rng, {2, 2, 16, 16}, 0.0, 1.0);
    model::ForwardOptions opts;
    opts.regime = model::Regime::lif;
    opts.T = 3;
    const auto ma = export_feature_maps(ckpt, spec, x, opts, {"stem.act"}, scratch("feat_a"));
    const auto mb = export_feature_maps(ckpt, spec, x, opts, {"stem.act"}, scratch("feat_b"));
    CHECK(ma.size() == 2 * 16);
    for (std::size_t i = 0; i < ma.size(); ++i) CHECK(slurp(ma[i]) == slurp(mb[i]));
}
}
