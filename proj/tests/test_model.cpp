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

#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>

#include "doctest.h"
#include "snnf/error.hpp"
#include "snnf/model.hpp"
#include "test_util.hpp"

using namespace snnf;
using namespace snnf::model;

namespace {

std::filesystem::path scratch(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / "snnf_test_model";
    std::filesystem::create_directories(dir);
    return dir / name;
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

void spit(const std::filesystem::path& p, const std::string& bytes) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

// Hand count for the micro residual net: stem conv 3x3 -> 16, two residual
// blocks of two 3x3 convs each, and a dense head on 32 pooled features.
std::size_t hand_count(std::size_t c, std::size_t classes) {
    const std::size_t stem = 16 * c * 9 + 16;
    const std::size_t stage1 = (16 * 16 * 9 + 16) * 2;
    const std::size_t stage2 = (32 * 16 * 9 + 32) + (32 * 32 * 9 + 32);
    const std::size_t fc = 32 * classes + classes;
    return stem + stage1 + stage2 + fc;
}

Tensor sample_input(std::size_t n, std::size_t c, std::size_t size, std::uint64_t seed) {
    Rng rng(seed);
    return testing::random_tensor(rng, {n, c, size, size}, 0.0, 1.0);
}

}  // namespace

TEST_SUITE("model") {
TEST_CASE("parameter counts match a hand count") {
    CHECK(hand_count(2, 10) == 19162);
    CHECK(hand_count(1, 10) == 19018);
    CHECK(NetworkSpec::micro_resnet(2, 32, 10).parameter_count() == 19162);
    CHECK(NetworkSpec::micro_resnet(1, 32, 10).parameter_count() == 19018);
    CHECK(NetworkSpec::mlp(4, {8}, 3).parameter_count() == 4 * 8 + 8 + 8 * 3 + 3);
}

TEST_CASE("build initializes every parameter with the declared shape") {
    const auto spec = NetworkSpec::micro_resnet(1, 16, 10);
    Rng rng(7);
    const auto ckpt = build(spec, rng);
    for (const auto& info : spec.parameters()) {
        const auto& t = ckpt.at(info.name);
        CHECK(t.shape() == info.shape);
        if (info.is_bias) {
            for (double v : t.data()) CHECK(v == 0.0);
        } else {
            const double bound = std::sqrt(6.0 / static_cast<double>(info.fan_in));
            for (double v : t.data()) CHECK(std::abs(v) <= bound * (1 + 1e-6));
        }
    }
    CHECK(ckpt.committed());
    Rng again(7);
    CHECK(build(spec, again) == ckpt);
    CHECK_THROWS_AS(ckpt.at("nope.weight"), NameError);
}

TEST_CASE("composition errors name the layers involved") {
    auto spec = NetworkSpec::micro_resnet(1, 32, 10);
    spec.layers[2].in = 8;  // stage1 declares 8 channels, stem makes 16
    try {
        spec.validate();
        FAIL("expected CompositionError");
    } catch (const CompositionError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("stage1") != std::string::npos);
        CHECK(msg.find("stem") != std::string::npos);
    }

    auto mlp = NetworkSpec::mlp(4, {8}, 3);
    mlp.layers[2].in = 5;
    CHECK_THROWS_AS(mlp.validate(), CompositionError);

    auto odd = NetworkSpec::micro_resnet(1, 30, 10);  // 30 -> 15 -> 8 does not pool cleanly
    CHECK_THROWS_AS(odd.validate(), CompositionError);

    auto classes = NetworkSpec::mlp(4, {8}, 3);
    classes.classes = 4;
    CHECK_THROWS_AS(classes.validate(), CompositionError);
}

TEST_CASE("spec json round trip keeps the hash") {
    const auto spec = NetworkSpec::micro_resnet(2, 32, 10);
    const auto back = NetworkSpec::from_json(spec.to_json());
    CHECK(back.hash() == spec.hash());
    CHECK(back.parameter_count() == spec.parameter_count());
    CHECK(NetworkSpec::micro_resnet(1, 32, 10).hash() != spec.hash());
    CHECK(hash_to_hex(spec.hash()).size() == 64);
}

TEST_CASE("checkpoint save/load is bit exact") {
    const auto spec = NetworkSpec::micro_resnet(2, 16, 10);
    Rng rng(3);
    auto ckpt = build(spec, rng);
    ckpt.spec_hash = spec.hash();
    ckpt.meta.regime = Regime::lif;
    ckpt.meta.T = 6;
    ckpt.meta.epoch = 4;
    ckpt.meta.spec = spec;
    const auto path = scratch("roundtrip.snnf");
    save(ckpt, path);
    const auto back = load(path);
    CHECK(back == ckpt);
    CHECK(back.meta.regime == Regime::lif);
    CHECK(back.meta.T == 6);
    CHECK(back.meta.epoch == 4);
    REQUIRE(back.meta.spec.has_value());
    CHECK(back.meta.spec->hash() == spec.hash());
    save(back, scratch("roundtrip2.snnf"));
    CHECK(slurp(path) == slurp(scratch("roundtrip2.snnf")));
}

TEST_CASE("damaged checkpoints are rejected") {
    const auto spec = NetworkSpec::mlp(4, {8}, 3);
    Rng rng(1);
    const auto ckpt = build(spec, rng);
    const auto path = scratch("damaged.snnf");
    save(ckpt, path);
    const std::string good = slurp(path);

    std::string bad = good;
    bad[0] = 'X';
    spit(path, bad);
    CHECK_THROWS_AS(load(path), FormatError);

    bad = good;
    bad[4] = 9;  // version
    spit(path, bad);
    CHECK_THROWS_AS(load(path), FormatError);

    spit(path, good.substr(0, good.size() - 3));
    CHECK_THROWS_AS(load(path), CorruptionError);

    spit(path, good + "x");
    CHECK_THROWS_AS(load(path), CorruptionError);

    spit(path, good.substr(0, 2));
    CHECK_THROWS_AS(load(path), CorruptionError);
}

TEST_CASE("tensor files round trip at 32-bit precision") {
    Rng rng(5);
    Tensor t = testing::random_tensor(rng, {2, 3, 4});
    for (double& v : t.data()) v = static_cast<double>(static_cast<float>(v));
    const auto path = scratch("blob.snnt");
    save_tensor(t, path);
    CHECK(load_tensor(path) == t);
    std::string bytes = slurp(path);
    bytes[1] = '?';
    spit(path, bytes);
    CHECK_THROWS_AS(load_tensor(path), FormatError);
}

TEST_CASE("zero input gives zero spikes") {
    const auto spec = NetworkSpec::micro_resnet(1, 16, 10);
    Rng rng(2);
    const auto ckpt = build(spec, rng);
    ForwardOptions opts;
    opts.regime = Regime::lif;
    opts.T = 4;
    const Tensor zeros(Shape{2, 1, 16, 16});
    const auto out = forward(ckpt, spec, zeros, opts);
    CHECK(out.shape() == Shape{4, 2, 10});
    for (double v : out.data()) CHECK(v == 0.0);
    const auto maps = feature_maps(ckpt, spec, zeros, opts, {"stem.act", "stage2.act2"});
    for (const auto& [slot, t] : maps) {
        for (double v : t.data()) CHECK(v == 0.0);
    }
}

TEST_CASE("spiking outputs are binary and rates are bounded") {
    const auto spec = NetworkSpec::micro_resnet(1, 16, 10);
    Rng rng(2);
    const auto ckpt = build(spec, rng);
    ForwardOptions opts;
    opts.regime = Regime::lif;
    opts.T = 5;
    const auto out = forward(ckpt, spec, sample_input(3, 1, 16, 11), opts);
    for (double v : out.data()) CHECK((v == 0.0 || v == 1.0));
}

TEST_CASE("sann with a step activation equals one LIF step") {
    const auto spec = NetworkSpec::micro_resnet(1, 16, 10);
    Rng rng(4);
    const auto ckpt = build(spec, rng);
    const Tensor x = sample_input(3, 1, 16, 12);
    ForwardOptions sann;
    sann.regime = Regime::sann;
    sann.srelu_step = true;
    ForwardOptions lif;
    lif.regime = Regime::lif;
    lif.T = 1;
    CHECK(forward(ckpt, spec, x, sann) == forward(ckpt, spec, x, lif));
}

TEST_CASE("LIAF with a step activation equals LIF at every step") {
    const auto spec = NetworkSpec::micro_resnet(1, 16, 10);
    Rng rng(6);
    const auto ckpt = build(spec, rng);
    Rng data(13);
    const Tensor seq = testing::random_tensor(data, {4, 2, 1, 16, 16}, 0.0, 1.5);
    ForwardOptions lif;
    lif.regime = Regime::lif;
    lif.T = 4;
    ForwardOptions liaf = lif;
    liaf.regime = Regime::liaf;
    liaf.neuron.liaf_activation = neurons::AnalogActivation::step;
    CHECK(forward(ckpt, spec, seq, liaf) == forward(ckpt, spec, seq, lif));
}

TEST_CASE("forward rejects mismatched input and unknown slots") {
    const auto spec = NetworkSpec::micro_resnet(1, 16, 10);
    Rng rng(1);
    const auto ckpt = build(spec, rng);
    ForwardOptions ann;
    CHECK_THROWS_AS(forward(ckpt, spec, Tensor(Shape{1, 2, 16, 16}), ann), DimensionError);
    CHECK_THROWS_AS(feature_maps(ckpt, spec, Tensor(Shape{1, 1, 16, 16}), ann, {"stage3.act1"}), NameError);
    ForwardOptions sann;
    sann.regime = Regime::sann;
    CHECK_THROWS_AS(forward(ckpt, spec, Tensor(Shape{2, 1, 1, 16, 16}), sann), DimensionError);
}

TEST_CASE("activation slots cover residual blocks") {
    const auto slots = NetworkSpec::micro_resnet(1, 16, 10).activation_slots();
    const std::vector<std::string> want = {"stem.act", "stage1.act1", "stage1.act2",
                                           "stage2.act1", "stage2.act2", "fc.act"};
    CHECK(slots == want);
    CHECK(NetworkSpec::micro_resnet(1, 16, 10).first_layer() == "stem");
}
}
