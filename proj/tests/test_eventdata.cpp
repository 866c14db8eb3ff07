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
#include "snnf/eventdata.hpp"
#include "test_util.hpp"

using namespace snnf;
using namespace snnf::eventdata;

namespace {

std::filesystem::path scratch(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / "snnf_test_eventdata" / name;
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

void spit(const std::filesystem::path& p, const std::string& bytes) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

EventStream small_stream() {
    EventStream s;
    s.height = 3;
    s.width = 4;
    s.events = {{0, 0, 0, 1}, {3, 2, 10, -1}, {1, 1, 10, 1}, {2, 0, 55, 1}, {2, 0, 56, 1}, {0, 2, 99, -1}};
    return s;
}

}  // namespace

TEST_SUITE("eventdata") {
TEST_CASE("event ratio counts both polarities over the pixel count") {
    Tensor f(Shape{2, 4, 4});
    f.at({0, 0, 0}) = 1;
    f.at({0, 3, 2}) = 1;
    f.at({1, 1, 1}) = 1;
    CHECK(event_ratio(f) == 3.0 / 16.0);
    f.at({1, 2, 2}) = 2;
    CHECK_THROWS_AS(event_ratio(f), ContractError);
    CHECK_THROWS_AS(event_ratio(Tensor(Shape{3, 4, 4})), DimensionError);
}

TEST_CASE("net polarity") {
    Tensor f(Shape{2, 1, 3});
    f.at({0, 0, 0}) = 1;
    f.at({1, 0, 1}) = 1;
    f.at({0, 0, 2}) = 1;
    f.at({1, 0, 2}) = 1;
    const auto p = net_polarity(f);
    CHECK(p.values() == std::vector<double>{1, -1, 0});
}

TEST_CASE("binning follows the uniform bin rule and conserves events") {
    const auto s = small_stream();
    const int T = 4;
    const auto counts = bin_events(s, T, BinMode::count);
    CHECK(counts.shape() == Shape{4, 2, 3, 4});
    // Oracle: span = 100, bin = t * 4 / 100.
    Tensor want(Shape{4, 2, 3, 4});
    for (const auto& e : s.events) {
        const std::size_t bin = static_cast<std::size_t>(e.t) * T / 100;
        want.at({bin, e.p > 0 ? 0u : 1u, e.y, e.x}) += 1;
    }
    CHECK(counts == want);
    double total = 0;
    for (double v : counts.data()) total += v;
    CHECK(total == static_cast<double>(s.events.size()));

    const auto binary = bin_events(s, T, BinMode::binary);
    for (std::size_t i = 0; i < binary.size(); ++i) CHECK(binary[i] == (counts[i] > 0 ? 1.0 : 0.0));

    // Rebinning to one bin keeps every event.
    const auto one = bin_events(s, 1, BinMode::count);
    total = 0;
    for (double v : one.data()) total += v;
    CHECK(total == static_cast<double>(s.events.size()));
    CHECK_THROWS_AS(bin_events(s, 0, BinMode::count), ContractError);
}

TEST_CASE("fixed-threshold differencing matches a hand example") {
    Tensor frames(Shape{3, 2, 2});
    // frame 0 -> 1: +0.5 at (0,0), -0.3 at (1,1), +0.05 at (1,0)
    frames.at({1, 0, 0}) = 0.5;
    frames.at({1, 1, 1}) = -0.3;
    frames.at({1, 0, 1}) = 0.05;
    // frame 1 -> 2: back to zero at (0,0)
    frames.at({2, 1, 1}) = -0.3;
    frames.at({2, 0, 1}) = 0.05;
    ThresholdPolicy policy;
    policy.dynamic = false;
    policy.threshold = 0.1;
    const auto s = frames_to_events(frames, policy, nullptr, 1000);
    const std::vector<Event> want = {{0, 0, 1000, 1}, {1, 1, 1000, -1}, {0, 0, 2000, -1}};
    CHECK(s.events == want);
    CHECK(s.height == 2);
    CHECK(s.width == 2);
    s.validate();
}

TEST_CASE("dynamic threshold lands in the band or flags the frame") {
    // A ramp whose change grows across the frame: the share of pixels above
    // a threshold varies smoothly, so the band is reachable.
    const std::size_t n = 20;
    Tensor frames(Shape{2, n, n});
    for (std::size_t y = 0; y < n; ++y) {
        for (std::size_t x = 0; x < n; ++x) {
            frames.at({1, y, x}) = static_cast<double>(y * n + x) / static_cast<double>(n * n);
        }
    }
    ThresholdPolicy policy;
    ConversionReport report;
    const auto s = frames_to_events(frames, policy, &report);
    REQUIRE(report.ratios.size() == 1);
    CHECK_FALSE(report.flagged[0]);
    CHECK(std::abs(report.ratios[0] - policy.target_ratio) <= policy.band);
    CHECK(static_cast<double>(s.events.size()) / (n * n) == doctest::Approx(report.ratios[0]));

    Tensor still(Shape{3, n, n}, 0.4);
    ConversionReport flat;
    const auto none = frames_to_events(still, policy, &flat);
    CHECK(none.events.empty());
    CHECK(flat.flagged == std::vector<bool>{true, true});
}

TEST_CASE("event files round trip and reject damage") {
    const auto dir = scratch("esev");
    const auto path = dir / "s.esev";
    const auto s = small_stream();
    write_events(s, path);
    CHECK(read_events(path) == s);
    CHECK(std::filesystem::file_size(path) == 4 + 2 + 2 + 2 + 4 + 9 * s.events.size());

    const std::string good = slurp(path);
    std::string bad = good;
    bad[0] = 'Q';
    spit(path, bad);
    CHECK_THROWS_AS(read_events(path), FormatError);
    spit(path, good.substr(0, good.size() - 4));
    CHECK_THROWS_AS(read_events(path), CorruptionError);
    spit(path, good + "zz");
    CHECK_THROWS_AS(read_events(path), CorruptionError);

    auto wrong = s;
    wrong.events[2].p = 0;
    CHECK_THROWS_AS(wrong.validate(), FormatError);
    wrong = s;
    wrong.events[1].x = 4;
    CHECK_THROWS_AS(wrong.validate(), FormatError);
    wrong = s;
    wrong.events[4].t = 1;
    CHECK_THROWS_AS(wrong.validate(), FormatError);
}

TEST_CASE("synthetic generation is deterministic and loads") {
    SyntheticTaskSpec spec;
    spec.classes = 3;
    spec.train_per_class = 2;
    spec.test_per_class = 1;
    spec.size = 16;
    spec.seed = 5;
    const auto a = scratch("gen_a"), b = scratch("gen_b");
    const auto ma = generate_synthetic(spec, a);
    const auto mb = generate_synthetic(spec, b);
    CHECK(ma.to_json() == mb.to_json());
    CHECK(ma.samples.size() == 9);
    for (const auto& s : ma.samples) CHECK(slurp(a / s.path) == slurp(b / s.path));

    const auto train = load_dataset(a / "manifest.json", "train", 1);
    CHECK(train.size() == 6);
    CHECK_FALSE(train.sequence);
    CHECK(train.inputs[0].shape() == Shape{1, 16, 16});
    const std::vector<std::size_t> idx = {0, 2};
    CHECK(train.batch(idx).shape() == Shape{2, 1, 16, 16});
    CHECK(train.order(0) == std::vector<std::size_t>{0, 1, 2, 3, 4, 5});
    CHECK(train.order(9) == train.order(9));

    spec.seed = 6;
    const auto other = generate_synthetic(spec, scratch("gen_c"));
    CHECK(other.to_json() != ma.to_json());
}

TEST_CASE("moving shapes produce event sequences") {
    SyntheticTaskSpec spec;
    spec.task = Task::moving_shapes;
    spec.classes = 2;
    spec.train_per_class = 2;
    spec.test_per_class = 1;
    spec.size = 16;
    spec.frames = 5;
    spec.seed = 3;
    const auto dir = scratch("moving");
    const auto m = generate_synthetic(spec, dir);
    CHECK(m.input == Shape{2, 16, 16});
    CHECK(m.frames_converted == 6 * 4);
    CHECK(m.frames_in_band + m.frames_flagged <= m.frames_converted);
    const auto test = load_dataset(dir / "manifest.json", "test", 3);
    CHECK(test.sequence);
    CHECK(test.inputs[0].shape() == Shape{3, 2, 16, 16});
    const std::vector<std::size_t> idx = {0, 1};
    CHECK(test.batch(idx).shape() == Shape{3, 2, 2, 16, 16});
}

TEST_CASE("missing sample files are listed") {
    SyntheticTaskSpec spec;
    spec.classes = 2;
    spec.train_per_class = 1;
    spec.test_per_class = 1;
    spec.size = 8;
    const auto dir = scratch("missing");
    const auto m = generate_synthetic(spec, dir);
    std::filesystem::remove(dir / m.samples[0].path);
    try {
        load_dataset(dir / "manifest.json", "", 1);
        FAIL("expected ManifestError");
    } catch (const ManifestError& e) {
        CHECK(std::string(e.what()).find(m.samples[0].path) != std::string::npos);
    }
    CHECK_THROWS_AS(read_manifest(dir / "absent.json"), ManifestError);
    spit(dir / "bad.json", "{\"format_version\": 99}");
    CHECK_THROWS_AS(read_manifest(dir / "bad.json"), ManifestError);
}
}
