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
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "snnf/tensor.hpp"

namespace snnf::eventdata {

/// One address-event record. p is -1 or +1.
struct Event {
    std::uint16_t x = 0;
    std::uint16_t y = 0;
    std::uint32_t t = 0;
    std::int8_t p = 1;

    friend bool operator==(const Event&, const Event&) = default;
};

struct EventStream {
    std::uint16_t height = 0;
    std::uint16_t width = 0;
    std::vector<Event> events;

    /// Coordinates in range, polarity in {-1,+1}, timestamps nondecreasing.
    void validate() const;

    friend bool operator==(const EventStream&, const EventStream&) = default;
};

enum class BinMode { count, binary };

std::string to_string(BinMode mode);
BinMode bin_mode_from_string(const std::string& name);

/// Uniform time binning into [T,2,H,W]; channel 0 counts positive events,
/// channel 1 negative. Bin of an event: (t - t_first) * T / (t_last - t_first + 1).
Tensor bin_events(const EventStream& stream, int T, BinMode mode);

/// (#positive + #negative) / (H*W) of a binary [2,H,W] frame.
double event_ratio(const Tensor& frame);

/// Per-pixel net polarity of a [2,H,W] frame: values in {-1, 0, 1}.
Tensor net_polarity(const Tensor& frame);

struct ThresholdPolicy {
    bool dynamic = true;
    double threshold = 0.1;  ///< fixed contrast threshold when !dynamic
    double target_ratio = 0.15;
    double band = 0.03;
    double min_threshold = 1e-3;
    double max_threshold = 1.0;
    int max_iterations = 60;
};

/// Per emitted frame (one per consecutive frame pair).
struct ConversionReport {
    std::vector<double> thresholds;
    std::vector<double> ratios;
    std::vector<bool> flagged;  ///< threshold pinned at a bound because the band was unreachable
};

/// Temporal differencing of a grayscale video [T,H,W]. A pixel whose change
/// between frames k-1 and k exceeds the threshold in magnitude emits one event
/// at t = k * frame_interval with the sign of the change. The dynamic policy
/// bisects the threshold per frame pair until the pair's event ratio falls in
/// target_ratio +- band.
EventStream frames_to_events(const Tensor& frames, const ThresholdPolicy& policy,
                             ConversionReport* report = nullptr, std::uint32_t frame_interval = 1000);

inline constexpr std::uint16_t kEventFormatVersion = 1;

/// "ESEV" | version u16 | H u16 | W u16 | count u32 | (x u16, y u16, t u32, p i8)*; little-endian.
void write_events(const EventStream& stream, const std::filesystem::path& path);
EventStream read_events(const std::filesystem::path& path);

enum class Task { static_shapes, moving_shapes };

std::string to_string(Task task);
Task task_from_string(const std::string& name);

struct SyntheticTaskSpec {
    Task task = Task::static_shapes;
    std::size_t classes = 10;
    std::size_t train_per_class = 100;
    std::size_t test_per_class = 20;
    std::size_t size = 32;
    int frames = 9;  ///< video length for moving-shapes (yields frames-1 event frames)
    std::uint64_t seed = 0;
    double target_ratio = 0.15;
    double band = 0.03;
};

struct Sample {
    std::string path;  ///< relative to the manifest directory
    std::size_t label = 0;
    std::string split;
};

struct Manifest {
    static constexpr int kFormatVersion = 1;

    Task task = Task::static_shapes;
    std::size_t classes = 0;
    Shape input;  ///< per-step sample shape [C,H,W]
    std::uint64_t seed = 0;
    std::vector<Sample> samples;
    /// moving-shapes only: frames converted, frames flagged, unflagged frames inside the band.
    std::size_t frames_converted = 0;
    std::size_t frames_flagged = 0;
    std::size_t frames_in_band = 0;

    std::string to_json() const;
    static Manifest from_json(const std::string& text);
};

/// Renders a class glyph into [H,W] with the jitter drawn from rng.
Tensor render_glyph(std::size_t cls, std::size_t size, Rng& rng);

/// Grayscale video [frames,H,W] of one glyph translating and rotating.
Tensor render_moving_glyph(std::size_t cls, std::size_t size, int frames, Rng& rng);

/// Writes sample files plus manifest.json into dir. Deterministic per spec.
Manifest generate_synthetic(const SyntheticTaskSpec& spec, const std::filesystem::path& dir);

Manifest read_manifest(const std::filesystem::path& path);

/// In-memory split. Static samples are [C,H,W]; event samples are [T,2,H,W].
struct Dataset {
    std::vector<Tensor> inputs;
    std::vector<std::size_t> labels;
    std::size_t classes = 0;
    bool sequence = false;

    std::size_t size() const noexcept { return labels.size(); }
    /// Sample order for one epoch: identity when seed is 0, else a seeded shuffle.
    std::vector<std::size_t> order(std::uint64_t seed) const;
    /// Stacks the given samples into [N,...] (static) or [T,N,...] (sequence).
    Tensor batch(std::span<const std::size_t> indices) const;
};

/// Loads every sample of one split ("train", "test" or "" for all). Event
/// samples go through bin_events with the given T and mode.
Dataset load_dataset(const std::filesystem::path& manifest_path, const std::string& split, int T,
                     BinMode mode = BinMode::binary);

}  // namespace snnf::eventdata
