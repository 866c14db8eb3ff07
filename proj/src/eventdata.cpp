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

#include "snnf/eventdata.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <numbers>

#include "binary_io.hpp"
#include "json.hpp"
#include "snnf/error.hpp"
#include "snnf/model.hpp"

namespace snnf::eventdata {

using nlohmann::json;

namespace {

constexpr char kEventMagic[4] = {'E', 'S', 'E', 'V'};

struct Point {
    double x, y;
};

struct Stroke {
    enum Kind { segment, ring } kind;
    Point a;  // segment start or ring center
    Point b;  // segment end
    double radius = 0.0;
};

std::vector<Stroke> glyph_strokes(std::size_t cls) {
    const auto seg = [](double x0, double y0, double x1, double y1) {
        return Stroke{Stroke::segment, {x0, y0}, {x1, y1}};
    };
    const auto ring = [](double r) { return Stroke{Stroke::ring, {0, 0}, {0, 0}, r}; };
    switch (cls % 10) {
        case 0: return {seg(-0.75, 0, 0.75, 0)};
        case 1: return {seg(0, -0.75, 0, 0.75)};
        case 2: return {seg(-0.55, 0.55, 0.55, -0.55)};
        case 3: return {seg(-0.55, -0.55, 0.55, 0.55)};
        case 4: return {seg(-0.7, 0, 0.7, 0), seg(0, -0.7, 0, 0.7)};
        case 5: return {seg(-0.5, 0.5, 0.5, -0.5), seg(-0.5, -0.5, 0.5, 0.5)};
        case 6: return {ring(0.6)};
        case 7: return {ring(0.3), ring(0.7)};
        case 8: return {seg(-0.65, -0.6, 0.65, -0.6), seg(0, -0.6, 0, 0.7)};
        default: return {seg(-0.5, -0.7, -0.5, 0.6), seg(-0.5, 0.6, 0.65, 0.6)};
    }
}

double distance(const Stroke& s, Point p) {
    if (s.kind == Stroke::ring) return std::abs(std::hypot(p.x - s.a.x, p.y - s.a.y) - s.radius);
    const double dx = s.b.x - s.a.x, dy = s.b.y - s.a.y;
    const double len2 = dx * dx + dy * dy;
    const double u = std::clamp(((p.x - s.a.x) * dx + (p.y - s.a.y) * dy) / len2, 0.0, 1.0);
    return std::hypot(p.x - (s.a.x + u * dx), p.y - (s.a.y + u * dy));
}

struct Pose {
    double cx, cy;    // center in pixels
    double scale;     // pixels per glyph unit
    double angle;     // radians
    double half_width;
    double fg, bg;
};

// Rasterizes the strokes with 3x3 supersampling, then adds noise.
Tensor rasterize(const std::vector<Stroke>& strokes, std::size_t size, const Pose& pose, double noise, Rng& rng) {
    Tensor img(Shape{size, size});
    const double c = std::cos(-pose.angle), s = std::sin(-pose.angle);
    for (std::size_t y = 0; y < size; ++y) {
        for (std::size_t x = 0; x < size; ++x) {
            int inside = 0;
            for (int sy = 0; sy < 3; ++sy) {
                for (int sx = 0; sx < 3; ++sx) {
                    const double px = (static_cast<double>(x) + (sx + 0.5) / 3.0 - pose.cx) / pose.scale;
                    const double py = (static_cast<double>(y) + (sy + 0.5) / 3.0 - pose.cy) / pose.scale;
                    const Point q{c * px - s * py, s * px + c * py};
                    for (const auto& st : strokes) {
                        if (distance(st, q) <= pose.half_width) {
                            ++inside;
                            break;
                        }
                    }
                }
            }
            const double cover = inside / 9.0;
            double v = pose.bg + (pose.fg - pose.bg) * cover;
            if (noise > 0.0) v += noise * rng.normal();
            img.at({y, x}) = std::clamp(v, 0.0, 1.0);
        }
    }
    return img;
}

Pose random_pose(std::size_t size, Rng& rng) {
    const double half = static_cast<double>(size) / 2.0;
    Pose p{};
    p.cx = half + rng.uniform(-3.0, 3.0);
    p.cy = half + rng.uniform(-3.0, 3.0);
    p.scale = half * rng.uniform(0.6, 0.85);
    p.angle = rng.uniform(-15.0, 15.0) * std::numbers::pi / 180.0;
    p.half_width = rng.uniform(0.09, 0.14);
    p.fg = rng.uniform(0.7, 1.0);
    p.bg = rng.uniform(0.0, 0.25);
    return p;
}

std::size_t count_above(const Tensor& prev, const Tensor& next, std::size_t offset_prev, std::size_t offset_next,
                        std::size_t pixels, double threshold) {
    std::size_t n = 0;
    for (std::size_t i = 0; i < pixels; ++i) {
        if (std::abs(next[offset_next + i] - prev[offset_prev + i]) > threshold) ++n;
    }
    return n;
}

std::string sample_name(std::size_t index, const char* ext) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%06zu%s", index, ext);
    return buf;
}

}  // namespace

void EventStream::validate() const {
    std::uint32_t last = 0;
    for (std::size_t i = 0; i < events.size(); ++i) {
        const auto& e = events[i];
        if (e.x >= width || e.y >= height) {
            throw FormatError("event " + std::to_string(i) + " at (" + std::to_string(e.x) + "," +
                              std::to_string(e.y) + ") is outside " + std::to_string(width) + "x" +
                              std::to_string(height));
        }
        if (e.p != 1 && e.p != -1) throw FormatError("event " + std::to_string(i) + " has polarity not in {-1,+1}");
        if (i > 0 && e.t < last) throw FormatError("event " + std::to_string(i) + " has a decreasing timestamp");
        last = e.t;
    }
}

std::string to_string(BinMode mode) { return mode == BinMode::count ? "count" : "binary"; }

BinMode bin_mode_from_string(const std::string& name) {
    if (name == "count") return BinMode::count;
    if (name == "binary") return BinMode::binary;
    throw ConfigError("unknown bin mode '" + name + "'");
}

Tensor bin_events(const EventStream& stream, int T, BinMode mode) {
    if (T < 1) throw ContractError("bin_events: T must be >= 1");
    if (stream.height == 0 || stream.width == 0) throw ContractError("bin_events: empty sensor geometry");
    const std::size_t h = stream.height, w = stream.width;
    Tensor frames(Shape{static_cast<std::size_t>(T), 2, h, w});
    if (stream.events.empty()) return frames;
    const std::uint64_t t0 = stream.events.front().t;
    const std::uint64_t span = static_cast<std::uint64_t>(stream.events.back().t) - t0 + 1;
    for (const auto& e : stream.events) {
        const auto bin = static_cast<std::size_t>((e.t - t0) * static_cast<std::uint64_t>(T) / span);
        const std::size_t channel = e.p > 0 ? 0 : 1;
        double& cell = frames[((bin * 2 + channel) * h + e.y) * w + e.x];
        cell = mode == BinMode::count ? cell + 1.0 : 1.0;
    }
    return frames;
}

double event_ratio(const Tensor& frame) {
    if (frame.rank() != 3 || frame.dim(0) != 2) {
        throw DimensionError("event_ratio: expected a [2,H,W] frame, got " + shape_to_string(frame.shape()));
    }
    double events = 0.0;
    for (double v : frame.data()) {
        if (v != 0.0 && v != 1.0) throw ContractError("event_ratio: frame is not binary");
        events += v;
    }
    return events / static_cast<double>(frame.dim(1) * frame.dim(2));
}

Tensor net_polarity(const Tensor& frame) {
    if (frame.rank() != 3 || frame.dim(0) != 2) {
        throw DimensionError("net_polarity: expected a [2,H,W] frame, got " + shape_to_string(frame.shape()));
    }
    const std::size_t pixels = frame.dim(1) * frame.dim(2);
    Tensor out(Shape{frame.dim(1), frame.dim(2)});
    for (std::size_t i = 0; i < pixels; ++i) {
        const double net = frame[i] - frame[pixels + i];
        out[i] = net > 0.0 ? 1.0 : (net < 0.0 ? -1.0 : 0.0);
    }
    return out;
}

EventStream frames_to_events(const Tensor& frames, const ThresholdPolicy& policy, ConversionReport* report,
                             std::uint32_t frame_interval) {
    if (frames.rank() != 3) {
        throw DimensionError("frames_to_events: expected [T,H,W], got " + shape_to_string(frames.shape()));
    }
    if (frames.dim(0) < 2) throw ContractError("frames_to_events: need at least 2 frames");
    if (frames.dim(1) > 65535 || frames.dim(2) > 65535) throw DimensionError("frames_to_events: frame too large");
    const std::size_t h = frames.dim(1), w = frames.dim(2), pixels = h * w;
    EventStream out;
    out.height = static_cast<std::uint16_t>(h);
    out.width = static_cast<std::uint16_t>(w);
    const double lower = (policy.target_ratio - policy.band) * static_cast<double>(pixels);
    const double upper = (policy.target_ratio + policy.band) * static_cast<double>(pixels);

    for (std::size_t k = 1; k < frames.dim(0); ++k) {
        const std::size_t prev = (k - 1) * pixels, next = k * pixels;
        const auto count = [&](double th) {
            return static_cast<double>(count_above(frames, frames, prev, next, pixels, th));
        };
        double threshold = policy.threshold;
        bool flagged = false;
        if (policy.dynamic) {
            double lo = policy.min_threshold, hi = policy.max_threshold;
            if (count(lo) < lower) {
                threshold = lo;
                flagged = true;
            } else if (count(hi) > upper) {
                threshold = hi;
                flagged = true;
            } else {
                threshold = hi;
                for (int it = 0; it < policy.max_iterations; ++it) {
                    const double mid = 0.5 * (lo + hi);
                    const double n = count(mid);
                    threshold = mid;
                    if (n >= lower && n <= upper) break;
                    if (n > upper) {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
            }
        }
        std::size_t emitted = 0;
        for (std::size_t y = 0; y < h; ++y) {
            for (std::size_t x = 0; x < w; ++x) {
                const double delta = frames[next + y * w + x] - frames[prev + y * w + x];
                if (std::abs(delta) > threshold) {
                    out.events.push_back(Event{static_cast<std::uint16_t>(x), static_cast<std::uint16_t>(y),
                                               static_cast<std::uint32_t>(k) * frame_interval,
                                               static_cast<std::int8_t>(delta > 0 ? 1 : -1)});
                    ++emitted;
                }
            }
        }
        if (report) {
            report->thresholds.push_back(threshold);
            report->ratios.push_back(static_cast<double>(emitted) / static_cast<double>(pixels));
            report->flagged.push_back(flagged);
        }
    }
    return out;
}

void write_events(const EventStream& stream, const std::filesystem::path& path) {
    stream.validate();
    std::string out(kEventMagic, 4);
    io::put<std::uint16_t>(out, kEventFormatVersion);
    io::put<std::uint16_t>(out, stream.height);
    io::put<std::uint16_t>(out, stream.width);
    io::put<std::uint32_t>(out, static_cast<std::uint32_t>(stream.events.size()));
    for (const auto& e : stream.events) {
        io::put<std::uint16_t>(out, e.x);
        io::put<std::uint16_t>(out, e.y);
        io::put<std::uint32_t>(out, e.t);
        io::put<std::int8_t>(out, e.p);
    }
    io::write_file_atomic(path, out);
}

EventStream read_events(const std::filesystem::path& path) {
    const std::string bytes = io::read_file(path);
    const std::string what = "event file '" + path.string() + "'";
    io::Reader in(bytes, what);
    const auto magic = in.take(4);
    if (std::memcmp(magic.data(), kEventMagic, 4) != 0) throw FormatError(what + ": bad magic");
    const auto version = in.get<std::uint16_t>();
    if (version != kEventFormatVersion) throw FormatError(what + ": unsupported version " + std::to_string(version));
    EventStream s;
    s.height = in.get<std::uint16_t>();
    s.width = in.get<std::uint16_t>();
    const auto count = in.get<std::uint32_t>();
    if (count > in.remaining() / 9) throw CorruptionError(what + ": record count exceeds file size");
    s.events.resize(count);
    for (auto& e : s.events) {
        e.x = in.get<std::uint16_t>();
        e.y = in.get<std::uint16_t>();
        e.t = in.get<std::uint32_t>();
        e.p = in.get<std::int8_t>();
    }
    if (in.remaining() != 0) throw CorruptionError(what + ": trailing bytes");
    s.validate();
    return s;
}

std::string to_string(Task task) { return task == Task::static_shapes ? "static-shapes" : "moving-shapes"; }

Task task_from_string(const std::string& name) {
    if (name == "static-shapes") return Task::static_shapes;
    if (name == "moving-shapes") return Task::moving_shapes;
    throw ConfigError("unknown task '" + name + "' (expected static-shapes or moving-shapes)");
}

std::string Manifest::to_json() const {
    json j{{"format_version", kFormatVersion}, {"task", eventdata::to_string(task)}, {"classes", classes},
           {"input", input}, {"seed", seed}, {"samples", json::array()}};
    for (const auto& s : samples) j["samples"].push_back({{"path", s.path}, {"label", s.label}, {"split", s.split}});
    if (task == Task::moving_shapes) {
        j["conversion"] = {{"frames", frames_converted}, {"flagged", frames_flagged}, {"in_band", frames_in_band}};
    }
    return j.dump(1);
}

Manifest Manifest::from_json(const std::string& text) {
    try {
        const auto j = json::parse(text);
        if (j.at("format_version").get<int>() != kFormatVersion) {
            throw ManifestError("manifest: unsupported format_version");
        }
        Manifest m;
        m.task = task_from_string(j.at("task").get<std::string>());
        m.classes = j.at("classes").get<std::size_t>();
        m.input = j.at("input").get<Shape>();
        m.seed = j.value("seed", std::uint64_t{0});
        for (const auto& s : j.at("samples")) {
            m.samples.push_back({s.at("path").get<std::string>(), s.at("label").get<std::size_t>(),
                                 s.at("split").get<std::string>()});
            if (m.samples.back().label >= m.classes) throw ManifestError("manifest: label out of range");
        }
        if (j.contains("conversion")) {
            m.frames_converted = j["conversion"].value("frames", std::size_t{0});
            m.frames_flagged = j["conversion"].value("flagged", std::size_t{0});
            m.frames_in_band = j["conversion"].value("in_band", std::size_t{0});
        }
        return m;
    } catch (const json::exception& e) {
        throw ManifestError(std::string("manifest: ") + e.what());
    }
}

Tensor render_glyph(std::size_t cls, std::size_t size, Rng& rng) {
    const Pose pose = random_pose(size, rng);
    return rasterize(glyph_strokes(cls), size, pose, 0.05, rng);
}

Tensor render_moving_glyph(std::size_t cls, std::size_t size, int frames, Rng& rng) {
    Pose pose = random_pose(size, rng);
    const double heading = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const double speed = rng.uniform(1.0, 1.5);
    const double spin = rng.uniform(-2.0, 2.0) * std::numbers::pi / 180.0;
    const double vx = speed * std::cos(heading), vy = speed * std::sin(heading);
    const double mid = 0.5 * (frames - 1);
    const auto strokes = glyph_strokes(cls);
    Tensor video(Shape{static_cast<std::size_t>(frames), size, size});
    for (int k = 0; k < frames; ++k) {
        Pose p = pose;
        p.cx += vx * (k - mid);
        p.cy += vy * (k - mid);
        p.angle += spin * (k - mid);
        const Tensor img = rasterize(strokes, size, p, 0.02, rng);
        std::copy(img.data().begin(), img.data().end(), video.data().begin() + static_cast<long>(k * size * size));
    }
    return video;
}

Manifest generate_synthetic(const SyntheticTaskSpec& spec, const std::filesystem::path& dir) {
    if (spec.classes < 1 || spec.classes > 10) throw ConfigError("synthetic task: classes must be in [1,10]");
    if (spec.size < 8 || spec.size > 1024) throw ConfigError("synthetic task: size must be in [8,1024]");
    if (spec.task == Task::moving_shapes && spec.frames < 2) throw ConfigError("synthetic task: frames must be >= 2");
    Manifest m;
    m.task = spec.task;
    m.classes = spec.classes;
    m.seed = spec.seed;
    m.input = spec.task == Task::static_shapes ? Shape{1, spec.size, spec.size} : Shape{2, spec.size, spec.size};
    const Rng root(spec.seed);
    ThresholdPolicy policy;
    policy.target_ratio = spec.target_ratio;
    policy.band = spec.band;

    std::size_t index = 0;
    for (const std::string split : {"train", "test"}) {
        const std::size_t per_class = split == "train" ? spec.train_per_class : spec.test_per_class;
        std::filesystem::create_directories(dir / split);
        for (std::size_t i = 0; i < per_class; ++i) {
            for (std::size_t cls = 0; cls < spec.classes; ++cls, ++index) {
                Rng rng = root.fork(index);
                if (spec.task == Task::static_shapes) {
                    const auto name = split + "/" + sample_name(index, ".snnt");
                    const Tensor img = render_glyph(cls, spec.size, rng).reshaped({1, spec.size, spec.size});
                    model::save_tensor(img, dir / name);
                    m.samples.push_back({name, cls, split});
                } else {
                    const auto name = split + "/" + sample_name(index, ".esev");
                    ConversionReport report;
                    const auto stream =
                        frames_to_events(render_moving_glyph(cls, spec.size, spec.frames, rng), policy, &report);
                    write_events(stream, dir / name);
                    m.samples.push_back({name, cls, split});
                    for (std::size_t k = 0; k < report.ratios.size(); ++k) {
                        ++m.frames_converted;
                        if (report.flagged[k]) {
                            ++m.frames_flagged;
                        } else if (std::abs(report.ratios[k] - spec.target_ratio) <= spec.band + 1e-12) {
                            ++m.frames_in_band;
                        }
                    }
                }
            }
        }
    }
    io::write_file_atomic(dir / "manifest.json", m.to_json());
    return m;
}

Manifest read_manifest(const std::filesystem::path& path) {
    std::string text;
    try {
        text = io::read_file(path);
    } catch (const std::exception& e) {
        throw ManifestError(std::string("manifest: ") + e.what());
    }
    return Manifest::from_json(text);
}

std::vector<std::size_t> Dataset::order(std::uint64_t seed) const {
    std::vector<std::size_t> idx(size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    if (seed != 0) {
        Rng rng(seed);
        rng.shuffle(idx);
    }
    return idx;
}

Tensor Dataset::batch(std::span<const std::size_t> indices) const {
    if (indices.empty()) throw ContractError("dataset: empty batch");
    const Tensor& first = inputs.at(indices[0]);
    const std::size_t n = indices.size();
    if (!sequence) {
        Shape s{n};
        s.insert(s.end(), first.shape().begin(), first.shape().end());
        Tensor out(s);
        for (std::size_t i = 0; i < n; ++i) {
            const Tensor& x = inputs.at(indices[i]);
            std::copy(x.data().begin(), x.data().end(), out.data().begin() + static_cast<long>(i * x.size()));
        }
        return out;
    }
    const std::size_t steps = first.dim(0);
    const std::size_t inner = first.size() / steps;
    Shape s{steps, n};
    s.insert(s.end(), first.shape().begin() + 1, first.shape().end());
    Tensor out(s);
    for (std::size_t i = 0; i < n; ++i) {
        const Tensor& x = inputs.at(indices[i]);
        for (std::size_t t = 0; t < steps; ++t) {
            std::copy_n(x.data().begin() + static_cast<long>(t * inner), inner,
                        out.data().begin() + static_cast<long>((t * n + i) * inner));
        }
    }
    return out;
}

Dataset load_dataset(const std::filesystem::path& manifest_path, const std::string& split, int T, BinMode mode) {
    const Manifest m = read_manifest(manifest_path);
    const auto root = manifest_path.parent_path();
    std::vector<std::string> missing;
    for (const auto& s : m.samples) {
        if ((split.empty() || s.split == split) && !std::filesystem::exists(root / s.path)) missing.push_back(s.path);
    }
    if (!missing.empty()) {
        std::string list;
        for (const auto& p : missing) list += (list.empty() ? "" : ", ") + p;
        throw ManifestError("manifest '" + manifest_path.string() + "' references missing files: " + list);
    }
    Dataset d;
    d.classes = m.classes;
    d.sequence = m.task == Task::moving_shapes;
    for (const auto& s : m.samples) {
        if (!split.empty() && s.split != split) continue;
        if (d.sequence) {
            d.inputs.push_back(bin_events(read_events(root / s.path), T, mode));
        } else {
            d.inputs.push_back(model::load_tensor(root / s.path));
        }
        d.labels.push_back(s.label);
    }
    return d;
}

}  // namespace snnf::eventdata
