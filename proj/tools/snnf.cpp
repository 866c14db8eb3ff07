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

// snnf: data generation, training pipelines, evaluation and weight analysis.

#include <malloc.h>

#include <cstdio>
#include <fstream>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "snnf/analysis.hpp"
#include "snnf/error.hpp"
#include "snnf/eventdata.hpp"
#include "snnf/gradcheck.hpp"
#include "snnf/model.hpp"
#include "snnf/pipeline.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace snnf;

namespace {

constexpr const char* kVersion = "0.1.0";

enum Exit { ok = 0, failure = 1, config_error = 2, data_error = 3, divergence = 4 };

// Refuses to reuse a non-empty directory unless asked to.
void claim_out(const fs::path& out, bool force) {
    if (fs::exists(out) && !fs::is_empty(out) && !force) {
        throw ConfigError("output directory '" + out.string() + "' is not empty (pass --force to overwrite)");
    }
    fs::create_directories(out);
}

void write_run_info(const fs::path& out, const std::string& command, std::uint64_t seed, const json& args) {
    const json info{{"command", command}, {"seed", seed}, {"snnf_version", kVersion}, {"args", args}};
    std::ofstream(out / "run.json") << info.dump(2) << "\n";
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == ',') {
            if (!cur.empty()) out.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

struct GenArgs {
    std::string task = "static-shapes";
    fs::path out;
    eventdata::SyntheticTaskSpec spec;
    bool force = false;
};

int cmd_gen(GenArgs& a) {
    a.spec.task = eventdata::task_from_string(a.task);
    claim_out(a.out, a.force);
    const auto m = eventdata::generate_synthetic(a.spec, a.out);
    json j{{"manifest", (a.out / "manifest.json").string()}, {"samples", m.samples.size()}, {"input", m.input}};
    if (m.task == eventdata::Task::moving_shapes) {
        j["frames_converted"] = m.frames_converted;
        j["frames_flagged"] = m.frames_flagged;
        j["frames_in_band"] = m.frames_in_band;
    }
    std::cout << j.dump(2) << "\n";
    return ok;
}

struct TrainArgs {
    fs::path data;
    fs::path out;
    fs::path init;
    std::string regime = "ann";
    int epochs = 10;
    double lr = 0.05;
    std::vector<int> decay;
    double factor = 0.1;
    std::size_t batch = 16;
    int T = 6;
    double momentum = 0.0;
    double readout_scale = 1.0;
    std::string loss = "auto";
    std::string frozen;
    std::uint64_t seed = 1;
    bool force = false;
};

int cmd_train(const TrainArgs& a) {
    pipeline::StageOptions o;
    o.name = "train-" + a.regime;
    o.regime = model::regime_from_string(a.regime);
    o.epochs = a.epochs;
    o.lr = {a.lr, a.decay, a.factor};
    o.batch_size = a.batch;
    o.T = a.T;
    o.momentum = a.momentum;
    o.readout_scale = a.readout_scale;
    o.loss = a.loss == "auto" ? pipeline::default_loss(o.regime) : pipeline::loss_from_string(a.loss);
    o.anneal = o.regime == model::Regime::sann;
    o.seed = Rng(a.seed).fork(200).seed();
    o.log = true;
    for (const auto& f : split_list(a.frozen)) o.frozen.insert(f);
    o.validate();
    const auto manifest = eventdata::read_manifest(a.data);
    const auto spec = pipeline::network_for(manifest);
    const auto train = eventdata::load_dataset(a.data, "train", a.T);
    const auto test = eventdata::load_dataset(a.data, "test", a.T);
    claim_out(a.out, a.force);
    model::Checkpoint init;
    if (a.init.empty()) {
        Rng rng = Rng(a.seed).fork(1);
        init = model::build(spec, rng);
    } else {
        Rng rng = Rng(a.seed).fork(101);
        auto t = pipeline::transplant(model::load(a.init), spec, rng);
        if (!t.changed.empty()) {
            std::string names;
            for (const auto& n : t.changed) names += " " + n;
            std::cerr << "reinitialized:" << names << "\n";
        }
        init = std::move(t.ckpt);
    }
    const auto res = pipeline::train_stage(init, spec, train, test, o);
    model::save(res.ckpt, a.out / "final.snnf");
    std::ofstream(a.out / "report.csv") << pipeline::TrainReport::csv_header() << res.report.csv_rows();
    std::ofstream(a.out / "summary.json") << res.report.summary().dump(2) << "\n";
    write_run_info(a.out, "train", a.seed,
                   {{"data", a.data.string()}, {"regime", a.regime}, {"epochs", a.epochs}, {"lr", a.lr},
                    {"batch", a.batch}, {"T", a.T}, {"momentum", a.momentum}, {"loss", a.loss}});
    std::cout << res.report.summary().dump(2) << "\n";
    return ok;
}

struct PipeArgs {
    fs::path config;
    fs::path out;
    std::optional<std::uint64_t> seed;
    std::string resume;
    bool force = false;
};

int cmd_pipe(const PipeArgs& a) {
    auto cfg = pipeline::load_config(a.config);
    if (a.seed) cfg.seed = *a.seed;
    pipeline::RunOptions run;
    run.out = a.out;
    run.log = true;
    if (!a.resume.empty()) {
        run.resume_stage = pipeline::resolve_stage(cfg, a.resume);
        if (!fs::exists(a.out)) throw ConfigError("--resume: run directory '" + a.out.string() + "' does not exist");
    } else {
        claim_out(a.out, a.force);
    }
    write_run_info(a.out, "run-pipe", cfg.seed, {{"config", a.config.string()}, {"resume", a.resume}});
    const auto res = pipeline::run_pipeline(cfg, run);
    std::cout << res.summary().dump(2) << "\n";
    return ok;
}

struct EvalArgs {
    fs::path ckpt;
    fs::path data;
    std::string split = "test";
    int T = 0;
    std::size_t batch = 64;
};

int cmd_eval(const EvalArgs& a) {
    const auto ckpt = model::load(a.ckpt);
    if (!ckpt.meta.spec) throw FormatError("checkpoint '" + a.ckpt.string() + "' carries no network description");
    const auto& spec = *ckpt.meta.spec;
    model::ForwardOptions f;
    f.regime = ckpt.meta.regime;
    f.T = model::is_spiking(f.regime) ? (a.T > 0 ? a.T : ckpt.meta.T) : 1;
    f.neuron = ckpt.meta.neuron;
    f.alpha = ckpt.meta.alpha;
    f.srelu_step = ckpt.meta.srelu_step;
    const auto data = eventdata::load_dataset(a.data, a.split, f.T);
    const auto r = pipeline::evaluate(ckpt, spec, f, data, a.batch, true);
    json j{{"accuracy", r.accuracy}, {"samples", r.samples}, {"regime", model::to_string(f.regime)}, {"T", f.T}};
    j["spike_rate"] = r.spike_rate ? json(*r.spike_rate) : json(nullptr);
    std::cout << j.dump(2) << "\n";
    return ok;
}

struct AnalyzeArgs {
    fs::path a;
    fs::path b;
    std::string layer;
    fs::path out;
    std::string normalization = "joint-minmax";
    std::vector<std::string> series;
    bool force = false;
};

int cmd_analyze(const AnalyzeArgs& a) {
    const auto norm = analysis::normalization_from_string(a.normalization);
    const auto ca = model::load(a.a);
    const auto cb = model::load(a.b);
    const auto sim = analysis::kernel_similarity_matrix(ca, cb, a.layer, norm);
    const auto match = analysis::hungarian_match(sim);
    claim_out(a.out, a.force);
    std::ofstream(a.out / "similarity.csv") << sim.to_csv();
    std::ofstream(a.out / "matching.json") << analysis::matching_manifest(a.layer, match, sim).dump(2) << "\n";
    if (ca.at(a.layer.ends_with(".weight") ? a.layer : a.layer + ".weight").rank() == 4) {
        analysis::export_weight_maps(ca, a.layer, {}, a.out / "maps_a");
        analysis::export_weight_maps(cb, a.layer, match.permutation, a.out / "maps_b");
    }
    json result{{"layer", a.layer}, {"mean_ssim", match.mean()}, {"total_score", match.total},
                {"permutation", match.permutation}};
    if (!a.series.empty()) {
        std::vector<std::pair<int, model::Checkpoint>> series;
        for (const auto& f : a.series) {
            auto c = model::load(f);
            const int epoch = c.meta.epoch;
            series.emplace_back(epoch, std::move(c));
        }
        const auto curve = analysis::similarity_curve(series, cb, a.layer, norm);
        std::ofstream(a.out / "curve.csv") << analysis::curve_to_csv(curve);
        result["curve"] = (a.out / "curve.csv").string();
    }
    std::cout << result.dump(2) << "\n";
    return ok;
}

struct ExportArgs {
    fs::path ckpt;
    fs::path out;
    std::string layer;
    fs::path data;
    std::size_t samples = 1;
    std::string slots;
    int T = 0;
    bool force = false;
};

int cmd_export(const ExportArgs& a) {
    const auto ckpt = model::load(a.ckpt);
    if (!ckpt.meta.spec) throw FormatError("checkpoint '" + a.ckpt.string() + "' carries no network description");
    const auto& spec = *ckpt.meta.spec;
    const std::string layer = a.layer.empty() ? spec.first_layer() : a.layer;
    claim_out(a.out, a.force);
    json result{{"weights", analysis::export_weight_maps(ckpt, layer, {}, a.out / "weights").size()}};
    if (!a.data.empty()) {
        model::ForwardOptions f;
        f.regime = ckpt.meta.regime;
        f.T = model::is_spiking(f.regime) ? (a.T > 0 ? a.T : ckpt.meta.T) : 1;
        f.neuron = ckpt.meta.neuron;
        f.alpha = ckpt.meta.alpha;
        f.srelu_step = ckpt.meta.srelu_step;
        const auto data = eventdata::load_dataset(a.data, "test", f.T);
        std::vector<std::size_t> idx;
        for (std::size_t i = 0; i < std::min(a.samples, data.size()); ++i) idx.push_back(i);
        auto slots = split_list(a.slots);
        if (slots.empty()) slots = spec.activation_slots();
        result["features"] =
            analysis::export_feature_maps(ckpt, spec, data.batch(idx), f, slots, a.out / "features").size();
    }
    std::cout << result.dump(2) << "\n";
    return ok;
}

struct GradArgs {
    gradcheck::Options opts;
    std::string regime = "liaf";
    double tolerance = 1e-5;
};

int cmd_grad(GradArgs& a) {
    a.opts.regime = model::regime_from_string(a.regime);
    const auto r = gradcheck::run(a.opts);
    const bool pass = r.max_rel_error < a.tolerance;
    std::cout << json{{"cases", r.cases},
                      {"coordinates", r.coordinates},
                      {"max_rel_error", r.max_rel_error},
                      {"tolerance", a.tolerance},
                      {"pass", pass}}
                     .dump(2)
              << "\n";
    return pass ? ok : failure;
}

}  // namespace

int main(int argc, char** argv) {
    // Training allocates and frees large tapes every batch; keep the heap
    // from returning them to the kernel each time.
    mallopt(M_MMAP_THRESHOLD, 1 << 30);
    mallopt(M_TRIM_THRESHOLD, 1 << 30);

    CLI::App app{"Spiking network transfer pipelines"};
    app.set_version_flag("--version", kVersion);
    app.require_subcommand(1);

    GenArgs gen;
    auto* g = app.add_subcommand("gen-data", "Generate a synthetic dataset");
    g->add_option("--task", gen.task, "static-shapes or moving-shapes");
    g->add_option("--out", gen.out, "Output directory")->required();
    g->add_option("--classes", gen.spec.classes);
    g->add_option("--train-per-class", gen.spec.train_per_class);
    g->add_option("--test-per-class", gen.spec.test_per_class);
    g->add_option("--size", gen.spec.size);
    g->add_option("--frames", gen.spec.frames);
    g->add_option("--seed", gen.spec.seed);
    g->add_option("--target-ratio", gen.spec.target_ratio);
    g->add_option("--band", gen.spec.band);
    g->add_flag("--force", gen.force);

    TrainArgs tr;
    auto* t = app.add_subcommand("train", "Train one regime on a dataset");
    t->add_option("--data", tr.data, "Dataset manifest")->required();
    t->add_option("--out", tr.out, "Run directory")->required();
    t->add_option("--init", tr.init, "Start from this checkpoint (transplanted)");
    t->add_option("--regime", tr.regime, "ann, sann, liaf or lif");
    t->add_option("--epochs", tr.epochs);
    t->add_option("--lr", tr.lr);
    t->add_option("--decay-epochs", tr.decay);
    t->add_option("--decay-factor", tr.factor);
    t->add_option("--batch", tr.batch);
    t->add_option("--T", tr.T);
    t->add_option("--momentum", tr.momentum);
    t->add_option("--readout-scale", tr.readout_scale);
    t->add_option("--loss", tr.loss, "auto, mse or cross-entropy (auto: cross-entropy for ann and liaf, else mse)");
    t->add_option("--frozen", tr.frozen, "Comma-separated parameter names");
    t->add_option("--seed", tr.seed);
    t->add_flag("--force", tr.force);

    PipeArgs pp;
    auto* p = app.add_subcommand("run-pipe", "Run a pipe-S or pipe-D configuration");
    p->add_option("--config", pp.config)->required()->check(CLI::ExistingFile);
    p->add_option("--out", pp.out)->required();
    p->add_option("--seed", pp.seed);
    p->add_option("--resume", pp.resume, "Stage to restart from (label, regime or 1-based index)");
    p->add_flag("--force", pp.force);

    EvalArgs ev;
    auto* e = app.add_subcommand("eval", "Accuracy and spike rate of a checkpoint");
    e->add_option("--ckpt", ev.ckpt)->required();
    e->add_option("--data", ev.data)->required();
    e->add_option("--split", ev.split);
    e->add_option("--T", ev.T, "Time steps (default: the checkpoint's)");
    e->add_option("--batch", ev.batch);

    AnalyzeArgs an;
    auto* a = app.add_subcommand("analyze", "Kernel similarity and matching between two checkpoints");
    a->add_option("--ckpt-a", an.a)->required();
    a->add_option("--ckpt-b", an.b)->required();
    a->add_option("--layer", an.layer)->required();
    a->add_option("--out", an.out)->required();
    a->add_option("--normalization", an.normalization, "joint-minmax or none");
    a->add_option("--series", an.series, "Checkpoints of A over epochs, compared with B");
    a->add_flag("--force", an.force);

    ExportArgs ex;
    auto* x = app.add_subcommand("export-maps", "Write kernels and feature maps as PGM images");
    x->add_option("--ckpt", ex.ckpt)->required();
    x->add_option("--out", ex.out)->required();
    x->add_option("--layer", ex.layer);
    x->add_option("--data", ex.data, "Manifest whose test samples drive the feature maps");
    x->add_option("--samples", ex.samples);
    x->add_option("--slots", ex.slots, "Comma-separated activation slots (default: all)");
    x->add_option("--T", ex.T);
    x->add_flag("--force", ex.force);

    GradArgs gr;
    auto* gc = app.add_subcommand("grad-check", "Compare backward with central differences");
    gc->add_option("--cases", gr.opts.cases);
    gc->add_option("--seed", gr.opts.seed);
    gc->add_option("--regime", gr.regime, "liaf or sann");
    gc->add_option("--max-T", gr.opts.max_T);
    gc->add_option("--tolerance", gr.tolerance);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& err) {
        const int code = app.exit(err);
        return code == 0 ? ok : config_error;
    }

    try {
        if (*g) return cmd_gen(gen);
        if (*t) return cmd_train(tr);
        if (*p) return cmd_pipe(pp);
        if (*e) return cmd_eval(ev);
        if (*a) return cmd_analyze(an);
        if (*x) return cmd_export(ex);
        if (*gc) return cmd_grad(gr);
    } catch (const DivergenceError& err) {
        std::cerr << "error: " << err.what() << "\n";
        return divergence;
    } catch (const ConfigError& err) {
        std::cerr << "config error: " << err.what() << "\n";
        return config_error;
    } catch (const NameError& err) {
        std::cerr << "error: " << err.what() << "\n";
        return config_error;
    } catch (const ManifestError& err) {
        std::cerr << "data error: " << err.what() << "\n";
        return data_error;
    } catch (const FormatError& err) {
        std::cerr << "data error: " << err.what() << "\n";
        return data_error;
    } catch (const CorruptionError& err) {
        std::cerr << "data error: " << err.what() << "\n";
        return data_error;
    } catch (const DimensionError& err) {
        std::cerr << "data error: " << err.what() << "\n";
        return data_error;
    } catch (const fs::filesystem_error& err) {
        std::cerr << "data error: " << err.what() << "\n";
        return data_error;
    } catch (const FilesystemError& err) {
        std::cerr << "data error: " << err.what() << "\n";
        return data_error;
    } catch (const std::exception& err) {
        std::cerr << "error: " << err.what() << "\n";
        return failure;
    }
    return failure;
}
