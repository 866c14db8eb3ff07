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

#include "snnf/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <limits>
#include <sstream>

#include "binary_io.hpp"
#include "snnf/autograd.hpp"
#include "snnf/error.hpp"

namespace snnf::pipeline {

using model::Checkpoint;
using model::NetworkSpec;
using model::Regime;
using nlohmann::json;

namespace {

// Typed access to one JSON object that remembers which keys were consumed,
// so leftovers can be reported as unknown fields.
class Fields {
public:
    Fields(const json& j, std::string where) : j_(j), where_(std::move(where)) {
        if (!j.is_object()) throw ConfigError(where_ + ": expected an object");
    }

    bool has(const std::string& key) const { return j_.contains(key); }

    template <typename T>
    T req(const std::string& key) {
        if (!j_.contains(key)) throw ConfigError(where_ + "." + key + ": required field is missing");
        return as<T>(key);
    }

    template <typename T>
    T opt(const std::string& key, T fallback) {
        return j_.contains(key) ? as<T>(key) : fallback;
    }

    const json& raw(const std::string& key) {
        seen_.insert(key);
        return j_.at(key);
    }

    std::string path(const std::string& key) const { return where_ + "." + key; }

    void done() const {
        for (const auto& [key, value] : j_.items()) {
            if (!seen_.count(key)) throw ConfigError(where_ + "." + key + ": unknown field");
        }
    }

private:
    template <typename T>
    T as(const std::string& key) {
        seen_.insert(key);
        try {
            return j_.at(key).get<T>();
        } catch (const json::exception&) {
            throw ConfigError(where_ + "." + key + ": wrong type (got " + std::string(j_.at(key).type_name()) + ")");
        }
    }

    const json& j_;
    std::string where_;
    std::set<std::string> seen_;
};

double elapsed(std::chrono::steady_clock::time_point since) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - since).count();
}

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

json nullable(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

std::string threshold_key(double t) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%.2f", t);
    return buf;
}

std::vector<std::size_t> labels_of(const eventdata::Dataset& data, std::span<const std::size_t> idx) {
    std::vector<std::size_t> out;
    out.reserve(idx.size());
    for (auto i : idx) out.push_back(data.labels.at(i));
    return out;
}

void check_data(const eventdata::Dataset& data, const NetworkSpec& spec, const std::string& what) {
    if (data.size() == 0) throw ContractError(what + ": dataset is empty");
    for (auto l : data.labels) {
        if (l >= spec.classes) {
            throw ContractError(what + ": label " + std::to_string(l) + " exceeds the network's " +
                                std::to_string(spec.classes) + " classes");
        }
    }
}

void check_regime_data(Regime regime, const eventdata::Dataset& data, const std::string& what) {
    if (data.sequence && !model::is_spiking(regime)) {
        throw ConfigError(what + ": " + model::to_string(regime) + " stages need static data");
    }
}

}  // namespace

std::string to_string(Loss loss) { return loss == Loss::cross_entropy ? "cross-entropy" : "mse"; }

Loss default_loss(Regime regime) {
    return regime == Regime::ann || regime == Regime::liaf ? Loss::cross_entropy : Loss::mse;
}

Loss loss_from_string(const std::string& name) {
    if (name == "cross-entropy") return Loss::cross_entropy;
    if (name == "mse") return Loss::mse;
    throw ConfigError("unknown loss '" + name + "' (expected cross-entropy or mse)");
}

double LrSchedule::at(int epoch) const {
    double rate = initial;
    for (int d : decay_epochs) {
        if (epoch >= d) rate *= factor;
    }
    return rate;
}

const std::vector<double>& TrainReport::standard_thresholds() {
    static const std::vector<double> t{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 0.95, 1.0};
    return t;
}

std::optional<double> TrainReport::initial_acc() const {
    if (!records.empty() && records.front().epoch == 0) return records.front().test_acc;
    return std::nullopt;
}

double TrainReport::first_epoch_acc() const {
    for (const auto& r : records) {
        if (r.epoch == 1) return r.test_acc;
    }
    throw ContractError("report '" + stage + "' has no epoch 1");
}

double TrainReport::best_acc() const {
    double best = -1.0;
    for (const auto& r : records) {
        if (r.epoch >= 1) best = std::max(best, r.test_acc);
    }
    if (best < 0.0) throw ContractError("report '" + stage + "' has no training epochs");
    return best;
}

int TrainReport::best_epoch() const {
    const double best = best_acc();
    for (const auto& r : records) {
        if (r.epoch >= 1 && r.test_acc == best) return r.epoch;
    }
    return 0;
}

double TrainReport::final_acc() const {
    if (records.empty()) throw ContractError("report '" + stage + "' is empty");
    return records.back().test_acc;
}

std::optional<int> TrainReport::epochs_to(double threshold) const {
    for (const auto& r : records) {
        if (r.epoch >= 1 && r.test_acc >= threshold) return r.epoch;
    }
    return std::nullopt;
}

std::string TrainReport::csv_header() { return "epoch,stage,regime,train_loss,test_acc,alpha,wall_s\n"; }

std::string TrainReport::csv_rows() const {
    std::string out;
    for (const auto& r : records) {
        char wall[32];
        std::snprintf(wall, sizeof(wall), "%.3f", r.wall_s);
        out += std::to_string(r.epoch) + "," + r.stage + "," + model::to_string(r.regime) + "," +
               (std::isfinite(r.train_loss) ? format_double(r.train_loss) : "") + "," + format_double(r.test_acc) +
               "," + (r.alpha ? (r.srelu_step ? std::string("step") : format_double(*r.alpha)) : "") + "," + wall +
               "\n";
    }
    return out;
}

json TrainReport::summary() const {
    json j{{"stage", stage}, {"regime", model::to_string(regime)}};
    int epochs = 0;
    json recs = json::array();
    for (const auto& r : records) {
        epochs = std::max(epochs, r.epoch);
        json row{{"epoch", r.epoch}, {"train_loss", nullable(r.train_loss)}, {"test_acc", r.test_acc}};
        if (r.alpha) row["alpha"] = r.srelu_step ? json("step") : json(*r.alpha);
        recs.push_back(row);
    }
    j["epochs"] = epochs;
    const auto init = initial_acc();
    j["initial_acc"] = init ? json(*init) : json(nullptr);
    if (epochs >= 1) {
        j["first_epoch_acc"] = first_epoch_acc();
        j["best_acc"] = best_acc();
        j["best_epoch"] = best_epoch();
        j["final_acc"] = final_acc();
        json ett = json::object();
        for (double t : standard_thresholds()) {
            const auto e = epochs_to(t);
            ett[threshold_key(t)] = e ? json(*e) : json(nullptr);
        }
        j["epochs_to_threshold"] = ett;
    }
    j["records"] = recs;
    return j;
}

json TrainReport::to_json() const {
    json recs = json::array();
    for (const auto& r : records) {
        json row{{"epoch", r.epoch},         {"train_loss", nullable(r.train_loss)},
                 {"test_acc", r.test_acc},   {"srelu_step", r.srelu_step},
                 {"wall_s", r.wall_s}};
        if (r.alpha) row["alpha"] = *r.alpha;
        recs.push_back(row);
    }
    return {{"stage", stage}, {"regime", model::to_string(regime)}, {"records", recs}};
}

TrainReport TrainReport::from_json(const json& j) {
    TrainReport rep;
    rep.stage = j.at("stage").get<std::string>();
    rep.regime = model::regime_from_string(j.at("regime").get<std::string>());
    for (const auto& row : j.at("records")) {
        EpochRecord r;
        r.epoch = row.at("epoch").get<int>();
        r.stage = rep.stage;
        r.regime = rep.regime;
        r.train_loss = row.at("train_loss").is_null() ? std::numeric_limits<double>::quiet_NaN()
                                                      : row.at("train_loss").get<double>();
        r.test_acc = row.at("test_acc").get<double>();
        r.srelu_step = row.value("srelu_step", false);
        r.wall_s = row.value("wall_s", 0.0);
        if (row.contains("alpha")) r.alpha = row.at("alpha").get<double>();
        rep.records.push_back(r);
    }
    return rep;
}

void StageOptions::validate() const {
    const std::string where = "stage '" + name + "'";
    if (epochs < 1) throw ConfigError(where + ": epochs must be >= 1");
    if (batch_size < 1) throw ConfigError(where + ": batch_size must be >= 1");
    if (eval_batch < 1) throw ConfigError(where + ": eval_batch must be >= 1");
    if (!std::isfinite(lr.initial) || lr.initial < 0.0) throw ConfigError(where + ": learning rate must be >= 0");
    if (!std::isfinite(lr.factor) || lr.factor < 0.0) throw ConfigError(where + ": decay factor must be >= 0");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError(where + ": momentum must be in [0,1)");
    if (!(readout_scale > 0.0) || !std::isfinite(readout_scale)) {
        throw ConfigError(where + ": readout_scale must be > 0");
    }
    if (model::is_spiking(regime) && T < 1) throw ConfigError(where + ": T must be >= 1");
    if (anneal && regime != Regime::sann) throw ConfigError(where + ": annealing needs the sann regime");
}

model::ForwardOptions forward_options(const StageOptions& opts, int epoch) {
    model::ForwardOptions f;
    f.regime = opts.regime;
    f.T = model::is_spiking(opts.regime) ? opts.T : 1;
    f.neuron = opts.neuron;
    if (opts.regime == Regime::sann) {
        if (opts.anneal) {
            const auto p = neurons::srelu_alpha_schedule(epoch, opts.epochs - 1, opts.neuron.u_th);
            f.alpha = p.alpha();
            f.srelu_step = p.is_step();
        } else {
            f.alpha = opts.neuron.u_th;
            f.srelu_step = true;
        }
    }
    return f;
}

EvalResult evaluate(const Checkpoint& ckpt, const NetworkSpec& spec, const model::ForwardOptions& fopts,
                    const eventdata::Dataset& data, std::size_t batch, bool spike_rate) {
    check_data(data, spec, "evaluate");
    check_regime_data(fopts.regime, data, "evaluate");
    if (batch < 1) throw ContractError("evaluate: batch must be >= 1");
    auto opts = fopts;
    const bool rates = spike_rate && opts.regime == Regime::lif;
    opts.keep_features = rates;
    const auto order = data.order(0);
    EvalResult res;
    std::size_t correct = 0;
    double fired = 0.0, cells = 0.0;
    for (std::size_t start = 0; start < order.size(); start += batch) {
        const std::span<const std::size_t> idx(order.data() + start, std::min(batch, order.size() - start));
        autograd::Tape tape;
        const auto trace = model::record_forward(tape, ckpt, spec, data.batch(idx), opts);
        const Tensor& out = tape.value(trace.rate);
        const std::size_t classes = out.dim(1);
        for (std::size_t i = 0; i < idx.size(); ++i) {
            std::size_t best = 0;
            for (std::size_t c = 1; c < classes; ++c) {
                if (out[i * classes + c] > out[i * classes + best]) best = c;
            }
            if (best == data.labels[idx[i]]) ++correct;
        }
        if (rates) {
            for (const auto& [slot, steps] : trace.features) {
                for (const auto& v : steps) {
                    for (double x : tape.value(v).data()) fired += x;
                    cells += static_cast<double>(tape.value(v).size());
                }
            }
        }
    }
    res.samples = order.size();
    res.accuracy = static_cast<double>(correct) / static_cast<double>(order.size());
    if (rates && cells > 0.0) res.spike_rate = fired / cells;
    return res;
}

StageResult train_stage(const Checkpoint& ckpt, const NetworkSpec& spec, const eventdata::Dataset& train,
                        const eventdata::Dataset& test, const StageOptions& opts) {
    opts.validate();
    check_data(train, spec, "stage '" + opts.name + "' train data");
    check_data(test, spec, "stage '" + opts.name + "' test data");
    check_regime_data(opts.regime, train, "stage '" + opts.name + "'");
    if (ckpt.spec_hash != spec.hash()) {
        throw ContractError("stage '" + opts.name + "': checkpoint was built for a different network");
    }
    for (const auto& name : opts.frozen) ckpt.at(name);

    StageResult res{ckpt, TrainReport{opts.name, opts.regime, {}}};
    Checkpoint& cur = res.ckpt;
    std::map<std::string, Tensor> velocity;
    const Rng root(opts.seed);

    const auto record = [&](int epoch, double loss, const model::ForwardOptions& f,
                            std::chrono::steady_clock::time_point t0) {
        EpochRecord r;
        r.epoch = epoch;
        r.stage = opts.name;
        r.regime = opts.regime;
        r.train_loss = loss;
        r.test_acc = evaluate(cur, spec, f, test, opts.eval_batch).accuracy;
        r.wall_s = elapsed(t0);
        if (opts.regime == Regime::sann) {
            r.alpha = f.srelu_step ? opts.neuron.u_th : f.alpha;
            r.srelu_step = f.srelu_step;
        }
        res.report.records.push_back(r);
        if (opts.log) {
            std::fprintf(stderr, "[%s] epoch %d loss %s acc %.4f (%.1fs)\n", opts.name.c_str(), epoch,
                         std::isfinite(loss) ? format_double(loss).substr(0, 8).c_str() : "-", r.test_acc, r.wall_s);
        }
        if (opts.on_epoch) opts.on_epoch(epoch, cur);
    };

    if (opts.eval_initial) {
        record(0, std::numeric_limits<double>::quiet_NaN(), forward_options(opts, 0),
               std::chrono::steady_clock::now());
    }

    for (int e = 0; e < opts.epochs; ++e) {
        const auto t0 = std::chrono::steady_clock::now();
        const auto f = forward_options(opts, e);
        const double lr = opts.lr.at(e);
        const auto order = train.order(root.fork(static_cast<std::uint64_t>(e) + 1).seed() | 1u);
        double loss_sum = 0.0;
        for (std::size_t start = 0; start < order.size(); start += opts.batch_size) {
            const std::span<const std::size_t> idx(order.data() + start,
                                                   std::min(opts.batch_size, order.size() - start));
            autograd::Tape tape;
            const auto trace = model::record_forward(tape, cur, spec, train.batch(idx), f, true);
            const auto labels = labels_of(train, idx);
            const autograd::Var loss =
                opts.loss == Loss::cross_entropy
                    ? autograd::softmax_cross_entropy(tape, autograd::scale(tape, trace.rate, opts.readout_scale),
                                                      labels)
                    : autograd::mse_onehot(tape, trace.rate, labels);
            const double value = tape.value(loss)[0];
            if (!std::isfinite(value)) {
                throw DivergenceError("stage '" + opts.name + "': non-finite loss in epoch " + std::to_string(e + 1) +
                                          " (last finite epoch " + std::to_string(e) + ")",
                                      e);
            }
            loss_sum += value * static_cast<double>(idx.size());
            if (lr == 0.0) continue;
            const auto grads = tape.backward(loss);
            for (auto& [name, p] : cur.params) {
                if (opts.frozen.count(name)) continue;
                const Tensor& g = grads.parameter(name);
                auto pd = p.data();
                const auto gd = g.data();
                if (opts.momentum > 0.0) {
                    auto [it, fresh] = velocity.try_emplace(name, p.shape());
                    auto vd = it->second.data();
                    for (std::size_t i = 0; i < pd.size(); ++i) {
                        vd[i] = opts.momentum * vd[i] + gd[i];
                        pd[i] -= lr * vd[i];
                    }
                } else {
                    for (std::size_t i = 0; i < pd.size(); ++i) pd[i] -= lr * gd[i];
                }
            }
        }
        for (const auto& [name, p] : cur.params) {
            if (!p.all_finite()) {
                throw DivergenceError("stage '" + opts.name + "': parameter '" + name + "' became non-finite in epoch " +
                                          std::to_string(e + 1) + " (last finite epoch " + std::to_string(e) + ")",
                                      e);
            }
        }
        record(e + 1, loss_sum / static_cast<double>(order.size()), f, t0);
    }

    cur.commit();
    const auto last = forward_options(opts, opts.epochs - 1);
    cur.meta.regime = opts.regime;
    cur.meta.T = last.T;
    cur.meta.epoch = ckpt.meta.epoch + opts.epochs;
    cur.meta.seed = opts.seed;
    cur.meta.alpha = last.alpha;
    cur.meta.srelu_step = last.srelu_step;
    cur.meta.neuron = opts.neuron;
    cur.meta.spec = spec;
    return res;
}

TransplantResult transplant(const Checkpoint& source, const NetworkSpec& target_spec, Rng& rng) {
    TransplantResult res{model::build(target_spec, rng), {}};
    std::size_t overlap = 0;
    for (const auto& info : target_spec.parameters()) {
        const auto it = source.params.find(info.name);
        if (it != source.params.end() && it->second.shape() == info.shape) {
            res.ckpt.params[info.name] = it->second;
            ++overlap;
        } else {
            res.changed.insert(info.name);
        }
    }
    if (overlap == 0) {
        throw TransplantError("transplant: no source parameter matches the target network by name and shape; "
                              "the source and target specs are probably not a pipeline pair");
    }
    const auto target_meta_spec = res.ckpt.meta.spec;
    res.ckpt.meta = source.meta;
    res.ckpt.meta.spec = target_meta_spec;
    return res;
}

StageResult warmup(const Checkpoint& ckpt, const NetworkSpec& spec, const std::set<std::string>& changed,
                   const eventdata::Dataset& train, const eventdata::Dataset& test, StageOptions opts) {
    for (const auto& name : changed) ckpt.at(name);
    if (changed.empty()) return {ckpt, TrainReport{opts.name, opts.regime, {}}};
    opts.frozen.clear();
    for (const auto& [name, t] : ckpt.params) {
        if (!changed.count(name)) opts.frozen.insert(name);
    }
    return train_stage(ckpt, spec, train, test, opts);
}

json synthetic_to_json(const eventdata::SyntheticTaskSpec& s) {
    return {{"task", eventdata::to_string(s.task)},
            {"classes", s.classes},
            {"train_per_class", s.train_per_class},
            {"test_per_class", s.test_per_class},
            {"size", s.size},
            {"frames", s.frames},
            {"seed", s.seed},
            {"target_ratio", s.target_ratio},
            {"band", s.band}};
}

eventdata::SyntheticTaskSpec synthetic_from_json(const json& j, const std::string& where) {
    Fields f(j, where);
    eventdata::SyntheticTaskSpec s;
    try {
        s.task = eventdata::task_from_string(f.req<std::string>("task"));
    } catch (const ConfigError& e) {
        throw ConfigError(f.path("task") + ": " + e.what());
    }
    s.classes = f.opt("classes", s.classes);
    s.train_per_class = f.opt("train_per_class", s.train_per_class);
    s.test_per_class = f.opt("test_per_class", s.test_per_class);
    s.size = f.opt("size", s.size);
    s.frames = f.opt("frames", s.frames);
    s.seed = f.opt("seed", std::uint64_t{1});
    s.target_ratio = f.opt("target_ratio", s.target_ratio);
    s.band = f.opt("band", s.band);
    f.done();
    if (s.train_per_class < 1 || s.test_per_class < 1) throw ConfigError(where + ": per-class counts must be >= 1");
    if (s.size % 4 != 0) throw ConfigError(f.path("size") + ": must be a multiple of 4");
    return s;
}

namespace {

json data_ref_to_json(const DataRef& d) {
    if (d.generate) return {{"generate", synthetic_to_json(*d.generate)}};
    return d.manifest.string();
}

DataRef data_ref_from_json(const json& j, const std::string& where, const std::filesystem::path& base) {
    DataRef d;
    if (j.is_string()) {
        d.manifest = j.get<std::string>();
        if (d.manifest.is_relative() && !base.empty()) d.manifest = base / d.manifest;
        return d;
    }
    Fields f(j, where);
    d.generate = synthetic_from_json(f.raw("generate"), f.path("generate"));
    f.done();
    return d;
}

StageConfig stage_from_json(const json& j, const std::string& where) {
    Fields f(j, where);
    StageConfig s;
    try {
        s.regime = model::regime_from_string(f.req<std::string>("regime"));
    } catch (const ConfigError& e) {
        throw ConfigError(f.path("regime") + ": " + e.what());
    }
    s.epochs = f.req<int>("epochs");
    if (f.has("lr")) {
        const json& lr = f.raw("lr");
        if (lr.is_number()) {
            s.lr.initial = lr.get<double>();
        } else {
            Fields g(lr, f.path("lr"));
            s.lr.initial = g.req<double>("initial");
            s.lr.decay_epochs = g.opt("decay_epochs", std::vector<int>{});
            s.lr.factor = g.opt("factor", 0.1);
            g.done();
        }
    }
    s.batch_size = f.opt("batch_size", s.batch_size);
    s.T = f.opt("T", model::is_spiking(s.regime) ? 6 : 1);
    s.momentum = f.opt("momentum", 0.0);
    const auto frozen = f.opt("frozen", std::vector<std::string>{});
    s.frozen = {frozen.begin(), frozen.end()};
    s.warmup_epochs = f.opt("warmup_epochs", 0);
    s.readout_scale = f.opt("readout_scale", 1.0);
    if (f.has("loss")) {
        try {
            s.loss = loss_from_string(f.opt<std::string>("loss", ""));
        } catch (const ConfigError& e) {
            throw ConfigError(f.path("loss") + ": " + e.what());
        }
    }
    f.done();
    return s;
}

json stage_to_json(const StageConfig& s) {
    json j{{"regime", model::to_string(s.regime)},
            {"epochs", s.epochs},
            {"lr", {{"initial", s.lr.initial}, {"decay_epochs", s.lr.decay_epochs}, {"factor", s.lr.factor}}},
            {"batch_size", s.batch_size},
            {"T", s.T},
            {"momentum", s.momentum},
            {"frozen", std::vector<std::string>(s.frozen.begin(), s.frozen.end())},
            {"warmup_epochs", s.warmup_epochs},
            {"readout_scale", s.readout_scale}};
    if (s.loss) j["loss"] = pipeline::to_string(*s.loss);
    return j;
}

}  // namespace

void PipelineConfig::validate() const {
    const auto expected = pipe == PipeKind::S ? std::vector<Regime>{Regime::sann, Regime::lif}
                                              : std::vector<Regime>{Regime::ann, Regime::liaf, Regime::lif};
    std::string want;
    for (auto r : expected) want += (want.empty() ? "" : ",") + model::to_string(r);
    if (stages.size() != expected.size()) {
        throw ConfigError(std::string("stages: pipe ") + (pipe == PipeKind::S ? "S" : "D") + " needs stages [" + want +
                          "], got " + std::to_string(stages.size()));
    }
    for (std::size_t i = 0; i < stages.size(); ++i) {
        const auto& s = stages[i];
        const std::string where = "stages[" + std::to_string(i) + "]";
        if (s.regime != expected[i]) {
            throw ConfigError(where + ".regime: expected " + model::to_string(expected[i]) + " (stages [" + want +
                              "]), got " + model::to_string(s.regime));
        }
        if (s.warmup_epochs < 0) throw ConfigError(where + ".warmup_epochs: must be >= 0");
        if (i == 0 && s.warmup_epochs > 0) throw ConfigError(where + ".warmup_epochs: the first stage has no transplant");
        StageOptions o;
        o.name = where;
        o.regime = s.regime;
        o.epochs = s.epochs;
        o.lr = s.lr;
        o.batch_size = s.batch_size;
        o.T = s.T;
        o.momentum = s.momentum;
        o.readout_scale = s.readout_scale;
        o.eval_batch = eval_batch;
        o.validate();
    }
    if (target.manifest.empty() && !target.generate) throw ConfigError("data.target: missing");
}

json PipelineConfig::to_json() const {
    json stages_j = json::array();
    for (const auto& s : stages) stages_j.push_back(stage_to_json(s));
    json data{{"target", data_ref_to_json(target)}};
    if (!source.manifest.empty() || source.generate) data["source"] = data_ref_to_json(source);
    return {{"pipe", pipe == PipeKind::S ? "S" : "D"},
            {"seed", seed},
            {"data", data},
            {"neuron", neuron.to_json()},
            {"loss", loss ? pipeline::to_string(*loss) : "auto"},
            {"bin_mode", eventdata::to_string(bin_mode)},
            {"eval_batch", eval_batch},
            {"stages", stages_j}};
}

PipelineConfig PipelineConfig::from_json(const json& j, const std::filesystem::path& base_dir) {
    Fields f(j, "config");
    PipelineConfig c;
    const auto pipe = f.req<std::string>("pipe");
    if (pipe == "S") {
        c.pipe = PipeKind::S;
    } else if (pipe == "D") {
        c.pipe = PipeKind::D;
    } else {
        throw ConfigError("config.pipe: expected \"S\" or \"D\", got \"" + pipe + "\"");
    }
    c.seed = f.opt("seed", c.seed);
    {
        Fields d(f.raw("data"), "config.data");
        c.target = data_ref_from_json(d.raw("target"), "config.data.target", base_dir);
        if (d.has("source")) c.source = data_ref_from_json(d.raw("source"), "config.data.source", base_dir);
        d.done();
    }
    if (f.has("neuron")) {
        static const std::set<std::string> known = {"tau",          "u_th",       "liaf_activation",
                                                    "surrogate",    "detach_reset", "srelu_grad"};
        const json& n = f.raw("neuron");
        if (!n.is_object()) throw ConfigError("config.neuron: expected an object");
        for (const auto& [key, value] : n.items()) {
            if (!known.count(key)) throw ConfigError("config.neuron." + key + ": unknown field");
        }
        try {
            c.neuron = model::NeuronConfig::from_json(f.raw("neuron"));
        } catch (const json::exception& e) {
            throw ConfigError(std::string("config.neuron: ") + e.what());
        }
    }
    try {
        const auto loss = f.opt<std::string>("loss", "auto");
        if (loss != "auto") c.loss = loss_from_string(loss);
        c.bin_mode = eventdata::bin_mode_from_string(f.opt<std::string>("bin_mode", "binary"));
    } catch (const ConfigError& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    c.eval_batch = f.opt("eval_batch", c.eval_batch);
    const json& stages = f.raw("stages");
    if (!stages.is_array()) throw ConfigError("config.stages: expected an array");
    for (std::size_t i = 0; i < stages.size(); ++i) {
        c.stages.push_back(stage_from_json(stages[i], "config.stages[" + std::to_string(i) + "]"));
    }
    f.done();
    c.validate();
    return c;
}

PipelineConfig load_config(const std::filesystem::path& path) {
    std::string text;
    try {
        text = io::read_file(path);
    } catch (const Error& e) {
        throw ConfigError(e.what());
    }
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError("config '" + path.string() + "': " + e.what());
    }
    return PipelineConfig::from_json(j, path.parent_path());
}

std::string stage_label(const PipelineConfig& cfg, std::size_t index) {
    return "stage" + std::to_string(index + 1) + "-" + model::to_string(cfg.stages.at(index).regime);
}

std::size_t resolve_stage(const PipelineConfig& cfg, const std::string& name) {
    for (std::size_t i = 0; i < cfg.stages.size(); ++i) {
        if (name == stage_label(cfg, i) || name == model::to_string(cfg.stages[i].regime) ||
            name == std::to_string(i + 1)) {
            return i;
        }
    }
    std::string labels;
    for (std::size_t i = 0; i < cfg.stages.size(); ++i) labels += (i ? ", " : "") + stage_label(cfg, i);
    throw ConfigError("unknown stage '" + name + "' (stages: " + labels + ")");
}

NetworkSpec network_for(const eventdata::Manifest& manifest) {
    if (manifest.input.size() != 3 || manifest.input[1] != manifest.input[2]) {
        throw ConfigError("dataset input " + shape_to_string(manifest.input) + " is not a square [C,S,S] image");
    }
    return NetworkSpec::micro_resnet(manifest.input[0], manifest.input[1], manifest.classes);
}

json PipelineResult::summary() const {
    json stages = json::array();
    for (const auto& r : reports) stages.push_back(r.summary());
    json ch = json::array();
    for (const auto& c : changed) ch.push_back(std::vector<std::string>(c.begin(), c.end()));
    return {{"stages", stages},
            {"changed", ch},
            {"final_acc", reports.empty() ? json(nullptr) : json(final_report().final_acc())},
            {"spec_hash", model::hash_to_hex(final.spec_hash)}};
}

namespace {

struct DataCache {
    std::map<std::pair<std::string, int>, eventdata::Dataset> sets;
    eventdata::BinMode mode;

    const eventdata::Dataset& get(const std::filesystem::path& manifest, const std::string& split, bool sequence,
                                  int T) {
        const auto key = std::make_pair(manifest.string() + "#" + split, sequence ? T : 0);
        auto it = sets.find(key);
        if (it == sets.end()) {
            it = sets.emplace(key, eventdata::load_dataset(manifest, split, T, mode)).first;
        }
        return it->second;
    }
};

std::filesystem::path resolve_data(const DataRef& ref, const std::filesystem::path& out, const std::string& name) {
    if (!ref.generate) return ref.manifest;
    if (out.empty()) throw ConfigError("data." + name + ": generated data needs a run directory");
    const auto dir = out / "data" / name;
    const auto manifest = dir / "manifest.json";
    if (!std::filesystem::exists(manifest)) eventdata::generate_synthetic(*ref.generate, dir);
    return manifest;
}

void write_text(const std::filesystem::path& path, const std::string& text) { io::write_file_atomic(path, text); }

}  // namespace

PipelineResult run_pipeline(const PipelineConfig& cfg, const RunOptions& run) {
    cfg.validate();
    if (run.resume_stage >= cfg.stages.size()) throw ConfigError("resume: stage index out of range");
    if (run.resume_stage > 0 && run.out.empty()) throw ConfigError("resume: needs the run directory");
    if (!run.out.empty()) {
        std::filesystem::create_directories(run.out);
        write_text(run.out / "config.json", cfg.to_json().dump(2) + "\n");
    }
    const auto target_manifest = resolve_data(cfg.target, run.out, "target");
    const bool has_source = !cfg.source.manifest.empty() || cfg.source.generate;
    const auto source_manifest =
        cfg.pipe == PipeKind::D && has_source ? resolve_data(cfg.source, run.out, "source") : target_manifest;
    const auto target_info = eventdata::read_manifest(target_manifest);
    const auto source_info = eventdata::read_manifest(source_manifest);
    DataCache cache{{}, cfg.bin_mode};

    const Rng root(cfg.seed);
    PipelineResult res;
    Checkpoint ckpt;
    for (std::size_t i = 0; i < cfg.stages.size(); ++i) {
        const auto& sc = cfg.stages[i];
        const std::string label = stage_label(cfg, i);
        const bool from_source = cfg.pipe == PipeKind::D && i == 0;
        const auto& info = from_source ? source_info : target_info;
        const auto& manifest = from_source ? source_manifest : target_manifest;
        const NetworkSpec spec = network_for(info);
        const bool sequence = info.task == eventdata::Task::moving_shapes;

        if (i < run.resume_stage) {
            const auto j = json::parse(io::read_file(run.out / (label + ".json")));
            if (j.contains("warmup")) res.reports.push_back(TrainReport::from_json(j.at("warmup")));
            res.reports.push_back(TrainReport::from_json(j.at("report")));
            const auto changed = j.at("changed").get<std::vector<std::string>>();
            res.changed.emplace_back(changed.begin(), changed.end());
            if (i + 1 == run.resume_stage) ckpt = model::load(run.out / (label + ".snnf"));
            continue;
        }

        try {
            for (const auto& name : sc.frozen) {
                bool known = false;
                for (const auto& p : spec.parameters()) known = known || p.name == name;
                if (!known) throw ConfigError("stages[" + std::to_string(i) + "].frozen: unknown parameter '" + name + "'");
            }
            std::set<std::string> changed;
            if (i == 0) {
                Rng rng = root.fork(1);
                ckpt = model::build(spec, rng);
            } else {
                Rng rng = root.fork(100 + i);
                auto t = transplant(ckpt, spec, rng);
                ckpt = std::move(t.ckpt);
                changed = std::move(t.changed);
            }
            if (run.on_transplant) run.on_transplant(i, changed);
            res.changed.push_back(changed);

            const auto& train = cache.get(manifest, "train", sequence, sc.T);
            const auto& test = cache.get(manifest, "test", sequence, sc.T);

            StageOptions so;
            so.name = label;
            so.regime = sc.regime;
            so.epochs = sc.epochs;
            so.lr = sc.lr;
            so.batch_size = sc.batch_size;
            so.T = sc.T;
            so.momentum = sc.momentum;
            so.frozen = sc.frozen;
            so.loss = sc.loss ? *sc.loss : cfg.loss ? *cfg.loss : default_loss(sc.regime);
            so.readout_scale = sc.readout_scale;
            so.anneal = sc.regime == Regime::sann;
            so.neuron = cfg.neuron;
            so.seed = root.fork(200 + i).seed();
            so.eval_batch = cfg.eval_batch;
            so.log = run.log;

            json stage_json;
            if (sc.warmup_epochs > 0 && !changed.empty()) {
                StageOptions wo = so;
                wo.name = label + "-warmup";
                wo.epochs = sc.warmup_epochs;
                wo.lr = LrSchedule{sc.lr.initial, {}, 1.0};
                wo.seed = root.fork(300 + i).seed();
                if (run.on_epoch) wo.on_epoch = [&](int e, const Checkpoint& c) { run.on_epoch(wo.name, e, c); };
                auto w = warmup(ckpt, spec, changed, train, test, wo);
                ckpt = std::move(w.ckpt);
                stage_json["warmup"] = w.report.to_json();
                res.reports.push_back(std::move(w.report));
            }
            if (run.on_epoch) so.on_epoch = [&](int e, const Checkpoint& c) { run.on_epoch(label, e, c); };
            auto r = train_stage(ckpt, spec, train, test, so);
            ckpt = std::move(r.ckpt);
            stage_json["report"] = r.report.to_json();
            stage_json["changed"] = std::vector<std::string>(changed.begin(), changed.end());
            res.reports.push_back(std::move(r.report));

            if (!run.out.empty()) {
                model::save(ckpt, run.out / (label + ".snnf"));
                std::string csv = TrainReport::csv_header();
                if (stage_json.contains("warmup")) csv += res.reports[res.reports.size() - 2].csv_rows();
                csv += res.reports.back().csv_rows();
                write_text(run.out / (label + ".csv"), csv);
                write_text(run.out / (label + ".json"), stage_json.dump(1) + "\n");
            }
        } catch (const DivergenceError& e) {
            throw DivergenceError("stage " + std::to_string(i + 1) + " (" + label + "): " + e.what(),
                                  e.last_finite_epoch());
        } catch (const Error& e) {
            if (run.log) std::fprintf(stderr, "stage %zu (%s) failed: %s\n", i + 1, label.c_str(), e.what());
            throw;
        }
    }
    res.final = std::move(ckpt);
    if (!run.out.empty()) {
        std::string csv = TrainReport::csv_header();
        for (const auto& r : res.reports) csv += r.csv_rows();
        write_text(run.out / "report.csv", csv);
        write_text(run.out / "summary.json", res.summary().dump(2) + "\n");
    }
    return res;
}

PipelineResult run_pipe_s(const PipelineConfig& cfg, const RunOptions& run) {
    if (cfg.pipe != PipeKind::S) throw ConfigError("run_pipe_s: config describes pipe D");
    return run_pipeline(cfg, run);
}

PipelineResult run_pipe_d(const PipelineConfig& cfg, const RunOptions& run) {
    if (cfg.pipe != PipeKind::D) throw ConfigError("run_pipe_d: config describes pipe S");
    return run_pipeline(cfg, run);
}

}  // namespace snnf::pipeline
