#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "rnnlab/cells.hpp"
#include "rnnlab/checkpoint.hpp"
#include "rnnlab/metrics.hpp"
#include "rnnlab/optim.hpp"
#include "rnnlab/runconfig.hpp"
#include "rnnlab/tasks.hpp"

namespace rnnlab {

// Salts for substreams derived from the run seed.
namespace seed_salt {
inline constexpr std::uint64_t init = 0x1;
inline constexpr std::uint64_t step_base = 0x100;  // + step
inline constexpr std::uint64_t val_batch = 0x2;
inline constexpr std::uint64_t epoch_base = 0x9000000;  // + epoch (dataset shuffles)
}  // namespace seed_salt

struct ModelShape {
    std::size_t input_dim = 0;   // what the cell sees (embedding width for char models)
    std::size_t output_dim = 0;  // readout width
    bool embedding = false;
    std::size_t vocab = 0;
};

inline ModelShape model_shape(const RunConfig& rc, std::size_t vocab = 0) {
    ModelShape s;
    if (rc.task == "addition") {
        s.input_dim = 2;
        s.output_dim = 1;
    } else if (rc.task == "classify_length" || rc.task == "parity") {
        s.input_dim = 1;
        s.output_dim = 1;
    } else if (rc.task == "copy" || rc.task == "multicopy") {
        s.input_dim = rc.n_symbols + 2;
        s.output_dim = rc.n_symbols + 1;
    } else if (rc.is_mnist()) {
        s.input_dim = 1;
        s.output_dim = 10;
    } else if (rc.is_charlm()) {
        s.input_dim = rc.embedding_dim;
        s.output_dim = vocab;
        s.embedding = true;
        s.vocab = vocab;
    } else {
        fail("model_shape: unhandled task " + rc.task);
    }
    return s;
}

// Cell parameters plus the linear readout (and the symbol embedding table for
// character models). Initialization order is fixed so a seed pins every value.
inline NamedTensors init_model_params(const RunConfig& rc, const ModelShape& shape) {
    SplitMix64 rng(derive_seed(rc.seed, seed_salt::init));
    NamedTensors p = init_cell_params(rc.cell, shape.input_dim, rc.hidden_dim, rng);
    p.emplace("W_out", xavier_init(rc.hidden_dim, shape.output_dim, rng));
    p.emplace("b_out", Tensor(Shape{shape.output_dim}));
    if (shape.embedding) p.emplace("embed", xavier_init(shape.vocab, rc.embedding_dim, rng));
    return p;
}

// Recurrent state carried across truncated windows, detached from any tape.
struct CarryValues {
    bool present = false;
    Tensor n, d, h, c;
};

struct ForwardStats {
    double loss = 0.0;
    std::optional<double> accuracy;
    std::uint64_t clamp_events = 0;
    double max_attention = 0.0;
    CarryValues carry_out;
};

struct StepResult {
    ForwardStats stats;
    NamedTensors grads;
};

namespace detail {

struct BuiltGraph {
    Tape tape;
    Var loss;
    Var logits;  // [time*batch x output_dim], rows step-major
    Unrolled unrolled;
};

inline void build_graph(BuiltGraph& g, const RunConfig& rc, const ModelShape& shape,
                        const NamedTensors& params, const TaskBatch& tb,
                        const CarryValues* carry_in) {
    Tape& t = g.tape;
    ParamVars pv;
    for (const auto& [name, tensor] : params) {
        pv[name] = t.leaf(name, tensor.dims());
        t.bind(pv[name], tensor);
    }

    const std::size_t B = tb.batch(), T = tb.time();
    std::vector<Var> xs;
    xs.reserve(T);
    if (shape.embedding) {
        for (std::size_t step = 0; step < T; ++step) {
            std::vector<std::int64_t> idx(B);
            for (std::size_t b = 0; b < B; ++b) {
                idx[b] = static_cast<std::int64_t>(tb.inputs[(b * T + step)]);
            }
            xs.push_back(t.embed(pv.at("embed"), std::move(idx)));
        }
    } else {
        for (std::size_t step = 0; step < T; ++step) {
            xs.push_back(t.constant(time_slice(tb.inputs, step)));
        }
    }

    RecurrentVars state;
    if (carry_in && carry_in->present) {
        state.h = t.constant(carry_in->h);
        if (rc.cell.kind == CellKind::Rwa || rc.cell.kind == CellKind::Rda) {
            state.n = t.constant(carry_in->n);
            state.d = t.constant(carry_in->d);
        } else if (rc.cell.kind == CellKind::Lstm) {
            state.c = t.constant(carry_in->c);
        }
    } else {
        state = initial_state(t, rc.cell, pv, B, rc.hidden_dim);
    }

    g.unrolled = unroll(t, rc.cell, pv, xs, state);
    t.set_context("readout");
    std::vector<Var> outs;
    outs.reserve(T);
    for (const auto& st : g.unrolled.steps) outs.push_back(st.output);
    Var stacked = t.stack_rows(outs);
    g.logits = t.add_row(t.matmul(stacked, pv.at("W_out")), pv.at("b_out"));

    // Row r of the stacked readout is (step, lane) = (r / B, r % B).
    const std::size_t rows = T * B;
    double mask_count = 0.0;
    for (std::size_t i = 0; i < tb.mask.size(); ++i) mask_count += tb.mask[i];
    if (mask_count <= 0.0) fail("train: batch mask selects nothing");

    t.set_context("loss");
    if (tb.loss == LossKind::SoftmaxCE) {
        std::vector<std::int64_t> targets(rows);
        std::vector<double> weights(rows);
        for (std::size_t step = 0; step < T; ++step) {
            for (std::size_t b = 0; b < B; ++b) {
                targets[step * B + b] = static_cast<std::int64_t>(tb.targets[b * T + step]);
                weights[step * B + b] = tb.mask[b * T + step];
            }
        }
        g.loss = t.softmax_ce(g.logits, std::move(targets), std::move(weights));
    } else {
        Tensor target(Shape{rows, 1});
        Tensor mask(Shape{rows, 1});
        for (std::size_t step = 0; step < T; ++step) {
            for (std::size_t b = 0; b < B; ++b) {
                target[step * B + b] = tb.targets[b * T + step];
                mask[step * B + b] = tb.mask[b * T + step];
            }
        }
        Var target_c = t.constant(std::move(target));
        Var mask_c = t.constant(std::move(mask));
        Var per_row;
        if (tb.loss == LossKind::MSE) {
            Var diff = t.sub(g.logits, target_c);
            per_row = t.mul(diff, diff);
        } else {  // binary cross entropy on logits: softplus(x) - y*x
            per_row = t.sub(t.softplus(g.logits), t.mul(target_c, g.logits));
        }
        g.loss = t.scale(t.sum_all(t.mul(per_row, mask_c)), 1.0 / mask_count);
    }
}

inline std::optional<double> masked_accuracy(const Tape& tape, Var logits, const TaskBatch& tb) {
    const std::size_t B = tb.batch(), T = tb.time();
    const Tensor& l = tape.value(logits);
    double hit = 0.0, total = 0.0;
    for (std::size_t step = 0; step < T; ++step) {
        for (std::size_t b = 0; b < B; ++b) {
            if (tb.mask[b * T + step] == 0.0) continue;
            total += 1.0;
            const std::size_t row = step * B + b;
            if (tb.loss == LossKind::SoftmaxCE) {
                const std::size_t classes = l.cols();
                std::size_t best = 0;
                for (std::size_t c = 1; c < classes; ++c) {
                    if (l.at(row, c) > l.at(row, best)) best = c;
                }
                if (best == static_cast<std::size_t>(tb.targets[b * T + step])) hit += 1.0;
            } else {  // BinaryCE: predict 1 iff the logit is positive
                const double pred = l.at(row, 0) > 0.0 ? 1.0 : 0.0;
                if (pred == tb.targets[b * T + step]) hit += 1.0;
            }
        }
    }
    if (total == 0.0) return std::nullopt;
    return hit / total;
}

inline CarryValues extract_carry(const Tape& tape, const RunConfig& rc, const Unrolled& u) {
    CarryValues cv;
    cv.present = true;
    cv.h = tape.value(u.final_state.h);
    if (rc.cell.kind == CellKind::Rwa || rc.cell.kind == CellKind::Rda) {
        cv.n = tape.value(u.final_state.n);
        cv.d = tape.value(u.final_state.d);
    } else if (rc.cell.kind == CellKind::Lstm) {
        cv.c = tape.value(u.final_state.c);
    }
    return cv;
}

inline double scan_max_attention(const Tape& tape, const Unrolled& u) {
    double m = 0.0;
    for (const auto& st : u.steps) {
        if (st.attention.valid()) m = std::max(m, tape.value(st.attention).max_abs());
    }
    return m;
}

}  // namespace detail

// One model with its parameters; graphs are built per batch and discarded.
class Model {
public:
    Model(RunConfig rc, ModelShape shape)
        : rc_(std::move(rc)), shape_(shape), params_(init_model_params(rc_, shape_)) {}

    const RunConfig& config() const { return rc_; }
    const ModelShape& shape() const { return shape_; }
    NamedTensors& params() { return params_; }
    const NamedTensors& params() const { return params_; }

    ForwardStats forward_eval(const TaskBatch& tb, const CarryValues* carry_in = nullptr) const {
        detail::BuiltGraph g;
        detail::build_graph(g, rc_, shape_, params_, tb, carry_in);
        g.tape.forward();
        return collect(g, tb);
    }

    StepResult forward_backward(const TaskBatch& tb, const CarryValues* carry_in = nullptr) const {
        detail::BuiltGraph g;
        detail::build_graph(g, rc_, shape_, params_, tb, carry_in);
        g.tape.forward();
        StepResult r;
        r.stats = collect(g, tb);
        g.tape.backward(g.loss, Tensor::scalar(1.0));
        for (const auto& [name, tensor] : params_) r.grads[name] = g.tape.grad(name);
        if (!rc_.cell.learn_h0) r.grads.at("h0").fill(0.0);
        return r;
    }

private:
    RunConfig rc_;
    ModelShape shape_;
    NamedTensors params_;

    ForwardStats collect(const detail::BuiltGraph& g, const TaskBatch& tb) const {
        ForwardStats s;
        s.loss = g.tape.value(g.loss)[0];
        s.accuracy = tb.loss == LossKind::MSE ? std::nullopt
                                              : detail::masked_accuracy(g.tape, g.logits, tb);
        s.clamp_events = g.tape.clamp_events();
        s.max_attention = detail::scan_max_attention(g.tape, g.unrolled);
        s.carry_out = detail::extract_carry(g.tape, rc_, g.unrolled);
        return s;
    }
};

// Mean bits per symbol of the next-symbol prediction over every full window
// of the split, read with a single carried lane and no learning. The tail
// shorter than one window is not scored.
inline double evaluate_corpus_bpc(const Model& model, CorpusSplit split) {
    CorpusBatcher batcher(split, 1, model.config().bptt_len);
    CarryValues carry;
    double nats = 0.0;
    std::size_t count = 0;
    for (std::size_t w = 0; w < batcher.windows(); ++w) {
        TaskBatch tb = batcher.window(w);
        ForwardStats st = model.forward_eval(tb, w == 0 ? nullptr : &carry);
        carry = st.carry_out;
        nats += st.loss * static_cast<double>(tb.time());
        count += tb.time();
    }
    return nats / (static_cast<double>(count) * std::log(2.0));
}

struct EvalMetrics {
    std::optional<double> loss;
    std::optional<double> accuracy;
    std::optional<double> bpc;
};

// First crossing step of the smoothed stop metric; series[i] is the metric at
// step i+1. The window must be full before a crossing can be declared.
inline std::optional<std::uint64_t> steps_to_threshold(const std::vector<double>& series,
                                                       const StopRule& rule,
                                                       std::size_t window = kStopSmoothWindow) {
    if (!rule.active) return std::nullopt;
    double sum = 0.0;
    for (std::size_t i = 0; i < series.size(); ++i) {
        sum += series[i];
        if (i >= window) sum -= series[i - window];
        if (i + 1 >= window && rule.satisfied(sum / static_cast<double>(window))) {
            return i + 1;
        }
    }
    return std::nullopt;
}

struct TrainHooks {
    std::string out_dir;       // when set, metrics.csv / final.ckpt / summary.txt are written
    std::string resume_from;   // checkpoint path
    std::function<void(const MetricsRow&)> on_row;
    std::uint64_t wall_budget_ms = 0;  // 0 = unlimited
    bool record_crossing_only = false;  // note the stop-rule crossing but keep training
};

struct TrainOutcome {
    RunConfig cfg;
    NamedTensors params;
    AdamState adam;
    std::vector<MetricsRow> rows;
    bool aborted = false;
    std::string abort_reason;
    bool crossed = false;
    std::uint64_t crossed_step = 0;
    std::uint64_t steps_done = 0;
    std::uint64_t clamp_total = 0;
    double max_attention = 0.0;
    std::uint64_t wall_ms = 0;  // real time; reported in the summary only
    std::optional<double> final_train_loss, final_train_accuracy;
    std::optional<double> final_val_loss, final_val_accuracy, final_bpc;

    std::string summary_text() const {
        std::ostringstream os;
        os << "# effective config; re-parse this file to reproduce the run\n";
        os << to_flat_config(cfg).text();
        os << "# ---- results ----\n";
        os << "# steps: " << steps_done << "\n";
        if (cfg.stop.active) {
            os << "# stop rule: " << cfg.stop.metric << " " << cfg.stop.cmp << " "
               << fmt_double(cfg.stop.threshold) << " (smoothed over " << kStopSmoothWindow
               << " steps)\n";
            if (crossed) {
                os << "# crossed at step: " << crossed_step << "\n";
            } else {
                os << "# crossed at step: not reached\n";
            }
        }
        auto line = [&os](const char* k, const std::optional<double>& v) {
            if (v) os << "# " << k << ": " << fmt_double(*v) << "\n";
        };
        line("final_train_loss", final_train_loss);
        line("final_train_accuracy", final_train_accuracy);
        line("final_val_loss", final_val_loss);
        line("final_val_accuracy", final_val_accuracy);
        line("final_bpc", final_bpc);
        os << "# attention_clamp_events: " << clamp_total << "\n";
        os << "# max_attention: " << fmt_double(max_attention) << "\n";
        os << "# wall_ms: " << wall_ms << "\n";
        if (aborted) os << "# aborted: " << abort_reason << "\n";
        return os.str();
    }
};

namespace detail {

// Everything mutable a run needs to continue exactly where it stopped.
struct RunState {
    AdamState adam;
    std::uint64_t clamp_total = 0;
    double max_attention = 0.0;
    bool crossed = false;
    std::uint64_t crossed_step = 0;
    std::deque<double> stop_window;
    double acc_loss_sum = 0.0, acc_loss_count = 0.0;
    double acc_acc_sum = 0.0, acc_acc_count = 0.0;
    CarryValues carry;  // char models only
};

inline std::string config_text_without_max_steps(const std::string& text) {
    std::istringstream in(text);
    std::ostringstream out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.rfind("train.max_steps", 0) == 0) continue;
        out << line << "\n";
    }
    return out.str();
}

inline CheckpointData make_checkpoint(const RunConfig& rc, const NamedTensors& params,
                                      const RunState& st) {
    CheckpointData ck;
    ck.config_text = to_flat_config(rc).text();
    for (const auto& [name, t] : params) ck.tensors.emplace_back(name, t);
    for (const auto& [name, t] : st.adam.m) ck.tensors.emplace_back("adam.m." + name, t);
    for (const auto& [name, t] : st.adam.v) ck.tensors.emplace_back("adam.v." + name, t);
    ck.tensors.emplace_back("adam.step_count", Tensor::scalar(static_cast<double>(st.adam.step_count)));
    ck.tensors.emplace_back("run.clamp_total", Tensor::scalar(static_cast<double>(st.clamp_total)));
    ck.tensors.emplace_back("run.max_attention", Tensor::scalar(st.max_attention));
    ck.tensors.emplace_back("run.crossed", Tensor::scalar(st.crossed ? 1.0 : 0.0));
    ck.tensors.emplace_back("run.crossed_step", Tensor::scalar(static_cast<double>(st.crossed_step)));
    Tensor window(Shape{kStopSmoothWindow});
    for (std::size_t i = 0; i < st.stop_window.size(); ++i) window[i] = st.stop_window[i];
    ck.tensors.emplace_back("stop.window", window);
    ck.tensors.emplace_back("stop.window_count", Tensor::scalar(static_cast<double>(st.stop_window.size())));
    ck.tensors.emplace_back("acc.loss_sum", Tensor::scalar(st.acc_loss_sum));
    ck.tensors.emplace_back("acc.loss_count", Tensor::scalar(st.acc_loss_count));
    ck.tensors.emplace_back("acc.acc_sum", Tensor::scalar(st.acc_acc_sum));
    ck.tensors.emplace_back("acc.acc_count", Tensor::scalar(st.acc_acc_count));
    if (st.carry.present) {
        ck.tensors.emplace_back("carry.h", st.carry.h);
        if (!st.carry.n.empty()) ck.tensors.emplace_back("carry.n", st.carry.n);
        if (!st.carry.d.empty()) ck.tensors.emplace_back("carry.d", st.carry.d);
        if (!st.carry.c.empty()) ck.tensors.emplace_back("carry.c", st.carry.c);
    }
    return ck;
}

inline void restore_checkpoint(const CheckpointData& ck, const RunConfig& rc,
                               NamedTensors& params, RunState& st) {
    const std::string expect = config_text_without_max_steps(to_flat_config(rc).text());
    const std::string got = config_text_without_max_steps(ck.config_text);
    if (expect != got) fail("checkpoint resume: config does not match the checkpointed run");
    auto need = [&ck](const std::string& name) -> const Tensor& {
        const Tensor* t = ck.find(name);
        if (!t) fail("checkpoint: missing tensor '" + name + "'");
        return *t;
    };
    for (auto& [name, t] : params) {
        const Tensor& src = need(name);
        if (!src.same_shape(t)) {
            fail("checkpoint: tensor '" + name + "' has shape " + shape_str(src.dims()) +
                 ", expected " + shape_str(t.dims()));
        }
        t = src;
    }
    st.adam.reset_moments(params);
    for (auto& [name, t] : st.adam.m) t = need("adam.m." + name);
    for (auto& [name, t] : st.adam.v) t = need("adam.v." + name);
    st.adam.step_count = static_cast<std::uint64_t>(need("adam.step_count")[0]);
    st.clamp_total = static_cast<std::uint64_t>(need("run.clamp_total")[0]);
    st.max_attention = need("run.max_attention")[0];
    st.crossed = need("run.crossed")[0] != 0.0;
    st.crossed_step = static_cast<std::uint64_t>(need("run.crossed_step")[0]);
    const auto wcount = static_cast<std::size_t>(need("stop.window_count")[0]);
    const Tensor& window = need("stop.window");
    st.stop_window.clear();
    for (std::size_t i = 0; i < wcount; ++i) st.stop_window.push_back(window[i]);
    st.acc_loss_sum = need("acc.loss_sum")[0];
    st.acc_loss_count = need("acc.loss_count")[0];
    st.acc_acc_sum = need("acc.acc_sum")[0];
    st.acc_acc_count = need("acc.acc_count")[0];
    if (const Tensor* h = ck.find("carry.h")) {
        st.carry.present = true;
        st.carry.h = *h;
        if (const Tensor* n = ck.find("carry.n")) st.carry.n = *n;
        if (const Tensor* d = ck.find("carry.d")) st.carry.d = *d;
        if (const Tensor* c = ck.find("carry.c")) st.carry.c = *c;
    }
}

}  // namespace detail

// Full training loop: per step fetch a batch, unroll over the whole sequence,
// backprop, clip elementwise, Adam step; metric rows at the eval cadence; the
// smoothed stop rule or max_steps ends the run. Character models instead walk
// corpus windows with carried (detached) state, one optimizer step per window.
TrainOutcome train(const RunConfig& rc, const TrainHooks& hooks = {});

namespace detail {

struct DataPlan {
    std::function<TaskBatch(std::uint64_t step)> train_batch;
    std::function<std::optional<TaskBatch>()> val_batch;
    std::size_t vocab = 0;                 // char models
    std::shared_ptr<Corpus> corpus;        // keeps splits alive
    std::shared_ptr<CorpusBatcher> batcher;
    std::shared_ptr<MnistDataset> mnist_train;  // kept alive for the run
    std::shared_ptr<MnistDataset> mnist_val;
};

inline TaskBatch gen_parity(std::size_t batch, std::size_t length, double c) {
    TaskBatch tb;
    tb.inputs = Tensor(Shape{batch, length, 1}, 1.0);
    tb.targets = Tensor(Shape{batch, length, 1});
    tb.mask = Tensor(Shape{batch, length}, 1.0);
    tb.loss = LossKind::MSE;
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t t = 0; t < length; ++t) {
            tb.targets[b * length + t] = (t % 2 == 0) ? c : -c;
        }
    }
    return tb;
}

inline DataPlan make_data_plan(const RunConfig& rc) {
    DataPlan plan;
    const std::uint64_t seed = rc.seed;
    if (rc.task == "addition") {
        plan.train_batch = [rc, seed](std::uint64_t s) {
            return gen_addition(derive_seed(seed, seed_salt::step_base + s), rc.batch, rc.length);
        };
        plan.val_batch = [rc, seed]() {
            return gen_addition(derive_seed(seed, seed_salt::val_batch), rc.batch, rc.length);
        };
    } else if (rc.task == "classify_length") {
        plan.train_batch = [rc, seed](std::uint64_t s) {
            return gen_classify_length(derive_seed(seed, seed_salt::step_base + s), rc.batch, rc.max_len);
        };
        plan.val_batch = [rc, seed]() {
            return gen_classify_length(derive_seed(seed, seed_salt::val_batch), rc.batch, rc.max_len);
        };
    } else if (rc.task == "copy") {
        plan.train_batch = [rc, seed](std::uint64_t s) {
            return gen_copy(derive_seed(seed, seed_salt::step_base + s), rc.batch, rc.n_symbols,
                            rc.prefix_len, rc.total_len);
        };
        plan.val_batch = [rc, seed]() {
            return gen_copy(derive_seed(seed, seed_salt::val_batch), rc.batch, rc.n_symbols,
                            rc.prefix_len, rc.total_len);
        };
    } else if (rc.task == "multicopy") {
        plan.train_batch = [rc, seed](std::uint64_t s) {
            return gen_multicopy(derive_seed(seed, seed_salt::step_base + s), rc.batch, rc.n_symbols,
                                 rc.prefix_len, rc.copies, rc.gap);
        };
        plan.val_batch = [rc, seed]() {
            return gen_multicopy(derive_seed(seed, seed_salt::val_batch), rc.batch, rc.n_symbols,
                                 rc.prefix_len, rc.copies, rc.gap);
        };
    } else if (rc.task == "parity") {
        plan.train_batch = [rc](std::uint64_t) { return gen_parity(rc.batch, rc.length, rc.amplitude); };
        plan.val_batch = [rc]() { return gen_parity(rc.batch, rc.length, rc.amplitude); };
    } else if (rc.is_mnist()) {
        if (rc.images.empty() || rc.labels.empty()) {
            throw ConfigError("config: mnist tasks need task.images and task.labels");
        }
        auto ds = std::make_shared<MnistDataset>(load_mnist(rc.images, rc.labels));
        if (rc.task == "mnist_permuted") {
            *ds = permute_mnist(*ds, rc.permute_seed);
        }
        plan.mnist_train = ds;
        const std::size_t count = ds->count();
        plan.train_batch = [rc, seed, ds, count](std::uint64_t s) {
            const std::uint64_t cursor = (s - 1) * rc.batch;
            const std::uint64_t epoch = cursor / count;
            auto order = make_permutation(count, derive_seed(seed, seed_salt::epoch_base + epoch));
            std::vector<std::size_t> idx(rc.batch);
            for (std::size_t i = 0; i < rc.batch; ++i) idx[i] = order[(cursor + i) % count];
            return mnist_batch(*ds, idx);
        };
        if (!rc.val_images.empty() && !rc.val_labels.empty()) {
            auto vds = std::make_shared<MnistDataset>(load_mnist(rc.val_images, rc.val_labels));
            if (rc.task == "mnist_permuted") *vds = permute_mnist(*vds, rc.permute_seed);
            plan.mnist_val = vds;
            plan.val_batch = [vds]() {
                std::vector<std::size_t> idx(std::min<std::size_t>(vds->count(), 512));
                for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
                return mnist_batch(*vds, idx);
            };
        } else {
            plan.val_batch = []() { return std::nullopt; };
        }
    } else if (rc.is_charlm()) {
        if (rc.corpus.empty()) throw ConfigError("config: charlm needs task.corpus");
        plan.corpus = std::make_shared<Corpus>(load_corpus(rc.corpus));
        plan.vocab = plan.corpus->vocab();
        plan.batcher = std::make_shared<CorpusBatcher>(train_split(*plan.corpus), rc.batch, rc.bptt_len);
        plan.val_batch = []() { return std::nullopt; };
    } else {
        throw ConfigError("config: unhandled task " + rc.task);
    }
    return plan;
}

}  // namespace detail

inline TrainOutcome train(const RunConfig& rc, const TrainHooks& hooks) {
    using clock = std::chrono::steady_clock;
    const auto t0 = clock::now();
    auto elapsed_ms = [&t0] {
        return static_cast<std::uint64_t>(
            std::chrono::duration_cast<std::chrono::milliseconds>(clock::now() - t0).count());
    };

    detail::DataPlan plan = detail::make_data_plan(rc);
    ModelShape shape = model_shape(rc, plan.vocab);
    Model model(rc, shape);
    detail::RunState st;
    st.adam.lr = rc.lr;
    st.adam.reset_moments(model.params());
    if (!hooks.resume_from.empty()) {
        detail::restore_checkpoint(checkpoint_load(hooks.resume_from), rc, model.params(), st);
    }

    TrainOutcome out;
    out.cfg = rc;

    const bool charlm = rc.is_charlm();
    auto train_batch_for = [&](std::uint64_t s) -> TaskBatch {
        if (charlm) {
            return plan.batcher->window((s - 1) % plan.batcher->windows());
        }
        return plan.train_batch(s);
    };

    auto eval_val = [&](MetricsRow& row) {
        if (charlm) {
            if (val_split(*plan.corpus).size() > rc.bptt_len) {
                row.bpc = evaluate_corpus_bpc(model, val_split(*plan.corpus));
            }
            return;
        }
        if (auto vb = plan.val_batch()) {
            ForwardStats vs = model.forward_eval(*vb);
            row.val_loss = vs.loss;
            row.val_accuracy = vs.accuracy;
        }
    };

    auto emit = [&](MetricsRow row) {
        row.attention_clamp_count = st.clamp_total;
        out.rows.push_back(row);
        if (hooks.on_row) hooks.on_row(row);
        if (row.train_loss) out.final_train_loss = row.train_loss;
        if (row.train_accuracy) out.final_train_accuracy = row.train_accuracy;
        if (row.val_loss) out.final_val_loss = row.val_loss;
        if (row.val_accuracy) out.final_val_accuracy = row.val_accuracy;
        if (row.bpc) out.final_bpc = row.bpc;
    };

    // Step-0 row: evaluation of the initial parameters, no update.
    if (st.adam.step_count == 0) {
        try {
            TaskBatch tb = train_batch_for(1);
            ForwardStats fs = model.forward_eval(tb, nullptr);
            MetricsRow row;
            row.step = 0;
            row.train_loss = fs.loss;
            row.train_accuracy = fs.accuracy;
            eval_val(row);
            emit(row);
        } catch (const std::exception& e) {
            out.aborted = true;
            out.abort_reason = e.what();
        }
    }

    std::uint64_t stop_at = rc.max_steps;
    while (!out.aborted && st.adam.step_count < stop_at) {
        const std::uint64_t s = st.adam.step_count + 1;
        bool last_step = false;
        try {
            TaskBatch tb = train_batch_for(s);
            const bool carry_in = charlm && (s - 1) % plan.batcher->windows() != 0;
            StepResult r = model.forward_backward(tb, carry_in ? &st.carry : nullptr);
            if (charlm) st.carry = r.stats.carry_out;
            NamedTensors grads = clip_gradients(std::move(r.grads));
            adam_step(st.adam, model.params(), grads);

            st.clamp_total += r.stats.clamp_events;
            st.max_attention = std::max(st.max_attention, r.stats.max_attention);
            st.acc_loss_sum += r.stats.loss;
            st.acc_loss_count += 1.0;
            if (r.stats.accuracy) {
                st.acc_acc_sum += *r.stats.accuracy;
                st.acc_acc_count += 1.0;
            }

            if (rc.stop.active && !st.crossed) {
                double metric_value = 0.0;
                bool have = false;
                if (rc.stop.metric == "train_loss") {
                    metric_value = r.stats.loss;
                    have = true;
                } else if (rc.stop.metric == "train_accuracy" && r.stats.accuracy) {
                    metric_value = *r.stats.accuracy;
                    have = true;
                }
                if (have) {
                    st.stop_window.push_back(metric_value);
                    if (st.stop_window.size() > kStopSmoothWindow) st.stop_window.pop_front();
                    if (st.stop_window.size() == kStopSmoothWindow) {
                        double sum = 0.0;
                        for (double v : st.stop_window) sum += v;
                        if (rc.stop.satisfied(sum / static_cast<double>(kStopSmoothWindow))) {
                            st.crossed = true;
                            st.crossed_step = s;
                            if (!hooks.record_crossing_only) last_step = true;
                        }
                    }
                }
            }
        } catch (const std::exception& e) {
            out.aborted = true;
            out.abort_reason = e.what();
            MetricsRow row;  // failure row: step recorded, losses left empty
            row.step = s;
            emit(row);
            break;
        }

        if (hooks.wall_budget_ms && elapsed_ms() >= hooks.wall_budget_ms) last_step = true;
        if (s == stop_at) last_step = true;

        if (s % rc.eval_every == 0 || last_step) {
            MetricsRow row;
            row.step = s;
            if (st.acc_loss_count > 0.0) row.train_loss = st.acc_loss_sum / st.acc_loss_count;
            if (st.acc_acc_count > 0.0) row.train_accuracy = st.acc_acc_sum / st.acc_acc_count;
            st.acc_loss_sum = st.acc_loss_count = 0.0;
            st.acc_acc_sum = st.acc_acc_count = 0.0;
            try {
                eval_val(row);
            } catch (const std::exception& e) {
                out.aborted = true;
                out.abort_reason = e.what();
            }
            // Evaluation-time stop metrics are checked unsmoothed at row
            // cadence; the 25-step smoothing applies to train metrics only.
            if (rc.stop.active && !st.crossed) {
                std::optional<double> v;
                if (rc.stop.metric == "val_loss") v = row.val_loss;
                else if (rc.stop.metric == "val_accuracy") v = row.val_accuracy;
                else if (rc.stop.metric == "bpc") v = row.bpc;
                if (v && rc.stop.satisfied(*v)) {
                    st.crossed = true;
                    st.crossed_step = s;
                    if (!hooks.record_crossing_only) last_step = true;
                }
            }
            emit(row);
        }
        if (last_step) break;
    }

    out.crossed = st.crossed;
    out.crossed_step = st.crossed_step;
    out.steps_done = st.adam.step_count;
    out.clamp_total = st.clamp_total;
    out.max_attention = st.max_attention;
    out.params = model.params();
    out.adam = st.adam;
    out.wall_ms = elapsed_ms();

    if (!hooks.out_dir.empty()) {
        namespace fs = std::filesystem;
        fs::path dir = fs::path(hooks.out_dir) / rc.name;
        fs::create_directories(dir);
        std::ofstream csv(dir / "metrics.csv", std::ios::binary | std::ios::trunc);
        csv << metrics_csv(out.rows);
        checkpoint_save(detail::make_checkpoint(rc, model.params(), st), (dir / "final.ckpt").string());
        std::ofstream sum(dir / "summary.txt", std::ios::binary | std::ios::trunc);
        sum << out.summary_text();
    }
    return out;
}

// Forward-only metrics for a checkpointed model on a task batch or corpus.
inline EvalMetrics evaluate(const Model& model, const TaskBatch& tb) {
    ForwardStats fs = model.forward_eval(tb);
    EvalMetrics m;
    m.loss = fs.loss;
    m.accuracy = fs.accuracy;
    return m;
}

}  // namespace rnnlab
