#pragma once

#include <cstdint>
#include <set>
#include <string>

#include "rnnlab/cells.hpp"
#include "rnnlab/config.hpp"
#include "rnnlab/metrics.hpp"

namespace rnnlab {

struct StopRule {
    bool active = false;
    std::string metric;  // train_loss | train_accuracy | val_loss | val_accuracy | bpc
    std::string cmp;     // < | <= | > | >=
    double threshold = 0.0;

    bool satisfied(double value) const {
        if (cmp == "<") return value < threshold;
        if (cmp == "<=") return value <= threshold;
        if (cmp == ">") return value > threshold;
        return value >= threshold;
    }
};

// Steps-until-threshold decisions read the stop metric smoothed over this
// many most recent steps, so single-batch flukes do not count as crossings.
inline constexpr std::size_t kStopSmoothWindow = 25;

struct RunConfig {
    std::string name = "run";

    // task
    std::string task = "addition";
    std::size_t length = 100;      // addition, parity
    std::size_t max_len = 1000;    // classify_length
    std::size_t n_symbols = 8;     // copy, multicopy
    std::size_t prefix_len = 5;
    std::size_t total_len = 50;    // copy
    std::size_t copies = 5;        // multicopy
    std::size_t gap = 2;
    double amplitude = 0.5;        // parity target c
    std::string images, labels, val_images, val_labels;  // mnist idx files
    std::uint64_t permute_seed = 1;
    std::string corpus;            // charlm text file

    // model
    std::string cell_name = "rwa";
    CellConfig cell = CellConfig::rwa();
    std::size_t hidden_dim = 250;
    std::size_t embedding_dim = 64;

    // train
    std::size_t batch = 100;
    double lr = 0.001;
    std::size_t max_steps = 1000;
    std::size_t eval_every = 25;
    std::uint64_t seed = 1;
    std::size_t bptt_len = 250;
    StopRule stop;

    bool is_charlm() const { return task == "charlm"; }
    bool is_mnist() const { return task == "mnist" || task == "mnist_permuted"; }
};

inline const std::set<std::string>& allowed_config_keys() {
    static const std::set<std::string> keys{
        "run.name",
        "task.name", "task.length", "task.max_len", "task.n_symbols", "task.prefix_len",
        "task.total_len", "task.copies", "task.gap", "task.c", "task.images", "task.labels",
        "task.val_images", "task.val_labels", "task.permute_seed", "task.corpus",
        "model.cell", "model.attention", "model.hidden_fn", "model.output_fn",
        "model.hidden_dim", "model.embedding_dim", "model.learn_h0", "model.gamma_max",
        "train.batch", "train.lr", "train.max_steps", "train.eval_every", "train.seed",
        "train.bptt_len", "train.stop_metric", "train.stop_cmp", "train.stop_threshold",
    };
    return keys;
}

inline RunConfig parse_run_config(const FlatConfig& fc) {
    for (const auto& [key, value] : fc.entries()) {
        if (!allowed_config_keys().count(key)) {
            throw ConfigError("config: unknown key '" + key + "' (line " +
                              std::to_string(fc.line_of(key)) + ")");
        }
    }
    RunConfig rc;
    rc.name = fc.get_str("run.name", "run");
    rc.task = fc.require_str("task.name");
    static const std::set<std::string> tasks{"addition", "classify_length", "copy", "multicopy",
                                             "mnist", "mnist_permuted", "charlm", "parity"};
    if (!tasks.count(rc.task)) throw ConfigError("config: unknown task '" + rc.task + "'");

    rc.length = fc.get_u64("task.length", rc.length);
    rc.max_len = fc.get_u64("task.max_len", rc.max_len);
    rc.n_symbols = fc.get_u64("task.n_symbols", rc.n_symbols);
    rc.prefix_len = fc.get_u64("task.prefix_len", rc.prefix_len);
    rc.total_len = fc.get_u64("task.total_len", rc.total_len);
    rc.copies = fc.get_u64("task.copies", rc.copies);
    rc.gap = fc.get_u64("task.gap", rc.gap);
    rc.amplitude = fc.get_double("task.c", rc.amplitude);
    rc.images = fc.get_str("task.images", "");
    rc.labels = fc.get_str("task.labels", "");
    rc.val_images = fc.get_str("task.val_images", "");
    rc.val_labels = fc.get_str("task.val_labels", "");
    rc.permute_seed = fc.get_u64("task.permute_seed", rc.permute_seed);
    rc.corpus = fc.get_str("task.corpus", "");

    rc.cell_name = fc.get_str("model.cell", "rwa");
    try {
        rc.cell = cell_from_name(rc.cell_name);
    } catch (const std::exception& e) {
        if (rc.cell_name == "rda") {
            rc.cell = CellConfig{CellKind::Rda, AttentionKind::Exp, HiddenKind::Identity,
                                 OutputKind::Identity, 1.0, true};
        } else {
            throw ConfigError(e.what());
        }
    }
    if (fc.has("model.attention")) {
        if (rc.cell.kind != CellKind::Rda) {
            throw ConfigError("config: model.attention applies to rda cells only");
        }
        try {
            rc.cell.attention = attention_from_name(fc.require_str("model.attention"));
        } catch (const std::exception& e) {
            throw ConfigError(e.what());
        }
    }
    if (fc.has("model.hidden_fn")) {
        const std::string h = fc.require_str("model.hidden_fn");
        if (h != "tanh" && h != "identity") throw ConfigError("config: model.hidden_fn must be tanh or identity");
        rc.cell.hidden = h == "tanh" ? HiddenKind::Tanh : HiddenKind::Identity;
    }
    if (fc.has("model.output_fn")) {
        const std::string o = fc.require_str("model.output_fn");
        if (o != "tanh" && o != "identity") throw ConfigError("config: model.output_fn must be tanh or identity");
        rc.cell.output = o == "tanh" ? OutputKind::Tanh : OutputKind::Identity;
    }
    rc.cell.learn_h0 = fc.get_bool("model.learn_h0", true);
    rc.cell.gamma_max = fc.get_double("model.gamma_max", 1.0);
    if (rc.cell.gamma_max <= 0.0 || rc.cell.gamma_max > 1.0) {
        throw ConfigError("config: model.gamma_max must be in (0, 1]");
    }
    rc.hidden_dim = fc.get_u64("model.hidden_dim", rc.hidden_dim);
    rc.embedding_dim = fc.get_u64("model.embedding_dim", rc.embedding_dim);

    rc.batch = fc.get_u64("train.batch", rc.batch);
    rc.lr = fc.get_double("train.lr", rc.lr);
    rc.max_steps = fc.get_u64("train.max_steps", rc.max_steps);
    rc.eval_every = fc.get_u64("train.eval_every", rc.is_charlm() ? 200 : 25);
    rc.seed = fc.get_u64("train.seed", rc.seed);
    rc.bptt_len = fc.get_u64("train.bptt_len", rc.bptt_len);
    if (fc.has("train.stop_metric") || fc.has("train.stop_cmp") || fc.has("train.stop_threshold")) {
        rc.stop.active = true;
        rc.stop.metric = fc.require_str("train.stop_metric");
        rc.stop.cmp = fc.require_str("train.stop_cmp");
        rc.stop.threshold = fc.get_double("train.stop_threshold", 0.0);
        static const std::set<std::string> metrics{"train_loss", "train_accuracy", "val_loss",
                                                   "val_accuracy", "bpc"};
        if (!metrics.count(rc.stop.metric)) {
            throw ConfigError("config: stop metric '" + rc.stop.metric + "' is not produced");
        }
        static const std::set<std::string> cmps{"<", "<=", ">", ">="};
        if (!cmps.count(rc.stop.cmp)) throw ConfigError("config: bad stop comparator '" + rc.stop.cmp + "'");
    }

    if (rc.hidden_dim == 0 || rc.batch == 0 || rc.eval_every == 0) {
        throw ConfigError("config: dimensions, batch and eval cadence must be positive");
    }
    if (rc.lr < 0.0) throw ConfigError("config: learning rate must be non-negative");
    if (rc.task == "parity" && (rc.amplitude < 0.0 || rc.amplitude >= 1.0)) {
        throw ConfigError("config: parity amplitude must lie in [0, 1)");
    }
    return rc;
}

// Effective configuration after defaults, echoed into summaries. Re-parsing
// this text reproduces the identical run.
inline FlatConfig to_flat_config(const RunConfig& rc) {
    FlatConfig fc;
    auto set_u = [&fc](const char* k, std::uint64_t v) { fc.set(k, std::to_string(v)); };
    auto set_d = [&fc](const char* k, double v) { fc.set(k, fmt_double(v)); };
    fc.set("run.name", rc.name);
    fc.set("task.name", rc.task);
    if (rc.task == "addition" || rc.task == "parity") set_u("task.length", rc.length);
    if (rc.task == "parity") set_d("task.c", rc.amplitude);
    if (rc.task == "classify_length") set_u("task.max_len", rc.max_len);
    if (rc.task == "copy" || rc.task == "multicopy") {
        set_u("task.n_symbols", rc.n_symbols);
        set_u("task.prefix_len", rc.prefix_len);
    }
    if (rc.task == "copy") set_u("task.total_len", rc.total_len);
    if (rc.task == "multicopy") {
        set_u("task.copies", rc.copies);
        set_u("task.gap", rc.gap);
    }
    if (rc.is_mnist()) {
        fc.set("task.images", rc.images);
        fc.set("task.labels", rc.labels);
        if (!rc.val_images.empty()) fc.set("task.val_images", rc.val_images);
        if (!rc.val_labels.empty()) fc.set("task.val_labels", rc.val_labels);
    }
    if (rc.task == "mnist_permuted") set_u("task.permute_seed", rc.permute_seed);
    if (rc.is_charlm()) {
        fc.set("task.corpus", rc.corpus);
        set_u("train.bptt_len", rc.bptt_len);
        set_u("model.embedding_dim", rc.embedding_dim);
    }
    fc.set("model.cell", rc.cell_name);
    if (rc.cell_name == "rda") {
        switch (rc.cell.attention) {
            case AttentionKind::Exp: fc.set("model.attention", "exp"); break;
            case AttentionKind::Relu: fc.set("model.attention", "relu"); break;
            case AttentionKind::Softplus: fc.set("model.attention", "softplus"); break;
            case AttentionKind::Sigmoid: fc.set("model.attention", "sigmoid"); break;
        }
        fc.set("model.hidden_fn", rc.cell.hidden == HiddenKind::Tanh ? "tanh" : "identity");
        fc.set("model.output_fn", rc.cell.output == OutputKind::Tanh ? "tanh" : "identity");
    }
    set_u("model.hidden_dim", rc.hidden_dim);
    fc.set("model.learn_h0", rc.cell.learn_h0 ? "true" : "false");
    if (rc.cell.gamma_max < 1.0) set_d("model.gamma_max", rc.cell.gamma_max);
    set_u("train.batch", rc.batch);
    set_d("train.lr", rc.lr);
    set_u("train.max_steps", rc.max_steps);
    set_u("train.eval_every", rc.eval_every);
    set_u("train.seed", rc.seed);
    if (rc.stop.active) {
        fc.set("train.stop_metric", rc.stop.metric);
        fc.set("train.stop_cmp", rc.stop.cmp);
        set_d("train.stop_threshold", rc.stop.threshold);
    }
    return fc;
}

// Scale presets: `paper` restores the published experiment settings, `desk`
// shrinks them so a run finishes in minutes on one core while preserving the
// task structure (classify threshold stays max_len/2, copy windows scale).
inline void apply_preset(RunConfig& rc, const std::string& preset) {
    if (preset.empty()) return;
    if (preset != "desk" && preset != "paper") {
        throw ConfigError("config: preset must be 'desk' or 'paper', got '" + preset + "'");
    }
    const bool paper = preset == "paper";
    rc.hidden_dim = paper ? 250 : 32;
    rc.batch = paper ? 100 : 20;
    if (rc.task == "addition") {
        rc.length = paper ? 1000 : 100;
        rc.stop = {true, "train_loss", "<", paper ? 0.001 : 0.01};
        rc.max_steps = paper ? 20000 : 3000;
    } else if (rc.task == "classify_length") {
        rc.max_len = paper ? 1000 : 100;
        rc.stop = {true, "train_accuracy", ">=", 1.0};
        rc.max_steps = paper ? 5000 : 3000;
    } else if (rc.task == "copy") {
        rc.n_symbols = 8;
        rc.prefix_len = 5;
        rc.total_len = paper ? 1000 : 50;
        rc.stop = {true, "train_accuracy", ">", 0.999};
        rc.max_steps = paper ? 20000 : 10000;
    } else if (rc.task == "multicopy") {
        rc.n_symbols = 8;
        if (paper) {
            rc.prefix_len = 8;
            rc.gap = 3;
            rc.copies = 50;  // episodes of 20 tile a length-1000 sequence
        } else {
            rc.prefix_len = 6;
            rc.gap = 27;
            rc.copies = 5;  // episodes of 40 tile a length-200 sequence
        }
        rc.stop = {true, "train_accuracy", ">", 0.99};
        rc.max_steps = paper ? 20000 : 8000;
    } else if (rc.is_mnist()) {
        rc.max_steps = paper ? 50000 : 2000;
    } else if (rc.task == "parity") {
        rc.length = 100;
        rc.amplitude = 0.5;
        rc.hidden_dim = paper ? 250 : 32;
        rc.stop = {true, "train_loss", "<", paper ? 0.001 : 0.01};
        rc.max_steps = 5000;
    } else if (rc.is_charlm()) {
        rc.hidden_dim = paper ? 1800 : 128;
        rc.embedding_dim = 64;
        rc.bptt_len = 250;
        rc.batch = paper ? 100 : 32;
        rc.max_steps = paper ? 1000000 : 20000;
        rc.eval_every = 200;
    }
}

}  // namespace rnnlab
