#pragma once

#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <future>
#include <iostream>
#include <string>
#include <vector>

#include "rnnlab/analysis.hpp"
#include "rnnlab/svg.hpp"
#include "rnnlab/trainer.hpp"

namespace rnnlab {

namespace cli_detail {

namespace fs = std::filesystem;

// Dataset paths may be given relative to the RNNLAB_DATA root.
inline std::string resolve_data_path(const std::string& p) {
    if (p.empty() || fs::path(p).is_absolute() || fs::exists(p)) return p;
    if (const char* root = std::getenv("RNNLAB_DATA")) {
        const fs::path candidate = fs::path(root) / p;
        if (fs::exists(candidate)) return candidate.string();
    }
    return p;
}

inline void resolve_datasets(RunConfig& rc) {
    rc.images = resolve_data_path(rc.images);
    rc.labels = resolve_data_path(rc.labels);
    rc.val_images = resolve_data_path(rc.val_images);
    rc.val_labels = resolve_data_path(rc.val_labels);
    rc.corpus = resolve_data_path(rc.corpus);
}

inline RunConfig load_run_config(const std::string& path, const std::string& preset,
                                 std::optional<std::uint64_t> seed,
                                 const std::string& name_override = "") {
    RunConfig rc = parse_run_config(FlatConfig::parse_file(path));
    apply_preset(rc, preset);
    if (seed) rc.seed = *seed;
    if (!name_override.empty()) rc.name = name_override;
    resolve_datasets(rc);
    return rc;
}

inline void print_outcome(const TrainOutcome& out, const std::string& out_dir) {
    std::cout << "run " << out.cfg.name << ": " << out.steps_done << " steps";
    if (out.cfg.stop.active) {
        if (out.crossed) {
            std::cout << ", " << out.cfg.stop.metric << " " << out.cfg.stop.cmp << " "
                      << fmt_double(out.cfg.stop.threshold) << " at step " << out.crossed_step;
        } else {
            std::cout << ", stop threshold not reached";
        }
    }
    if (out.final_train_loss) std::cout << ", train_loss " << fmt_double(*out.final_train_loss);
    if (out.final_train_accuracy) {
        std::cout << ", train_accuracy " << fmt_double(*out.final_train_accuracy);
    }
    if (out.final_bpc) std::cout << ", bpc " << fmt_double(*out.final_bpc);
    std::cout << ", wall " << out.wall_ms << " ms\n";
    if (!out_dir.empty()) {
        std::cout << "artifacts: " << (fs::path(out_dir) / out.cfg.name).string() << "\n";
    }
    if (out.aborted) std::cout << "aborted: " << out.abort_reason << "\n";
}

// Parameter-only restore for evaluation; mismatches are numeric failures.
inline void load_params(const CheckpointData& ck, NamedTensors& params) {
    for (auto& [name, t] : params) {
        const Tensor* src = ck.find(name);
        if (!src) fail("checkpoint: missing tensor '" + name + "'");
        if (!src->same_shape(t)) {
            fail("checkpoint: tensor '" + name + "' has shape " + shape_str(src->dims()) +
                 ", expected " + shape_str(t.dims()));
        }
        t = *src;
    }
}

// Manifest entry: `run.<name> = <config path> [cell=<cell>] [seed=<n>]`.
struct ManifestRun {
    std::string name;
    std::string config_path;
    std::string cell_override;
    std::optional<std::uint64_t> seed_override;
    std::uint64_t seed = 1;
};

inline ManifestRun parse_manifest_run(const std::string& name, const std::string& value) {
    ManifestRun mr;
    mr.name = name;
    std::istringstream in(value);
    std::string tok;
    while (in >> tok) {
        if (tok.rfind("cell=", 0) == 0) {
            mr.cell_override = tok.substr(5);
        } else if (tok.rfind("seed=", 0) == 0) {
            try {
                mr.seed_override = std::stoull(tok.substr(5));
            } catch (...) {
                throw ConfigError("manifest: bad seed in entry '" + name + "'");
            }
        } else if (mr.config_path.empty()) {
            mr.config_path = tok;
        } else {
            throw ConfigError("manifest: unexpected token '" + tok + "' in entry '" + name + "'");
        }
    }
    if (mr.config_path.empty()) throw ConfigError("manifest: entry '" + name + "' names no config");
    return mr;
}

inline int cmd_train(const std::string& config_path, const std::string& preset,
                     std::optional<std::uint64_t> seed, const std::string& out_dir,
                     const std::string& resume) {
    RunConfig rc = load_run_config(config_path, preset, seed);
    TrainHooks hooks;
    hooks.out_dir = out_dir;
    hooks.resume_from = resume;
    TrainOutcome out = train(rc, hooks);
    print_outcome(out, out_dir);
    return out.aborted ? 3 : 0;
}

inline int cmd_eval(const std::string& ckpt_path, const std::string& config_path,
                    std::string table_path) {
    if (!fs::exists(ckpt_path)) throw ConfigError("eval: no checkpoint at " + ckpt_path);
    RunConfig rc = load_run_config(config_path, "", std::nullopt);
    CheckpointData ck;
    try {
        ck = checkpoint_load(ckpt_path);
    } catch (const std::exception& e) {
        throw ConfigError(e.what());
    }

    // From here on failures are numeric/shape problems: exit 3.
    EvalMetrics m;
    if (rc.is_charlm()) {
        Corpus corpus = load_corpus(rc.corpus);
        Model model(rc, model_shape(rc, corpus.vocab()));
        load_params(ck, model.params());
        m.bpc = evaluate_corpus_bpc(model, test_split(corpus));
    } else {
        detail::DataPlan plan = detail::make_data_plan(rc);
        Model model(rc, model_shape(rc));
        load_params(ck, model.params());
        std::optional<TaskBatch> tb;
        if (rc.is_mnist()) {
            const MnistDataset& ds = plan.mnist_val ? *plan.mnist_val : *plan.mnist_train;
            std::vector<std::size_t> idx(std::min<std::size_t>(ds.count(), 512));
            for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
            tb = mnist_batch(ds, idx);
        } else {
            tb = plan.val_batch();
        }
        if (!tb) fail("eval: task provides no evaluation batch");
        m = evaluate(model, *tb);
    }

    std::ostringstream row;
    row << rc.name << "\t" << rc.task << "\t" << rc.cell_name;
    if (m.loss) {
        std::cout << "loss = " << fmt_double(*m.loss) << "\n";
        row << "\tloss=" << fmt_double(*m.loss);
    }
    if (m.accuracy) {
        std::cout << "accuracy = " << fmt_double(*m.accuracy) << "\n";
        row << "\taccuracy=" << fmt_double(*m.accuracy);
    }
    if (m.bpc) {
        std::cout << "bpc = " << fmt_double(*m.bpc) << "\n";
        row << "\tbpc=" << fmt_double(*m.bpc);
    }
    if (table_path.empty()) {
        table_path = (fs::path(ckpt_path).parent_path() / "eval_table.txt").string();
    }
    std::ofstream table(table_path, std::ios::app);
    table << row.str() << "\n";
    return 0;
}

inline int cmd_lemma1(double c, std::size_t steps, const std::string& mode,
                      const std::string& cell, std::uint64_t seed, const std::string& out_csv) {
    if (!(c > 0.0 && c < 1.0)) throw ConfigError("lemma1: --c must lie strictly in (0, 1)");
    if (mode == "analytic") {
        if (steps < 2) throw ConfigError("lemma1: --steps must be at least 2");
        SplitMix64 rng(seed);
        std::vector<double> z = feasible_z_sequence(c, steps, 1.0, rng);
        GeometricGrowthReport r = lemma1_analytic_probe(c, z, steps, 1.0);
        std::cout << r.summary();
        if (!out_csv.empty()) {
            std::ofstream out(out_csv, std::ios::trunc);
            out << r.csv();
            std::cout << "report: " << out_csv << "\n";
        }
        return 0;
    }
    if (mode == "train") {
        ParityProbeParams pp;
        pp.c = c;
        pp.seed = seed;
        ParityProbeSummary s = parity_training_probe(cell, pp);
        std::cout << "cell " << s.cell << ": final mse " << fmt_double(s.final_mse) << ", "
                  << (s.crossed ? "crossed at step " + std::to_string(s.crossed_step)
                                : std::string("threshold not reached"))
                  << ", max attention " << fmt_double(s.max_attention) << ", clamp events "
                  << s.clamp_events << "\n";
        return 0;
    }
    throw ConfigError("lemma1: --mode must be analytic or train");
}

inline int cmd_plot(const std::vector<std::string>& csvs, const std::string& column,
                    const std::string& out_svg, bool log_scale) {
    std::vector<Series> series;
    for (const auto& path : csvs) {
        series.push_back(series_from_metrics(path, column, fs::path(path).parent_path().filename().string() +
                                                               "/" + fs::path(path).stem().string()));
    }
    const std::string svg = render_line_chart(series, "step", column, log_scale);
    std::ofstream out(out_svg, std::ios::trunc);
    if (!out) throw ConfigError("plot: cannot write " + out_svg);
    out << svg;
    std::cout << "wrote " << out_svg << "\n";
    return 0;
}

inline int cmd_manifest(const std::string& manifest_path, std::size_t jobs,
                        const std::string& preset) {
    FlatConfig fc = FlatConfig::parse_file(manifest_path);
    std::string out_dir = "out";
    std::uint64_t base_seed = 1;
    std::string seed_policy = "fixed";
    std::vector<ManifestRun> runs;
    for (const auto& [key, value] : fc.entries()) {
        if (key == "manifest.out") out_dir = value;
        else if (key == "manifest.base_seed") base_seed = fc.get_u64(key, 1);
        else if (key == "manifest.seed_policy") seed_policy = value;
        else if (key.rfind("run.", 0) == 0) runs.push_back(parse_manifest_run(key.substr(4), value));
        else throw ConfigError("manifest: unknown key '" + key + "'");
    }
    if (seed_policy != "fixed" && seed_policy != "offset") {
        throw ConfigError("manifest: seed_policy must be fixed or offset");
    }
    if (runs.empty()) throw ConfigError("manifest: no run.<name> entries");
    for (std::size_t i = 0; i < runs.size(); ++i) {
        runs[i].seed = runs[i].seed_override.value_or(seed_policy == "fixed" ? base_seed
                                                                             : base_seed + i);
    }
    fs::create_directories(out_dir);

    const fs::path manifest_dir = fs::path(manifest_path).parent_path();
    auto run_one = [&](const ManifestRun& mr) -> TrainOutcome {
        std::string cfg_path = mr.config_path;
        if (!fs::path(cfg_path).is_absolute() && !fs::exists(cfg_path)) {
            const fs::path near = manifest_dir / cfg_path;
            if (fs::exists(near)) cfg_path = near.string();
        }
        RunConfig rc = load_run_config(cfg_path, preset, mr.seed, mr.name);
        if (!mr.cell_override.empty()) {
            rc.cell_name = mr.cell_override;
            try {
                rc.cell = cell_from_name(mr.cell_override);
            } catch (const std::exception& e) {
                throw ConfigError(e.what());
            }
        }
        TrainHooks hooks;
        hooks.out_dir = out_dir;
        return train(rc, hooks);
    };

    std::vector<TrainOutcome> outcomes(runs.size());
    if (jobs < 1) jobs = 1;
    std::size_t next = 0;
    while (next < runs.size()) {
        const std::size_t wave = std::min(jobs, runs.size() - next);
        std::vector<std::future<TrainOutcome>> futs;
        for (std::size_t k = 0; k < wave; ++k) {
            futs.push_back(std::async(std::launch::async, run_one, runs[next + k]));
        }
        for (std::size_t k = 0; k < wave; ++k) outcomes[next + k] = futs[k].get();
        next += wave;
    }

    std::printf("%-20s %-16s %-16s %8s %10s %12s %12s %8s\n", "run", "task", "cell", "steps",
                "crossed", "train_loss", "train_acc", "bpc");
    bool any_aborted = false;
    for (const auto& out : outcomes) {
        auto cell = [&]() { return out.cfg.cell_name; };
        std::printf("%-20s %-16s %-16s %8llu %10s %12s %12s %8s\n", out.cfg.name.c_str(),
                    out.cfg.task.c_str(), cell().c_str(),
                    static_cast<unsigned long long>(out.steps_done),
                    out.crossed ? std::to_string(out.crossed_step).c_str() : "-",
                    out.final_train_loss ? fmt_double(*out.final_train_loss).c_str() : "-",
                    out.final_train_accuracy ? fmt_double(*out.final_train_accuracy).c_str() : "-",
                    out.final_bpc ? fmt_double(*out.final_bpc).c_str() : "-");
        any_aborted = any_aborted || out.aborted;
    }
    return any_aborted ? 3 : 0;
}

}  // namespace cli_detail

// Entry point shared by the binary and the tests; returns the process exit
// code. Exit contract: 0 success, 2 usage/config errors, 3 numeric failures.
inline int run_cli(std::vector<std::string> args) {
    CLI::App app{"recurrent attention sequence-learning laboratory"};
    app.require_subcommand(1);

    std::string config_path, preset, out_dir = "out", resume, ckpt_path, table_path;
    std::optional<std::uint64_t> seed_opt;
    std::uint64_t seed_value = 0;

    auto* tr = app.add_subcommand("train", "train a model from a config file");
    tr->add_option("--config", config_path, "run configuration file")->required();
    auto* seed_flag = tr->add_option("--seed", seed_value, "override train.seed");
    tr->add_option("--out", out_dir, "output directory (default out)");
    tr->add_option("--preset", preset, "scale preset: desk or paper");
    tr->add_option("--resume", resume, "checkpoint to resume from");

    auto* ev = app.add_subcommand("eval", "evaluate a checkpoint");
    ev->add_option("--checkpoint", ckpt_path, "checkpoint file")->required();
    ev->add_option("--config", config_path, "run configuration file")->required();
    ev->add_option("--table", table_path, "summary table to append to");

    double c = 0.5;
    std::size_t steps = 200;
    std::string mode = "analytic", cell = "rda-sigmoid-id", lemma_csv = "lemma1_report.csv";
    std::uint64_t lemma_seed = 1;
    auto* lm = app.add_subcommand("lemma1", "alternating-output attention demand probes");
    lm->add_option("--c", c, "target amplitude in (0,1)");
    lm->add_option("--steps", steps, "probe length");
    lm->add_option("--mode", mode, "analytic or train");
    lm->add_option("--cell", cell, "cell for train mode");
    lm->add_option("--seed", lemma_seed, "probe seed");
    lm->add_option("--out", lemma_csv, "report csv path (analytic mode)");

    std::vector<std::string> metrics_files;
    std::string column = "train_loss", out_svg = "plot.svg";
    bool log_scale = false;
    auto* pl = app.add_subcommand("plot", "render metrics columns as an svg line chart");
    pl->add_option("--metrics", metrics_files, "metrics.csv files")->required()->expected(-1);
    pl->add_option("--column", column, "column to plot");
    pl->add_option("--out", out_svg, "output svg path");
    pl->add_flag("--log", log_scale, "log-scale the y axis");

    std::string manifest_path;
    std::size_t jobs = 1;
    auto* mf = app.add_subcommand("manifest", "run every config listed in a manifest");
    mf->add_option("--file", manifest_path, "manifest file")->required();
    mf->add_option("--jobs", jobs, "concurrent runs");
    mf->add_option("--preset", preset, "scale preset applied to every run");

    std::vector<char*> argv;
    std::vector<std::string> storage = std::move(args);
    storage.insert(storage.begin(), "rnnlab");
    argv.reserve(storage.size());
    for (auto& s : storage) argv.push_back(s.data());

    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        if (seed_flag->count() > 0) seed_opt = seed_value;
        if (tr->parsed()) return cli_detail::cmd_train(config_path, preset, seed_opt, out_dir, resume);
        if (ev->parsed()) return cli_detail::cmd_eval(ckpt_path, config_path, table_path);
        if (lm->parsed()) return cli_detail::cmd_lemma1(c, steps, mode, cell, lemma_seed, lemma_csv);
        if (pl->parsed()) return cli_detail::cmd_plot(metrics_files, column, out_svg, log_scale);
        if (mf->parsed()) return cli_detail::cmd_manifest(manifest_path, jobs, preset);
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return ev->parsed() ? 3 : 2;
    }
    return 2;
}

}  // namespace rnnlab
