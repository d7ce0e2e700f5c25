// Acceptance suite: one test case per criterion, each printing a PASS/FAIL
// line. Desk-scale settings keep every run inside a single-core budget while
// preserving the task structure of the published experiments.

#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "rnnlab/analysis.hpp"
#include "rnnlab/textgen.hpp"
#include "rnnlab/trainer.hpp"
#include "support.hpp"

using namespace rnnlab;
using testsupport::fd_max_rel_err;
using testsupport::random_tensor;

namespace {

namespace fs = std::filesystem;

void report(const char* crit, bool pass, const std::string& detail) {
    std::printf("[acceptance] %s: %s%s%s\n", crit, pass ? "PASS" : "FAIL",
                detail.empty() ? "" : "  ", detail.c_str());
    std::fflush(stdout);
}

fs::path work_dir(const char* leaf) {
    auto d = fs::temp_directory_path() / "rnnlab_acceptance" / leaf;
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

constexpr std::uint64_t kNotCrossed = ~0ULL;

std::uint64_t median3(std::uint64_t a, std::uint64_t b, std::uint64_t c) {
    std::uint64_t v[3] = {a, b, c};
    std::sort(v, v + 3);
    return v[1];
}

struct CellRuns {
    std::string cell;
    std::uint64_t crossing[3] = {kNotCrossed, kNotCrossed, kNotCrossed};
    double final_metric[3] = {0, 0, 0};
    std::uint64_t clamps[3] = {0, 0, 0};

    int crossed_count() const {
        int n = 0;
        for (auto c : crossing) n += c != kNotCrossed;
        return n;
    }
    std::uint64_t median() const { return median3(crossing[0], crossing[1], crossing[2]); }
};

// All five cells compared throughout the suite.
const std::vector<std::string> kAllCells{"rwa", "rda-exp-tanh", "rda-sigmoid-id", "lstm", "gru"};

const fs::path& shared_corpus() {
    static const fs::path path = [] {
        const fs::path p = fs::temp_directory_path() / "rnnlab_acceptance" / "corpus.txt";
        fs::create_directories(p.parent_path());
        std::ofstream out(p, std::ios::binary | std::ios::trunc);
        out << synth_text(20250809, std::size_t{1} << 20);
        return p;
    }();
    return path;
}

}  // namespace

TEST_CASE("gradient oracle across all cells", "[acceptance][c1]") {
    SplitMix64 rng(1001);
    double worst = 0.0;
    for (const auto& cell : kAllCells) {
        const CellConfig cfg = cell_from_name(cell);
        for (int trial = 0; trial < 100; ++trial) {
            Tape tape;
            ParamVars pv;
            std::map<std::string, Tensor> values;
            NamedTensors params = init_cell_params(cfg, 2, 3, rng);
            for (auto& [name, t] : params) {
                pv[name] = tape.leaf(name, t.dims());
                values[name] = random_tensor(t.dims(), rng, -0.5, 0.5);
            }
            std::vector<Var> xs;
            for (int s = 0; s < 10; ++s) {
                const std::string name = "x" + std::to_string(s);
                xs.push_back(tape.leaf(name, {2, 2}));
                values[name] = random_tensor({2, 2}, rng, -2.0, 2.0);
            }
            Unrolled u = unroll(tape, cfg, pv, xs, initial_state(tape, cfg, pv, 2, 3));
            std::vector<Var> outs;
            for (const auto& st : u.steps) outs.push_back(st.output);
            Var loss = tape.sum_all(
                tape.mul(tape.stack_rows(outs), tape.constant(random_tensor({20, 3}, rng, -1.0, 1.0))));
            worst = std::max(worst, fd_max_rel_err(tape, loss, values));
        }
    }
    const bool pass = worst < 1e-6;
    std::ostringstream d;
    d << "max relative error " << worst << " over 5 cells x 100 draws (h=1e-5, bound 1e-6)";
    report("c1 gradient oracle", pass, d.str());
    REQUIRE(pass);
}

TEST_CASE("discount-one rda reproduces rwa trajectories", "[acceptance][c2]") {
    SplitMix64 rng(1002);
    CellConfig rda{CellKind::Rda, AttentionKind::Exp, HiddenKind::Tanh, OutputKind::Identity, 1.0, true};
    NamedTensors pr = init_cell_params(rda, 3, 4, rng);
    pr["W_gamma"].fill(0.0);
    pr["b_gamma"].fill(100.0);
    NamedTensors pw;
    for (const auto& name : cell_param_names(CellConfig::rwa())) pw[name] = pr.at(name);

    Tape ta, tb;
    ParamVars pva, pvb;
    for (const auto& [name, t] : pr) pva[name] = ta.constant(t);
    for (const auto& [name, t] : pw) pvb[name] = tb.constant(t);
    std::vector<Var> xa, xb;
    for (int s = 0; s < 100; ++s) {
        Tensor x = random_tensor({2, 3}, rng, -1.0, 1.0);
        xa.push_back(ta.constant(x));
        xb.push_back(tb.constant(x));
    }
    Unrolled ua = unroll(ta, rda, pva, xa, initial_state(ta, rda, pva, 2, 4));
    Unrolled ub = unroll(tb, CellConfig::rwa(), pvb, xb, initial_state(tb, CellConfig::rwa(), pvb, 2, 4));
    ta.forward();
    tb.forward();
    double worst = 0.0;
    for (int s = 0; s < 100; ++s) {
        const Tensor& ha = ta.value(ua.steps[s].state.h);
        const Tensor& hb = tb.value(ub.steps[s].state.h);
        for (std::size_t i = 0; i < ha.size(); ++i) worst = std::max(worst, std::abs(ha[i] - hb[i]));
    }
    const bool pass = worst <= 1e-12;
    std::ostringstream d;
    d << "max trajectory difference " << worst << " over 100 steps (bound 1e-12)";
    report("c2 reduction equivalence", pass, d.str());
    REQUIRE(pass);
}

TEST_CASE("running average stays in the z envelope over long rollouts", "[acceptance][c3]") {
    SplitMix64 rng(1003);
    bool pass = true;
    double worst_violation = 0.0;
    for (const auto& cell : {std::string("rwa"), std::string("rda-sigmoid-id")}) {
        const CellConfig cfg = cell_from_name(cell);
        NamedTensors p = init_cell_params(cfg, 3, 4, rng);
        Tape tape;
        ParamVars pv;
        for (const auto& [name, t] : p) pv[name] = tape.constant(t);
        std::vector<Var> xs;
        for (int s = 0; s < 10000; ++s) xs.push_back(tape.constant(random_tensor({1, 3}, rng, -1.5, 1.5)));
        Unrolled u = unroll(tape, cfg, pv, xs, initial_state(tape, cfg, pv, 1, 4));
        tape.forward();
        Tensor lo(Shape{1, 4}, 1e300), hi(Shape{1, 4}, -1e300);
        for (int s = 0; s < 10000; ++s) {
            const Tensor& z = tape.value(u.steps[s].features);
            const Tensor& n = tape.value(u.steps[s].state.n);
            const Tensor& d = tape.value(u.steps[s].state.d);
            for (std::size_t i = 0; i < z.size(); ++i) {
                lo[i] = std::min(lo[i], z[i]);
                hi[i] = std::max(hi[i], z[i]);
                const double ratio = n[i] / (d[i] + kDivEps);
                const double viol = std::max(lo[i] - ratio, ratio - hi[i]);
                worst_violation = std::max(worst_violation, viol);
                pass = pass && viol <= 1e-6;
            }
        }
    }
    std::ostringstream d;
    d << "worst envelope violation " << worst_violation << " over 2 cells x 10000 steps (slack 1e-6)";
    report("c3 convex combination bound", pass, d.str());
    REQUIRE(pass);
}

TEST_CASE("denominator monotonicity and the discounted cap", "[acceptance][c4]") {
    SplitMix64 rng(1004);
    bool monotone = true;
    {
        NamedTensors p = init_cell_params(CellConfig::rwa(), 2, 4, rng);
        Tensor inputs = random_tensor({2, 10000, 2}, rng, -1.5, 1.5);
        AttentionTrace tr = trace_rollout(CellConfig::rwa(), p, inputs, 4);
        for (std::size_t s = 1; s < tr.denominator.size() && monotone; ++s) {
            for (std::size_t i = 0; i < tr.denominator[s].size(); ++i) {
                if (!(tr.denominator[s][i] > tr.denominator[s - 1][i])) {
                    monotone = false;
                    break;
                }
            }
        }
    }
    bool capped = true;
    double max_d = 0.0;
    {
        CellConfig cfg = CellConfig::rda_sigmoid_id();
        cfg.gamma_max = 0.9;
        NamedTensors p = init_cell_params(cfg, 2, 4, rng);
        Tensor inputs = random_tensor({2, 10000, 2}, rng, -2.0, 2.0);
        AttentionTrace tr = trace_rollout(cfg, p, inputs, 4);
        for (const auto& d : tr.denominator) {
            for (std::size_t i = 0; i < d.size(); ++i) {
                max_d = std::max(max_d, d[i]);
                capped = capped && d[i] <= 10.0;
            }
        }
    }
    const bool pass = monotone && capped;
    std::ostringstream d;
    d << "rwa d strictly increasing over 10000 steps: " << (monotone ? "yes" : "no")
      << "; clamped-discount max d " << max_d << " (cap 10)";
    report("c4 denominator behaviour", pass, d.str());
    REQUIRE(pass);
}

TEST_CASE("alternating-output attention demand grows geometrically", "[acceptance][c5]") {
    SplitMix64 rng(1005);
    bool pass = true;
    double worst_margin = 1e300;
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<double> z = feasible_z_sequence(0.5, 40, 1.0, rng);
        GeometricGrowthReport r = lemma1_analytic_probe(0.5, z, 40, 1.0);
        pass = pass && !r.bound_violated && r.infeasible_count == 0;
        for (std::size_t i = 1; i < r.ratio.size(); ++i) {
            worst_margin = std::min(worst_margin, r.ratio[i] - r.bound);
            pass = pass && r.ratio[i] >= r.bound - 1e-12;
        }
        const double logb = std::log(r.bound);
        for (std::size_t i = 0; i < r.denominator.size(); ++i) {
            pass = pass && std::log(r.denominator[i]) >=
                               std::log(r.denominator[0]) + static_cast<double>(i) * logb - 1e-9;
        }
    }
    std::ostringstream d;
    d << "100 feasible z sequences, worst ratio-bound margin " << worst_margin
      << ", log d linear growth at slope >= log(bound)";
    report("c5 geometric growth probe", pass, d.str());
    REQUIRE(pass);
}

TEST_CASE("parity contrast between rda and rwa", "[acceptance][c6]") {
    ParityProbeParams pp;  // T=100, c=0.5, hidden 32, batch 20, 5000 steps, mse 0.01
    ParityProbeSummary rda[3], rwa[3];
    for (int i = 0; i < 3; ++i) {
        pp.seed = static_cast<std::uint64_t>(i + 1);
        rda[i] = parity_training_probe("rda-sigmoid-id", pp);
        rwa[i] = parity_training_probe("rwa", pp);
    }
    int rda_ok = 0, contrast_ok = 0;
    std::ostringstream d;
    for (int i = 0; i < 3; ++i) {
        const bool solved = rda[i].crossed;
        rda_ok += solved;
        const bool contrast = rwa[i].final_mse >= 10.0 * rda[i].final_mse || rwa[i].clamp_events > 0;
        contrast_ok += contrast;
        d << "seed " << (i + 1) << ": rda mse " << fmt_double(rda[i].final_mse)
          << (solved ? " (step " + std::to_string(rda[i].crossed_step) + ")" : " (no cross)")
          << ", rwa mse " << fmt_double(rwa[i].final_mse) << " clamps " << rwa[i].clamp_events
          << "; ";
    }
    const bool pass = rda_ok >= 2 && contrast_ok >= 2;
    report("c6 parity contrast", pass, d.str());
    REQUIRE(pass);
}

namespace {

CellRuns run_cells_over_seeds(const std::string& cell, const RunConfig& base) {
    CellRuns r;
    r.cell = cell;
    for (int i = 0; i < 3; ++i) {
        RunConfig rc = base;
        rc.name = cell + "-s" + std::to_string(i + 1);
        rc.cell_name = cell;
        rc.cell = cell_from_name(cell);
        rc.seed = static_cast<std::uint64_t>(i + 1);
        TrainOutcome out = train(rc);
        r.crossing[i] = out.crossed ? out.crossed_step : kNotCrossed;
        if (base.stop.metric == "train_accuracy") {
            r.final_metric[i] = out.final_train_accuracy.value_or(0.0);
        } else {
            r.final_metric[i] = out.final_train_loss.value_or(1e300);
        }
        r.clamps[i] = out.clamp_total;
    }
    return r;
}

}  // namespace

TEST_CASE("addition ordering at desk scale", "[acceptance][c7]") {
    RunConfig base;
    base.task = "addition";
    base.length = 100;
    base.hidden_dim = 32;
    base.batch = 20;
    base.max_steps = 3000;
    base.eval_every = 25;
    base.stop = {true, "train_loss", "<", 0.01};

    std::vector<CellRuns> all;
    for (const auto& cell : kAllCells) all.push_back(run_cells_over_seeds(cell, base));

    std::ostringstream d;
    bool pass = true;
    const CellRuns* lstm = nullptr;
    for (const auto& r : all) {
        d << r.cell << " median " << (r.median() == kNotCrossed ? std::string("-")
                                                                : std::to_string(r.median()))
          << " (" << r.crossed_count() << "/3); ";
        if (r.cell == "lstm") lstm = &r;
    }
    for (const auto& r : all) {
        if (r.cell == "lstm") continue;
        pass = pass && r.crossed_count() >= 2;
        pass = pass && r.median() < lstm->median();
    }
    report("c7 addition ordering", pass, d.str());
    REQUIRE(pass);
}

TEST_CASE("multicopy contrast at desk scale", "[acceptance][c8]") {
    RunConfig base;
    base.task = "multicopy";
    base.n_symbols = 8;
    base.prefix_len = 6;
    base.gap = 27;
    base.copies = 5;  // episodes of 40 tile a length-200 sequence
    base.hidden_dim = 32;
    base.batch = 20;
    base.max_steps = 8000;
    base.eval_every = 25;
    base.stop = {true, "train_accuracy", ">", 0.99};

    std::vector<CellRuns> all;
    for (const auto& cell : kAllCells) all.push_back(run_cells_over_seeds(cell, base));

    std::ostringstream d;
    const CellRuns *rwa = nullptr, *exp_tanh = nullptr, *sigmoid_id = nullptr, *lstm = nullptr,
                   *gru = nullptr;
    for (const auto& r : all) {
        d << r.cell << " median " << (r.median() == kNotCrossed ? std::string("-")
                                                                : std::to_string(r.median()))
          << " (" << r.crossed_count() << "/3, acc " << fmt_double(r.final_metric[0]) << "/"
          << fmt_double(r.final_metric[1]) << "/" << fmt_double(r.final_metric[2]) << "); ";
        if (r.cell == "rwa") rwa = &r;
        if (r.cell == "rda-exp-tanh") exp_tanh = &r;
        if (r.cell == "rda-sigmoid-id") sigmoid_id = &r;
        if (r.cell == "lstm") lstm = &r;
        if (r.cell == "gru") gru = &r;
    }
    bool pass = exp_tanh->crossed_count() >= 2 && sigmoid_id->crossed_count() >= 2;
    // the same budget leaves the plain running average below 0.9 on every seed
    for (int i = 0; i < 3; ++i) {
        pass = pass && rwa->crossing[i] == kNotCrossed && rwa->final_metric[i] < 0.9;
    }
    pass = pass && lstm->crossed_count() >= 2 && gru->crossed_count() >= 2;
    pass = pass && lstm->median() > exp_tanh->median() && lstm->median() > sigmoid_id->median();
    pass = pass && gru->median() > exp_tanh->median() && gru->median() > sigmoid_id->median();
    report("c8 multicopy contrast", pass, d.str());
    REQUIRE(pass);
}

TEST_CASE("character model sanity on the bundled corpus", "[acceptance][c9]") {
    const fs::path corpus_path = shared_corpus();
    Corpus corpus = load_corpus(corpus_path.string());
    const double uniform_bpc = std::log2(static_cast<double>(corpus.vocab()));

    constexpr std::uint64_t kBudgetMs = 30ull * 60ull * 1000ull;  // 30 minutes per cell

    std::map<std::string, double> bpc;
    std::ostringstream d;
    for (const auto& cell : kAllCells) {
        RunConfig rc;
        rc.name = "charlm-" + cell;
        rc.task = "charlm";
        rc.corpus = corpus_path.string();
        rc.cell_name = cell;
        rc.cell = cell_from_name(cell);
        rc.hidden_dim = 128;
        rc.embedding_dim = 64;
        rc.batch = 32;
        rc.bptt_len = 250;
        rc.max_steps = 100000000;  // the wall budget is the binding limit
        rc.eval_every = 200;
        rc.seed = 1;
        TrainHooks hooks;
        hooks.wall_budget_ms = kBudgetMs;
        TrainOutcome out = train(rc, hooks);

        Model model(rc, model_shape(rc, corpus.vocab()));
        model.params() = out.params;
        bpc[cell] = evaluate_corpus_bpc(model, test_split(corpus));
        d << cell << " test bpc " << fmt_double(bpc[cell]) << " after " << out.steps_done
          << " windows; ";
    }
    bool pass = true;
    for (const auto& [cell, value] : bpc) pass = pass && value < uniform_bpc;
    pass = pass && bpc["rwa"] > bpc["rda-exp-tanh"] && bpc["rwa"] > bpc["rda-sigmoid-id"];
    d << "uniform " << fmt_double(uniform_bpc);
    report("c9 char-lm sanity", pass, d.str());
    REQUIRE(pass);
}

TEST_CASE("determinism and persistence", "[acceptance][c10]") {
    auto dir = work_dir("c10");
    RunConfig rc;
    rc.name = "det";
    rc.task = "addition";
    rc.length = 50;
    rc.cell_name = "rda-sigmoid-id";
    rc.cell = cell_from_name(rc.cell_name);
    rc.hidden_dim = 16;
    rc.batch = 10;
    rc.max_steps = 400;
    rc.eval_every = 50;
    rc.seed = 77;

    train(rc, {.out_dir = (dir / "a").string()});
    train(rc, {.out_dir = (dir / "b").string()});
    const bool bytes_equal =
        slurp(dir / "a" / "det" / "metrics.csv") == slurp(dir / "b" / "det" / "metrics.csv");

    // halt at 200, resume to 400, compare against the uninterrupted tail
    RunConfig rc_half = rc;
    rc_half.max_steps = 200;
    train(rc_half, {.out_dir = (dir / "half").string()});
    TrainOutcome resumed =
        train(rc, {.resume_from = (dir / "half" / "det" / "final.ckpt").string()});
    TrainOutcome full = train(rc);
    std::vector<MetricsRow> tail;
    for (const auto& row : full.rows) {
        if (row.step > 200) tail.push_back(row);
    }
    bool resume_equal = resumed.rows.size() == tail.size();
    for (std::size_t i = 0; resume_equal && i < tail.size(); ++i) {
        resume_equal = metrics_row_csv(resumed.rows[i]) == metrics_row_csv(tail[i]);
    }

    // the same contract holds for a character model with carried state
    auto corpus_file = dir / "tiny.txt";
    {
        std::ofstream out(corpus_file, std::ios::binary);
        out << synth_text(42, 4000);
    }
    RunConfig cl;
    cl.name = "clm";
    cl.task = "charlm";
    cl.corpus = corpus_file.string();
    cl.cell_name = "gru";
    cl.cell = CellConfig::gru();
    cl.hidden_dim = 8;
    cl.embedding_dim = 4;
    cl.batch = 2;
    cl.bptt_len = 16;
    cl.max_steps = 80;
    cl.eval_every = 20;
    cl.seed = 5;
    RunConfig cl_half = cl;
    cl_half.max_steps = 40;
    train(cl_half, {.out_dir = (dir / "clhalf").string()});
    TrainOutcome cl_resumed =
        train(cl, {.resume_from = (dir / "clhalf" / "clm" / "final.ckpt").string()});
    TrainOutcome cl_full = train(cl);
    std::vector<MetricsRow> cl_tail;
    for (const auto& row : cl_full.rows) {
        if (row.step > 40) cl_tail.push_back(row);
    }
    bool cl_equal = cl_resumed.rows.size() == cl_tail.size();
    for (std::size_t i = 0; cl_equal && i < cl_tail.size(); ++i) {
        cl_equal = metrics_row_csv(cl_resumed.rows[i]) == metrics_row_csv(cl_tail[i]);
    }

    const bool pass = bytes_equal && resume_equal && cl_equal;
    std::ostringstream d;
    d << "metrics.csv byte-identical: " << (bytes_equal ? "yes" : "no")
      << "; resume tail rows equal: " << (resume_equal ? "yes" : "no")
      << "; char-lm resume tail rows equal: " << (cl_equal ? "yes" : "no");
    report("c10 determinism and persistence", pass, d.str());
    REQUIRE(pass);
}

TEST_CASE("format conformance", "[acceptance][c11]") {
    bool pass = std::string(kMetricsHeader) ==
                "step,wall_ms,train_loss,train_accuracy,val_loss,val_accuracy,bpc,attention_clamp_count";

    // checkpoint layout golden assembled by hand
    CheckpointData data;
    data.config_text = "task.name = addition\n";
    data.tensors.emplace_back("w", Tensor::from_data({2, 1}, {1.0, -2.5}));
    std::string expected = "RNNLAB01";
    auto u64le = [&expected](std::uint64_t v) {
        for (int i = 0; i < 8; ++i) expected.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
    };
    u64le(21);
    expected += "task.name = addition\n";
    u64le(1);
    u64le(1);
    expected += "w";
    u64le(2);
    u64le(2);
    u64le(1);
    const unsigned char one[8] = {0, 0, 0, 0, 0, 0, 0xF0, 0x3F};
    const unsigned char minus_two_five[8] = {0, 0, 0, 0, 0, 0, 0x04, 0xC0};
    expected.append(reinterpret_cast<const char*>(one), 8);
    expected.append(reinterpret_cast<const char*>(minus_two_five), 8);
    pass = pass && checkpoint_bytes(data) == expected;

    // a real run writes exactly these shapes
    auto dir = work_dir("c11");
    RunConfig rc;
    rc.name = "fmt";
    rc.task = "addition";
    rc.length = 12;
    rc.cell_name = "rwa";
    rc.cell = CellConfig::rwa();
    rc.hidden_dim = 6;
    rc.batch = 4;
    rc.max_steps = 10;
    rc.eval_every = 5;
    rc.seed = 2;
    train(rc, {.out_dir = dir.string()});
    const std::string csv = slurp(dir / "fmt" / "metrics.csv");
    pass = pass && csv.rfind(std::string(kMetricsHeader) + "\n", 0) == 0;
    CheckpointData loaded = checkpoint_load((dir / "fmt" / "final.ckpt").string());
    pass = pass && loaded.find("W_u") != nullptr && loaded.find("adam.m.W_u") != nullptr;

    report("c11 format conformance", pass, "csv header and checkpoint byte layout pinned");
    REQUIRE(pass);
}
