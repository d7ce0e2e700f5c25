#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "rnnlab/cells.hpp"
#include "rnnlab/metrics.hpp"
#include "rnnlab/trainer.hpp"

namespace rnnlab {

// Exact attention demand for holding an alternating output. With f_h = tanh
// the running average must sit at x+ = atanh(c) on one step and x- = -x+ on
// the next; the attention that forces each flip is
//     a = d * (x_tgt - x_cur) / (z - x_tgt)
// which is only non-negative when z lies beyond the target. Each feasible
// flip multiplies d by at least 1 + |delta| / (z_max + x_max).
struct GeometricGrowthReport {
    double c = 0.0;
    double x_plus = 0.0;
    double x_minus = 0.0;
    double delta = 0.0;
    double z_max = 0.0;
    double x_max = 0.0;
    double bound = 0.0;  // 1 + |delta| / (z_max + x_max)

    // Index t of these vectors is probe step t+1; step 1 is the start state.
    std::vector<double> attention;    // a_t (0 at start and on infeasible steps)
    std::vector<double> denominator;  // d_t
    std::vector<double> ratio;        // d_t / d_{t-1}, NaN where infeasible
    std::vector<bool> feasible;       // transition into step t demanded a >= 0

    std::size_t infeasible_count = 0;
    bool bound_violated = false;

    std::string csv() const {
        std::ostringstream os;
        os << "step,a_t,d_t,ratio,bound\n";
        for (std::size_t i = 0; i < denominator.size(); ++i) {
            os << (i + 1) << ',';
            if (feasible[i]) os << fmt_double(attention[i]);
            os << ',' << fmt_double(denominator[i]) << ',';
            if (feasible[i] && i > 0) os << fmt_double(ratio[i]);
            os << ',' << fmt_double(bound) << "\n";
        }
        return os.str();
    }

    std::string summary() const {
        std::ostringstream os;
        os << "alternating-output attention demand\n";
        os << "  c = " << fmt_double(c) << ", x+ = " << fmt_double(x_plus)
           << ", x- = " << fmt_double(x_minus) << ", delta = " << fmt_double(delta) << "\n";
        os << "  z_max = " << fmt_double(z_max) << ", x_max = " << fmt_double(x_max)
           << ", growth bound = " << fmt_double(bound) << "\n";
        os << "  steps = " << denominator.size() << ", infeasible = " << infeasible_count << "\n";
        os << "  d_1 = " << fmt_double(denominator.front())
           << ", d_final = " << fmt_double(denominator.back()) << "\n";
        os << "  bound violated: " << (bound_violated ? "yes" : "no") << "\n";
        return os.str();
    }
};

// z_sequence[t] is consumed by the transition into step t+2 (the start state
// needs no feature). Steps whose flip would demand negative attention are
// marked infeasible; the demand pattern then continues from the target value
// with d unchanged, since no admissible attention exists for that step.
inline GeometricGrowthReport lemma1_analytic_probe(double c, std::span<const double> z_sequence,
                                                   std::size_t steps,
                                                   std::optional<double> z_bound = std::nullopt) {
    if (!(c > 0.0 && c < 1.0)) fail("lemma1 probe: c must lie in (0, 1)");
    if (steps < 2) fail("lemma1 probe: need at least 2 steps");
    if (z_sequence.size() + 1 < steps) fail("lemma1 probe: z sequence shorter than steps - 1");

    GeometricGrowthReport r;
    r.c = c;
    r.x_plus = std::atanh(c);
    r.x_minus = -r.x_plus;
    r.delta = r.x_plus - r.x_minus;
    r.x_max = std::abs(r.x_plus);
    double zmax = 0.0;
    for (std::size_t i = 0; i + 1 < steps; ++i) zmax = std::max(zmax, std::abs(z_sequence[i]));
    r.z_max = z_bound.value_or(zmax);
    if (zmax > r.z_max + 1e-15) fail("lemma1 probe: z sequence exceeds the stated bound");
    r.bound = 1.0 + std::abs(r.delta) / (r.z_max + r.x_max);

    double d = 1.0;  // d_1 = a_1 = 1 with n_1/d_1 = x_plus
    double n = r.x_plus;
    double cur = r.x_plus;
    r.attention.push_back(1.0);
    r.denominator.push_back(d);
    r.ratio.push_back(std::nan(""));
    r.feasible.push_back(true);

    for (std::size_t t = 2; t <= steps; ++t) {
        const double target = (t % 2 == 0) ? r.x_minus : r.x_plus;
        const double z = z_sequence[t - 2];
        const double denom = z - target;
        const double a = denom == 0.0 ? -1.0 : d * (target - cur) / denom;
        if (a >= 0.0 && std::isfinite(a)) {
            const double d_next = d + a;
            n = n + z * a;
            r.attention.push_back(a);
            r.ratio.push_back(d_next / d);
            r.feasible.push_back(true);
            if (d_next / d < r.bound - 1e-12) r.bound_violated = true;
            d = d_next;
            // exactness: the computed attention lands the average on target
            if (std::abs(n / d - target) > 1e-9) {
                fail("lemma1 probe: recurrence drifted off the target alternation");
            }
        } else {
            r.attention.push_back(0.0);
            r.ratio.push_back(std::nan(""));
            r.feasible.push_back(false);
            ++r.infeasible_count;
            n = d * target;  // continue the demanded alternation from here
        }
        cur = target;
        r.denominator.push_back(d);
    }
    return r;
}

// Feature sequence on which every flip is feasible: z is drawn beyond the
// target on each transition, inside the stated bound.
inline std::vector<double> feasible_z_sequence(double c, std::size_t steps, double z_max,
                                               SplitMix64& rng) {
    const double x = std::atanh(c);
    if (z_max <= x) fail("feasible_z_sequence: need z_max > atanh(c)");
    std::vector<double> z(steps - 1);
    for (std::size_t t = 2; t <= steps; ++t) {
        const bool down = (t % 2 == 0);
        const double lo = down ? -z_max : x;
        const double hi = down ? -x : z_max;
        const double width = hi - lo;
        // keep a sliver away from the endpoint so a stays finite
        z[t - 2] = lo + width * (down ? rng.uniform() * 0.999 : 0.001 + rng.uniform() * 0.999);
    }
    return z;
}

// Forward-only instrumentation of a rollout.
struct AttentionTrace {
    std::vector<Tensor> attention;  // a_t
    std::vector<Tensor> discount;   // gamma_t (RDA only, else empty)
    std::vector<Tensor> denominator;
};

inline AttentionTrace trace_rollout(const CellConfig& cfg, const NamedTensors& params,
                                    const Tensor& inputs_btf, std::size_t hidden_dim) {
    Tape tape;
    ParamVars pv;
    for (const auto& [name, t] : params) pv[name] = tape.constant(t);
    std::vector<Var> xs;
    for (std::size_t t = 0; t < inputs_btf.dims()[1]; ++t) {
        xs.push_back(tape.constant(time_slice(inputs_btf, t)));
    }
    Unrolled u = unroll(tape, cfg, pv, xs, initial_state(tape, cfg, pv, inputs_btf.dims()[0], hidden_dim));
    tape.forward();
    AttentionTrace tr;
    for (const auto& st : u.steps) {
        if (st.attention.valid()) tr.attention.push_back(tape.value(st.attention));
        if (st.discount.valid()) tr.discount.push_back(tape.value(st.discount));
        if (st.state.d.valid()) tr.denominator.push_back(tape.value(st.state.d));
    }
    return tr;
}

// Trains a cell with a 1-dim readout against the alternating target (-1)^t c
// from a constant input; the summary contrasts how cheaply each cell can keep
// flipping its output.
struct ParityProbeSummary {
    std::string cell;
    double final_mse = 0.0;
    bool crossed = false;
    std::uint64_t crossed_step = 0;
    double max_attention = 0.0;
    std::uint64_t clamp_events = 0;
    std::uint64_t steps = 0;
};

struct ParityProbeParams {
    std::size_t length = 100;
    double c = 0.5;
    std::size_t hidden_dim = 32;
    std::size_t batch = 20;
    std::size_t max_steps = 5000;
    std::uint64_t seed = 1;
    double stop_mse = 0.01;
};

inline ParityProbeSummary parity_training_probe(const std::string& cell_name,
                                                const ParityProbeParams& pp = {}) {
    RunConfig rc;
    rc.name = "parity-" + cell_name;
    rc.task = "parity";
    rc.length = pp.length;
    rc.amplitude = pp.c;
    rc.cell_name = cell_name;
    rc.cell = cell_from_name(cell_name);
    rc.hidden_dim = pp.hidden_dim;
    rc.batch = pp.batch;
    rc.max_steps = pp.max_steps;
    rc.eval_every = 25;
    rc.seed = pp.seed;
    rc.stop = {true, "train_loss", "<", pp.stop_mse};
    TrainHooks hooks;
    hooks.record_crossing_only = true;  // the crossing step is bookkeeping: the
                                        // probe always spends its full budget
    TrainOutcome out = train(rc, hooks);
    ParityProbeSummary s;
    s.cell = cell_name;
    s.final_mse = out.final_train_loss.value_or(std::nan(""));
    s.crossed = out.crossed;
    s.crossed_step = out.crossed_step;
    s.max_attention = out.max_attention;
    s.clamp_events = out.clamp_total;
    s.steps = out.steps_done;
    return s;
}

}  // namespace rnnlab
