#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "rnnlab/optim.hpp"
#include "rnnlab/rng.hpp"
#include "rnnlab/tape.hpp"
#include "rnnlab/tensor.hpp"

namespace rnnlab {

// Attention functions are non-negative and monotonically non-decreasing on
// the reals; the hidden/output menus are the closed sets the cells support.
enum class AttentionKind { Exp, Relu, Softplus, Sigmoid };
enum class HiddenKind { Tanh, Identity };
enum class OutputKind { Identity, Tanh };
enum class CellKind { Rwa, Rda, Lstm, Gru };

// Preactivation cap for exp attention; exceeding it is counted, not fatal.
inline constexpr double kExpClampCap = 50.0;
// Guard added to every denominator before division.
inline constexpr double kDivEps = 1e-8;

struct CellConfig {
    CellKind kind = CellKind::Rwa;
    AttentionKind attention = AttentionKind::Exp;
    HiddenKind hidden = HiddenKind::Tanh;
    OutputKind output = OutputKind::Identity;
    double gamma_max = 1.0;  // < 1 clamps the discount gate (diagnostics only)
    bool learn_h0 = true;

    static CellConfig rwa() { return {CellKind::Rwa, AttentionKind::Exp, HiddenKind::Tanh, OutputKind::Identity, 1.0, true}; }
    static CellConfig rda_exp_tanh() { return {CellKind::Rda, AttentionKind::Exp, HiddenKind::Identity, OutputKind::Tanh, 1.0, true}; }
    static CellConfig rda_sigmoid_id() { return {CellKind::Rda, AttentionKind::Sigmoid, HiddenKind::Identity, OutputKind::Identity, 1.0, true}; }
    static CellConfig lstm() { return {CellKind::Lstm, AttentionKind::Exp, HiddenKind::Tanh, OutputKind::Identity, 1.0, true}; }
    static CellConfig gru() { return {CellKind::Gru, AttentionKind::Exp, HiddenKind::Tanh, OutputKind::Identity, 1.0, true}; }
};

inline AttentionKind attention_from_name(const std::string& s) {
    if (s == "exp") return AttentionKind::Exp;
    if (s == "relu") return AttentionKind::Relu;
    if (s == "softplus") return AttentionKind::Softplus;
    if (s == "sigmoid") return AttentionKind::Sigmoid;
    fail("unknown attention function '" + s + "'");
}

inline CellConfig cell_from_name(const std::string& s) {
    if (s == "rwa") return CellConfig::rwa();
    if (s == "rda-exp-tanh") return CellConfig::rda_exp_tanh();
    if (s == "rda-sigmoid-id") return CellConfig::rda_sigmoid_id();
    if (s == "lstm") return CellConfig::lstm();
    if (s == "gru") return CellConfig::gru();
    fail("unknown cell '" + s + "' (expected rwa, rda-exp-tanh, rda-sigmoid-id, lstm or gru)");
}

inline std::string cell_to_name(const CellConfig& c) {
    switch (c.kind) {
        case CellKind::Rwa: return "rwa";
        case CellKind::Lstm: return "lstm";
        case CellKind::Gru: return "gru";
        case CellKind::Rda:
            if (c.attention == AttentionKind::Exp && c.output == OutputKind::Tanh) return "rda-exp-tanh";
            if (c.attention == AttentionKind::Sigmoid && c.output == OutputKind::Identity) return "rda-sigmoid-id";
            return "rda";
    }
    return "?";
}

// Plain elementwise attention, for probes and tests that work off-tape.
inline Tensor attention_fn(AttentionKind kind, const Tensor& x) {
    Tensor out(x.dims());
    for (std::size_t i = 0; i < x.size(); ++i) {
        switch (kind) {
            case AttentionKind::Exp: out[i] = std::exp(x[i]); break;
            case AttentionKind::Relu: out[i] = x[i] > 0.0 ? x[i] : 0.0; break;
            case AttentionKind::Softplus: out[i] = softplus_scalar(x[i]); break;
            case AttentionKind::Sigmoid: out[i] = sigmoid_scalar(x[i]); break;
        }
    }
    return out;
}

// Parameter names in initialization order. Weight matrices are Xavier with
// fan_in equal to the actual row count (input_dim or input_dim + hidden_dim);
// biases start at 0 except the LSTM forget gate and the RDA discount gate,
// which start at 1. h0 starts at 0.
inline std::vector<std::string> cell_param_names(const CellConfig& cfg) {
    switch (cfg.kind) {
        case CellKind::Rwa:
            return {"W_u", "b_u", "W_g", "b_g", "W_a", "b_a", "h0"};
        case CellKind::Rda:
            return {"W_u", "b_u", "W_g", "b_g", "W_a", "b_a", "W_gamma", "b_gamma", "h0"};
        case CellKind::Lstm:
            return {"W_i", "b_i", "W_f", "b_f", "W_o", "b_o", "W_c", "b_c", "h0"};
        case CellKind::Gru:
            return {"W_z", "b_z", "W_r", "b_r", "W_c", "b_c", "h0"};
    }
    return {};
}

inline NamedTensors init_cell_params(const CellConfig& cfg, std::size_t input_dim,
                                     std::size_t hidden_dim, SplitMix64& rng) {
    NamedTensors p;
    const std::size_t cat = input_dim + hidden_dim;
    for (const auto& name : cell_param_names(cfg)) {
        if (name == "h0") {
            p.emplace(name, Tensor(Shape{hidden_dim}));
        } else if (name == "W_u") {
            p.emplace(name, xavier_init(input_dim, hidden_dim, rng));
        } else if (name[0] == 'W') {
            p.emplace(name, xavier_init(cat, hidden_dim, rng));
        } else {
            const double init = (name == "b_gamma" || name == "b_f") ? 1.0 : 0.0;
            p.emplace(name, Tensor(Shape{hidden_dim}, init));
        }
    }
    return p;
}

using ParamVars = std::map<std::string, Var>;

struct RecurrentVars {
    Var n, d, h, c;
};

struct CellStep {
    Var output;
    RecurrentVars state;
    Var features;   // z_t, RWA/RDA only
    Var attention;  // a_t, RWA/RDA only
    Var discount;   // gamma_t, RDA only
};

inline Var attention_on_tape(Tape& t, AttentionKind kind, Var pre) {
    switch (kind) {
        case AttentionKind::Exp: return t.exp_clamp(pre, kExpClampCap);
        case AttentionKind::Relu: return t.relu(pre);
        case AttentionKind::Softplus: return t.softplus(pre);
        case AttentionKind::Sigmoid: return t.sigmoid(pre);
    }
    fail("bad attention kind");
}

inline Var affine(Tape& t, Var x, Var w, Var b) { return t.add_row(t.matmul(x, w), b); }

inline RecurrentVars initial_state(Tape& t, const CellConfig& cfg, const ParamVars& p,
                                   std::size_t batch, std::size_t hidden_dim) {
    RecurrentVars s;
    Var h = t.broadcast_rows(p.at("h0"), batch);
    s.h = h;
    if (cfg.kind == CellKind::Rwa || cfg.kind == CellKind::Rda) {
        s.n = t.constant(Tensor(Shape{batch, hidden_dim}));
        s.d = t.constant(Tensor(Shape{batch, hidden_dim}));
    } else if (cfg.kind == CellKind::Lstm) {
        s.c = t.constant(Tensor(Shape{batch, hidden_dim}));
    }
    return s;
}

inline CellStep rwa_step(Tape& t, const ParamVars& p, const RecurrentVars& s, Var x) {
    Var xh = t.concat_cols(x, s.h);
    Var u = affine(t, x, p.at("W_u"), p.at("b_u"));
    Var g = affine(t, xh, p.at("W_g"), p.at("b_g"));
    Var z = t.mul(u, t.tanh(g));
    Var a = t.exp_clamp(affine(t, xh, p.at("W_a"), p.at("b_a")), kExpClampCap);
    CellStep out;
    out.state.n = t.add(s.n, t.mul(z, a));
    out.state.d = t.add(s.d, a);
    out.state.h = t.tanh(t.div_eps(out.state.n, out.state.d, kDivEps));
    out.output = out.state.h;
    out.features = z;
    out.attention = a;
    return out;
}

inline CellStep rda_step(Tape& t, const CellConfig& cfg, const ParamVars& p,
                         const RecurrentVars& s, Var x) {
    Var xh = t.concat_cols(x, s.h);
    Var u = affine(t, x, p.at("W_u"), p.at("b_u"));
    Var g = affine(t, xh, p.at("W_g"), p.at("b_g"));
    Var z = t.mul(u, t.tanh(g));
    Var a = attention_on_tape(t, cfg.attention, affine(t, xh, p.at("W_a"), p.at("b_a")));
    Var gamma = t.sigmoid(affine(t, xh, p.at("W_gamma"), p.at("b_gamma")));
    if (cfg.gamma_max < 1.0) gamma = t.min_const(gamma, cfg.gamma_max);
    CellStep out;
    out.state.n = t.add(t.mul(s.n, gamma), t.mul(z, a));
    out.state.d = t.add(t.mul(s.d, gamma), a);
    Var ratio = t.div_eps(out.state.n, out.state.d, kDivEps);
    out.state.h = cfg.hidden == HiddenKind::Tanh ? t.tanh(ratio) : ratio;
    out.output = cfg.output == OutputKind::Tanh ? t.tanh(out.state.h) : out.state.h;
    out.features = z;
    out.attention = a;
    out.discount = gamma;
    return out;
}

inline CellStep lstm_step(Tape& t, const ParamVars& p, const RecurrentVars& s, Var x) {
    Var xh = t.concat_cols(x, s.h);
    Var i = t.sigmoid(affine(t, xh, p.at("W_i"), p.at("b_i")));
    Var f = t.sigmoid(affine(t, xh, p.at("W_f"), p.at("b_f")));
    Var o = t.sigmoid(affine(t, xh, p.at("W_o"), p.at("b_o")));
    Var cand = t.tanh(affine(t, xh, p.at("W_c"), p.at("b_c")));
    CellStep out;
    out.state.c = t.add(t.mul(f, s.c), t.mul(i, cand));
    out.state.h = t.mul(o, t.tanh(out.state.c));
    out.output = out.state.h;
    return out;
}

inline CellStep gru_step(Tape& t, const ParamVars& p, const RecurrentVars& s, Var x) {
    Var xh = t.concat_cols(x, s.h);
    Var zt = t.sigmoid(affine(t, xh, p.at("W_z"), p.at("b_z")));
    Var r = t.sigmoid(affine(t, xh, p.at("W_r"), p.at("b_r")));
    Var cand = t.tanh(affine(t, t.concat_cols(x, t.mul(r, s.h)), p.at("W_c"), p.at("b_c")));
    CellStep out;
    out.state.h = t.add(t.mul(t.add_const(t.scale(zt, -1.0), 1.0), s.h), t.mul(zt, cand));
    out.output = out.state.h;
    return out;
}

inline CellStep cell_step(Tape& t, const CellConfig& cfg, const ParamVars& p,
                          const RecurrentVars& s, Var x) {
    switch (cfg.kind) {
        case CellKind::Rwa: return rwa_step(t, p, s, x);
        case CellKind::Rda: return rda_step(t, cfg, p, s, x);
        case CellKind::Lstm: return lstm_step(t, p, s, x);
        case CellKind::Gru: return gru_step(t, p, s, x);
    }
    fail("bad cell kind");
}

struct Unrolled {
    std::vector<CellStep> steps;
    RecurrentVars final_state;
};

inline Unrolled unroll(Tape& t, const CellConfig& cfg, const ParamVars& p,
                       std::span<const Var> xs, RecurrentVars state) {
    if (xs.empty()) fail("unroll: sequence length must be at least 1");
    Unrolled u;
    u.steps.reserve(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) {
        t.set_context(cell_to_name(cfg) + " step t=" + std::to_string(i));
        CellStep st = cell_step(t, cfg, p, state, xs[i]);
        state = st.state;
        u.steps.push_back(st);
    }
    u.final_state = state;
    return u;
}

}  // namespace rnnlab
