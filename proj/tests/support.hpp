#pragma once

#include <cmath>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "rnnlab/rng.hpp"
#include "rnnlab/tape.hpp"
#include "rnnlab/tensor.hpp"

namespace testsupport {

inline rnnlab::Tensor random_tensor(rnnlab::Shape shape, rnnlab::SplitMix64& rng, double lo = -2.0,
                                    double hi = 2.0) {
    rnnlab::Tensor t(std::move(shape));
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
    return t;
}

// Central-difference gradient check, independent of the tape's backward pass:
// the only tape facility it uses is re-binding leaves and re-running forward.
// Error metric is |ad - fd| / max(1, |ad|, |fd|).
inline double fd_max_rel_err(rnnlab::Tape& tape, rnnlab::Var loss,
                             std::map<std::string, rnnlab::Tensor> leaf_values,
                             double h = 1e-5) {
    using rnnlab::Tensor;
    for (const auto& [name, v] : leaf_values) tape.bind(name, v);
    tape.forward();
    tape.backward(loss, Tensor::scalar(1.0));
    std::map<std::string, Tensor> ad;
    for (const auto& [name, v] : leaf_values) ad.emplace(name, tape.grad(name));

    double worst = 0.0;
    for (auto& [name, v] : leaf_values) {
        for (std::size_t i = 0; i < v.size(); ++i) {
            const double keep = v[i];
            v[i] = keep + h;
            tape.bind(name, v);
            tape.forward();
            const double fp = tape.value(loss)[0];
            v[i] = keep - h;
            tape.bind(name, v);
            tape.forward();
            const double fm = tape.value(loss)[0];
            v[i] = keep;
            tape.bind(name, v);
            const double fd = (fp - fm) / (2.0 * h);
            const double a = ad.at(name)[i];
            const double denom = std::max({1.0, std::abs(a), std::abs(fd)});
            worst = std::max(worst, std::abs(a - fd) / denom);
        }
    }
    return worst;
}

inline double chi_square_stat(const std::vector<std::size_t>& counts, double expected_per_bin) {
    double stat = 0.0;
    for (auto c : counts) {
        const double d = static_cast<double>(c) - expected_per_bin;
        stat += d * d / expected_per_bin;
    }
    return stat;
}

}  // namespace testsupport
