#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "rnnlab/optim.hpp"
#include "support.hpp"

using namespace rnnlab;
using testsupport::random_tensor;

TEST_CASE("xavier bound and determinism", "[numerics]") {
    SECTION("fan 3/3 gives bound 1") {
        SplitMix64 rng(1);
        Tensor t = xavier_init(3, 3, rng);
        for (std::size_t i = 0; i < t.size(); ++i) {
            CHECK(t[i] <= 1.0);
            CHECK(t[i] >= -1.0);
        }
    }
    SECTION("same seed twice is bit-identical") {
        SplitMix64 a(42), b(42);
        CHECK(xavier_init(7, 5, a) == xavier_init(7, 5, b));
    }
    SECTION("max entry never exceeds the bound") {
        SplitMix64 rng(9);
        for (int k = 0; k < 20; ++k) {
            const std::size_t fi = 1 + rng.below(40), fo = 1 + rng.below(40);
            const double bound = std::sqrt(6.0 / static_cast<double>(fi + fo));
            CHECK(xavier_init(fi, fo, rng).max_abs() <= bound);
        }
    }
    SECTION("sample variance matches the uniform law") {
        SplitMix64 rng(123);
        // 10 draws of 100x100 = 1e5 samples; Var = b^2/3 = 2/(fi+fo) = 0.01.
        double sum = 0.0, sumsq = 0.0;
        std::size_t n = 0;
        for (int k = 0; k < 10; ++k) {
            Tensor t = xavier_init(100, 100, rng);
            for (std::size_t i = 0; i < t.size(); ++i) {
                sum += t[i];
                sumsq += t[i] * t[i];
                ++n;
            }
        }
        const double mean = sum / static_cast<double>(n);
        const double var = sumsq / static_cast<double>(n) - mean * mean;
        CHECK(var == Catch::Approx(0.01).epsilon(0.10));
    }
    SECTION("zero fan fails") {
        SplitMix64 rng(1);
        CHECK_THROWS(xavier_init(0, 3, rng));
    }
}

TEST_CASE("gradient clipping", "[numerics]") {
    NamedTensors g;
    g["w"] = Tensor::from_data({3}, {1.5, -0.3, -7.0});
    NamedTensors c = clip_gradients(g);
    CHECK(c["w"][0] == 1.0);
    CHECK(c["w"][1] == -0.3);
    CHECK(c["w"][2] == -1.0);

    SECTION("idempotent on random tensors") {
        SplitMix64 rng(5);
        for (int k = 0; k < 50; ++k) {
            NamedTensors r;
            r["g"] = random_tensor({4, 4}, rng, -5.0, 5.0);
            NamedTensors once = clip_gradients(r);
            NamedTensors twice = clip_gradients(once);
            CHECK(once.at("g") == twice.at("g"));
        }
    }
}

TEST_CASE("adam update", "[numerics]") {
    SECTION("zero gradient leaves parameters unchanged") {
        AdamState st;
        NamedTensors p, g;
        p["w"] = Tensor::from_data({2}, {0.5, -0.25});
        g["w"] = Tensor::zeros({2});
        Tensor before = p["w"];
        adam_step(st, p, g);
        CHECK(p["w"] == before);
        CHECK(st.step_count == 1);
    }
    SECTION("first step moves by about lr in the gradient direction") {
        AdamState st;
        NamedTensors p, g;
        p["w"] = Tensor::scalar(1.0);
        g["w"] = Tensor::scalar(0.5);
        adam_step(st, p, g);
        CHECK(p["w"][0] == Catch::Approx(1.0 - 0.001).margin(1e-9));

        NamedTensors p2, g2;
        p2["w"] = Tensor::scalar(1.0);
        g2["w"] = Tensor::scalar(-3.0);
        AdamState st2;
        adam_step(st2, p2, g2);
        CHECK(p2["w"][0] == Catch::Approx(1.0 + 0.001).margin(1e-9));
    }
    SECTION("two identical gradients match an independent scalar evaluation") {
        AdamState st;
        NamedTensors p, g;
        p["w"] = Tensor::scalar(0.8);
        g["w"] = Tensor::scalar(0.37);
        adam_step(st, p, g);
        adam_step(st, p, g);

        // Scalar re-run of the textbook update rule.
        const double lr = 0.001, b1 = 0.9, b2 = 0.999, eps = 1e-8, grad = 0.37;
        double w = 0.8, m = 0.0, v = 0.0;
        for (int t = 1; t <= 2; ++t) {
            m = b1 * m + (1.0 - b1) * grad;
            v = b2 * v + (1.0 - b2) * grad * grad;
            const double mhat = m / (1.0 - std::pow(b1, t));
            const double vhat = v / (1.0 - std::pow(b2, t));
            w -= lr * mhat / (std::sqrt(vhat) + eps);
        }
        CHECK(p["w"][0] == Catch::Approx(w).margin(1e-15));
    }
    SECTION("shape mismatch fails") {
        AdamState st;
        NamedTensors p, g;
        p["w"] = Tensor::zeros({2});
        g["w"] = Tensor::zeros({3});
        CHECK_THROWS(adam_step(st, p, g));
    }
}
