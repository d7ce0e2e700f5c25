#include <catch2/catch_amalgamated.hpp>

#include <string>

#include "rnnlab/checkpoint.hpp"
#include "rnnlab/metrics.hpp"

using namespace rnnlab;

TEST_CASE("metrics csv header is pinned", "[formats]") {
    CHECK(std::string(kMetricsHeader) ==
          "step,wall_ms,train_loss,train_accuracy,val_loss,val_accuracy,bpc,attention_clamp_count");
}

TEST_CASE("metrics csv golden file", "[formats]") {
    std::vector<MetricsRow> rows;
    MetricsRow a;
    a.step = 0;
    a.train_loss = 0.5;
    a.attention_clamp_count = 0;
    rows.push_back(a);
    MetricsRow b;
    b.step = 25;
    b.train_loss = 0.125;
    b.train_accuracy = 0.75;
    b.val_loss = 0.25;
    b.val_accuracy = 0.5;
    b.attention_clamp_count = 3;
    rows.push_back(b);
    MetricsRow c;
    c.step = 50;
    c.bpc = 1.5;
    c.attention_clamp_count = 3;
    rows.push_back(c);

    const std::string expected =
        "step,wall_ms,train_loss,train_accuracy,val_loss,val_accuracy,bpc,attention_clamp_count\n"
        "0,,0.5,,,,,0\n"
        "25,,0.125,0.75,0.25,0.5,,3\n"
        "50,,,,,,1.5,3\n";
    CHECK(metrics_csv(rows) == expected);
}

TEST_CASE("shortest round-trip float formatting", "[formats]") {
    CHECK(fmt_double(0.001) == "0.001");
    CHECK(fmt_double(1.0) == "1");
    CHECK(fmt_double(-2.5) == "-2.5");
    CHECK(fmt_double(1e300) == "1e+300");
    // round-trips exactly
    CHECK(std::stod(fmt_double(0.1 + 0.2)) == 0.1 + 0.2);
}

TEST_CASE("checkpoint binary golden layout", "[formats]") {
    CheckpointData data;
    data.config_text = "task.name = addition\n";
    data.tensors.emplace_back("w", Tensor::from_data({2, 1}, {1.0, -2.5}));

    // layout assembled by hand: magic, u64 lengths little-endian, IEEE doubles
    std::string expected;
    expected += "RNNLAB01";
    auto u64le = [&expected](std::uint64_t v) {
        for (int i = 0; i < 8; ++i) expected.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
    };
    u64le(21);  // config length
    expected += "task.name = addition\n";
    u64le(1);  // tensor count
    u64le(1);  // name length
    expected += "w";
    u64le(2);  // rank
    u64le(2);  // extents
    u64le(1);
    const unsigned char one[8] = {0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0xF0, 0x3F};
    const unsigned char minus_two_five[8] = {0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x04, 0xC0};
    expected.append(reinterpret_cast<const char*>(one), 8);
    expected.append(reinterpret_cast<const char*>(minus_two_five), 8);

    CHECK(checkpoint_bytes(data) == expected);
}
