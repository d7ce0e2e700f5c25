#pragma once

#include <charconv>
#include <cstdint>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace rnnlab {

// Shortest round-trip decimal form; identical inputs print identically, which
// the byte-reproducibility of metrics files relies on.
inline std::string fmt_double(double v) {
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

struct MetricsRow {
    std::uint64_t step = 0;
    std::optional<double> train_loss;
    std::optional<double> train_accuracy;
    std::optional<double> val_loss;
    std::optional<double> val_accuracy;
    std::optional<double> bpc;
    std::uint64_t attention_clamp_count = 0;
};

inline constexpr const char* kMetricsHeader =
    "step,wall_ms,train_loss,train_accuracy,val_loss,val_accuracy,bpc,attention_clamp_count";

// wall_ms stays empty by design: rows must be byte-identical across reruns of
// the same config+seed, so wall time is reported in the run summary instead.
inline std::string metrics_row_csv(const MetricsRow& r) {
    auto opt = [](const std::optional<double>& v) { return v ? fmt_double(*v) : std::string(); };
    std::ostringstream os;
    os << r.step << ',' << ',' << opt(r.train_loss) << ',' << opt(r.train_accuracy) << ','
       << opt(r.val_loss) << ',' << opt(r.val_accuracy) << ',' << opt(r.bpc) << ','
       << r.attention_clamp_count;
    return os.str();
}

inline std::string metrics_csv(const std::vector<MetricsRow>& rows) {
    std::string out = std::string(kMetricsHeader) + "\n";
    for (const auto& r : rows) out += metrics_row_csv(r) + "\n";
    return out;
}

}  // namespace rnnlab
