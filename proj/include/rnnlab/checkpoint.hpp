#pragma once

#include <bit>
#include <cstdint>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "rnnlab/tensor.hpp"

namespace rnnlab {

// Checkpoint layout, all integers and floats little-endian:
//   magic "RNNLAB01"
//   u64 config_len, config text (UTF-8)
//   u64 tensor_count
//   per tensor: u64 name_len, name, u64 rank, u64 extents[rank], f64 data[]
inline constexpr char kCheckpointMagic[8] = {'R', 'N', 'N', 'L', 'A', 'B', '0', '1'};

struct CheckpointData {
    std::string config_text;
    std::vector<std::pair<std::string, Tensor>> tensors;

    const Tensor* find(const std::string& name) const {
        for (const auto& [n, t] : tensors) {
            if (n == name) return &t;
        }
        return nullptr;
    }
};

namespace detail {

inline void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

inline void put_f64(std::string& out, double d) {
    put_u64(out, std::bit_cast<std::uint64_t>(d));
}

struct Reader {
    const std::string& buf;
    std::size_t pos = 0;
    const std::string& path;

    std::uint64_t u64() {
        if (pos + 8 > buf.size()) fail("checkpoint " + path + ": truncated file");
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) {
            v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
        }
        pos += 8;
        return v;
    }

    double f64() { return std::bit_cast<double>(u64()); }

    std::string bytes(std::uint64_t n, const char* what) {
        if (pos + n > buf.size()) {
            fail("checkpoint " + path + ": truncated reading " + std::string(what));
        }
        std::string s = buf.substr(pos, n);
        pos += n;
        return s;
    }
};

}  // namespace detail

inline std::string checkpoint_bytes(const CheckpointData& data) {
    std::string out(kCheckpointMagic, sizeof(kCheckpointMagic));
    detail::put_u64(out, data.config_text.size());
    out += data.config_text;
    detail::put_u64(out, data.tensors.size());
    for (const auto& [name, t] : data.tensors) {
        detail::put_u64(out, name.size());
        out += name;
        detail::put_u64(out, t.rank());
        for (auto d : t.dims()) detail::put_u64(out, d);
        for (std::size_t i = 0; i < t.size(); ++i) detail::put_f64(out, t[i]);
    }
    return out;
}

inline void checkpoint_save(const CheckpointData& data, const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail("checkpoint: cannot write " + path);
    const std::string bytes = checkpoint_bytes(data);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) fail("checkpoint: write failed for " + path);
}

inline CheckpointData checkpoint_load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail("checkpoint: cannot open " + path);
    std::string buf{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
    if (buf.size() < sizeof(kCheckpointMagic) ||
        buf.compare(0, sizeof(kCheckpointMagic), kCheckpointMagic, sizeof(kCheckpointMagic)) != 0) {
        fail("checkpoint " + path + ": bad magic");
    }
    detail::Reader r{buf, sizeof(kCheckpointMagic), path};
    CheckpointData data;
    data.config_text = r.bytes(r.u64(), "config text");
    const std::uint64_t count = r.u64();
    for (std::uint64_t k = 0; k < count; ++k) {
        const std::string name = r.bytes(r.u64(), "tensor name");
        const std::uint64_t rank = r.u64();
        if (rank > 8) fail("checkpoint " + path + ": implausible rank for '" + name + "'");
        Shape dims(rank);
        std::size_t numel = 1;
        for (auto& d : dims) {
            d = r.u64();
            if (d == 0) fail("checkpoint " + path + ": zero extent in '" + name + "'");
            numel *= d;
        }
        std::vector<double> vals(numel);
        for (auto& v : vals) v = r.f64();
        data.tensors.emplace_back(name, Tensor::from_data(std::move(dims), std::move(vals)));
    }
    if (r.pos != buf.size()) fail("checkpoint " + path + ": trailing bytes");
    return data;
}

}  // namespace rnnlab
