#pragma once

#include <array>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <string>
#include <vector>

#include "rnnlab/rng.hpp"
#include "rnnlab/tensor.hpp"

namespace rnnlab {

enum class LossKind { MSE, BinaryCE, SoftmaxCE };

// One minibatch of supervision. targets hold real values for MSE/BinaryCE and
// integer class indices for SoftmaxCE; mask marks the steps the loss reads.
struct TaskBatch {
    Tensor inputs;   // [batch x time x features]
    Tensor targets;  // [batch x time x target_dim]
    Tensor mask;     // [batch x time], entries 0 or 1
    LossKind loss = LossKind::MSE;
    std::size_t n_classes = 0;  // SoftmaxCE only

    std::size_t batch() const { return inputs.dims()[0]; }
    std::size_t time() const { return inputs.dims()[1]; }
    std::size_t features() const { return inputs.dims()[2]; }

    bool operator==(const TaskBatch& o) const {
        return inputs == o.inputs && targets == o.targets && mask == o.mask && loss == o.loss &&
               n_classes == o.n_classes;
    }
};

// Two uniformly random values of the first channel are marked by ones on the
// second channel; the supervised target is their sum, read at the final step.
inline TaskBatch gen_addition(std::uint64_t seed, std::size_t batch, std::size_t length) {
    if (length < 2) fail("gen_addition: length must be at least 2");
    SplitMix64 rng(seed);
    TaskBatch tb;
    tb.inputs = Tensor(Shape{batch, length, 2});
    tb.targets = Tensor(Shape{batch, length, 1});
    tb.mask = Tensor(Shape{batch, length});
    tb.loss = LossKind::MSE;
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t t = 0; t < length; ++t) {
            tb.inputs[(b * length + t) * 2] = rng.uniform();
        }
        const std::size_t p1 = rng.below(length);
        std::size_t p2 = rng.below(length - 1);
        if (p2 >= p1) ++p2;
        tb.inputs[(b * length + p1) * 2 + 1] = 1.0;
        tb.inputs[(b * length + p2) * 2 + 1] = 1.0;
        tb.targets[(b * length + length - 1)] =
            tb.inputs[(b * length + p1) * 2] + tb.inputs[(b * length + p2) * 2];
        tb.mask[b * length + length - 1] = 1.0;
    }
    return tb;
}

// Single marker channel: 1.0 while the sequence is live, 0.0 padding after it
// ends. Label is whether the live length exceeds max_len / 2.
inline TaskBatch gen_classify_length(std::uint64_t seed, std::size_t batch,
                                     std::size_t max_len = 1000) {
    if (max_len < 2) fail("gen_classify_length: max_len must be at least 2");
    SplitMix64 rng(seed);
    TaskBatch tb;
    tb.inputs = Tensor(Shape{batch, max_len, 1});
    tb.targets = Tensor(Shape{batch, max_len, 1});
    tb.mask = Tensor(Shape{batch, max_len});
    tb.loss = LossKind::BinaryCE;
    const double threshold = static_cast<double>(max_len) / 2.0;
    for (std::size_t b = 0; b < batch; ++b) {
        const std::size_t len = 1 + rng.below(max_len);
        for (std::size_t t = 0; t < len; ++t) tb.inputs[b * max_len + t] = 1.0;
        tb.targets[b * max_len + max_len - 1] = static_cast<double>(len) > threshold ? 1.0 : 0.0;
        tb.mask[b * max_len + max_len - 1] = 1.0;
    }
    return tb;
}

// Copy task symbol layout: data symbols 0..n_symbols-1, then blank, then the
// recall marker (input side only). Targets use n_symbols+1 classes with the
// blank class last.
inline std::size_t copy_blank_symbol(std::size_t n_symbols) { return n_symbols; }
inline std::size_t copy_recall_symbol(std::size_t n_symbols) { return n_symbols + 1; }

inline TaskBatch gen_copy(std::uint64_t seed, std::size_t batch, std::size_t n_symbols,
                          std::size_t prefix_len, std::size_t total_len) {
    if (n_symbols < 1) fail("gen_copy: need at least one data symbol");
    if (total_len < 2 * prefix_len + 1) {
        fail("gen_copy: total_len " + std::to_string(total_len) +
             " cannot hold prefix, recall and reproduction for prefix_len " +
             std::to_string(prefix_len));
    }
    SplitMix64 rng(seed);
    TaskBatch tb;
    const std::size_t feat = n_symbols + 2;
    tb.inputs = Tensor(Shape{batch, total_len, feat});
    tb.targets = Tensor(Shape{batch, total_len, 1}, static_cast<double>(copy_blank_symbol(n_symbols)));
    tb.mask = Tensor(Shape{batch, total_len}, 1.0);
    tb.loss = LossKind::SoftmaxCE;
    tb.n_classes = n_symbols + 1;
    const std::size_t blank = copy_blank_symbol(n_symbols);
    for (std::size_t b = 0; b < batch; ++b) {
        // recall position uniform over [prefix_len, total_len - prefix_len - 1]
        const std::size_t window = total_len - 2 * prefix_len;
        const std::size_t recall_at = prefix_len + rng.below(window);
        for (std::size_t t = 0; t < total_len; ++t) {
            tb.inputs[(b * total_len + t) * feat + blank] = 1.0;
        }
        std::vector<std::size_t> symbols(prefix_len);
        for (auto& s : symbols) s = rng.below(n_symbols);
        for (std::size_t t = 0; t < prefix_len; ++t) {
            double* step = tb.inputs.data() + (b * total_len + t) * feat;
            step[blank] = 0.0;
            step[symbols[t]] = 1.0;
        }
        double* rstep = tb.inputs.data() + (b * total_len + recall_at) * feat;
        rstep[blank] = 0.0;
        rstep[copy_recall_symbol(n_symbols)] = 1.0;
        for (std::size_t t = 0; t < prefix_len; ++t) {
            tb.targets[b * total_len + recall_at + 1 + t] = static_cast<double>(symbols[t]);
        }
    }
    return tb;
}

// Back-to-back copy episodes: prefix, `gap` blank steps, the recall marker,
// then the reproduction window. Episode length is 2*prefix_len + gap + 1.
inline TaskBatch gen_multicopy(std::uint64_t seed, std::size_t batch, std::size_t n_symbols,
                               std::size_t prefix_len, std::size_t copies, std::size_t gap) {
    if (copies < 1) fail("gen_multicopy: need at least one episode");
    if (n_symbols < 1) fail("gen_multicopy: need at least one data symbol");
    if (prefix_len < 1) fail("gen_multicopy: prefix_len must be positive");
    SplitMix64 rng(seed);
    const std::size_t episode = 2 * prefix_len + gap + 1;
    const std::size_t total_len = copies * episode;
    TaskBatch tb;
    const std::size_t feat = n_symbols + 2;
    const std::size_t blank = copy_blank_symbol(n_symbols);
    tb.inputs = Tensor(Shape{batch, total_len, feat});
    tb.targets = Tensor(Shape{batch, total_len, 1}, static_cast<double>(blank));
    tb.mask = Tensor(Shape{batch, total_len}, 1.0);
    tb.loss = LossKind::SoftmaxCE;
    tb.n_classes = n_symbols + 1;
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t t = 0; t < total_len; ++t) {
            tb.inputs[(b * total_len + t) * feat + blank] = 1.0;
        }
        for (std::size_t e = 0; e < copies; ++e) {
            const std::size_t offset = e * episode;
            const std::size_t recall_at = prefix_len + gap;
            std::vector<std::size_t> symbols(prefix_len);
            for (auto& s : symbols) s = rng.below(n_symbols);
            for (std::size_t t = 0; t < prefix_len; ++t) {
                double* step = tb.inputs.data() + (b * total_len + offset + t) * feat;
                step[blank] = 0.0;
                step[symbols[t]] = 1.0;
            }
            double* rstep = tb.inputs.data() + (b * total_len + offset + recall_at) * feat;
            rstep[blank] = 0.0;
            rstep[copy_recall_symbol(n_symbols)] = 1.0;
            for (std::size_t t = 0; t < prefix_len; ++t) {
                tb.targets[b * total_len + offset + recall_at + 1 + t] =
                    static_cast<double>(symbols[t]);
            }
        }
    }
    return tb;
}

// ---- MNIST ------------------------------------------------------------------

struct MnistDataset {
    std::size_t seq_len = 0;
    Tensor images;  // [count x seq_len], values scaled to [0, 1]
    std::vector<std::int64_t> labels;

    std::size_t count() const { return labels.size(); }
};

namespace detail {

inline std::uint32_t read_be32(std::istream& in, const std::string& path) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (!in) fail("idx read: truncated header in " + path);
    return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) | (std::uint32_t(b[2]) << 8) |
           std::uint32_t(b[3]);
}

}  // namespace detail

inline MnistDataset load_mnist(const std::string& image_path, const std::string& label_path) {
    std::ifstream img(image_path, std::ios::binary);
    if (!img) fail("load_mnist: cannot open " + image_path);
    if (detail::read_be32(img, image_path) != 0x00000803u) {
        fail("load_mnist: bad image magic in " + image_path);
    }
    const std::uint32_t count = detail::read_be32(img, image_path);
    const std::uint32_t rows = detail::read_be32(img, image_path);
    const std::uint32_t cols = detail::read_be32(img, image_path);
    if (count == 0 || rows == 0 || cols == 0) fail("load_mnist: empty dimensions in " + image_path);

    std::ifstream lbl(label_path, std::ios::binary);
    if (!lbl) fail("load_mnist: cannot open " + label_path);
    if (detail::read_be32(lbl, label_path) != 0x00000801u) {
        fail("load_mnist: bad label magic in " + label_path);
    }
    const std::uint32_t lcount = detail::read_be32(lbl, label_path);
    if (lcount != count) {
        fail("load_mnist: " + image_path + " holds " + std::to_string(count) + " images but " +
             label_path + " holds " + std::to_string(lcount) + " labels");
    }

    MnistDataset ds;
    ds.seq_len = static_cast<std::size_t>(rows) * cols;
    ds.images = Tensor(Shape{count, ds.seq_len});
    std::vector<unsigned char> buf(ds.seq_len);
    for (std::uint32_t i = 0; i < count; ++i) {
        img.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
        if (!img) fail("load_mnist: truncated pixel data in " + image_path);
        for (std::size_t j = 0; j < ds.seq_len; ++j) {
            ds.images[i * ds.seq_len + j] = static_cast<double>(buf[j]) / 255.0;
        }
    }
    ds.labels.resize(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        unsigned char b;
        lbl.read(reinterpret_cast<char*>(&b), 1);
        if (!lbl) fail("load_mnist: truncated label data in " + label_path);
        if (b > 9) fail("load_mnist: label " + std::to_string(int(b)) + " out of range in " + label_path);
        ds.labels[i] = b;
    }
    return ds;
}

inline std::vector<std::size_t> make_permutation(std::size_t len, std::uint64_t seed) {
    std::vector<std::size_t> perm(len);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    SplitMix64 rng(seed);
    for (std::size_t i = len; i > 1; --i) {
        std::swap(perm[i - 1], perm[rng.below(i)]);
    }
    return perm;
}

// out[j] = in[perm[j]] for every image; one permutation shared by all.
inline MnistDataset apply_permutation(const MnistDataset& ds, const std::vector<std::size_t>& perm) {
    if (perm.size() != ds.seq_len) fail("apply_permutation: permutation length mismatch");
    MnistDataset out;
    out.seq_len = ds.seq_len;
    out.labels = ds.labels;
    out.images = Tensor(ds.images.dims());
    for (std::size_t i = 0; i < ds.count(); ++i) {
        const double* src = ds.images.data() + i * ds.seq_len;
        double* dst = out.images.data() + i * ds.seq_len;
        for (std::size_t j = 0; j < ds.seq_len; ++j) dst[j] = src[perm[j]];
    }
    return out;
}

inline MnistDataset permute_mnist(const MnistDataset& ds, std::uint64_t seed) {
    return apply_permutation(ds, make_permutation(ds.seq_len, seed));
}

// Minibatch of pixel sequences; the class is supervised at the final step.
inline TaskBatch mnist_batch(const MnistDataset& ds, const std::vector<std::size_t>& indices) {
    TaskBatch tb;
    const std::size_t b = indices.size(), t = ds.seq_len;
    tb.inputs = Tensor(Shape{b, t, 1});
    tb.targets = Tensor(Shape{b, t, 1});
    tb.mask = Tensor(Shape{b, t});
    tb.loss = LossKind::SoftmaxCE;
    tb.n_classes = 10;
    for (std::size_t i = 0; i < b; ++i) {
        if (indices[i] >= ds.count()) fail("mnist_batch: index out of range");
        const double* src = ds.images.data() + indices[i] * t;
        for (std::size_t j = 0; j < t; ++j) tb.inputs[(i * t + j)] = src[j];
        tb.targets[i * t + t - 1] = static_cast<double>(ds.labels[indices[i]]);
        tb.mask[i * t + t - 1] = 1.0;
    }
    return tb;
}

// ---- byte corpus --------------------------------------------------------------

struct Corpus {
    std::vector<std::uint8_t> bytes;
    std::vector<std::uint8_t> id_to_byte;          // sorted distinct bytes
    std::array<std::int32_t, 256> byte_to_id{};    // -1 where absent
    std::size_t train_end = 0;
    std::size_t val_end = 0;

    std::size_t vocab() const { return id_to_byte.size(); }
    std::int64_t id_at(std::size_t pos) const { return byte_to_id[bytes[pos]]; }
};

struct CorpusSplit {
    const Corpus* corpus = nullptr;
    std::size_t begin = 0;
    std::size_t end = 0;

    std::size_t size() const { return end - begin; }
};

inline Corpus corpus_from_bytes(std::vector<std::uint8_t> bytes, double train_frac = 0.90,
                                double val_frac = 0.05) {
    if (bytes.empty()) fail("load_corpus: corpus is empty");
    if (train_frac <= 0.0 || val_frac < 0.0 || train_frac + val_frac >= 1.0 + 1e-12) {
        fail("load_corpus: invalid split fractions");
    }
    Corpus c;
    c.bytes = std::move(bytes);
    bool seen[256] = {};
    for (auto b : c.bytes) seen[b] = true;
    c.byte_to_id.fill(-1);
    for (int b = 0; b < 256; ++b) {
        if (seen[b]) {
            c.byte_to_id[b] = static_cast<std::int32_t>(c.id_to_byte.size());
            c.id_to_byte.push_back(static_cast<std::uint8_t>(b));
        }
    }
    const auto n = static_cast<double>(c.bytes.size());
    c.train_end = static_cast<std::size_t>(n * train_frac);
    c.val_end = c.train_end + static_cast<std::size_t>(n * val_frac);
    if (c.val_end > c.bytes.size()) c.val_end = c.bytes.size();
    return c;
}

inline Corpus load_corpus(const std::string& path, double train_frac = 0.90,
                          double val_frac = 0.05) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail("load_corpus: cannot open " + path);
    std::vector<std::uint8_t> bytes{std::istreambuf_iterator<char>(in),
                                    std::istreambuf_iterator<char>()};
    if (bytes.empty()) fail("load_corpus: " + path + " is empty");
    return corpus_from_bytes(std::move(bytes), train_frac, val_frac);
}

inline CorpusSplit train_split(const Corpus& c) { return {&c, 0, c.train_end}; }
inline CorpusSplit val_split(const Corpus& c) { return {&c, c.train_end, c.val_end}; }
inline CorpusSplit test_split(const Corpus& c) { return {&c, c.val_end, c.bytes.size()}; }

// Deterministic next-symbol windows over `batch` contiguous disjoint lanes.
// Window w of lane b reads positions begin + b*lane_len + w*bptt_len + j, so
// consecutive windows continue each lane and carried state stays meaningful.
class CorpusBatcher {
public:
    CorpusBatcher(CorpusSplit split, std::size_t batch, std::size_t bptt_len = 250)
        : split_(split), batch_(batch), bptt_(bptt_len) {
        if (split_.size() <= bptt_) fail("corpus_batches: split smaller than one window");
        lane_len_ = split_.size() / batch_;
        if (lane_len_ < bptt_ + 1) fail("corpus_batches: lanes too short for bptt window");
        windows_ = (lane_len_ - 1) / bptt_;
    }

    std::size_t windows() const { return windows_; }
    std::size_t batch() const { return batch_; }
    std::size_t bptt_len() const { return bptt_; }
    std::size_t usable_symbols() const { return batch_ * windows_ * bptt_; }

    TaskBatch window(std::size_t w) const {
        if (w >= windows_) fail("corpus_batches: window index out of range");
        TaskBatch tb;
        tb.inputs = Tensor(Shape{batch_, bptt_, 1});
        tb.targets = Tensor(Shape{batch_, bptt_, 1});
        tb.mask = Tensor(Shape{batch_, bptt_}, 1.0);
        tb.loss = LossKind::SoftmaxCE;
        tb.n_classes = split_.corpus->vocab();
        for (std::size_t b = 0; b < batch_; ++b) {
            const std::size_t base = split_.begin + b * lane_len_ + w * bptt_;
            for (std::size_t j = 0; j < bptt_; ++j) {
                tb.inputs[b * bptt_ + j] = static_cast<double>(split_.corpus->id_at(base + j));
                tb.targets[b * bptt_ + j] = static_cast<double>(split_.corpus->id_at(base + j + 1));
            }
        }
        return tb;
    }

private:
    CorpusSplit split_;
    std::size_t batch_;
    std::size_t bptt_;
    std::size_t lane_len_ = 0;
    std::size_t windows_ = 0;
};

}  // namespace rnnlab
