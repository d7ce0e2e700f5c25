#pragma once

#include <cmath>
#include <cstddef>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace rnnlab {

using Shape = std::vector<std::size_t>;

[[noreturn]] inline void fail(const std::string& msg) {
    throw std::runtime_error(msg);
}

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) os << 'x';
        os << s[i];
    }
    os << ']';
    return os.str();
}

inline std::size_t shape_numel(const Shape& s) {
    std::size_t n = 1;
    for (auto d : s) n *= d;
    return n;
}

// Dense row-major array of 64-bit floats. All numeric state in the library
// lives in these; ops that can produce NaN/Inf are expected to check and fail
// rather than propagate non-finite values.
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(Shape dims, double fill = 0.0)
        : dims_(std::move(dims)), data_(shape_numel(dims_), fill) {
        for (auto d : dims_) {
            if (d == 0) fail("Tensor: zero extent in shape " + shape_str(dims_));
        }
    }

    static Tensor zeros(Shape dims) { return Tensor(std::move(dims), 0.0); }

    static Tensor scalar(double v) {
        Tensor t(Shape{1});
        t.data_[0] = v;
        return t;
    }

    static Tensor from_data(Shape dims, std::vector<double> values) {
        Tensor t;
        t.dims_ = std::move(dims);
        if (shape_numel(t.dims_) != values.size()) {
            fail("Tensor: shape " + shape_str(t.dims_) + " does not hold " +
                 std::to_string(values.size()) + " values");
        }
        t.data_ = std::move(values);
        return t;
    }

    const Shape& dims() const { return dims_; }
    std::size_t rank() const { return dims_.size(); }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    std::size_t rows() const {
        if (rank() != 2) fail("Tensor::rows on rank-" + std::to_string(rank()) + " tensor");
        return dims_[0];
    }
    std::size_t cols() const {
        if (rank() != 2) fail("Tensor::cols on rank-" + std::to_string(rank()) + " tensor");
        return dims_[1];
    }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    double& at(std::size_t r, std::size_t c) { return data_[r * dims_[1] + c]; }
    double at(std::size_t r, std::size_t c) const { return data_[r * dims_[1] + c]; }

    bool same_shape(const Tensor& o) const { return dims_ == o.dims_; }

    bool all_finite() const {
        for (double v : data_) {
            if (!std::isfinite(v)) return false;
        }
        return true;
    }

    double max_abs() const {
        double m = 0.0;
        for (double v : data_) m = std::max(m, std::abs(v));
        return m;
    }

    void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

    bool operator==(const Tensor& o) const { return dims_ == o.dims_ && data_ == o.data_; }

private:
    Shape dims_;
    std::vector<double> data_;
};

// Slice step t out of a [batch x time x feat] tensor as [batch x feat].
inline Tensor time_slice(const Tensor& btf, std::size_t t) {
    if (btf.rank() != 3) fail("time_slice: expected rank-3 tensor, got " + shape_str(btf.dims()));
    const std::size_t b = btf.dims()[0], tm = btf.dims()[1], f = btf.dims()[2];
    if (t >= tm) fail("time_slice: step " + std::to_string(t) + " out of range " + std::to_string(tm));
    Tensor out(Shape{b, f});
    for (std::size_t i = 0; i < b; ++i) {
        const double* src = btf.data() + (i * tm + t) * f;
        double* dst = out.data() + i * f;
        for (std::size_t j = 0; j < f; ++j) dst[j] = src[j];
    }
    return out;
}

}  // namespace rnnlab
