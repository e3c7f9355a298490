#pragma once

#include <cstdint>
#include <memory>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace reflectsep {

// 64-byte-aligned allocator. Fixed alignment keeps vectorized kernels on the
// same code path for every allocation, so results are bitwise reproducible
// across runs regardless of heap layout.
template <class T>
struct AlignedAlloc {
    using value_type = T;
    AlignedAlloc() = default;
    template <class U>
    AlignedAlloc(const AlignedAlloc<U>&) {}
    T* allocate(std::size_t n) {
        return static_cast<T*>(::operator new(n * sizeof(T), std::align_val_t(64)));
    }
    void deallocate(T* p, std::size_t) { ::operator delete(p, std::align_val_t(64)); }
    bool operator==(const AlignedAlloc&) const { return true; }
};

using AlignedF64 = std::vector<double, AlignedAlloc<double>>;

// Dense double tensor, row-major (NCHW for 4-D activations). Copies are
// shallow (shared buffer); use clone() for a deep copy.
struct Tensor {
    std::vector<int> shape;
    std::shared_ptr<AlignedF64> buf;

    Tensor() = default;
    explicit Tensor(std::vector<int> s) : shape(std::move(s)) {
        buf = std::make_shared<AlignedF64>(numel_of(shape), 0.0);
    }

    static std::size_t numel_of(const std::vector<int>& s) {
        std::size_t n = 1;
        for (int d : s) {
            if (d < 0) throw std::invalid_argument("Tensor: negative dim");
            n *= static_cast<std::size_t>(d);
        }
        return n;
    }

    static Tensor zeros(std::vector<int> s) { return Tensor(std::move(s)); }
    static Tensor full(std::vector<int> s, double v) {
        Tensor t(std::move(s));
        std::fill(t.data(), t.data() + t.numel(), v);
        return t;
    }
    static Tensor scalar(double v) { return full({1}, v); }

    std::size_t numel() const { return buf ? buf->size() : 0; }
    double* data() { return buf->data(); }
    const double* data() const { return buf->data(); }
    double& operator[](std::size_t i) { return (*buf)[i]; }
    double operator[](std::size_t i) const { return (*buf)[i]; }

    int dim(std::size_t i) const { return shape.at(i); }
    std::size_t ndim() const { return shape.size(); }

    Tensor clone() const {
        Tensor t;
        t.shape = shape;
        t.buf = std::make_shared<AlignedF64>(*buf);
        return t;
    }

    // Shares the buffer under a new shape with identical element count.
    Tensor reshaped(std::vector<int> s) const {
        if (numel_of(s) != numel()) throw std::invalid_argument("reshape: element count mismatch");
        Tensor t;
        t.shape = std::move(s);
        t.buf = buf;
        return t;
    }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }
    std::string shape_str() const;
    bool all_finite() const;
};

} // namespace reflectsep
