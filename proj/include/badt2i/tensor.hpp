#pragma once

// Dense row-major double tensor, rank <= 4. Kept deliberately small:
// shape plus flat storage plus the few helpers the autograd layer needs.

#include <cstdint>
#include <cstdlib>
#include <cstring>
#include <initializer_list>
#include <new>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "badt2i/common.hpp"
#include "badt2i/rng.hpp"

namespace badt2i {

// Fixed 64-byte alignment for all tensor storage. Eigen picks SIMD kernels
// based on pointer alignment; pinning it keeps repeated evaluations of the
// same expression bitwise identical regardless of allocator state.
template <class T>
struct AlignedAllocator {
    using value_type = T;
    static constexpr size_t alignment = 64;

    AlignedAllocator() = default;
    template <class U>
    AlignedAllocator(const AlignedAllocator<U>&) {}

    T* allocate(size_t n) {
        void* p = std::aligned_alloc(alignment, ((n * sizeof(T) + alignment - 1) / alignment) *
                                                    alignment);
        if (!p) throw std::bad_alloc();
        return static_cast<T*>(p);
    }
    void deallocate(T* p, size_t) noexcept { std::free(p); }

    template <class U>
    bool operator==(const AlignedAllocator<U>&) const {
        return true;
    }
    template <class U>
    bool operator!=(const AlignedAllocator<U>&) const {
        return false;
    }
};

using AlignedDoubles = std::vector<double, AlignedAllocator<double>>;

class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<int> shape) : shape_(std::move(shape)) {
        data_.assign(static_cast<size_t>(numel_of(shape_)), 0.0);
    }

    Tensor(std::vector<int> shape, double fill) : shape_(std::move(shape)) {
        data_.assign(static_cast<size_t>(numel_of(shape_)), fill);
    }

    static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }

    static Tensor full(std::vector<int> shape, double v) { return Tensor(std::move(shape), v); }

    static Tensor scalar(double v) { return Tensor({1}, v); }

    static Tensor gaussian(std::vector<int> shape, Rng& rng, double stddev = 1.0) {
        Tensor t(std::move(shape));
        rng.fill_gaussian(t.data(), t.size());
        if (stddev != 1.0)
            for (auto& v : t.data_) v *= stddev;
        return t;
    }

    static Tensor from_vector(std::vector<int> shape, const std::vector<double>& values) {
        Tensor t;
        t.shape_ = std::move(shape);
        if (static_cast<int64_t>(values.size()) != numel_of(t.shape_))
            throw BoundsError("tensor: value count does not match shape");
        t.data_.assign(values.begin(), values.end());
        return t;
    }

    int rank() const { return static_cast<int>(shape_.size()); }
    int dim(int i) const { return shape_[static_cast<size_t>(i)]; }
    const std::vector<int>& shape() const { return shape_; }
    size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    AlignedDoubles& raw() { return data_; }
    const AlignedDoubles& raw() const { return data_; }

    double& operator[](size_t i) { return data_[i]; }
    double operator[](size_t i) const { return data_[i]; }

    double& at(int i, int j) { return data_[static_cast<size_t>(i) * dim(1) + j]; }
    double at(int i, int j) const { return data_[static_cast<size_t>(i) * dim(1) + j]; }
    double& at(int i, int j, int k) {
        return data_[(static_cast<size_t>(i) * dim(1) + j) * dim(2) + k];
    }
    double at(int i, int j, int k) const {
        return data_[(static_cast<size_t>(i) * dim(1) + j) * dim(2) + k];
    }
    double& at(int i, int j, int k, int l) {
        return data_[((static_cast<size_t>(i) * dim(1) + j) * dim(2) + k) * dim(3) + l];
    }
    double at(int i, int j, int k, int l) const {
        return data_[((static_cast<size_t>(i) * dim(1) + j) * dim(2) + k) * dim(3) + l];
    }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    Tensor reshaped(std::vector<int> shape) const {
        if (numel_of(shape) != static_cast<int64_t>(size()))
            throw BoundsError("tensor: reshape changes element count");
        Tensor t = *this;
        t.shape_ = std::move(shape);
        return t;
    }

    void add_(const Tensor& o) {
        if (!same_shape(o)) throw BoundsError("tensor: add_ shape mismatch");
        for (size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
    }

    void scale_(double c) {
        for (auto& v : data_) v *= c;
    }

    void fill_(double c) { data_.assign(data_.size(), c); }

    double sum() const {
        double s = 0.0;
        for (double v : data_) s += v;
        return s;
    }

    double mean() const { return data_.empty() ? 0.0 : sum() / static_cast<double>(data_.size()); }

    uint64_t checksum(uint64_t h = 0xcbf29ce484222325ULL) const {
        return fnv1a_bytes(data_.data(), data_.size() * sizeof(double), h);
    }

    static int64_t numel_of(const std::vector<int>& shape) {
        int64_t n = 1;
        for (int d : shape) {
            if (d <= 0) throw BoundsError("tensor: nonpositive dimension");
            n *= d;
        }
        return shape.empty() ? 0 : n;
    }

    std::string shape_str() const {
        std::string s = "[";
        for (size_t i = 0; i < shape_.size(); ++i) {
            if (i) s += ",";
            s += std::to_string(shape_[i]);
        }
        return s + "]";
    }

private:
    std::vector<int> shape_;
    AlignedDoubles data_;
};

inline double mse_between(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) throw BoundsError("mse_between: shape mismatch");
    double s = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        double d = a[i] - b[i];
        s += d * d;
    }
    return a.size() ? s / static_cast<double>(a.size()) : 0.0;
}

}  // namespace badt2i
