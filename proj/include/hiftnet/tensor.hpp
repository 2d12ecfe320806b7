#pragma once

#include <array>
#include <cstring>
#include <initializer_list>
#include <numeric>
#include <string>
#include <vector>

#include "hiftnet/common.hpp"

namespace hiftnet {

// Dense row-major float tensor, rank <= 4. Deliberately minimal: shape,
// flat storage, and the few accessors the layers need.
class Tensor {
  public:
    Tensor() = default;
    explicit Tensor(std::vector<long> shape, float fill = 0.0f) : shape_(std::move(shape)) {
        data_.assign(static_cast<std::size_t>(numel_of(shape_)), fill);
    }
    static Tensor from(std::vector<long> shape, std::vector<float> data) {
        Tensor t;
        t.shape_ = std::move(shape);
        require(static_cast<long>(data.size()) == numel_of(t.shape_), "tensor data/shape mismatch");
        t.data_ = std::move(data);
        return t;
    }
    static Tensor scalar(float v) { return from({1}, {v}); }

    const std::vector<long>& shape() const { return shape_; }
    long dim(int i) const { return shape_.at(static_cast<std::size_t>(i)); }
    int rank() const { return static_cast<int>(shape_.size()); }
    long numel() const { return static_cast<long>(data_.size()); }

    float* data() { return data_.data(); }
    const float* data() const { return data_.data(); }
    float& operator[](long i) { return data_[static_cast<std::size_t>(i)]; }
    float operator[](long i) const { return data_[static_cast<std::size_t>(i)]; }

    std::vector<float>& vec() { return data_; }
    const std::vector<float>& vec() const { return data_; }

    // 3-D accessor (b, c, t) for [B, C, T] tensors.
    float& at3(long b, long c, long t) {
        return data_[static_cast<std::size_t>((b * shape_[1] + c) * shape_[2] + t)];
    }
    float at3(long b, long c, long t) const {
        return data_[static_cast<std::size_t>((b * shape_[1] + c) * shape_[2] + t)];
    }
    // 4-D accessor (b, c, h, w).
    float& at4(long b, long c, long h, long w) {
        return data_[static_cast<std::size_t>(((b * shape_[1] + c) * shape_[2] + h) * shape_[3] + w)];
    }
    float at4(long b, long c, long h, long w) const {
        return data_[static_cast<std::size_t>(((b * shape_[1] + c) * shape_[2] + h) * shape_[3] + w)];
    }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    void zero() { std::memset(data_.data(), 0, data_.size() * sizeof(float)); }

    bool finite() const {
        for (float v : data_)
            if (!std::isfinite(v)) return false;
        return true;
    }

    static long numel_of(const std::vector<long>& shape) {
        long n = 1;
        for (long d : shape) {
            require(d >= 0, "negative tensor dim");
            n *= d;
        }
        return n;
    }

    std::string shape_str() const {
        std::string s = "[";
        for (std::size_t i = 0; i < shape_.size(); ++i)
            s += std::to_string(shape_[i]) + (i + 1 < shape_.size() ? "," : "");
        return s + "]";
    }

  private:
    std::vector<long> shape_;
    std::vector<float> data_;
};

}  // namespace hiftnet
