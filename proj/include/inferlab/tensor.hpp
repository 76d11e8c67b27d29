#pragma once

#include <cstring>
#include <numeric>
#include <span>
#include <vector>

#include "inferlab/common.hpp"

namespace inferlab {

// Dense row-major tensor. Raw bytes plus dtype; typed views via span.
class Tensor {
 public:
  Tensor() = default;
  Tensor(DType dtype, std::vector<std::int64_t> dims)
      : dtype_(dtype), dims_(std::move(dims)) {
    data_.resize(elem_count() * dtype_size(dtype_));
  }

  static Tensor from_f32(std::vector<std::int64_t> dims, std::span<const float> values) {
    Tensor t(DType::f32, std::move(dims));
    if (values.size() != t.elem_count()) throw ValidationError("tensor data size mismatch");
    std::memcpy(t.data_.data(), values.data(), values.size() * sizeof(float));
    return t;
  }

  DType dtype() const { return dtype_; }
  const std::vector<std::int64_t>& dims() const { return dims_; }

  std::size_t elem_count() const {
    std::size_t n = 1;
    for (auto d : dims_) n *= static_cast<std::size_t>(d);
    return n;
  }
  std::size_t nbytes() const { return data_.size(); }

  std::span<const std::byte> raw() const { return data_; }
  std::span<std::byte> raw() { return data_; }

  template <typename T>
  std::span<const T> as() const {
    check_type<T>();
    return {reinterpret_cast<const T*>(data_.data()), elem_count()};
  }
  template <typename T>
  std::span<T> as() {
    check_type<T>();
    return {reinterpret_cast<T*>(data_.data()), elem_count()};
  }

  bool same_bytes(const Tensor& o) const {
    return dtype_ == o.dtype_ && dims_ == o.dims_ && data_ == o.data_;
  }

 private:
  template <typename T>
  void check_type() const {
    const bool ok = (std::is_same_v<T, float> && dtype_ == DType::f32) ||
                    (std::is_same_v<T, std::uint16_t> && dtype_ == DType::f16) ||
                    (std::is_same_v<T, std::uint8_t> && dtype_ == DType::u8) ||
                    (std::is_same_v<T, std::int8_t> && dtype_ == DType::i8) ||
                    (std::is_same_v<T, std::int32_t> && dtype_ == DType::i32);
    if (!ok) throw ValidationError("tensor viewed with mismatched element type");
  }

  DType dtype_ = DType::f32;
  std::vector<std::int64_t> dims_;
  std::vector<std::byte> data_;
};

}  // namespace inferlab
