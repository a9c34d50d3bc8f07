#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace fdt2 {

using Real = double;

// Dense row-major array with an explicit shape. Most of the library works on
// rank-2 tensors (rows x cols); extents of zero are allowed so that an empty
// context segment is representable as a 0 x d matrix.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<std::size_t> shape, Real fill = 0.0);
    Tensor(std::vector<std::size_t> shape, std::vector<Real> data);

    static Tensor matrix(std::size_t rows, std::size_t cols, Real fill = 0.0) {
        return Tensor({rows, cols}, fill);
    }
    static Tensor from_rows(std::initializer_list<std::initializer_list<Real>> rows);
    static Tensor identity(std::size_t n);

    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    // Rank-2 accessors. rows()/cols() throw DimensionError on other ranks.
    std::size_t rows() const;
    std::size_t cols() const;

    Real& operator()(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
    Real operator()(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }
    Real& operator[](std::size_t i) { return data_[i]; }
    Real operator[](std::size_t i) const { return data_[i]; }

    std::span<Real> row(std::size_t r) { return {data_.data() + r * shape_[1], shape_[1]}; }
    std::span<const Real> row(std::size_t r) const {
        return {data_.data() + r * shape_[1], shape_[1]};
    }

    std::span<Real> values() { return data_; }
    std::span<const Real> values() const { return data_; }
    std::vector<Real>& storage() { return data_; }
    const std::vector<Real>& storage() const { return data_; }

    bool all_finite() const;
    std::string shape_string() const;

    friend bool operator==(const Tensor&, const Tensor&) = default;

private:
    std::vector<std::size_t> shape_;
    std::vector<Real> data_;
};

inline Tensor zeros_like(const Tensor& t) { return Tensor(t.shape(), 0.0); }

Real max_abs_diff(const Tensor& a, const Tensor& b);

// 64-bit FNV-1a over the raw bytes of the values; used to compare tensors
// across reads without holding copies.
std::uint64_t content_hash(const Tensor& t);

}  // namespace fdt2
