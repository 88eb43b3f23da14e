#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace radiart {

/// Dense row-major 2D array of doubles. Vectors are 1×n rows, scalars 1×1.
class Tensor {
public:
    Tensor() = default;
    Tensor(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
    Tensor(std::size_t rows, std::size_t cols, std::vector<double> data);

    static Tensor scalar(double v) { return Tensor(1, 1, v); }
    static Tensor row(std::span<const double> values);
    static Tensor from_rows(std::initializer_list<std::initializer_list<double>> rows);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }
    bool same_shape(const Tensor& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::span<double> values() { return data_; }
    std::span<const double> values() const { return data_; }
    std::span<double> row_span(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row_span(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

    double item() const;
    void fill(double v);
    /// Same data, new shape. rows*cols must match.
    Tensor reshaped(std::size_t rows, std::size_t cols) const;
    Tensor transposed() const;
    bool all_finite() const;

    Tensor& operator+=(const Tensor& o);
    Tensor& operator*=(double s);

    friend bool operator==(const Tensor& a, const Tensor& b) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

/// out = a·b. Each output element accumulates with a fused multiply-add over the
/// inner index in ascending order, so a row's result does not depend on which
/// other rows share the call.
void matmul_into(const Tensor& a, const Tensor& b, Tensor& out);
Tensor matmul(const Tensor& a, const Tensor& b);
/// aᵀ·b
Tensor matmul_tn(const Tensor& a, const Tensor& b);
/// a·bᵀ
Tensor matmul_nt(const Tensor& a, const Tensor& b);

double max_abs_diff(const Tensor& a, const Tensor& b);

/// Keeps large freed buffers in the heap instead of returning them to the
/// kernel. Training allocates many multi-megabyte temporaries per step and
/// otherwise spends much of its time in page faults. Process-wide; call once
/// from main.
void tune_allocator();

}  // namespace radiart
