#include "radiart/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <string>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "radiart/error.hpp"

namespace radiart {

namespace {

#if defined(__GNUC__) || defined(__clang__)
typedef double v4d __attribute__((vector_size(32)));

inline v4d load4(const double* p) {
    v4d v;
    std::memcpy(&v, p, sizeof(v));
    return v;
}

inline void store4(double* p, v4d v) { std::memcpy(p, &v, sizeof(v)); }

inline v4d splat(double a) { return v4d{a, a, a, a}; }

// Vector lanes use a*b+c which is contracted to fma under -ffp-contract=fast
// (enforced in CMake); the scalar tails use std::fma so both paths agree.
// The inner dimension is processed in panels of kPanel rows of b; partial
// sums are stored and reloaded exactly, so every output element still sees
// one ascending fma chain.
constexpr std::size_t kPanel = 256;

void gemm_panel(const double* a, const double* b, double* c, std::size_t n, std::size_t k,
                std::size_t m, std::size_t p0, std::size_t p1) {
    const bool first = p0 == 0;
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const double* a0 = a + i * k;
        const double* a1 = a0 + k;
        const double* a2 = a1 + k;
        const double* a3 = a2 + k;
        double* cr = c + i * m;
        std::size_t j = 0;
        for (; j + 8 <= m; j += 8) {
            double* cj = cr + j;
            v4d c00{}, c01{}, c10{}, c11{}, c20{}, c21{}, c30{}, c31{};
            if (!first) {
                c00 = load4(cj);
                c01 = load4(cj + 4);
                c10 = load4(cj + m);
                c11 = load4(cj + m + 4);
                c20 = load4(cj + 2 * m);
                c21 = load4(cj + 2 * m + 4);
                c30 = load4(cj + 3 * m);
                c31 = load4(cj + 3 * m + 4);
            }
            const double* bp = b + p0 * m + j;
            for (std::size_t p = p0; p < p1; ++p, bp += m) {
                const v4d b0 = load4(bp);
                const v4d b1 = load4(bp + 4);
                v4d x = splat(a0[p]);
                c00 = x * b0 + c00;
                c01 = x * b1 + c01;
                x = splat(a1[p]);
                c10 = x * b0 + c10;
                c11 = x * b1 + c11;
                x = splat(a2[p]);
                c20 = x * b0 + c20;
                c21 = x * b1 + c21;
                x = splat(a3[p]);
                c30 = x * b0 + c30;
                c31 = x * b1 + c31;
            }
            store4(cj, c00);
            store4(cj + 4, c01);
            store4(cj + m, c10);
            store4(cj + m + 4, c11);
            store4(cj + 2 * m, c20);
            store4(cj + 2 * m + 4, c21);
            store4(cj + 3 * m, c30);
            store4(cj + 3 * m + 4, c31);
        }
        for (; j < m; ++j) {
            for (std::size_t r = 0; r < 4; ++r) {
                const double* ar = a + (i + r) * k;
                double acc = first ? 0.0 : c[(i + r) * m + j];
                for (std::size_t p = p0; p < p1; ++p) acc = std::fma(ar[p], b[p * m + j], acc);
                c[(i + r) * m + j] = acc;
            }
        }
    }
    for (; i < n; ++i) {
        const double* ar = a + i * k;
        double* cr = c + i * m;
        std::size_t j = 0;
        for (; j + 8 <= m; j += 8) {
            v4d c0{}, c1{};
            if (!first) {
                c0 = load4(cr + j);
                c1 = load4(cr + j + 4);
            }
            const double* bp = b + p0 * m + j;
            for (std::size_t p = p0; p < p1; ++p, bp += m) {
                const v4d x = splat(ar[p]);
                c0 = x * load4(bp) + c0;
                c1 = x * load4(bp + 4) + c1;
            }
            store4(cr + j, c0);
            store4(cr + j + 4, c1);
        }
        for (; j < m; ++j) {
            double acc = first ? 0.0 : cr[j];
            for (std::size_t p = p0; p < p1; ++p) acc = std::fma(ar[p], b[p * m + j], acc);
            cr[j] = acc;
        }
    }
}

void gemm_kernel(const double* a, const double* b, double* c, std::size_t n, std::size_t k,
                 std::size_t m) {
    if (k == 0) {
        std::fill(c, c + n * m, 0.0);
        return;
    }
    for (std::size_t p0 = 0; p0 < k; p0 += kPanel) gemm_panel(a, b, c, n, k, m, p0, std::min(k, p0 + kPanel));
}
#else
void gemm_kernel(const double* a, const double* b, double* c, std::size_t n, std::size_t k,
                 std::size_t m) {
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) {
            double acc = 0.0;
            for (std::size_t p = 0; p < k; ++p) acc = std::fma(a[i * k + p], b[p * m + j], acc);
            c[i * m + j] = acc;
        }
}
#endif

}  // namespace

Tensor::Tensor(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_)
        throw UsageError("tensor data size " + std::to_string(data_.size()) + " != " +
                         std::to_string(rows_) + "x" + std::to_string(cols_));
}

Tensor Tensor::row(std::span<const double> values) {
    return Tensor(1, values.size(), std::vector<double>(values.begin(), values.end()));
}

Tensor Tensor::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r ? rows.begin()->size() : 0;
    std::vector<double> data;
    data.reserve(r * c);
    for (const auto& row : rows) {
        if (row.size() != c) throw UsageError("ragged tensor literal");
        data.insert(data.end(), row.begin(), row.end());
    }
    return Tensor(r, c, std::move(data));
}

double Tensor::item() const {
    if (data_.size() != 1) throw UsageError("item() on non-scalar tensor");
    return data_[0];
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

Tensor Tensor::reshaped(std::size_t rows, std::size_t cols) const {
    if (rows * cols != data_.size()) throw UsageError("reshape size mismatch");
    return Tensor(rows, cols, data_);
}

Tensor Tensor::transposed() const {
    Tensor t(cols_, rows_);
    constexpr std::size_t kTile = 32;
    for (std::size_t r0 = 0; r0 < rows_; r0 += kTile)
        for (std::size_t c0 = 0; c0 < cols_; c0 += kTile) {
            const std::size_t r1 = std::min(rows_, r0 + kTile), c1 = std::min(cols_, c0 + kTile);
            for (std::size_t r = r0; r < r1; ++r)
                for (std::size_t c = c0; c < c1; ++c) t(c, r) = (*this)(r, c);
        }
    return t;
}

bool Tensor::all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Tensor& Tensor::operator+=(const Tensor& o) {
    if (!same_shape(o)) throw UsageError("+= shape mismatch");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
    return *this;
}

Tensor& Tensor::operator*=(double s) {
    for (double& v : data_) v *= s;
    return *this;
}

void matmul_into(const Tensor& a, const Tensor& b, Tensor& out) {
    if (a.cols() != b.rows())
        throw UsageError("matmul shape mismatch: " + std::to_string(a.rows()) + "x" +
                         std::to_string(a.cols()) + " * " + std::to_string(b.rows()) + "x" +
                         std::to_string(b.cols()));
    if (out.rows() != a.rows() || out.cols() != b.cols()) out = Tensor(a.rows(), b.cols());
    gemm_kernel(a.data(), b.data(), out.data(), a.rows(), a.cols(), b.cols());
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    Tensor out(a.rows(), b.cols());
    matmul_into(a, b, out);
    return out;
}

Tensor matmul_tn(const Tensor& a, const Tensor& b) { return matmul(a.transposed(), b); }

Tensor matmul_nt(const Tensor& a, const Tensor& b) { return matmul(a, b.transposed()); }

void tune_allocator() {
#if defined(__GLIBC__)
    mallopt(M_MMAP_THRESHOLD, 1 << 30);
    mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) throw UsageError("max_abs_diff shape mismatch");
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

}  // namespace radiart
