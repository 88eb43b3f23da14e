#include "doctest.h"

#include <random>

#include "radiart/error.hpp"
#include "radiart/tensor.hpp"

using namespace radiart;

namespace {

Tensor random_tensor(std::size_t r, std::size_t c, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Tensor t(r, c);
    for (double& v : t.values()) v = u(rng);
    return t;
}

// textbook triple loop in long double
Tensor naive_matmul(const Tensor& a, const Tensor& b) {
    Tensor c(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < b.cols(); ++j) {
            long double acc = 0;
            for (std::size_t p = 0; p < a.cols(); ++p) acc += static_cast<long double>(a(i, p)) * b(p, j);
            c(i, j) = static_cast<double>(acc);
        }
    return c;
}

}  // namespace

TEST_CASE("matmul matches the naive product on awkward shapes") {
    const std::size_t shapes[][3] = {{1, 1, 1}, {3, 5, 7}, {9, 300, 13}, {17, 513, 64}, {4, 8, 8}, {0, 3, 2}};
    std::uint64_t seed = 1;
    for (const auto& s : shapes) {
        const Tensor a = random_tensor(s[0], s[1], seed++);
        const Tensor b = random_tensor(s[1], s[2], seed++);
        CHECK(max_abs_diff(matmul(a, b), naive_matmul(a, b)) < 1e-12);
        CHECK(max_abs_diff(matmul_tn(a.transposed(), b), naive_matmul(a, b)) < 1e-12);
        CHECK(max_abs_diff(matmul_nt(a, b.transposed()), naive_matmul(a, b)) < 1e-12);
    }
}

TEST_CASE("matmul rows do not depend on the batch they are computed in") {
    const Tensor a = random_tensor(37, 300, 11);
    const Tensor b = random_tensor(300, 19, 12);
    const Tensor full = matmul(a, b);
    for (std::size_t r : {0u, 5u, 36u}) {
        Tensor one(1, a.cols());
        std::copy(a.row_span(r).begin(), a.row_span(r).end(), one.data());
        const Tensor single = matmul(one, b);
        for (std::size_t c = 0; c < b.cols(); ++c) CHECK(single(0, c) == full(r, c));
    }
}

TEST_CASE("inner dimension zero gives zeros") {
    Tensor out(2, 3, 7.0);
    matmul_into(Tensor(2, 0), Tensor(0, 3), out);
    CHECK(out == Tensor(2, 3));
}

TEST_CASE("shape errors") {
    CHECK_THROWS_AS(matmul(Tensor(2, 3), Tensor(2, 3)), UsageError);
    CHECK_THROWS_AS(Tensor(2, 2).reshaped(3, 1), UsageError);
    CHECK_THROWS_AS(Tensor(2, 2).item(), UsageError);
    Tensor a(2, 2);
    CHECK_THROWS_AS(a += Tensor(1, 2), UsageError);
}

TEST_CASE("transpose and reshape") {
    const Tensor a = random_tensor(70, 45, 3);
    const Tensor t = a.transposed();
    REQUIRE(t.rows() == 45);
    for (std::size_t r = 0; r < a.rows(); ++r)
        for (std::size_t c = 0; c < a.cols(); ++c) CHECK(t(c, r) == a(r, c));
    CHECK(t.transposed() == a);
    CHECK(a.reshaped(45, 70).values().front() == a[0]);
}

TEST_CASE("finiteness") {
    Tensor a(1, 3, 1.0);
    CHECK(a.all_finite());
    a[1] = std::numeric_limits<double>::quiet_NaN();
    CHECK_FALSE(a.all_finite());
}
