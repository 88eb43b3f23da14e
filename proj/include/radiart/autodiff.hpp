#pragma once

// Tensor-level reverse-mode differentiation.
//
// A Tape records every operation applied to Vars in creation order, so inputs
// always precede the nodes that consume them. backward() walks the tape once in
// reverse and leaves d(output)/d(node) in grad() for every node that requires
// gradients. Leaves created with constant() never receive gradients, and neither
// does anything computed purely from constants.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "radiart/tensor.hpp"

namespace radiart::ad {

class Tape;

struct Var {
    Tape* tape = nullptr;
    std::size_t id = 0;

    const Tensor& value() const;
    const Tensor& grad() const;
    std::size_t rows() const { return value().rows(); }
    std::size_t cols() const { return value().cols(); }
};

class Tape {
public:
    /// Called during backward with the node's own index. Implementations read
    /// out_grad(self) and push contributions with accumulate().
    using Backprop = std::function<void(Tape&, std::size_t self)>;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var input(Tensor value);
    Var constant(Tensor value);

    /// Append an operation node. `backprop` may be empty for ops that are not
    /// differentiable in any input.
    Var record(std::string_view op, Tensor value, std::vector<std::size_t> inputs,
               Backprop backprop);

    const Tensor& value(std::size_t id) const { return nodes_[id].value; }
    const Tensor& grad(std::size_t id) const;
    const Tensor& out_grad(std::size_t id) const { return nodes_[id].grad; }
    bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
    const std::vector<std::size_t>& inputs(std::size_t id) const { return nodes_[id].inputs; }
    const std::string& op_name(std::size_t id) const { return nodes_[id].op; }
    std::size_t size() const { return nodes_.size(); }

    /// Adds `g` into the gradient buffer of `id` if that node requires grad.
    void accumulate(std::size_t id, const Tensor& g);
    /// Direct access to the (zero-initialised) gradient buffer; nullptr when the
    /// node does not require grad.
    Tensor* grad_buffer(std::size_t id);

    /// Reverse sweep from a 1×1 output. Gradients from previous sweeps are
    /// discarded. Throws UsageError for non-scalar outputs and NumericError
    /// (naming the node) when a non-finite gradient or output shows up.
    void backward(Var output);

private:
    struct Node {
        std::string op;
        Tensor value;
        Tensor grad;
        std::vector<std::size_t> inputs;
        Backprop backprop;
        bool requires_grad = false;
    };

    std::vector<Node> nodes_;
};

// ---- elementwise arithmetic ------------------------------------------------
// Binary ops accept `b` of the same shape as `a`, a 1×cols row, a rows×1
// column, or a 1×1 scalar; b is broadcast over a.

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var div(Var a, Var b);
Var scale(Var a, double s);
Var add_scalar(Var a, double s);
Var neg(Var a);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }
inline Var operator/(Var a, Var b) { return div(a, b); }
inline Var operator*(Var a, double s) { return scale(a, s); }
inline Var operator*(double s, Var a) { return scale(a, s); }
inline Var operator+(Var a, double s) { return add_scalar(a, s); }
inline Var operator-(Var a, double s) { return add_scalar(a, -s); }
inline Var operator-(double s, Var a) { return add_scalar(neg(a), s); }
inline Var operator-(Var a) { return neg(a); }

// ---- unary -----------------------------------------------------------------

Var sin(Var a);
Var cos(Var a);
Var exp(Var a);
Var log(Var a);
Var softplus(Var a);
Var sigmoid(Var a);
Var tanh(Var a);
Var square(Var a);
Var sqrt(Var a);
/// d|x|/dx is taken as +1 at x = 0 (right derivative).
Var abs(Var a);

// ---- linear algebra and reductions ----------------------------------------

Var matmul(Var a, Var b);
Var sum(Var a);
Var mean(Var a);
/// rows×1
Var row_sum(Var a);
/// Largest element as 1×1; the gradient goes to the first maximiser.
Var max(Var a);
/// rows×1 numerically stable log Σ exp over each row.
Var logsumexp_rows(Var a);
/// Sum of elementwise products of two same-shaped tensors, 1×1.
Var dot(Var a, Var b);
/// Euclidean norm of each row, rows×1.
Var l2_norm_rows(Var a);
Var l2_normalize_rows(Var a);
/// Cosine similarity of two same-shaped tensors viewed as flat vectors, 1×1.
Var cosine_similarity(Var a, Var b);

/// rows×(cols+1): column k holds Π_{i<k} a(r,i); column 0 is 1.
Var cumprod_exclusive(Var a);
/// rows×cols: column k holds Σ_{i<k} a(r,i).
Var cumsum_exclusive(Var a);

// ---- shape ----------------------------------------------------------------

Var reshape(Var a, std::size_t rows, std::size_t cols);
Var concat_cols(std::span<const Var> parts);
Var slice_cols(Var a, std::size_t start, std::size_t count);
Var gather_rows(Var a, std::span<const std::size_t> rows);

/// Unfolds an image stored as (height·width)×channels into convolution
/// patches: output row (oy·out_w + ox) holds the kernel×kernel×channels window
/// (zero padded) ordered (ky, kx, channel).
struct Im2ColSpec {
    std::size_t height = 0;
    std::size_t width = 0;
    std::size_t channels = 0;
    std::size_t kernel = 3;
    std::size_t stride = 1;
    std::size_t pad = 1;

    std::size_t out_height() const { return (height + 2 * pad - kernel) / stride + 1; }
    std::size_t out_width() const { return (width + 2 * pad - kernel) / stride + 1; }
};
Var im2col(Var a, const Im2ColSpec& spec);

// ---- gradient checking and optimisation -----------------------------------

using ScalarFn = std::function<Var(Tape&, Var theta)>;

/// Reverse-mode gradient of f at theta (a 1×n row) and its value.
struct ValueAndGrad {
    double value = 0.0;
    Tensor grad;
};
ValueAndGrad value_and_grad(const ScalarFn& f, const Tensor& theta);

/// max_i |(f(θ+h·e_i) − f(θ−h·e_i))/(2h) − g_i| / max(1, |g_i|) where g is the
/// reverse-mode gradient. Requires h > 0.
double grad_check(const ScalarFn& f, const Tensor& theta, double h);

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct AdamState {
    AdamConfig config;
    std::vector<Tensor> m;
    std::vector<Tensor> v;
    std::int64_t step = 0;

    static AdamState for_params(std::span<const Tensor> params, AdamConfig config);
};

/// One bias-corrected Adam update of `params` in place. Throws NumericError on
/// non-finite gradients (params and state untouched in that case).
void adam_step(AdamState& state, std::span<Tensor> params, std::span<const Tensor> grads);

}  // namespace radiart::ad
