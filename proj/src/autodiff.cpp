#include "radiart/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "radiart/error.hpp"

namespace radiart::ad {

namespace {

std::string shape_str(const Tensor& t) {
    return std::to_string(t.rows()) + "x" + std::to_string(t.cols());
}

Tape& tape_of(Var a) {
    if (!a.tape) throw UsageError("Var is not attached to a tape");
    return *a.tape;
}

Tape& tape_of(Var a, Var b) {
    if (a.tape != b.tape || !a.tape) throw UsageError("Vars belong to different tapes");
    return *a.tape;
}

enum class Broadcast { Same, Row, Col, Scalar };

Broadcast broadcast_kind(const Tensor& a, const Tensor& b, std::string_view op) {
    if (a.same_shape(b)) return Broadcast::Same;
    if (b.rows() == 1 && b.cols() == 1) return Broadcast::Scalar;
    if (b.rows() == 1 && b.cols() == a.cols()) return Broadcast::Row;
    if (b.cols() == 1 && b.rows() == a.rows()) return Broadcast::Col;
    throw UsageError(std::string(op) + ": cannot broadcast " + shape_str(b) + " onto " +
                     shape_str(a));
}

inline std::size_t b_index(Broadcast k, std::size_t r, std::size_t c, std::size_t cols) {
    switch (k) {
        case Broadcast::Same: return r * cols + c;
        case Broadcast::Row: return c;
        case Broadcast::Col: return r;
        case Broadcast::Scalar: return 0;
    }
    return 0;
}

// Sum a full-shape gradient down to b's broadcast shape.
Tensor reduce_to(Broadcast k, const Tensor& g, const Tensor& b_shape) {
    if (k == Broadcast::Same) return g;
    Tensor out(b_shape.rows(), b_shape.cols());
    for (std::size_t r = 0; r < g.rows(); ++r)
        for (std::size_t c = 0; c < g.cols(); ++c) out[b_index(k, r, c, g.cols())] += g(r, c);
    return out;
}

template <class Fwd, class Dfn>
Var unary(Var a, std::string_view name, Fwd fwd, Dfn dfdx) {
    Tape& t = tape_of(a);
    const Tensor& x = a.value();
    Tensor y(x.rows(), x.cols());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = fwd(x[i]);
    const std::size_t ia = a.id;
    return t.record(name, std::move(y), {ia}, [ia, dfdx](Tape& tp, std::size_t self) {
        Tensor* ga = tp.grad_buffer(ia);
        if (!ga) return;
        const Tensor& g = tp.out_grad(self);
        const Tensor& xv = tp.value(ia);
        const Tensor& yv = tp.value(self);
        for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * dfdx(xv[i], yv[i]);
    });
}

double sigmoid_value(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

}  // namespace

const Tensor& Var::value() const { return tape_of(*this).value(id); }
const Tensor& Var::grad() const { return tape_of(*this).grad(id); }

Var Tape::input(Tensor value) {
    nodes_.push_back(Node{"input", std::move(value), {}, {}, {}, true});
    return Var{this, nodes_.size() - 1};
}

Var Tape::constant(Tensor value) {
    nodes_.push_back(Node{"constant", std::move(value), {}, {}, {}, false});
    return Var{this, nodes_.size() - 1};
}

Var Tape::record(std::string_view op, Tensor value, std::vector<std::size_t> inputs,
                 Backprop backprop) {
    bool needs = false;
    for (std::size_t i : inputs) {
        if (i >= nodes_.size()) throw UsageError("record: input index past end of tape");
        needs = needs || nodes_[i].requires_grad;
    }
    needs = needs && static_cast<bool>(backprop);
    if (!needs) backprop = nullptr;
    nodes_.push_back(Node{std::string(op), std::move(value), {}, std::move(inputs),
                          std::move(backprop), needs});
    return Var{this, nodes_.size() - 1};
}

const Tensor& Tape::grad(std::size_t id) const {
    const Node& n = nodes_.at(id);
    if (!n.requires_grad)
        throw UsageError("grad requested for node " + std::to_string(id) + " (" + n.op +
                         ") which does not require grad");
    return n.grad;
}

Tensor* Tape::grad_buffer(std::size_t id) {
    Node& n = nodes_[id];
    if (!n.requires_grad) return nullptr;
    if (n.grad.empty() && !n.value.empty()) n.grad = Tensor(n.value.rows(), n.value.cols());
    return &n.grad;
}

void Tape::accumulate(std::size_t id, const Tensor& g) {
    Tensor* buf = grad_buffer(id);
    if (!buf) return;
    if (!buf->same_shape(g))
        throw UsageError("gradient shape " + shape_str(g) + " does not match node " +
                         std::to_string(id) + " (" + nodes_[id].op + ") shape " +
                         shape_str(nodes_[id].value));
    *buf += g;
}

void Tape::backward(Var output) {
    if (output.tape != this) throw UsageError("backward: output belongs to another tape");
    const Node& out = nodes_.at(output.id);
    if (out.value.size() != 1)
        throw UsageError("backward needs a scalar output, got " + shape_str(out.value));
    if (!std::isfinite(out.value[0]))
        throw NumericError("non-finite output at node " + std::to_string(output.id) + " (" +
                           out.op + ")");
    for (Node& n : nodes_) n.grad = Tensor();
    for (Node& n : nodes_)
        if (n.requires_grad) n.grad = Tensor(n.value.rows(), n.value.cols());
    if (!nodes_[output.id].requires_grad) return;
    nodes_[output.id].grad[0] = 1.0;
    for (std::size_t i = output.id + 1; i-- > 0;) {
        Node& n = nodes_[i];
        if (!n.requires_grad || !n.backprop) continue;
        if (!n.grad.all_finite())
            throw NumericError("non-finite gradient at node " + std::to_string(i) + " (" + n.op +
                               ")");
        n.backprop(*this, i);
    }
    for (std::size_t i = 0; i <= output.id; ++i) {
        const Node& n = nodes_[i];
        if (n.requires_grad && n.inputs.empty() && !n.grad.all_finite())
            throw NumericError("non-finite gradient at leaf node " + std::to_string(i));
    }
}

// ---- elementwise arithmetic ------------------------------------------------

Var add(Var a, Var b) {
    Tape& t = tape_of(a, b);
    const Tensor& x = a.value();
    const Tensor& y = b.value();
    const Broadcast k = broadcast_kind(x, y, "add");
    Tensor out(x.rows(), x.cols());
    for (std::size_t r = 0; r < x.rows(); ++r)
        for (std::size_t c = 0; c < x.cols(); ++c)
            out(r, c) = x(r, c) + y[b_index(k, r, c, x.cols())];
    const std::size_t ia = a.id, ib = b.id;
    return t.record("add", std::move(out), {ia, ib}, [ia, ib, k](Tape& tp, std::size_t self) {
        const Tensor& g = tp.out_grad(self);
        tp.accumulate(ia, g);
        if (tp.requires_grad(ib)) tp.accumulate(ib, reduce_to(k, g, tp.value(ib)));
    });
}

Var sub(Var a, Var b) {
    Tape& t = tape_of(a, b);
    const Tensor& x = a.value();
    const Tensor& y = b.value();
    const Broadcast k = broadcast_kind(x, y, "sub");
    Tensor out(x.rows(), x.cols());
    for (std::size_t r = 0; r < x.rows(); ++r)
        for (std::size_t c = 0; c < x.cols(); ++c)
            out(r, c) = x(r, c) - y[b_index(k, r, c, x.cols())];
    const std::size_t ia = a.id, ib = b.id;
    return t.record("sub", std::move(out), {ia, ib}, [ia, ib, k](Tape& tp, std::size_t self) {
        const Tensor& g = tp.out_grad(self);
        tp.accumulate(ia, g);
        if (tp.requires_grad(ib)) {
            Tensor gb = reduce_to(k, g, tp.value(ib));
            gb *= -1.0;
            tp.accumulate(ib, gb);
        }
    });
}

Var mul(Var a, Var b) {
    Tape& t = tape_of(a, b);
    const Tensor& x = a.value();
    const Tensor& y = b.value();
    const Broadcast k = broadcast_kind(x, y, "mul");
    Tensor out(x.rows(), x.cols());
    for (std::size_t r = 0; r < x.rows(); ++r)
        for (std::size_t c = 0; c < x.cols(); ++c)
            out(r, c) = x(r, c) * y[b_index(k, r, c, x.cols())];
    const std::size_t ia = a.id, ib = b.id;
    return t.record("mul", std::move(out), {ia, ib}, [ia, ib, k](Tape& tp, std::size_t self) {
        const Tensor& g = tp.out_grad(self);
        const Tensor& xv = tp.value(ia);
        const Tensor& yv = tp.value(ib);
        const std::size_t cols = g.cols();
        if (Tensor* ga = tp.grad_buffer(ia)) {
            for (std::size_t r = 0; r < g.rows(); ++r)
                for (std::size_t c = 0; c < cols; ++c)
                    (*ga)(r, c) += g(r, c) * yv[b_index(k, r, c, cols)];
        }
        if (Tensor* gb = tp.grad_buffer(ib)) {
            for (std::size_t r = 0; r < g.rows(); ++r)
                for (std::size_t c = 0; c < cols; ++c)
                    (*gb)[b_index(k, r, c, cols)] += g(r, c) * xv(r, c);
        }
    });
}

Var div(Var a, Var b) {
    Tape& t = tape_of(a, b);
    const Tensor& x = a.value();
    const Tensor& y = b.value();
    const Broadcast k = broadcast_kind(x, y, "div");
    Tensor out(x.rows(), x.cols());
    for (std::size_t r = 0; r < x.rows(); ++r)
        for (std::size_t c = 0; c < x.cols(); ++c)
            out(r, c) = x(r, c) / y[b_index(k, r, c, x.cols())];
    const std::size_t ia = a.id, ib = b.id;
    return t.record("div", std::move(out), {ia, ib}, [ia, ib, k](Tape& tp, std::size_t self) {
        const Tensor& g = tp.out_grad(self);
        const Tensor& yv = tp.value(ib);
        const Tensor& ov = tp.value(self);
        const std::size_t cols = g.cols();
        if (Tensor* ga = tp.grad_buffer(ia)) {
            for (std::size_t r = 0; r < g.rows(); ++r)
                for (std::size_t c = 0; c < cols; ++c)
                    (*ga)(r, c) += g(r, c) / yv[b_index(k, r, c, cols)];
        }
        if (Tensor* gb = tp.grad_buffer(ib)) {
            for (std::size_t r = 0; r < g.rows(); ++r)
                for (std::size_t c = 0; c < cols; ++c) {
                    const std::size_t j = b_index(k, r, c, cols);
                    (*gb)[j] -= g(r, c) * ov(r, c) / yv[j];
                }
        }
    });
}

Var scale(Var a, double s) {
    return unary(
        a, "scale", [s](double x) { return s * x; }, [s](double, double) { return s; });
}

Var add_scalar(Var a, double s) {
    return unary(
        a, "add_scalar", [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

Var neg(Var a) {
    return unary(
        a, "neg", [](double x) { return -x; }, [](double, double) { return -1.0; });
}

// ---- unary -----------------------------------------------------------------

Var sin(Var a) {
    return unary(
        a, "sin", [](double x) { return std::sin(x); },
        [](double x, double) { return std::cos(x); });
}

Var cos(Var a) {
    return unary(
        a, "cos", [](double x) { return std::cos(x); },
        [](double x, double) { return -std::sin(x); });
}

Var exp(Var a) {
    return unary(
        a, "exp", [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var log(Var a) {
    return unary(
        a, "log", [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Var softplus(Var a) {
    // one exp per element; the derivative is kept for the backward pass
    Tape& t = tape_of(a);
    const Tensor& x = a.value();
    Tensor y(x.rows(), x.cols());
    Tensor d(x.rows(), x.cols());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double e = std::exp(-std::abs(x[i]));
        const double l = std::log1p(e);
        const double inv = 1.0 / (1.0 + e);
        y[i] = x[i] > 0.0 ? x[i] + l : l;
        d[i] = x[i] >= 0.0 ? inv : e * inv;
    }
    const std::size_t ia = a.id;
    return t.record("softplus", std::move(y), {ia},
                    [ia, d = std::move(d)](Tape& tp, std::size_t self) {
                        Tensor* ga = tp.grad_buffer(ia);
                        if (!ga) return;
                        const Tensor& g = tp.out_grad(self);
                        for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * d[i];
                    });
}

Var sigmoid(Var a) {
    return unary(a, "sigmoid", sigmoid_value, [](double, double y) { return y * (1.0 - y); });
}

Var tanh(Var a) {
    return unary(
        a, "tanh", [](double x) { return std::tanh(x); },
        [](double, double y) { return 1.0 - y * y; });
}

Var square(Var a) {
    return unary(
        a, "square", [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Var sqrt(Var a) {
    return unary(
        a, "sqrt", [](double x) { return std::sqrt(x); },
        [](double, double y) { return 0.5 / y; });
}

Var abs(Var a) {
    return unary(
        a, "abs", [](double x) { return std::abs(x); },
        [](double x, double) { return x >= 0.0 ? 1.0 : -1.0; });
}

// ---- linear algebra and reductions ----------------------------------------

Var matmul(Var a, Var b) {
    Tape& t = tape_of(a, b);
    Tensor out = radiart::matmul(a.value(), b.value());
    const std::size_t ia = a.id, ib = b.id;
    return t.record("matmul", std::move(out), {ia, ib}, [ia, ib](Tape& tp, std::size_t self) {
        const Tensor& g = tp.out_grad(self);
        if (tp.requires_grad(ia)) tp.accumulate(ia, matmul_nt(g, tp.value(ib)));
        if (tp.requires_grad(ib)) tp.accumulate(ib, matmul_tn(tp.value(ia), g));
    });
}

Var sum(Var a) {
    Tape& t = tape_of(a);
    double s = 0.0;
    for (double v : a.value().values()) s += v;
    const std::size_t ia = a.id;
    return t.record("sum", Tensor::scalar(s), {ia}, [ia](Tape& tp, std::size_t self) {
        const double g = tp.out_grad(self)[0];
        Tensor* ga = tp.grad_buffer(ia);
        for (double& v : ga->values()) v += g;
    });
}

Var mean(Var a) {
    const double n = static_cast<double>(a.value().size());
    if (n == 0) throw UsageError("mean of empty tensor");
    return scale(sum(a), 1.0 / n);
}

Var row_sum(Var a) {
    Tape& t = tape_of(a);
    const Tensor& x = a.value();
    Tensor out(x.rows(), 1);
    for (std::size_t r = 0; r < x.rows(); ++r) {
        double s = 0.0;
        for (std::size_t c = 0; c < x.cols(); ++c) s += x(r, c);
        out[r] = s;
    }
    const std::size_t ia = a.id;
    return t.record("row_sum", std::move(out), {ia}, [ia](Tape& tp, std::size_t self) {
        const Tensor& g = tp.out_grad(self);
        Tensor* ga = tp.grad_buffer(ia);
        for (std::size_t r = 0; r < ga->rows(); ++r)
            for (std::size_t c = 0; c < ga->cols(); ++c) (*ga)(r, c) += g[r];
    });
}

Var max(Var a) {
    Tape& t = tape_of(a);
    const Tensor& x = a.value();
    if (x.empty()) throw UsageError("max of empty tensor");
    const std::size_t arg =
        static_cast<std::size_t>(std::max_element(x.data(), x.data() + x.size()) - x.data());
    const std::size_t ia = a.id;
    return t.record("max", Tensor::scalar(x[arg]), {ia}, [ia, arg](Tape& tp, std::size_t self) {
        (*tp.grad_buffer(ia))[arg] += tp.out_grad(self)[0];
    });
}

Var logsumexp_rows(Var a) {
    Tape& t = tape_of(a);
    const Tensor& x = a.value();
    Tensor out(x.rows(), 1);
    for (std::size_t r = 0; r < x.rows(); ++r) {
        double m = -std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < x.cols(); ++c) m = std::max(m, x(r, c));
        double s = 0.0;
        for (std::size_t c = 0; c < x.cols(); ++c) s += std::exp(x(r, c) - m);
        out[r] = m + std::log(s);
    }
    const std::size_t ia = a.id;
    return t.record("logsumexp_rows", std::move(out), {ia}, [ia](Tape& tp, std::size_t self) {
        const Tensor& g = tp.out_grad(self);
        const Tensor& xv = tp.value(ia);
        const Tensor& lse = tp.value(self);
        Tensor* ga = tp.grad_buffer(ia);
        for (std::size_t r = 0; r < xv.rows(); ++r)
            for (std::size_t c = 0; c < xv.cols(); ++c)
                (*ga)(r, c) += g[r] * std::exp(xv(r, c) - lse[r]);
    });
}

Var dot(Var a, Var b) {
    if (!a.value().same_shape(b.value()))
        throw UsageError("dot shape mismatch " + shape_str(a.value()) + " vs " +
                         shape_str(b.value()));
    return sum(mul(a, b));
}

Var l2_norm_rows(Var a) {
    Tape& t = tape_of(a);
    const Tensor& x = a.value();
    Tensor out(x.rows(), 1);
    for (std::size_t r = 0; r < x.rows(); ++r) {
        double s = 0.0;
        for (std::size_t c = 0; c < x.cols(); ++c) s += x(r, c) * x(r, c);
        out[r] = std::sqrt(s);
    }
    const std::size_t ia = a.id;
    return t.record("l2_norm_rows", std::move(out), {ia}, [ia](Tape& tp, std::size_t self) {
        const Tensor& g = tp.out_grad(self);
        const Tensor& xv = tp.value(ia);
        const Tensor& nv = tp.value(self);
        Tensor* ga = tp.grad_buffer(ia);
        for (std::size_t r = 0; r < xv.rows(); ++r) {
            if (nv[r] == 0.0) continue;  // subgradient 0 at the origin
            for (std::size_t c = 0; c < xv.cols(); ++c) (*ga)(r, c) += g[r] * xv(r, c) / nv[r];
        }
    });
}

Var l2_normalize_rows(Var a) {
    Tape& t = tape_of(a);
    const Tensor& x = a.value();
    Tensor out(x.rows(), x.cols());
    Tensor norms(x.rows(), 1);
    for (std::size_t r = 0; r < x.rows(); ++r) {
        double s = 0.0;
        for (std::size_t c = 0; c < x.cols(); ++c) s += x(r, c) * x(r, c);
        norms[r] = std::sqrt(s);
        if (norms[r] == 0.0) throw NumericError("l2_normalize_rows: zero-norm row");
        for (std::size_t c = 0; c < x.cols(); ++c) out(r, c) = x(r, c) / norms[r];
    }
    const std::size_t ia = a.id;
    return t.record("l2_normalize_rows", std::move(out), {ia},
                    [ia, norms = std::move(norms)](Tape& tp, std::size_t self) {
                        // d(x/|x|) = (g - y (y·g)) / |x|
                        const Tensor& g = tp.out_grad(self);
                        const Tensor& y = tp.value(self);
                        Tensor* ga = tp.grad_buffer(ia);
                        for (std::size_t r = 0; r < y.rows(); ++r) {
                            double yg = 0.0;
                            for (std::size_t c = 0; c < y.cols(); ++c) yg += y(r, c) * g(r, c);
                            for (std::size_t c = 0; c < y.cols(); ++c)
                                (*ga)(r, c) += (g(r, c) - y(r, c) * yg) / norms[r];
                        }
                    });
}

Var cosine_similarity(Var a, Var b) {
    const Tensor& x = a.value();
    Var fa = reshape(a, 1, x.size());
    Var fb = reshape(b, 1, b.value().size());
    return dot(l2_normalize_rows(fa), l2_normalize_rows(fb));
}

Var cumprod_exclusive(Var a) {
    Tape& t = tape_of(a);
    const Tensor& x = a.value();
    const std::size_t k = x.cols();
    Tensor out(x.rows(), k + 1);
    for (std::size_t r = 0; r < x.rows(); ++r) {
        double p = 1.0;
        out(r, 0) = 1.0;
        for (std::size_t c = 0; c < k; ++c) {
            p *= x(r, c);
            out(r, c + 1) = p;
        }
    }
    const std::size_t ia = a.id;
    return t.record("cumprod_exclusive", std::move(out), {ia}, [ia](Tape& tp, std::size_t self) {
        // dL/dx_i = P_i · S_i where P_i = Π_{j<i} x_j and
        // S_i = Σ_{c>i} g_c Π_{i<j<c} x_j, built backwards without division.
        const Tensor& g = tp.out_grad(self);
        const Tensor& xv = tp.value(ia);
        const Tensor& pv = tp.value(self);
        Tensor* ga = tp.grad_buffer(ia);
        const std::size_t kk = xv.cols();
        for (std::size_t r = 0; r < xv.rows(); ++r) {
            double s = 0.0;
            for (std::size_t i = kk; i-- > 0;) {
                s = (i + 1 < kk ? s * xv(r, i + 1) : 0.0) + g(r, i + 1);
                (*ga)(r, i) += pv(r, i) * s;
            }
        }
    });
}

Var cumsum_exclusive(Var a) {
    Tape& t = tape_of(a);
    const Tensor& x = a.value();
    Tensor out(x.rows(), x.cols());
    for (std::size_t r = 0; r < x.rows(); ++r) {
        double s = 0.0;
        for (std::size_t c = 0; c < x.cols(); ++c) {
            out(r, c) = s;
            s += x(r, c);
        }
    }
    const std::size_t ia = a.id;
    return t.record("cumsum_exclusive", std::move(out), {ia}, [ia](Tape& tp, std::size_t self) {
        const Tensor& g = tp.out_grad(self);
        Tensor* ga = tp.grad_buffer(ia);
        for (std::size_t r = 0; r < g.rows(); ++r) {
            double s = 0.0;
            for (std::size_t c = g.cols(); c-- > 0;) {
                (*ga)(r, c) += s;
                s += g(r, c);
            }
        }
    });
}

// ---- shape ----------------------------------------------------------------

Var reshape(Var a, std::size_t rows, std::size_t cols) {
    Tape& t = tape_of(a);
    Tensor out = a.value().reshaped(rows, cols);
    const std::size_t ia = a.id;
    return t.record("reshape", std::move(out), {ia}, [ia](Tape& tp, std::size_t self) {
        const Tensor& g = tp.out_grad(self);
        Tensor* ga = tp.grad_buffer(ia);
        for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i];
    });
}

Var concat_cols(std::span<const Var> parts) {
    if (parts.empty()) throw UsageError("concat_cols of nothing");
    Tape& t = tape_of(parts[0]);
    const std::size_t rows = parts[0].value().rows();
    std::size_t cols = 0;
    std::vector<std::size_t> ids, offsets;
    for (Var p : parts) {
        tape_of(parts[0], p);
        if (p.value().rows() != rows) throw UsageError("concat_cols row mismatch");
        ids.push_back(p.id);
        offsets.push_back(cols);
        cols += p.value().cols();
    }
    Tensor out(rows, cols);
    for (std::size_t i = 0; i < parts.size(); ++i) {
        const Tensor& v = parts[i].value();
        for (std::size_t r = 0; r < rows; ++r)
            std::copy_n(v.data() + r * v.cols(), v.cols(), out.data() + r * cols + offsets[i]);
    }
    return t.record("concat_cols", std::move(out), ids,
                    [ids, offsets](Tape& tp, std::size_t self) {
                        const Tensor& g = tp.out_grad(self);
                        for (std::size_t i = 0; i < ids.size(); ++i) {
                            Tensor* gi = tp.grad_buffer(ids[i]);
                            if (!gi) continue;
                            for (std::size_t r = 0; r < g.rows(); ++r)
                                for (std::size_t c = 0; c < gi->cols(); ++c)
                                    (*gi)(r, c) += g(r, offsets[i] + c);
                        }
                    });
}

Var slice_cols(Var a, std::size_t start, std::size_t count) {
    Tape& t = tape_of(a);
    const Tensor& x = a.value();
    if (start + count > x.cols()) throw UsageError("slice_cols out of range");
    Tensor out(x.rows(), count);
    for (std::size_t r = 0; r < x.rows(); ++r)
        for (std::size_t c = 0; c < count; ++c) out(r, c) = x(r, start + c);
    const std::size_t ia = a.id;
    return t.record("slice_cols", std::move(out), {ia}, [ia, start](Tape& tp, std::size_t self) {
        const Tensor& g = tp.out_grad(self);
        Tensor* ga = tp.grad_buffer(ia);
        for (std::size_t r = 0; r < g.rows(); ++r)
            for (std::size_t c = 0; c < g.cols(); ++c) (*ga)(r, start + c) += g(r, c);
    });
}

Var gather_rows(Var a, std::span<const std::size_t> rows) {
    Tape& t = tape_of(a);
    const Tensor& x = a.value();
    Tensor out(rows.size(), x.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i] >= x.rows()) throw UsageError("gather_rows index out of range");
        std::copy_n(x.data() + rows[i] * x.cols(), x.cols(), out.data() + i * x.cols());
    }
    const std::size_t ia = a.id;
    std::vector<std::size_t> idx(rows.begin(), rows.end());
    return t.record("gather_rows", std::move(out), {ia},
                    [ia, idx = std::move(idx)](Tape& tp, std::size_t self) {
                        const Tensor& g = tp.out_grad(self);
                        Tensor* ga = tp.grad_buffer(ia);
                        for (std::size_t i = 0; i < idx.size(); ++i)
                            for (std::size_t c = 0; c < g.cols(); ++c)
                                (*ga)(idx[i], c) += g(i, c);
                    });
}

Var im2col(Var a, const Im2ColSpec& spec) {
    Tape& t = tape_of(a);
    const Tensor& x = a.value();
    if (x.rows() != spec.height * spec.width || x.cols() != spec.channels)
        throw UsageError("im2col: input " + shape_str(x) + " does not match spec");
    if (spec.height + 2 * spec.pad < spec.kernel || spec.width + 2 * spec.pad < spec.kernel ||
        spec.stride == 0)
        throw UsageError("im2col: kernel larger than padded input");
    const std::size_t oh = spec.out_height(), ow = spec.out_width();
    const std::size_t kc = spec.kernel * spec.kernel * spec.channels;
    // source row per (output row, kernel tap), or npos for padding
    constexpr std::size_t npos = static_cast<std::size_t>(-1);
    std::vector<std::size_t> src(oh * ow * spec.kernel * spec.kernel, npos);
    Tensor out(oh * ow, kc);
    for (std::size_t oy = 0; oy < oh; ++oy)
        for (std::size_t ox = 0; ox < ow; ++ox)
            for (std::size_t ky = 0; ky < spec.kernel; ++ky)
                for (std::size_t kx = 0; kx < spec.kernel; ++kx) {
                    const long iy = static_cast<long>(oy * spec.stride + ky) -
                                    static_cast<long>(spec.pad);
                    const long ix = static_cast<long>(ox * spec.stride + kx) -
                                    static_cast<long>(spec.pad);
                    if (iy < 0 || ix < 0 || iy >= static_cast<long>(spec.height) ||
                        ix >= static_cast<long>(spec.width))
                        continue;
                    const std::size_t s = static_cast<std::size_t>(iy) * spec.width +
                                          static_cast<std::size_t>(ix);
                    const std::size_t tap = ky * spec.kernel + kx;
                    src[(oy * ow + ox) * spec.kernel * spec.kernel + tap] = s;
                    for (std::size_t ch = 0; ch < spec.channels; ++ch)
                        out(oy * ow + ox, tap * spec.channels + ch) = x(s, ch);
                }
    const std::size_t ia = a.id;
    const std::size_t taps = spec.kernel * spec.kernel;
    const std::size_t channels = spec.channels;
    return t.record("im2col", std::move(out), {ia},
                    [ia, src = std::move(src), taps, channels](Tape& tp, std::size_t self) {
                        const Tensor& g = tp.out_grad(self);
                        Tensor* ga = tp.grad_buffer(ia);
                        for (std::size_t o = 0; o < g.rows(); ++o)
                            for (std::size_t tap = 0; tap < taps; ++tap) {
                                const std::size_t s = src[o * taps + tap];
                                if (s == npos) continue;
                                for (std::size_t ch = 0; ch < channels; ++ch)
                                    (*ga)(s, ch) += g(o, tap * channels + ch);
                            }
                    });
}

// ---- gradient checking and optimisation -----------------------------------

ValueAndGrad value_and_grad(const ScalarFn& f, const Tensor& theta) {
    Tape tape;
    Var th = tape.input(theta);
    Var out = f(tape, th);
    tape.backward(out);
    return {out.value().item(), th.grad()};
}

double grad_check(const ScalarFn& f, const Tensor& theta, double h) {
    if (!(h > 0.0)) throw PreconditionError("grad_check: step h must be positive");
    const ValueAndGrad vg = value_and_grad(f, theta);
    auto eval = [&](const Tensor& p) {
        Tape tape;
        return f(tape, tape.constant(p)).value().item();
    };
    double worst = 0.0;
    Tensor probe = theta;
    for (std::size_t i = 0; i < theta.size(); ++i) {
        probe[i] = theta[i] + h;
        const double fp = eval(probe);
        probe[i] = theta[i] - h;
        const double fm = eval(probe);
        probe[i] = theta[i];
        const double fd = (fp - fm) / (2.0 * h);
        const double g = vg.grad[i];
        const double err = std::abs(fd - g) / std::max(1.0, std::abs(g));
        if (!(err <= worst)) worst = err;  // propagates NaN
    }
    return worst;
}

AdamState AdamState::for_params(std::span<const Tensor> params, AdamConfig config) {
    AdamState s;
    s.config = config;
    for (const Tensor& p : params) {
        s.m.emplace_back(p.rows(), p.cols());
        s.v.emplace_back(p.rows(), p.cols());
    }
    return s;
}

void adam_step(AdamState& state, std::span<Tensor> params, std::span<const Tensor> grads) {
    if (params.size() != grads.size() || params.size() != state.m.size())
        throw UsageError("adam_step: parameter/gradient/state count mismatch");
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (!params[i].same_shape(grads[i]) || !params[i].same_shape(state.m[i]))
            throw UsageError("adam_step: shape mismatch in tensor " + std::to_string(i));
        if (!grads[i].all_finite())
            throw NumericError("adam_step: non-finite gradient in tensor " + std::to_string(i));
    }
    const AdamConfig& c = state.config;
    state.step += 1;
    const double t = static_cast<double>(state.step);
    const double bc1 = 1.0 - std::pow(c.beta1, t);
    const double bc2 = 1.0 - std::pow(c.beta2, t);
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor& p = params[i];
        Tensor& m = state.m[i];
        Tensor& v = state.v[i];
        const Tensor& g = grads[i];
        for (std::size_t j = 0; j < p.size(); ++j) {
            m[j] = c.beta1 * m[j] + (1.0 - c.beta1) * g[j];
            v[j] = c.beta2 * v[j] + (1.0 - c.beta2) * g[j] * g[j];
            const double mhat = m[j] / bc1;
            const double vhat = v[j] / bc2;
            p[j] -= c.lr * mhat / (std::sqrt(vhat) + c.eps);
        }
    }
}

}  // namespace radiart::ad
