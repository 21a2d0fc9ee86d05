#include "core/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace nfarec {

namespace {

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a->shape != b->shape) {
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a->shape) + " vs " +
                         shape_str(b->shape));
    }
}

Tensor unary_ew(Tape& tape, const Tensor& a, double (*fwd)(double), double (*dfwd)(double, double)) {
    Tensor out = tape.record(a->shape, a->requires_grad, nullptr);
    for (std::size_t i = 0; i < a->numel(); ++i) out->val[i] = fwd(a->val[i]);
    if (out->requires_grad) {
        Tensor ac = a;
        Node* o = out.get();
        out->backprop = [ac, o, dfwd]() {
            for (std::size_t i = 0; i < ac->numel(); ++i) {
                ac->grad[i] += o->grad[i] * dfwd(ac->val[i], o->val[i]);
            }
        };
    }
    return out;
}

}  // namespace

Tensor make_leaf(std::size_t rows, std::size_t cols, bool requires_grad) {
    auto n = std::make_shared<Node>();
    n->shape = {rows, cols};
    n->val.assign(rows * cols, 0.0);
    n->grad.assign(rows * cols, 0.0);
    n->requires_grad = requires_grad;
    return n;
}

Tensor make_param(const Mat& init) {
    Tensor t = make_leaf(init.rows, init.cols, true);
    t->val = init.a;
    return t;
}

Tensor make_constant(const Mat& value) {
    Tensor t = make_leaf(value.rows, value.cols, false);
    t->val = value.a;
    return t;
}

Tensor make_scalar(double v, bool requires_grad) {
    Tensor t = make_leaf(1, 1, requires_grad);
    t->val[0] = v;
    return t;
}

double scalar_value(const Tensor& t) {
    if (t->numel() != 1) throw ShapeError("scalar_value: tensor is " + shape_str(t->shape));
    return t->val[0];
}

Tensor Tape::record(std::vector<std::size_t> shape, bool requires_grad,
                    std::function<void()> backprop) {
    auto n = std::make_shared<Node>();
    n->shape = std::move(shape);
    n->val.assign(n->numel(), 0.0);
    n->grad.assign(n->numel(), 0.0);
    n->requires_grad = requires_grad;
    n->node_id = static_cast<std::int64_t>(nodes_.size());
    n->backprop = std::move(backprop);
    nodes_.push_back(n);
    return n;
}

void Tape::backward(const Tensor& loss) {
    if (backward_done_) {
        throw DomainError("backward() already run on this tape; call reset() first");
    }
    if (loss->numel() != 1) {
        throw ShapeError("backward: loss must be scalar, got " + shape_str(loss->shape));
    }
    if (loss->node_id < 0 || static_cast<std::size_t>(loss->node_id) >= nodes_.size() ||
        nodes_[static_cast<std::size_t>(loss->node_id)] != loss) {
        throw DomainError("backward: loss was not recorded on this tape");
    }
    backward_done_ = true;
    loss->grad[0] = 1.0;
    for (std::int64_t i = loss->node_id; i >= 0; --i) {
        Node* n = nodes_[static_cast<std::size_t>(i)].get();
        if (n->requires_grad && n->backprop) n->backprop();
    }
}

void Tape::reset() {
    nodes_.clear();
    backward_done_ = false;
}

Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b) {
    if (a->cols() != b->rows()) {
        throw ShapeError("matmul: inner dimensions differ, " + shape_str(a->shape) + " x " +
                         shape_str(b->shape));
    }
    std::size_t m = a->rows(), k = a->cols(), n = b->cols();
    Tensor out = tape.record({m, n}, a->requires_grad || b->requires_grad, nullptr);
    mm_acc(a->val.data(), b->val.data(), out->val.data(), m, k, n);
    if (out->requires_grad) {
        Tensor ac = a, bc = b;
        Node* o = out.get();
        out->backprop = [ac, bc, o, m, k, n]() {
            if (ac->requires_grad) mm_nt_acc(o->grad.data(), bc->val.data(), ac->grad.data(), m, n, k);
            if (bc->requires_grad) mm_tn_acc(ac->val.data(), o->grad.data(), bc->grad.data(), k, m, n);
        };
    }
    return out;
}

Tensor matmul_nt(Tape& tape, const Tensor& a, const Tensor& b) {
    if (a->cols() != b->cols()) {
        throw ShapeError("matmul_nt: inner dimensions differ, " + shape_str(a->shape) + " x " +
                         shape_str(b->shape) + "^T");
    }
    std::size_t m = a->rows(), k = a->cols(), n = b->rows();
    Tensor out = tape.record({m, n}, a->requires_grad || b->requires_grad, nullptr);
    mm_nt_acc(a->val.data(), b->val.data(), out->val.data(), m, k, n);
    if (out->requires_grad) {
        Tensor ac = a, bc = b;
        Node* o = out.get();
        out->backprop = [ac, bc, o, m, k, n]() {
            // dA = G * B, dB = G^T * A
            if (ac->requires_grad) mm_acc(o->grad.data(), bc->val.data(), ac->grad.data(), m, n, k);
            if (bc->requires_grad) mm_tn_acc(o->grad.data(), ac->val.data(), bc->grad.data(), n, m, k);
        };
    }
    return out;
}

Tensor add(Tape& tape, const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "add");
    Tensor out = tape.record(a->shape, a->requires_grad || b->requires_grad, nullptr);
    for (std::size_t i = 0; i < out->numel(); ++i) out->val[i] = a->val[i] + b->val[i];
    if (out->requires_grad) {
        Tensor ac = a, bc = b;
        Node* o = out.get();
        out->backprop = [ac, bc, o]() {
            for (std::size_t i = 0; i < o->numel(); ++i) {
                if (ac->requires_grad) ac->grad[i] += o->grad[i];
                if (bc->requires_grad) bc->grad[i] += o->grad[i];
            }
        };
    }
    return out;
}

Tensor sub(Tape& tape, const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "sub");
    Tensor out = tape.record(a->shape, a->requires_grad || b->requires_grad, nullptr);
    for (std::size_t i = 0; i < out->numel(); ++i) out->val[i] = a->val[i] - b->val[i];
    if (out->requires_grad) {
        Tensor ac = a, bc = b;
        Node* o = out.get();
        out->backprop = [ac, bc, o]() {
            for (std::size_t i = 0; i < o->numel(); ++i) {
                if (ac->requires_grad) ac->grad[i] += o->grad[i];
                if (bc->requires_grad) bc->grad[i] -= o->grad[i];
            }
        };
    }
    return out;
}

Tensor mul(Tape& tape, const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "mul");
    Tensor out = tape.record(a->shape, a->requires_grad || b->requires_grad, nullptr);
    for (std::size_t i = 0; i < out->numel(); ++i) out->val[i] = a->val[i] * b->val[i];
    if (out->requires_grad) {
        Tensor ac = a, bc = b;
        Node* o = out.get();
        out->backprop = [ac, bc, o]() {
            for (std::size_t i = 0; i < o->numel(); ++i) {
                if (ac->requires_grad) ac->grad[i] += o->grad[i] * bc->val[i];
                if (bc->requires_grad) bc->grad[i] += o->grad[i] * ac->val[i];
            }
        };
    }
    return out;
}

Tensor scale(Tape& tape, const Tensor& a, double c) {
    Tensor out = tape.record(a->shape, a->requires_grad, nullptr);
    for (std::size_t i = 0; i < out->numel(); ++i) out->val[i] = a->val[i] * c;
    if (out->requires_grad) {
        Tensor ac = a;
        Node* o = out.get();
        out->backprop = [ac, o, c]() {
            for (std::size_t i = 0; i < o->numel(); ++i) ac->grad[i] += o->grad[i] * c;
        };
    }
    return out;
}

Tensor scale_s(Tape& tape, const Tensor& a, const Tensor& s) {
    if (s->numel() != 1) throw ShapeError("scale_s: scale must be 1x1, got " + shape_str(s->shape));
    double c = s->val[0];
    Tensor out = tape.record(a->shape, a->requires_grad || s->requires_grad, nullptr);
    for (std::size_t i = 0; i < out->numel(); ++i) out->val[i] = a->val[i] * c;
    if (out->requires_grad) {
        Tensor ac = a, sc = s;
        Node* o = out.get();
        out->backprop = [ac, sc, o, c]() {
            for (std::size_t i = 0; i < o->numel(); ++i) {
                if (ac->requires_grad) ac->grad[i] += o->grad[i] * c;
                if (sc->requires_grad) sc->grad[0] += o->grad[i] * ac->val[i];
            }
        };
    }
    return out;
}

Tensor add_rowvec(Tape& tape, const Tensor& a, const Tensor& v) {
    if (v->rows() != 1 || v->cols() != a->cols()) {
        throw ShapeError("add_rowvec: " + shape_str(a->shape) + " + " + shape_str(v->shape));
    }
    Tensor out = tape.record(a->shape, a->requires_grad || v->requires_grad, nullptr);
    for (std::size_t r = 0; r < a->rows(); ++r) {
        for (std::size_t c = 0; c < a->cols(); ++c) {
            out->val[r * a->cols() + c] = a->val[r * a->cols() + c] + v->val[c];
        }
    }
    if (out->requires_grad) {
        Tensor ac = a, vc = v;
        Node* o = out.get();
        out->backprop = [ac, vc, o]() {
            std::size_t n = ac->cols();
            for (std::size_t r = 0; r < ac->rows(); ++r) {
                for (std::size_t c = 0; c < n; ++c) {
                    double g = o->grad[r * n + c];
                    if (ac->requires_grad) ac->grad[r * n + c] += g;
                    if (vc->requires_grad) vc->grad[c] += g;
                }
            }
        };
    }
    return out;
}

Tensor mul_rowvec(Tape& tape, const Tensor& a, const Tensor& v) {
    if (v->rows() != 1 || v->cols() != a->cols()) {
        throw ShapeError("mul_rowvec: " + shape_str(a->shape) + " * " + shape_str(v->shape));
    }
    Tensor out = tape.record(a->shape, a->requires_grad || v->requires_grad, nullptr);
    for (std::size_t r = 0; r < a->rows(); ++r) {
        for (std::size_t c = 0; c < a->cols(); ++c) {
            out->val[r * a->cols() + c] = a->val[r * a->cols() + c] * v->val[c];
        }
    }
    if (out->requires_grad) {
        Tensor ac = a, vc = v;
        Node* o = out.get();
        out->backprop = [ac, vc, o]() {
            std::size_t n = ac->cols();
            for (std::size_t r = 0; r < ac->rows(); ++r) {
                for (std::size_t c = 0; c < n; ++c) {
                    double g = o->grad[r * n + c];
                    if (ac->requires_grad) ac->grad[r * n + c] += g * vc->val[c];
                    if (vc->requires_grad) vc->grad[c] += g * ac->val[r * n + c];
                }
            }
        };
    }
    return out;
}

Tensor elu(Tape& tape, const Tensor& a) {
    return unary_ew(
        tape, a, +[](double x) { return x > 0.0 ? x : std::expm1(x); },
        +[](double x, double y) { return x > 0.0 ? 1.0 : y + 1.0; });
}

Tensor tanh_op(Tape& tape, const Tensor& a) {
    return unary_ew(
        tape, a, +[](double x) { return std::tanh(x); },
        +[](double, double y) { return 1.0 - y * y; });
}

Tensor sigmoid(Tape& tape, const Tensor& a) {
    return unary_ew(
        tape, a, +[](double x) { return stable_sigmoid(x); },
        +[](double, double y) { return y * (1.0 - y); });
}

Tensor log_op(Tape& tape, const Tensor& a) {
    return unary_ew(
        tape, a, +[](double x) { return std::log(x); },
        +[](double x, double) { return 1.0 / x; });
}

Tensor exp_op(Tape& tape, const Tensor& a) {
    return unary_ew(
        tape, a, +[](double x) { return std::exp(x); }, +[](double, double y) { return y; });
}

Tensor sum(Tape& tape, const Tensor& a) {
    Tensor out = tape.record({1, 1}, a->requires_grad, nullptr);
    double s = 0.0;
    for (double v : a->val) s += v;
    out->val[0] = s;
    if (out->requires_grad) {
        Tensor ac = a;
        Node* o = out.get();
        out->backprop = [ac, o]() {
            for (std::size_t i = 0; i < ac->numel(); ++i) ac->grad[i] += o->grad[0];
        };
    }
    return out;
}

Tensor mean(Tape& tape, const Tensor& a) {
    Tensor s = sum(tape, a);
    return scale(tape, s, 1.0 / static_cast<double>(a->numel()));
}

Tensor l2_normalize_rows(Tape& tape, const Tensor& a) {
    constexpr double kEps = 1e-12;
    std::size_t m = a->rows(), n = a->cols();
    Tensor out = tape.record(a->shape, a->requires_grad, nullptr);
    std::vector<double> norms(m);
    for (std::size_t r = 0; r < m; ++r) {
        double s = 0.0;
        for (std::size_t c = 0; c < n; ++c) s += a->val[r * n + c] * a->val[r * n + c];
        norms[r] = std::max(std::sqrt(s), kEps);
        for (std::size_t c = 0; c < n; ++c) out->val[r * n + c] = a->val[r * n + c] / norms[r];
    }
    if (out->requires_grad) {
        Tensor ac = a;
        Node* o = out.get();
        out->backprop = [ac, o, norms, m, n]() {
            for (std::size_t r = 0; r < m; ++r) {
                double nr = norms[r];
                bool clamped = nr <= 1e-12;
                double dot = 0.0;
                if (!clamped) {
                    for (std::size_t c = 0; c < n; ++c) {
                        dot += ac->val[r * n + c] * o->grad[r * n + c];
                    }
                }
                for (std::size_t c = 0; c < n; ++c) {
                    double g = o->grad[r * n + c] / nr;
                    if (!clamped) g -= ac->val[r * n + c] * dot / (nr * nr * nr);
                    ac->grad[r * n + c] += g;
                }
            }
        };
    }
    return out;
}

Tensor layer_norm_rows(Tape& tape, const Tensor& a) {
    constexpr double kEps = 1e-5;
    std::size_t m = a->rows(), n = a->cols();
    Tensor out = tape.record(a->shape, a->requires_grad, nullptr);
    std::vector<double> inv_std(m);
    for (std::size_t r = 0; r < m; ++r) {
        double mu = 0.0;
        for (std::size_t c = 0; c < n; ++c) mu += a->val[r * n + c];
        mu /= static_cast<double>(n);
        double var = 0.0;
        for (std::size_t c = 0; c < n; ++c) {
            double d = a->val[r * n + c] - mu;
            var += d * d;
        }
        var /= static_cast<double>(n);
        inv_std[r] = 1.0 / std::sqrt(var + kEps);
        for (std::size_t c = 0; c < n; ++c) {
            out->val[r * n + c] = (a->val[r * n + c] - mu) * inv_std[r];
        }
    }
    if (out->requires_grad) {
        Tensor ac = a;
        Node* o = out.get();
        out->backprop = [ac, o, inv_std, m, n]() {
            for (std::size_t r = 0; r < m; ++r) {
                double gmean = 0.0, gymean = 0.0;
                for (std::size_t c = 0; c < n; ++c) {
                    gmean += o->grad[r * n + c];
                    gymean += o->grad[r * n + c] * o->val[r * n + c];
                }
                gmean /= static_cast<double>(n);
                gymean /= static_cast<double>(n);
                for (std::size_t c = 0; c < n; ++c) {
                    ac->grad[r * n + c] +=
                        inv_std[r] * (o->grad[r * n + c] - gmean - o->val[r * n + c] * gymean);
                }
            }
        };
    }
    return out;
}

Tensor softplus_beta(Tape& tape, const Tensor& x, const Tensor& beta) {
    if (beta->numel() != 1) {
        throw ShapeError("softplus_beta: beta must be 1x1, got " + shape_str(beta->shape));
    }
    double b = beta->val[0];
    if (!(b > 0.0)) {
        throw DomainError("softplus_beta: beta must be positive, got " + std::to_string(b));
    }
    Tensor out = tape.record(x->shape, x->requires_grad || beta->requires_grad, nullptr);
    // cached per element: softplus(u) where u = x/beta
    std::vector<double> sp(x->numel());
    for (std::size_t i = 0; i < x->numel(); ++i) {
        double u = x->val[i] / b;
        sp[i] = u > 30.0 ? u + std::log1p(std::exp(-u)) : std::log1p(std::exp(u));
        out->val[i] = b * sp[i];
    }
    if (out->requires_grad) {
        Tensor xc = x, bc = beta;
        Node* o = out.get();
        out->backprop = [xc, bc, o, b, sp = std::move(sp)]() {
            for (std::size_t i = 0; i < xc->numel(); ++i) {
                double u = xc->val[i] / b;
                double sig = stable_sigmoid(u);
                if (xc->requires_grad) xc->grad[i] += o->grad[i] * sig;
                if (bc->requires_grad) bc->grad[0] += o->grad[i] * (sp[i] - u * sig);
            }
        };
    }
    return out;
}

Tensor softplus_beta(Tape& tape, const Tensor& x, double beta) {
    return softplus_beta(tape, x, make_scalar(beta));
}

Tensor masked_softmax(Tape& tape, const Tensor& scores, const std::vector<std::uint8_t>& mask) {
    std::size_t m = scores->rows(), n = scores->cols();
    if (mask.size() != m * n) {
        throw ShapeError("masked_softmax: mask size " + std::to_string(mask.size()) +
                         " does not match " + shape_str(scores->shape));
    }
    Tensor out = tape.record(scores->shape, scores->requires_grad, nullptr);
    for (std::size_t r = 0; r < m; ++r) {
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < n; ++c) {
            if (mask[r * n + c]) mx = std::max(mx, scores->val[r * n + c]);
        }
        if (!std::isfinite(mx)) {
            throw DomainError("masked_softmax: row " + std::to_string(r) + " is fully masked");
        }
        double z = 0.0;
        for (std::size_t c = 0; c < n; ++c) {
            if (mask[r * n + c]) z += std::exp(scores->val[r * n + c] - mx);
        }
        for (std::size_t c = 0; c < n; ++c) {
            out->val[r * n + c] = mask[r * n + c] ? std::exp(scores->val[r * n + c] - mx) / z : 0.0;
        }
    }
    if (out->requires_grad) {
        Tensor sc = scores;
        Node* o = out.get();
        out->backprop = [sc, o, m, n]() {
            for (std::size_t r = 0; r < m; ++r) {
                double dot = 0.0;
                for (std::size_t c = 0; c < n; ++c) {
                    dot += o->grad[r * n + c] * o->val[r * n + c];
                }
                for (std::size_t c = 0; c < n; ++c) {
                    // zero output rows out disallowed entries automatically
                    sc->grad[r * n + c] += o->val[r * n + c] * (o->grad[r * n + c] - dot);
                }
            }
        };
    }
    return out;
}

Tensor gather_rows(Tape& tape, const Tensor& a, const std::vector<std::size_t>& indices) {
    for (std::size_t idx : indices) {
        if (idx >= a->rows()) {
            throw IndexError("gather_rows: index " + std::to_string(idx) + " out of range [0," +
                             std::to_string(a->rows()) + ")");
        }
    }
    std::size_t n = a->cols();
    Tensor out = tape.record({indices.size(), n}, a->requires_grad, nullptr);
    for (std::size_t r = 0; r < indices.size(); ++r) {
        std::copy_n(a->val.begin() + static_cast<std::ptrdiff_t>(indices[r] * n), n,
                    out->val.begin() + static_cast<std::ptrdiff_t>(r * n));
    }
    if (out->requires_grad) {
        Tensor ac = a;
        Node* o = out.get();
        out->backprop = [ac, o, indices, n]() {
            for (std::size_t r = 0; r < indices.size(); ++r) {
                for (std::size_t c = 0; c < n; ++c) {
                    ac->grad[indices[r] * n + c] += o->grad[r * n + c];
                }
            }
        };
    }
    return out;
}

Tensor gather_col(Tape& tape, const Tensor& a, std::size_t col) {
    if (col >= a->cols()) {
        throw IndexError("gather_col: column " + std::to_string(col) + " out of range");
    }
    std::size_t m = a->rows(), n = a->cols();
    Tensor out = tape.record({m, 1}, a->requires_grad, nullptr);
    for (std::size_t r = 0; r < m; ++r) out->val[r] = a->val[r * n + col];
    if (out->requires_grad) {
        Tensor ac = a;
        Node* o = out.get();
        out->backprop = [ac, o, col, m, n]() {
            for (std::size_t r = 0; r < m; ++r) ac->grad[r * n + col] += o->grad[r];
        };
    }
    return out;
}

Tensor get_elem(Tape& tape, const Tensor& a, std::size_t r, std::size_t c) {
    if (r >= a->rows() || c >= a->cols()) {
        throw IndexError("get_elem: (" + std::to_string(r) + "," + std::to_string(c) +
                         ") out of range for " + shape_str(a->shape));
    }
    Tensor out = tape.record({1, 1}, a->requires_grad, nullptr);
    out->val[0] = a->val[r * a->cols() + c];
    if (out->requires_grad) {
        Tensor ac = a;
        Node* o = out.get();
        out->backprop = [ac, o, r, c]() { ac->grad[r * ac->cols() + c] += o->grad[0]; };
    }
    return out;
}

Tensor tile_cols(Tape& tape, const Tensor& a, std::size_t n) {
    if (a->cols() != 1) throw ShapeError("tile_cols: input must be m x 1, got " + shape_str(a->shape));
    std::size_t m = a->rows();
    Tensor out = tape.record({m, n}, a->requires_grad, nullptr);
    for (std::size_t r = 0; r < m; ++r) {
        for (std::size_t c = 0; c < n; ++c) out->val[r * n + c] = a->val[r];
    }
    if (out->requires_grad) {
        Tensor ac = a;
        Node* o = out.get();
        out->backprop = [ac, o, m, n]() {
            for (std::size_t r = 0; r < m; ++r) {
                double s = 0.0;
                for (std::size_t c = 0; c < n; ++c) s += o->grad[r * n + c];
                ac->grad[r] += s;
            }
        };
    }
    return out;
}

Tensor stack_rows(Tape& tape, const std::vector<Tensor>& rows) {
    if (rows.empty()) throw EmptinessError("stack_rows: no rows given");
    std::size_t n = rows[0]->cols();
    bool rg = false;
    for (const Tensor& r : rows) {
        if (r->rows() != 1 || r->cols() != n) {
            throw ShapeError("stack_rows: expected 1x" + std::to_string(n) + ", got " +
                             shape_str(r->shape));
        }
        rg = rg || r->requires_grad;
    }
    Tensor out = tape.record({rows.size(), n}, rg, nullptr);
    for (std::size_t r = 0; r < rows.size(); ++r) {
        std::copy(rows[r]->val.begin(), rows[r]->val.end(),
                  out->val.begin() + static_cast<std::ptrdiff_t>(r * n));
    }
    if (rg) {
        Node* o = out.get();
        out->backprop = [rows, o, n]() {
            for (std::size_t r = 0; r < rows.size(); ++r) {
                if (!rows[r]->requires_grad) continue;
                for (std::size_t c = 0; c < n; ++c) rows[r]->grad[c] += o->grad[r * n + c];
            }
        };
    }
    return out;
}

Tensor weighted_bce(Tape& tape, const Tensor& r, const Mat& w_pos, const Mat& neg_mask) {
    if (r->rows() != w_pos.rows || r->cols() != w_pos.cols || r->rows() != neg_mask.rows ||
        r->cols() != neg_mask.cols) {
        throw ShapeError("weighted_bce: weight shape mismatch with " + shape_str(r->shape));
    }
    auto softplus = [](double x) {
        return x > 30.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
    };
    Tensor out = tape.record({1, 1}, r->requires_grad, nullptr);
    double s = 0.0;
    for (std::size_t i = 0; i < r->numel(); ++i) {
        double x = r->val[i];
        // -log sigmoid(x) = softplus(-x), -log(1 - sigmoid(x)) = softplus(x)
        if (w_pos.a[i] != 0.0) s += w_pos.a[i] * softplus(-x);
        if (neg_mask.a[i] != 0.0) s += neg_mask.a[i] * softplus(x);
    }
    out->val[0] = s;
    if (out->requires_grad) {
        Tensor rc = r;
        Node* o = out.get();
        out->backprop = [rc, o, w_pos, neg_mask]() {
            for (std::size_t i = 0; i < rc->numel(); ++i) {
                double sig = stable_sigmoid(rc->val[i]);
                rc->grad[i] += o->grad[0] * (w_pos.a[i] * (sig - 1.0) + neg_mask.a[i] * sig);
            }
        };
    }
    return out;
}

Tensor weighted_sum(Tape& tape, const Tensor& a, const Mat& w) {
    if (a->rows() != w.rows || a->cols() != w.cols) {
        throw ShapeError("weighted_sum: " + shape_str(a->shape) + " vs weights " +
                         shape_str({w.rows, w.cols}));
    }
    Tensor out = tape.record({1, 1}, a->requires_grad, nullptr);
    double s = 0.0;
    for (std::size_t i = 0; i < a->numel(); ++i) s += a->val[i] * w.a[i];
    out->val[0] = s;
    if (out->requires_grad) {
        Tensor ac = a;
        Node* o = out.get();
        out->backprop = [ac, o, w]() {
            for (std::size_t i = 0; i < ac->numel(); ++i) ac->grad[i] += o->grad[0] * w.a[i];
        };
    }
    return out;
}

GradCheckReport grad_check(const std::function<Tensor(Tape&)>& f, const std::vector<Tensor>& inputs,
                           double h, double tol) {
    for (const Tensor& t : inputs) t->zero_grad();

    Tape tape;
    Tensor loss = f(tape);
    double base = scalar_value(loss);
    if (!std::isfinite(base)) throw NumericError("grad_check: forward pass is not finite");
    tape.backward(loss);

    auto eval = [&](std::size_t input, std::size_t coord) {
        Tape t2;
        double v = scalar_value(f(t2));
        if (!std::isfinite(v)) {
            throw NumericError("grad_check: non-finite forward at input " + std::to_string(input) +
                               " coordinate " + std::to_string(coord));
        }
        return v;
    };

    GradCheckReport rep;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        Tensor t = inputs[i];
        for (std::size_t j = 0; j < t->numel(); ++j) {
            double saved = t->val[j];
            t->val[j] = saved + h;
            double fp = eval(i, j);
            t->val[j] = saved - h;
            double fm = eval(i, j);
            t->val[j] = saved;
            double numeric = (fp - fm) / (2.0 * h);
            double analytic = t->grad[j];
            double rel = std::abs(analytic - numeric) /
                         std::max(std::abs(analytic) + std::abs(numeric), 1e-6);
            ++rep.coords_checked;
            if (rel > rep.max_rel_err) {
                rep.max_rel_err = rel;
                rep.worst_input = i;
                rep.worst_coord = j;
            }
        }
    }
    rep.passed = rep.max_rel_err <= tol;
    return rep;
}

}  // namespace nfarec
