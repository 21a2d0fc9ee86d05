#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "core/common.hpp"

namespace nfarec {

// Reverse-mode differentiation over a tape of executed operations.
// Tensors are 2-D (scalars are 1x1, row vectors 1xn), 64-bit values and
// gradients always share shape. Leaves (parameters, constants) live outside
// the tape; every op result is recorded on the tape in execution order and
// backward() replays it in reverse.

struct Node {
    std::vector<std::size_t> shape;  // {rows, cols}
    std::vector<double> val;
    std::vector<double> grad;
    bool requires_grad = false;
    std::int64_t node_id = -1;  // position on the tape, -1 for leaves
    std::function<void()> backprop;  // empty for leaves

    std::size_t rows() const { return shape[0]; }
    std::size_t cols() const { return shape[1]; }
    std::size_t numel() const { return shape[0] * shape[1]; }
    void zero_grad() { std::fill(grad.begin(), grad.end(), 0.0); }
};

using Tensor = std::shared_ptr<Node>;

Tensor make_leaf(std::size_t rows, std::size_t cols, bool requires_grad);
Tensor make_param(const Mat& init);
Tensor make_constant(const Mat& value);
Tensor make_scalar(double v, bool requires_grad = false);

double scalar_value(const Tensor& t);

class Tape {
public:
    Tensor record(std::vector<std::size_t> shape, bool requires_grad,
                  std::function<void()> backprop);

    // Seeds `loss` (a scalar recorded on this tape) with gradient 1 and runs
    // every recorded op's backward rule in reverse order. A second call
    // without reset() is an error.
    void backward(const Tensor& loss);

    void reset();
    std::size_t size() const { return nodes_.size(); }

private:
    std::vector<Tensor> nodes_;
    bool backward_done_ = false;
};

// -- op library -------------------------------------------------------------

Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b);
// a * b^T
Tensor matmul_nt(Tape& tape, const Tensor& a, const Tensor& b);

Tensor add(Tape& tape, const Tensor& a, const Tensor& b);
Tensor sub(Tape& tape, const Tensor& a, const Tensor& b);
Tensor mul(Tape& tape, const Tensor& a, const Tensor& b);
Tensor scale(Tape& tape, const Tensor& a, double c);
// a scaled by a 1x1 tensor (gradient flows to both)
Tensor scale_s(Tape& tape, const Tensor& a, const Tensor& s);
Tensor add_rowvec(Tape& tape, const Tensor& a, const Tensor& v);
Tensor mul_rowvec(Tape& tape, const Tensor& a, const Tensor& v);

Tensor elu(Tape& tape, const Tensor& a);
Tensor tanh_op(Tape& tape, const Tensor& a);
Tensor sigmoid(Tape& tape, const Tensor& a);
Tensor log_op(Tape& tape, const Tensor& a);
Tensor exp_op(Tape& tape, const Tensor& a);

Tensor sum(Tape& tape, const Tensor& a);
Tensor mean(Tape& tape, const Tensor& a);
// each row v -> v / max(||v||_2, 1e-12)
Tensor l2_normalize_rows(Tape& tape, const Tensor& a);
// per-row standardization (mean 0, variance 1, eps inside the sqrt)
Tensor layer_norm_rows(Tape& tape, const Tensor& a);

// beta * log(1 + exp(x / beta)), linear asymptote for x/beta > 30.
// beta is a positive 1x1 tensor; gradient flows into it when it requires grad.
Tensor softplus_beta(Tape& tape, const Tensor& x, const Tensor& beta);
Tensor softplus_beta(Tape& tape, const Tensor& x, double beta);

// Row-wise softmax over entries where mask != 0; disallowed entries are
// exactly zero in the output. A fully masked row is an error.
Tensor masked_softmax(Tape& tape, const Tensor& scores, const std::vector<std::uint8_t>& mask);

// out row j = a row indices[j]; backward scatter-adds into the shared rows.
Tensor gather_rows(Tape& tape, const Tensor& a, const std::vector<std::size_t>& indices);
Tensor gather_col(Tape& tape, const Tensor& a, std::size_t col);
Tensor get_elem(Tape& tape, const Tensor& a, std::size_t r, std::size_t c);
// column vector [m x 1] repeated n times -> [m x n]
Tensor tile_cols(Tape& tape, const Tensor& a, std::size_t n);
Tensor stack_rows(Tape& tape, const std::vector<Tensor>& rows);

// sum over { w_pos . (-log sigmoid(r)) + neg_mask . (-log(1 - sigmoid(r))) },
// the weighted multi-label cross-entropy in fused form.
Tensor weighted_bce(Tape& tape, const Tensor& r, const Mat& w_pos, const Mat& neg_mask);

// elementwise multiply by a constant matrix, then sum; fused so big constant
// weights (MCI gap weights, polarity selectors) cost one node.
Tensor weighted_sum(Tape& tape, const Tensor& a, const Mat& w);

// -- gradient checking ------------------------------------------------------

struct GradCheckReport {
    bool passed = false;
    double max_rel_err = 0.0;
    std::size_t worst_input = 0;   // index into the inputs vector
    std::size_t worst_coord = 0;   // flat coordinate within that input
    std::size_t coords_checked = 0;
};

// f builds the forward pass on the given tape and returns a scalar loss.
// Compares the analytic gradient of every coordinate of every input against
// central finite differences (f(x+h) - f(x-h)) / 2h.
GradCheckReport grad_check(const std::function<Tensor(Tape&)>& f, const std::vector<Tensor>& inputs,
                           double h, double tol);

}  // namespace nfarec
