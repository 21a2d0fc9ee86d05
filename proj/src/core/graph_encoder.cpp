#include "core/graph_encoder.hpp"

#include <cmath>

namespace nfarec {

HgcParams init_hgc_params(std::size_t d_m, Rng& rng) {
    double s = std::sqrt(6.0 / static_cast<double>(2 * d_m));
    std::uniform_real_distribution<double> dist(-s, s);
    Mat w(d_m, d_m);
    for (double& v : w.a) v = dist(rng);
    HgcParams p;
    p.W1 = make_param(w);
    return p;
}

Tensor hgc_forward(Tape& tape, const Mat& A_hat, const Tensor& V, const HgcParams& params,
                   const HgcOptions& opts) {
    if (A_hat.rows != V->rows()) {
        throw ShapeError("hgc_forward: adjacency " + shape_str({A_hat.rows, A_hat.cols}) +
                         " does not match embeddings " + shape_str(V->shape));
    }
    Tensor ahat = make_constant(A_hat);
    Tensor lambda = V;
    for (std::size_t l = 0; l < opts.n_layers; ++l) {
        lambda = matmul(tape, ahat, elu(tape, matmul(tape, lambda, params.W1)));
    }
    return lambda;
}

Tensor hgc_forward_literal(Tape& tape, const Mat& A_hat, const Tensor& V, const HgcParams& params,
                           const std::vector<double>& hyperedge, std::size_t n_layers) {
    if (hyperedge.size() != A_hat.rows) {
        throw ShapeError("hgc_forward_literal: hyperedge length mismatch");
    }
    double s = 0.0;  // h_u A_hat h_u^T, a 1x1 scalar as printed
    for (std::size_t i = 0; i < A_hat.rows; ++i) {
        if (hyperedge[i] == 0.0) continue;
        for (std::size_t j = 0; j < A_hat.cols; ++j) {
            if (hyperedge[j] != 0.0) s += A_hat.at(i, j);
        }
    }
    Tensor lambda = V;
    for (std::size_t l = 0; l < n_layers; ++l) {
        lambda = scale(tape, elu(tape, matmul(tape, lambda, params.W1)), s);
    }
    return lambda;
}

std::vector<double> hyperedge_of(const std::vector<std::size_t>& items, std::size_t n_items) {
    std::vector<double> h(n_items, 0.0);
    for (std::size_t i : items) {
        if (i >= n_items) throw IndexError("hyperedge_of: item index out of range");
        h[i] = 1.0;
    }
    return h;
}

namespace {

double hyperedge_count(const std::vector<double>& hyperedge, const char* who) {
    double c = 0.0;
    for (double v : hyperedge) c += v != 0.0 ? 1.0 : 0.0;
    if (c == 0.0) throw EmptinessError(std::string(who) + ": user hyperedge is all-zero");
    return c;
}

}  // namespace

Tensor user_structural_rep(Tape& tape, const Tensor& lambda_final,
                           const std::vector<double>& hyperedge) {
    if (hyperedge.size() != lambda_final->rows()) {
        throw ShapeError("user_structural_rep: hyperedge length mismatch");
    }
    double c = hyperedge_count(hyperedge, "user_structural_rep");
    Mat sel(1, hyperedge.size());
    for (std::size_t i = 0; i < hyperedge.size(); ++i) {
        sel.at(0, i) = hyperedge[i] != 0.0 ? 1.0 / c : 0.0;
    }
    return matmul(tape, make_constant(sel), lambda_final);
}

Tensor feedback_aware_rep(Tape& tape, const Tensor& lambda_final,
                          const std::vector<double>& hyperedge, const Mat& X_masked) {
    if (hyperedge.size() != X_masked.rows || X_masked.cols != lambda_final->rows()) {
        throw ShapeError("feedback_aware_rep: dimension mismatch");
    }
    double c = hyperedge_count(hyperedge, "feedback_aware_rep");
    // (1/|h_u|) h_u^T X_masked, precomputed as a constant relay row
    Mat relay(1, X_masked.cols);
    for (std::size_t i = 0; i < hyperedge.size(); ++i) {
        if (hyperedge[i] == 0.0) continue;
        for (std::size_t j = 0; j < X_masked.cols; ++j) {
            relay.at(0, j) += X_masked.at(i, j) / c;
        }
    }
    return matmul(tape, make_constant(relay), lambda_final);
}

}  // namespace nfarec
