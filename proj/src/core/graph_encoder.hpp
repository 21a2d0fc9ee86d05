#pragma once

#include <vector>

#include "core/common.hpp"
#include "core/tensor.hpp"

namespace nfarec {

struct HgcOptions {
    std::size_t n_layers = 1;  // L2
    // literal per-user scalar reading of the printed diffusion equation,
    // kept behind a flag for comparison
    bool strict_literal = false;
};

struct HgcParams {
    Tensor W1;  // d_m x d_m

    std::vector<std::pair<std::string, Tensor>> named() const {
        return {{"hgc.W1", W1}};
    }
};

HgcParams init_hgc_params(std::size_t d_m, Rng& rng);

// Interactive hypergraph convolution over the normalized item-item operator:
// Lambda^(0) = V, Lambda^(l+1) = A_hat . ELU(Lambda^(l) W1).
Tensor hgc_forward(Tape& tape, const Mat& A_hat, const Tensor& V, const HgcParams& params,
                   const HgcOptions& opts);

// strict-literal variant: per-user scalar s_u = h_u^T A_hat h_u rescales each
// layer instead of diffusing through A_hat
Tensor hgc_forward_literal(Tape& tape, const Mat& A_hat, const Tensor& V, const HgcParams& params,
                           const std::vector<double>& hyperedge, std::size_t n_layers);

// mean of Lambda rows where the user's hyperedge indicator is 1
Tensor user_structural_rep(Tape& tape, const Tensor& lambda_final,
                           const std::vector<double>& hyperedge);

// e_H2 = (1/||h_u||_1) h_u^T X_masked Lambda: interacted items relay messages
// weighted by the nonnegative feedback correlation
Tensor feedback_aware_rep(Tape& tape, const Tensor& lambda_final,
                          const std::vector<double>& hyperedge, const Mat& X_masked);

std::vector<double> hyperedge_of(const std::vector<std::size_t>& items, std::size_t n_items);

}  // namespace nfarec
