#pragma once

#include <cstdint>
#include <vector>

#include "core/common.hpp"
#include "core/tensor.hpp"

namespace nfarec {

struct SequenceBatch {
    std::vector<std::size_t> items;
    std::vector<double> times;   // normalized event times in [1, 2], nondecreasing
    std::vector<int> polarities; // +1 / -1
};

SequenceBatch make_sequence_batch(const std::vector<std::size_t>& items,
                                  const std::vector<double>& times,
                                  const std::vector<int>& polarities);

// allowed(j, k) iff k <= j
std::vector<std::uint8_t> causal_mask(std::size_t n);

struct SeqOptions {
    std::size_t d_m = 64;
    std::size_t d_ff = 128;
    std::size_t n_layers = 1;     // L1
    bool masking = true;          // off reproduces the "w/o Masking" ablation
    bool attention_only = false;  // drop the feed-forward sublayer, bare Eq-style block
    bool layer_mean_pooling = true;  // average per-position over layer outputs; else last layer
    bool sinusoidal_time = false; // add a sinusoidal encoding of event time to the input
    std::size_t intensity_hidden = 0;  // 0 keeps the intensity head a single linear map
};

struct EncoderLayerParams {
    Tensor Wq, Wk, Wv;      // d_m x d_m (single head, d_k = d_m)
    Tensor W_ff1, b_ff1;    // d_m x d_ff, 1 x d_ff
    Tensor W_ff2, b_ff2;    // d_ff x d_m, 1 x d_m
};

struct EncoderParams {
    Tensor V;  // |I| x d_m item embeddings, shared with the structural branch
    std::vector<EncoderLayerParams> layers;
    Tensor alpha;     // 1 x 2, per-polarity time coefficient
    Tensor log_beta;  // 1 x 2, softplus softness stored unconstrained
    Tensor w_int_h, b_int_h;  // optional hidden layer of the intensity head (may be null)
    Tensor w_int;     // (d_m or hidden) x 2 intensity head
    Tensor b_int;     // 1 x 2

    std::vector<Tensor> all() const;
    std::vector<std::pair<std::string, Tensor>> named() const;
};

EncoderParams init_encoder_params(std::size_t n_items, const SeqOptions& opts, Rng& rng);

struct EncodedSequence {
    Tensor H;    // n x d_m, rows L2-normalized
    Tensor e_s;  // 1 x d_m, sum-pooled user sequential representation
};

// One self-attention block: scaled dot-product attention with causal mask,
// then (unless attention_only) residual + layer norm and a position-wise
// feed-forward sublayer.
Tensor attention_layer(Tape& tape, const Tensor& E, const std::vector<std::uint8_t>& mask,
                       const EncoderLayerParams& layer, const SeqOptions& opts);

EncodedSequence encode(Tape& tape, const SequenceBatch& batch, const EncoderParams& params,
                       const SeqOptions& opts);

// MLP(h) of the intensity function applied row-wise: [m x d_m] -> [m x 2]
Tensor intensity_head(Tape& tape, const Tensor& H, const EncoderParams& params);

struct Intensity {
    Tensor lam_pos;    // 1 x 1
    Tensor lam_neg;    // 1 x 1
    Tensor lam_total;  // 1 x 1
};

// Per-polarity conditional intensity at time t given the hidden state of the
// last event at t_j: softplus_beta(alpha_z (t - t_j)/t_j + w_z.h + b_z, beta_z).
Intensity intensity(Tape& tape, const Tensor& h_prev, double t, double t_j,
                    const EncoderParams& params);

// argmax over polarity of lam_z / lam_total; exact ties break to +1
int predict_next_polarity(const Tensor& h_prev, double t_next, double t_j,
                          const EncoderParams& params);

}  // namespace nfarec
