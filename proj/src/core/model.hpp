#pragma once

#include <functional>
#include <string>
#include <vector>

#include "core/config.hpp"
#include "core/data.hpp"
#include "core/graph_encoder.hpp"
#include "core/seq_encoder.hpp"
#include "core/tensor.hpp"

namespace nfarec {

struct ModelParams {
    EncoderParams enc;  // owns the shared item embedding table V
    HgcParams hgc;
    Tensor W_dec;  // d_m x |I|, decoder of the feedback-aware term
    Tensor b_dec;  // 1 x |I|

    std::vector<std::pair<std::string, Tensor>> named() const;
    std::vector<Tensor> all() const;
};

ModelParams init_model_params(std::size_t n_items, const RunConfig& cfg, Rng& rng);

struct Model {
    RunConfig cfg;
    ModelParams params;
    std::string fingerprint;
    std::size_t epoch = 0;
    std::size_t n_items = 0;
};

// r = tanh(Seq + Gra1 + Gra2); disabled terms are dropped before the tanh
Tensor score_users(Tape& tape, const Tensor& e_s, const Tensor& e_h1, const Tensor& e_h2,
                   const Tensor& V, const Tensor& W_dec, const Tensor& b_dec, double delta,
                   bool use_seq, bool use_gra1, bool use_gra2);

// weighted multi-label cross-entropy; strict mode drops the negative-class
// term and matches the printed equation verbatim
Tensor loss_main(Tape& tape, const Tensor& r, const Mat& w_pos, const Mat& neg_mask);

Tensor loss_final(Tape& tape, const Tensor& main, const Tensor& auxi_nll, double delta2);

// Monte Carlo estimate of the definite integral of an intensity over
// [t_start, t_end]: (dt / N) * sum_k lam(x_k), x_k ~ uniform. The callable
// receives the sample times as a 1 x N constant and returns the matching
// 1 x N intensity tensor, so the estimate stays differentiable through lam.
Tensor mci_integral(Tape& tape,
                    const std::function<Tensor(Tape&, const Mat& sample_times)>& lam,
                    double t_start, double t_end, std::size_t n, Rng& rng);

struct LikelihoodTerms {
    Tensor event;     // sum of log lam_{z_j}(t_j) over events j >= 2
    Tensor integral;  // MCI estimate of the continuous term
};

// Per-user Hawkes log-likelihood pieces given the encoded hidden states.
LikelihoodTerms log_likelihood_user(Tape& tape, const Tensor& H, const SequenceBatch& batch,
                                    const EncoderParams& params, std::size_t n_mci, Rng& rng);

// -- full forward pass ------------------------------------------------------

// Static structures shared by every training epoch and by evaluation.
struct StaticInputs {
    Mat A_hat;
    Mat X_masked;
    Mat h_norm;  // |U| x |I|, hyperedge indicators / interaction count
    Mat relay;   // |U| x |I|, h_norm * X_masked
    std::vector<std::vector<double>> hyperedges;
    std::vector<SequenceBatch> train_batches;
    std::vector<std::vector<std::size_t>> train_items;  // distinct, per user
    Mat w_pos;     // c_{u,i} * gamma over history and targets
    Mat neg_mask;  // 1 where c = 0 (empty in positives-only mode)
};

StaticInputs build_static_inputs(const DatasetBundle& bundle, const RunConfig& cfg);

struct ForwardOut {
    Tensor r;        // |U| x |I| scores
    Tensor e_s;      // |U| x d_m (null when the sequential branch is off)
    Tensor e_h1;     // |U| x d_m
    Tensor e_h2;     // |U| x d_m
    Tensor lambda;   // |I| x d_m item representations
    Tensor aux_nll;  // 1x1 negative log-likelihood (null when skipped)
};

// mci_rng == nullptr skips the auxiliary likelihood (evaluation path).
ForwardOut model_forward(Tape& tape, const ModelParams& params, const RunConfig& cfg,
                         const StaticInputs& in, Rng* mci_rng);

// -- optimization -----------------------------------------------------------

class AdamOptimizer {
public:
    AdamOptimizer(double lr, double beta1, double beta2, double eps)
        : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

    void step(const std::vector<Tensor>& params);
    static void zero_grad(const std::vector<Tensor>& params);

private:
    double lr_, beta1_, beta2_, eps_;
    std::size_t t_ = 0;
    std::vector<std::vector<double>> m_, v_;
    std::vector<Tensor> bound_;
};

struct EpochLog {
    std::size_t epoch = 0;
    double l_main = 0.0;
    double l_auxi = 0.0;
    double val_recall20 = 0.0;
    double val_ndcg20 = 0.0;
};

struct FitResult {
    Model best;
    std::vector<EpochLog> log;
    bool diverged = false;
};

FitResult fit(const DatasetBundle& bundle, const RunConfig& cfg);

std::string format_epoch_log(const std::vector<EpochLog>& log);

// checkpoint file, magic "NFARECM1"
void save_checkpoint(const Model& model, const std::string& path);
Model load_checkpoint(const std::string& path);

}  // namespace nfarec
