#include "core/seq_encoder.hpp"

#include <cmath>

namespace nfarec {

namespace {

Mat uniform_init(std::size_t rows, std::size_t cols, Rng& rng) {
    double s = std::sqrt(6.0 / static_cast<double>(rows + cols));
    std::uniform_real_distribution<double> dist(-s, s);
    Mat m(rows, cols);
    for (double& v : m.a) v = dist(rng);
    return m;
}

}  // namespace

SequenceBatch make_sequence_batch(const std::vector<std::size_t>& items,
                                  const std::vector<double>& times,
                                  const std::vector<int>& polarities) {
    if (items.size() != times.size() || items.size() != polarities.size()) {
        throw ShapeError("sequence batch: item/time/polarity lengths differ");
    }
    if (items.empty()) throw EmptinessError("sequence batch: empty sequence");
    for (std::size_t j = 0; j < times.size(); ++j) {
        if (!(times[j] > 0.0)) {
            throw DomainError("sequence batch: event time must be positive after rescaling");
        }
        if (j > 0 && times[j] < times[j - 1]) {
            throw DomainError("sequence batch: event times must be nondecreasing");
        }
    }
    for (int z : polarities) {
        if (z != 1 && z != -1) throw DomainError("sequence batch: polarity must be +1 or -1");
    }
    return SequenceBatch{items, times, polarities};
}

std::vector<std::uint8_t> causal_mask(std::size_t n) {
    std::vector<std::uint8_t> mask(n * n, 0);
    for (std::size_t j = 0; j < n; ++j) {
        for (std::size_t k = 0; k <= j; ++k) mask[j * n + k] = 1;
    }
    return mask;
}

std::vector<Tensor> EncoderParams::all() const {
    std::vector<Tensor> out;
    for (auto& [name, t] : named()) out.push_back(t);
    return out;
}

std::vector<std::pair<std::string, Tensor>> EncoderParams::named() const {
    std::vector<std::pair<std::string, Tensor>> out;
    out.emplace_back("embeddings", V);
    for (std::size_t l = 0; l < layers.size(); ++l) {
        std::string p = "seq.layer" + std::to_string(l) + ".";
        out.emplace_back(p + "Wq", layers[l].Wq);
        out.emplace_back(p + "Wk", layers[l].Wk);
        out.emplace_back(p + "Wv", layers[l].Wv);
        out.emplace_back(p + "W_ff1", layers[l].W_ff1);
        out.emplace_back(p + "b_ff1", layers[l].b_ff1);
        out.emplace_back(p + "W_ff2", layers[l].W_ff2);
        out.emplace_back(p + "b_ff2", layers[l].b_ff2);
    }
    out.emplace_back("seq.alpha", alpha);
    out.emplace_back("seq.log_beta", log_beta);
    if (w_int_h) {
        out.emplace_back("seq.w_int_h", w_int_h);
        out.emplace_back("seq.b_int_h", b_int_h);
    }
    out.emplace_back("seq.w_int", w_int);
    out.emplace_back("seq.b_int", b_int);
    return out;
}

EncoderParams init_encoder_params(std::size_t n_items, const SeqOptions& opts, Rng& rng) {
    EncoderParams p;
    p.V = make_param(uniform_init(n_items, opts.d_m, rng));
    for (std::size_t l = 0; l < opts.n_layers; ++l) {
        EncoderLayerParams layer;
        layer.Wq = make_param(uniform_init(opts.d_m, opts.d_m, rng));
        layer.Wk = make_param(uniform_init(opts.d_m, opts.d_m, rng));
        layer.Wv = make_param(uniform_init(opts.d_m, opts.d_m, rng));
        layer.W_ff1 = make_param(uniform_init(opts.d_m, opts.d_ff, rng));
        layer.b_ff1 = make_param(Mat(1, opts.d_ff));
        layer.W_ff2 = make_param(uniform_init(opts.d_ff, opts.d_m, rng));
        layer.b_ff2 = make_param(Mat(1, opts.d_m));
        p.layers.push_back(std::move(layer));
    }
    p.alpha = make_param(Mat(1, 2, 0.1));
    p.log_beta = make_param(Mat(1, 2, 0.0));  // beta = 1
    if (opts.intensity_hidden > 0) {
        p.w_int_h = make_param(uniform_init(opts.d_m, opts.intensity_hidden, rng));
        p.b_int_h = make_param(Mat(1, opts.intensity_hidden));
        p.w_int = make_param(uniform_init(opts.intensity_hidden, 2, rng));
    } else {
        p.w_int = make_param(uniform_init(opts.d_m, 2, rng));
    }
    p.b_int = make_param(Mat(1, 2));
    return p;
}

Tensor attention_layer(Tape& tape, const Tensor& E, const std::vector<std::uint8_t>& mask,
                       const EncoderLayerParams& layer, const SeqOptions& opts) {
    std::size_t d_k = layer.Wq->cols();
    Tensor Q = matmul(tape, E, layer.Wq);
    Tensor K = matmul(tape, E, layer.Wk);
    Tensor Vv = matmul(tape, E, layer.Wv);
    Tensor S = scale(tape, matmul_nt(tape, Q, K), 1.0 / std::sqrt(static_cast<double>(d_k)));
    Tensor P = masked_softmax(tape, S, mask);
    Tensor att = matmul(tape, P, Vv);
    if (opts.attention_only) return att;
    Tensor n1 = layer_norm_rows(tape, add(tape, E, att));
    Tensor hidden = elu(tape, add_rowvec(tape, matmul(tape, n1, layer.W_ff1), layer.b_ff1));
    Tensor ff = add_rowvec(tape, matmul(tape, hidden, layer.W_ff2), layer.b_ff2);
    return layer_norm_rows(tape, add(tape, n1, ff));
}

EncodedSequence encode(Tape& tape, const SequenceBatch& batch, const EncoderParams& params,
                       const SeqOptions& opts) {
    std::size_t n = batch.items.size();
    if (n == 0) throw EmptinessError("encode: empty sequence");

    Tensor E = gather_rows(tape, params.V, batch.items);
    if (opts.sinusoidal_time) {
        std::size_t d = opts.d_m;
        Mat enc(n, d);
        for (std::size_t j = 0; j < n; ++j) {
            for (std::size_t c = 0; c < d; ++c) {
                double omega = batch.times[j] /
                               std::pow(10000.0, static_cast<double>(2 * (c / 2)) /
                                                     static_cast<double>(d));
                enc.at(j, c) = (c % 2 == 0) ? std::sin(omega) : std::cos(omega);
            }
        }
        E = add(tape, E, make_constant(enc));
    }

    std::vector<std::uint8_t> mask =
        opts.masking ? causal_mask(n) : std::vector<std::uint8_t>(n * n, 1);

    std::vector<Tensor> layer_outputs;
    Tensor x = E;
    for (const auto& layer : params.layers) {
        x = attention_layer(tape, x, mask, layer, opts);
        layer_outputs.push_back(x);
    }
    Tensor pooled;
    if (opts.layer_mean_pooling && layer_outputs.size() > 1) {
        pooled = layer_outputs[0];
        for (std::size_t l = 1; l < layer_outputs.size(); ++l) {
            pooled = add(tape, pooled, layer_outputs[l]);
        }
        pooled = scale(tape, pooled, 1.0 / static_cast<double>(layer_outputs.size()));
    } else {
        pooled = layer_outputs.back();
    }

    EncodedSequence out;
    out.H = l2_normalize_rows(tape, pooled);
    out.e_s = matmul(tape, make_constant(Mat(1, n, 1.0)), out.H);  // SumPooling
    return out;
}

Tensor intensity_head(Tape& tape, const Tensor& H, const EncoderParams& params) {
    Tensor x = H;
    if (params.w_int_h) {
        x = tanh_op(tape, add_rowvec(tape, matmul(tape, x, params.w_int_h), params.b_int_h));
    }
    return add_rowvec(tape, matmul(tape, x, params.w_int), params.b_int);
}

Intensity intensity(Tape& tape, const Tensor& h_prev, double t, double t_j,
                    const EncoderParams& params) {
    if (!(t_j > 0.0)) {
        throw DomainError("intensity: last event time must be positive (timestamps unnormalized?)");
    }
    if (t < t_j) throw DomainError("intensity: t must be >= last event time");
    double ratio = (t - t_j) / t_j;
    Tensor base = intensity_head(tape, h_prev, params);
    Tensor x = add(tape, base, scale(tape, params.alpha, ratio));
    Intensity out;
    Tensor beta_pos = exp_op(tape, get_elem(tape, params.log_beta, 0, 0));
    Tensor beta_neg = exp_op(tape, get_elem(tape, params.log_beta, 0, 1));
    out.lam_pos = softplus_beta(tape, get_elem(tape, x, 0, 0), beta_pos);
    out.lam_neg = softplus_beta(tape, get_elem(tape, x, 0, 1), beta_neg);
    out.lam_total = add(tape, out.lam_pos, out.lam_neg);
    return out;
}

int predict_next_polarity(const Tensor& h_prev, double t_next, double t_j,
                          const EncoderParams& params) {
    Tape tape;
    Intensity lam = intensity(tape, h_prev, t_next, t_j, params);
    // argmax of lam_z / lam_total; the shared denominator cancels
    return scalar_value(lam.lam_pos) >= scalar_value(lam.lam_neg) ? +1 : -1;
}

}  // namespace nfarec
