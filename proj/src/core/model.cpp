#include "core/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

#include "core/eval.hpp"

namespace nfarec {

std::vector<std::pair<std::string, Tensor>> ModelParams::named() const {
    auto out = enc.named();
    for (auto& p : hgc.named()) out.push_back(p);
    out.emplace_back("dec.W", W_dec);
    out.emplace_back("dec.b", b_dec);
    return out;
}

std::vector<Tensor> ModelParams::all() const {
    std::vector<Tensor> out;
    for (auto& [name, t] : named()) out.push_back(t);
    return out;
}

ModelParams init_model_params(std::size_t n_items, const RunConfig& cfg, Rng& rng) {
    ModelParams p;
    p.enc = init_encoder_params(n_items, seq_options(cfg), rng);
    p.hgc = init_hgc_params(cfg.d_m, rng);
    double s = std::sqrt(6.0 / static_cast<double>(cfg.d_m + n_items));
    std::uniform_real_distribution<double> dist(-s, s);
    Mat w(cfg.d_m, n_items);
    for (double& v : w.a) v = dist(rng);
    p.W_dec = make_param(w);
    p.b_dec = make_param(Mat(1, n_items));
    return p;
}

Tensor score_users(Tape& tape, const Tensor& e_s, const Tensor& e_h1, const Tensor& e_h2,
                   const Tensor& V, const Tensor& W_dec, const Tensor& b_dec, double delta,
                   bool use_seq, bool use_gra1, bool use_gra2) {
    Tensor acc;
    auto accumulate = [&](const Tensor& term) { acc = acc ? add(tape, acc, term) : term; };
    if (use_seq) {
        if (!e_s) throw ShapeError("score_users: sequential term enabled but e_s missing");
        accumulate(matmul_nt(tape, e_s, V));
    }
    if (use_gra1) {
        if (!e_h1) throw ShapeError("score_users: structural term enabled but e_h1 missing");
        accumulate(matmul_nt(tape, e_h1, V));
    }
    if (use_gra2) {
        if (!e_h2) throw ShapeError("score_users: feedback-aware term enabled but e_h2 missing");
        accumulate(scale(tape, add_rowvec(tape, matmul(tape, e_h2, W_dec), b_dec), delta));
    }
    if (!acc) {
        const Tensor& any = e_s ? e_s : (e_h1 ? e_h1 : e_h2);
        if (!any) throw ShapeError("score_users: no representation available");
        acc = make_constant(Mat(any->rows(), V->rows()));
    }
    return tanh_op(tape, acc);
}

Tensor loss_main(Tape& tape, const Tensor& r, const Mat& w_pos, const Mat& neg_mask) {
    bool any_target = false;
    for (double v : w_pos.a) {
        if (v != 0.0) {
            any_target = true;
            break;
        }
    }
    bool any_neg = false;
    for (double v : neg_mask.a) {
        if (v != 0.0) {
            any_neg = true;
            break;
        }
    }
    if (!any_target && !any_neg) {
        throw ConfigError("loss_main: no positive targets and no negatives; check target_frac");
    }
    return weighted_bce(tape, r, w_pos, neg_mask);
}

Tensor loss_final(Tape& tape, const Tensor& main, const Tensor& auxi_nll, double delta2) {
    if (!std::isfinite(scalar_value(main))) throw NumericError("loss_final: main loss not finite");
    if (delta2 == 0.0 || !auxi_nll) return main;
    if (!std::isfinite(scalar_value(auxi_nll))) {
        throw NumericError("loss_final: auxiliary loss not finite");
    }
    return add(tape, main, scale(tape, auxi_nll, delta2));
}

Tensor mci_integral(Tape& tape,
                    const std::function<Tensor(Tape&, const Mat& sample_times)>& lam,
                    double t_start, double t_end, std::size_t n, Rng& rng) {
    if (t_end < t_start) throw DomainError("mci_integral: t_end < t_start");
    if (n < 1) throw DomainError("mci_integral: need at least one sample");
    Mat samples(1, n);
    std::uniform_real_distribution<double> dist(t_start, t_end);
    for (double& v : samples.a) v = dist(rng);
    Tensor values = lam(tape, samples);
    if (values->rows() != 1 || values->cols() != n) {
        throw ShapeError("mci_integral: intensity returned " + shape_str(values->shape));
    }
    return scale(tape, sum(tape, values), (t_end - t_start) / static_cast<double>(n));
}

LikelihoodTerms log_likelihood_user(Tape& tape, const Tensor& H, const SequenceBatch& batch,
                                    const EncoderParams& params, std::size_t n_mci, Rng& rng) {
    std::size_t n = batch.items.size();
    LikelihoodTerms out;
    if (n < 2) {
        out.event = make_scalar(0.0);
        out.integral = make_scalar(0.0);
        return out;
    }
    std::size_t g = n - 1;  // inter-event gaps
    std::vector<std::size_t> prev(g);
    for (std::size_t j = 0; j < g; ++j) prev[j] = j;
    Tensor base = intensity_head(tape, gather_rows(tape, H, prev), params);  // g x 2

    Mat event_ratio(g, 1);
    for (std::size_t j = 0; j < g; ++j) {
        event_ratio.at(j, 0) = (batch.times[j + 1] - batch.times[j]) / batch.times[j];
    }
    Tensor event_ratio_t = make_constant(event_ratio);

    // uniform samples inside every gap, drawn gap-major so runs are reproducible
    Mat sample_ratio(g, n_mci);
    Mat gap_weight(g, n_mci);
    for (std::size_t j = 0; j < g; ++j) {
        double a = batch.times[j], b = batch.times[j + 1];
        std::uniform_real_distribution<double> dist(a, b);
        for (std::size_t k = 0; k < n_mci; ++k) {
            double x = dist(rng);
            sample_ratio.at(j, k) = (x - a) / a;
            gap_weight.at(j, k) = (b - a) / static_cast<double>(n_mci);
        }
    }
    Tensor sample_ratio_t = make_constant(sample_ratio);

    Tensor event_total, integral_total;
    for (std::size_t z = 0; z < 2; ++z) {
        Tensor az = get_elem(tape, params.alpha, 0, z);
        Tensor bz = exp_op(tape, get_elem(tape, params.log_beta, 0, z));
        Tensor xz = add(tape, gather_col(tape, base, z), scale_s(tape, event_ratio_t, az));
        Tensor lam_z = softplus_beta(tape, xz, bz);
        Mat sel(g, 1);
        int want = z == 0 ? +1 : -1;
        for (std::size_t j = 0; j < g; ++j) sel.at(j, 0) = batch.polarities[j + 1] == want ? 1.0 : 0.0;
        Tensor evt = weighted_sum(tape, log_op(tape, lam_z), sel);
        event_total = event_total ? add(tape, event_total, evt) : evt;

        Tensor xz_big =
            add(tape, tile_cols(tape, gather_col(tape, base, z), n_mci),
                scale_s(tape, sample_ratio_t, az));
        Tensor lam_big = softplus_beta(tape, xz_big, bz);
        Tensor integ = weighted_sum(tape, lam_big, gap_weight);
        integral_total = integral_total ? add(tape, integral_total, integ) : integ;
    }
    out.event = event_total;
    out.integral = integral_total;
    return out;
}

StaticInputs build_static_inputs(const DatasetBundle& bundle, const RunConfig& cfg) {
    StaticInputs in;
    const FeedbackGraph& train = bundle.split.train;
    std::size_t n_users = train.n_users, n_items = train.n_items;

    in.A_hat = bundle.corr.A_hat;
    if (cfg.order == bundle.corr.order_count) {
        in.X_masked = bundle.corr.X_masked;
    } else {
        in.X_masked =
            build_feedback_correlation(train, cfg.order, cfg.self_loops).X_masked;
    }

    in.hyperedges.resize(n_users);
    in.train_items.resize(n_users);
    in.h_norm = Mat(n_users, n_items);
    in.relay = Mat(n_users, n_items);
    in.w_pos = Mat(n_users, n_items);
    in.neg_mask = Mat(n_users, n_items);
    in.train_batches.reserve(n_users);

    bool any_target = false;
    for (std::size_t u = 0; u < n_users; ++u) {
        const auto& seq = train.sequences[u];
        if (seq.empty()) {
            throw EmptinessError("training split has a user with no interactions: " +
                                 train.user_ids[u]);
        }
        std::set<std::size_t> distinct;
        for (const auto& it : seq) distinct.insert(it.item);
        in.train_items[u].assign(distinct.begin(), distinct.end());
        in.hyperedges[u] = hyperedge_of(in.train_items[u], n_items);
        double c = static_cast<double>(distinct.size());
        for (std::size_t i : distinct) in.h_norm.at(u, i) = 1.0 / c;
        for (std::size_t i : distinct) {
            for (std::size_t j = 0; j < n_items; ++j) {
                in.relay.at(u, j) += in.X_masked.at(i, j) / c;
            }
        }

        // tail of the training sequence plays the "will interact" role
        std::size_t n_target = static_cast<std::size_t>(
            std::ceil(cfg.target_frac * static_cast<double>(seq.size())));
        n_target = std::min(n_target, seq.size());
        std::set<std::size_t> targets, history;
        for (std::size_t j = 0; j < seq.size(); ++j) {
            (j + n_target >= seq.size() ? targets : history).insert(seq[j].item);
        }
        for (std::size_t i : history) in.w_pos.at(u, i) = cfg.beta1;
        for (std::size_t i : targets) {
            in.w_pos.at(u, i) = cfg.beta2;  // target weight wins on repeats
            any_target = true;
        }
        if (!cfg.positives_only_loss) {
            for (std::size_t i = 0; i < n_items; ++i) {
                if (!distinct.count(i)) in.neg_mask.at(u, i) = 1.0;
            }
        }

        std::vector<std::size_t> items;
        std::vector<double> times;
        std::vector<int> pols;
        std::size_t start = 0;
        if (cfg.max_seq_len > 0 && seq.size() > cfg.max_seq_len) {
            start = seq.size() - cfg.max_seq_len;
        }
        for (std::size_t j = start; j < seq.size(); ++j) {
            items.push_back(seq[j].item);
            times.push_back(seq[j].t_norm);
            pols.push_back(seq[j].polarity);
        }
        in.train_batches.push_back(make_sequence_batch(items, times, pols));
    }
    if (!any_target) {
        throw ConfigError("no target items selected; target_frac=" + std::to_string(cfg.target_frac));
    }
    return in;
}

ForwardOut model_forward(Tape& tape, const ModelParams& params, const RunConfig& cfg,
                         const StaticInputs& in, Rng* mci_rng) {
    ForwardOut out;
    std::size_t n_users = in.h_norm.rows;

    out.lambda = hgc_forward(tape, in.A_hat, params.enc.V, params.hgc, hgc_options(cfg));
    if (!cfg.strict_literal_hgc) {
        out.e_h1 = matmul(tape, make_constant(in.h_norm), out.lambda);
        out.e_h2 = matmul(tape, make_constant(in.relay), out.lambda);
    } else {
        std::vector<Tensor> h1_rows, h2_rows;
        for (std::size_t u = 0; u < n_users; ++u) {
            Tensor lam_u = hgc_forward_literal(tape, in.A_hat, params.enc.V, params.hgc,
                                               in.hyperedges[u], cfg.l2_layers);
            h1_rows.push_back(user_structural_rep(tape, lam_u, in.hyperedges[u]));
            h2_rows.push_back(feedback_aware_rep(tape, lam_u, in.hyperedges[u], in.X_masked));
        }
        out.e_h1 = stack_rows(tape, h1_rows);
        out.e_h2 = stack_rows(tape, h2_rows);
    }

    if (!cfg.no_seq) {
        SeqOptions sopts = seq_options(cfg);
        std::vector<Tensor> es_rows;
        es_rows.reserve(n_users);
        Tensor event_total, integral_total;
        for (std::size_t u = 0; u < n_users; ++u) {
            EncodedSequence enc = encode(tape, in.train_batches[u], params.enc, sopts);
            es_rows.push_back(enc.e_s);
            if (mci_rng && cfg.delta2 > 0.0) {
                LikelihoodTerms lt =
                    log_likelihood_user(tape, enc.H, in.train_batches[u], params.enc, cfg.n_mci,
                                        *mci_rng);
                event_total = event_total ? add(tape, event_total, lt.event) : lt.event;
                integral_total =
                    integral_total ? add(tape, integral_total, lt.integral) : lt.integral;
            }
        }
        out.e_s = stack_rows(tape, es_rows);
        if (event_total) {
            out.aux_nll = sub(tape, integral_total, event_total);
        }
    }

    out.r = score_users(tape, out.e_s, out.e_h1, out.e_h2, params.enc.V, params.W_dec,
                        params.b_dec, cfg.delta, !cfg.no_seq, !cfg.no_gra1, !cfg.no_gra2);
    return out;
}

void AdamOptimizer::step(const std::vector<Tensor>& params) {
    if (bound_.empty()) {
        bound_ = params;
        m_.resize(params.size());
        v_.resize(params.size());
        for (std::size_t i = 0; i < params.size(); ++i) {
            m_[i].assign(params[i]->numel(), 0.0);
            v_[i].assign(params[i]->numel(), 0.0);
        }
    }
    if (bound_.size() != params.size()) {
        throw DomainError("AdamOptimizer: parameter list changed between steps");
    }
    ++t_;
    double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
        Node* p = params[i].get();
        for (std::size_t j = 0; j < p->numel(); ++j) {
            double g = p->grad[j];
            m_[i][j] = beta1_ * m_[i][j] + (1.0 - beta1_) * g;
            v_[i][j] = beta2_ * v_[i][j] + (1.0 - beta2_) * g * g;
            double mhat = m_[i][j] / bc1;
            double vhat = v_[i][j] / bc2;
            p->val[j] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
        }
    }
}

void AdamOptimizer::zero_grad(const std::vector<Tensor>& params) {
    for (const Tensor& p : params) p->zero_grad();
}

namespace {

std::vector<std::vector<double>> snapshot_values(const ModelParams& p) {
    std::vector<std::vector<double>> out;
    for (const Tensor& t : p.all()) out.push_back(t->val);
    return out;
}

void restore_values(ModelParams& p, const std::vector<std::vector<double>>& snap) {
    auto all = p.all();
    for (std::size_t i = 0; i < all.size(); ++i) all[i]->val = snap[i];
}

struct ValRelevance {
    std::vector<std::vector<std::size_t>> relevant;  // per user, distinct
};

ValRelevance val_relevance(const DatasetBundle& bundle, const RunConfig& cfg) {
    ValRelevance out;
    const FeedbackGraph& val = bundle.split.validation;
    out.relevant.resize(val.n_users);
    for (std::size_t u = 0; u < val.n_users; ++u) {
        std::set<std::size_t> rel;
        for (const auto& it : val.sequences[u]) {
            if (cfg.positive_only_relevance && it.polarity < 0) continue;
            rel.insert(it.item);
        }
        out.relevant[u].assign(rel.begin(), rel.end());
    }
    return out;
}

}  // namespace

FitResult fit(const DatasetBundle& bundle, const RunConfig& cfg) {
    std::size_t n_items = bundle.full.n_items;
    Rng init_rng(cfg.seed);
    ModelParams params = init_model_params(n_items, cfg, init_rng);
    StaticInputs in = build_static_inputs(bundle, cfg);
    ValRelevance vr = val_relevance(bundle, cfg);

    AdamOptimizer opt(cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps);
    auto plist = params.all();
    Rng mci_rng(cfg.seed ^ 0x9e3779b97f4a7c15ull);

    FitResult res;
    double best_metric = -1.0;
    std::vector<std::vector<double>> best_snap = snapshot_values(params);
    std::size_t best_epoch = 0;
    double last_r20 = 0.0, last_n20 = 0.0;

    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        Tape tape;
        Tensor l_main, loss;
        ForwardOut fwd;
        try {
            fwd = model_forward(tape, params, cfg, in, &mci_rng);
            l_main = loss_main(tape, fwd.r, in.w_pos, in.neg_mask);
            loss = loss_final(tape, l_main, fwd.aux_nll, cfg.no_seq ? 0.0 : cfg.delta2);
        } catch (const NumericError&) {
            res.diverged = true;
            break;
        } catch (const DomainError&) {
            // blown-up parameters can push derived quantities (softplus
            // softness, softmax rows) out of their domains; same verdict
            if (epoch == 1) throw;
            res.diverged = true;
            break;
        }

        double lv = scalar_value(loss);
        double lm = scalar_value(l_main);
        double la = fwd.aux_nll ? scalar_value(fwd.aux_nll) : 0.0;
        if (!std::isfinite(lv)) {
            res.diverged = true;
            break;
        }

        if (epoch % cfg.eval_every == 0 || epoch == cfg.epochs) {
            double r20 = 0.0, n20 = 0.0;
            std::size_t counted = 0;
            for (std::size_t u = 0; u < in.h_norm.rows; ++u) {
                if (vr.relevant[u].empty()) continue;
                auto ranked = rank_items(
                    fwd.r->val.data() + u * n_items, n_items,
                    cfg.exclude_train_items ? in.train_items[u] : std::vector<std::size_t>{});
                r20 += recall_at_k(ranked, vr.relevant[u], 20);
                n20 += ndcg_at_k(ranked, vr.relevant[u], 20);
                ++counted;
            }
            if (counted > 0) {
                r20 /= static_cast<double>(counted);
                n20 /= static_cast<double>(counted);
            }
            last_r20 = r20;
            last_n20 = n20;
            // metrics computed before the update, so the snapshot is the
            // parameter state that produced them
            // ties prefer the later epoch so flat validation curves still
            // return the most-trained parameters
            if (n20 >= best_metric) {
                best_metric = n20;
                best_snap = snapshot_values(params);
                best_epoch = epoch;
            }
        }
        res.log.push_back({epoch, lm, la, last_r20, last_n20});

        AdamOptimizer::zero_grad(plist);
        tape.backward(loss);
        opt.step(plist);
    }

    res.best.cfg = cfg;
    res.best.fingerprint = bundle.fingerprint;
    res.best.n_items = n_items;
    res.best.epoch = best_epoch;
    Rng dummy(cfg.seed);
    res.best.params = init_model_params(n_items, cfg, dummy);
    restore_values(res.best.params, best_snap);
    return res;
}

std::string format_epoch_log(const std::vector<EpochLog>& log) {
    std::ostringstream os;
    os.precision(17);
    for (const auto& e : log) {
        os << e.epoch << "\t" << e.l_main << "\t" << e.l_auxi << "\t" << e.val_recall20 << "\t"
           << e.val_ndcg20 << "\n";
    }
    return os.str();
}

void save_checkpoint(const Model& model, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open checkpoint for writing: " + path);
    f.write("NFARECM1", 8);
    char version = 1;
    f.write(&version, 1);
    auto write_str = [&](const std::string& s) {
        std::uint64_t n = s.size();
        f.write(reinterpret_cast<const char*>(&n), 8);
        f.write(s.data(), static_cast<std::streamsize>(s.size()));
    };
    write_str(serialize_config(model.cfg));
    write_str(model.fingerprint);
    std::uint64_t epoch = model.epoch, n_items = model.n_items;
    f.write(reinterpret_cast<const char*>(&epoch), 8);
    f.write(reinterpret_cast<const char*>(&n_items), 8);
    auto named = model.params.named();
    std::uint32_t count = static_cast<std::uint32_t>(named.size());
    f.write(reinterpret_cast<const char*>(&count), 4);
    for (const auto& [name, t] : named) {
        std::uint32_t nl = static_cast<std::uint32_t>(name.size());
        f.write(reinterpret_cast<const char*>(&nl), 4);
        f.write(name.data(), nl);
        std::uint64_t r = t->rows(), c = t->cols();
        f.write(reinterpret_cast<const char*>(&r), 8);
        f.write(reinterpret_cast<const char*>(&c), 8);
        f.write(reinterpret_cast<const char*>(t->val.data()),
                static_cast<std::streamsize>(t->val.size() * sizeof(double)));
    }
    if (!f) throw IoError("failed writing checkpoint: " + path);
}

Model load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open checkpoint: " + path);
    char magic[8];
    f.read(magic, 8);
    if (!f || std::memcmp(magic, "NFARECM1", 8) != 0) {
        throw IoError("bad checkpoint magic in " + path);
    }
    char version = 0;
    f.read(&version, 1);
    if (version != 1) throw IoError("unsupported checkpoint version");
    auto read_str = [&]() {
        std::uint64_t n = 0;
        f.read(reinterpret_cast<char*>(&n), 8);
        std::string s(n, '\0');
        f.read(s.data(), static_cast<std::streamsize>(n));
        return s;
    };
    Model m;
    m.cfg = parse_config(read_str());
    m.fingerprint = read_str();
    std::uint64_t epoch = 0, n_items = 0;
    f.read(reinterpret_cast<char*>(&epoch), 8);
    f.read(reinterpret_cast<char*>(&n_items), 8);
    m.epoch = epoch;
    m.n_items = n_items;
    Rng dummy(m.cfg.seed);
    m.params = init_model_params(n_items, m.cfg, dummy);
    auto named = m.params.named();
    std::uint32_t count = 0;
    f.read(reinterpret_cast<char*>(&count), 4);
    if (count != named.size()) {
        throw IoError("checkpoint parameter count mismatch in " + path);
    }
    for (auto& [name, t] : named) {
        std::uint32_t nl = 0;
        f.read(reinterpret_cast<char*>(&nl), 4);
        std::string got(nl, '\0');
        f.read(got.data(), nl);
        if (got != name) {
            throw IoError("checkpoint parameter order mismatch: expected '" + name + "', found '" +
                          got + "'");
        }
        std::uint64_t r = 0, c = 0;
        f.read(reinterpret_cast<char*>(&r), 8);
        f.read(reinterpret_cast<char*>(&c), 8);
        if (r != t->rows() || c != t->cols()) {
            throw IoError("checkpoint parameter shape mismatch for '" + name + "'");
        }
        f.read(reinterpret_cast<char*>(t->val.data()),
               static_cast<std::streamsize>(t->val.size() * sizeof(double)));
    }
    if (!f) throw IoError("truncated checkpoint: " + path);
    return m;
}

}  // namespace nfarec
