#include "core/eval.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

namespace nfarec {

double recall_at_k(const std::vector<std::size_t>& ranked, const std::vector<std::size_t>& relevant,
                   std::size_t k) {
    if (relevant.empty()) return 0.0;
    std::set<std::size_t> rel(relevant.begin(), relevant.end());
    std::size_t hits = 0;
    for (std::size_t p = 0; p < ranked.size() && p < k; ++p) {
        if (rel.count(ranked[p])) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(rel.size());
}

double ndcg_at_k(const std::vector<std::size_t>& ranked, const std::vector<std::size_t>& relevant,
                 std::size_t k) {
    if (relevant.empty()) return 0.0;
    std::set<std::size_t> rel(relevant.begin(), relevant.end());
    double dcg = 0.0;
    for (std::size_t p = 0; p < ranked.size() && p < k; ++p) {
        if (rel.count(ranked[p])) dcg += 1.0 / std::log2(static_cast<double>(p) + 2.0);
    }
    double idcg = 0.0;
    std::size_t ideal = std::min(k, rel.size());
    for (std::size_t p = 0; p < ideal; ++p) idcg += 1.0 / std::log2(static_cast<double>(p) + 2.0);
    return idcg > 0.0 ? dcg / idcg : 0.0;
}

std::vector<std::size_t> rank_items(const double* scores, std::size_t n_items,
                                    const std::vector<std::size_t>& excluded) {
    std::vector<char> drop(n_items, 0);
    for (std::size_t i : excluded) {
        if (i >= n_items) throw IndexError("rank_items: excluded item out of range");
        drop[i] = 1;
    }
    std::vector<std::size_t> idx;
    idx.reserve(n_items);
    for (std::size_t i = 0; i < n_items; ++i) {
        if (!drop[i]) idx.push_back(i);
    }
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        if (scores[a] != scores[b]) return scores[a] > scores[b];
        return a < b;
    });
    return idx;
}

namespace {

const FeedbackGraph& pick_split(const DatasetBundle& bundle, const std::string& split) {
    if (split == "validation" || split == "val") return bundle.split.validation;
    if (split == "test") return bundle.split.test;
    if (split == "train") return bundle.split.train;
    throw ConfigError("unknown evaluation split: '" + split + "'");
}

void check_provenance(const Model& model, const DatasetBundle& bundle) {
    if (model.fingerprint != bundle.fingerprint) {
        throw ProvenanceError("model was trained on a different dataset (fingerprint " +
                              model.fingerprint + " vs " + bundle.fingerprint + ")");
    }
}

std::vector<std::size_t> relevant_items(const FeedbackGraph& g, std::size_t u,
                                        bool positive_only) {
    std::set<std::size_t> rel;
    for (const auto& it : g.sequences[u]) {
        if (positive_only && it.polarity < 0) continue;
        rel.insert(it.item);
    }
    return {rel.begin(), rel.end()};
}

}  // namespace

std::string MetricReport::table() const {
    std::ostringstream os;
    os.precision(6);
    os << std::fixed;
    os << "metric";
    for (std::size_t k : ks) os << "\t@" << k;
    os << "\n";
    os << "Recall";
    for (double v : recall) os << "\t" << v;
    os << "\nNDCG";
    for (double v : ndcg) os << "\t" << v;
    os << "\n";
    os << "polarity accuracy\t" << polarity_accuracy << " (" << polarity_events << " events)\n";
    os << "users evaluated\t" << users_evaluated << " (skipped " << users_skipped << ")\n";
    return os.str();
}

std::string MetricReport::machine() const {
    std::ostringstream os;
    os.precision(17);
    for (std::size_t i = 0; i < ks.size(); ++i) {
        os << "recall@" << ks[i] << "\t" << recall[i] << "\n";
        os << "ndcg@" << ks[i] << "\t" << ndcg[i] << "\n";
    }
    os << "polarity_accuracy\t" << polarity_accuracy << "\n";
    os << "polarity_events\t" << polarity_events << "\n";
    os << "users_evaluated\t" << users_evaluated << "\n";
    os << "users_skipped\t" << users_skipped << "\n";
    return os.str();
}

MetricReport evaluate(const Model& model, const DatasetBundle& bundle, const std::string& split,
                      const EvalPolicy& policy) {
    check_provenance(model, bundle);
    const FeedbackGraph& eval_g = pick_split(bundle, split);
    StaticInputs in = build_static_inputs(bundle, model.cfg);
    Tape tape;
    ForwardOut fwd = model_forward(tape, model.params, model.cfg, in, nullptr);

    MetricReport rep;
    rep.excluded_train_items = policy.exclude_train_items;
    rep.recall.assign(rep.ks.size(), 0.0);
    rep.ndcg.assign(rep.ks.size(), 0.0);
    std::size_t n_items = bundle.full.n_items;

    for (std::size_t u = 0; u < eval_g.n_users; ++u) {
        auto rel = relevant_items(eval_g, u, policy.positive_only_relevance);
        if (rel.empty()) {
            ++rep.users_skipped;
            continue;
        }
        auto ranked = rank_items(fwd.r->val.data() + u * n_items, n_items,
                                 policy.exclude_train_items ? in.train_items[u]
                                                            : std::vector<std::size_t>{});
        for (std::size_t i = 0; i < rep.ks.size(); ++i) {
            rep.recall[i] += recall_at_k(ranked, rel, rep.ks[i]);
            rep.ndcg[i] += ndcg_at_k(ranked, rel, rep.ks[i]);
        }
        ++rep.users_evaluated;
    }
    if (rep.users_evaluated > 0) {
        for (std::size_t i = 0; i < rep.ks.size(); ++i) {
            rep.recall[i] /= static_cast<double>(rep.users_evaluated);
            rep.ndcg[i] /= static_cast<double>(rep.users_evaluated);
        }
    }

    // next-polarity accuracy over the split's events, conditioning each
    // prediction on the causally encoded history of the full sequence
    if (!model.cfg.no_seq) {
        SeqOptions sopts = seq_options(model.cfg);
        std::size_t correct = 0, total = 0;
        for (std::size_t u = 0; u < eval_g.n_users; ++u) {
            std::size_t n_tr = bundle.split.train.sequences[u].size();
            std::size_t n_v = bundle.split.validation.sequences[u].size();
            std::size_t lo, hi;
            if (&eval_g == &bundle.split.validation) {
                lo = n_tr;
                hi = n_tr + n_v;
            } else if (&eval_g == &bundle.split.test) {
                lo = n_tr + n_v;
                hi = bundle.full.sequences[u].size();
            } else {
                lo = 1;
                hi = n_tr;
            }
            if (hi <= lo) continue;
            const auto& full_seq = bundle.full.sequences[u];
            std::vector<std::size_t> items;
            std::vector<double> times;
            std::vector<int> pols;
            for (const auto& it : full_seq) {
                items.push_back(it.item);
                times.push_back(it.t_norm);
                pols.push_back(it.polarity);
            }
            SequenceBatch batch = make_sequence_batch(items, times, pols);
            Tape local;
            EncodedSequence enc = encode(local, batch, model.params.enc, sopts);
            std::size_t d_m = enc.H->cols();
            for (std::size_t j = std::max<std::size_t>(lo, 1); j < hi; ++j) {
                Mat h(1, d_m);
                for (std::size_t c = 0; c < d_m; ++c) h.at(0, c) = enc.H->val[(j - 1) * d_m + c];
                int pred = predict_next_polarity(make_constant(h), times[j], times[j - 1],
                                                 model.params.enc);
                if (pred == pols[j]) ++correct;
                ++total;
            }
        }
        rep.polarity_events = total;
        rep.polarity_accuracy =
            total > 0 ? static_cast<double>(correct) / static_cast<double>(total) : 0.0;
    }
    return rep;
}

std::string AblationResult::table() const {
    std::ostringstream os;
    os.precision(6);
    os << std::fixed;
    os << "variant\tRecall@10\tNDCG@10\tRecall@20\tNDCG@20\n";
    for (const auto& r : component_rows) {
        os << r.label << "\t" << r.recall10 << "\t" << r.ndcg10 << "\t" << r.recall20 << "\t"
           << r.ndcg20 << "\n";
    }
    os << "\nfeedback order\tRecall@10\tNDCG@10\tRecall@20\tNDCG@20\n";
    for (const auto& r : order_rows) {
        os << r.label << "\t" << r.recall10 << "\t" << r.ndcg10 << "\t" << r.recall20 << "\t"
           << r.ndcg20 << "\n";
    }
    return os.str();
}

AblationResult ablation_suite(const DatasetBundle& bundle, const RunConfig& base) {
    AblationResult out;
    auto run = [&](const std::string& label, const RunConfig& cfg) {
        FitResult fr = fit(bundle, cfg);
        EvalPolicy policy;
        policy.exclude_train_items = cfg.exclude_train_items;
        policy.positive_only_relevance = cfg.positive_only_relevance;
        MetricReport rep = evaluate(fr.best, bundle, "test", policy);
        AblationRow row;
        row.label = label;
        for (std::size_t i = 0; i < rep.ks.size(); ++i) {
            if (rep.ks[i] == 10) {
                row.recall10 = rep.recall[i];
                row.ndcg10 = rep.ndcg[i];
            } else if (rep.ks[i] == 20) {
                row.recall20 = rep.recall[i];
                row.ndcg20 = rep.ndcg[i];
            }
        }
        return row;
    };

    out.component_rows.push_back(run("full", base));
    {
        RunConfig c = base;
        c.no_seq = true;
        out.component_rows.push_back(run("w/o Seq", c));
    }
    {
        RunConfig c = base;
        c.no_gra1 = true;
        out.component_rows.push_back(run("w/o Gra1", c));
    }
    {
        RunConfig c = base;
        c.no_gra2 = true;
        out.component_rows.push_back(run("w/o Gra2", c));
    }
    for (std::size_t order = 1; order <= 4; ++order) {
        RunConfig c = base;
        c.order = order;
        out.order_rows.push_back(run("L=" + std::to_string(order), c));
    }
    return out;
}

namespace {

void write_rows(const std::string& path, const std::vector<std::string>& ids, const Tensor& t) {
    std::ofstream f(path);
    if (!f) throw IoError("cannot open " + path + " for writing");
    f.precision(17);
    std::size_t cols = t->cols();
    for (std::size_t r = 0; r < t->rows(); ++r) {
        f << ids[r];
        for (std::size_t c = 0; c < cols; ++c) f << "\t" << t->val[r * cols + c];
        f << "\n";
    }
    if (!f) throw IoError("failed writing " + path);
}

}  // namespace

void export_representations(const Model& model, const DatasetBundle& bundle,
                            const std::string& out_dir) {
    check_provenance(model, bundle);
    std::filesystem::create_directories(out_dir);
    StaticInputs in = build_static_inputs(bundle, model.cfg);
    Tape tape;
    ForwardOut fwd = model_forward(tape, model.params, model.cfg, in, nullptr);

    if (fwd.e_s) write_rows(out_dir + "/user_sequential.tsv", bundle.full.user_ids, fwd.e_s);
    {
        // structural representation: pooled rows, then the feedback-aware rows
        std::ofstream f(out_dir + "/user_structural.tsv");
        if (!f) throw IoError("cannot open " + out_dir + "/user_structural.tsv for writing");
        f.precision(17);
        std::size_t cols = fwd.e_h1->cols();
        for (std::size_t u = 0; u < fwd.e_h1->rows(); ++u) {
            f << bundle.full.user_ids[u];
            for (std::size_t c = 0; c < cols; ++c) f << "\t" << fwd.e_h1->val[u * cols + c];
            for (std::size_t c = 0; c < cols; ++c) f << "\t" << fwd.e_h2->val[u * cols + c];
            f << "\n";
        }
        if (!f) throw IoError("failed writing " + out_dir + "/user_structural.tsv");
    }
    write_rows(out_dir + "/item_representations.tsv", bundle.full.item_ids, fwd.lambda);
}

PredictResult predict_top_k(const Model& model, const DatasetBundle& bundle,
                            const std::vector<std::string>& user_ids, std::size_t k,
                            const EvalPolicy& policy) {
    check_provenance(model, bundle);
    StaticInputs in = build_static_inputs(bundle, model.cfg);
    Tape tape;
    ForwardOut fwd = model_forward(tape, model.params, model.cfg, in, nullptr);
    std::size_t n_items = bundle.full.n_items;

    PredictResult out;
    for (const std::string& uid : user_ids) {
        auto it = bundle.full.user_index.find(uid);
        if (it == bundle.full.user_index.end()) {
            out.unknown_users.push_back(uid);
            continue;
        }
        std::size_t u = it->second;
        auto ranked = rank_items(fwd.r->val.data() + u * n_items, n_items,
                                 policy.exclude_train_items ? in.train_items[u]
                                                            : std::vector<std::size_t>{});
        Prediction p;
        p.user_id = uid;
        for (std::size_t pos = 0; pos < ranked.size() && pos < k; ++pos) {
            p.items.emplace_back(bundle.full.item_ids[ranked[pos]],
                                 fwd.r->val[u * n_items + ranked[pos]]);
        }
        out.predictions.push_back(std::move(p));
    }
    return out;
}

}  // namespace nfarec
