#pragma once

#include <string>
#include <vector>

#include "core/data.hpp"
#include "core/model.hpp"

namespace nfarec {

// |top-k of ranked intersect relevant| / |relevant|
double recall_at_k(const std::vector<std::size_t>& ranked, const std::vector<std::size_t>& relevant,
                   std::size_t k);

// binary-relevance DCG with 1/log2(p+1) gains over the ideal DCG
double ndcg_at_k(const std::vector<std::size_t>& ranked, const std::vector<std::size_t>& relevant,
                 std::size_t k);

// descending score, equal scores break by ascending item index; excluded
// items are dropped from the ranking entirely
std::vector<std::size_t> rank_items(const double* scores, std::size_t n_items,
                                    const std::vector<std::size_t>& excluded);

struct MetricReport {
    std::vector<std::size_t> ks = {5, 10, 20};
    std::vector<double> recall;  // parallel to ks
    std::vector<double> ndcg;
    double polarity_accuracy = 0.0;
    std::size_t polarity_events = 0;
    std::size_t users_evaluated = 0;
    std::size_t users_skipped = 0;  // no relevant items in the split
    bool excluded_train_items = true;

    std::string table() const;     // human-readable block
    std::string machine() const;   // key<TAB>value lines
};

struct EvalPolicy {
    bool exclude_train_items = true;
    bool positive_only_relevance = false;
};

MetricReport evaluate(const Model& model, const DatasetBundle& bundle, const std::string& split,
                      const EvalPolicy& policy);

struct AblationRow {
    std::string label;
    double ndcg20 = 0.0;
    double recall20 = 0.0;
    double ndcg10 = 0.0;
    double recall10 = 0.0;
};

struct AblationResult {
    std::vector<AblationRow> component_rows;  // full, w/o Seq, w/o Gra1, w/o Gra2
    std::vector<AblationRow> order_rows;      // L = 1..4
    std::string table() const;
};

// Trains and evaluates the component ablations and the feedback-order sweep
// on the test split.
AblationResult ablation_suite(const DatasetBundle& bundle, const RunConfig& base);

// writes user_sequential.tsv, user_structural.tsv, item_representations.tsv
void export_representations(const Model& model, const DatasetBundle& bundle,
                            const std::string& out_dir);

struct Prediction {
    std::string user_id;
    std::vector<std::pair<std::string, double>> items;  // id, score
};

struct PredictResult {
    std::vector<Prediction> predictions;
    std::vector<std::string> unknown_users;
};

PredictResult predict_top_k(const Model& model, const DatasetBundle& bundle,
                            const std::vector<std::string>& user_ids, std::size_t k,
                            const EvalPolicy& policy);

}  // namespace nfarec
