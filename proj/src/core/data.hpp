#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "core/common.hpp"

namespace nfarec {

struct InteractionRecord {
    std::string user_id;
    std::string item_id;
    double rating = 0.0;
    std::int64_t timestamp = 0;
};

struct LoadSchema {
    // column positions within each delimited line
    std::size_t user_col = 0;
    std::size_t item_col = 1;
    std::size_t rating_col = 2;
    std::size_t timestamp_col = 3;
    std::string delimiter = ",";  // "," "::" or "\t"
    double rating_min = 1.0;
    double rating_max = 5.0;
    bool lenient = false;  // skip malformed rows instead of failing
};

struct LoadReport {
    std::size_t parsed = 0;
    std::size_t skipped = 0;
    std::vector<std::string> skip_messages;
};

std::vector<InteractionRecord> load_interactions(const std::string& path, const LoadSchema& schema,
                                                 LoadReport* report = nullptr);

// +1 iff rating >= threshold ("below threshold" is negative feedback)
int polarity_of(double rating, double threshold);

// Iteratively removes users and items with fewer than n interactions until a
// fixed point; removing a user can push an item below n and vice versa.
std::vector<InteractionRecord> filter_min_interactions(std::vector<InteractionRecord> records,
                                                       std::size_t n);

struct Interaction {
    std::size_t item = 0;
    std::int64_t timestamp = 0;
    int polarity = 0;    // +1 or -1
    double t_norm = 0.0; // per-user timestamp rescaled into [1, 2]
};

struct FeedbackGraph {
    std::size_t n_users = 0;
    std::size_t n_items = 0;
    std::unordered_map<std::string, std::size_t> user_index;
    std::unordered_map<std::string, std::size_t> item_index;
    std::vector<std::string> user_ids;
    std::vector<std::string> item_ids;
    // per-user chronological sequence; ties keep input order
    std::vector<std::vector<Interaction>> sequences;

    // signed feedback value in {+1, -1, 0}; the most recent interaction with
    // the item decides the sign
    int zeta(std::size_t user, std::size_t item) const;
    Mat zeta_matrix() const;  // dense |U| x |I|
    std::size_t n_interactions() const;
};

FeedbackGraph build_feedback_graph(const std::vector<InteractionRecord>& records,
                                   double rating_threshold);

struct SplitReport {
    std::vector<std::size_t> train_only_users;  // fewer than 3 interactions
    std::size_t n_train = 0, n_val = 0, n_test = 0;
};

struct SplitDataset {
    FeedbackGraph train;
    FeedbackGraph validation;
    FeedbackGraph test;
    double ratios[3] = {0.7, 0.1, 0.2};
    SplitReport report;
};

// Per-user chronological split: first floor(r_train*len) events to train,
// next floor(r_val*len) (at least 1 when len >= 3) to validation, rest to test.
SplitDataset chronological_split(const FeedbackGraph& graph, double r_train = 0.7,
                                 double r_val = 0.1, double r_test = 0.2);

// Item-item 0/1 co-interaction adjacency. a_ii = 1 for items with at least one
// interaction unless self_loops is false.
Mat build_item_adjacency(const FeedbackGraph& train, bool self_loops = true);

// D^(-1/2) A D^(-1/2) with the 0-degree convention D^(-1/2) = 0.
Mat normalize_adjacency(const Mat& A);

struct CorrelationSet {
    Mat A;
    Mat A_hat;
    std::vector<Mat> X_orders;  // X^(0) .. X^(L-1)
    Mat X_hat;                  // sum of orders
    Mat X_masked;               // negative entries zeroed
    std::size_t order_count = 0;
};

// X^(0)_{ij} = sum_u zeta_{u,i} zeta_{u,j} / |U|; X^(l+1) = (X^(l))^2 / |I|.
CorrelationSet build_feedback_correlation(const FeedbackGraph& train, std::size_t orders,
                                          bool self_loops = true);

// -- dataset bundle on disk -------------------------------------------------

struct DatasetBundle {
    FeedbackGraph full;  // all interactions with split tags implied by dataset
    SplitDataset split;
    CorrelationSet corr;
    std::string fingerprint;
    std::size_t order_count = 0;
    double rating_threshold = 4.0;
};

struct PrepareOptions {
    LoadSchema schema;
    double rating_threshold = 4.0;
    std::size_t min_interactions = 1;
    double split_train = 0.7, split_val = 0.1, split_test = 0.2;
    std::size_t orders = 2;
    bool self_loops = true;
};

struct PrepareStats {
    std::size_t n_users = 0, n_items = 0, n_interactions = 0;
    double pos_percent = 0.0, neg_percent = 0.0;
    double avg_interactions = 0.0;
    LoadReport load_report;
    std::string text() const;  // Table-style statistics block
};

DatasetBundle prepare_dataset(const std::string& raw_path, const PrepareOptions& opts,
                              PrepareStats* stats = nullptr);

void save_bundle(const DatasetBundle& bundle, const std::string& dir);
DatasetBundle load_bundle(const std::string& dir);

std::string dataset_fingerprint(const FeedbackGraph& g);

// row-major binary block with magic header "NFARECX1"
void write_correlation_block(const std::string& path, const Mat& X_hat, const Mat& X_masked,
                             std::size_t order_count);
void read_correlation_block(const std::string& path, Mat& X_hat, Mat& X_masked,
                            std::size_t& order_count);

}  // namespace nfarec
